// Acceptance suite: ten checks covering the bandwidth and FIFO anchors, the
// memory-model calibration, planner fidelity against an independent
// reference, deadlock behavior, analytic bounds, burst-length shape, the
// hybrid uplift, and manifest replay.  Prints one PASS/FAIL line per check
// with its tolerance pinned in code; exits nonzero if any fail.
//
// argv[1]: path to the hbmflow CLI binary (used by the replay check).

#include "hbmflow/batch.hpp"
#include "hbmflow/bounds.hpp"
#include "hbmflow/hbm.hpp"
#include "hbmflow/network.hpp"
#include "hbmflow/planner.hpp"
#include "hbmflow/rng.hpp"
#include "hbmflow/sim.hpp"

#include "reference_alg.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

using namespace hbmflow;

namespace {

constexpr std::int64_t kDeviceBits = 140LL * 1000 * 1000;
constexpr std::int64_t kBigBudget = 100LL * 1000 * 1000 * 1000;

struct Result {
    std::string name;
    bool ok = false;
    std::string detail;
    double secs = 0.0;
};

// every simulation run in this binary, for the global sim-vs-roofline sweep
struct TrackedRun {
    std::string tag;
    double throughput = 0.0;
    double roofline = 0.0;
};
std::vector<TrackedRun> g_runs;

SimReport run_tracked(const std::string& tag, const NetworkModel& net,
                      const OffloadPlan& plan, const HbmConfig& hbm, SimConfig cfg) {
    SimReport r = simulate(net, plan, hbm, cfg);
    g_runs.push_back({tag, r.throughput_im_s, r.roofline_im_s});
    return r;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

NetworkModel hybrid_net(const std::string& name) {
    NetworkModel net = builtin_network(name);
    apply_parallelism_preset(net, "hybrid");
    return net;
}

NetworkModel all_hbm_net(const std::string& name) {
    NetworkModel net = builtin_network(name);
    apply_parallelism_preset(net, "all-hbm");
    return net;
}

SimConfig sim_cfg(int images, std::uint64_t seed) {
    SimConfig cfg;
    cfg.n_images = images;
    cfg.seed = seed;
    return cfg;
}

// ---- 1: effective bandwidth ---------------------------------------------------

Result c1_effective_bandwidth() {
    HbmConfig hbm;
    double bw = effective_bandwidth_bytes_per_s(hbm, 240, 300e6);
    Result r{"effective bandwidth", bw == 279e9,
             fmt("31 channels x 240 bits x 300 MHz = %.0f B/s (want exactly 279e9)", bw)};
    return r;
}

// ---- 2: last-stage FIFO sizing ------------------------------------------------

Result c2_fifo_sizing() {
    PlannerConstants consts;
    bool ok = true;
    std::int64_t got = 0;
    for (int bl : {8, 16, 32}) {
        FifoSpec f = size_fifos(bl, 300e6, 1214.0, consts);
        got = f.last_stage_words;
        ok = ok && f.last_stage_words == 512;
    }
    return {"last-stage fifo sizing", ok,
            fmt("1214 ns at 300 MHz -> %.0f words per chain (want exactly 512)", (double)got)};
}

// ---- 3: memory model calibration ----------------------------------------------

Result c3_calibration() {
    HbmConfig hbm;
    CharacterizeResult r8 = characterize(hbm, 10000, 8, AccessPattern::random, 1);
    CharacterizeResult r32 = characterize(hbm, 10000, 32, AccessPattern::random, 1);
    bool ok = true;
    ok = ok && std::abs(r8.read.efficiency - 0.83) <= 0.02;
    ok = ok && std::abs(r32.read.efficiency - 0.93) <= 0.02;
    ok = ok && std::abs(r8.write.efficiency - (r8.read.efficiency - 0.15)) <= 0.03;
    ok = ok && std::abs(r32.write.efficiency - (r32.read.efficiency - 0.15)) <= 0.03;
    ok = ok && std::abs(r32.read.latency_avg_ns - 400.0) <= 0.05 * 400.0;
    return {"memory model calibration", ok,
            fmt("read eff %.3f@8 %.3f@32 (want 0.83/0.93 +-0.02), mean lat %.1f ns@32 "
                "(want 400 +-5%%)",
                r8.read.efficiency, r32.read.efficiency, r32.read.latency_avg_ns)};
}

// ---- 4: planner fidelity -------------------------------------------------------

NetworkModel random_net(Rng& rng) {
    int n = (int)rng.next_in(1, 10);
    NetworkModel m;
    m.name = "fuzz";
    const int kchoices[4] = {1, 3, 5, 7};
    for (int i = 0; i < n; ++i) {
        LayerSpec l;
        l.id = i;
        int k = kchoices[rng.next_in(0, 3)];
        l.kind = k == 1 ? LayerKind::pointwise_conv : LayerKind::standard_conv;
        l.kernel_h = l.kernel_w = k;
        l.in_channels = (int)rng.next_in(1, 512);
        l.out_channels = (int)rng.next_in(1, 512);
        l.stride = 1;
        l.out_width = (int)rng.next_in(std::max(1, k), 64);
        l.out_height = l.out_width;
        l.in_width = l.out_width;
        l.in_height = l.out_height;
        l.par_in = (int)rng.next_in(1, std::min(4, l.in_channels));
        l.par_out = (int)rng.next_in(1, std::min(4, l.out_channels));
        m.layers.push_back(l);
        if (i) m.edges.push_back({i - 1, i});
    }
    for (int i = 1; i < n; ++i) {
        m.layers[i].in_width = m.layers[i].out_width = m.layers[i - 1].out_width;
        m.layers[i].in_height = m.layers[i].out_height = m.layers[i - 1].out_height;
        m.layers[i].kernel_h = std::min(m.layers[i].kernel_h, m.layers[i].in_height);
        m.layers[i].kernel_w = std::min(m.layers[i].kernel_w, m.layers[i].in_width);
    }
    validate_network(m);
    return m;
}

Result c4_planner_fidelity() {
    HbmConfig hbm;
    PlannerConstants consts;
    Rng rng{4242};
    int mismatches = 0, violations = 0;
    const int trials = 1000;
    for (int t = 0; t < trials; ++t) {
        NetworkModel m = random_net(rng);
        OffloadPlan plan = plan_offload(m, hbm, kBigBudget);

        std::vector<refalg::LayerShape> ref;
        for (auto& l : m.layers)
            ref.push_back({l.kernel_h, l.kernel_w, l.in_channels, l.out_channels,
                           l.out_width, l.par_in, l.par_out});
        std::vector<int> want = refalg::reference_offload(ref, (int)hbm.usable_pcs.size());
        std::vector<int> got;
        for (int i = 0; i < (int)plan.placements.size(); ++i)
            if (!plan.placements[i].onchip) got.push_back(i);
        if (got != want) ++mismatches;

        std::map<int, int> load;
        for (auto& p : plan.placements)
            for (auto& s : p.slices) load[s.pc] += s.chains;
        for (auto& [pc, chains] : load)
            if (chains > consts.chains_per_pc) ++violations;
        if (plan.hbm_bw_words_used >
            (std::int64_t)consts.chains_per_pc * (std::int64_t)hbm.usable_pcs.size())
            ++violations;
    }
    return {"offload planner fidelity", mismatches == 0 && violations == 0,
            fmt("%.0f random nets: %.0f reference mismatches, %.0f budget violations "
                "(want 0/0)",
                (double)trials, (double)mismatches, (double)violations)};
}

// ---- 5: shared-channel deadlock and credits ------------------------------------

Result c5_deadlock() {
    SimReport rv = run_shared_channel_scenario(FlowMode::ready_valid, true, 1);
    g_runs.push_back({"scenario rv", rv.throughput_im_s, rv.roofline_im_s});
    bool rv_ok = rv.deadlock.has_value() && rv.deadlock->head_of_line_owner >= 0 &&
                 !rv.deadlock->full_fifos.empty();

    SimReport cr = run_shared_channel_scenario(FlowMode::credit, true, 1);
    g_runs.push_back({"scenario credit", cr.throughput_im_s, cr.roofline_im_s});
    bool cr_ok = !cr.deadlock.has_value() && cr.images_completed == 2;

    int deadlocks = 0, incomplete = 0;
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
        Rng rng{seed, 0xacceu};
        const int n_layers = (int)rng.next_in(2, 8);
        std::ostringstream src;
        src << "net rnd" << seed << "\n";
        int ci = 10 * (int)rng.next_in(1, 3);
        for (int i = 0; i < n_layers; ++i) {
            const int k = 1 + 2 * (int)rng.next_in(0, 3);
            const int co = 10 * (int)rng.next_in(1, 3);
            src << "layer " << i << " kind=conv kh=" << k << " kw=" << k << " ci=" << ci
                << " co=" << co << " stride=1 in=12x12 out=12x12 pi=1 po=1\n";
            ci = co;
        }
        NetworkModel net = parse_network_string(src.str());
        HbmConfig hbm;
        hbm.usable_pcs.clear();
        for (int pc = 0; pc < (n_layers + 2) / 3; ++pc) hbm.usable_pcs.push_back(pc);
        OffloadPlan plan = plan_all_hbm(net, hbm);
        SimConfig cfg = sim_cfg(2, seed);
        SimReport r = run_tracked("rnd" + std::to_string(seed), net, plan, hbm, cfg);
        if (r.deadlock) ++deadlocks;
        if (r.images_completed != 2) ++incomplete;
    }
    return {"shared-channel deadlock and credits",
            rv_ok && cr_ok && deadlocks == 0 && incomplete == 0,
            fmt("ready-valid wedges (owner layer %.0f), credits finish; %.0f/200 random "
                "credit runs deadlocked (want 0)",
                rv.deadlock ? (double)rv.deadlock->head_of_line_owner : -1.0,
                (double)deadlocks)};
}

// ---- 6: streaming bound anchors ------------------------------------------------

Result c6_bound_anchors() {
    HbmConfig hbm;
    double r50 = hbm_throughput_bound(builtin_network("resnet50"), hbm, 300e6);
    double vgg = hbm_throughput_bound(builtin_network("vgg16"), hbm, 300e6);
    bool ok = std::abs(r50 - 1100.0) <= 110.0 && std::abs(vgg - 551.0) <= 55.1;
    return {"streaming bound anchors", ok,
            fmt("resnet50 %.1f im/s (want 1100 +-10%%), vgg16 %.1f im/s (want 551 +-10%%)",
                r50, vgg)};
}

// ---- 7: simulation vs roofline -------------------------------------------------

Result c7_sim_vs_bound() {
    HbmConfig hbm;
    bool ok = true;
    std::string detail;

    // streamed and hybrid builtins stay under their analytic ceilings
    for (const auto& name : builtin_network_names()) {
        for (const char* mode : {"hybrid", "all-hbm"}) {
            NetworkModel net =
                std::string(mode) == "hybrid" ? hybrid_net(name) : all_hbm_net(name);
            OffloadPlan plan = std::string(mode) == "hybrid"
                                   ? plan_offload(net, hbm, kDeviceBits)
                                   : plan_all_hbm(net, hbm);
            run_tracked(name + std::string("/") + mode, net, plan, hbm, sim_cfg(4, 1));
        }
    }

    // a single bandwidth-bound layer on one channel lands on eff * bound
    NetworkModel solo = parse_network_string(
        "net solo\n"
        "layer 0 kind=conv kh=3 kw=3 ci=64 co=50 stride=1 in=32x32 out=32x32"
        " pi=1 po=3\n");
    HbmConfig one;
    one.usable_pcs = {0};
    double worst_ratio = 1.0;
    for (int bl : {8, 32}) {
        OffloadPlan plan = plan_all_hbm(solo, one, {}, bl);
        SimReport r = run_tracked("solo bl" + std::to_string(bl), solo, plan, one,
                                  sim_cfg(8, 1));
        double ideal =
            300e6 / ((double)solo.layers[0].out_height *
                     (double)layer_cycles_per_line(solo.layers[0]));
        double expect = read_efficiency(one, bl, AccessPattern::random) * ideal;
        double ratio = r.steady_state_im_s / expect;
        if (std::abs(ratio - 1.0) > std::abs(worst_ratio - 1.0)) worst_ratio = ratio;
        ok = ok && std::abs(ratio - 1.0) <= 0.05;
    }
    detail = fmt("single streamed layer at %.4fx of eff x bound (want 1 +-5%%)", worst_ratio);
    return {"simulation vs roofline", ok, detail};
}

// ---- 8: burst-length sweep shape ----------------------------------------------

struct SteadyByBl {
    std::map<int, double> r18, r50;
    SimReport r18_bl8, r50_bl8; // reused by the uplift check
};

SteadyByBl g_steady;

Result c8_burst_shape() {
    HbmConfig hbm;
    NetworkModel r18 = hybrid_net("resnet18");
    for (int bl : {8, 16}) {
        OffloadPlan plan = plan_offload(r18, hbm, kDeviceBits, {}, bl);
        SimReport r = run_tracked("resnet18 bl" + std::to_string(bl), r18, plan, hbm,
                                  sim_cfg(8, 1));
        g_steady.r18[bl] = r.steady_state_im_s;
        if (bl == 8) g_steady.r18_bl8 = r;
    }
    NetworkModel r50 = hybrid_net("resnet50");
    for (int bl : {8, 16, 32}) {
        OffloadPlan plan = plan_offload(r50, hbm, kDeviceBits, {}, bl);
        SimReport r = run_tracked("resnet50 bl" + std::to_string(bl), r50, plan, hbm,
                                  sim_cfg(8, 1));
        g_steady.r50[bl] = r.steady_state_im_s;
        if (bl == 8) g_steady.r50_bl8 = r;
    }

    // resnet18 is compute-bound: burst length must not matter (+-1%)
    double d18 = std::abs(g_steady.r18[16] - g_steady.r18[8]) / g_steady.r18[8];
    bool ok18 = d18 <= 0.01;

    // resnet50 is delivery-bound: nondecreasing, burst 32 strictly best (>1%)
    double s8 = g_steady.r50[8], s16 = g_steady.r50[16], s32 = g_steady.r50[32];
    bool ok50 = s16 >= s8 * 0.995 && s32 >= s16 * 0.995 && s32 > s8 * 1.01 &&
                s32 > s16 * 1.01;

    return {"burst-length sweep shape", ok18 && ok50,
            fmt("resnet18 bl8/16 differ %.2f%% (want <=1%%); resnet50 %.0f", d18 * 100.0,
                s8) +
                fmt("/%.0f/%.0f im/s (want nondecreasing, bl32 strictly best)", s16, s32)};
}

// ---- 9: hybrid uplift -----------------------------------------------------------

Result c9_hybrid_uplift() {
    HbmConfig hbm;
    bool ok = true;
    double ratio18 = 0.0;
    std::string worst;
    for (const auto& name : builtin_network_names()) {
        double hybrid;
        if (name == "resnet18") hybrid = g_steady.r18_bl8.steady_state_im_s;
        else if (name == "resnet50") hybrid = g_steady.r50_bl8.steady_state_im_s;
        else {
            NetworkModel net = hybrid_net(name);
            OffloadPlan plan = plan_offload(net, hbm, kDeviceBits);
            hybrid = run_tracked(name + "/hybrid8", net, plan, hbm, sim_cfg(8, 1))
                         .steady_state_im_s;
        }
        NetworkModel net = all_hbm_net(name);
        OffloadPlan plan = plan_all_hbm(net, hbm);
        double streamed =
            run_tracked(name + "/all-hbm8", net, plan, hbm, sim_cfg(8, 1)).steady_state_im_s;
        if (hybrid <= streamed) {
            ok = false;
            worst = name;
        }
        if (name == "resnet18") ratio18 = hybrid / streamed;
    }
    ok = ok && ratio18 >= 1.5 && ratio18 <= 3.5;
    return {"hybrid uplift over all-hbm", ok,
            fmt("hybrid beats streaming on every builtin; resnet18 ratio %.2f "
                "(want 1.5..3.5)",
                ratio18) +
                (worst.empty() ? "" : " [no uplift on " + worst + "]")};
}

// ---- 10: manifest replay determinism -------------------------------------------

std::string g_cli;

int run_cmd(const std::string& cmd) {
    FILE* p = popen((cmd + " >/dev/null 2>&1").c_str(), "r");
    if (!p) return -1;
    char buf[256];
    while (fgets(buf, sizeof buf, p)) {}
    int st = pclose(p);
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

Result c10_replay() {
    if (g_cli.empty())
        return {"manifest replay determinism", false, "no CLI binary path given (argv[1])"};
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "hbmflow_acceptance";
    fs::remove_all(dir);
    fs::create_directories(dir);

    bool ok = true;
    std::string detail = "simulate and plan reports replay byte-identically";

    std::string report = (dir / "scenario-shared-channel_credit_s3.report").string();
    if (run_cmd(g_cli + " simulate --scenario shared-channel --flow credit --seed 3"
                        " --outdir " + dir.string()) != 0) {
        ok = false;
        detail = "simulate run failed";
    }
    std::string first = slurp(report);
    fs::remove(report);
    if (ok && run_cmd(g_cli + " replay " + report + ".manifest.json") != 0) {
        ok = false;
        detail = "replay exited nonzero";
    }
    if (ok && (first.empty() || slurp(report) != first)) {
        ok = false;
        detail = "replayed simulate report differs";
    }

    std::string plan_path = (dir / "resnet18_hybrid_bl8.plan").string();
    if (ok && run_cmd(g_cli + " plan --builtin resnet18 --outdir " + dir.string()) != 0) {
        ok = false;
        detail = "plan run failed";
    }
    std::string plan_first = slurp(plan_path);
    fs::remove(plan_path);
    if (ok && run_cmd(g_cli + " replay " + plan_path + ".manifest.json") != 0) {
        ok = false;
        detail = "plan replay exited nonzero";
    }
    if (ok && (plan_first.empty() || slurp(plan_path) != plan_first)) {
        ok = false;
        detail = "replayed plan differs";
    }

    fs::remove_all(dir);
    return {"manifest replay determinism", ok, detail};
}

} // namespace

int main(int argc, char** argv) {
    if (argc > 1) g_cli = argv[1];
    setvbuf(stdout, nullptr, _IONBF, 0);

    std::vector<Result (*)()> checks = {
        c1_effective_bandwidth, c2_fifo_sizing, c3_calibration, c4_planner_fidelity,
        c5_deadlock,            c6_bound_anchors, c7_sim_vs_bound, c8_burst_shape,
        c9_hybrid_uplift,       c10_replay,
    };

    std::vector<Result> results;
    for (auto* check : checks) {
        auto t0 = std::chrono::steady_clock::now();
        results.push_back(check());
        results.back().secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    // sweep every simulation this binary ran: none may beat its roofline
    for (const auto& run : g_runs) {
        if (run.throughput > run.roofline * (1.0 + 1e-9)) {
            results[6].ok = false;
            results[6].detail += " [" + run.tag + " exceeds its roofline]";
        }
    }

    int failed = 0;
    for (size_t i = 0; i < results.size(); ++i) {
        const Result& r = results[i];
        if (!r.ok) ++failed;
        std::printf("%s %2zu  %-36s %s  (%.2fs)\n", r.ok ? "PASS" : "FAIL", i + 1,
                    r.name.c_str(), r.detail.c_str(), r.secs);
    }
    std::printf("%zu/%zu criteria passed\n", results.size() - failed, results.size());
    return failed == 0 ? 0 : 1;
}
