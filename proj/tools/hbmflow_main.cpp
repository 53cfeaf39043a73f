// Command-line front end.  Six subcommands tie the library into reproducible
// workflows:
//
//   plan          score layers and write an offload plan file
//   simulate      run the weight-distribution pipeline against a plan
//   sweep         plan+simulate across burst lengths / memory modes
//   bound         analytic roofline for a planned network
//   characterize  drive the memory model with synthetic traffic
//   replay        re-execute a previous run from its manifest
//
// Every command resolves its flags (defaults materialized) into one flat
// option record, executes deterministically from that record alone, and
// writes the record as a JSON manifest next to its report.  Re-running a
// manifest therefore reproduces the report byte for byte.
//
// Exit codes: 0 success, 2 usage/validation error, 3 simulated deadlock
// (report still written), 4 infeasible plan.

#include "hbmflow/batch.hpp"
#include "hbmflow/bounds.hpp"
#include "hbmflow/hbm.hpp"
#include "hbmflow/network.hpp"
#include "hbmflow/planner.hpp"
#include "hbmflow/sim.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace {

using json = nlohmann::json;
using namespace hbmflow;

constexpr const char* kToolVersion = "1.0.0";
constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitDeadlock = 3;
constexpr int kExitInfeasible = 4;

struct usage_error : std::runtime_error {
    explicit usage_error(const std::string& what) : std::runtime_error(what) {}
};

// Everything a run needs, with defaults already materialized.  The manifest
// is this record serialized; replay deserializes it and dispatches again.
struct RunOpts {
    std::string command;

    // network source: a descriptor file, a builtin name, or a scenario
    std::string network_path;
    std::string builtin;
    std::string scenario;       // shared-channel | private-channel
    std::string preset = "auto"; // parallelism preset; auto follows the mode

    // device shape
    int stacks = 2;
    int pcs_per_stack = 16;
    int usable_pcs = -1; // -1: all channels except the hard-to-route pc 16
    double core_mhz = 300.0;
    double hbm_mhz = 400.0;

    // planning
    std::string mode = "hybrid"; // hybrid | all-hbm (sweep also takes both)
    double onchip_mb = 140.0;
    int burst = 8;
    std::string plan_path;

    // simulation
    int images = 8;
    std::uint64_t seed = 1;
    std::string flow = "credit"; // credit | ready-valid
    std::string trace_path;

    // sweep
    std::vector<int> bursts{8, 16, 32};
    int jobs = 0; // 0: one worker per hardware thread

    // characterize
    std::int64_t txns = 10000;
    std::string pattern = "random"; // random | sequential

    // output
    std::string format = "text"; // text | csv
    std::string outdir;          // --outdir, else $HBMFLOW_OUTDIR, else .
    std::string out;             // explicit report path override
};

json opts_to_json(const RunOpts& o) {
    json j;
    j["network"] = o.network_path;
    j["builtin"] = o.builtin;
    j["scenario"] = o.scenario;
    j["preset"] = o.preset;
    j["stacks"] = o.stacks;
    j["pcs_per_stack"] = o.pcs_per_stack;
    j["usable_pcs"] = o.usable_pcs;
    j["core_mhz"] = o.core_mhz;
    j["hbm_mhz"] = o.hbm_mhz;
    j["mode"] = o.mode;
    j["onchip_mb"] = o.onchip_mb;
    j["burst"] = o.burst;
    j["plan"] = o.plan_path;
    j["images"] = o.images;
    j["seed"] = o.seed;
    j["flow"] = o.flow;
    j["trace"] = o.trace_path;
    j["bursts"] = o.bursts;
    j["jobs"] = o.jobs;
    j["txns"] = o.txns;
    j["pattern"] = o.pattern;
    j["format"] = o.format;
    j["outdir"] = o.outdir;
    j["out"] = o.out;
    return j;
}

RunOpts opts_from_json(const json& j) {
    RunOpts o;
    o.network_path = j.at("network").get<std::string>();
    o.builtin = j.at("builtin").get<std::string>();
    o.scenario = j.at("scenario").get<std::string>();
    o.preset = j.at("preset").get<std::string>();
    o.stacks = j.at("stacks").get<int>();
    o.pcs_per_stack = j.at("pcs_per_stack").get<int>();
    o.usable_pcs = j.at("usable_pcs").get<int>();
    o.core_mhz = j.at("core_mhz").get<double>();
    o.hbm_mhz = j.at("hbm_mhz").get<double>();
    o.mode = j.at("mode").get<std::string>();
    o.onchip_mb = j.at("onchip_mb").get<double>();
    o.burst = j.at("burst").get<int>();
    o.plan_path = j.at("plan").get<std::string>();
    o.images = j.at("images").get<int>();
    o.seed = j.at("seed").get<std::uint64_t>();
    o.flow = j.at("flow").get<std::string>();
    o.trace_path = j.at("trace").get<std::string>();
    o.bursts = j.at("bursts").get<std::vector<int>>();
    o.jobs = j.at("jobs").get<int>();
    o.txns = j.at("txns").get<std::int64_t>();
    o.pattern = j.at("pattern").get<std::string>();
    o.format = j.at("format").get<std::string>();
    o.outdir = j.at("outdir").get<std::string>();
    o.out = j.at("out").get<std::string>();
    return o;
}

// ---- small helpers ----------------------------------------------------------

void write_file(const std::string& path, const std::string& text) {
    auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw usage_error("cannot open " + path + " for writing");
    os << text;
    os.flush();
    if (!os) throw usage_error("short write to " + path);
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw usage_error("cannot read " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::string network_source(const RunOpts& o) {
    if (!o.scenario.empty()) return "scenario:" + o.scenario;
    if (!o.builtin.empty()) return "builtin:" + o.builtin;
    return o.network_path;
}

std::string net_tag(const RunOpts& o) {
    if (!o.scenario.empty()) return "scenario-" + o.scenario;
    if (!o.builtin.empty()) return o.builtin;
    return std::filesystem::path(o.network_path).stem().string();
}

std::string report_path(const RunOpts& o, const std::string& default_name) {
    if (!o.out.empty()) return o.out;
    std::string dir = o.outdir.empty() ? "." : o.outdir;
    return dir + "/" + default_name;
}

void write_manifest(const RunOpts& o, const std::string& report) {
    json m;
    m["command"] = o.command;
    m["config"] = opts_to_json(o);
    m["inputs"] = json{{"network", network_source(o)}, {"plan", o.plan_path}};
    m["outputs"] = json{{"report", report}, {"manifest", report + ".manifest.json"}};
    m["seed"] = o.seed;
    m["tool"] = "hbmflow";
    m["version"] = kToolVersion;
    write_file(report + ".manifest.json", m.dump(2) + "\n");
}

// Channel ids in fill order: both stacks bottom-up, with pc 16 (disabled by
// default because it is hard to close timing on) pushed to the very end so it
// is only enabled when every other channel already is.
std::vector<int> pick_usable(int total, int per_stack, int n) {
    std::vector<int> order;
    for (int i = 0; i < per_stack && i < total; ++i) order.push_back(i);
    for (int i = total - 1; i >= per_stack; --i) order.push_back(i);
    if (total > 16) {
        order.erase(std::find(order.begin(), order.end(), 16));
        order.push_back(16);
    }
    if (n < 1 || n > total)
        throw usage_error("--pcs must be between 1 and " + std::to_string(total));
    std::vector<int> usable(order.begin(), order.begin() + n);
    std::sort(usable.begin(), usable.end());
    return usable;
}

HbmConfig make_hbm(const RunOpts& o) {
    HbmConfig hbm;
    hbm.n_stacks = o.stacks;
    hbm.pcs_per_stack = o.pcs_per_stack;
    hbm.pc_clock_hz = o.hbm_mhz * 1e6;
    int total = o.stacks * o.pcs_per_stack;
    int n = o.usable_pcs >= 0 ? o.usable_pcs : (total > 16 ? total - 1 : total);
    hbm.usable_pcs = pick_usable(total, o.pcs_per_stack, n);
    validate_hbm(hbm);
    return hbm;
}

std::string effective_preset(const RunOpts& o, const std::string& mode) {
    if (o.preset != "auto") return o.preset;
    // Builtins default to the machine shape matching the memory mode;
    // descriptor files already carry their parallelism.
    if (!o.builtin.empty()) return mode == "all-hbm" ? "all-hbm" : "hybrid";
    return "";
}

NetworkModel load_net(const RunOpts& o, const std::string& preset) {
    NetworkModel net;
    if (!o.builtin.empty())
        net = builtin_network(o.builtin);
    else if (!o.network_path.empty())
        net = load_network_file(o.network_path);
    else
        throw usage_error("no network given: pass a descriptor file or --builtin");
    if (!preset.empty()) apply_parallelism_preset(net, preset);
    return net;
}

std::int64_t onchip_bits(const RunOpts& o) {
    return (std::int64_t)std::llround(o.onchip_mb * 1e6);
}

OffloadPlan build_plan(const NetworkModel& net, const HbmConfig& hbm,
                       const RunOpts& o, const std::string& mode, int burst) {
    if (mode == "all-hbm") return plan_all_hbm(net, hbm, {}, burst, o.core_mhz * 1e6);
    return plan_offload(net, hbm, onchip_bits(o), {}, burst, o.core_mhz * 1e6);
}

FlowMode flow_mode(const RunOpts& o) {
    if (o.flow == "credit") return FlowMode::credit;
    if (o.flow == "ready-valid") return FlowMode::ready_valid;
    throw usage_error("--flow must be credit or ready-valid");
}

const char* bottleneck_name(BottleneckKind k) {
    return k == BottleneckKind::hbm_bandwidth ? "hbm-bandwidth" : "on-chip-compute";
}

double freeze_fraction(const SimReport& r) {
    if (r.total_cycles <= 0 || r.layers.empty()) return 0.0;
    std::int64_t frozen = 0;
    for (const auto& l : r.layers) frozen += l.freeze_cycles;
    return (double)frozen / ((double)r.layers.size() * (double)r.total_cycles);
}

std::string slice_list(const Placement& p) {
    std::ostringstream os;
    for (size_t i = 0; i < p.slices.size(); ++i) {
        if (i) os << ",";
        os << p.slices[i].pc << ":" << p.slices[i].chains;
    }
    return os.str();
}

// ---- plan -------------------------------------------------------------------

std::string plan_summary(const NetworkModel& net, const OffloadPlan& plan,
                         std::int64_t budget_bits) {
    std::ostringstream os;
    os << "plan " << plan.net_name << " mode=" << plan.mode
       << " burst=" << plan.burst_length << "\n";
    os << std::left << std::setw(6) << "layer" << std::setw(18) << "name"
       << std::setw(8) << "kind" << std::setw(6) << "par" << std::setw(12) << "score"
       << std::setw(8) << "place" << "channels\n";
    for (size_t id = 0; id < plan.placements.size(); ++id) {
        const LayerSpec& l = net.layer((int)id);
        const Placement& p = plan.placements[id];
        std::ostringstream score;
        score << std::fixed << std::setprecision(3) << plan.scores[id].value();
        os << std::left << std::setw(6) << id
           << std::setw(18) << (l.name.empty() ? "-" : l.name)
           << std::setw(8) << layer_kind_name(l.kind)
           << std::setw(6) << l.par()
           << std::setw(12) << score.str()
           << std::setw(8) << (p.onchip ? "onchip" : "hbm");
        if (!p.onchip) os << slice_list(p) << " credits=" << p.credits_init;
        os << "\n";
    }
    os << "fifo dcfifo=" << plan.fifo_depths.dcfifo_words
       << " burst_match=" << plan.fifo_depths.burst_match_words
       << " last_stage=" << plan.fifo_depths.last_stage_words << "\n";
    os << "onchip_bits " << plan.onchip_bits_used;
    if (plan.mode != "all-hbm") os << " / " << budget_bits;
    os << "  hbm_words " << plan.hbm_bw_words_used
       << "  offloaded " << plan.n_offloaded() << "/" << plan.placements.size() << "\n";
    return os.str();
}

int run_plan(RunOpts& o) {
    o.preset = effective_preset(o, o.mode);
    HbmConfig hbm = make_hbm(o);
    NetworkModel net = load_net(o, o.preset);
    OffloadPlan plan = build_plan(net, hbm, o, o.mode, o.burst);
    check_plan(plan, net, hbm);

    std::string path = report_path(
        o, net_tag(o) + "_" + o.mode + "_bl" + std::to_string(o.burst) + ".plan");
    write_file(path, serialize_plan(plan));
    write_manifest(o, path);
    std::cout << plan_summary(net, plan, onchip_bits(o));
    std::cout << "wrote " << path << "\n";
    return kExitOk;
}

// ---- simulate ---------------------------------------------------------------

SimConfig make_sim_config(const RunOpts& o) {
    SimConfig cfg;
    cfg.core_clock_hz = o.core_mhz * 1e6;
    cfg.hbm_clock_hz = o.hbm_mhz * 1e6;
    cfg.n_images = o.images;
    cfg.flow_mode = flow_mode(o);
    cfg.seed = o.seed;
    cfg.trace_path = o.trace_path;
    return cfg;
}

std::string sim_summary(const SimReport& r) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(1);
    os << "throughput " << r.throughput_im_s << " im/s  steady "
       << r.steady_state_im_s << " im/s  roofline " << r.roofline_im_s
       << " im/s  cycles " << r.total_cycles << "  images " << r.images_completed
       << "\n";
    if (r.deadlock) {
        os << "deadlock at cycle " << r.deadlock->cycle
           << ": head-of-line owner layer " << r.deadlock->head_of_line_owner << "\n";
        os << "  full:";
        for (const auto& n : r.deadlock->full_fifos) os << " " << n;
        os << "\n  empty:";
        for (const auto& n : r.deadlock->empty_fifos) os << " " << n;
        os << "\n";
    }
    return os.str();
}

int run_simulate(RunOpts& o) {
    SimReport rep;
    std::string default_name;
    if (!o.scenario.empty()) {
        bool shared;
        if (o.scenario == "shared-channel") shared = true;
        else if (o.scenario == "private-channel") shared = false;
        else throw usage_error("--scenario must be shared-channel or private-channel");
        rep = run_shared_channel_scenario(flow_mode(o), shared, o.seed);
        default_name = net_tag(o) + "_" + o.flow + "_s" + std::to_string(o.seed) + ".report";
    } else {
        if (o.plan_path.empty())
            throw usage_error("simulate needs --plan (or --scenario)");
        OffloadPlan plan = load_plan_file(o.plan_path);
        o.burst = plan.burst_length;
        o.mode = plan.mode;
        o.preset = effective_preset(o, plan.mode);
        HbmConfig hbm = make_hbm(o);
        NetworkModel net = load_net(o, o.preset);
        if (plan.net_name != net.name)
            throw usage_error("plan is for net '" + plan.net_name + "' but the network is '" +
                              net.name + "'");
        check_plan(plan, net, hbm);
        rep = simulate(net, plan, hbm, make_sim_config(o));
        default_name = std::filesystem::path(o.plan_path).stem().string() + "_" + o.flow +
                       "_n" + std::to_string(o.images) + "_s" + std::to_string(o.seed) +
                       ".report";
    }

    std::string path = report_path(o, default_name);
    write_file(path, serialize_report(rep));
    write_manifest(o, path);
    std::cout << sim_summary(rep);
    std::cout << "wrote " << path << "\n";
    return rep.deadlock ? kExitDeadlock : kExitOk;
}

// ---- sweep ------------------------------------------------------------------

struct SweepRow {
    int burst = 0;
    std::string mode;
    double throughput = 0.0;
    double steady = 0.0;
    double roofline = 0.0;
    std::string bottleneck;
    double freeze_frac = 0.0;
    bool recommended = false;
};

int run_sweep(RunOpts& o) {
    if (o.bursts.empty()) throw usage_error("--burst list is empty");
    std::vector<std::string> modes;
    if (o.mode == "both") modes = {"hybrid", "all-hbm"};
    else modes = {o.mode};

    HbmConfig hbm = make_hbm(o);
    for (int bl : o.bursts)
        if (!hbm.efficiency_table.count(bl))
            throw usage_error("burst length " + std::to_string(bl) +
                              " is not in the efficiency table");

    std::vector<SweepRow> rows(modes.size() * o.bursts.size());
    auto run_one = [&](std::size_t idx) {
        const std::string& mode = modes[idx / o.bursts.size()];
        int bl = o.bursts[idx % o.bursts.size()];
        NetworkModel net = load_net(o, effective_preset(o, mode));
        OffloadPlan plan = build_plan(net, hbm, o, mode, bl);
        check_plan(plan, net, hbm);
        RunOpts so = o;
        so.flow = "credit";
        SimReport rep = simulate(net, plan, hbm, make_sim_config(so));
        if (rep.deadlock) throw sim_error("sweep arm " + mode + "/bl" + std::to_string(bl) +
                                          " deadlocked");
        RooflineReport rf = roofline(net, plan, hbm, o.core_mhz * 1e6);
        rows[idx] = SweepRow{bl, mode, rep.throughput_im_s, rep.steady_state_im_s,
                             rf.overall_im_s, bottleneck_name(rf.bottleneck_kind),
                             freeze_fraction(rep), false};
    };
    run_indexed_parallel(rows.size(), run_one, o.jobs);

    for (size_t m = 0; m < modes.size(); ++m) {
        std::map<int, double> by_bl;
        for (size_t b = 0; b < o.bursts.size(); ++b) {
            const SweepRow& r = rows[m * o.bursts.size() + b];
            by_bl[r.burst] = r.throughput;
        }
        int rec = select_burst_length(by_bl);
        for (size_t b = 0; b < o.bursts.size(); ++b) {
            SweepRow& r = rows[m * o.bursts.size() + b];
            r.recommended = r.burst == rec;
        }
    }

    std::ostringstream csv;
    csv << std::setprecision(12);
    csv << "burst,mode,throughput_im_s,steady_im_s,roofline_im_s,bottleneck,"
           "freeze_frac,recommended\n";
    for (const auto& r : rows)
        csv << r.burst << "," << r.mode << "," << r.throughput << "," << r.steady << ","
            << r.roofline << "," << r.bottleneck << "," << r.freeze_frac << ","
            << (r.recommended ? 1 : 0) << "\n";

    std::string path = report_path(o, net_tag(o) + "_" + o.mode + "_sweep.csv");
    write_file(path, csv.str());
    write_manifest(o, path);

    std::cout << std::left << std::setw(7) << "burst" << std::setw(9) << "mode"
              << std::setw(14) << "im/s" << std::setw(14) << "steady"
              << std::setw(14) << "roofline" << std::setw(17) << "bottleneck"
              << std::setw(8) << "freeze" << "\n";
    std::cout << std::fixed;
    for (const auto& r : rows)
        std::cout << std::left << std::setw(7) << r.burst << std::setw(9) << r.mode
                  << std::setw(14) << std::setprecision(1) << r.throughput
                  << std::setw(14) << r.steady << std::setw(14) << r.roofline
                  << std::setw(17) << r.bottleneck << std::setw(8)
                  << std::setprecision(4) << r.freeze_frac
                  << (r.recommended ? "  <- recommended" : "") << "\n";
    for (size_t m = 0; m < modes.size(); ++m)
        for (size_t b = 0; b < o.bursts.size(); ++b)
            if (rows[m * o.bursts.size() + b].recommended)
                std::cout << "recommended burst (" << modes[m]
                          << "): " << rows[m * o.bursts.size() + b].burst << "\n";
    std::cout << "wrote " << path << "\n";
    return kExitOk;
}

// ---- bound ------------------------------------------------------------------

std::string bound_table(const RooflineReport& r, const NetworkModel& net) {
    std::ostringstream os;
    os << std::left << std::setw(6) << "layer" << std::setw(18) << "name"
       << std::setw(8) << "place" << std::setw(16) << "compute_cyc"
       << std::setw(16) << "delivery_cyc" << "bound_im_s\n";
    for (const auto& lb : r.per_layer) {
        std::ostringstream del, bnd;
        del << std::fixed << std::setprecision(1) << lb.delivery_cycles;
        bnd << std::fixed << std::setprecision(1) << lb.bound_im_s;
        const LayerSpec& l = net.layer(lb.layer_id);
        os << std::left << std::setw(6) << lb.layer_id
           << std::setw(18) << (l.name.empty() ? "-" : l.name)
           << std::setw(8) << (lb.onchip ? "onchip" : "hbm")
           << std::setw(16) << lb.compute_cycles
           << std::setw(16) << del.str() << bnd.str() << "\n";
    }
    return os.str();
}

int run_bound(RunOpts& o) {
    o.preset = effective_preset(o, o.mode);
    HbmConfig hbm = make_hbm(o);
    OffloadPlan plan;
    NetworkModel net;
    if (!o.plan_path.empty()) {
        plan = load_plan_file(o.plan_path);
        o.burst = plan.burst_length;
        o.mode = plan.mode;
        o.preset = effective_preset(o, plan.mode);
        net = load_net(o, o.preset);
        check_plan(plan, net, hbm);
    } else {
        net = load_net(o, o.preset);
        plan = build_plan(net, hbm, o, o.mode, o.burst);
    }
    RooflineReport r = roofline(net, plan, hbm, o.core_mhz * 1e6);

    std::string text;
    if (o.format == "csv") {
        std::istringstream scalars(roofline_text(r));
        std::ostringstream os;
        for (std::string line; std::getline(scalars, line);) os << "# " << line << "\n";
        os << roofline_csv(r, net);
        text = os.str();
    } else {
        text = roofline_text(r) + "\n" + bound_table(r, net);
    }

    std::string path = report_path(
        o, net_tag(o) + "_" + o.mode + "_bl" + std::to_string(o.burst) + ".bound");
    write_file(path, text);
    write_manifest(o, path);
    std::cout << text;
    std::cout << "wrote " << path << "\n";
    return kExitOk;
}

// ---- characterize -----------------------------------------------------------

int run_characterize(RunOpts& o) {
    HbmConfig hbm = make_hbm(o);
    if (!hbm.efficiency_table.count(o.burst))
        throw usage_error("burst length " + std::to_string(o.burst) +
                          " is not in the efficiency table");
    AccessPattern pattern;
    if (o.pattern == "random") pattern = AccessPattern::random;
    else if (o.pattern == "sequential") pattern = AccessPattern::sequential;
    else throw usage_error("--pattern must be random or sequential");
    if (o.txns < 1) throw usage_error("--txns must be >= 1");

    CharacterizeResult res = characterize(hbm, o.txns, o.burst, pattern, o.seed);

    std::ostringstream os;
    auto row = [&](const char* phase, const MeasuredStats& s) {
        if (o.format == "csv") {
            os << phase << "," << s.transactions << "," << std::setprecision(12)
               << s.efficiency << "," << s.latency_min_ns << "," << s.latency_avg_ns
               << "," << s.latency_max_ns << "\n";
        } else {
            os << std::left << std::setw(7) << phase << std::setw(8) << s.transactions
               << std::fixed << std::setprecision(4) << std::setw(12) << s.efficiency
               << std::setprecision(1) << std::setw(12) << s.latency_min_ns
               << std::setw(12) << s.latency_avg_ns << s.latency_max_ns << "\n";
            os.unsetf(std::ios::fixed);
        }
    };
    if (o.format == "csv")
        os << "phase,transactions,efficiency,latency_min_ns,latency_avg_ns,latency_max_ns\n";
    else
        os << std::left << std::setw(7) << "phase" << std::setw(8) << "txns"
           << std::setw(12) << "efficiency" << std::setw(12) << "lat_min"
           << std::setw(12) << "lat_avg" << "lat_max\n";
    row("write", res.write);
    row("read", res.read);

    std::string path = report_path(o, "hbm_bl" + std::to_string(o.burst) + "_" + o.pattern +
                                          "_s" + std::to_string(o.seed) + ".stats");
    write_file(path, os.str());
    write_manifest(o, path);
    std::cout << os.str();
    std::cout << "wrote " << path << "\n";
    return kExitOk;
}

// ---- dispatch / replay ------------------------------------------------------

int dispatch(RunOpts& o) {
    if (o.command == "plan") return run_plan(o);
    if (o.command == "simulate") return run_simulate(o);
    if (o.command == "sweep") return run_sweep(o);
    if (o.command == "bound") return run_bound(o);
    if (o.command == "characterize") return run_characterize(o);
    throw usage_error("unknown command '" + o.command + "'");
}

int run_replay(const std::string& manifest_path) {
    json m;
    try {
        m = json::parse(read_file(manifest_path));
    } catch (const json::exception& e) {
        throw usage_error(manifest_path + ": " + e.what());
    }
    try {
        if (m.at("tool").get<std::string>() != "hbmflow")
            throw usage_error(manifest_path + " was not written by this tool");
        if (m.at("version").get<std::string>() != kToolVersion)
            std::cerr << "warning: manifest version " << m.at("version").get<std::string>()
                      << " differs from tool version " << kToolVersion << "\n";
        RunOpts o = opts_from_json(m.at("config"));
        o.command = m.at("command").get<std::string>();
        return dispatch(o);
    } catch (const json::exception& e) {
        throw usage_error(manifest_path + ": " + e.what());
    }
}

void add_device_flags(CLI::App* c, RunOpts& o) {
    c->add_option("--stacks", o.stacks, "HBM stacks")->capture_default_str();
    c->add_option("--pcs-per-stack", o.pcs_per_stack, "pseudo-channels per stack")
        ->capture_default_str();
    c->add_option("--pcs", o.usable_pcs,
                  "usable pseudo-channels (default: all but the hard-to-route pc 16)");
    c->add_option("--core-mhz", o.core_mhz, "compute clock in MHz")->capture_default_str();
    c->add_option("--hbm-mhz", o.hbm_mhz, "memory interface clock in MHz")
        ->capture_default_str();
}

void add_output_flags(CLI::App* c, RunOpts& o) {
    c->add_option("--format", o.format, "report format")
        ->check(CLI::IsMember({"text", "csv"}))
        ->capture_default_str();
    c->add_option("--outdir", o.outdir, "output directory (default: $HBMFLOW_OUTDIR or .)");
    c->add_option("--out", o.out, "report path (overrides the derived name)");
}

void add_network_flags(CLI::App* c, RunOpts& o) {
    c->add_option("network", o.network_path, "network descriptor file");
    c->add_option("--builtin", o.builtin, "builtin network")
        ->check(CLI::IsMember(builtin_network_names()));
    c->add_option("--preset", o.preset,
                  "parallelism preset (default: match the memory mode for builtins)")
        ->check(CLI::IsMember([] {
            auto v = parallelism_preset_names();
            v.push_back("auto");
            return v;
        }()));
}

} // namespace

int main(int argc, char** argv) {
    RunOpts o;
    if (const char* env = std::getenv("HBMFLOW_OUTDIR")) o.outdir = env;
    std::string manifest_path;

    CLI::App app{"HBM-fed CNN weight pipeline: offload planning, cycle-level "
                 "simulation, and throughput bounds"};
    app.require_subcommand(1);

    CLI::App* plan = app.add_subcommand("plan", "choose weight placements, write a plan file");
    add_network_flags(plan, o);
    plan->add_option("--mode", o.mode, "placement mode")
        ->check(CLI::IsMember({"hybrid", "all-hbm"}))
        ->capture_default_str();
    plan->add_option("--onchip-mb", o.onchip_mb, "on-chip weight budget in Mb")
        ->capture_default_str();
    plan->add_option("--burst", o.burst, "burst length")->capture_default_str();
    add_device_flags(plan, o);
    add_output_flags(plan, o);

    CLI::App* sim = app.add_subcommand("simulate", "run the pipeline against a plan");
    add_network_flags(sim, o);
    sim->add_option("--plan", o.plan_path, "plan file from `plan`");
    sim->add_option("--scenario", o.scenario,
                    "builtin three-layer chain instead of a network/plan pair "
                    "(shared-channel | private-channel; fixes its own image count)");
    sim->add_option("--images", o.images, "images to push through")->capture_default_str();
    sim->add_option("--seed", o.seed, "rng seed")->capture_default_str();
    sim->add_option("--flow", o.flow, "flow control mode")
        ->check(CLI::IsMember({"credit", "ready-valid"}))
        ->capture_default_str();
    sim->add_option("--trace", o.trace_path, "write an event trace CSV to this path");
    add_device_flags(sim, o);
    add_output_flags(sim, o);

    CLI::App* sweep = app.add_subcommand("sweep", "plan+simulate across burst lengths");
    add_network_flags(sweep, o);
    sweep->add_option("--mode", o.mode, "placement mode(s)")
        ->check(CLI::IsMember({"hybrid", "all-hbm", "both"}))
        ->capture_default_str();
    sweep->add_option("--burst", o.bursts, "burst lengths to sweep")
        ->delimiter(',')
        ->capture_default_str();
    sweep->add_option("--onchip-mb", o.onchip_mb, "on-chip weight budget in Mb")
        ->capture_default_str();
    sweep->add_option("--images", o.images, "images per simulation")->capture_default_str();
    sweep->add_option("--seed", o.seed, "rng seed")->capture_default_str();
    sweep->add_option("--jobs", o.jobs, "parallel workers (0: hardware threads)")
        ->capture_default_str();
    add_device_flags(sweep, o);
    add_output_flags(sweep, o);

    CLI::App* bound = app.add_subcommand("bound", "analytic roofline for a planned network");
    add_network_flags(bound, o);
    bound->add_option("--plan", o.plan_path, "plan file (default: plan with the flags below)");
    bound->add_option("--mode", o.mode, "placement mode")
        ->check(CLI::IsMember({"hybrid", "all-hbm"}))
        ->capture_default_str();
    bound->add_option("--onchip-mb", o.onchip_mb, "on-chip weight budget in Mb")
        ->capture_default_str();
    bound->add_option("--burst", o.burst, "burst length")->capture_default_str();
    add_device_flags(bound, o);
    add_output_flags(bound, o);

    CLI::App* chr = app.add_subcommand("characterize", "measure the memory model");
    chr->add_option("--bl", o.burst, "burst length")->capture_default_str();
    chr->add_option("--txns", o.txns, "transactions per phase")->capture_default_str();
    chr->add_option("--pattern", o.pattern, "address pattern")
        ->check(CLI::IsMember({"random", "sequential"}))
        ->capture_default_str();
    chr->add_option("--seed", o.seed, "rng seed")->capture_default_str();
    add_device_flags(chr, o);
    add_output_flags(chr, o);

    CLI::App* replay = app.add_subcommand("replay", "re-execute a run from its manifest");
    replay->add_option("manifest", manifest_path, "manifest JSON from a previous run")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    for (CLI::App* c : {plan, sim, sweep, bound, chr})
        if (c->parsed()) o.command = c->get_name();

    try {
        if (replay->parsed()) return run_replay(manifest_path);
        return dispatch(o);
    } catch (const planner_infeasible& e) {
        std::cerr << "infeasible plan: " << e.what() << "\n"
                  << "  required=" << e.required << " budget=" << e.budget
                  << " shortfall=" << e.shortfall() << " unit=" << e.unit << "\n";
        return kExitInfeasible;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}
