#include "hbmflow/planner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <set>
#include <sstream>

namespace hbmflow {

namespace {

int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

int64_t next_pow2(int64_t v) {
    int64_t p = 1;
    while (p < v) p <<= 1;
    return p;
}

int64_t dup_factor(const LayerSpec& l, const PlannerConstants& consts) {
    return ceil_div(l.out_width, consts.chains_width_divisor);
}

// Clockwise channel order: 0..15, then 31 counting down to 16, minus
// anything disabled.
std::vector<int> pc_walk_order(const HbmConfig& hbm) {
    std::set<int> usable(hbm.usable_pcs.begin(), hbm.usable_pcs.end());
    std::vector<int> order;
    int half = hbm.total_pcs() / 2;
    for (int pc = 0; pc < half; ++pc)
        if (usable.count(pc)) order.push_back(pc);
    for (int pc = hbm.total_pcs() - 1; pc >= half; --pc)
        if (usable.count(pc)) order.push_back(pc);
    return order;
}

// On-chip memory the plan leaves occupied: weight RAM for resident layers,
// activation line buffers for everyone, and the distribution-network
// buffers each streamed layer needs instead of its weight RAM.
int64_t onchip_footprint_bits(const OffloadPlan& plan, const NetworkModel& net,
                              const PlannerConstants& consts) {
    int64_t bits = 0;
    std::set<int> used_pcs;
    for (auto& l : net.layers) {
        bits += activation_memory_bits(l);
        const Placement& p = plan.placements[l.id];
        if (p.onchip) {
            bits += weight_memory_m20k(l) * consts.m20k_bits;
        } else {
            bits += consts.replacement_m20ks * dup_factor(l, consts) * consts.m20k_bits;
            bits += plan.fifo_depths.burst_match_words * 256;
            for (auto& s : p.slices) used_pcs.insert(s.pc);
        }
    }
    bits += (int64_t)used_pcs.size() * plan.fifo_depths.dcfifo_words * 256;
    return bits;
}

} // namespace

Score layer_score(const LayerSpec& l, const PlannerConstants& consts) {
    int64_t blocks_per_copy = ceil_div(weight_memory_bits(l), consts.m20k_bits);
    int64_t savings = (blocks_per_copy - consts.replacement_m20ks) * dup_factor(l, consts);
    Score s;
    s.num = std::max<int64_t>(0, savings);
    s.den = (int64_t)l.par() * consts.weight_word_bits;
    return s;
}

std::vector<int> greedy_offload(const std::vector<Score>& scores,
                                const std::vector<int64_t>& par_words,
                                int64_t free_bw_words) {
    if (scores.size() != par_words.size())
        throw planner_error("scores/parallelism size mismatch");
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (!(scores[a] == scores[b])) return scores[b] < scores[a];
        return a < b;
    });
    std::vector<int> offloaded;
    int64_t free_bw = free_bw_words;
    for (size_t idx = 0; free_bw != 0 && idx < order.size(); ++idx) {
        int id = order[idx];
        if (scores[id].is_zero()) continue; // no savings: never stream
        if (par_words[id] <= free_bw) {
            offloaded.push_back(id);
            free_bw -= par_words[id];
        }
    }
    std::sort(offloaded.begin(), offloaded.end());
    return offloaded;
}

FifoSpec size_fifos(int burst_length, double core_clock_hz, double worst_latency_ns,
                    const PlannerConstants& consts) {
    if (burst_length < 1) throw planner_error("burst length must be >= 1");
    if (core_clock_hz <= 0.0) throw planner_error("core clock must be positive");
    FifoSpec f;
    f.dcfifo_words = 2 * (int64_t)burst_length;
    f.burst_match_words = 2 * (int64_t)burst_length;
    int64_t required = (int64_t)std::ceil(worst_latency_ns * core_clock_hz / 1e9);
    f.last_stage_words = std::max<int64_t>(next_pow2(required), 2);
    (void)consts;
    return f;
}

void assign_pseudo_channels(OffloadPlan& plan, const NetworkModel& net,
                            const HbmConfig& hbm, const PlannerConstants& consts) {
    if (plan.placements.size() != net.layers.size())
        throw planner_error("plan does not cover the network");
    std::vector<int> pcs = pc_walk_order(hbm);
    int64_t last_stage = plan.fifo_depths.last_stage_words
                             ? plan.fifo_depths.last_stage_words
                             : consts.last_stage_depth_words;
    size_t cur = 0;
    int used = 0;
    for (auto& l : net.layers) {
        Placement& p = plan.placements[l.id];
        if (p.onchip) {
            p.slices.clear();
            p.credits_init = 0;
            continue;
        }
        p.slices.clear();
        int demand = l.par();
        while (demand > 0) {
            if (cur < pcs.size() && used == consts.chains_per_pc) {
                ++cur;
                used = 0;
            }
            if (cur >= pcs.size())
                throw planner_error("chain demand exceeds pseudo-channel capacity "
                                    "(plan inconsistent with device)");
            int take = std::min(demand, consts.chains_per_pc - used);
            p.slices.push_back({pcs[cur], take});
            used += take;
            demand -= take;
        }
        p.credits_init = last_stage * l.par();
    }
}

namespace {

OffloadPlan make_plan(const NetworkModel& net, const HbmConfig& hbm,
                      const PlannerConstants& consts, int burst_length,
                      double core_clock_hz, const std::vector<int>& offloaded,
                      const std::string& mode) {
    OffloadPlan plan;
    plan.net_name = net.name;
    plan.mode = mode;
    plan.burst_length = burst_length;
    plan.placements.assign(net.layers.size(), Placement{});
    plan.scores.resize(net.layers.size());
    for (auto& l : net.layers) plan.scores[l.id] = layer_score(l, consts);
    for (int id : offloaded) plan.placements[id].onchip = false;
    // FIFO depths are baked into the fabric while the burst length is a
    // controller setting, so the last stage must ride out the slowest read
    // of any burst length a plan may select, not just this plan's.
    double design_latency = 0.0;
    for (int bl : supported_burst_lengths(hbm))
        if (bl >= consts.min_plan_burst)
            design_latency = std::max(design_latency, max_latency_ns(hbm, bl));
    plan.fifo_depths = size_fifos(burst_length, core_clock_hz, design_latency, consts);
    assign_pseudo_channels(plan, net, hbm, consts);
    for (int id : offloaded) plan.hbm_bw_words_used += net.layers[id].par();
    plan.onchip_bits_used = onchip_footprint_bits(plan, net, consts);
    return plan;
}

} // namespace

OffloadPlan plan_offload(const NetworkModel& net, const HbmConfig& hbm,
                         int64_t onchip_budget_bits, const PlannerConstants& consts,
                         int burst_length, double core_clock_hz) {
    validate_network(net);
    if (onchip_budget_bits < 0) throw planner_error("on-chip budget must be >= 0");
    std::vector<Score> scores(net.layers.size());
    std::vector<int64_t> par(net.layers.size());
    for (auto& l : net.layers) {
        scores[l.id] = layer_score(l, consts);
        par[l.id] = l.par();
    }
    int64_t free_bw = (int64_t)consts.chains_per_pc * (int64_t)hbm.usable_pcs.size();
    std::vector<int> offloaded = greedy_offload(scores, par, free_bw);
    OffloadPlan plan =
        make_plan(net, hbm, consts, burst_length, core_clock_hz, offloaded, "hybrid");
    if (plan.onchip_bits_used > onchip_budget_bits)
        throw planner_infeasible(
            "plan needs " + std::to_string(plan.onchip_bits_used) +
                " on-chip bits but the budget is " + std::to_string(onchip_budget_bits) +
                " (short by " + std::to_string(plan.onchip_bits_used - onchip_budget_bits) +
                "); the streaming budget is exhausted at " +
                std::to_string(plan.hbm_bw_words_used) + " words",
            plan.onchip_bits_used, onchip_budget_bits, "bits");
    return plan;
}

OffloadPlan plan_all_hbm(const NetworkModel& net, const HbmConfig& hbm,
                         const PlannerConstants& consts, int burst_length,
                         double core_clock_hz) {
    validate_network(net);
    int64_t demand = 0;
    for (auto& l : net.layers) demand += l.par();
    int64_t budget = (int64_t)consts.chains_per_pc * (int64_t)hbm.usable_pcs.size();
    if (demand > budget)
        throw planner_infeasible("streaming every layer needs " + std::to_string(demand) +
                                     " chain words but the channels supply " +
                                     std::to_string(budget),
                                 demand, budget, "words");
    std::vector<int> all(net.layers.size());
    std::iota(all.begin(), all.end(), 0);
    return make_plan(net, hbm, consts, burst_length, core_clock_hz, all, "all-hbm");
}

int select_burst_length(const std::map<int, double>& throughput_by_bl) {
    if (throughput_by_bl.empty()) throw planner_error("no burst-length candidates");
    double best = 0.0;
    for (auto& [bl, t] : throughput_by_bl) best = std::max(best, t);
    for (auto& [bl, t] : throughput_by_bl) // ascending bl
        if (t >= best * 0.995) return bl;
    return throughput_by_bl.rbegin()->first; // unreachable
}

void check_plan(const OffloadPlan& plan, const NetworkModel& net,
                const HbmConfig& hbm, const PlannerConstants& consts) {
    if (plan.placements.size() != net.layers.size())
        throw planner_error("plan does not cover the network");
    std::set<int> usable(hbm.usable_pcs.begin(), hbm.usable_pcs.end());
    std::map<int, int> pc_load;
    int64_t words = 0;
    for (auto& l : net.layers) {
        const Placement& p = plan.placements[l.id];
        if (p.onchip) {
            if (!p.slices.empty() || p.credits_init != 0)
                throw planner_error("layer " + std::to_string(l.id) +
                                    ": on-chip layers carry no slices or credits");
            continue;
        }
        int chains = 0;
        for (auto& s : p.slices) {
            if (!usable.count(s.pc))
                throw planner_error("layer " + std::to_string(l.id) + ": pc " +
                                    std::to_string(s.pc) + " is not usable");
            if (s.chains < 1) throw planner_error("empty slice");
            pc_load[s.pc] += s.chains;
            chains += s.chains;
        }
        if (chains != l.par())
            throw planner_error("layer " + std::to_string(l.id) +
                                ": slices feed " + std::to_string(chains) +
                                " chains, parallelism needs " + std::to_string(l.par()));
        if (p.credits_init != plan.fifo_depths.last_stage_words * l.par())
            throw planner_error("layer " + std::to_string(l.id) +
                                ": credits do not equal last-stage capacity");
        words += l.par();
    }
    for (auto& [pc, load] : pc_load)
        if (load > consts.chains_per_pc)
            throw planner_error("pc " + std::to_string(pc) + " feeds " +
                                std::to_string(load) + " chains (max " +
                                std::to_string(consts.chains_per_pc) + ")");
    if (words != plan.hbm_bw_words_used)
        throw planner_error("hbm_bw_words_used mismatch");
    if (words > (int64_t)consts.chains_per_pc * (int64_t)hbm.usable_pcs.size())
        throw planner_error("plan exceeds the channel word budget");
}

// ---- plan text I/O ----------------------------------------------------------
//
//   plan net=<name> mode=<mode> burst=<n> onchip_bits=<n> hbm_words=<n>
//   fifo dcfifo=<n> burst_match=<n> last_stage=<n>
//   layer <id> place=onchip score=<num>/<den>
//   layer <id> place=hbm score=<num>/<den> credits=<n> pc=<pc>:<chains>[,...]

std::string serialize_plan(const OffloadPlan& plan) {
    std::ostringstream out;
    out << "plan net=" << plan.net_name << " mode=" << plan.mode
        << " burst=" << plan.burst_length
        << " onchip_bits=" << plan.onchip_bits_used
        << " hbm_words=" << plan.hbm_bw_words_used << "\n";
    out << "fifo dcfifo=" << plan.fifo_depths.dcfifo_words
        << " burst_match=" << plan.fifo_depths.burst_match_words
        << " last_stage=" << plan.fifo_depths.last_stage_words << "\n";
    for (size_t id = 0; id < plan.placements.size(); ++id) {
        const Placement& p = plan.placements[id];
        const Score& s = plan.scores.at(id);
        out << "layer " << id << " place=" << (p.onchip ? "onchip" : "hbm")
            << " score=" << s.num << "/" << s.den;
        if (!p.onchip) {
            out << " credits=" << p.credits_init << " pc=";
            for (size_t i = 0; i < p.slices.size(); ++i) {
                if (i) out << ",";
                out << p.slices[i].pc << ":" << p.slices[i].chains;
            }
        }
        out << "\n";
    }
    return out.str();
}

namespace {

std::map<std::string, std::string> kv_fields(std::istringstream& ls, int line_no) {
    std::map<std::string, std::string> kv;
    std::string tok;
    while (ls >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos)
            throw planner_error("plan line " + std::to_string(line_no) +
                                ": expected key=value, got '" + tok + "'");
        kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    return kv;
}

int64_t geti(const std::map<std::string, std::string>& kv, const std::string& key,
             int line_no) {
    auto it = kv.find(key);
    if (it == kv.end())
        throw planner_error("plan line " + std::to_string(line_no) +
                            ": missing field '" + key + "'");
    return std::stoll(it->second);
}

} // namespace

OffloadPlan parse_plan(std::istream& in) {
    OffloadPlan plan;
    plan.placements.clear();
    plan.scores.clear();
    bool saw_plan = false, saw_fifo = false;
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        auto hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        std::istringstream ls(raw);
        std::string word;
        if (!(ls >> word)) continue;
        if (word == "plan") {
            auto kv = kv_fields(ls, line_no);
            if (kv.count("net")) plan.net_name = kv["net"];
            if (kv.count("mode")) plan.mode = kv["mode"];
            plan.burst_length = (int)geti(kv, "burst", line_no);
            plan.onchip_bits_used = geti(kv, "onchip_bits", line_no);
            plan.hbm_bw_words_used = geti(kv, "hbm_words", line_no);
            saw_plan = true;
        } else if (word == "fifo") {
            auto kv = kv_fields(ls, line_no);
            plan.fifo_depths.dcfifo_words = geti(kv, "dcfifo", line_no);
            plan.fifo_depths.burst_match_words = geti(kv, "burst_match", line_no);
            plan.fifo_depths.last_stage_words = geti(kv, "last_stage", line_no);
            saw_fifo = true;
        } else if (word == "layer") {
            int id;
            if (!(ls >> id) || id != (int)plan.placements.size())
                throw planner_error("plan line " + std::to_string(line_no) +
                                    ": layer records must be dense and ascending");
            auto kv = kv_fields(ls, line_no);
            Placement p;
            Score s;
            std::string place = kv.count("place") ? kv["place"] : "";
            if (place != "onchip" && place != "hbm")
                throw planner_error("plan line " + std::to_string(line_no) +
                                    ": place must be onchip or hbm");
            std::string sc = kv.count("score") ? kv["score"] : "0/1";
            auto slash = sc.find('/');
            if (slash == std::string::npos)
                throw planner_error("plan line " + std::to_string(line_no) +
                                    ": score must be <num>/<den>");
            s.num = std::stoll(sc.substr(0, slash));
            s.den = std::stoll(sc.substr(slash + 1));
            if (place == "hbm") {
                p.onchip = false;
                p.credits_init = geti(kv, "credits", line_no);
                std::string pcs = kv.count("pc") ? kv["pc"] : "";
                std::istringstream ps(pcs);
                std::string part;
                while (std::getline(ps, part, ',')) {
                    auto colon = part.find(':');
                    if (colon == std::string::npos)
                        throw planner_error("plan line " + std::to_string(line_no) +
                                            ": pc entries look like <pc>:<chains>");
                    PcSlice slice;
                    slice.pc = std::stoi(part.substr(0, colon));
                    slice.chains = std::stoi(part.substr(colon + 1));
                    p.slices.push_back(slice);
                }
                if (p.slices.empty())
                    throw planner_error("plan line " + std::to_string(line_no) +
                                        ": streamed layer has no pc assignment");
            }
            plan.placements.push_back(p);
            plan.scores.push_back(s);
        } else {
            throw planner_error("plan line " + std::to_string(line_no) +
                                ": unknown directive '" + word + "'");
        }
    }
    if (!saw_plan || !saw_fifo || plan.placements.empty())
        throw planner_error("plan text missing plan/fifo/layer records");
    return plan;
}

OffloadPlan parse_plan_string(const std::string& text) {
    std::istringstream in(text);
    return parse_plan(in);
}

OffloadPlan load_plan_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw planner_error("cannot open plan file: " + path);
    return parse_plan(f);
}

} // namespace hbmflow
