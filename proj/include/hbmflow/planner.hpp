#pragma once
// Offload planner: per-layer weight placement (on-chip vs HBM), greedy
// bandwidth-budgeted selection, clockwise pseudo-channel assignment, FIFO
// sizing, and burst-length selection.

#include "hbmflow/hbm.hpp"
#include "hbmflow/network.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace hbmflow {

struct planner_error : std::runtime_error {
    explicit planner_error(const std::string& what) : std::runtime_error(what) {}
};

// Plan cannot satisfy the on-chip budget (or, in forced streaming mode, the
// channel bandwidth); carries the shortfall for diagnostics. `unit` names
// what the numbers count ("bits" or "words").
struct planner_infeasible : planner_error {
    std::int64_t required = 0;
    std::int64_t budget = 0;
    std::string unit = "bits";
    planner_infeasible(const std::string& what, std::int64_t required_,
                       std::int64_t budget_, std::string unit_ = "bits")
        : planner_error(what), required(required_), budget(budget_),
          unit(std::move(unit_)) {}
    std::int64_t shortfall() const { return required - budget; }
};

struct PlannerConstants {
    std::int64_t m20k_bits = 20480;
    int replacement_m20ks = 2;      // M20Ks forming the last-stage FIFO that
                                    // replaces an offloaded layer's weight RAM
    int chains_width_divisor = 18;  // output columns served per weight copy
    int weight_word_bits = 80;      // one tensor-chain word per cycle
    int chains_per_pc = 3;          // floor(240 usable bits / 80)
    std::int64_t last_stage_depth_words = 512; // per chain, "512 word x 40 bit" x2
    int min_plan_burst = 8;         // smallest burst a plan may configure; the
                                    // shorter bursts exist only for controller
                                    // characterization
};

// Desirability of streaming a layer's weights from memory: M20K blocks freed
// per unit of pseudo-channel bandwidth consumed.  Kept as an exact rational
// so ordering never depends on floating-point rounding.
//   numerator   = (ceil(raw_bits/20480) - 2) * ceil(out_width/18), clamped at 0
//   denominator = p_i * p_o * 80
struct Score {
    std::int64_t num = 0;
    std::int64_t den = 1;
    double value() const { return (double)num / (double)den; }
    bool is_zero() const { return num == 0; }
};
inline bool operator<(const Score& a, const Score& b) {
    return a.num * b.den < b.num * a.den;
}
inline bool operator==(const Score& a, const Score& b) {
    return a.num * b.den == b.num * a.den;
}

Score layer_score(const LayerSpec& l, const PlannerConstants& consts);

// One pseudo-channel's share of a layer's weight streams.
struct PcSlice {
    int pc = 0;
    int chains = 0; // how many of the layer's p_i*p_o chains this PC feeds
};

struct Placement {
    bool onchip = true;
    std::vector<PcSlice> slices;    // empty for on-chip layers
    std::int64_t credits_init = 0;  // 80-bit words of last-stage capacity, all chains
    bool spans_pcs() const { return slices.size() > 1; }
};

struct FifoSpec {
    std::int64_t dcfifo_words = 0;      // 256-bit words, per pseudo-channel
    std::int64_t burst_match_words = 0; // 256-bit words, per consumer
    std::int64_t last_stage_words = 0;  // 80-bit words, per chain
};

struct OffloadPlan {
    std::string net_name;
    std::string mode = "hybrid"; // hybrid | all-hbm (how placements were chosen)
    int burst_length = 8;
    std::vector<Placement> placements; // indexed by layer id
    std::vector<Score> scores;         // indexed by layer id
    FifoSpec fifo_depths;
    std::int64_t onchip_bits_used = 0;
    std::int64_t hbm_bw_words_used = 0; // sum of p_i*p_o over offloaded layers

    int n_offloaded() const {
        int n = 0;
        for (auto& p : placements) n += p.onchip ? 0 : 1;
        return n;
    }
};

// The greedy selection loop on its own: walk layers in descending-score
// order (ties broken by ascending id), offloading any positive-score layer
// whose p_i*p_o fits in the remaining word budget.  Returns offloaded ids.
std::vector<int> greedy_offload(const std::vector<Score>& scores,
                                const std::vector<std::int64_t>& par_words,
                                std::int64_t free_bw_words);

// FIFO sizing from the latency the last-stage buffer must ride through:
// last-stage depth = next power of two >= ceil(latency * clock); DCFIFO and
// burst-match buffers are double-buffered bursts.
FifoSpec size_fifos(int burst_length, double core_clock_hz, double worst_latency_ns,
                    const PlannerConstants& consts);

// Full hybrid planning pipeline: score, greedy-select under the bandwidth
// budget (3 words per usable PC), assign pseudo-channels, size FIFOs, then
// check the residual on-chip footprint against the budget.  The greedy loop
// itself never consults the budget; feasibility is a post-pass.
OffloadPlan plan_offload(const NetworkModel& net, const HbmConfig& hbm,
                         std::int64_t onchip_budget_bits,
                         const PlannerConstants& consts = {},
                         int burst_length = 8, double core_clock_hz = 300e6);

// Forced streaming mode: every layer reads its weights from memory each
// image, including layers the score would never pick.  Infeasible when the
// total chain demand exceeds the pseudo-channel budget.
OffloadPlan plan_all_hbm(const NetworkModel& net, const HbmConfig& hbm,
                         const PlannerConstants& consts = {},
                         int burst_length = 8, double core_clock_hz = 300e6);

// Clockwise channel walk: ids 0..15 then 31 down to 16, skipping disabled
// channels, packing up to chains_per_pc chains before advancing.  Offloaded
// layers are visited in pipeline order; a layer that does not fit in the
// current channel's remainder spills into the next (and is flagged as
// spanning).  Also derives per-layer initial credits from the last-stage
// capacity.  Deterministic.
void assign_pseudo_channels(OffloadPlan& plan, const NetworkModel& net,
                            const HbmConfig& hbm, const PlannerConstants& consts);

// Smallest burst length whose simulated throughput is within 0.5% of the
// best candidate (smaller bursts need smaller buffers).
int select_burst_length(const std::map<int, double>& throughput_by_bl);

// Structural validation of a plan against its network and device: per-PC
// chain loads, credit formula, budget arithmetic.  Throws planner_error.
void check_plan(const OffloadPlan& plan, const NetworkModel& net,
                const HbmConfig& hbm, const PlannerConstants& consts = {});

// Plan text round-trip (one record per layer; see serialize_plan).
std::string serialize_plan(const OffloadPlan& plan);
OffloadPlan parse_plan(std::istream& in);
OffloadPlan parse_plan_string(const std::string& text);
OffloadPlan load_plan_file(const std::string& path);

} // namespace hbmflow
