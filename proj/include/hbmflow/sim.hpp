#pragma once
// Cycle-level model of the weight-distribution pipeline: per-channel
// prefetchers issue burst reads against the memory model, read data crosses
// the clock boundary into a per-channel dcfifo, per-consumer burst-matching
// FIFOs, a 256->3x80 bit serializer, and deep last-stage FIFOs that feed the
// layer engines over a daisy chain.  Layers execute line by line, gated by
// weight availability (freeze), producer line dependencies and bounded
// activation buffers (starve).
//
// Two flow-control modes:
//  - credit: a prefetcher may issue a burst for a consumer only while that
//    consumer holds enough last-stage credits for the whole burst; credits
//    return as the engine consumes words.  End-to-end room is reserved at
//    issue, so a word in a shared dcfifo can always drain: head-of-line
//    blocking cannot wedge the channel.
//  - ready_valid: no credits; the prefetcher only reserves dcfifo space for
//    the burst and everything downstream is plain backpressure.  A consumer
//    whose burst-match FIFO stays full parks its words at the dcfifo head
//    and starves every other consumer on the channel.
//
// The model is serial and deterministic for a given configuration and seed.

#include "hbmflow/bounds.hpp"
#include "hbmflow/hbm.hpp"
#include "hbmflow/network.hpp"
#include "hbmflow/planner.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hbmflow {

struct sim_error : std::runtime_error {
    explicit sim_error(const std::string& what) : std::runtime_error(what) {}
};

enum class FlowMode { credit, ready_valid };

struct SimConfig {
    double core_clock_hz = 300e6;
    double hbm_clock_hz = 400e6; // must match the memory model and be 4:3 vs core
    int n_images = 8;
    FlowMode flow_mode = FlowMode::credit;
    // Engines stall when any of their last-stage slices drops below
    // freeze_threshold_mult * (words consumed per cycle from that slice).
    // Must be >= 1 so a granted cycle can never underflow a FIFO.
    int freeze_threshold_mult = 2;
    // Engines hang off the weight stream in groups of this size; a slice
    // feeding p chains sees its words land ceil(p/group) cycles late.
    int daisy_chain_group = 6;
    std::uint64_t seed = 1;
    // Watchdog window in core cycles; 0 picks 4x the worst-case read
    // latency of the plan's burst length.
    std::int64_t deadlock_window_cycles = 0;
    bool infinite_bw = false;        // bypass the memory path entirely
    bool saturated = true;           // latency regime for draws
    bool randomized_accept = false;  // efficiency throttle flips coins
    AccessPattern pattern = AccessPattern::random;
    std::string trace_path;          // non-empty: write an event trace CSV
};

struct DeadlockReport {
    std::int64_t cycle = 0;
    std::vector<std::string> full_fifos;   // at capacity with a blocked head
    std::vector<std::string> empty_fifos;  // starved while their layer waits
    int head_of_line_owner = -1;  // layer owning the first blocked dcfifo head
};

struct SimLayerStats {
    int layer_id = 0;
    std::int64_t busy_cycles = 0;
    std::int64_t freeze_cycles = 0;  // runnable but weight-starved
    std::int64_t starve_cycles = 0;  // blocked on inputs or downstream room
    std::int64_t weight_words_consumed = 0;
    std::int64_t lines_produced = 0;
    std::int64_t freeze_episodes = 0; // distinct busy->freeze transitions
    std::int64_t longest_freeze = 0;  // cycles of the worst single episode
};

struct SimPcStats {
    int pc = 0;
    std::int64_t bursts_issued = 0;
    std::int64_t words_delivered = 0;  // 256-bit words into the dcfifo
    double utilization = 0.0;          // words_delivered / elapsed core cycles
};

struct SimFifoStats {
    std::string name;
    std::int64_t min_occ = 0;
    std::int64_t max_occ = 0;
    double mean_occ = 0.0;
};

struct SimReport {
    double throughput_im_s = 0.0;    // n_images * core_clock / total_cycles
    double steady_state_im_s = 0.0;  // marginal rate over the back half
    std::int64_t total_cycles = 0;   // core cycles until the last line
    int images_completed = 0;
    double roofline_im_s = 0.0;      // analytic ceiling this run was checked against
    std::vector<SimLayerStats> layers;
    std::vector<SimPcStats> pcs;
    std::vector<SimFifoStats> fifos;
    std::optional<DeadlockReport> deadlock;
};

// Runs the pipeline until every layer has produced its last line, a
// deadlock is detected (reported, not thrown), or an internal invariant
// fails (thrown).  The finished report is checked against the analytic
// roofline; a simulated throughput above it is an internal error.
SimReport simulate(const NetworkModel& net, const OffloadPlan& plan,
                   const HbmConfig& hbm, const SimConfig& cfg = {});

std::string serialize_report(const SimReport& r);

// Three-layer chain streaming from either one shared channel or one channel
// per layer: the classic head-of-line demonstration.  With a shared channel
// the ready_valid mode wedges (the third layer owns the dcfifo head while
// the first starves); credits or private channels complete.
SimReport run_shared_channel_scenario(FlowMode mode, bool shared_pc,
                                      std::uint64_t seed = 1);

} // namespace hbmflow
