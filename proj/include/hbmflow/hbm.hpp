#pragma once
// Parameterized HBM2 pseudo-channel model: burst-length-dependent controller
// efficiency, a saturated-read latency envelope, and a traffic-generator
// harness that re-measures the model against its own configuration.

#include "hbmflow/rng.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace hbmflow {

struct hbm_error : std::runtime_error {
    explicit hbm_error(const std::string& what) : std::runtime_error(what) {}
};

enum class AccessPattern { random, sequential };

struct EffEntry {
    double read_eff = 1.0;
    double write_eff = 1.0;
};

struct LatencyEnvelope {
    double min_ns = 0.0;
    double avg_ns = 0.0;
    double max_ns = 0.0;
};

// Device + controller description.  Defaults model a two-stack HBM2 part
// with 16 pseudo-channels per stack; PC16 is disabled out of the box
// (it is hard to close timing on) leaving 31 usable channels.
struct HbmConfig {
    int n_stacks = 2;
    int pcs_per_stack = 16;
    int pc_data_bits = 256;       // controller word width
    double pc_clock_hz = 400e6;   // controller interface clock
    std::vector<int> usable_pcs;  // pc ids enabled for traffic

    // burst length -> controller acceptance fractions / latency bounds
    std::map<int, EffEntry> efficiency_table;
    std::map<int, LatencyEnvelope> latency_envelope;

    // Periodic extra-latency event (placeholder values, disabled by default).
    bool refresh_enabled = false;
    double refresh_period_ns = 3900.0;
    double refresh_stall_ns = 260.0;

    // Unsaturated accesses complete below this bound at any burst length.
    double unsaturated_max_ns = 450.0;

    HbmConfig(); // fills defaults above plus the measured default tables

    int total_pcs() const { return n_stacks * pcs_per_stack; }
};

void validate_hbm(const HbmConfig& cfg);

// Sorted burst lengths present in the efficiency table.
std::vector<int> supported_burst_lengths(const HbmConfig& cfg);

// Table lookups.  A sequential access pattern streams long linear bursts,
// so the controller behaves like its large-burst plateau at any requested
// burst length; the random pattern pays the per-burst-length cost.
double read_efficiency(const HbmConfig& cfg, int burst_length, AccessPattern pattern);
double write_efficiency(const HbmConfig& cfg, int burst_length, AccessPattern pattern);

// One latency draw in nanoseconds.  Saturated traffic follows a triangular
// distribution over (min, mode, max) with the mode placed so the mean equals
// the configured average; unsaturated traffic is uniform between min and the
// unsaturated bound (always <= that bound).
double latency_sample(const HbmConfig& cfg, int burst_length, bool saturated, Rng& rng);

double min_latency_ns(const HbmConfig& cfg, int burst_length);
double max_latency_ns(const HbmConfig& cfg, int burst_length);
double worst_case_latency_ns(const HbmConfig& cfg); // max over all burst lengths

// Aggregate interface capability: n_stacks * pcs_per_stack * word_bits/8 * clock.
double raw_bandwidth_bytes_per_s(const HbmConfig& cfg);

// Deliverable bandwidth idealization: every usable pseudo-channel hands one
// word per consumer clock with `used_bits_per_word` useful payload bits.
// (31 PCs, 240 bits, 300 MHz) -> 279e9 exactly.
double effective_bandwidth_bytes_per_s(const HbmConfig& cfg, int used_bits_per_word,
                                       double core_clock_hz);

// Acceptance throttle shared by the simulator and the measurement harness.
// Deterministic mode accepts exactly floor(eff * n) of every n request
// slots (a Bresenham accumulator); randomized mode flips a seeded coin per
// slot with the same long-run rate.
struct EffThrottle {
    double eff = 1.0;
    bool randomized = false;
    double acc = 0.0;

    bool grant(Rng& rng) {
        if (randomized) return rng.next_unit() < eff;
        acc += eff;
        if (acc >= 1.0) {
            acc -= 1.0;
            return true;
        }
        return false;
    }
};

// Adds the refresh stall to the first transaction issued after each refresh
// boundary (per controller instance).
struct RefreshTracker {
    std::int64_t last_epoch = 0;

    double extra_ns(const HbmConfig& cfg, double now_ns) {
        if (!cfg.refresh_enabled || cfg.refresh_period_ns <= 0.0) return 0.0;
        auto epoch = (std::int64_t)(now_ns / cfg.refresh_period_ns);
        if (epoch > last_epoch) {
            last_epoch = epoch;
            return cfg.refresh_stall_ns;
        }
        return 0.0;
    }
};

struct MeasuredStats {
    double efficiency = 0.0; // accepted slots / total slots
    double latency_min_ns = 0.0;
    double latency_avg_ns = 0.0;
    double latency_max_ns = 0.0;
    std::int64_t transactions = 0;
};

struct CharacterizeResult {
    MeasuredStats write; // issued first
    MeasuredStats read;  // issued after the write phase
};

// Drives a controller instance with back-to-back traffic: n_txn writes, then
// n_txn reads, issuing whenever the acceptance throttle grants a slot.
// Self-consistency: measured efficiency matches the configured table within
// a per-transaction rounding term.
CharacterizeResult characterize(const HbmConfig& cfg, std::int64_t n_txn,
                                int burst_length, AccessPattern pattern,
                                std::uint64_t seed);

// Calibration file: `# comment` lines plus rows of
//   burst,read_eff,write_eff,min_ns,avg_ns,max_ns
// Loading replaces both tables with exactly the rows given.
void save_calibration(std::ostream& os, const HbmConfig& cfg);
void load_calibration(std::istream& is, HbmConfig& cfg);
HbmConfig load_calibration_file(const std::string& path);

} // namespace hbmflow
