#include "hbmflow/hbm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace hbmflow {

HbmConfig::HbmConfig() {
    for (int pc = 0; pc < total_pcs(); ++pc)
        if (pc != 16) usable_pcs.push_back(pc);

    // Measured controller acceptance rates under random traffic.  Writes run
    // about 15 percentage points below reads across the table.
    efficiency_table = {
        {1, {0.22, 0.07}},  {2, {0.30, 0.15}},  {4, {0.45, 0.30}},
        {8, {0.83, 0.68}},  {16, {0.88, 0.73}}, {32, {0.93, 0.78}},
    };
    // Saturated read latency envelope (ns).  Short bursts thrash the
    // controller and can stall a request for microseconds; long bursts
    // amortize turnaround and tighten the tail.
    latency_envelope = {
        {1, {200.0, 900.0, 2200.0}}, {2, {200.0, 800.0, 1900.0}},
        {4, {200.0, 700.0, 1600.0}}, {8, {200.0, 560.0, 1220.0}},
        {16, {200.0, 480.0, 1000.0}}, {32, {200.0, 400.0, 800.0}},
    };
}

void validate_hbm(const HbmConfig& cfg) {
    if (cfg.n_stacks <= 0 || cfg.pcs_per_stack <= 0)
        throw hbm_error("stack/pc counts must be positive");
    if (cfg.pc_data_bits <= 0 || cfg.pc_data_bits % 8 != 0)
        throw hbm_error("pc_data_bits must be a positive multiple of 8");
    if (cfg.pc_clock_hz <= 0.0) throw hbm_error("pc_clock_hz must be positive");
    for (int pc : cfg.usable_pcs)
        if (pc < 0 || pc >= cfg.total_pcs())
            throw hbm_error("usable pc id " + std::to_string(pc) + " out of range");
    if (cfg.efficiency_table.empty()) throw hbm_error("efficiency table is empty");
    for (auto& [bl, e] : cfg.efficiency_table) {
        if (bl <= 0) throw hbm_error("burst length must be positive");
        if (!(e.read_eff > 0.0 && e.read_eff <= 1.0) ||
            !(e.write_eff > 0.0 && e.write_eff <= 1.0))
            throw hbm_error("efficiency out of (0,1] at burst " + std::to_string(bl));
        if (!cfg.latency_envelope.count(bl))
            throw hbm_error("no latency envelope for burst " + std::to_string(bl));
    }
    for (auto& [bl, l] : cfg.latency_envelope) {
        if (!(l.min_ns <= l.avg_ns && l.avg_ns <= l.max_ns) || l.min_ns < 0.0)
            throw hbm_error("latency envelope not ordered at burst " + std::to_string(bl));
        // The triangular mode 3*avg - min - max must stay inside [min, max].
        double mode = 3.0 * l.avg_ns - l.min_ns - l.max_ns;
        if (mode < l.min_ns - 1e-9 || mode > l.max_ns + 1e-9)
            throw hbm_error("avg_ns not reachable by a triangular distribution at burst " +
                            std::to_string(bl));
    }
}

std::vector<int> supported_burst_lengths(const HbmConfig& cfg) {
    std::vector<int> bls;
    for (auto& [bl, e] : cfg.efficiency_table) bls.push_back(bl);
    return bls; // std::map iterates in key order
}

namespace {

const EffEntry& eff_entry(const HbmConfig& cfg, int burst_length) {
    auto it = cfg.efficiency_table.find(burst_length);
    if (it == cfg.efficiency_table.end())
        throw hbm_error("unsupported burst length " + std::to_string(burst_length));
    return it->second;
}

const LatencyEnvelope& lat_entry(const HbmConfig& cfg, int burst_length) {
    auto it = cfg.latency_envelope.find(burst_length);
    if (it == cfg.latency_envelope.end())
        throw hbm_error("no latency envelope for burst length " + std::to_string(burst_length));
    return it->second;
}

double plateau(const HbmConfig& cfg, bool write) {
    double best = 0.0;
    for (auto& [bl, e] : cfg.efficiency_table)
        best = std::max(best, write ? e.write_eff : e.read_eff);
    return best;
}

} // namespace

double read_efficiency(const HbmConfig& cfg, int burst_length, AccessPattern pattern) {
    if (pattern == AccessPattern::sequential) {
        eff_entry(cfg, burst_length); // still reject unsupported burst lengths
        return plateau(cfg, false);
    }
    return eff_entry(cfg, burst_length).read_eff;
}

double write_efficiency(const HbmConfig& cfg, int burst_length, AccessPattern pattern) {
    if (pattern == AccessPattern::sequential) {
        eff_entry(cfg, burst_length);
        return plateau(cfg, true);
    }
    return eff_entry(cfg, burst_length).write_eff;
}

double latency_sample(const HbmConfig& cfg, int burst_length, bool saturated, Rng& rng) {
    const LatencyEnvelope& l = lat_entry(cfg, burst_length);
    if (!saturated) {
        double hi = cfg.unsaturated_max_ns;
        double lo = std::min(l.min_ns, hi);
        return lo + (hi - lo) * rng.next_unit();
    }
    double mode = 3.0 * l.avg_ns - l.min_ns - l.max_ns;
    mode = std::clamp(mode, l.min_ns, l.max_ns);
    return triangular(l.min_ns, mode, l.max_ns, rng.next_unit());
}

double min_latency_ns(const HbmConfig& cfg, int burst_length) {
    return lat_entry(cfg, burst_length).min_ns;
}

double max_latency_ns(const HbmConfig& cfg, int burst_length) {
    return lat_entry(cfg, burst_length).max_ns;
}

double worst_case_latency_ns(const HbmConfig& cfg) {
    double worst = 0.0;
    for (auto& [bl, l] : cfg.latency_envelope) worst = std::max(worst, l.max_ns);
    return worst;
}

double raw_bandwidth_bytes_per_s(const HbmConfig& cfg) {
    return (double)cfg.n_stacks * cfg.pcs_per_stack * (cfg.pc_data_bits / 8) *
           cfg.pc_clock_hz;
}

double effective_bandwidth_bytes_per_s(const HbmConfig& cfg, int used_bits_per_word,
                                       double core_clock_hz) {
    if (used_bits_per_word > cfg.pc_data_bits)
        throw hbm_error("used_bits_per_word exceeds pc_data_bits");
    if (used_bits_per_word % 8 != 0)
        throw hbm_error("used_bits_per_word must be a multiple of 8");
    return (double)cfg.usable_pcs.size() * (used_bits_per_word / 8) * core_clock_hz;
}

namespace {

MeasuredStats run_phase(const HbmConfig& cfg, std::int64_t n_txn, int burst_length,
                        double eff, Rng& rng) {
    MeasuredStats st;
    st.latency_min_ns = 1e300;
    EffThrottle throttle{eff};
    double sum = 0.0;
    std::int64_t slots = 0;
    while (st.transactions < n_txn) {
        ++slots;
        if (!throttle.grant(rng)) continue;
        double lat = latency_sample(cfg, burst_length, /*saturated=*/true, rng);
        st.latency_min_ns = std::min(st.latency_min_ns, lat);
        st.latency_max_ns = std::max(st.latency_max_ns, lat);
        sum += lat;
        ++st.transactions;
    }
    st.efficiency = (double)st.transactions / (double)slots;
    st.latency_avg_ns = sum / (double)st.transactions;
    return st;
}

} // namespace

CharacterizeResult characterize(const HbmConfig& cfg, std::int64_t n_txn,
                                int burst_length, AccessPattern pattern,
                                std::uint64_t seed) {
    if (n_txn < 1) throw hbm_error("n_txn must be >= 1");
    validate_hbm(cfg);
    CharacterizeResult r;
    Rng rng{seed, 0x6368617261637433ull}; // harness stream tag
    r.write = run_phase(cfg, n_txn, burst_length,
                        write_efficiency(cfg, burst_length, pattern), rng);
    r.read = run_phase(cfg, n_txn, burst_length,
                       read_efficiency(cfg, burst_length, pattern), rng);
    return r;
}

void save_calibration(std::ostream& os, const HbmConfig& cfg) {
    os << "# burst,read_eff,write_eff,min_ns,avg_ns,max_ns\n";
    for (auto& [bl, e] : cfg.efficiency_table) {
        const LatencyEnvelope& l = cfg.latency_envelope.at(bl);
        os << bl << ',' << e.read_eff << ',' << e.write_eff << ',' << l.min_ns
           << ',' << l.avg_ns << ',' << l.max_ns << '\n';
    }
}

void load_calibration(std::istream& is, HbmConfig& cfg) {
    std::map<int, EffEntry> eff;
    std::map<int, LatencyEnvelope> lat;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ss(line);
        int bl = 0;
        EffEntry e;
        LatencyEnvelope l;
        char c1, c2, c3, c4, c5;
        if (!(ss >> bl >> c1 >> e.read_eff >> c2 >> e.write_eff >> c3 >> l.min_ns >>
              c4 >> l.avg_ns >> c5 >> l.max_ns) ||
            c1 != ',' || c2 != ',' || c3 != ',' || c4 != ',' || c5 != ',')
            throw hbm_error("calibration line " + std::to_string(line_no) +
                            ": expected burst,read_eff,write_eff,min_ns,avg_ns,max_ns");
        if (eff.count(bl))
            throw hbm_error("calibration line " + std::to_string(line_no) +
                            ": duplicate burst length " + std::to_string(bl));
        eff[bl] = e;
        lat[bl] = l;
    }
    if (eff.empty()) throw hbm_error("calibration file has no rows");
    HbmConfig next = cfg;
    next.efficiency_table = std::move(eff);
    next.latency_envelope = std::move(lat);
    validate_hbm(next);
    cfg = std::move(next);
}

HbmConfig load_calibration_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw hbm_error("cannot open calibration file: " + path);
    HbmConfig cfg;
    load_calibration(f, cfg);
    return cfg;
}

} // namespace hbmflow
