#pragma once
// Analytic throughput bounds: aggregate bandwidth bound (per-image traffic
// against deliverable bandwidth), per-layer compute bounds, the roofline
// combining both, and the uncapped-bandwidth projection.

#include "hbmflow/hbm.hpp"
#include "hbmflow/network.hpp"
#include "hbmflow/planner.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hbmflow {

struct bounds_error : std::runtime_error {
    explicit bounds_error(const std::string& what) : std::runtime_error(what) {}
};

enum class BottleneckKind { hbm_bandwidth, onchip_compute };

struct LayerBound {
    int layer_id = 0;
    bool onchip = true;
    // Engine-limited cycles to process one image: out_height * cycles/line,
    // where a line costs ceil(k_h*k_w*c_i*c_o / (10*p_i*p_o)) cycles (one
    // 80-bit word feeds ten 8-bit weights).
    std::int64_t compute_cycles = 0;
    // Delivery-limited cycles for streamed layers: a slice can never
    // receive more than its whole channel supplies (3*eff weight words per
    // core cycle), so a full 3-chain slice gets at most eff words per
    // chain-cycle.  Zero for on-chip layers (never delivery-capped).
    double delivery_cycles = 0.0;
    double bound_im_s = 0.0; // core_clock / max(compute, delivery)
};

struct ComputeBound {
    double im_s = 0.0;
    std::vector<std::int64_t> cycles_per_image; // indexed by layer id
    int bottleneck_layer = 0;
    bool bottleneck_onchip = true;
};

struct RooflineReport {
    double hbm_bound_im_s = 0.0;     // stream-everything reference: bw / traffic
    double compute_bound_im_s = 0.0; // engine-only limit (no delivery caps)
    double overall_im_s = 0.0;       // worst per-layer cap under this plan
    double unlimited_hbm_im_s = 0.0; // delivery caps removed, same machine
    std::vector<LayerBound> per_layer;
    int bottleneck_layer = 0;
    BottleneckKind bottleneck_kind = BottleneckKind::onchip_compute;
};

// Cycles one engine needs per output line.
std::int64_t layer_cycles_per_line(const LayerSpec& l);

// Aggregate bound: every usable channel hands 240 payload bits per core
// cycle, divided by the per-image weight traffic of streaming every layer.
double hbm_throughput_bound(const NetworkModel& net, const HbmConfig& hbm,
                            double core_clock_hz = 300e6);

// Engine-only pipeline bound; the slowest layer paces the pipeline.
ComputeBound compute_throughput_bound(const NetworkModel& net, const OffloadPlan& plan,
                                      double core_clock_hz);

// Full roofline for a planned network.  Streamed layers are additionally
// capped by their channel share at the plan's burst-length efficiency.
RooflineReport roofline(const NetworkModel& net, const OffloadPlan& plan,
                        const HbmConfig& hbm, double core_clock_hz = 300e6);

std::string roofline_text(const RooflineReport& r);
std::string roofline_csv(const RooflineReport& r, const NetworkModel& net);

} // namespace hbmflow
