#include "hbmflow/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace hbmflow {

namespace {

const char* kind_name(BottleneckKind k) {
    return k == BottleneckKind::hbm_bandwidth ? "hbm-bandwidth" : "on-chip-compute";
}

} // namespace

std::int64_t layer_cycles_per_line(const LayerSpec& l) {
    const std::int64_t words = l.weight_count(); // 8-bit weights, 10 per 80-bit word
    const std::int64_t denom = 10ll * l.par();
    return (words + denom - 1) / denom;
}

double hbm_throughput_bound(const NetworkModel& net, const HbmConfig& hbm,
                            double core_clock_hz) {
    const TrafficSummary t = weight_traffic_per_image(net);
    if (t.total_bytes <= 0)
        throw bounds_error("network '" + net.name + "' has zero weight traffic");
    const double bw = effective_bandwidth_bytes_per_s(
        hbm, PlannerConstants{}.chains_per_pc * PlannerConstants{}.weight_word_bits,
        core_clock_hz);
    return bw / (double)t.total_bytes;
}

ComputeBound compute_throughput_bound(const NetworkModel& net, const OffloadPlan& plan,
                                      double core_clock_hz) {
    if (net.layers.empty())
        throw bounds_error("empty network");
    ComputeBound cb;
    cb.cycles_per_image.reserve(net.layers.size());
    std::int64_t worst = 0;
    for (const auto& l : net.layers) {
        const std::int64_t cyc = (std::int64_t)l.out_height * layer_cycles_per_line(l);
        cb.cycles_per_image.push_back(cyc);
        if (cyc > worst) {
            worst = cyc;
            cb.bottleneck_layer = l.id;
        }
    }
    cb.im_s = core_clock_hz / (double)worst;
    if ((std::size_t)cb.bottleneck_layer < plan.placements.size())
        cb.bottleneck_onchip = plan.placements[cb.bottleneck_layer].onchip;
    return cb;
}

RooflineReport roofline(const NetworkModel& net, const OffloadPlan& plan,
                        const HbmConfig& hbm, double core_clock_hz) {
    if (plan.placements.size() != net.layers.size())
        throw bounds_error("plan does not cover network '" + net.name + "'");
    RooflineReport r;
    r.hbm_bound_im_s = hbm_throughput_bound(net, hbm, core_clock_hz);

    const double eff = read_efficiency(hbm, plan.burst_length, AccessPattern::random);

    std::int64_t worst_compute = 0;
    double worst_bound = 0.0;
    bool have_worst = false;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& l = net.layers[i];
        const Placement& p = plan.placements[i];
        LayerBound lb;
        lb.layer_id = l.id;
        lb.onchip = p.onchip;
        const std::int64_t per_line = layer_cycles_per_line(l);
        lb.compute_cycles = (std::int64_t)l.out_height * per_line;
        if (lb.compute_cycles > worst_compute) worst_compute = lb.compute_cycles;
        if (!p.onchip) {
            // A slice with c chains needs per_line*c words per output line
            // and can never receive more than its whole channel supplies:
            // 3*eff words per core cycle.  The slowest slice paces the
            // layer; for a full slice (3 chains) this is per_line/eff.
            // Delivery is continuous across lines, so no per-line rounding.
            double worst_line = 0.0;
            for (const auto& s : p.slices)
                worst_line =
                    std::max(worst_line, (double)per_line * s.chains / (3.0 * eff));
            lb.delivery_cycles = (double)l.out_height * worst_line;
        }
        const double cap = std::max((double)lb.compute_cycles, lb.delivery_cycles);
        lb.bound_im_s = core_clock_hz / cap;
        if (!have_worst || lb.bound_im_s < worst_bound) {
            have_worst = true;
            worst_bound = lb.bound_im_s;
            r.bottleneck_layer = l.id;
            r.bottleneck_kind = (lb.delivery_cycles > lb.compute_cycles)
                                    ? BottleneckKind::hbm_bandwidth
                                    : BottleneckKind::onchip_compute;
        }
        r.per_layer.push_back(lb);
    }
    r.compute_bound_im_s = core_clock_hz / (double)worst_compute;
    r.unlimited_hbm_im_s = r.compute_bound_im_s;
    // hbm_bound_im_s is the stream-everything reference; the plan's actual
    // ceiling is the worst per-layer cap (channel shares already account
    // for every byte the plan moves).
    r.overall_im_s = worst_bound;
    return r;
}

std::string roofline_text(const RooflineReport& r) {
    std::ostringstream os;
    os << "hbm_bound_im_s " << r.hbm_bound_im_s << "\n";
    os << "compute_bound_im_s " << r.compute_bound_im_s << "\n";
    os << "overall_im_s " << r.overall_im_s << "\n";
    os << "unlimited_hbm_im_s " << r.unlimited_hbm_im_s << "\n";
    os << "bottleneck_layer " << r.bottleneck_layer << "\n";
    os << "bottleneck_kind " << kind_name(r.bottleneck_kind) << "\n";
    return os.str();
}

std::string roofline_csv(const RooflineReport& r, const NetworkModel& net) {
    std::ostringstream os;
    os << "layer,name,place,compute_cycles,delivery_cycles,bound_im_s\n";
    for (const auto& lb : r.per_layer) {
        os << lb.layer_id << "," << net.layer(lb.layer_id).name << ","
           << (lb.onchip ? "onchip" : "hbm") << "," << lb.compute_cycles << ","
           << lb.delivery_cycles << "," << lb.bound_im_s << "\n";
    }
    return os.str();
}

} // namespace hbmflow
