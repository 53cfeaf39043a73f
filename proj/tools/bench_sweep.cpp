// Times a burst-length/seed sweep twice -- serial reference, then the
// OpenMP path -- and checks both produce identical reports.
#include "hbmflow/batch.hpp"
#include "hbmflow/network.hpp"
#include "hbmflow/planner.hpp"
#include "hbmflow/sim.hpp"

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

using namespace hbmflow;
using clk = std::chrono::steady_clock;

namespace {

struct Point {
    int bl;
    std::uint64_t seed;
};

std::vector<std::string> run_sweep(const std::vector<Point>& pts, bool parallel,
                                   double* seconds) {
    std::vector<std::string> reports(pts.size());
    auto job = [&](std::size_t i) {
        NetworkModel net = builtin_network("resnet18");
        apply_parallelism_preset(net, "hybrid");
        HbmConfig hbm;
        OffloadPlan plan =
            plan_offload(net, hbm, 140LL * 1000 * 1000, {}, pts[i].bl);
        SimConfig cfg;
        cfg.n_images = 4;
        cfg.seed = pts[i].seed;
        reports[i] = serialize_report(simulate(net, plan, hbm, cfg));
    };
    const auto t0 = clk::now();
    if (parallel)
        run_indexed_parallel(pts.size(), job);
    else
        run_indexed_serial(pts.size(), job);
    *seconds = std::chrono::duration<double>(clk::now() - t0).count();
    return reports;
}

} // namespace

int main() {
    std::vector<Point> pts;
    for (int bl : {8, 16, 32})
        for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull}) pts.push_back({bl, seed});

    double serial_s = 0.0, parallel_s = 0.0;
    const auto ref = run_sweep(pts, false, &serial_s);
    const auto par = run_sweep(pts, true, &parallel_s);

    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < ref.size(); ++i)
        if (ref[i] != par[i]) ++mismatches;

    std::printf("sweep points      %zu\n", pts.size());
    std::printf("threads available %d\n", effective_jobs(0));
    std::printf("serial            %.3f s\n", serial_s);
    std::printf("parallel          %.3f s\n", parallel_s);
    std::printf("speedup           %.2fx\n", serial_s / parallel_s);
    std::printf("report mismatches %zu\n", mismatches);
    return mismatches == 0 ? 0 : 1;
}
