#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "hbmflow/hbm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

using namespace hbmflow;

TEST_CASE("default config shape") {
    HbmConfig cfg;
    CHECK(cfg.total_pcs() == 32);
    CHECK(cfg.usable_pcs.size() == 31);
    CHECK(std::find(cfg.usable_pcs.begin(), cfg.usable_pcs.end(), 16) ==
          cfg.usable_pcs.end());
    CHECK_NOTHROW(validate_hbm(cfg));
    CHECK(supported_burst_lengths(cfg) == std::vector<int>{1, 2, 4, 8, 16, 32});
}

TEST_CASE("efficiency table lookups") {
    HbmConfig cfg;
    CHECK(read_efficiency(cfg, 8, AccessPattern::random) == doctest::Approx(0.83));
    CHECK(read_efficiency(cfg, 32, AccessPattern::random) == doctest::Approx(0.93));
    CHECK(read_efficiency(cfg, 4, AccessPattern::random) == doctest::Approx(0.45));
    // a linear streaming pattern rides the large-burst plateau at any burst
    for (int bl : supported_burst_lengths(cfg))
        CHECK(read_efficiency(cfg, bl, AccessPattern::sequential) ==
              doctest::Approx(0.93));
    for (int bl : supported_burst_lengths(cfg))
        CHECK(write_efficiency(cfg, bl, AccessPattern::random) ==
              doctest::Approx(read_efficiency(cfg, bl, AccessPattern::random) - 0.15));
    CHECK_THROWS_AS(read_efficiency(cfg, 7, AccessPattern::random), hbm_error);
    // non-decreasing in burst length
    auto bls = supported_burst_lengths(cfg);
    for (size_t i = 1; i < bls.size(); ++i)
        CHECK(read_efficiency(cfg, bls[i], AccessPattern::random) >=
              read_efficiency(cfg, bls[i - 1], AccessPattern::random));
}

TEST_CASE("bandwidth arithmetic") {
    HbmConfig cfg;
    CHECK(raw_bandwidth_bytes_per_s(cfg) == 409.6e9);
    CHECK(effective_bandwidth_bytes_per_s(cfg, 240, 300e6) == 279e9); // exact
    HbmConfig all32 = cfg;
    all32.usable_pcs.clear();
    for (int pc = 0; pc < 32; ++pc) all32.usable_pcs.push_back(pc);
    CHECK(effective_bandwidth_bytes_per_s(all32, 256, 400e6) == 409.6e9);
    HbmConfig none = cfg;
    none.usable_pcs.clear();
    CHECK(effective_bandwidth_bytes_per_s(none, 240, 300e6) == 0.0);
    CHECK_THROWS_AS(effective_bandwidth_bytes_per_s(cfg, 512, 300e6), hbm_error);
}

TEST_CASE("saturated latency draws match the envelope") {
    HbmConfig cfg;
    Rng rng{1234};
    for (int bl : supported_burst_lengths(cfg)) {
        double lo = min_latency_ns(cfg, bl);
        double hi = max_latency_ns(cfg, bl);
        double sum = 0.0;
        const int n = 10000;
        for (int i = 0; i < n; ++i) {
            double s = latency_sample(cfg, bl, true, rng);
            CHECK(s >= lo);
            CHECK(s <= hi);
            sum += s;
        }
        double want = cfg.latency_envelope.at(bl).avg_ns;
        CHECK(sum / n == doctest::Approx(want).epsilon(0.05));
    }
    CHECK(max_latency_ns(cfg, 8) >= 1214.0);
    CHECK(worst_case_latency_ns(cfg) == 2200.0);
}

TEST_CASE("unsaturated latency stays under the quiet-bus bound") {
    HbmConfig cfg;
    Rng rng{99};
    for (int bl : supported_burst_lengths(cfg))
        for (int i = 0; i < 2000; ++i)
            CHECK(latency_sample(cfg, bl, false, rng) <= 450.0);
}

TEST_CASE("throttle grants floor(eff*n) of n slots") {
    Rng rng{5};
    for (double eff : {0.22, 0.45, 0.83, 0.93, 1.0}) {
        EffThrottle t{eff};
        int64_t grants = 0;
        const int64_t n = 100000;
        for (int64_t i = 0; i < n; ++i) grants += t.grant(rng) ? 1 : 0;
        CHECK(std::llabs(grants - (int64_t)(eff * n)) <= 1);
    }
    EffThrottle r{0.83, /*randomized=*/true};
    int64_t grants = 0;
    for (int64_t i = 0; i < 100000; ++i) grants += r.grant(rng) ? 1 : 0;
    CHECK((double)grants / 100000 == doctest::Approx(0.83).epsilon(0.02));
}

TEST_CASE("characterize is self-consistent with the table") {
    HbmConfig cfg;
    for (int bl : supported_burst_lengths(cfg)) {
        for (auto pattern : {AccessPattern::random, AccessPattern::sequential}) {
            CharacterizeResult r = characterize(cfg, 10000, bl, pattern, 1);
            CHECK(r.read.transactions == 10000);
            CHECK(r.write.transactions == 10000);
            CHECK(r.read.efficiency ==
                  doctest::Approx(read_efficiency(cfg, bl, pattern)).epsilon(0.02));
            CHECK(r.write.efficiency ==
                  doctest::Approx(write_efficiency(cfg, bl, pattern)).epsilon(0.02));
            CHECK(r.read.latency_min_ns <= r.read.latency_avg_ns);
            CHECK(r.read.latency_avg_ns <= r.read.latency_max_ns);
        }
    }
    CharacterizeResult bl32 = characterize(cfg, 10000, 32, AccessPattern::random, 7);
    CHECK(bl32.write.efficiency ==
          doctest::Approx(bl32.read.efficiency - 0.15).epsilon(0.03));
    CHECK(bl32.read.latency_avg_ns == doctest::Approx(400.0).epsilon(0.05));
}

TEST_CASE("characterize is deterministic in the seed") {
    HbmConfig cfg;
    CharacterizeResult a = characterize(cfg, 5000, 8, AccessPattern::random, 42);
    CharacterizeResult b = characterize(cfg, 5000, 8, AccessPattern::random, 42);
    CHECK(a.read.efficiency == b.read.efficiency);
    CHECK(a.read.latency_avg_ns == b.read.latency_avg_ns);
    CHECK(a.read.latency_max_ns == b.read.latency_max_ns);
    CHECK(a.write.latency_avg_ns == b.write.latency_avg_ns);
    CharacterizeResult c = characterize(cfg, 5000, 8, AccessPattern::random, 43);
    CHECK(a.read.latency_avg_ns != c.read.latency_avg_ns);
}

TEST_CASE("calibration files round-trip") {
    HbmConfig cfg;
    std::ostringstream out;
    save_calibration(out, cfg);
    HbmConfig loaded;
    loaded.efficiency_table.clear();
    loaded.latency_envelope.clear();
    std::istringstream in(out.str());
    load_calibration(in, loaded);
    REQUIRE(loaded.efficiency_table.size() == cfg.efficiency_table.size());
    for (auto& [bl, e] : cfg.efficiency_table) {
        CHECK(loaded.efficiency_table.at(bl).read_eff == doctest::Approx(e.read_eff));
        CHECK(loaded.efficiency_table.at(bl).write_eff == doctest::Approx(e.write_eff));
        CHECK(loaded.latency_envelope.at(bl).avg_ns ==
              doctest::Approx(cfg.latency_envelope.at(bl).avg_ns));
    }
    std::istringstream bad("8,0.83,0.68,200\n");
    HbmConfig scratch;
    CHECK_THROWS_AS(load_calibration(bad, scratch), hbm_error);
    std::istringstream dupe("8,0.8,0.7,1,2,3\n8,0.8,0.7,1,2,3\n");
    CHECK_THROWS_AS(load_calibration(dupe, scratch), hbm_error);
}

TEST_CASE("validation rejects malformed configs") {
    HbmConfig cfg;
    SUBCASE("efficiency above one") {
        cfg.efficiency_table[8].read_eff = 1.5;
        CHECK_THROWS_AS(validate_hbm(cfg), hbm_error);
    }
    SUBCASE("latency out of order") {
        cfg.latency_envelope[8].min_ns = 9999;
        CHECK_THROWS_AS(validate_hbm(cfg), hbm_error);
    }
    SUBCASE("average unreachable by a triangular shape") {
        cfg.latency_envelope[8] = {100, 110, 2000}; // mean too close to min
        CHECK_THROWS_AS(validate_hbm(cfg), hbm_error);
    }
    SUBCASE("pc id out of range") {
        cfg.usable_pcs.push_back(64);
        CHECK_THROWS_AS(validate_hbm(cfg), hbm_error);
    }
}

TEST_CASE("refresh tracker stalls once per period") {
    HbmConfig cfg;
    cfg.refresh_enabled = true;
    RefreshTracker t;
    CHECK(t.extra_ns(cfg, 100.0) == 0.0);          // still in epoch 0
    CHECK(t.extra_ns(cfg, 4000.0) == 260.0);       // crossed into epoch 1
    CHECK(t.extra_ns(cfg, 4100.0) == 0.0);         // same epoch
    CHECK(t.extra_ns(cfg, 12000.0) == 260.0);      // epoch 3
    HbmConfig off;
    RefreshTracker t2;
    CHECK(t2.extra_ns(off, 1e9) == 0.0);
}
