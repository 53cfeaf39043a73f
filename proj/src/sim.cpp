#include "hbmflow/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace hbmflow {

namespace {

constexpr std::int64_t kUnbounded = std::numeric_limits<std::int64_t>::max() / 4;

struct FifoTrack {
    std::int64_t mn = std::numeric_limits<std::int64_t>::max();
    std::int64_t mx = 0;
    std::int64_t sum = 0;
    std::int64_t n = 0;
    void sample(std::int64_t occ) {
        mn = std::min(mn, occ);
        mx = std::max(mx, occ);
        sum += occ;
        ++n;
    }
    SimFifoStats finish(std::string name) const {
        SimFifoStats s;
        s.name = std::move(name);
        s.min_occ = n ? mn : 0;
        s.max_occ = mx;
        s.mean_occ = n ? (double)sum / (double)n : 0.0;
        return s;
    }
};

struct Txn {
    int slice = 0;
    int words256 = 0;
    std::int64_t arrive_unit = 0;
};

struct SliceRt {
    int layer = 0; // index into layer array (== layer id)
    int pc = 0;
    int chains = 0;
    std::int64_t last_cap = 0; // 80-bit words
    std::int64_t last_occ = 0;
    std::int64_t credits = 0;
    std::int64_t bm_cap = 0; // 256-bit words
    std::int64_t bm_occ = 0;
    std::deque<std::pair<std::int64_t, int>> landing; // (core cycle, 80-bit words)
    std::int64_t landing_words = 0;
    std::int64_t consumed = 0;  // 80-bit words eaten by the engine
    std::int64_t discarded = 0; // words dropped once the layer finished
    FifoTrack bm_track, last_track;
};

struct PcRt {
    int pc = 0;
    std::vector<int> slices;   // slice indices in assignment order
    std::vector<int> rotation; // issue order, one slot per chain so a slice's
                               // share of the channel matches its chain count
    std::size_t rr = 0;
    std::deque<Txn> in_flight;
    std::deque<int> arrived; // slice index per 256-bit word, in order
    std::deque<int> dcfifo;  // slice index per 256-bit word
    std::int64_t dc_cap = 0;
    std::int64_t pending256 = 0; // ready_valid: reserved dcfifo words
    EffThrottle throttle;
    Rng rng{0};
    RefreshTracker refresh;
    std::int64_t last_arrive_unit = 0;
    std::int64_t bursts = 0;
    std::int64_t delivered = 0; // 256-bit words into the dcfifo
    FifoTrack dc_track;
};

struct InEdge {
    int src = 0;
    std::vector<int> need; // need[j]: last producer line required for out line j
};

struct OutEdge {
    int dst = 0;
    int in_edge = 0;             // index into dst's ins for this producer
    std::int64_t cap_lines = 0;  // producer lines of run-ahead allowed
};

struct LayerRt {
    const LayerSpec* l = nullptr;
    bool onchip = true;
    std::int64_t c_line = 0; // engine cycles per output line
    int p = 1;
    int daisy_delay = 1;
    std::vector<int> slices;
    std::vector<InEdge> ins;
    std::vector<OutEdge> outs;
    int img = 0;
    int line = 0;
    std::int64_t line_cyc = 0;
    bool done = false;
    std::int64_t glines = 0;    // lines produced across all images
    std::int64_t cur_freeze = 0; // length of the freeze episode in progress
    SimLayerStats stats;
};

void sim_check(bool ok, const char* what) {
    if (!ok) throw sim_error(std::string("invariant violated: ") + what);
}

// Last producer-local output line needed before the consumer can compute
// its output line j.  r producer lines collapse into one consumer input
// line (r = producer extent / consumer input extent).
int producer_line_needed(const LayerSpec& prod, const LayerSpec& cons, int j) {
    const int r = prod.out_height / cons.in_height;
    const int pad = (cons.kernel_h - 1) / 2;
    int last_in = j * cons.stride - pad + cons.kernel_h - 1;
    last_in = std::max(0, std::min(cons.in_height - 1, last_in));
    return std::min(prod.out_height - 1, (last_in + 1) * r - 1);
}

} // namespace

SimReport simulate(const NetworkModel& net, const OffloadPlan& plan,
                   const HbmConfig& hbm, const SimConfig& cfg) {
    check_plan(plan, net, hbm);
    if (cfg.n_images < 1) throw sim_error("n_images must be >= 1");
    if (cfg.core_clock_hz <= 0.0) throw sim_error("core clock must be positive");
    if (cfg.freeze_threshold_mult < 1)
        throw sim_error("freeze threshold must cover one cycle of consumption");
    if (cfg.daisy_chain_group < 1) throw sim_error("daisy chain group must be >= 1");
    // Unified event clock: core ticks every 4 units, memory ticks every 3.
    const double unit_hz = 4.0 * cfg.core_clock_hz;
    if (std::abs(cfg.hbm_clock_hz - hbm.pc_clock_hz) > 1e-3 * cfg.hbm_clock_hz)
        throw sim_error("configured memory clock disagrees with the memory model");
    if (std::abs(unit_hz - 3.0 * cfg.hbm_clock_hz) > 1e-3 * unit_hz)
        throw sim_error("core and channel clocks must be in 3:4 ratio");

    const int n_layers = (int)net.layers.size();
    const int bl = plan.burst_length;
    const int burst_words80 = 3 * bl;
    const double eff = cfg.infinite_bw
                           ? 1.0
                           : read_efficiency(hbm, bl, cfg.pattern);

    // --- build runtime state ---------------------------------------------
    std::vector<LayerRt> layers(n_layers);
    std::vector<SliceRt> slices;
    std::vector<PcRt> pcs;
    std::vector<int> pc_index(hbm.n_stacks * hbm.pcs_per_stack, -1);

    for (int i = 0; i < n_layers; ++i) {
        LayerRt& L = layers[i];
        L.l = &net.layers[i];
        L.onchip = plan.placements[i].onchip;
        L.c_line = layer_cycles_per_line(*L.l);
        L.p = L.l->par();
        L.daisy_delay = (L.p + cfg.daisy_chain_group - 1) / cfg.daisy_chain_group;
        L.stats.layer_id = L.l->id;
        if (L.onchip || cfg.infinite_bw) continue;
        for (const PcSlice& ps : plan.placements[i].slices) {
            SliceRt s;
            s.layer = i;
            s.pc = ps.pc;
            s.chains = ps.chains;
            s.last_cap = plan.fifo_depths.last_stage_words * ps.chains;
            s.credits = s.last_cap;
            s.bm_cap = plan.fifo_depths.burst_match_words;
            const int sid = (int)slices.size();
            slices.push_back(std::move(s));
            L.slices.push_back(sid);
            if (pc_index[ps.pc] < 0) {
                pc_index[ps.pc] = (int)pcs.size();
                PcRt pr;
                pr.pc = ps.pc;
                pr.dc_cap = plan.fifo_depths.dcfifo_words;
                pr.throttle.eff = eff;
                pr.throttle.randomized = cfg.randomized_accept;
                pr.rng = Rng{cfg.seed, (std::uint64_t)ps.pc};
                pcs.push_back(std::move(pr));
            }
            pcs[pc_index[ps.pc]].slices.push_back(sid);
        }
    }

    // Deal each slice one rotation slot per chain, interleaved, so channel
    // service is chain-proportional rather than slice-fair.
    for (PcRt& pc : pcs) {
        std::vector<int> left;
        for (int sid : pc.slices) left.push_back(slices[sid].chains);
        for (bool any = true; any;) {
            any = false;
            for (std::size_t k = 0; k < pc.slices.size(); ++k)
                if (left[k] > 0) {
                    pc.rotation.push_back(pc.slices[k]);
                    --left[k];
                    any = true;
                }
        }
    }

    // Dependency edges with per-line requirements and run-ahead caps.
    for (const auto& [src, dst] : net.edges) {
        const LayerSpec& a = net.layers[src];
        const LayerSpec& c = net.layers[dst];
        InEdge in;
        in.src = src;
        in.need.resize(c.out_height);
        for (int j = 0; j < c.out_height; ++j) in.need[j] = producer_line_needed(a, c, j);
        layers[dst].ins.push_back(std::move(in));
        OutEdge out;
        out.dst = dst;
        out.in_edge = (int)layers[dst].ins.size() - 1;
        if (dst == src + 1) {
            // Adjacent stages talk through a line buffer sized for the
            // consumer's window plus slack; skip connections are provisioned
            // whole-image by construction.
            const int r = a.out_height / c.in_height;
            out.cap_lines = (std::int64_t)r * (c.kernel_h + 1) + 2;
        } else {
            out.cap_lines = kUnbounded;
        }
        layers[src].outs.push_back(std::move(out));
    }

    const std::int64_t window =
        cfg.deadlock_window_cycles > 0
            ? cfg.deadlock_window_cycles
            : std::max<std::int64_t>(
                  256, 4 * (std::int64_t)std::ceil(worst_case_latency_ns(hbm) * 1e-9 *
                                                   cfg.core_clock_hz));

    std::ofstream trace;
    if (!cfg.trace_path.empty()) {
        trace.open(cfg.trace_path);
        if (!trace) throw sim_error("cannot open trace file " + cfg.trace_path);
        trace << "core_cycle,event,pc,layer,detail\n";
    }

    std::vector<std::int64_t> completion(cfg.n_images, 0);
    std::vector<int> finishers(cfg.n_images, 0);
    std::int64_t last_line_cycle = 0;
    std::int64_t last_progress = 0;
    std::int64_t in_flight_txns = 0;
    int done_layers = 0;
    std::optional<DeadlockReport> deadlock;
    std::int64_t cc = 0; // core cycle counter

    for (std::int64_t t = 0; done_layers < n_layers; ++t) {
        // ---- memory phase -------------------------------------------------
        if (t % 3 == 0 && !cfg.infinite_bw) {
            for (PcRt& pc : pcs) {
                while (!pc.in_flight.empty() && pc.in_flight.front().arrive_unit <= t) {
                    const Txn& txn = pc.in_flight.front();
                    for (int w = 0; w < txn.words256; ++w) pc.arrived.push_back(txn.slice);
                    if (trace.is_open())
                        trace << t / 4 << ",arrive," << pc.pc << ","
                              << slices[txn.slice].layer << "," << txn.words256 << "\n";
                    pc.in_flight.pop_front();
                    --in_flight_txns;
                }
                for (std::size_t k = 0; k < pc.rotation.size(); ++k) {
                    const std::size_t pick = (pc.rr + k) % pc.rotation.size();
                    SliceRt& s = slices[pc.rotation[pick]];
                    if (layers[s.layer].done) continue;
                    if (cfg.flow_mode == FlowMode::credit) {
                        if (s.credits < burst_words80) continue;
                    } else {
                        if (pc.dc_cap - (std::int64_t)pc.dcfifo.size() - pc.pending256 < bl)
                            continue;
                    }
                    const double lat_ns = latency_sample(hbm, bl, cfg.saturated, pc.rng) +
                                          pc.refresh.extra_ns(hbm, t / unit_hz * 1e9);
                    Txn txn;
                    txn.slice = pc.rotation[pick];
                    txn.words256 = bl;
                    txn.arrive_unit = std::max<std::int64_t>(
                        t + std::max<std::int64_t>(1, llround(lat_ns * 1e-9 * unit_hz)),
                        pc.last_arrive_unit);
                    pc.last_arrive_unit = txn.arrive_unit;
                    if (cfg.flow_mode == FlowMode::credit)
                        s.credits -= burst_words80;
                    else
                        pc.pending256 += bl;
                    pc.in_flight.push_back(txn);
                    ++in_flight_txns;
                    ++pc.bursts;
                    pc.rr = (pick + 1) % pc.rotation.size();
                    if (trace.is_open())
                        trace << t / 4 << ",issue," << pc.pc << "," << s.layer << ","
                              << bl << "\n";
                    break;
                }
            }
        }

        // ---- core phase ----------------------------------------------------
        if (t % 4 != 0) continue;
        cc = t / 4;

        if (!cfg.infinite_bw) {
            for (PcRt& pc : pcs) {
                // Clock-domain crossing: the controller hands at most one
                // 256-bit word per core cycle to the dcfifo, paced by the
                // measured efficiency of this burst length.
                if (!pc.arrived.empty() && (std::int64_t)pc.dcfifo.size() < pc.dc_cap) {
                    if (pc.throttle.grant(pc.rng)) {
                        pc.dcfifo.push_back(pc.arrived.front());
                        pc.arrived.pop_front();
                        ++pc.delivered;
                        if (cfg.flow_mode == FlowMode::ready_valid) --pc.pending256;
                    }
                }
                // Head of the shared dcfifo moves to its consumer's
                // burst-match FIFO or blocks everyone behind it.
                if (!pc.dcfifo.empty()) {
                    SliceRt& s = slices[pc.dcfifo.front()];
                    if (s.bm_occ < s.bm_cap) {
                        ++s.bm_occ;
                        pc.dcfifo.pop_front();
                    }
                }
            }
            for (SliceRt& s : slices) {
                // Landing: serialized words become visible in the last-stage
                // FIFO after rippling down the daisy chain.
                while (!s.landing.empty() && s.landing.front().first <= cc) {
                    if (layers[s.layer].done)
                        s.discarded += s.landing.front().second;
                    else
                        s.last_occ += s.landing.front().second;
                    s.landing_words -= s.landing.front().second;
                    s.landing.pop_front();
                }
                // Serializer: one 256-bit word unpacks into three 80-bit
                // weight words.  Finished layers drain and discard.
                if (s.bm_occ > 0) {
                    if (layers[s.layer].done) {
                        --s.bm_occ;
                        s.discarded += 3;
                    } else if (s.last_occ + s.landing_words + 3 <= s.last_cap) {
                        --s.bm_occ;
                        s.landing.push_back({cc + layers[s.layer].daisy_delay, 3});
                        s.landing_words += 3;
                    } else {
                        sim_check(cfg.flow_mode == FlowMode::ready_valid,
                                  "credited word found no last-stage room");
                    }
                }
            }
        }

        for (LayerRt& L : layers) {
            if (L.done) continue;
            bool deps_ok = true;
            for (const InEdge& in : L.ins) {
                const std::int64_t need = (std::int64_t)L.img *
                                              net.layers[in.src].out_height +
                                          in.need[L.line];
                if (layers[in.src].glines < need + 1) {
                    deps_ok = false;
                    break;
                }
            }
            bool room_ok = true;
            if (deps_ok) {
                const std::int64_t my_gline =
                    (std::int64_t)L.img * L.l->out_height + L.line;
                for (const OutEdge& out : L.outs) {
                    const LayerRt& C = layers[out.dst];
                    if (C.done || out.cap_lines >= kUnbounded) continue;
                    const std::int64_t need_pt =
                        (std::int64_t)C.img * L.l->out_height +
                        C.ins[out.in_edge].need[C.line];
                    if (my_gline >= need_pt + out.cap_lines) {
                        room_ok = false;
                        break;
                    }
                }
            }
            bool weights_ok = true;
            if (!L.onchip && !cfg.infinite_bw) {
                for (int sid : L.slices) {
                    const SliceRt& s = slices[sid];
                    if (s.last_occ < (std::int64_t)cfg.freeze_threshold_mult * s.chains) {
                        weights_ok = false;
                        break;
                    }
                }
            }
            if (!deps_ok || !room_ok) {
                ++L.stats.starve_cycles;
                L.cur_freeze = 0;
                continue;
            }
            if (!weights_ok) {
                ++L.stats.freeze_cycles;
                if (++L.cur_freeze == 1) ++L.stats.freeze_episodes;
                L.stats.longest_freeze = std::max(L.stats.longest_freeze, L.cur_freeze);
                continue;
            }
            L.cur_freeze = 0;
            ++L.stats.busy_cycles;
            last_progress = cc;
            if (!L.onchip && !cfg.infinite_bw) {
                for (int sid : L.slices) {
                    SliceRt& s = slices[sid];
                    s.last_occ -= s.chains;
                    s.consumed += s.chains;
                    sim_check(s.last_occ >= 0, "last-stage FIFO underflow");
                    if (cfg.flow_mode == FlowMode::credit) {
                        s.credits += s.chains;
                        sim_check(s.credits <= s.last_cap, "credit overflow");
                    }
                }
                L.stats.weight_words_consumed += L.p;
            }
            if (++L.line_cyc < L.c_line) continue;
            L.line_cyc = 0;
            ++L.glines;
            ++L.stats.lines_produced;
            last_line_cycle = cc;
            if (trace.is_open())
                trace << cc << ",line,-1," << L.l->id << "," << L.img << ":"
                      << L.line << "\n";
            if (++L.line == L.l->out_height) {
                L.line = 0;
                completion[L.img] = std::max(completion[L.img], cc);
                ++finishers[L.img];
                if (++L.img == cfg.n_images) {
                    L.done = true;
                    ++done_layers;
                }
            }
        }

        // Occupancy bookkeeping for the report.
        for (PcRt& pc : pcs) pc.dc_track.sample((std::int64_t)pc.dcfifo.size());
        for (SliceRt& s : slices) {
            s.bm_track.sample(s.bm_occ);
            s.last_track.sample(s.last_occ);
        }

        // Watchdog: work remains, nothing was consumed for a full window,
        // and no transaction is still in flight to explain the silence.
        if (done_layers < n_layers && in_flight_txns == 0 &&
            cc - last_progress >= window) {
            DeadlockReport d;
            d.cycle = cc;
            for (const PcRt& pc : pcs) {
                // A dcfifo is wedged when its head word's consumer cannot
                // accept it; everything queued behind the head is stuck too.
                const bool head_blocked =
                    !pc.dcfifo.empty() &&
                    slices[pc.dcfifo.front()].bm_occ >= slices[pc.dcfifo.front()].bm_cap;
                if (head_blocked || (std::int64_t)pc.dcfifo.size() >= pc.dc_cap) {
                    d.full_fifos.push_back("pc" + std::to_string(pc.pc) + ".dcfifo");
                    if (d.head_of_line_owner < 0 && head_blocked)
                        d.head_of_line_owner =
                            net.layers[slices[pc.dcfifo.front()].layer].id;
                }
            }
            for (const SliceRt& s : slices) {
                const std::string base = "layer" + std::to_string(net.layers[s.layer].id) +
                                         ".pc" + std::to_string(s.pc);
                if (s.bm_occ >= s.bm_cap) d.full_fifos.push_back(base + ".burst_match");
                if (s.last_occ + s.landing_words + 3 > s.last_cap)
                    d.full_fifos.push_back(base + ".last_stage");
                if (!layers[s.layer].done &&
                    s.last_occ < (std::int64_t)cfg.freeze_threshold_mult * s.chains)
                    d.empty_fifos.push_back(base + ".last_stage");
            }
            deadlock = std::move(d);
            break;
        }
    }

    // --- wrap up -----------------------------------------------------------
    SimReport r;
    r.deadlock = deadlock;
    r.total_cycles = deadlock ? deadlock->cycle : last_line_cycle + 1;
    int images_done = 0;
    for (int i = 0; i < cfg.n_images; ++i)
        if (finishers[i] == n_layers) ++images_done;
    r.images_completed = images_done;
    if (!deadlock) {
        r.throughput_im_s = (double)cfg.n_images * cfg.core_clock_hz / (double)r.total_cycles;
        // Marginal rate over the back half.  The widest consecutive gap is
        // the pipeline's true period there: the final gaps only shrink as
        // the pipeline drains, so the maximum is immune to that compression.
        const int i0 = cfg.n_images / 2;
        std::int64_t period = 0;
        for (int i = std::max(1, i0); i < cfg.n_images; ++i)
            period = std::max(period, completion[i] - completion[i - 1]);
        r.steady_state_im_s =
            period > 0 ? cfg.core_clock_hz / (double)period : r.throughput_im_s;
    }
    for (const LayerRt& L : layers) r.layers.push_back(L.stats);
    const std::int64_t elapsed = r.total_cycles > 0 ? r.total_cycles : 1;
    for (const PcRt& pc : pcs) {
        SimPcStats ps;
        ps.pc = pc.pc;
        ps.bursts_issued = pc.bursts;
        ps.words_delivered = pc.delivered;
        ps.utilization = (double)pc.delivered / (double)elapsed;
        r.pcs.push_back(ps);
        r.fifos.push_back(pc.dc_track.finish("pc" + std::to_string(pc.pc) + ".dcfifo"));
        // Conservation: every word an engine ate entered through this
        // channel's dcfifo (three 80-bit words per 256-bit word).
        std::int64_t eaten = 0;
        for (int sid : pc.slices) eaten += slices[sid].consumed;
        sim_check(3 * pc.delivered >= eaten, "channel delivered less than consumed");
    }
    for (const SliceRt& s : slices) {
        const std::string base = "layer" + std::to_string(net.layers[s.layer].id) + ".pc" +
                                 std::to_string(s.pc);
        r.fifos.push_back(s.bm_track.finish(base + ".burst_match"));
        r.fifos.push_back(s.last_track.finish(base + ".last_stage"));
    }

    // Analytic ceiling: simulated throughput may approach but never beat it.
    HbmConfig hb = hbm;
    if (cfg.pattern == AccessPattern::sequential && !cfg.infinite_bw)
        for (auto& e : hb.efficiency_table)
            e.second.read_eff = read_efficiency(hbm, e.first, AccessPattern::sequential);
    const RooflineReport roof = roofline(net, plan, hb, cfg.core_clock_hz);
    r.roofline_im_s = cfg.infinite_bw ? roof.unlimited_hbm_im_s : roof.overall_im_s;
    if (!deadlock && r.throughput_im_s > r.roofline_im_s * (1.0 + 1e-9))
        throw sim_error("simulated throughput exceeds the analytic bound");
    return r;
}

std::string serialize_report(const SimReport& r) {
    std::ostringstream os;
    os << std::setprecision(12);
    os << "sim throughput_im_s=" << r.throughput_im_s
       << " steady_state_im_s=" << r.steady_state_im_s
       << " total_cycles=" << r.total_cycles << " images=" << r.images_completed
       << " roofline_im_s=" << r.roofline_im_s << "\n";
    for (const auto& l : r.layers)
        os << "layer " << l.layer_id << " busy=" << l.busy_cycles
           << " freeze=" << l.freeze_cycles << " starve=" << l.starve_cycles
           << " words=" << l.weight_words_consumed << " lines=" << l.lines_produced
           << "\n";
    for (const auto& p : r.pcs)
        os << "pc " << p.pc << " bursts=" << p.bursts_issued
           << " words=" << p.words_delivered << " util=" << p.utilization << "\n";
    for (const auto& f : r.fifos)
        os << "fifo " << f.name << " min=" << f.min_occ << " mean=" << f.mean_occ
           << " max=" << f.max_occ << "\n";
    if (r.deadlock) {
        os << "deadlock cycle=" << r.deadlock->cycle
           << " head_of_line_owner=" << r.deadlock->head_of_line_owner << "\n";
        for (const auto& n : r.deadlock->full_fifos) os << "blocked_full " << n << "\n";
        for (const auto& n : r.deadlock->empty_fifos) os << "blocked_empty " << n << "\n";
    }
    return os.str();
}

SimReport run_shared_channel_scenario(FlowMode mode, bool shared_pc, std::uint64_t seed) {
    // Three consecutive streamed layers.  The first has a cheap line, so the
    // second starts consuming well before anyone's FIFOs fill; the second is
    // weight-hungry (a line needs more words than its FIFOs hold), so once
    // running its stream never backs up.  The third has a tall kernel: it
    // cannot start until the second layer has produced four lines, so its
    // prefetched words are the only ones that pile up.  Sharing one channel
    // under ready_valid, its words wedge the dcfifo head and starve the
    // layers ahead of it.
    NetworkModel net = parse_network_string(
        "net chain3\n"
        "layer 0 kind=conv kh=1 kw=1 ci=32 co=96 stride=1 in=16x16 out=16x16 pi=1 po=1\n"
        "layer 1 kind=conv kh=1 kw=1 ci=96 co=96 stride=1 in=16x16 out=16x16 pi=1 po=1\n"
        "layer 2 kind=conv kh=7 kw=7 ci=96 co=2 stride=1 in=16x16 out=16x16 pi=1 po=1\n");

    HbmConfig hbm;
    hbm.usable_pcs = shared_pc ? std::vector<int>{0} : std::vector<int>{0, 1, 2};
    OffloadPlan plan = plan_all_hbm(net, hbm);
    if (!shared_pc) {
        // One private channel per layer instead of the packed walk.
        for (int i = 0; i < 3; ++i) plan.placements[i].slices = {PcSlice{i, 1}};
        check_plan(plan, net, hbm);
    }

    SimConfig cfg;
    cfg.n_images = 2;
    cfg.flow_mode = mode;
    cfg.seed = seed;
    return simulate(net, plan, hbm, cfg);
}

} // namespace hbmflow
