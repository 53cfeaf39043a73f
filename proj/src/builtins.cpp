#include "hbmflow/network.hpp"

#include <algorithm>
#include <map>

namespace hbmflow {

namespace {

// Incremental graph builder.  `frontier` is the set of layers whose outputs
// form the current tensor; residual adds merge frontiers, which is how skip
// paths become plain extra edges (the add itself is free at the consumer).
struct Builder {
    NetworkModel m;
    std::vector<int> frontier;

    int add(LayerKind kind, std::string name, int kh, int kw, int ci, int co,
            int stride, int in_w, int in_h, int out_w, int out_h,
            const std::vector<int>& preds) {
        LayerSpec l;
        l.id = (int)m.layers.size();
        l.kind = kind;
        l.name = std::move(name);
        l.kernel_h = kh; l.kernel_w = kw;
        l.in_channels = ci; l.out_channels = co;
        l.stride = stride;
        l.in_width = in_w; l.in_height = in_h;
        l.out_width = out_w; l.out_height = out_h;
        m.layers.push_back(l);
        for (int p : preds) m.edges.push_back({p, l.id});
        return l.id;
    }

    int conv(const std::string& name, int k, int ci, int co, int stride,
             int in, const std::vector<int>& preds) {
        int out = (in + stride - 1) / stride;
        LayerKind kind = (k == 1) ? LayerKind::pointwise_conv : LayerKind::standard_conv;
        return add(kind, name, k, k, ci, co, stride, in, in, out, out, preds);
    }

    void finish() {
        std::sort(m.edges.begin(), m.edges.end());
        m.edges.erase(std::unique(m.edges.begin(), m.edges.end()), m.edges.end());
        validate_network(m);
        // Recompute cached totals via a serialize/parse-free path.
        m.weight_bits_total = 0;
        m.activation_bits_total = 0;
        for (auto& l : m.layers) {
            m.weight_bits_total += weight_memory_bits(l);
            m.activation_bits_total += activation_memory_bits(l);
        }
    }
};

// Two-conv residual block.  Downsampling blocks carry a 1x1 projection on
// the skip path; identity blocks keep the incoming frontier alive so the
// add is just extra edges into the next consumer.
void basic_block(Builder& b, const std::string& tag, int ci, int co, int stride, int in) {
    std::vector<int> input = b.frontier;
    int mid = (in + stride - 1) / stride;
    int a = b.conv(tag + "a", 3, ci, co, stride, in, input);
    int c = b.conv(tag + "b", 3, co, co, 1, mid, {a});
    if (stride != 1 || ci != co) {
        int sc = b.conv(tag + "sc", 1, ci, co, stride, in, input);
        b.frontier = {c, sc};
    } else {
        b.frontier = input;
        b.frontier.insert(b.frontier.begin(), c);
    }
}

// 1x1 -> 3x3 -> 1x1 bottleneck block (stride lives on the 3x3).
void bottleneck_block(Builder& b, const std::string& tag, int ci, int mid, int co,
                      int stride, int in, bool project) {
    std::vector<int> input = b.frontier;
    int out = (in + stride - 1) / stride;
    int a = b.conv(tag + "a", 1, ci, mid, 1, in, input);
    int c = b.conv(tag + "b", 3, mid, mid, stride, in, {a});
    int d = b.conv(tag + "c", 1, mid, co, 1, out, {c});
    if (project) {
        int sc = b.conv(tag + "sc", 1, ci, co, stride, in, input);
        b.frontier = {d, sc};
    } else {
        b.frontier = input;
        b.frontier.insert(b.frontier.begin(), d);
    }
}

NetworkModel build_resnet18() {
    Builder b;
    b.m.name = "resnet18";
    b.frontier = {b.conv("conv1", 7, 3, 64, 2, 224, {})};
    // 3x3/2 max pool folded into the stage-2 input extent (112 -> 56).
    basic_block(b, "conv2_1", 64, 64, 1, 56);
    basic_block(b, "conv2_2", 64, 64, 1, 56);
    basic_block(b, "conv3_1", 64, 128, 2, 56);
    basic_block(b, "conv3_2", 128, 128, 1, 28);
    basic_block(b, "conv4_1", 128, 256, 2, 28);
    basic_block(b, "conv4_2", 256, 256, 1, 14);
    basic_block(b, "conv5_1", 256, 512, 2, 14);
    basic_block(b, "conv5_2", 512, 512, 1, 7);
    // Global average pool folded into the classifier input extent (7 -> 1).
    b.add(LayerKind::fc_as_1x1, "fc", 1, 1, 512, 1000, 1, 1, 1, 1, 1, b.frontier);
    b.finish();
    return b.m;
}

NetworkModel build_resnet50() {
    Builder b;
    b.m.name = "resnet50";
    b.frontier = {b.conv("conv1", 7, 3, 64, 2, 224, {})};
    struct Stage { const char* tag; int blocks, mid, co, stride, in; };
    const Stage stages[] = {
        {"conv2", 3, 64, 256, 1, 56},
        {"conv3", 4, 128, 512, 2, 56},
        {"conv4", 6, 256, 1024, 2, 28},
        {"conv5", 3, 512, 2048, 2, 14},
    };
    int ci = 64;
    for (auto& st : stages) {
        int in = st.in;
        for (int i = 0; i < st.blocks; ++i) {
            std::string tag = std::string(st.tag) + "_" + std::to_string(i + 1);
            int stride = (i == 0) ? st.stride : 1;
            bool project = (i == 0); // channel count changes at every stage entry
            bottleneck_block(b, tag, ci, st.mid, st.co, stride, in, project);
            ci = st.co;
            in = (in + stride - 1) / stride;
        }
    }
    b.add(LayerKind::fc_as_1x1, "fc", 1, 1, 2048, 1000, 1, 1, 1, 1, 1, b.frontier);
    b.finish();
    return b.m;
}

NetworkModel build_vgg16() {
    Builder b;
    b.m.name = "vgg16";
    struct C { const char* name; int ci, co, in; };
    const C convs[] = {
        {"conv1_1", 3, 64, 224},   {"conv1_2", 64, 64, 224},
        {"conv2_1", 64, 128, 112}, {"conv2_2", 128, 128, 112},
        {"conv3_1", 128, 256, 56}, {"conv3_2", 256, 256, 56}, {"conv3_3", 256, 256, 56},
        {"conv4_1", 256, 512, 28}, {"conv4_2", 512, 512, 28}, {"conv4_3", 512, 512, 28},
        {"conv5_1", 512, 512, 14}, {"conv5_2", 512, 512, 14}, {"conv5_3", 512, 512, 14},
    };
    std::vector<int> prev;
    for (auto& c : convs) {
        int id = b.conv(c.name, 3, c.ci, c.co, 1, c.in, prev);
        prev = {id};
    }
    // 2x2 max pools folded into the declared input extents; the final
    // 7x7x512 pool output feeds the classifier as 25088 flat channels.
    int fc6 = b.add(LayerKind::fc_as_1x1, "fc6", 1, 1, 25088, 4096, 1, 1, 1, 1, 1, prev);
    int fc7 = b.add(LayerKind::fc_as_1x1, "fc7", 1, 1, 4096, 4096, 1, 1, 1, 1, 1, {fc6});
    b.add(LayerKind::fc_as_1x1, "fc8", 1, 1, 4096, 1000, 1, 1, 1, 1, 1, {fc7});
    b.finish();
    return b.m;
}

// Per-layer (pi, po) tables.  "hybrid" balances the pipeline for a machine
// that keeps the hot layers on chip; "all-hbm" re-balances under the
// 93-chain streaming budget so every layer can be fed from memory;
// "unlimited" projects a compute-rich build of the same machine.
using Preset = std::vector<std::pair<int, int>>;

const std::map<std::string, std::map<std::string, Preset>>& preset_tables() {
    static const std::map<std::string, std::map<std::string, Preset>> tables = {
        {"resnet18", {
            {"hybrid", {
                {1,2},                                         // conv1
                {1,3},{1,3},{1,3},{1,3},                       // conv2_1a..conv2_2b
                {1,4},{2,4},{1,1},{2,4},{2,4},                 // conv3 (a,b,sc,a,b)
                {2,4},{4,4},{1,1},{4,4},{4,4},                 // conv4
                {3,6},{6,6},{1,2},{6,6},{6,6},                 // conv5
                {1,1},                                         // fc
            }},
            {"all-hbm", {
                {1,1},
                {1,2},{1,2},{1,2},{1,2},
                {1,2},{1,3},{1,1},{1,3},{1,3},
                {1,3},{2,3},{1,1},{2,3},{2,3},
                {1,7},{1,13},{1,1},{1,13},{1,13},
                {1,1},
            }},
        }},
        {"resnet50", {
            {"hybrid", {
                {1,2},
                {1,1},{1,3},{1,1},{1,1}, {1,1},{1,3},{1,1}, {1,1},{1,3},{1,1},
                {1,2},{1,5},{1,2},{1,4}, {1,2},{1,5},{1,2}, {1,2},{1,5},{1,2},
                {1,2},{1,5},{1,2},
                {1,4},{3,3},{1,4},{2,4}, {1,4},{3,3},{1,4}, {1,4},{3,3},{1,4},
                {1,4},{3,3},{1,4}, {1,4},{3,3},{1,4}, {1,4},{3,3},{1,4},
                {2,4},{1,17},{2,4},{3,5}, {2,4},{1,17},{2,4}, {2,4},{1,17},{2,4},
                {1,3},
            }},
            {"all-hbm", {
                {1,1},
                {1,1},{1,1},{1,1},{1,1}, {1,1},{1,1},{1,1}, {1,1},{1,1},{1,1},
                {1,1},{1,2},{1,1},{1,1}, {1,1},{1,2},{1,1}, {1,1},{1,2},{1,1},
                {1,1},{1,2},{1,1},
                {1,1},{1,3},{1,1},{1,2}, {1,1},{1,3},{1,1}, {1,1},{1,3},{1,1},
                {1,1},{1,3},{1,1}, {1,1},{1,3},{1,1}, {1,1},{1,3},{1,1},
                {1,2},{1,5},{1,2},{1,4}, {1,2},{1,5},{1,2}, {1,2},{1,5},{1,2},
                {1,1},
            }},
            {"unlimited", {
                {1,3},
                {1,1},{1,5},{1,2},{1,2}, {1,2},{1,5},{1,2}, {1,2},{1,5},{1,2},
                {1,4},{3,3},{1,4},{2,4}, {1,4},{3,3},{1,4}, {1,4},{3,3},{1,4},
                {1,4},{3,3},{1,4},
                {2,4},{3,6},{2,4},{4,4}, {2,4},{3,6},{2,4}, {2,4},{3,6},{2,4},
                {2,4},{3,6},{2,4}, {2,4},{3,6},{2,4}, {2,4},{3,6},{2,4},
                {4,4},{5,7},{4,4},{4,8}, {4,4},{5,7},{4,4}, {4,4},{5,7},{4,4},
                {1,5},
            }},
        }},
        {"vgg16", {
            {"hybrid", {
                {1,1},{1,2},
                {1,2},{2,2},
                {1,4},{1,7},{1,7},
                {1,7},{1,13},{1,13},
                {1,7},{1,7},{1,7},
                {4,5},{2,2},{1,1},
            }},
            {"all-hbm", {
                {1,1},{1,2},
                {1,2},{1,3},
                {1,4},{1,6},{1,6},
                {1,6},{2,6},{2,6},
                {1,6},{1,6},{1,6},
                {1,17},{1,3},{1,1},
            }},
            {"unlimited", {
                {1,1},{1,4},
                {1,4},{1,7},
                {1,7},{1,13},{1,13},
                {1,13},{5,5},{5,5},
                {1,13},{1,13},{1,13},
                {3,13},{1,7},{1,2},
            }},
        }},
    };
    return tables;
}

} // namespace

NetworkModel builtin_network(const std::string& name) {
    if (name == "resnet18") return build_resnet18();
    if (name == "resnet50") return build_resnet50();
    if (name == "vgg16") return build_vgg16();
    throw network_error("unknown builtin network '" + name + "'");
}

std::vector<std::string> builtin_network_names() {
    return {"resnet18", "resnet50", "vgg16"};
}

void apply_parallelism_preset(NetworkModel& m, const std::string& preset) {
    if (preset == "unit") {
        for (auto& l : m.layers) { l.par_in = 1; l.par_out = 1; }
        return;
    }
    auto& tables = preset_tables();
    auto net_it = tables.find(m.name);
    if (net_it == tables.end())
        throw network_error("no parallelism presets for network '" + m.name + "'");
    std::string key = preset;
    // ResNet-18 is compute-limited already; its unlimited build equals hybrid.
    if (key == "unlimited" && !net_it->second.count("unlimited")) key = "hybrid";
    auto p_it = net_it->second.find(key);
    if (p_it == net_it->second.end())
        throw network_error("unknown parallelism preset '" + preset + "'");
    const Preset& tab = p_it->second;
    if (tab.size() != m.layers.size())
        throw network_error("preset size mismatch for '" + m.name + "'");
    for (size_t i = 0; i < tab.size(); ++i) {
        m.layers[i].par_in = tab[i].first;
        m.layers[i].par_out = tab[i].second;
    }
    validate_network(m);
}

std::vector<std::string> parallelism_preset_names() {
    return {"unit", "hybrid", "all-hbm", "unlimited"};
}

} // namespace hbmflow
