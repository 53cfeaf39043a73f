#include "hbmflow/network.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace hbmflow {

static int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::standard_conv:  return "conv";
        case LayerKind::depthwise_conv: return "dwconv";
        case LayerKind::pointwise_conv: return "pwconv";
        case LayerKind::fc_as_1x1:      return "fc";
    }
    return "conv";
}

LayerKind layer_kind_from_name(const std::string& s) {
    if (s == "conv") return LayerKind::standard_conv;
    if (s == "dwconv") return LayerKind::depthwise_conv;
    if (s == "pwconv") return LayerKind::pointwise_conv;
    if (s == "fc") return LayerKind::fc_as_1x1;
    throw network_error("unknown layer kind '" + s + "'");
}

const LayerSpec& NetworkModel::layer(int id) const {
    if (id < 0 || id >= (int)layers.size())
        throw network_error("layer id " + std::to_string(id) + " out of range");
    return layers[id];
}

std::vector<std::vector<int>> NetworkModel::preds() const {
    std::vector<std::vector<int>> p(layers.size());
    for (auto& e : edges) p[e.second].push_back(e.first);
    return p;
}

std::vector<std::vector<int>> NetworkModel::succs() const {
    std::vector<std::vector<int>> s(layers.size());
    for (auto& e : edges) s[e.first].push_back(e.second);
    return s;
}

// ---- memory & traffic -------------------------------------------------------

int64_t weight_memory_bits(const LayerSpec& l) { return l.weight_count() * 8; }

int64_t weight_memory_m20k(const LayerSpec& l) {
    // 20480 bits per M20K block; one copy of the weights per 18 output columns.
    int64_t blocks = ceil_div(weight_memory_bits(l), 20480);
    int64_t dup = ceil_div(l.out_width, 18);
    return blocks * dup;
}

int64_t activation_memory_bits(const LayerSpec& l, int window_lines) {
    if (window_lines < 0) window_lines = l.kernel_h + 1;
    if (window_lines < l.kernel_h)
        throw network_error("window_lines " + std::to_string(window_lines) +
                            " cannot feed a " + std::to_string(l.kernel_h) + "-tall kernel");
    return (int64_t)l.in_width * l.in_channels * window_lines * 8;
}

int64_t weight_traffic_bytes(const LayerSpec& l) {
    return l.weight_count() * l.out_height;
}

TrafficSummary weight_traffic_per_image(const NetworkModel& m) {
    TrafficSummary t;
    t.per_layer_bytes.reserve(m.layers.size());
    for (auto& l : m.layers) {
        t.per_layer_bytes.push_back(weight_traffic_bytes(l));
        t.total_bytes += t.per_layer_bytes.back();
    }
    return t;
}

static void refresh_totals(NetworkModel& m) {
    m.weight_bits_total = 0;
    m.activation_bits_total = 0;
    for (auto& l : m.layers) {
        m.weight_bits_total += weight_memory_bits(l);
        m.activation_bits_total += activation_memory_bits(l);
    }
}

// ---- validation -------------------------------------------------------------

void validate_network(const NetworkModel& m) {
    if (m.layers.empty()) throw network_error("network has no layers");
    for (int i = 0; i < (int)m.layers.size(); ++i) {
        const LayerSpec& l = m.layers[i];
        if (l.id != i) throw network_error("layer ids must be dense and ascending from 0");
        if (l.kernel_h < 1 || l.kernel_w < 1 || l.in_channels < 1 || l.out_channels < 1 ||
            l.stride < 1 || l.in_width < 1 || l.in_height < 1 || l.out_width < 1 ||
            l.out_height < 1)
            throw network_error("layer " + std::to_string(l.id) + ": non-positive dimension");
        if (l.par_in < 1 || l.par_in > l.in_channels)
            throw network_error("layer " + std::to_string(l.id) +
                                ": pi must be in [1, ci]");
        if (l.par_out < 1 || l.par_out > l.out_channels)
            throw network_error("layer " + std::to_string(l.id) +
                                ": po must be in [1, co]");
        if ((l.kind == LayerKind::pointwise_conv || l.kind == LayerKind::fc_as_1x1) &&
            (l.kernel_h != 1 || l.kernel_w != 1))
            throw network_error("layer " + std::to_string(l.id) +
                                ": pointwise/fc layers must have a 1x1 kernel");
        // The declared output extent must be reachable from the input extent
        // with this kernel and stride, anywhere between valid and same padding.
        auto check_dim = [&](int in, int k, int out, const char* axis) {
            int64_t lo = std::max<int64_t>(1, ceil_div(in - k + 1, l.stride));
            int64_t hi = ceil_div(in, l.stride);
            if (out < lo || out > hi)
                throw network_error("layer " + std::to_string(l.id) + ": output " +
                                    axis + " " + std::to_string(out) +
                                    " inconsistent with input/stride (expected " +
                                    std::to_string(lo) + ".." + std::to_string(hi) + ")");
        };
        check_dim(l.in_height, l.kernel_h, l.out_height, "height");
        check_dim(l.in_width, l.kernel_w, l.out_width, "width");
    }
    // Edge sanity + DAG check with layer 0 as the unique source.
    auto P = m.preds();
    for (auto& e : m.edges) {
        if (e.first < 0 || e.first >= (int)m.layers.size() ||
            e.second < 0 || e.second >= (int)m.layers.size())
            throw network_error("edge references unknown layer");
        if (e.first == e.second) throw network_error("self edge on layer " +
                                                     std::to_string(e.first));
    }
    if (!P[0].empty()) throw network_error("layer 0 must have no predecessors");
    for (int i = 1; i < (int)m.layers.size(); ++i)
        if (P[i].empty())
            throw network_error("layer " + std::to_string(i) +
                                " is unreachable (no predecessors)");
    // Topological check (ids ascending is sufficient but verify anyway).
    for (auto& e : m.edges)
        if (e.first >= e.second)
            throw network_error("edge " + std::to_string(e.first) + "->" +
                                std::to_string(e.second) +
                                " violates pipeline order (cycle)");
    // A consumer taking lines from a producer must do so at an integer
    // line-rate ratio (pooling between stages halves the extent).
    for (auto& e : m.edges) {
        const LayerSpec& a = m.layers[e.first];
        const LayerSpec& b = m.layers[e.second];
        if (a.out_height % b.in_height != 0 || a.out_width % b.in_width != 0)
            throw network_error("edge " + std::to_string(e.first) + "->" +
                                std::to_string(e.second) +
                                ": producer extent " + std::to_string(a.out_width) + "x" +
                                std::to_string(a.out_height) +
                                " not an integer multiple of consumer input " +
                                std::to_string(b.in_width) + "x" + std::to_string(b.in_height));
    }
}

// ---- parsing ----------------------------------------------------------------

namespace {

struct FieldMap {
    std::map<std::string, std::string> kv;
    int line_no;
    int geti(const std::string& key) const {
        auto it = kv.find(key);
        if (it == kv.end()) throw network_error("missing field '" + key + "'", line_no);
        try {
            size_t pos = 0;
            int v = std::stoi(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            throw network_error("field '" + key + "' is not an integer: '" +
                                it->second + "'", line_no);
        }
    }
    std::string gets(const std::string& key) const {
        auto it = kv.find(key);
        if (it == kv.end()) throw network_error("missing field '" + key + "'", line_no);
        return it->second;
    }
    bool has(const std::string& key) const { return kv.count(key) != 0; }
};

void parse_extent(const std::string& v, int line_no, int& w, int& h) {
    auto x = v.find('x');
    if (x == std::string::npos)
        throw network_error("extent must look like <W>x<H>: '" + v + "'", line_no);
    try {
        w = std::stoi(v.substr(0, x));
        h = std::stoi(v.substr(x + 1));
    } catch (...) {
        throw network_error("bad extent '" + v + "'", line_no);
    }
}

} // namespace

NetworkModel parse_network(std::istream& in) {
    NetworkModel m;
    std::set<std::pair<int, int>> explicit_edges;
    std::set<int> has_explicit_pred;
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string word;
        if (!(ls >> word)) continue;
        if (word == "net") {
            if (!(ls >> m.name)) throw network_error("net line needs a name", line_no);
        } else if (word == "layer") {
            LayerSpec l;
            if (!(ls >> l.id)) throw network_error("layer line needs an id", line_no);
            FieldMap f;
            f.line_no = line_no;
            std::string tok;
            while (ls >> tok) {
                auto eq = tok.find('=');
                if (eq == std::string::npos)
                    throw network_error("expected key=value, got '" + tok + "'", line_no);
                f.kv[tok.substr(0, eq)] = tok.substr(eq + 1);
            }
            l.kind = layer_kind_from_name(f.gets("kind"));
            l.kernel_h = f.geti("kh");
            l.kernel_w = f.geti("kw");
            l.in_channels = f.geti("ci");
            l.out_channels = f.geti("co");
            l.stride = f.geti("stride");
            parse_extent(f.gets("in"), line_no, l.in_width, l.in_height);
            parse_extent(f.gets("out"), line_no, l.out_width, l.out_height);
            l.par_in = f.has("pi") ? f.geti("pi") : 1;
            l.par_out = f.has("po") ? f.geti("po") : 1;
            if (f.has("name")) l.name = f.gets("name");
            if (l.id != (int)m.layers.size())
                throw network_error("layer ids must be dense and ascending (got " +
                                    std::to_string(l.id) + ", expected " +
                                    std::to_string(m.layers.size()) + ")", line_no);
            m.layers.push_back(l);
        } else if (word == "edge") {
            int a, b;
            if (!(ls >> a >> b)) throw network_error("edge line needs <src> <dst>", line_no);
            explicit_edges.insert({a, b});
            has_explicit_pred.insert(b);
        } else {
            throw network_error("unknown directive '" + word + "'", line_no);
        }
    }
    if (m.layers.empty()) throw network_error("descriptor contains no layers");
    // Implicit chain edges, suppressed wherever the consumer has explicit ones.
    for (int i = 0; i + 1 < (int)m.layers.size(); ++i)
        if (!has_explicit_pred.count(i + 1)) explicit_edges.insert({i, i + 1});
    m.edges.assign(explicit_edges.begin(), explicit_edges.end());
    validate_network(m);
    refresh_totals(m);
    if (m.name.empty()) m.name = "net";
    return m;
}

NetworkModel parse_network_string(const std::string& text) {
    std::istringstream in(text);
    return parse_network(in);
}

NetworkModel load_network_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw network_error("cannot open network file '" + path + "'");
    return parse_network(in);
}

std::string serialize_network(const NetworkModel& m) {
    std::ostringstream out;
    out << "net " << (m.name.empty() ? "net" : m.name) << "\n";
    for (auto& l : m.layers) {
        out << "layer " << l.id << " kind=" << layer_kind_name(l.kind)
            << " kh=" << l.kernel_h << " kw=" << l.kernel_w
            << " ci=" << l.in_channels << " co=" << l.out_channels
            << " stride=" << l.stride
            << " in=" << l.in_width << "x" << l.in_height
            << " out=" << l.out_width << "x" << l.out_height
            << " pi=" << l.par_in << " po=" << l.par_out;
        if (!l.name.empty()) out << " name=" << l.name;
        out << "\n";
    }
    // Emit only edges the implicit chain would not recreate: a consumer whose
    // predecessor set is exactly {id-1} needs no edge lines.
    auto P = m.preds();
    for (int d = 1; d < (int)m.layers.size(); ++d) {
        auto& p = P[d];
        if (p.size() == 1 && p[0] == d - 1) continue;
        for (int s : p) out << "edge " << s << " " << d << "\n";
    }
    return out.str();
}

} // namespace hbmflow
