#ifndef HBMFLOW_NETWORK_HPP
#define HBMFLOW_NETWORK_HPP

#include <cstdint>
#include <string>
#include <vector>
#include <stdexcept>
#include <iosfwd>

namespace hbmflow {

// Raised for descriptor syntax/validation problems; carries the offending
// line number when one is known.
struct network_error : std::runtime_error {
    int line = 0;
    explicit network_error(const std::string& what, int line_no = 0)
        : std::runtime_error(line_no ? ("line " + std::to_string(line_no) + ": " + what) : what),
          line(line_no) {}
};

enum class LayerKind { standard_conv, depthwise_conv, pointwise_conv, fc_as_1x1 };

const char* layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& s); // throws network_error

// One pipeline stage.  Weights are 8-bit; a depthwise layer is declared with
// ci=1 so the k*k*ci*co products stay correct.  pi/po are the input/output
// channel parallelism the compute engine was built with: the engine consumes
// pi*po 80-bit weight words per active cycle.
struct LayerSpec {
    int id = 0;
    LayerKind kind = LayerKind::standard_conv;
    std::string name;          // optional label, for reports
    int kernel_h = 1, kernel_w = 1;
    int in_channels = 1, out_channels = 1;
    int stride = 1;
    int in_width = 1, in_height = 1;
    int out_width = 1, out_height = 1;
    int par_in = 1, par_out = 1;

    int64_t weight_count() const {
        return (int64_t)kernel_h * kernel_w * in_channels * out_channels;
    }
    int par() const { return par_in * par_out; }
};

struct TrafficSummary {
    std::vector<int64_t> per_layer_bytes;
    int64_t total_bytes = 0;
};

// A directed acyclic layer graph.  Layer 0 is the unique source (it reads
// the input image); every other layer consumes the outputs of its
// predecessors.  Residual additions are represented purely as extra edges:
// the join costs nothing at the consumer.
struct NetworkModel {
    std::string name;
    std::vector<LayerSpec> layers;
    std::vector<std::pair<int, int>> edges;   // (src id, dst id), deduplicated
    int64_t weight_bits_total = 0;            // sum of raw per-layer weight bits
    int64_t activation_bits_total = 0;        // sum at the default window depth

    const LayerSpec& layer(int id) const;
    std::vector<std::vector<int>> preds() const; // indexed by layer id
    std::vector<std::vector<int>> succs() const;
};

// ---- per-layer memory accounting -------------------------------------------

// Raw weight storage in bits (8-bit weights).
int64_t weight_memory_bits(const LayerSpec& l);

// On-chip cost in M20K blocks: ceil(raw_bits / 20480) blocks, duplicated
// once per 18 columns of output width so every group of AI tensor blocks
// has a private copy within routing reach.
int64_t weight_memory_m20k(const LayerSpec& l);

// Line buffer for the sliding input window: in_width * ci * window_lines
// 8-bit activations.  window_lines defaults to kernel_h + 1 (the window
// plus one line being filled); fewer than kernel_h lines cannot feed the
// kernel and is rejected.
int64_t activation_memory_bits(const LayerSpec& l, int window_lines = -1);

// Weight traffic per image when a layer streams from memory: the full
// kernel set is re-read for every output line (weights are shared across
// the width), so bytes = k_h*k_w*ci*co*out_height.
int64_t weight_traffic_bytes(const LayerSpec& l);
TrafficSummary weight_traffic_per_image(const NetworkModel& m);

// ---- descriptor I/O ---------------------------------------------------------
//
// Line-oriented text format:
//   net <name>
//   layer <id> kind=<kind> kh=<n> kw=<n> ci=<n> co=<n> stride=<n>
//         in=<W>x<H> out=<W>x<H> pi=<n> po=<n>   (one line per layer)
//   edge <src> <dst>
//   # comment
// Layers must appear in ascending id order starting at 0.  Consecutive
// layers are chained implicitly; an explicit `edge` line into layer d
// replaces d's implicit predecessor entirely.

NetworkModel parse_network(std::istream& in);
NetworkModel parse_network_string(const std::string& text);
NetworkModel load_network_file(const std::string& path);
std::string serialize_network(const NetworkModel& m);

// Consistency checks used by the parser and the builders: dims vs stride,
// parallelism vs channel counts, DAG shape, integer line-rate ratios along
// edges.  Throws network_error.
void validate_network(const NetworkModel& m);

// ---- builtin models ---------------------------------------------------------
//
// ImageNet-shaped classifier models with pooling folded into the declared
// per-layer input extents.  Parallelism defaults to 1 everywhere; apply a
// preset to get a machine configuration tuned for a memory mode.
NetworkModel builtin_network(const std::string& name); // resnet18|resnet50|vgg16
std::vector<std::string> builtin_network_names();

// Parallelism presets: "unit" (all 1), "hybrid" (pipeline balanced for a
// hybrid on-chip/HBM machine), "all-hbm" (balanced under the 93-chain HBM
// budget so every layer can stream), "unlimited" (compute-rich projection).
void apply_parallelism_preset(NetworkModel& m, const std::string& preset);
std::vector<std::string> parallelism_preset_names();

} // namespace hbmflow

#endif
