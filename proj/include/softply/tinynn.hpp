#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace softply::nn {

// Eigen's vectorized reductions split off an unaligned head whose size
// depends on the buffer address, which changes the rounding. Keeping every
// buffer on the maximum alignment makes results independent of where the
// allocator happened to put them.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

struct Shape {
    int c = 1;
    int h = 1;
    int w = 1;

    std::size_t size() const { return static_cast<std::size_t>(c) * h * w; }
    friend bool operator==(const Shape&, const Shape&) = default;
};

enum class LayerKind { conv, relu, maxpool, dense, concat_skip };

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    // conv
    int kernel = 0;
    int in_ch = 0;
    int out_ch = 0;
    int stride = 1;
    int pad = 0;
    // dense
    int in = 0;
    int out = 0;
    // concat_skip: output = concat(input, block(input)) along channels
    std::vector<LayerSpec> block;

    static LayerSpec conv(int k, int in_ch, int out_ch, int stride = 1, int pad = -1);
    static LayerSpec relu() { return {}; }
    static LayerSpec maxpool() {
        LayerSpec l;
        l.kind = LayerKind::maxpool;
        return l;
    }
    static LayerSpec dense(int in, int out);
    static LayerSpec concat_skip(std::vector<LayerSpec> block);
};

inline constexpr int kOutputDims = 5;

struct NetSpec {
    std::string name;
    Shape input{1, 64, 64};
    std::vector<LayerSpec> layers;

    // "conv-small" or "conv-dense" on a 1 x size x size input.
    static NetSpec preset(const std::string& name, int input_size = 64);
};

nlohmann::json to_json(const NetSpec& spec);
NetSpec net_spec_from_json(const nlohmann::json& j);

class NetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Flat execution plan: every layer reads and writes numbered buffers.
// Buffer 0 is the input.
struct Op {
    LayerKind kind;
    LayerSpec spec;
    int src = 0;
    int src2 = -1;  // concat: second operand
    int dst = 0;
    std::size_t weight_offset = 0;
    std::size_t bias_offset = 0;
    int slot = -1;  // conv: im2col cache index; maxpool: argmax cache index
};

struct Plan {
    std::vector<Shape> buffers;
    std::vector<Op> ops;
    std::size_t param_count = 0;
    int conv_slots = 0;
    int pool_slots = 0;
    int output = 0;
};

// Validates shapes; throws NetError on mismatch or when the output is not 5-wide.
Plan compile(const NetSpec& spec);

// Per-axis affine map between physical targets and the [-1, 1] training range.
struct OutputScaling {
    std::array<double, kOutputDims> center{0, 0, 0, 0, 0};
    std::array<double, kOutputDims> half_range{1, 1, 1, 1, 1};

    std::array<double, kOutputDims> normalize(const std::array<double, kOutputDims>& v) const;
    std::array<double, kOutputDims> denormalize(const std::array<double, kOutputDims>& v) const;
};

template <typename T>
struct Model {
    NetSpec spec;
    Plan plan;
    OutputScaling scaling;
    AlignedVector<T> params;
    // Adam moments, same layout as params.
    AlignedVector<T> adam_m;
    AlignedVector<T> adam_v;

    std::size_t param_count() const { return params.size(); }
};

// Activations cached by forward() and consumed by backward().
template <typename T>
struct Workspace {
    std::vector<AlignedVector<T>> act;
    std::vector<AlignedVector<T>> grad;
    std::vector<AlignedVector<T>> cols;
    std::vector<std::vector<std::uint32_t>> argmax;
    bool has_forward = false;

    void prepare(const Plan& plan);
};

struct OptimizerSpec {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int batch_size = 64;
};

template <typename T>
Model<T> init_params(const NetSpec& spec, std::uint64_t seed);

template <typename T>
std::span<const T> forward(const Model<T>& model, std::span<const T> input, Workspace<T>& ws);

// Accumulates (+=) parameter gradients into `param_grad`. When `input_grad`
// is non-empty it receives the gradient with respect to the input.
template <typename T>
void backward(const Model<T>& model, Workspace<T>& ws, std::span<const T> loss_grad, std::span<T> param_grad,
              std::span<T> input_grad = {});

struct LossResult {
    double loss = 0.0;
    std::array<double, kOutputDims> grad{};
};

// L = mean_i w_i (pred_i - target_i)^2
LossResult mse_loss(std::span<const double> pred, std::span<const double> target, std::span<const double> weights);

template <typename T>
void adam_step(Model<T>& model, std::span<const T> grads, const OptimizerSpec& spec, int t);

template <typename To, typename From>
Model<To> convert(const Model<From>& m);

// File layout: "SPLYNN01", u32 version, u32 json length, spec/scaling JSON,
// u64 parameter count, little-endian f32 parameters.
void save_model(const Model<float>& model, const std::string& path);
Model<float> load_model(const std::string& path);

std::vector<std::uint8_t> serialize_model(const Model<float>& model);
Model<float> deserialize_model(const std::vector<std::uint8_t>& bytes);

// Convenience inference returning de-normalized outputs.
std::array<double, kOutputDims> predict(const Model<float>& model, std::span<const float> input, Workspace<float>& ws);

extern template struct Workspace<float>;
extern template struct Workspace<double>;

}  // namespace softply::nn
