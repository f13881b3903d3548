#include "softply/tinynn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include <Eigen/Core>

namespace softply::nn {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

const char* kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::conv: return "conv";
        case LayerKind::relu: return "relu";
        case LayerKind::maxpool: return "maxpool";
        case LayerKind::dense: return "dense";
        case LayerKind::concat_skip: return "concat_skip";
    }
    return "?";
}

std::string shape_str(const Shape& s) {
    return std::to_string(s.c) + "x" + std::to_string(s.h) + "x" + std::to_string(s.w);
}

}  // namespace

LayerSpec LayerSpec::conv(int k, int in_ch, int out_ch, int stride, int pad) {
    LayerSpec l;
    l.kind = LayerKind::conv;
    l.kernel = k;
    l.in_ch = in_ch;
    l.out_ch = out_ch;
    l.stride = stride;
    l.pad = pad < 0 ? k / 2 : pad;
    return l;
}

LayerSpec LayerSpec::dense(int in, int out) {
    LayerSpec l;
    l.kind = LayerKind::dense;
    l.in = in;
    l.out = out;
    return l;
}

LayerSpec LayerSpec::concat_skip(std::vector<LayerSpec> block) {
    LayerSpec l;
    l.kind = LayerKind::concat_skip;
    l.block = std::move(block);
    return l;
}

NetSpec NetSpec::preset(const std::string& name, int input_size) {
    if (input_size < 8 || input_size % 8 != 0) throw NetError("preset input size must be a multiple of 8");
    NetSpec s;
    s.name = name;
    s.input = {1, input_size, input_size};
    const int flat = 32 * (input_size / 8) * (input_size / 8);
    using L = LayerSpec;
    if (name == "conv-small") {
        s.layers = {L::conv(3, 1, 8),   L::relu(), L::maxpool(), L::conv(3, 8, 16), L::relu(), L::maxpool(),
                    L::conv(3, 16, 32), L::relu(), L::maxpool(), L::dense(flat, 64), L::relu(), L::dense(64, kOutputDims)};
    } else if (name == "conv-dense") {
        s.layers = {L::conv(3, 1, 8),
                    L::relu(),
                    L::maxpool(),
                    L::concat_skip({L::conv(3, 8, 8), L::relu()}),
                    L::conv(3, 16, 16),
                    L::relu(),
                    L::maxpool(),
                    L::concat_skip({L::conv(3, 16, 16), L::relu()}),
                    L::conv(3, 32, 32),
                    L::relu(),
                    L::maxpool(),
                    L::dense(flat, 64),
                    L::relu(),
                    L::dense(64, kOutputDims)};
    } else {
        throw NetError("unknown architecture preset '" + name + "'");
    }
    return s;
}

nlohmann::json layer_to_json(const LayerSpec& l) {
    nlohmann::json j;
    j["type"] = kind_name(l.kind);
    switch (l.kind) {
        case LayerKind::conv:
            j["kernel"] = l.kernel;
            j["in_ch"] = l.in_ch;
            j["out_ch"] = l.out_ch;
            j["stride"] = l.stride;
            j["pad"] = l.pad;
            break;
        case LayerKind::dense:
            j["in"] = l.in;
            j["out"] = l.out;
            break;
        case LayerKind::concat_skip: {
            nlohmann::json b = nlohmann::json::array();
            for (const auto& x : l.block) b.push_back(layer_to_json(x));
            j["block"] = b;
            break;
        }
        default:
            break;
    }
    return j;
}

LayerSpec layer_from_json(const nlohmann::json& j) {
    const std::string t = j.at("type").get<std::string>();
    if (t == "conv") {
        return LayerSpec::conv(j.at("kernel"), j.at("in_ch"), j.at("out_ch"), j.at("stride"), j.at("pad"));
    }
    if (t == "relu") return LayerSpec::relu();
    if (t == "maxpool") return LayerSpec::maxpool();
    if (t == "dense") return LayerSpec::dense(j.at("in"), j.at("out"));
    if (t == "concat_skip") {
        std::vector<LayerSpec> block;
        for (const auto& x : j.at("block")) block.push_back(layer_from_json(x));
        return LayerSpec::concat_skip(std::move(block));
    }
    throw NetError("unknown layer type '" + t + "'");
}

nlohmann::json to_json(const NetSpec& spec) {
    nlohmann::json j;
    j["name"] = spec.name;
    j["input"] = {spec.input.c, spec.input.h, spec.input.w};
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : spec.layers) layers.push_back(layer_to_json(l));
    j["layers"] = layers;
    return j;
}

NetSpec net_spec_from_json(const nlohmann::json& j) {
    NetSpec s;
    s.name = j.at("name").get<std::string>();
    const auto& in = j.at("input");
    s.input = {in.at(0).get<int>(), in.at(1).get<int>(), in.at(2).get<int>()};
    for (const auto& l : j.at("layers")) s.layers.push_back(layer_from_json(l));
    return s;
}

namespace {

int compile_layers(const std::vector<LayerSpec>& layers, int src, Plan& plan) {
    for (const LayerSpec& l : layers) {
        const Shape in = plan.buffers[static_cast<std::size_t>(src)];
        Op op{l.kind, l, src, -1, 0, 0, 0, -1};
        Shape out = in;
        switch (l.kind) {
            case LayerKind::conv: {
                if (l.kernel <= 0 || l.stride <= 0 || l.pad < 0 || l.out_ch <= 0) throw NetError("invalid conv layer");
                if (in.c != l.in_ch) {
                    throw NetError("conv expects " + std::to_string(l.in_ch) + " input channels, got " + shape_str(in));
                }
                out.c = l.out_ch;
                out.h = (in.h + 2 * l.pad - l.kernel) / l.stride + 1;
                out.w = (in.w + 2 * l.pad - l.kernel) / l.stride + 1;
                if (out.h <= 0 || out.w <= 0) throw NetError("conv output empty for input " + shape_str(in));
                op.weight_offset = plan.param_count;
                plan.param_count += static_cast<std::size_t>(l.out_ch) * l.in_ch * l.kernel * l.kernel;
                op.bias_offset = plan.param_count;
                plan.param_count += static_cast<std::size_t>(l.out_ch);
                op.slot = plan.conv_slots++;
                break;
            }
            case LayerKind::relu:
                break;
            case LayerKind::maxpool:
                out.h = in.h / 2;
                out.w = in.w / 2;
                if (out.h <= 0 || out.w <= 0) throw NetError("maxpool on too small input " + shape_str(in));
                op.slot = plan.pool_slots++;
                break;
            case LayerKind::dense:
                if (static_cast<std::size_t>(l.in) != in.size() || l.out <= 0) {
                    throw NetError("dense expects " + std::to_string(l.in) + " inputs, got " + shape_str(in));
                }
                out = {l.out, 1, 1};
                op.weight_offset = plan.param_count;
                plan.param_count += static_cast<std::size_t>(l.out) * l.in;
                op.bias_offset = plan.param_count;
                plan.param_count += static_cast<std::size_t>(l.out);
                break;
            case LayerKind::concat_skip: {
                const int inner = compile_layers(l.block, src, plan);
                const Shape b = plan.buffers[static_cast<std::size_t>(inner)];
                if (b.h != in.h || b.w != in.w) {
                    throw NetError("concat_skip block changes spatial size: " + shape_str(in) + " -> " + shape_str(b));
                }
                op.src2 = inner;
                out = {in.c + b.c, in.h, in.w};
                break;
            }
        }
        plan.buffers.push_back(out);
        op.dst = static_cast<int>(plan.buffers.size()) - 1;
        src = op.dst;
        plan.ops.push_back(std::move(op));
    }
    return src;
}

}  // namespace

Plan compile(const NetSpec& spec) {
    if (spec.input.size() == 0) throw NetError("empty input shape");
    Plan plan;
    plan.buffers.push_back(spec.input);
    plan.output = compile_layers(spec.layers, 0, plan);
    if (plan.buffers[static_cast<std::size_t>(plan.output)].size() != static_cast<std::size_t>(kOutputDims)) {
        throw NetError("network output must have " + std::to_string(kOutputDims) + " values, got " +
                       shape_str(plan.buffers[static_cast<std::size_t>(plan.output)]));
    }
    return plan;
}

std::array<double, kOutputDims> OutputScaling::normalize(const std::array<double, kOutputDims>& v) const {
    std::array<double, kOutputDims> o{};
    for (int i = 0; i < kOutputDims; ++i) o[i] = (v[i] - center[i]) / half_range[i];
    return o;
}

std::array<double, kOutputDims> OutputScaling::denormalize(const std::array<double, kOutputDims>& v) const {
    std::array<double, kOutputDims> o{};
    for (int i = 0; i < kOutputDims; ++i) o[i] = v[i] * half_range[i] + center[i];
    return o;
}

template <typename T>
void Workspace<T>::prepare(const Plan& plan) {
    act.resize(plan.buffers.size());
    grad.resize(plan.buffers.size());
    for (std::size_t i = 0; i < plan.buffers.size(); ++i) {
        act[i].resize(plan.buffers[i].size());
        grad[i].resize(plan.buffers[i].size());
    }
    cols.resize(static_cast<std::size_t>(plan.conv_slots));
    argmax.resize(static_cast<std::size_t>(plan.pool_slots));
    for (const Op& op : plan.ops) {
        const Shape& in = plan.buffers[static_cast<std::size_t>(op.src)];
        const Shape& out = plan.buffers[static_cast<std::size_t>(op.dst)];
        if (op.kind == LayerKind::conv) {
            cols[static_cast<std::size_t>(op.slot)].resize(static_cast<std::size_t>(in.c) * op.spec.kernel *
                                                           op.spec.kernel * out.h * out.w);
        } else if (op.kind == LayerKind::maxpool) {
            argmax[static_cast<std::size_t>(op.slot)].resize(out.size());
        }
    }
    has_forward = false;
}

template struct Workspace<float>;
template struct Workspace<double>;

template <typename T>
Model<T> init_params(const NetSpec& spec, std::uint64_t seed) {
    Model<T> m;
    m.spec = spec;
    m.plan = compile(spec);
    m.params.assign(m.plan.param_count, T(0));
    m.adam_m.assign(m.plan.param_count, T(0));
    m.adam_v.assign(m.plan.param_count, T(0));
    std::mt19937_64 rng(seed);
    for (const Op& op : m.plan.ops) {
        std::size_t fan_in = 0, count = 0;
        if (op.kind == LayerKind::conv) {
            fan_in = static_cast<std::size_t>(op.spec.in_ch) * op.spec.kernel * op.spec.kernel;
            count = fan_in * static_cast<std::size_t>(op.spec.out_ch);
        } else if (op.kind == LayerKind::dense) {
            fan_in = static_cast<std::size_t>(op.spec.in);
            count = fan_in * static_cast<std::size_t>(op.spec.out);
        } else {
            continue;
        }
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (std::size_t i = 0; i < count; ++i) m.params[op.weight_offset + i] = static_cast<T>(dist(rng));
    }
    return m;
}

namespace {

template <typename T>
void im2col(const T* in, const Shape& is, const LayerSpec& l, const Shape& os, T* col) {
    const int k = l.kernel, s = l.stride, p = l.pad;
    const int hw = os.h * os.w;
    for (int c = 0; c < is.c; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* row = col + static_cast<std::size_t>((c * k + ky) * k + kx) * hw;
                for (int oy = 0; oy < os.h; ++oy) {
                    const int iy = oy * s + ky - p;
                    T* dst = row + oy * os.w;
                    if (iy < 0 || iy >= is.h) {
                        std::fill(dst, dst + os.w, T(0));
                        continue;
                    }
                    const T* src = in + static_cast<std::size_t>(c * is.h + iy) * is.w;
                    for (int ox = 0; ox < os.w; ++ox) {
                        const int ix = ox * s + kx - p;
                        dst[ox] = (ix >= 0 && ix < is.w) ? src[ix] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, const Shape& is, const LayerSpec& l, const Shape& os, T* in_grad) {
    const int k = l.kernel, s = l.stride, p = l.pad;
    const int hw = os.h * os.w;
    for (int c = 0; c < is.c; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* row = col + static_cast<std::size_t>((c * k + ky) * k + kx) * hw;
                for (int oy = 0; oy < os.h; ++oy) {
                    const int iy = oy * s + ky - p;
                    if (iy < 0 || iy >= is.h) continue;
                    T* dst = in_grad + static_cast<std::size_t>(c * is.h + iy) * is.w;
                    const T* src = row + oy * os.w;
                    for (int ox = 0; ox < os.w; ++ox) {
                        const int ix = ox * s + kx - p;
                        if (ix >= 0 && ix < is.w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename T>
std::span<const T> forward(const Model<T>& model, std::span<const T> input, Workspace<T>& ws) {
    const Plan& plan = model.plan;
    if (input.size() != plan.buffers[0].size()) {
        throw NetError("input has " + std::to_string(input.size()) + " values, network expects " +
                       shape_str(plan.buffers[0]));
    }
    if (ws.act.size() != plan.buffers.size()) ws.prepare(plan);
    std::copy(input.begin(), input.end(), ws.act[0].begin());

    for (const Op& op : plan.ops) {
        const Shape& is = plan.buffers[static_cast<std::size_t>(op.src)];
        const Shape& os = plan.buffers[static_cast<std::size_t>(op.dst)];
        const AlignedVector<T>& in = ws.act[static_cast<std::size_t>(op.src)];
        AlignedVector<T>& out = ws.act[static_cast<std::size_t>(op.dst)];
        switch (op.kind) {
            case LayerKind::conv: {
                AlignedVector<T>& col = ws.cols[static_cast<std::size_t>(op.slot)];
                im2col(in.data(), is, op.spec, os, col.data());
                const int ckk = is.c * op.spec.kernel * op.spec.kernel;
                const int hw = os.h * os.w;
                Eigen::Map<const MatR<T>> w(model.params.data() + op.weight_offset, os.c, ckk);
                Eigen::Map<const VecX<T>> b(model.params.data() + op.bias_offset, os.c);
                Eigen::Map<const MatR<T>> c(col.data(), ckk, hw);
                Eigen::Map<MatR<T>> o(out.data(), os.c, hw);
                o.noalias() = w * c;
                o.colwise() += b;
                break;
            }
            case LayerKind::relu:
                for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
                break;
            case LayerKind::maxpool: {
                auto& am = ws.argmax[static_cast<std::size_t>(op.slot)];
                for (int c = 0; c < os.c; ++c) {
                    for (int y = 0; y < os.h; ++y) {
                        for (int x = 0; x < os.w; ++x) {
                            std::uint32_t best = static_cast<std::uint32_t>((c * is.h + 2 * y) * is.w + 2 * x);
                            for (int dy = 0; dy < 2; ++dy) {
                                for (int dx = 0; dx < 2; ++dx) {
                                    const auto idx =
                                        static_cast<std::uint32_t>((c * is.h + 2 * y + dy) * is.w + 2 * x + dx);
                                    if (in[idx] > in[best]) best = idx;
                                }
                            }
                            const std::size_t o_idx = static_cast<std::size_t>((c * os.h + y) * os.w + x);
                            am[o_idx] = best;
                            out[o_idx] = in[best];
                        }
                    }
                }
                break;
            }
            case LayerKind::dense: {
                Eigen::Map<const MatR<T>> w(model.params.data() + op.weight_offset, op.spec.out, op.spec.in);
                Eigen::Map<const VecX<T>> b(model.params.data() + op.bias_offset, op.spec.out);
                Eigen::Map<const VecX<T>> x(in.data(), op.spec.in);
                Eigen::Map<VecX<T>> y(out.data(), op.spec.out);
                y.noalias() = w * x;
                y += b;
                break;
            }
            case LayerKind::concat_skip: {
                const AlignedVector<T>& second = ws.act[static_cast<std::size_t>(op.src2)];
                std::copy(in.begin(), in.end(), out.begin());
                std::copy(second.begin(), second.end(), out.begin() + static_cast<std::ptrdiff_t>(in.size()));
                break;
            }
        }
    }
    ws.has_forward = true;
    const auto& o = ws.act[static_cast<std::size_t>(plan.output)];
    return {o.data(), o.size()};
}

template <typename T>
void backward(const Model<T>& model, Workspace<T>& ws, std::span<const T> loss_grad, std::span<T> param_grad,
              std::span<T> input_grad) {
    const Plan& plan = model.plan;
    if (!ws.has_forward) throw NetError("backward called without a cached forward pass");
    if (loss_grad.size() != static_cast<std::size_t>(kOutputDims)) throw NetError("loss gradient must have 5 values");
    if (param_grad.size() != model.params.size()) throw NetError("parameter gradient size mismatch");

    for (auto& g : ws.grad) std::fill(g.begin(), g.end(), T(0));
    std::copy(loss_grad.begin(), loss_grad.end(), ws.grad[static_cast<std::size_t>(plan.output)].begin());

    AlignedVector<T> dcol;
    for (auto it = plan.ops.rbegin(); it != plan.ops.rend(); ++it) {
        const Op& op = *it;
        const Shape& is = plan.buffers[static_cast<std::size_t>(op.src)];
        const Shape& os = plan.buffers[static_cast<std::size_t>(op.dst)];
        const AlignedVector<T>& in = ws.act[static_cast<std::size_t>(op.src)];
        const AlignedVector<T>& gout = ws.grad[static_cast<std::size_t>(op.dst)];
        AlignedVector<T>& gin = ws.grad[static_cast<std::size_t>(op.src)];
        switch (op.kind) {
            case LayerKind::conv: {
                const AlignedVector<T>& col = ws.cols[static_cast<std::size_t>(op.slot)];
                const int ckk = is.c * op.spec.kernel * op.spec.kernel;
                const int hw = os.h * os.w;
                Eigen::Map<const MatR<T>> w(model.params.data() + op.weight_offset, os.c, ckk);
                Eigen::Map<const MatR<T>> c(col.data(), ckk, hw);
                Eigen::Map<const MatR<T>> g(gout.data(), os.c, hw);
                Eigen::Map<MatR<T>> gw(param_grad.data() + op.weight_offset, os.c, ckk);
                Eigen::Map<VecX<T>> gb(param_grad.data() + op.bias_offset, os.c);
                gw.noalias() += g * c.transpose();
                gb += g.rowwise().sum();
                dcol.resize(static_cast<std::size_t>(ckk) * hw);
                Eigen::Map<MatR<T>> dc(dcol.data(), ckk, hw);
                dc.noalias() = w.transpose() * g;
                col2im_add(dcol.data(), is, op.spec, os, gin.data());
                break;
            }
            case LayerKind::relu:
                for (std::size_t i = 0; i < gin.size(); ++i) {
                    if (in[i] > T(0)) gin[i] += gout[i];
                }
                break;
            case LayerKind::maxpool: {
                const auto& am = ws.argmax[static_cast<std::size_t>(op.slot)];
                for (std::size_t i = 0; i < gout.size(); ++i) gin[am[i]] += gout[i];
                break;
            }
            case LayerKind::dense: {
                Eigen::Map<const MatR<T>> w(model.params.data() + op.weight_offset, op.spec.out, op.spec.in);
                Eigen::Map<const VecX<T>> x(in.data(), op.spec.in);
                Eigen::Map<const VecX<T>> g(gout.data(), op.spec.out);
                Eigen::Map<MatR<T>> gw(param_grad.data() + op.weight_offset, op.spec.out, op.spec.in);
                Eigen::Map<VecX<T>> gb(param_grad.data() + op.bias_offset, op.spec.out);
                Eigen::Map<VecX<T>> gx(gin.data(), op.spec.in);
                gw.noalias() += g * x.transpose();
                gb += g;
                gx.noalias() += w.transpose() * g;
                break;
            }
            case LayerKind::concat_skip: {
                AlignedVector<T>& g2 = ws.grad[static_cast<std::size_t>(op.src2)];
                for (std::size_t i = 0; i < gin.size(); ++i) gin[i] += gout[i];
                for (std::size_t i = 0; i < g2.size(); ++i) g2[i] += gout[gin.size() + i];
                break;
            }
        }
    }
    if (!input_grad.empty()) {
        if (input_grad.size() != ws.grad[0].size()) throw NetError("input gradient size mismatch");
        std::copy(ws.grad[0].begin(), ws.grad[0].end(), input_grad.begin());
    }
}

LossResult mse_loss(std::span<const double> pred, std::span<const double> target, std::span<const double> weights) {
    if (pred.size() != static_cast<std::size_t>(kOutputDims) || target.size() != pred.size() ||
        weights.size() != pred.size()) {
        throw NetError("mse_loss expects 5-vectors");
    }
    LossResult r;
    const double n = static_cast<double>(kOutputDims);
    for (int i = 0; i < kOutputDims; ++i) {
        const double d = pred[static_cast<std::size_t>(i)] - target[static_cast<std::size_t>(i)];
        r.loss += weights[static_cast<std::size_t>(i)] * d * d / n;
        r.grad[static_cast<std::size_t>(i)] = 2.0 * weights[static_cast<std::size_t>(i)] * d / n;
    }
    return r;
}

template <typename T>
void adam_step(Model<T>& model, std::span<const T> grads, const OptimizerSpec& spec, int t) {
    if (t < 1) throw NetError("adam_step needs t >= 1");
    if (grads.size() != model.params.size()) throw NetError("adam_step gradient size mismatch");
    const double b1 = spec.beta1, b2 = spec.beta2;
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        const double g = grads[i];
        const double m = b1 * model.adam_m[i] + (1.0 - b1) * g;
        const double v = b2 * model.adam_v[i] + (1.0 - b2) * g * g;
        model.adam_m[i] = static_cast<T>(m);
        model.adam_v[i] = static_cast<T>(v);
        const double step = spec.lr * (m / c1) / (std::sqrt(v / c2) + spec.eps);
        model.params[i] = static_cast<T>(model.params[i] - step);
    }
}

template <typename To, typename From>
Model<To> convert(const Model<From>& m) {
    Model<To> o;
    o.spec = m.spec;
    o.plan = m.plan;
    o.scaling = m.scaling;
    o.params.assign(m.params.begin(), m.params.end());
    o.adam_m.assign(m.adam_m.begin(), m.adam_m.end());
    o.adam_v.assign(m.adam_v.begin(), m.adam_v.end());
    return o;
}

template Model<float> init_params<float>(const NetSpec&, std::uint64_t);
template Model<double> init_params<double>(const NetSpec&, std::uint64_t);
template std::span<const float> forward(const Model<float>&, std::span<const float>, Workspace<float>&);
template std::span<const double> forward(const Model<double>&, std::span<const double>, Workspace<double>&);
template void backward(const Model<float>&, Workspace<float>&, std::span<const float>, std::span<float>,
                       std::span<float>);
template void backward(const Model<double>&, Workspace<double>&, std::span<const double>, std::span<double>,
                       std::span<double>);
template void adam_step(Model<float>&, std::span<const float>, const OptimizerSpec&, int);
template void adam_step(Model<double>&, std::span<const double>, const OptimizerSpec&, int);
template Model<double> convert<double, float>(const Model<float>&);
template Model<float> convert<float, double>(const Model<double>&);
template Model<float> convert<float, float>(const Model<float>&);

namespace {

constexpr char kModelMagic[8] = {'S', 'P', 'L', 'Y', 'N', 'N', '0', '1'};
constexpr std::uint32_t kModelVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}
    void need(std::size_t n, const char* what) const {
        if (pos_ + n > b_.size()) {
            throw NetError(std::string("model file truncated reading ") + what + " at byte " + std::to_string(pos_));
        }
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    std::size_t pos() const { return pos_; }
    void skip(std::size_t n) { pos_ += n; }
    const std::uint8_t* here() const { return b_.data() + pos_; }
    std::size_t remaining() const { return b_.size() - pos_; }

private:
    const std::vector<std::uint8_t>& b_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_model(const Model<float>& model) {
    nlohmann::json meta;
    meta["net"] = to_json(model.spec);
    meta["scaling"] = {{"center", model.scaling.center}, {"half_range", model.scaling.half_range}};
    const std::string js = meta.dump();

    std::vector<std::uint8_t> out(std::begin(kModelMagic), std::end(kModelMagic));
    put_u32(out, kModelVersion);
    put_u32(out, static_cast<std::uint32_t>(js.size()));
    out.insert(out.end(), js.begin(), js.end());
    put_u64(out, model.params.size());
    for (float p : model.params) put_u32(out, std::bit_cast<std::uint32_t>(p));
    return out;
}

Model<float> deserialize_model(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    r.need(8, "magic");
    if (std::memcmp(r.here(), kModelMagic, 8) != 0) throw NetError("bad model magic at byte 0");
    r.skip(8);
    const std::uint32_t version = r.u32("version");
    if (version != kModelVersion) {
        throw NetError("unsupported model version " + std::to_string(version) + " at byte 8");
    }
    const std::uint32_t js_len = r.u32("metadata length");
    r.need(js_len, "metadata");
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(r.here(), r.here() + js_len);
    } catch (const nlohmann::json::exception& e) {
        throw NetError("corrupt model metadata at byte " + std::to_string(r.pos()) + ": " + e.what());
    }
    r.skip(js_len);

    Model<float> m;
    try {
        m.spec = net_spec_from_json(meta.at("net"));
        m.scaling.center = meta.at("scaling").at("center").get<std::array<double, kOutputDims>>();
        m.scaling.half_range = meta.at("scaling").at("half_range").get<std::array<double, kOutputDims>>();
    } catch (const nlohmann::json::exception& e) {
        throw NetError(std::string("corrupt model metadata: ") + e.what());
    }
    m.plan = compile(m.spec);
    const std::size_t count_pos = r.pos();
    const std::uint64_t count = r.u64("parameter count");
    if (count != m.plan.param_count) {
        throw NetError("parameter count " + std::to_string(count) + " at byte " + std::to_string(count_pos) +
                       " does not match architecture (" + std::to_string(m.plan.param_count) + ")");
    }
    if (r.remaining() != count * 4) {
        throw NetError("parameter blob at byte " + std::to_string(r.pos()) + " holds " +
                       std::to_string(r.remaining()) + " bytes, expected " + std::to_string(count * 4));
    }
    m.params.resize(count);
    for (std::size_t i = 0; i < count; ++i) m.params[i] = std::bit_cast<float>(r.u32("parameters"));
    m.adam_m.assign(count, 0.0f);
    m.adam_v.assign(count, 0.0f);
    return m;
}

void save_model(const Model<float>& model, const std::string& path) {
    const auto bytes = serialize_model(model);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw NetError("cannot write model file " + path);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw NetError("failed writing model file " + path);
}

Model<float> load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw NetError("cannot open model file " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    try {
        return deserialize_model(bytes);
    } catch (const NetError& e) {
        throw NetError(path + ": " + e.what());
    }
}

std::array<double, kOutputDims> predict(const Model<float>& model, std::span<const float> input,
                                        Workspace<float>& ws) {
    const auto out = forward(model, input, ws);
    std::array<double, kOutputDims> raw{};
    for (int i = 0; i < kOutputDims; ++i) raw[static_cast<std::size_t>(i)] = out[static_cast<std::size_t>(i)];
    return model.scaling.denormalize(raw);
}

}  // namespace softply::nn
