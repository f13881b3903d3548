#include "softply/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "softply/random.hpp"

namespace softply::nn {

std::vector<GradcheckCase> gradcheck_cases() {
    using L = LayerSpec;
    auto make = [](std::string layer, Shape in, std::vector<LayerSpec> body, int flat) {
        NetSpec s;
        s.name = "gradcheck-" + layer;
        s.input = in;
        s.layers = std::move(body);
        s.layers.push_back(L::dense(flat, kOutputDims));
        return GradcheckCase{std::move(layer), std::move(s)};
    };
    return {
        make("conv3x3", {2, 6, 6}, {L::conv(3, 2, 3)}, 3 * 6 * 6),
        make("conv3x3-stride2", {2, 7, 7}, {L::conv(3, 2, 3, 2, 1)}, 3 * 4 * 4),
        make("conv1x1", {3, 5, 5}, {L::conv(1, 3, 2)}, 2 * 5 * 5),
        make("conv5x5-nopad", {1, 8, 8}, {L::conv(5, 1, 2, 1, 0)}, 2 * 4 * 4),
        make("relu", {2, 4, 4}, {L::relu()}, 2 * 4 * 4),
        make("maxpool", {2, 6, 6}, {L::maxpool()}, 2 * 3 * 3),
        make("dense", {1, 1, 12}, {L::dense(12, 7)}, 7),
        make("concat_skip", {2, 5, 5}, {L::concat_skip({L::conv(3, 2, 2), L::relu()})}, 4 * 5 * 5),
    };
}

namespace {

// ReLU on/off pattern and max-pool winners: the loss is smooth between two
// probes only if this signature is unchanged.
std::vector<std::uint32_t> signature(const Model<double>& m, const Workspace<double>& ws) {
    std::vector<std::uint32_t> sig;
    for (const Op& op : m.plan.ops) {
        if (op.kind == LayerKind::relu) {
            for (double v : ws.act[static_cast<std::size_t>(op.src)]) sig.push_back(v > 0.0);
        } else if (op.kind == LayerKind::maxpool) {
            const auto& am = ws.argmax[static_cast<std::size_t>(op.slot)];
            sig.insert(sig.end(), am.begin(), am.end());
        }
    }
    return sig;
}

struct Probe {
    double loss;
    std::vector<std::uint32_t> sig;
};

Probe evaluate(const Model<double>& m, const std::vector<double>& x, const std::array<double, kOutputDims>& c,
               Workspace<double>& ws) {
    const auto y = forward<double>(m, x, ws);
    double l = 0.0;
    for (int i = 0; i < kOutputDims; ++i) {
        const double v = y[static_cast<std::size_t>(i)];
        l += c[static_cast<std::size_t>(i)] * v + 0.5 * v * v;
    }
    return {l, signature(m, ws)};
}

}  // namespace

std::vector<GradcheckResult> run_gradcheck(int instances, std::uint64_t seed, double eps) {
    std::vector<GradcheckResult> results;
    const auto cases = gradcheck_cases();
    for (std::size_t ci = 0; ci < cases.size(); ++ci) {
        const auto& gc = cases[ci];
        GradcheckResult r;
        r.layer = gc.layer;
        Workspace<double> ws;
        for (int inst = 0; inst < instances; ++inst) {
            const CounterStream rng(derive_seed(seed, {ci, static_cast<std::uint64_t>(inst)}));
            std::uint64_t draw = 0;
            auto uni = [&](double a) { return a * (2.0 * rng.uniform(draw++) - 1.0); };

            Model<double> m = init_params<double>(gc.spec, derive_seed(seed, {ci, static_cast<std::uint64_t>(inst), 1}));
            for (double& p : m.params) p = uni(0.5);
            std::vector<double> x(gc.spec.input.size());
            for (double& v : x) v = uni(1.0);
            std::array<double, kOutputDims> c{};
            for (double& v : c) v = uni(1.0);

            // Analytic gradients: dL/dy = c + y.
            const auto y = forward<double>(m, x, ws);
            std::array<double, kOutputDims> dy{};
            for (int i = 0; i < kOutputDims; ++i) {
                dy[static_cast<std::size_t>(i)] = c[static_cast<std::size_t>(i)] + y[static_cast<std::size_t>(i)];
            }
            AlignedVector<double> gp(m.params.size(), 0.0), gx(x.size(), 0.0);
            backward<double>(m, ws, dy, gp, gx);

            auto check = [&](double& slot, double analytic) {
                const double keep = slot;
                slot = keep + eps;
                const Probe hi = evaluate(m, x, c, ws);
                slot = keep - eps;
                const Probe lo = evaluate(m, x, c, ws);
                slot = keep;
                const Probe mid = evaluate(m, x, c, ws);
                if (hi.sig != mid.sig || lo.sig != mid.sig) {
                    ++r.skipped;
                    return;
                }
                const double numeric = (hi.loss - lo.loss) / (2.0 * eps);
                const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
                r.max_rel_error = std::max(r.max_rel_error, std::abs(analytic - numeric) / denom);
                ++r.checked;
            };
            for (std::size_t i = 0; i < m.params.size(); ++i) check(m.params[i], gp[i]);
            for (std::size_t i = 0; i < x.size(); ++i) check(x[i], gx[i]);
            ++r.instances;
        }
        results.push_back(r);
    }
    return results;
}

}  // namespace softply::nn
