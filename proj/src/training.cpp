#include "softply/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "softply/random.hpp"

namespace softply::training {

void TrainSchedule::validate() const {
    if (!(initial_lr > 0.0)) throw TrainingError("schedule: initial_lr must be > 0");
    if (patience < 1) throw TrainingError("schedule: patience must be >= 1");
    if (!(lr_divisor > 1.0)) throw TrainingError("schedule: lr_divisor must be > 1");
    if (max_epochs < 1) throw TrainingError("schedule: max_epochs must be >= 1");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
        throw TrainingError("schedule: validation_fraction must be in (0, 1)");
    }
    if (batch_size < 1) throw TrainingError("schedule: batch_size must be >= 1");
}

PlateauScheduler::PlateauScheduler(const TrainSchedule& schedule)
    : schedule_(schedule), lr_(schedule.initial_lr), best_(std::numeric_limits<double>::infinity()) {
    schedule_.validate();
}

PlateauScheduler::Event PlateauScheduler::observe(double val_loss) {
    if (stopped_) throw TrainingError("scheduler already stopped");
    Event ev;
    ++epochs_;
    if (val_loss < best_) {
        best_ = val_loss;
        stale_ = 0;
        ev.improved = true;
    } else if (++stale_ >= schedule_.patience) {
        if (!dropped_) {
            dropped_ = true;
            stale_ = 0;
            lr_ /= schedule_.lr_divisor;
            ev.lr_dropped = true;
        } else {
            ev.stop = true;
        }
    }
    if (epochs_ >= schedule_.max_epochs) ev.stop = true;
    stopped_ = ev.stop;
    return ev;
}

// ---- data selection -----------------------------------------------------------

nn::OutputScaling scaling_for(const geometry::PoseGridSpec& grid) {
    nn::OutputScaling s;
    const auto axes = grid.axes();
    for (std::size_t i = 0; i < 5; ++i) {
        s.center[i] = axes[i]->center;
        s.half_range[i] = axes[i]->half_range > 0.0 ? axes[i]->half_range : 1.0;
    }
    return s;
}

std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>> carve_validation(
    const std::vector<std::uint32_t>& poses, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw TrainingError("validation fraction must be in (0, 1)");
    if (poses.size() < 2) throw TrainingError("need at least two train poses to carve a validation set");
    const CounterStream rng(derive_seed(seed, {0x7a1}));
    std::vector<std::pair<std::uint64_t, std::uint32_t>> ranked;
    for (std::uint32_t p : poses) ranked.emplace_back(rng.bits(p), p);
    std::sort(ranked.begin(), ranked.end());
    auto n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(poses.size()) + 0.5));
    n_val = std::clamp<std::size_t>(n_val, 1, poses.size() - 1);
    std::vector<std::uint32_t> fit, val;
    for (std::size_t i = 0; i < ranked.size(); ++i) (i < n_val ? val : fit).push_back(ranked[i].second);
    std::sort(fit.begin(), fit.end());
    std::sort(val.begin(), val.end());
    return {fit, val};
}

std::vector<std::size_t> select(const dataset::PreparedSet& set, const std::vector<std::uint32_t>& poses,
                                const std::function<bool(std::uint32_t)>& grasp_ok) {
    std::uint32_t top = 0;
    for (std::uint32_t p : poses) top = std::max(top, p);
    std::vector<char> in(poses.empty() ? 0 : top + 1, 0);
    for (std::uint32_t p : poses) in[p] = 1;
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto& k = set.keys[i];
        if (k.pose_index < in.size() && in[k.pose_index] && (!grasp_ok || grasp_ok(k.grasp_id))) out.push_back(i);
    }
    return out;
}

DataViews make_views(const dataset::PreparedSet& set, const std::vector<dataset::Split>& assignment,
                     double validation_fraction, double fraction, std::uint64_t seed) {
    if (assignment.size() != set.size()) throw TrainingError("make_views: assignment does not match the set");
    std::vector<std::uint32_t> train_poses;
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (assignment[i] == dataset::Split::train) train_poses.push_back(set.keys[i].pose_index);
    }
    std::sort(train_poses.begin(), train_poses.end());
    train_poses.erase(std::unique(train_poses.begin(), train_poses.end()), train_poses.end());
    auto [fit_poses, val_poses] = carve_validation(train_poses, validation_fraction, seed);
    fit_poses = dataset::subsample(fit_poses, fraction, seed);

    std::vector<char> fit_in, val_in;
    auto mark = [](std::vector<char>& m, const std::vector<std::uint32_t>& ps) {
        for (std::uint32_t p : ps) {
            if (p >= m.size()) m.resize(p + 1, 0);
            m[p] = 1;
        }
    };
    mark(fit_in, fit_poses);
    mark(val_in, val_poses);
    DataViews v;
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (assignment[i] != dataset::Split::train) continue;
        const auto p = set.keys[i].pose_index;
        if (p < fit_in.size() && fit_in[p]) v.fit.push_back(i);
        if (p < val_in.size() && val_in[p]) v.validation.push_back(i);
    }
    return v;
}

// ---- training ------------------------------------------------------------------

namespace {

constexpr std::array<double, 5> kUnitWeights{1.0, 1.0, 1.0, 1.0, 1.0};

std::array<double, 5> target_of(const Model& model, const geometry::DeformationState& label) {
    return model.scaling.normalize(label.as_array());
}

double sample_loss(const Model& model, const dataset::PreparedSet& set, std::size_t i, nn::Workspace<float>& ws,
                   std::array<double, 5>* grad) {
    const auto out = nn::forward(model, set.input(i), ws);
    std::array<double, 5> pred{};
    for (std::size_t k = 0; k < 5; ++k) pred[k] = out[k];
    const auto target = target_of(model, set.labels[i]);
    const auto r = nn::mse_loss(pred, target, kUnitWeights);
    if (grad) *grad = r.grad;
    return r.loss;
}

void shuffle(std::vector<std::size_t>& v, std::uint64_t seed) {
    const CounterStream rng(seed);
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.bits(i) % i]);
}

}  // namespace

double mean_loss(const Model& model, const dataset::PreparedSet& set, const std::vector<std::size_t>& idx) {
    if (idx.empty()) throw TrainingError("mean_loss on an empty set");
    nn::Workspace<float> ws;
    double sum = 0.0;
    for (std::size_t i : idx) sum += sample_loss(model, set, i, ws, nullptr);
    return sum / static_cast<double>(idx.size());
}

TrainResult train(Model model, const dataset::PreparedSet& set, const std::vector<std::size_t>& train_idx,
                  const std::vector<std::size_t>& val_idx, const TrainSchedule& schedule, std::uint64_t seed,
                  const TrainOptions& opts) {
    schedule.validate();
    if (train_idx.empty()) throw TrainingError("train: empty training set");
    if (val_idx.empty()) throw TrainingError("train: empty validation set");
    if (model.spec.input.h != set.input_size || model.spec.input.w != set.input_size || model.spec.input.c != 1) {
        throw TrainingError("train: model input does not match the prepared inputs");
    }
    const std::size_t np = model.params.size();
    model.adam_m.assign(np, 0.0f);
    model.adam_v.assign(np, 0.0f);

    PlateauScheduler sched(schedule);
    nn::Workspace<float> ws;
    nn::AlignedVector<float> grads(np);
    std::array<double, 5> lg{};
    std::array<float, 5> lgf{};
    std::vector<std::size_t> order = train_idx;
    int step = 0;

    TrainResult res;
    res.model = model;
    res.best_val_loss = std::numeric_limits<double>::infinity();

    for (int epoch = 1; !sched.stopped(); ++epoch) {
        const double lr = sched.lr();
        nn::OptimizerSpec opt = opts.optimizer;
        opt.lr = lr;
        opt.batch_size = schedule.batch_size;
        shuffle(order, derive_seed(seed, {static_cast<std::uint64_t>(epoch)}));

        double train_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(schedule.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(schedule.batch_size));
            std::fill(grads.begin(), grads.end(), 0.0f);
            double batch_sum = 0.0;
            for (std::size_t b = start; b < end; ++b) {
                batch_sum += sample_loss(model, set, order[b], ws, &lg);
                for (std::size_t k = 0; k < 5; ++k) lgf[k] = static_cast<float>(lg[k]);
                nn::backward<float>(model, ws, lgf, grads);
            }
            if (!std::isfinite(batch_sum)) {
                throw TrainingError("training diverged: non-finite loss in epoch " + std::to_string(epoch));
            }
            train_sum += batch_sum;
            const float inv = 1.0f / static_cast<float>(end - start);
            for (float& g : grads) g *= inv;
            nn::adam_step<float>(model, grads, opt, ++step);
        }

        const double val = mean_loss(model, set, val_idx);
        if (!std::isfinite(val)) {
            throw TrainingError("training diverged: non-finite validation loss in epoch " + std::to_string(epoch));
        }
        const auto ev = sched.observe(val);
        EpochLog row{epoch, lr, train_sum / static_cast<double>(order.size()), val};
        res.log.push_back(row);
        if (ev.improved) {
            res.model.params = model.params;
            res.best_val_loss = val;
            res.best_epoch = epoch;
        }
        if (opts.on_epoch) opts.on_epoch(row);
    }
    res.model.adam_m = model.adam_m;
    res.model.adam_v = model.adam_v;
    return res;
}

std::vector<TrainResult> train_ensemble(const nn::NetSpec& spec, const nn::OutputScaling& scaling, int members,
                                        const dataset::PreparedSet& set, const DataViews& views,
                                        const TrainSchedule& schedule, std::uint64_t seed,
                                        const TrainOptions& opts) {
    if (members < 1) throw TrainingError("ensemble needs at least one member");
    std::vector<TrainResult> out;
    for (int m = 0; m < members; ++m) {
        const std::uint64_t ms = derive_seed(seed, {static_cast<std::uint64_t>(m)});
        Model model = nn::init_params<float>(spec, derive_seed(ms, {0x1a17}));
        model.scaling = scaling;
        out.push_back(train(std::move(model), set, views.fit, views.validation, schedule, derive_seed(ms, {0x5b0f}), opts));
    }
    return out;
}

void write_epoch_csv(const std::vector<EpochLog>& log, std::ostream& os) {
    os << "epoch,lr,train_loss,val_loss\n";
    char buf[160];
    for (const auto& r : log) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", r.epoch, r.lr, r.train_loss, r.val_loss);
        os << buf;
    }
}

// ---- evaluation --------------------------------------------------------------------

namespace {

double median_sorted(const double* v, std::size_t n) {
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

Summary summarize(std::vector<double> values) {
    if (values.empty()) throw TrainingError("summarize: no values");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    // Tukey hinges: the halves share the median when n is odd.
    const std::size_t half = (n + 1) / 2;
    Summary s;
    s.min = values.front();
    s.max = values.back();
    s.median = median_sorted(values.data(), n);
    s.q1 = median_sorted(values.data(), half);
    s.q3 = median_sorted(values.data() + (n - half), half);
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
    return s;
}

ErrorReport evaluate_predictions(const std::vector<Prediction>& predictions,
                                 const std::vector<geometry::DeformationState>& labels, const std::string& split) {
    if (predictions.size() != labels.size()) throw TrainingError("evaluate: predictions and labels differ in count");
    if (predictions.empty()) throw TrainingError("evaluate: empty record set");
    ErrorReport r;
    r.split = split;
    r.count = labels.size();
    std::array<std::vector<double>, 5> se, ae;
    std::vector<double> cart;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto l = labels[i].as_array();
        std::array<double, 5> e{};
        for (std::size_t k = 0; k < 5; ++k) {
            e[k] = predictions[i][k] - l[k];
            se[k].push_back(e[k]);
            ae[k].push_back(std::abs(e[k]));
        }
        cart.push_back(std::sqrt(e[0] * e[0] + e[1] * e[1] + e[2] * e[2]));
    }
    for (std::size_t k = 0; k < 5; ++k) {
        r.signed_error[k] = summarize(se[k]);
        r.abs_error[k] = summarize(ae[k]);
    }
    r.cartesian = summarize(cart);
    return r;
}

namespace {

nlohmann::json summary_json(const Summary& s) {
    return {{"min", s.min}, {"q1", s.q1}, {"median", s.median}, {"q3", s.q3}, {"max", s.max}, {"mean", s.mean}};
}

constexpr const char* kAxisNames[5] = {"x", "y", "z", "theta", "gamma"};

}  // namespace

nlohmann::json to_json(const ErrorReport& r) {
    nlohmann::json axes;
    for (std::size_t k = 0; k < 5; ++k) {
        axes[kAxisNames[k]] = {{"signed", summary_json(r.signed_error[k])}, {"abs", summary_json(r.abs_error[k])}};
    }
    return {{"split", r.split}, {"count", r.count}, {"axes", axes}, {"cartesian", summary_json(r.cartesian)}};
}

Prediction predict_ensemble(const Ensemble& ensemble, std::span<const float> input, nn::Workspace<float>& ws) {
    if (ensemble.empty()) throw TrainingError("predict_ensemble: empty ensemble");
    std::array<std::vector<double>, 5> per_axis;
    for (const auto& m : ensemble) {
        const auto p = nn::predict(m, input, ws);
        for (std::size_t k = 0; k < 5; ++k) per_axis[k].push_back(p[k]);
    }
    Prediction out{};
    for (std::size_t k = 0; k < 5; ++k) {
        std::sort(per_axis[k].begin(), per_axis[k].end());
        double sum = 0.0;
        for (double v : per_axis[k]) sum += v;
        out[k] = sum / static_cast<double>(ensemble.size());
    }
    return out;
}

ErrorReport evaluate(const Ensemble& ensemble, const dataset::PreparedSet& set, const std::vector<std::size_t>& idx,
                     const std::string& split) {
    nn::Workspace<float> ws;
    std::vector<Prediction> preds;
    std::vector<geometry::DeformationState> labels;
    preds.reserve(idx.size());
    for (std::size_t i : idx) {
        preds.push_back(predict_ensemble(ensemble, set.input(i), ws));
        labels.push_back(set.labels[i]);
    }
    return evaluate_predictions(preds, labels, split);
}

// ---- ablation ------------------------------------------------------------------------

std::string AblationCell::key() const {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s/f%.2f/g%d", architecture.c_str(), fraction, grasp_count);
    return buf;
}

std::vector<AblationCell> ablation_cells(const AblationConfig& cfg) {
    std::vector<AblationCell> cells;
    for (const auto& a : cfg.architectures)
        for (double f : cfg.fractions)
            for (int g : cfg.grasp_counts) cells.push_back({a, f, g});
    return cells;
}

nlohmann::json run_ablation(const AblationConfig& cfg, const dataset::DatasetManifest& manifest,
                            const dataset::PreparedSet& set, const std::function<void(const std::string&)>& log) {
    std::vector<std::uint32_t> order = cfg.grasp_order;
    if (order.empty()) {
        for (const auto& g : manifest.config.grasps) order.push_back(static_cast<std::uint32_t>(g.id));
    }
    const auto scaling = scaling_for(manifest.config.grid);

    nlohmann::json cells = nlohmann::json::array();
    for (const auto& cell : ablation_cells(cfg)) {
        nlohmann::json row = {{"key", cell.key()},
                              {"architecture", cell.architecture},
                              {"fraction", cell.fraction},
                              {"grasp_count", cell.grasp_count}};
        if (log) log("cell " + cell.key());
        try {
            if (cell.grasp_count < 1 || static_cast<std::size_t>(cell.grasp_count) > order.size()) {
                throw TrainingError("grasp count " + std::to_string(cell.grasp_count) + " exceeds the grasp set");
            }
            dataset::SplitPlan plan = manifest.split_plan;
            plan.held_out_grasp_ids.clear();
            std::vector<std::uint32_t> used(order.begin(), order.begin() + cell.grasp_count);
            for (std::size_t i = static_cast<std::size_t>(cell.grasp_count); i < order.size(); ++i) {
                plan.held_out_grasp_ids.insert(order[i]);
            }
            const auto assignment = dataset::split(set.keys, manifest.pose_count, plan);
            const auto views = make_views(set, assignment, cfg.schedule.validation_fraction, cell.fraction, cfg.seed);
            TrainOptions opts;
            opts.optimizer = cfg.optimizer;
            auto results = train_ensemble(nn::NetSpec::preset(cell.architecture, set.input_size), scaling, 1, set,
                                          views, cfg.schedule, cfg.seed, opts);
            const Ensemble ens{results.front().model};

            row["training_grasps"] = used;
            row["fit_records"] = views.fit.size();
            row["validation_records"] = views.validation.size();
            row["epochs"] = results.front().log.size();
            row["best_epoch"] = results.front().best_epoch;
            row["best_val_loss"] = results.front().best_val_loss;
            nlohmann::json reports;
            for (auto which : {dataset::Split::test, dataset::Split::unused_pose, dataset::Split::unused_grasp}) {
                std::vector<std::size_t> idx;
                for (std::size_t i = 0; i < set.size(); ++i) {
                    if (assignment[i] == which) idx.push_back(i);
                }
                if (idx.empty()) continue;
                reports[dataset::split_name(which)] = to_json(evaluate(ens, set, idx, dataset::split_name(which)));
            }
            row["reports"] = reports;
            row["status"] = "ok";
        } catch (const std::exception& e) {
            row["status"] = "failed";
            row["error"] = e.what();
        }
        cells.push_back(row);
    }
    return {{"version", 1}, {"cells", cells}};
}

}  // namespace softply::training
