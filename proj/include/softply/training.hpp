#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "softply/dataset.hpp"
#include "softply/tinynn.hpp"

namespace softply::training {

using Model = nn::Model<float>;
using Ensemble = std::vector<Model>;
using Prediction = std::array<double, nn::kOutputDims>;

struct TrainSchedule {
    double initial_lr = 1e-4;
    int patience = 5;
    double lr_divisor = 10.0;
    int max_epochs = 45;
    double validation_fraction = 0.1;  // of train poses
    int batch_size = 64;

    void validate() const;
};

// Plateau rule: a validation loss that is not strictly below the best so far
// counts toward a plateau. The first plateau of `patience` epochs divides the
// learning rate and resets the counter; the second one stops. Training
// always stops after max_epochs.
class PlateauScheduler {
public:
    struct Event {
        bool improved = false;
        bool lr_dropped = false;
        bool stop = false;
    };

    explicit PlateauScheduler(const TrainSchedule& schedule);

    Event observe(double val_loss);
    double lr() const { return lr_; }
    int epochs() const { return epochs_; }
    bool stopped() const { return stopped_; }
    double best() const { return best_; }

private:
    TrainSchedule schedule_;
    double lr_;
    double best_;
    int epochs_ = 0;
    int stale_ = 0;
    bool dropped_ = false;
    bool stopped_ = false;
};

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;

    friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

struct TrainResult {
    Model model;  // parameters of the best validation epoch
    std::vector<EpochLog> log;
    double best_val_loss = 0.0;
    int best_epoch = 0;
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Output scaling that maps each grid axis onto [-1, 1].
nn::OutputScaling scaling_for(const geometry::PoseGridSpec& grid);

// Splits pose ids into (fit, validation) by pose, seeded.
std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>> carve_validation(
    const std::vector<std::uint32_t>& poses, double fraction, std::uint64_t seed);

// Indices into `set` whose pose is in `poses` and whose grasp passes `grasp_ok`.
std::vector<std::size_t> select(const dataset::PreparedSet& set, const std::vector<std::uint32_t>& poses,
                                const std::function<bool(std::uint32_t)>& grasp_ok);

// Fit and validation record indices: validation poses are carved from the
// train poses first, then the remaining poses are subsampled to `fraction`,
// so every fraction validates on the same poses.
struct DataViews {
    std::vector<std::size_t> fit;
    std::vector<std::size_t> validation;
};

DataViews make_views(const dataset::PreparedSet& set, const std::vector<dataset::Split>& assignment,
                     double validation_fraction, double fraction, std::uint64_t seed);

struct TrainOptions {
    nn::OptimizerSpec optimizer;
    std::function<void(const EpochLog&)> on_epoch;
};

TrainResult train(Model model, const dataset::PreparedSet& set, const std::vector<std::size_t>& train_idx,
                  const std::vector<std::size_t>& val_idx, const TrainSchedule& schedule, std::uint64_t seed,
                  const TrainOptions& opts = {});

// Members get independent init and shuffle seeds derived from `seed`.
std::vector<TrainResult> train_ensemble(const nn::NetSpec& spec, const nn::OutputScaling& scaling, int members,
                                        const dataset::PreparedSet& set, const DataViews& views,
                                        const TrainSchedule& schedule, std::uint64_t seed,
                                        const TrainOptions& opts = {});

double mean_loss(const Model& model, const dataset::PreparedSet& set, const std::vector<std::size_t>& idx);

void write_epoch_csv(const std::vector<EpochLog>& log, std::ostream& os);

// Five-number summary with Tukey hinges, plus the mean.
struct Summary {
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
    double mean = 0.0;
};

Summary summarize(std::vector<double> values);

struct ErrorReport {
    std::string split;
    std::size_t count = 0;
    std::array<Summary, 5> signed_error{};  // pred - label, meters / radians
    std::array<Summary, 5> abs_error{};
    Summary cartesian;                       // |(e_x, e_y, e_z)|
};

nlohmann::json to_json(const ErrorReport& r);

ErrorReport evaluate_predictions(const std::vector<Prediction>& predictions,
                                 const std::vector<geometry::DeformationState>& labels, const std::string& split);

ErrorReport evaluate(const Ensemble& ensemble, const dataset::PreparedSet& set, const std::vector<std::size_t>& idx,
                     const std::string& split);

// Arithmetic mean of the members' de-normalized outputs, summed in sorted
// order so the result does not depend on member order.
Prediction predict_ensemble(const Ensemble& ensemble, std::span<const float> input, nn::Workspace<float>& ws);

struct AblationCell {
    std::string architecture;
    double fraction = 1.0;
    int grasp_count = 9;

    std::string key() const;
};

struct AblationConfig {
    std::vector<std::string> architectures{"conv-small", "conv-dense"};
    std::vector<double> fractions{1.0, 0.75, 0.5, 0.25};
    std::vector<int> grasp_counts{9, 6, 4};
    std::vector<std::uint32_t> grasp_order;  // training grasps = first grasp_count ids; empty = manifest order
    TrainSchedule schedule;
    nn::OptimizerSpec optimizer;
    std::uint64_t seed = 0;
};

std::vector<AblationCell> ablation_cells(const AblationConfig& cfg);

// Trains and evaluates every cell; per-cell failures are recorded in the
// table without aborting the rest.
nlohmann::json run_ablation(const AblationConfig& cfg, const dataset::DatasetManifest& manifest,
                            const dataset::PreparedSet& set, const std::function<void(const std::string&)>& log = {});

}  // namespace softply::training
