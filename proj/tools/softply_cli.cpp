#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "softply/config.hpp"
#include "softply/control.hpp"
#include "softply/dataset.hpp"
#include "softply/gradcheck.hpp"
#include "softply/training.hpp"

using namespace softply;
namespace fs = std::filesystem;

namespace {

int default_jobs() {
    if (const char* env = std::getenv("SOFTPLY_JOBS")) {
        try {
            const int n = std::stoi(env);
            if (n >= 1) return n;
        } catch (const std::exception&) {
        }
        throw std::runtime_error(std::string("SOFTPLY_JOBS must be a positive integer, got '") + env + "'");
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void write_json(const nlohmann::json& j, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << j.dump(2) << '\n';
}

std::string member_path(const std::string& out, int k, int n) {
    if (n == 1) return out;
    fs::path p(out);
    return (p.parent_path() / (p.stem().string() + "-m" + std::to_string(k) + p.extension().string())).string();
}

dataset::PreparedSet prepare_all(const std::string& dir, const dataset::DatasetManifest& m) {
    return dataset::prepare(dir, m, m.config.preprocess, {});
}

training::Ensemble load_models(const std::vector<std::string>& paths) {
    training::Ensemble ens;
    for (const auto& p : paths) ens.push_back(nn::load_model(p));
    for (const auto& m : ens) {
        if (nn::to_json(m.spec) != nn::to_json(ens.front().spec)) {
            throw std::runtime_error("ensemble members must share one network spec");
        }
    }
    return ens;
}

int cmd_gen(const std::string& cfg_path, const std::string& out, int jobs) {
    const auto cfg = config::load_run_config(cfg_path);
    dataset::GenerateOptions opts;
    opts.jobs = jobs;
    opts.progress = [last = std::size_t{0}](std::size_t done, std::size_t total) mutable {
        if (done != total && done / 1000 == last / 1000) return;
        last = done;
        std::cerr << "gen " << done << "/" << total << "\n";
    };
    const auto m = dataset::generate(cfg.generation, cfg.split, out, opts);
    std::cout << "records " << m.record_count << " poses " << m.pose_count << " grasps " << cfg.generation.grasps.size()
              << " skipped " << m.skipped.size() << '\n';
    return 0;
}

int cmd_train(const std::string& cfg_path, const std::string& data, const std::string& out,
              const std::string& log_path) {
    const auto cfg = config::load_run_config(cfg_path);
    const auto manifest = dataset::read_manifest((fs::path(data) / "manifest.json").string());
    const auto set = dataset::prepare(data, manifest, manifest.config.preprocess,
                                      [](const dataset::RecordKey&, dataset::Split s) { return s == dataset::Split::train; });
    const auto views = training::make_views(set, set.splits, cfg.schedule.validation_fraction, cfg.train_subsample,
                                            cfg.seeds.training);
    std::cerr << "fit records " << views.fit.size() << ", validation records " << views.validation.size() << '\n';
    training::TrainOptions opts;
    opts.optimizer = cfg.optimizer;
    opts.on_epoch = [](const training::EpochLog& e) {
        std::cerr << "epoch " << e.epoch << " lr " << e.lr << " train " << e.train_loss << " val " << e.val_loss << '\n';
    };
    const auto results = training::train_ensemble(nn::NetSpec::preset(cfg.architecture, set.input_size),
                                                  training::scaling_for(manifest.config.grid), cfg.ensemble_size, set,
                                                  views, cfg.schedule, cfg.seeds.training, opts);
    for (std::size_t k = 0; k < results.size(); ++k) {
        const auto path = member_path(out, static_cast<int>(k), static_cast<int>(results.size()));
        nn::save_model(results[k].model, path);
        std::cout << "model " << path << " best_epoch " << results[k].best_epoch << " best_val_loss "
                  << results[k].best_val_loss << '\n';
        if (!log_path.empty()) {
            std::ofstream os(member_path(log_path, static_cast<int>(k), static_cast<int>(results.size())));
            training::write_epoch_csv(results[k].log, os);
        }
    }
    return 0;
}

int cmd_eval(const std::vector<std::string>& models, bool ground_truth, const std::string& data,
             const std::string& report) {
    if (models.empty() == !ground_truth) throw std::runtime_error("eval needs either --model or --ground-truth");
    const auto manifest = dataset::read_manifest((fs::path(data) / "manifest.json").string());
    nlohmann::json reports;
    if (ground_truth) {
        // The stub predicts the stored labels exactly; images are not needed.
        dataset::DatasetReader reader((fs::path(data) / manifest.data_file).string());
        std::map<dataset::Split, std::vector<geometry::DeformationState>> labels;
        dataset::DatasetRecord rec;
        for (std::size_t i = 0; reader.next(rec); ++i) labels[manifest.assignment.at(i)].push_back(rec.label);
        for (const auto& [split, ls] : labels) {
            std::vector<training::Prediction> preds;
            for (const auto& l : ls) preds.push_back(l.as_array());
            reports[dataset::split_name(split)] =
                training::to_json(training::evaluate_predictions(preds, ls, dataset::split_name(split)));
        }
    } else {
        const auto ens = load_models(models);
        const auto set = prepare_all(data, manifest);
        for (auto which : {dataset::Split::train, dataset::Split::test, dataset::Split::unused_pose,
                           dataset::Split::unused_grasp}) {
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < set.size(); ++i) {
                if (set.splits[i] == which) idx.push_back(i);
            }
            if (idx.empty()) continue;
            reports[dataset::split_name(which)] =
                training::to_json(training::evaluate(ens, set, idx, dataset::split_name(which)));
        }
    }
    write_json({{"version", 1}, {"reports", reports}}, report);
    for (const auto& [name, r] : reports.items()) {
        std::cout << name << " n=" << r["count"] << " cartesian median " << r["cartesian"]["median"] << " mean "
                  << r["cartesian"]["mean"] << '\n';
    }
    return 0;
}

int cmd_ablate(const std::string& cfg_path, const std::string& data, const std::string& report) {
    const auto cfg = config::load_run_config(cfg_path);
    const auto manifest = dataset::read_manifest((fs::path(data) / "manifest.json").string());
    const auto set = prepare_all(data, manifest);
    const auto table =
        training::run_ablation(cfg.ablation, manifest, set, [](const std::string& s) { std::cerr << s << '\n'; });
    write_json(table, report);
    int failed = 0;
    for (const auto& c : table["cells"]) failed += c["status"] != "ok";
    std::cout << table["cells"].size() << " cells, " << failed << " failed\n";
    return 0;
}

int cmd_closedloop(const std::string& cfg_path, const std::vector<std::string>& models, bool ground_truth,
                   const std::string& traj_path, const std::string& log_path, double duration) {
    if (models.empty() == !ground_truth) throw std::runtime_error("closedloop needs either --model or --ground-truth");
    const auto cfg = config::load_run_config(cfg_path);
    const auto traj = control::load_trajectory(traj_path);
    control::ClosedLoopConfig cl;
    cl.material = cfg.generation.material;
    cl.sim = cfg.generation.sim;
    cl.rest = cfg.closed_loop.rest;
    cl.duration = duration > 0.0 ? duration : cfg.closed_loop.duration;
    for (const auto& g : cfg.generation.grasps) {
        if (g.id == cfg.closed_loop.grasp_id) cl.grasp = g;
    }
    std::unique_ptr<control::Estimator> est;
    if (ground_truth) {
        est = std::make_unique<control::GroundTruthEstimator>();
    } else {
        est = std::make_unique<control::CnnEstimator>(load_models(models), cfg.generation.camera, cfg.generation.noise,
                                                      cfg.generation.preprocess, cfg.seeds.closed_loop);
    }
    const auto log = control::run_closed_loop(*est, cl, traj, cfg.controller);
    std::ofstream os(log_path);
    if (!os) throw std::runtime_error("cannot write " + log_path);
    control::write_run_log_csv(log, os);
    std::cout << "control ticks " << log.control_ticks << " estimator ticks " << log.estimator_ticks << '\n';
    if (log.aborted) {
        std::cerr << "run aborted at t=" << log.abort_time << ": " << log.error << '\n';
        return 1;
    }
    return 0;
}

int cmd_gradcheck(int instances, std::uint64_t seed) {
    const auto results = nn::run_gradcheck(instances, seed);
    double worst = 0.0;
    for (const auto& r : results) {
        std::cout << r.layer << ": instances " << r.instances << " checked " << r.checked << " skipped " << r.skipped
                  << " max_rel_error " << r.max_rel_error << '\n';
        worst = std::max(worst, r.max_rel_error);
    }
    std::cout << "max relative error " << worst << '\n';
    return worst < 1e-4 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"softply: deformable ply state estimation and control"};
    app.require_subcommand(1);
    int jobs = 0;
    app.add_option("--jobs", jobs, "Worker threads (default: SOFTPLY_JOBS or all cores)")->check(CLI::PositiveNumber);

    std::string cfg_path, out, data, report, log_path, traj;
    std::vector<std::string> models;
    bool ground_truth = false;
    double duration = 0.0;
    int instances = 20;
    std::uint64_t seed = 1;

    auto* gen = app.add_subcommand("gen", "Generate a dataset");
    gen->add_option("--config", cfg_path, "Run config JSON")->required()->check(CLI::ExistingFile);
    gen->add_option("--out", out, "Output directory")->required();

    auto* train = app.add_subcommand("train", "Train a model or ensemble");
    train->add_option("--config", cfg_path, "Run config JSON")->required()->check(CLI::ExistingFile);
    train->add_option("--data", data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    train->add_option("--out", out, "Model file (ensembles get -m<k> suffixes)")->required();
    train->add_option("--log", log_path, "Epoch log CSV");

    auto* eval = app.add_subcommand("eval", "Error report per split");
    eval->add_option("--model", models, "Model file; repeat for an ensemble")->check(CLI::ExistingFile);
    eval->add_flag("--ground-truth", ground_truth, "Use the perfect label stub instead of a model");
    eval->add_option("--data", data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    eval->add_option("--report", report, "Report JSON path")->required();

    auto* ablate = app.add_subcommand("ablate", "Architecture x fraction x grasp-count matrix");
    ablate->add_option("--config", cfg_path, "Run config JSON")->required()->check(CLI::ExistingFile);
    ablate->add_option("--data", data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    ablate->add_option("--report", report, "Report JSON path")->required();

    auto* loop = app.add_subcommand("closedloop", "Closed-loop transport simulation");
    loop->add_option("--config", cfg_path, "Run config JSON")->required()->check(CLI::ExistingFile);
    loop->add_option("--model", models, "Model file; repeat for an ensemble")->check(CLI::ExistingFile);
    loop->add_flag("--ground-truth", ground_truth, "Use the ground-truth estimator");
    loop->add_option("--trajectory", traj, "Human trajectory JSON")->required()->check(CLI::ExistingFile);
    loop->add_option("--log", log_path, "Run log CSV")->required();
    loop->add_option("--duration", duration, "Simulated seconds (default: config)")->check(CLI::PositiveNumber);

    auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every layer");
    grad->add_option("--instances", instances, "Random instances per layer")->check(CLI::PositiveNumber);
    grad->add_option("--seed", seed, "Seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (jobs == 0) jobs = default_jobs();
        if (*gen) return cmd_gen(cfg_path, out, jobs);
        if (*train) return cmd_train(cfg_path, data, out, log_path);
        if (*eval) return cmd_eval(models, ground_truth, data, report);
        if (*ablate) return cmd_ablate(cfg_path, data, report);
        if (*loop) return cmd_closedloop(cfg_path, models, ground_truth, traj, log_path, duration);
        if (*grad) return cmd_gradcheck(instances, seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
