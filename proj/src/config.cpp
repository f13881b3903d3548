#include "softply/config.hpp"

#include <fstream>

namespace softply::config {

using geometry::deg2rad;
using geometry::rad2deg;

Fields::Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
}

const json& Fields::req_json(const std::string& key) {
    const json* v = opt_json(key);
    if (!v) throw ConfigError(path(key) + ": missing required field");
    return *v;
}

const json* Fields::opt_json(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
}

void Fields::finish() const {
    for (const auto& [k, v] : j_.items()) {
        if (!seen_.count(k)) throw ConfigError(path(k) + ": unknown field");
    }
}

namespace {

template <typename T, std::size_t N>
std::array<T, N> fixed_array(const json& j, const std::string& path) {
    if (!j.is_array() || j.size() != N) {
        throw ConfigError(path + ": expected an array of " + std::to_string(N) + " numbers");
    }
    std::array<T, N> out{};
    for (std::size_t i = 0; i < N; ++i) {
        if (!j[i].is_number()) throw ConfigError(path + "[" + std::to_string(i) + "]: expected a number");
        out[i] = j[i].get<T>();
    }
    return out;
}

geometry::Vec3 vec3(const json& j, const std::string& path) {
    const auto a = fixed_array<double, 3>(j, path);
    return {a[0], a[1], a[2]};
}

json vec3_json(const geometry::Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

template <typename F>
auto guarded(const std::string& path, F&& f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

}  // namespace

// ---- material / grasps ---------------------------------------------------------

json material_to_json(const plysim::PlyMaterialSpec& m) {
    return {{"width", m.width},
            {"length", m.length},
            {"grid_nu", m.grid_nu},
            {"grid_nv", m.grid_nv},
            {"areal_density", m.areal_density},
            {"spring_stiffness", m.spring_stiffness},
            {"shear_stiffness", m.shear_stiffness}};
}

plysim::PlyMaterialSpec material_from_json(const json& j, const std::string& path) {
    Fields f(j, path);
    plysim::PlyMaterialSpec m;
    m.width = f.opt("width", m.width);
    m.length = f.opt("length", m.length);
    m.grid_nu = f.opt("grid_nu", m.grid_nu);
    m.grid_nv = f.opt("grid_nv", m.grid_nv);
    m.areal_density = f.opt("areal_density", m.areal_density);
    m.spring_stiffness = f.opt("spring_stiffness", m.spring_stiffness);
    m.shear_stiffness = f.opt("shear_stiffness", m.shear_stiffness);
    f.finish();
    guarded(path, [&] { m.validate(); return 0; });
    return m;
}

json grasps_to_json(const std::vector<plysim::GraspConfig>& g) {
    json a = json::array();
    for (const auto& c : g) a.push_back({{"id", c.id}, {"clip_left", c.clip_left_offset}, {"clip_right", c.clip_right_offset}});
    return a;
}

std::vector<plysim::GraspConfig> grasps_from_json(const json& j, const std::string& path) {
    if (!j.is_array() || j.empty()) throw ConfigError(path + ": expected a non-empty list");
    std::vector<plysim::GraspConfig> out;
    std::set<int> ids;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string p = path + "[" + std::to_string(i) + "]";
        Fields f(j[i], p);
        plysim::GraspConfig g;
        g.id = f.req<int>("id");
        g.clip_left_offset = f.req<double>("clip_left");
        g.clip_right_offset = f.req<double>("clip_right");
        f.finish();
        if (g.id < 0) throw ConfigError(p + ".id: must be non-negative");
        if (!ids.insert(g.id).second) throw ConfigError(p + ".id: duplicate grasp id " + std::to_string(g.id));
        if (!(g.clip_left_offset < g.clip_right_offset)) {
            throw ConfigError(p + ": clip_left must be below clip_right");
        }
        out.push_back(g);
    }
    return out;
}

// ---- camera ---------------------------------------------------------------------

render::CameraModel default_camera() {
    render::CameraModel c;
    c.pose = render::look_at({0.0, -0.2, 1.0}, {0.0, 0.5, 0.0}, {0.0, -1.0, 0.0});
    return c;
}

json camera_to_json(const render::CameraModel& c) {
    json r = json::array();
    for (int i = 0; i < 3; ++i) r.push_back({c.pose.rotation(i, 0), c.pose.rotation(i, 1), c.pose.rotation(i, 2)});
    return {{"fx", c.fx},         {"fy", c.fy},         {"cx", c.cx},         {"cy", c.cy},
            {"width", c.width},   {"height", c.height}, {"z_near", c.z_near}, {"z_far", c.z_far},
            {"rotation", r},      {"translation", vec3_json(c.pose.translation)}};
}

render::CameraModel camera_from_json(const json& j, const std::string& path) {
    Fields f(j, path);
    render::CameraModel c = default_camera();
    c.fx = f.opt("fx", c.fx);
    c.fy = f.opt("fy", c.fy);
    c.cx = f.opt("cx", c.cx);
    c.cy = f.opt("cy", c.cy);
    c.width = f.opt("width", c.width);
    c.height = f.opt("height", c.height);
    c.z_near = f.opt("z_near", c.z_near);
    c.z_far = f.opt("z_far", c.z_far);
    const json* eye = f.opt_json("eye");
    const json* target = f.opt_json("target");
    const json* down = f.opt_json("down");
    const json* rot = f.opt_json("rotation");
    const json* trans = f.opt_json("translation");
    if ((eye || target || down) && (rot || trans)) {
        throw ConfigError(path + ": give either eye/target/down or rotation/translation");
    }
    if (eye || target || down) {
        if (!(eye && target && down)) throw ConfigError(path + ": eye, target and down go together");
        c.pose = guarded(path, [&] {
            return render::look_at(vec3(*eye, f.path("eye")), vec3(*target, f.path("target")),
                                   vec3(*down, f.path("down")));
        });
    } else if (rot || trans) {
        if (!(rot && trans)) throw ConfigError(path + ": rotation and translation go together");
        if (!rot->is_array() || rot->size() != 3) throw ConfigError(f.path("rotation") + ": expected 3 rows");
        for (int i = 0; i < 3; ++i) {
            const auto row = fixed_array<double, 3>((*rot)[static_cast<std::size_t>(i)],
                                                    f.path("rotation") + "[" + std::to_string(i) + "]");
            for (int k = 0; k < 3; ++k) c.pose.rotation(i, k) = row[static_cast<std::size_t>(k)];
        }
        c.pose.translation = vec3(*trans, f.path("translation"));
        if (!c.pose.is_valid(1e-6)) throw ConfigError(f.path("rotation") + ": not a rotation matrix");
    }
    f.finish();
    guarded(path, [&] { c.validate(); return 0; });
    return c;
}

// ---- grid -------------------------------------------------------------------------

namespace {

json axis_json(const geometry::AxisGrid& a, const char* unit, double scale) {
    return {{"center", a.center * scale}, {"half_range", a.half_range * scale}, {"step", a.step * scale}, {"unit", unit}};
}

geometry::AxisGrid axis_from_json(const json& j, const std::string& path, bool rotation) {
    Fields f(j, path);
    const std::string unit = f.opt<std::string>("unit", rotation ? "deg" : "m");
    bool degrees = false;
    if (rotation) {
        if (unit == "deg") {
            degrees = true;
        } else if (unit != "rad") {
            throw ConfigError(f.path("unit") + ": expected \"deg\" or \"rad\"");
        }
    } else if (unit != "m") {
        throw ConfigError(f.path("unit") + ": expected \"m\"");
    }
    auto conv = [&](double v) { return degrees ? deg2rad(v) : v; };
    geometry::AxisGrid a;
    a.center = conv(f.opt("center", 0.0));
    a.half_range = conv(f.req<double>("half_range"));
    a.step = conv(f.req<double>("step"));
    f.finish();
    guarded(path, [&] { return a.values().size(); });
    return a;
}

}  // namespace

json grid_to_json(const geometry::PoseGridSpec& g, bool rotation_in_degrees) {
    auto rot = [&](const geometry::AxisGrid& a) {
        if (!rotation_in_degrees) return axis_json(a, "rad", 1.0);
        return json{{"center", rad2deg(a.center)}, {"half_range", rad2deg(a.half_range)}, {"step", rad2deg(a.step)}, {"unit", "deg"}};
    };
    return {{"x", axis_json(g.x, "m", 1.0)},
            {"y", axis_json(g.y, "m", 1.0)},
            {"z", axis_json(g.z, "m", 1.0)},
            {"theta", rot(g.theta)},
            {"gamma", rot(g.gamma)}};
}

geometry::PoseGridSpec grid_from_json(const json& j, const std::string& path) {
    Fields f(j, path);
    geometry::PoseGridSpec g;
    g.x = axis_from_json(f.req_json("x"), f.path("x"), false);
    g.y = axis_from_json(f.req_json("y"), f.path("y"), false);
    g.z = axis_from_json(f.req_json("z"), f.path("z"), false);
    g.theta = axis_from_json(f.req_json("theta"), f.path("theta"), true);
    g.gamma = axis_from_json(f.req_json("gamma"), f.path("gamma"), true);
    f.finish();
    return g;
}

// ---- preprocess / generation ----------------------------------------------------

json preprocess_to_json(const preprocess::PreprocessSpec& p) {
    return {{"z_min", p.z_min},
            {"z_max", p.z_max},
            {"line_offset", p.line_offset},
            {"crop", {{"u0", p.crop.u0}, {"v0", p.crop.v0}, {"width", p.crop.width}, {"height", p.crop.height}}},
            {"out_size", p.out_size}};
}

preprocess::PreprocessSpec preprocess_from_json(const json& j, const std::string& path) {
    Fields f(j, path);
    preprocess::PreprocessSpec p;
    p.z_min = f.opt("z_min", p.z_min);
    p.z_max = f.opt("z_max", p.z_max);
    p.line_offset = f.opt("line_offset", p.line_offset);
    if (const json* c = f.opt_json("crop")) {
        Fields fc(*c, f.path("crop"));
        p.crop.u0 = fc.req<int>("u0");
        p.crop.v0 = fc.req<int>("v0");
        p.crop.width = fc.req<int>("width");
        p.crop.height = fc.req<int>("height");
        fc.finish();
    }
    p.out_size = f.opt("out_size", p.out_size);
    f.finish();
    return p;
}

namespace {

json sim_to_json(const dataset::SimSettings& s) {
    return {{"gravity", s.gravity}, {"tol", s.tol}, {"max_iters", s.max_iters}, {"dt", s.dt}, {"damping", s.damping}};
}

dataset::SimSettings sim_from_json(const json& j, const std::string& path) {
    Fields f(j, path);
    dataset::SimSettings s;
    s.gravity = f.opt("gravity", s.gravity);
    s.tol = f.opt("tol", s.tol);
    s.max_iters = f.opt("max_iters", s.max_iters);
    s.dt = f.opt("dt", s.dt);
    s.damping = f.opt("damping", s.damping);
    f.finish();
    if (!(s.tol > 0.0)) throw ConfigError(f.path("tol") + ": must be > 0");
    if (s.max_iters < 1) throw ConfigError(f.path("max_iters") + ": must be >= 1");
    if (!(s.dt > 0.0)) throw ConfigError(f.path("dt") + ": must be > 0");
    if (!(s.damping >= 0.0)) throw ConfigError(f.path("damping") + ": must be >= 0");
    return s;
}

json noise_to_json(const dataset::NoiseSettings& n) {
    return {{"sigma_per_meter", n.sigma_per_meter}, {"dropout_prob", n.dropout_prob}};
}

dataset::NoiseSettings noise_from_json(const json& j, const std::string& path) {
    Fields f(j, path);
    dataset::NoiseSettings n;
    n.sigma_per_meter = f.opt("sigma_per_meter", n.sigma_per_meter);
    n.dropout_prob = f.opt("dropout_prob", n.dropout_prob);
    f.finish();
    if (!(n.sigma_per_meter >= 0.0)) throw ConfigError(f.path("sigma_per_meter") + ": must be >= 0");
    if (!(n.dropout_prob >= 0.0 && n.dropout_prob <= 1.0)) throw ConfigError(f.path("dropout_prob") + ": must be in [0, 1]");
    return n;
}

}  // namespace

json generation_to_json(const dataset::GenerationConfig& g) {
    return {{"material", material_to_json(g.material)},
            {"grasps", grasps_to_json(g.grasps)},
            {"camera", camera_to_json(g.camera)},
            {"noise", noise_to_json(g.noise)},
            {"grid", grid_to_json(g.grid, false)},
            {"preprocess", preprocess_to_json(g.preprocess)},
            {"sim", sim_to_json(g.sim)},
            {"images_per_pose", g.images_per_pose},
            {"master_seed", g.master_seed}};
}

dataset::GenerationConfig generation_from_json(const json& j, const std::string& path) {
    Fields f(j, path);
    dataset::GenerationConfig g;
    g.material = material_from_json(f.req_json("material"), f.path("material"));
    g.grasps = grasps_from_json(f.req_json("grasps"), f.path("grasps"));
    g.camera = camera_from_json(f.req_json("camera"), f.path("camera"));
    g.noise = noise_from_json(f.req_json("noise"), f.path("noise"));
    g.grid = grid_from_json(f.req_json("grid"), f.path("grid"));
    g.preprocess = preprocess_from_json(f.req_json("preprocess"), f.path("preprocess"));
    g.sim = sim_from_json(f.req_json("sim"), f.path("sim"));
    g.images_per_pose = f.req<int>("images_per_pose");
    g.master_seed = f.req<std::uint64_t>("master_seed");
    f.finish();
    return g;
}

// ---- split / schedule / controller ------------------------------------------------

json split_plan_to_json(const dataset::SplitPlan& p) {
    return {{"unused_pose_fraction", p.unused_pose_fraction},
            {"train_fraction", p.train_fraction},
            {"held_out_grasp_ids", p.held_out_grasp_ids},
            {"seed", p.seed}};
}

dataset::SplitPlan split_plan_from_json(const json& j, const std::string& path) {
    Fields f(j, path);
    dataset::SplitPlan p;
    p.unused_pose_fraction = f.opt("unused_pose_fraction", p.unused_pose_fraction);
    p.train_fraction = f.opt("train_fraction", p.train_fraction);
    if (const json* h = f.opt_json("held_out_grasp_ids")) {
        if (!h->is_array()) throw ConfigError(f.path("held_out_grasp_ids") + ": expected a list");
        for (const auto& v : *h) {
            if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
                throw ConfigError(f.path("held_out_grasp_ids") + ": ids must be non-negative integers");
            }
            p.held_out_grasp_ids.insert(v.get<std::uint32_t>());
        }
    }
    p.seed = f.opt<std::uint64_t>("seed", p.seed);
    f.finish();
    if (!(p.unused_pose_fraction >= 0.0 && p.unused_pose_fraction < 1.0)) {
        throw ConfigError(f.path("unused_pose_fraction") + ": must be in [0, 1)");
    }
    if (!(p.train_fraction > 0.0 && p.train_fraction <= 1.0)) {
        throw ConfigError(f.path("train_fraction") + ": must be in (0, 1]");
    }
    return p;
}

json schedule_to_json(const training::TrainSchedule& s) {
    return {{"initial_lr", s.initial_lr},   {"patience", s.patience},
            {"lr_divisor", s.lr_divisor},   {"max_epochs", s.max_epochs},
            {"validation_fraction", s.validation_fraction}, {"batch_size", s.batch_size}};
}

training::TrainSchedule schedule_from_json(const json& j, const std::string& path) {
    Fields f(j, path);
    training::TrainSchedule s;
    s.initial_lr = f.opt("initial_lr", s.initial_lr);
    s.patience = f.opt("patience", s.patience);
    s.lr_divisor = f.opt("lr_divisor", s.lr_divisor);
    s.max_epochs = f.opt("max_epochs", s.max_epochs);
    s.validation_fraction = f.opt("validation_fraction", s.validation_fraction);
    s.batch_size = f.opt("batch_size", s.batch_size);
    f.finish();
    guarded(path, [&] { s.validate(); return 0; });
    return s;
}

json controller_to_json(const control::ControllerSpec& c) {
    auto db = c.deadband;
    db[3] = rad2deg(db[3]);
    db[4] = rad2deg(db[4]);
    return {{"gains", c.gains},
            {"deadband", db},
            {"max_linear", c.max_linear},
            {"max_angular", c.max_angular},
            {"control_rate", c.control_rate},
            {"estimator_rate", c.estimator_rate}};
}

control::ControllerSpec controller_from_json(const json& j, const std::string& path) {
    Fields f(j, path);
    control::ControllerSpec c;
    if (const json* g = f.opt_json("gains")) c.gains = fixed_array<double, 5>(*g, f.path("gains"));
    if (const json* d = f.opt_json("deadband")) {
        c.deadband = fixed_array<double, 5>(*d, f.path("deadband"));
        c.deadband[3] = deg2rad(c.deadband[3]);
        c.deadband[4] = deg2rad(c.deadband[4]);
    }
    c.max_linear = f.opt("max_linear", c.max_linear);
    c.max_angular = f.opt("max_angular", c.max_angular);
    c.control_rate = f.opt("control_rate", c.control_rate);
    c.estimator_rate = f.opt("estimator_rate", c.estimator_rate);
    f.finish();
    guarded(path, [&] { c.validate(); return 0; });
    return c;
}

// ---- run config ---------------------------------------------------------------------

json to_json(const RunConfig& c) {
    const auto& g = c.generation;
    json j;
    j["schema_version"] = RunConfig::kSchemaVersion;
    j["material"] = material_to_json(g.material);
    j["grasps"] = grasps_to_json(g.grasps);
    j["camera"] = camera_to_json(g.camera);
    j["noise"] = noise_to_json(g.noise);
    j["preprocess"] = preprocess_to_json(g.preprocess);
    j["grid"] = grid_to_json(g.grid, true);
    j["images_per_pose"] = g.images_per_pose;
    j["sim"] = sim_to_json(g.sim);
    json sp = split_plan_to_json(c.split);
    sp.erase("seed");
    j["split"] = sp;
    j["architecture"] = c.architecture;
    j["ensemble_size"] = c.ensemble_size;
    j["train_subsample"] = c.train_subsample;
    j["schedule"] = schedule_to_json(c.schedule);
    j["optimizer"] = {{"beta1", c.optimizer.beta1}, {"beta2", c.optimizer.beta2}, {"eps", c.optimizer.eps}};
    j["controller"] = controller_to_json(c.controller);
    const auto& r = c.closed_loop.rest.desired;
    j["closed_loop"] = {{"grasp_id", c.closed_loop.grasp_id},
                        {"duration", c.closed_loop.duration},
                        {"rest", {r.x, r.y, r.z, rad2deg(r.theta), rad2deg(r.gamma)}}};
    j["ablation"] = {{"architectures", c.ablation.architectures},
                     {"fractions", c.ablation.fractions},
                     {"grasp_counts", c.ablation.grasp_counts},
                     {"grasp_order", c.ablation.grasp_order}};
    j["seeds"] = {{"dataset", c.seeds.dataset},
                  {"split", c.seeds.split},
                  {"training", c.seeds.training},
                  {"closed_loop", c.seeds.closed_loop}};
    return j;
}

RunConfig run_config_from_json(const json& j) {
    Fields f(j, "config");
    const int version = f.req<int>("schema_version");
    if (version != RunConfig::kSchemaVersion) {
        throw ConfigError("config.schema_version: expected " + std::to_string(RunConfig::kSchemaVersion) + ", got " +
                          std::to_string(version));
    }
    RunConfig c = desk_config();
    auto& g = c.generation;
    if (const json* v = f.opt_json("material")) g.material = material_from_json(*v, f.path("material"));
    if (const json* v = f.opt_json("grasps")) g.grasps = grasps_from_json(*v, f.path("grasps"));
    if (const json* v = f.opt_json("camera")) g.camera = camera_from_json(*v, f.path("camera"));
    if (const json* v = f.opt_json("noise")) g.noise = noise_from_json(*v, f.path("noise"));
    if (const json* v = f.opt_json("preprocess")) g.preprocess = preprocess_from_json(*v, f.path("preprocess"));
    if (const json* v = f.opt_json("grid")) g.grid = grid_from_json(*v, f.path("grid"));
    g.images_per_pose = f.opt("images_per_pose", g.images_per_pose);
    if (g.images_per_pose < 1) throw ConfigError("config.images_per_pose: must be >= 1");
    if (const json* v = f.opt_json("sim")) g.sim = sim_from_json(*v, f.path("sim"));
    if (const json* v = f.opt_json("split")) {
        if (v->contains("seed")) throw ConfigError("config.split.seed: set seeds.split instead");
        c.split = split_plan_from_json(*v, f.path("split"));
    }
    c.architecture = f.opt("architecture", c.architecture);
    guarded("config.architecture", [&] { return nn::NetSpec::preset(c.architecture, g.preprocess.out_size); });
    c.ensemble_size = f.opt("ensemble_size", c.ensemble_size);
    if (c.ensemble_size < 1) throw ConfigError("config.ensemble_size: must be >= 1");
    c.train_subsample = f.opt("train_subsample", c.train_subsample);
    if (!(c.train_subsample > 0.0 && c.train_subsample <= 1.0)) {
        throw ConfigError("config.train_subsample: must be in (0, 1]");
    }
    if (const json* v = f.opt_json("schedule")) c.schedule = schedule_from_json(*v, f.path("schedule"));
    if (const json* v = f.opt_json("optimizer")) {
        Fields fo(*v, f.path("optimizer"));
        c.optimizer.beta1 = fo.opt("beta1", c.optimizer.beta1);
        c.optimizer.beta2 = fo.opt("beta2", c.optimizer.beta2);
        c.optimizer.eps = fo.opt("eps", c.optimizer.eps);
        fo.finish();
        if (!(c.optimizer.beta1 >= 0.0 && c.optimizer.beta1 < 1.0 && c.optimizer.beta2 >= 0.0 &&
              c.optimizer.beta2 < 1.0 && c.optimizer.eps > 0.0)) {
            throw ConfigError("config.optimizer: betas must be in [0, 1) and eps > 0");
        }
    }
    if (const json* v = f.opt_json("controller")) c.controller = controller_from_json(*v, f.path("controller"));
    if (const json* v = f.opt_json("closed_loop")) {
        Fields fc(*v, f.path("closed_loop"));
        c.closed_loop.grasp_id = fc.opt("grasp_id", c.closed_loop.grasp_id);
        c.closed_loop.duration = fc.opt("duration", c.closed_loop.duration);
        if (const json* r = fc.opt_json("rest")) {
            auto a = fixed_array<double, 5>(*r, fc.path("rest"));
            a[3] = deg2rad(a[3]);
            a[4] = deg2rad(a[4]);
            c.closed_loop.rest.desired = geometry::DeformationState::from_array(a);
        }
        fc.finish();
        if (!(c.closed_loop.duration > 0.0)) throw ConfigError(fc.path("duration") + ": must be > 0");
    }
    if (const json* v = f.opt_json("ablation")) {
        Fields fa(*v, f.path("ablation"));
        c.ablation.architectures = fa.opt("architectures", c.ablation.architectures);
        c.ablation.fractions = fa.opt("fractions", c.ablation.fractions);
        c.ablation.grasp_counts = fa.opt("grasp_counts", c.ablation.grasp_counts);
        c.ablation.grasp_order = fa.opt("grasp_order", c.ablation.grasp_order);
        fa.finish();
        for (const auto& a : c.ablation.architectures) {
            guarded(fa.path("architectures"), [&] { return nn::NetSpec::preset(a, g.preprocess.out_size); });
        }
        for (double fr : c.ablation.fractions) {
            if (!(fr > 0.0 && fr <= 1.0)) throw ConfigError(fa.path("fractions") + ": values must be in (0, 1]");
        }
        for (int n : c.ablation.grasp_counts) {
            if (n < 1) throw ConfigError(fa.path("grasp_counts") + ": values must be >= 1");
        }
    }
    if (const json* v = f.opt_json("seeds")) {
        Fields fs(*v, f.path("seeds"));
        c.seeds.dataset = fs.opt("dataset", c.seeds.dataset);
        c.seeds.split = fs.opt("split", c.seeds.split);
        c.seeds.training = fs.opt("training", c.seeds.training);
        c.seeds.closed_loop = fs.opt("closed_loop", c.seeds.closed_loop);
        fs.finish();
    }
    f.finish();

    // Cross references.
    std::set<std::uint32_t> ids;
    for (const auto& gc : g.grasps) ids.insert(static_cast<std::uint32_t>(gc.id));
    for (std::uint32_t id : c.split.held_out_grasp_ids) {
        if (!ids.count(id)) throw ConfigError("config.split.held_out_grasp_ids: unknown grasp id " + std::to_string(id));
    }
    if (c.split.held_out_grasp_ids.size() >= ids.size()) {
        throw ConfigError("config.split.held_out_grasp_ids: at least one grasp must remain for training");
    }
    for (std::uint32_t id : c.ablation.grasp_order) {
        if (!ids.count(id)) throw ConfigError("config.ablation.grasp_order: unknown grasp id " + std::to_string(id));
    }
    for (int n : c.ablation.grasp_counts) {
        if (static_cast<std::size_t>(n) > ids.size()) {
            throw ConfigError("config.ablation.grasp_counts: " + std::to_string(n) + " exceeds the grasp set");
        }
    }
    if (!ids.count(static_cast<std::uint32_t>(c.closed_loop.grasp_id))) {
        throw ConfigError("config.closed_loop.grasp_id: unknown grasp id " + std::to_string(c.closed_loop.grasp_id));
    }
    guarded("config.preprocess", [&] { g.preprocess.validate(g.camera.width, g.camera.height); return 0; });

    g.master_seed = c.seeds.dataset;
    c.split.seed = c.seeds.split;
    c.ablation.schedule = c.schedule;
    c.ablation.optimizer = c.optimizer;
    c.ablation.seed = c.seeds.training;
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config " + path);
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return run_config_from_json(j);
}

RunConfig desk_config() {
    RunConfig c;
    auto& g = c.generation;
    g.camera = default_camera();
    g.grasps = {{0, -0.45, 0.45}, {1, -0.35, 0.35}, {2, -0.25, 0.25}, {3, -0.15, 0.15}, {4, -0.40, 0.10},
                {5, -0.10, 0.40}, {6, -0.30, 0.05}, {7, -0.05, 0.30}, {8, -0.20, 0.20}};
    g.grid.x = {0.0, 0.105, 0.0525};
    g.grid.y = {0.6, 0.105, 0.0525};
    g.grid.z = {0.0, 0.105, 0.0525};
    g.grid.theta = {0.0, deg2rad(20.0), deg2rad(10.0)};
    g.grid.gamma = {0.0, deg2rad(20.0), deg2rad(10.0)};
    g.images_per_pose = 1;
    c.split.held_out_grasp_ids = {1, 5, 6};
    c.ablation.grasp_order = {0, 3, 8, 7, 2, 4, 1, 5, 6};
    g.master_seed = c.seeds.dataset;
    c.split.seed = c.seeds.split;
    c.ablation.seed = c.seeds.training;
    return c;
}

RunConfig full_config() {
    RunConfig c = desk_config();
    auto& g = c.generation;
    g.grid.x = {0.0, 0.105, 0.03};
    g.grid.y = {0.6, 0.105, 0.03};
    g.grid.z = {0.0, 0.105, 0.03};
    g.grid.theta = {0.0, deg2rad(20.0), deg2rad(5.0)};
    g.grid.gamma = {0.0, deg2rad(20.0), deg2rad(5.0)};
    g.images_per_pose = 2;
    return c;
}

}  // namespace softply::config
