#include "softply/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <limits>
#include <sstream>
#include <thread>
#include <tuple>

#include "softply/config.hpp"
#include "softply/random.hpp"

namespace softply::dataset {

static_assert(std::endian::native == std::endian::little, "dataset files assume a little-endian host");

const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::test: return "test";
        case Split::unused_pose: return "unused_pose";
        case Split::unused_grasp: return "unused_grasp";
    }
    return "?";
}

std::uint64_t image_seed(std::uint64_t master_seed, std::uint32_t grasp_id, std::uint64_t pose_index,
                         std::uint32_t image_index) {
    return derive_seed(master_seed, {grasp_id, pose_index, image_index});
}

namespace {

// The volatile store keeps GCC 11 at -O3 -march=native from folding the
// round trip away when the five label components get vectorized.
double f32(double v) {
    volatile float f = static_cast<float>(v);
    return static_cast<double>(f);
}

DeformationState round_label(const DeformationState& s) {
    return {f32(s.x), f32(s.y), f32(s.z), f32(s.theta), f32(s.gamma)};
}

}  // namespace

bool render_record(const GenerationConfig& cfg, const plysim::GraspConfig& grasp, const DeformationState& pose,
                   std::uint64_t pose_index, int images, std::vector<DatasetRecord>& out,
                   plysim::SolveResult* solve) {
    plysim::PlyMesh mesh = plysim::build_mesh(cfg.material, grasp);
    plysim::set_boundary(mesh, pose);
    plysim::reset_free_nodes(mesh);
    const auto res = plysim::solve_equilibrium(mesh, cfg.sim.gravity, cfg.sim.tol, cfg.sim.max_iters);
    if (solve) *solve = res;
    if (!res.converged) return false;

    const DepthImage clean = render::rasterize(cfg.camera, mesh);
    auto anchors = render::project_anchors(cfg.camera, mesh);
    for (auto& a : anchors) a = {f32(a.u), f32(a.v)};
    for (int k = 0; k < images; ++k) {
        DatasetRecord rec;
        rec.grasp_id = static_cast<std::uint32_t>(grasp.id);
        rec.label = round_label(pose);
        rec.noise_seed = image_seed(cfg.master_seed, rec.grasp_id, pose_index, static_cast<std::uint32_t>(k));
        rec.anchors = anchors;
        render::NoiseModel nm{cfg.noise.sigma_per_meter, cfg.noise.dropout_prob, rec.noise_seed};
        rec.image = render::apply_noise(clean, nm, cfg.camera.z_near, cfg.camera.z_far);
        out.push_back(std::move(rec));
    }
    return true;
}

std::uint64_t expected_record_count(const geometry::PoseGridSpec& grid, std::size_t grasp_count,
                                    int images_per_pose) {
    return static_cast<std::uint64_t>(grid.pose_count()) * grasp_count * static_cast<std::uint64_t>(images_per_pose);
}

std::vector<RecordKey> DatasetManifest::record_keys() const {
    std::set<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>> skip;
    for (const auto& k : skipped) skip.insert({k.grasp_id, k.pose_index, k.image_index});
    std::vector<RecordKey> keys;
    keys.reserve(record_count);
    for (const auto& g : config.grasps) {
        for (std::uint64_t p = 0; p < pose_count; ++p) {
            for (int i = 0; i < config.images_per_pose; ++i) {
                RecordKey k{static_cast<std::uint32_t>(g.id), static_cast<std::uint32_t>(p),
                            static_cast<std::uint32_t>(i)};
                if (!skip.empty() && skip.count({k.grasp_id, k.pose_index, k.image_index})) continue;
                keys.push_back(k);
            }
        }
    }
    return keys;
}

// ---- splits ----------------------------------------------------------------

namespace {

// Fisher-Yates driven by a counter stream, so the order does not depend on
// the standard library's distribution implementations.
std::vector<std::uint32_t> shuffled(std::uint32_t n, std::uint64_t seed) {
    std::vector<std::uint32_t> v(n);
    for (std::uint32_t i = 0; i < n; ++i) v[i] = i;
    const CounterStream rng(seed);
    for (std::uint32_t i = n; i > 1; --i) {
        const auto j = static_cast<std::uint32_t>(rng.bits(i) % i);
        std::swap(v[i - 1], v[j]);
    }
    return v;
}

std::size_t rounded(double f, std::size_t n) {
    return static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 0.5));
}

}  // namespace

std::vector<Split> split(const std::vector<RecordKey>& keys, std::uint64_t pose_count, const SplitPlan& plan) {
    if (!(plan.unused_pose_fraction >= 0.0 && plan.unused_pose_fraction < 1.0)) {
        throw DatasetError("split: unused_pose_fraction must be in [0, 1)");
    }
    if (!(plan.train_fraction > 0.0 && plan.train_fraction <= 1.0)) {
        throw DatasetError("split: train_fraction must be in (0, 1]");
    }
    if (pose_count > std::numeric_limits<std::uint32_t>::max()) throw DatasetError("split: too many poses");
    const auto n = static_cast<std::uint32_t>(pose_count);
    const auto order = shuffled(n, derive_seed(plan.seed, {0x5917}));
    const std::size_t n_unused = rounded(plan.unused_pose_fraction, n);
    const std::size_t n_train = rounded(plan.train_fraction, n - n_unused);

    std::vector<Split> by_pose(n, Split::test);
    for (std::size_t r = 0; r < n; ++r) {
        if (r < n_unused) {
            by_pose[order[r]] = Split::unused_pose;
        } else if (r < n_unused + n_train) {
            by_pose[order[r]] = Split::train;
        }
    }

    std::vector<Split> out;
    out.reserve(keys.size());
    bool any_train = false;
    for (const auto& k : keys) {
        if (k.pose_index >= n) {
            throw DatasetError("split: record pose index " + std::to_string(k.pose_index) + " outside the grid");
        }
        Split s = plan.held_out_grasp_ids.count(k.grasp_id) ? Split::unused_grasp : by_pose[k.pose_index];
        any_train = any_train || s == Split::train;
        out.push_back(s);
    }
    if (!any_train) throw DatasetError("split: train set is empty");
    return out;
}

std::vector<Split> split(const DatasetManifest& manifest, const SplitPlan& plan) {
    for (std::uint32_t id : plan.held_out_grasp_ids) {
        const bool known = std::any_of(manifest.config.grasps.begin(), manifest.config.grasps.end(),
                                       [&](const plysim::GraspConfig& g) { return g.id == static_cast<int>(id); });
        if (!known) throw DatasetError("split: held-out grasp id " + std::to_string(id) + " is not in the dataset");
    }
    return split(manifest.record_keys(), manifest.pose_count, plan);
}

std::vector<std::uint32_t> poses_in(const std::vector<RecordKey>& keys, const std::vector<Split>& assignment,
                                    Split which) {
    if (keys.size() != assignment.size()) throw DatasetError("poses_in: keys and assignment differ in length");
    std::vector<std::uint32_t> out;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        if (assignment[i] == which) out.push_back(keys[i].pose_index);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<std::uint32_t> subsample(const std::vector<std::uint32_t>& train_poses, double fraction,
                                     std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw DatasetError("subsample: fraction must be in (0, 1]");
    if (fraction == 1.0) return train_poses;
    // Rank by a per-pose random key; every fraction keeps a prefix of the
    // same ranking, which makes the subsets nested.
    const CounterStream rng(derive_seed(seed, {0x5ab5}));
    std::vector<std::pair<std::uint64_t, std::uint32_t>> ranked;
    ranked.reserve(train_poses.size());
    for (std::uint32_t p : train_poses) ranked.emplace_back(rng.bits(p), p);
    std::sort(ranked.begin(), ranked.end());
    const std::size_t n = rounded(fraction, train_poses.size());
    std::set<std::uint32_t> keep;
    for (std::size_t i = 0; i < n; ++i) keep.insert(ranked[i].second);
    std::vector<std::uint32_t> out;
    for (std::uint32_t p : train_poses) {
        if (keep.count(p)) out.push_back(p);
    }
    return out;
}

std::uint64_t pose_index_of(const geometry::PoseGridSpec& grid, const DeformationState& label) {
    std::uint64_t index = 0;
    const auto axes = grid.axes();
    for (std::size_t a = 0; a < 5; ++a) {
        const auto vals = axes[a]->values();
        std::size_t best = 0;
        for (std::size_t i = 1; i < vals.size(); ++i) {
            if (std::abs(vals[i] - label[a]) < std::abs(vals[best] - label[a])) best = i;
        }
        index = index * vals.size() + best;
    }
    return index;
}

// ---- binary I/O --------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'S', 'P', 'L', 'Y', 'D', 'S', '0', '1'};

template <typename T>
void put(std::vector<std::uint8_t>& buf, T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    buf.insert(buf.end(), p, p + sizeof(T));
}

template <typename T>
T get(const std::uint8_t*& p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    p += sizeof(T);
    return v;
}

std::string at_offset(std::uint64_t off) { return " (byte offset " + std::to_string(off) + ")"; }

}  // namespace

DatasetWriter::DatasetWriter(const std::string& path, int height, int width)
    : path_(path), os_(path, std::ios::binary | std::ios::trunc), height_(height), width_(width) {
    if (!os_) throw DatasetError("cannot open " + path + " for writing");
    if (height < 0 || width < 0) throw DatasetError("dataset image size must be non-negative");
    std::vector<std::uint8_t> h(kMagic, kMagic + 8);
    put<std::uint32_t>(h, kDatasetVersion);
    put<std::uint32_t>(h, static_cast<std::uint32_t>(height));
    put<std::uint32_t>(h, static_cast<std::uint32_t>(width));
    put<std::uint32_t>(h, 0);
    os_.write(reinterpret_cast<const char*>(h.data()), static_cast<std::streamsize>(h.size()));
}

DatasetWriter::~DatasetWriter() {
    if (!finished_) {
        try {
            finish();
        } catch (...) {
        }
    }
}

void DatasetWriter::append(const DatasetRecord& rec) {
    if (finished_) throw DatasetError("append after finish on " + path_);
    if (rec.image.height != height_ || rec.image.width != width_) {
        throw DatasetError("record image is " + std::to_string(rec.image.width) + "x" +
                           std::to_string(rec.image.height) + ", file expects " + std::to_string(width_) + "x" +
                           std::to_string(height_));
    }
    if (count_ == std::numeric_limits<std::uint32_t>::max()) throw DatasetError("too many records");
    std::vector<std::uint8_t> b;
    b.reserve(record_bytes(height_, width_));
    put<std::uint32_t>(b, rec.grasp_id);
    for (double v : rec.label.as_array()) put<float>(b, static_cast<float>(v));
    put<std::uint64_t>(b, rec.noise_seed);
    for (const auto& a : rec.anchors) {
        put<float>(b, static_cast<float>(a.u));
        put<float>(b, static_cast<float>(a.v));
    }
    const auto* px = reinterpret_cast<const std::uint8_t*>(rec.image.values.data());
    b.insert(b.end(), px, px + rec.image.values.size() * sizeof(float));
    os_.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    if (!os_) throw DatasetError("write failed on " + path_);
    ++count_;
}

void DatasetWriter::finish() {
    if (finished_) return;
    finished_ = true;
    os_.seekp(20);
    std::vector<std::uint8_t> c;
    put<std::uint32_t>(c, count_);
    os_.write(reinterpret_cast<const char*>(c.data()), 4);
    os_.close();
    if (!os_) throw DatasetError("could not finalize " + path_);
}

DatasetReader::DatasetReader(const std::string& path) : path_(path), is_(path, std::ios::binary) {
    if (!is_) throw DatasetError("cannot open " + path);
    std::uint8_t h[kHeaderBytes];
    is_.read(reinterpret_cast<char*>(h), kHeaderBytes);
    const auto got = static_cast<std::size_t>(is_.gcount());
    if (got < 8 || std::memcmp(h, kMagic, 8) != 0) {
        throw DatasetError(path + ": bad magic" + at_offset(0));
    }
    if (got < kHeaderBytes) throw DatasetError(path + ": truncated header" + at_offset(got));
    const std::uint8_t* p = h + 8;
    const auto version = get<std::uint32_t>(p);
    if (version != kDatasetVersion) {
        throw DatasetError(path + ": unsupported version " + std::to_string(version) + at_offset(8));
    }
    const auto height = get<std::uint32_t>(p);
    const auto width = get<std::uint32_t>(p);
    if (height > 1u << 16 || width > 1u << 16) throw DatasetError(path + ": implausible image size" + at_offset(12));
    header_.height = static_cast<int>(height);
    header_.width = static_cast<int>(width);
    header_.record_count = get<std::uint32_t>(p);
    offset_ = kHeaderBytes;
    buf_.resize(record_bytes(header_.height, header_.width));
}

bool DatasetReader::next(DatasetRecord& rec) {
    if (index_ >= header_.record_count) {
        if (index_ == header_.record_count && is_.peek() != std::char_traits<char>::eof()) {
            throw DatasetError(path_ + ": trailing bytes after record " + std::to_string(index_) +
                               at_offset(offset_));
        }
        return false;
    }
    is_.read(reinterpret_cast<char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
    const auto got = static_cast<std::size_t>(is_.gcount());
    if (got != buf_.size()) {
        throw DatasetError(path_ + ": record " + std::to_string(index_) + " truncated" + at_offset(offset_ + got));
    }
    const std::uint8_t* p = buf_.data();
    rec.grasp_id = get<std::uint32_t>(p);
    std::array<double, 5> l{};
    for (double& v : l) v = get<float>(p);
    rec.label = DeformationState::from_array(l);
    rec.noise_seed = get<std::uint64_t>(p);
    for (auto& a : rec.anchors) {
        a.u = get<float>(p);
        a.v = get<float>(p);
    }
    rec.image = DepthImage(header_.width, header_.height);
    std::memcpy(rec.image.values.data(), p, rec.image.values.size() * sizeof(float));
    offset_ += buf_.size();
    ++index_;
    return true;
}

void write_dataset(const std::string& path, int height, int width, const std::vector<DatasetRecord>& records) {
    DatasetWriter w(path, height, width);
    for (const auto& r : records) w.append(r);
    w.finish();
}

std::vector<DatasetRecord> read_dataset(const std::string& path, DatasetHeader* header) {
    DatasetReader r(path);
    if (header) *header = r.header();
    std::vector<DatasetRecord> out;
    out.reserve(r.header().record_count);
    DatasetRecord rec;
    while (r.next(rec)) out.push_back(rec);
    return out;
}

// ---- manifest ----------------------------------------------------------------

nlohmann::json manifest_to_json(const DatasetManifest& m) {
    nlohmann::json j;
    j["format_version"] = DatasetManifest::kFormatVersion;
    j["generation"] = config::generation_to_json(m.config);
    j["pose_count"] = m.pose_count;
    j["record_count"] = m.record_count;
    auto sk = nlohmann::json::array();
    for (const auto& k : m.skipped) sk.push_back({k.grasp_id, k.pose_index, k.image_index});
    j["skipped"] = sk;
    j["split"] = config::split_plan_to_json(m.split_plan);
    std::string a(m.assignment.size(), '0');
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = static_cast<char>('0' + static_cast<int>(m.assignment[i]));
    j["assignment"] = a;
    j["data_file"] = m.data_file;
    return j;
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
    config::Fields f(j, "manifest");
    const int version = f.req<int>("format_version");
    if (version != DatasetManifest::kFormatVersion) {
        throw DatasetError("manifest format_version " + std::to_string(version) + " is not supported");
    }
    DatasetManifest m;
    m.config = config::generation_from_json(f.req_json("generation"), "manifest.generation");
    m.pose_count = f.req<std::uint64_t>("pose_count");
    m.record_count = f.req<std::uint64_t>("record_count");
    for (const auto& k : f.req_json("skipped")) {
        if (!k.is_array() || k.size() != 3) throw DatasetError("manifest.skipped entries must be [grasp, pose, image]");
        m.skipped.push_back({k[0].get<std::uint32_t>(), k[1].get<std::uint32_t>(), k[2].get<std::uint32_t>()});
    }
    m.split_plan = config::split_plan_from_json(f.req_json("split"), "manifest.split");
    const auto a = f.req<std::string>("assignment");
    m.assignment.reserve(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] < '0' || a[i] > '3') throw DatasetError("manifest.assignment: bad split code at " + std::to_string(i));
        m.assignment.push_back(static_cast<Split>(a[i] - '0'));
    }
    m.data_file = f.req<std::string>("data_file");
    f.finish();
    if (m.assignment.size() != m.record_count) {
        throw DatasetError("manifest: assignment covers " + std::to_string(m.assignment.size()) + " records, expected " +
                           std::to_string(m.record_count));
    }
    const auto expected = m.pose_count * m.config.grasps.size() * static_cast<std::uint64_t>(m.config.images_per_pose);
    if (m.record_count + m.skipped.size() != expected) {
        throw DatasetError("manifest: record count does not match poses x grasps x images");
    }
    return m;
}

void write_manifest(const DatasetManifest& m, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DatasetError("cannot open " + path + " for writing");
    os << manifest_to_json(m).dump(1) << '\n';
    if (!os) throw DatasetError("write failed on " + path);
}

DatasetManifest read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DatasetError("cannot open " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw DatasetError(path + ": " + e.what());
    }
    return manifest_from_json(j);
}

// ---- generation ------------------------------------------------------------

DatasetManifest generate(const GenerationConfig& cfg, const SplitPlan& plan, const std::string& out_dir,
                         const GenerateOptions& opts) {
    cfg.material.validate();
    cfg.camera.validate();
    cfg.preprocess.validate(cfg.camera.width, cfg.camera.height);
    if (cfg.grasps.empty()) throw DatasetError("generate: no grasp configurations");
    if (cfg.images_per_pose < 1) throw DatasetError("generate: images_per_pose must be >= 1");
    {
        std::set<int> ids;
        for (const auto& g : cfg.grasps) {
            if (g.id < 0 || !ids.insert(g.id).second) {
                throw DatasetError("generate: grasp ids must be unique and non-negative");
            }
        }
    }

    const auto poses = geometry::enumerate_grid(cfg.grid);
    const std::size_t n_poses = poses.size();
    const std::size_t n_items = n_poses * cfg.grasps.size();

    std::filesystem::create_directories(out_dir);
    DatasetManifest m;
    m.config = cfg;
    m.pose_count = n_poses;
    m.split_plan = plan;

    DatasetWriter writer((std::filesystem::path(out_dir) / m.data_file).string(), cfg.camera.height,
                         cfg.camera.width);

    const int jobs = std::max(1, opts.jobs);
    const std::size_t block = static_cast<std::size_t>(jobs) * 8;
    std::vector<std::vector<DatasetRecord>> slots(block);
    std::vector<char> ok(block);
    std::vector<std::string> errors(block);

    for (std::size_t start = 0; start < n_items; start += block) {
        const std::size_t len = std::min(block, n_items - start);
        std::atomic<std::size_t> next{0};
        auto work = [&] {
            for (std::size_t s; (s = next.fetch_add(1)) < len;) {
                const std::size_t item = start + s;
                const auto& g = cfg.grasps[item / n_poses];
                const std::size_t p = item % n_poses;
                slots[s].clear();
                try {
                    ok[s] = render_record(cfg, g, poses[p], p, cfg.images_per_pose, slots[s]);
                } catch (const std::exception& e) {
                    errors[s] = e.what();
                    ok[s] = 0;
                }
            }
        };
        if (jobs == 1) {
            work();
        } else {
            std::vector<std::thread> pool;
            for (int t = 0; t < jobs; ++t) pool.emplace_back(work);
            for (auto& t : pool) t.join();
        }
        for (std::size_t s = 0; s < len; ++s) {
            const std::size_t item = start + s;
            const auto gid = static_cast<std::uint32_t>(cfg.grasps[item / n_poses].id);
            const auto p = static_cast<std::uint32_t>(item % n_poses);
            if (!errors[s].empty()) {
                throw DatasetError("generate: grasp " + std::to_string(gid) + " pose " + std::to_string(p) + ": " +
                                   errors[s]);
            }
            if (!ok[s]) {
                std::cerr << "skipped: grasp " << gid << " pose " << p << " (no equilibrium)\n";
                for (int i = 0; i < cfg.images_per_pose; ++i) {
                    m.skipped.push_back({gid, p, static_cast<std::uint32_t>(i)});
                }
                continue;
            }
            for (const auto& r : slots[s]) writer.append(r);
        }
        if (opts.progress) opts.progress(start + len, n_items);
    }
    writer.finish();
    m.record_count = writer.count();

    const std::size_t skipped_items = m.skipped.size() / static_cast<std::size_t>(cfg.images_per_pose);
    if (static_cast<double>(skipped_items) > 0.001 * static_cast<double>(n_items)) {
        throw DatasetError("generate: " + std::to_string(skipped_items) + " of " + std::to_string(n_items) +
                           " poses did not converge (limit 0.1%)");
    }
    m.assignment = split(m, plan);
    write_manifest(m, (std::filesystem::path(out_dir) / "manifest.json").string());
    return m;
}

// ---- preprocessed view -------------------------------------------------------

PreparedSet prepare(const std::string& dir, const DatasetManifest& manifest, const preprocess::PreprocessSpec& spec,
                    const std::function<bool(const RecordKey&, Split)>& keep) {
    DatasetReader reader((std::filesystem::path(dir) / manifest.data_file).string());
    const auto keys = manifest.record_keys();
    if (reader.header().record_count != keys.size() || manifest.assignment.size() != keys.size()) {
        throw DatasetError("prepare: data file holds " + std::to_string(reader.header().record_count) +
                           " records, manifest expects " + std::to_string(keys.size()));
    }
    if (reader.header().width != manifest.config.camera.width ||
        reader.header().height != manifest.config.camera.height) {
        throw DatasetError("prepare: image size differs from the manifest camera");
    }
    PreparedSet set;
    set.input_size = spec.out_size;
    DatasetRecord rec;
    for (std::size_t i = 0; reader.next(rec); ++i) {
        if (rec.grasp_id != keys[i].grasp_id) {
            throw DatasetError("prepare: record " + std::to_string(i) + " has grasp " + std::to_string(rec.grasp_id) +
                               ", manifest expects " + std::to_string(keys[i].grasp_id));
        }
        if (keep && !keep(keys[i], manifest.assignment[i])) continue;
        const auto grid = preprocess::pipeline(rec.image, rec.anchors, spec);
        set.inputs.insert(set.inputs.end(), grid.values.begin(), grid.values.end());
        set.keys.push_back(keys[i]);
        set.splits.push_back(manifest.assignment[i]);
        set.labels.push_back(rec.label);
    }
    return set;
}

}  // namespace softply::dataset
