#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <functional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "softply/geometry.hpp"
#include "softply/plysim.hpp"
#include "softply/preprocess.hpp"
#include "softply/render.hpp"

namespace softply::dataset {

using geometry::DeformationState;
using render::DepthImage;
using render::PixelPoint;

struct DatasetRecord {
    std::uint32_t grasp_id = 0;
    DeformationState label;  // f32-rounded on disk
    std::uint64_t noise_seed = 0;
    std::array<PixelPoint, 2> anchors{};
    DepthImage image;

    friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

struct SimSettings {
    double gravity = 9.81;
    double tol = 1e-6;  // N
    int max_iters = 200000;
    double dt = 0.0005;      // dynamics substep, s
    double damping = 10.0;   // 1/s
};

struct NoiseSettings {
    double sigma_per_meter = 0.002;
    double dropout_prob = 0.005;
};

struct GenerationConfig {
    plysim::PlyMaterialSpec material;
    std::vector<plysim::GraspConfig> grasps;
    render::CameraModel camera;
    NoiseSettings noise;
    geometry::PoseGridSpec grid;
    preprocess::PreprocessSpec preprocess;
    SimSettings sim;
    int images_per_pose = 1;
    std::uint64_t master_seed = 0;
};

enum class Split : std::uint8_t { train = 0, test = 1, unused_pose = 2, unused_grasp = 3 };

const char* split_name(Split s);

struct SplitPlan {
    double unused_pose_fraction = 0.1;
    double train_fraction = 0.8;  // of the poses left after the unused ones
    std::set<std::uint32_t> held_out_grasp_ids;
    std::uint64_t seed = 0;
};

struct RecordKey {
    std::uint32_t grasp_id = 0;
    std::uint32_t pose_index = 0;
    std::uint32_t image_index = 0;

    friend bool operator==(const RecordKey&, const RecordKey&) = default;
};

struct DatasetManifest {
    static constexpr int kFormatVersion = 1;

    GenerationConfig config;
    std::uint64_t pose_count = 0;
    std::uint64_t record_count = 0;
    std::vector<RecordKey> skipped;
    SplitPlan split_plan;
    std::vector<Split> assignment;  // one entry per record, file order
    std::string data_file = "dataset.bin";

    // Keys of the stored records, in file order.
    std::vector<RecordKey> record_keys() const;
};

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Seed of the noise stream for one image.
std::uint64_t image_seed(std::uint64_t master_seed, std::uint32_t grasp_id, std::uint64_t pose_index,
                         std::uint32_t image_index);

// Simulates and renders one pose; returns false when the equilibrium solve
// did not converge.
bool render_record(const GenerationConfig& cfg, const plysim::GraspConfig& grasp, const DeformationState& pose,
                   std::uint64_t pose_index, int images, std::vector<DatasetRecord>& out,
                   plysim::SolveResult* solve = nullptr);

struct GenerateOptions {
    int jobs = 1;
    // Called after each finished pose block with (done, total) poses.
    std::function<void(std::size_t, std::size_t)> progress;
};

// Writes <out_dir>/dataset.bin and <out_dir>/manifest.json. Throws when more
// than 0.1% of the poses fail to converge.
DatasetManifest generate(const GenerationConfig& cfg, const SplitPlan& plan, const std::string& out_dir,
                         const GenerateOptions& opts = {});

// Record count of a full run: poses x grasp configs x images per pose.
std::uint64_t expected_record_count(const geometry::PoseGridSpec& grid, std::size_t grasp_count,
                                    int images_per_pose);

// Assignment of every record (given by key) to exactly one split.
std::vector<Split> split(const std::vector<RecordKey>& keys, std::uint64_t pose_count, const SplitPlan& plan);

std::vector<Split> split(const DatasetManifest& manifest, const SplitPlan& plan);

// Sorted pose indices that carry the given split label.
std::vector<std::uint32_t> poses_in(const std::vector<RecordKey>& keys, const std::vector<Split>& assignment,
                                    Split which);

// Seeded nested subsample of pose ids: for one seed, smaller fractions are
// subsets of larger ones.
std::vector<std::uint32_t> subsample(const std::vector<std::uint32_t>& train_poses, double fraction,
                                     std::uint64_t seed);

// Pose index of a lattice label (nearest lattice point on each axis).
std::uint64_t pose_index_of(const geometry::PoseGridSpec& grid, const DeformationState& label);

// ---- binary format -------------------------------------------------------
// "SPLYDS01", u32 version = 1, u32 height, u32 width, u32 record_count, then
// per record: u32 grasp_id, 5 x f32 label, u64 noise_seed, 4 x f32 anchors,
// height * width x f32 depth. All little-endian.

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::size_t kHeaderBytes = 8 + 4 * 4;

inline std::size_t record_bytes(int height, int width) {
    return 4 + 5 * 4 + 8 + 4 * 4 + static_cast<std::size_t>(height) * width * 4;
}

class DatasetWriter {
public:
    DatasetWriter(const std::string& path, int height, int width);
    DatasetWriter(const DatasetWriter&) = delete;
    DatasetWriter& operator=(const DatasetWriter&) = delete;
    ~DatasetWriter();

    void append(const DatasetRecord& rec);
    // Patches the record count into the header and closes the file.
    void finish();
    std::uint32_t count() const { return count_; }

private:
    std::string path_;
    std::ofstream os_;
    int height_;
    int width_;
    std::uint32_t count_ = 0;
    bool finished_ = false;
};

struct DatasetHeader {
    int height = 0;
    int width = 0;
    std::uint32_t record_count = 0;
};

class DatasetReader {
public:
    explicit DatasetReader(const std::string& path);

    const DatasetHeader& header() const { return header_; }
    // False once all records are consumed. Throws DatasetError naming the
    // record index and byte offset on truncation.
    bool next(DatasetRecord& rec);
    std::uint32_t position() const { return index_; }

private:
    std::string path_;
    std::ifstream is_;
    DatasetHeader header_;
    std::uint32_t index_ = 0;
    std::uint64_t offset_ = 0;
    std::vector<std::uint8_t> buf_;
};

void write_dataset(const std::string& path, int height, int width, const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> read_dataset(const std::string& path, DatasetHeader* header = nullptr);

nlohmann::json manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);
void write_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest read_manifest(const std::string& path);

// ---- preprocessed views used by training and evaluation -----------------

struct PreparedSet {
    int input_size = 0;
    std::vector<float> inputs;  // count x input_size^2
    std::vector<RecordKey> keys;
    std::vector<Split> splits;
    std::vector<DeformationState> labels;

    std::size_t size() const { return keys.size(); }
    std::span<const float> input(std::size_t i) const {
        const std::size_t n = static_cast<std::size_t>(input_size) * input_size;
        return {inputs.data() + i * n, n};
    }
};

// Streams <dir>/dataset.bin and runs the preprocessing pipeline on every
// record accepted by `keep`.
PreparedSet prepare(const std::string& dir, const DatasetManifest& manifest, const preprocess::PreprocessSpec& spec,
                    const std::function<bool(const RecordKey&, Split)>& keep);

}  // namespace softply::dataset
