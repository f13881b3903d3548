#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>

#include "fixtures.hpp"
#include "softply/config.hpp"
#include "softply/dataset.hpp"

using namespace softply;
using namespace softply::dataset;

namespace {

std::vector<RecordKey> keys_for(std::uint32_t grasps, std::uint32_t poses, std::uint32_t images) {
    std::vector<RecordKey> k;
    for (std::uint32_t g = 0; g < grasps; ++g)
        for (std::uint32_t p = 0; p < poses; ++p)
            for (std::uint32_t i = 0; i < images; ++i) k.push_back({g, p, i});
    return k;
}

DatasetRecord sample_record(std::uint32_t g, int w, int h) {
    DatasetRecord r;
    r.grasp_id = g;
    r.label = {0.25f, 0.5f, -0.125f, 0.0625f, -0.5f};
    r.noise_seed = 0x0123456789abcdefULL + g;
    r.anchors = {PixelPoint{1.5, 2.5}, PixelPoint{100.25, 3.0}};
    r.image = DepthImage(w, h);
    for (std::size_t i = 0; i < r.image.values.size(); ++i) r.image.values[i] = 0.001f * static_cast<float>(i + g);
    return r;
}

std::string read_all(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

void write_all(const std::string& path, const std::string& bytes) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("record counts") {
    CHECK(expected_record_count(config::full_config().generation.grid, 9, 2) == 746496);
    CHECK(expected_record_count(config::desk_config().generation.grid, 9, 1) == 28125);
}

TEST_CASE("image seeds differ per key") {
    std::set<std::uint64_t> seen;
    for (std::uint32_t g = 0; g < 3; ++g)
        for (std::uint64_t p = 0; p < 50; ++p)
            for (std::uint32_t i = 0; i < 2; ++i) seen.insert(image_seed(7, g, p, i));
    CHECK(seen.size() == 300);
    CHECK(image_seed(7, 1, 2, 0) != image_seed(8, 1, 2, 0));
}

TEST_CASE("split sizes, exclusivity and pose grouping") {
    const auto keys = keys_for(4, 100, 2);
    SplitPlan plan;
    plan.unused_pose_fraction = 0.1;
    plan.train_fraction = 0.8;
    plan.held_out_grasp_ids = {3};
    plan.seed = 5;
    const auto a = split(keys, 100, plan);
    REQUIRE(a.size() == keys.size());
    CHECK(a == split(keys, 100, plan));
    std::map<std::uint32_t, Split> pose_split;
    std::map<Split, int> count;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        ++count[a[i]];
        if (keys[i].grasp_id == 3) {
            CHECK(a[i] == Split::unused_grasp);
            continue;
        }
        CHECK(a[i] != Split::unused_grasp);
        auto [it, fresh] = pose_split.emplace(keys[i].pose_index, a[i]);
        if (!fresh) CHECK(it->second == a[i]);
    }
    // 10 unused poses, round(0.8 * 90) = 72 train, 18 test; 3 grasps x 2 images each
    CHECK(count[Split::unused_pose] == 10 * 6);
    CHECK(count[Split::train] == 72 * 6);
    CHECK(count[Split::test] == 18 * 6);
    CHECK(count[Split::unused_grasp] == 200);
    plan.seed = 6;
    CHECK(split(keys, 100, plan) != a);
}

TEST_CASE("split rejects bad plans") {
    const auto keys = keys_for(2, 10, 1);
    SplitPlan p;
    p.unused_pose_fraction = 1.0;
    CHECK_THROWS_AS(split(keys, 10, p), DatasetError);
    p = {};
    p.train_fraction = 0.0;
    CHECK_THROWS_AS(split(keys, 10, p), DatasetError);
    p = {};
    CHECK_THROWS_AS(split(keys, 5, p), DatasetError);
}

TEST_CASE("subsample is nested and sized") {
    std::vector<std::uint32_t> poses(200);
    for (std::uint32_t i = 0; i < 200; ++i) poses[i] = 3 * i;
    const auto full = subsample(poses, 1.0, 9);
    CHECK(full.size() == 200);
    const auto half = subsample(poses, 0.5, 9);
    const auto quarter = subsample(poses, 0.25, 9);
    CHECK(half.size() == 100);
    CHECK(quarter.size() == 50);
    for (auto p : quarter) CHECK(std::find(half.begin(), half.end(), p) != half.end());
    CHECK(subsample(poses, 0.25, 10) != quarter);
    CHECK_THROWS_AS(subsample(poses, 0.0, 1), DatasetError);
}

TEST_CASE("pose index of a lattice label") {
    const auto grid = config::desk_config().generation.grid;
    const auto poses = geometry::enumerate_grid(grid);
    for (std::uint64_t i : {0ull, 17ull, 1562ull, 3124ull}) {
        auto s = poses[i];
        s.x = static_cast<float>(s.x);
        s.theta = static_cast<float>(s.theta);
        CHECK(pose_index_of(grid, s) == i);
    }
}

TEST_CASE("binary format roundtrip") {
    const auto dir = fixture::temp_dir("ds_roundtrip");
    const auto path = dir + "/d.bin";
    std::vector<DatasetRecord> recs{sample_record(0, 6, 4), sample_record(1, 6, 4), sample_record(7, 6, 4)};
    write_dataset(path, 4, 6, recs);
    CHECK(std::filesystem::file_size(path) == kHeaderBytes + 3 * record_bytes(4, 6));
    DatasetHeader h;
    const auto back = read_dataset(path, &h);
    CHECK(h.record_count == 3);
    CHECK(h.width == 6);
    CHECK(back == recs);
    const auto again = dir + "/e.bin";
    write_dataset(again, 4, 6, back);
    CHECK(read_all(path) == read_all(again));
}

TEST_CASE("corrupted dataset files name the failure location") {
    const auto dir = fixture::temp_dir("ds_corrupt");
    const auto path = dir + "/d.bin";
    write_dataset(path, 4, 6, {sample_record(0, 6, 4), sample_record(1, 6, 4)});
    const std::string good = read_all(path);

    write_all(path, good.substr(0, good.size() - 10));
    try {
        read_dataset(path);
        FAIL("truncation not detected");
    } catch (const DatasetError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("record 1") != std::string::npos);
        CHECK(msg.find("offset") != std::string::npos);
    }

    std::string bad = good;
    bad[2] = 'Q';
    write_all(path, bad);
    CHECK_THROWS_AS(read_dataset(path), DatasetError);

    write_all(path, good + "xx");
    CHECK_THROWS_WITH_AS(read_dataset(path), doctest::Contains("trailing"), DatasetError);

    write_all(path, good.substr(0, 10));
    CHECK_THROWS_AS(read_dataset(path), DatasetError);
}

TEST_CASE("writer rejects mismatched images") {
    const auto dir = fixture::temp_dir("ds_writer");
    DatasetWriter w(dir + "/d.bin", 4, 6);
    CHECK_THROWS_AS(w.append(sample_record(0, 5, 4)), DatasetError);
    w.append(sample_record(0, 6, 4));
    w.finish();
    CHECK(w.count() == 1);
    CHECK_THROWS_AS(w.append(sample_record(0, 6, 4)), DatasetError);
}

TEST_CASE("render_record produces consistent labels and anchors") {
    const auto cfg = fixture::tiny_config().generation;
    std::vector<DatasetRecord> out;
    const geometry::DeformationState s{0.0525, 0.6, 0.0, geometry::deg2rad(10), 0.0};
    plysim::SolveResult solve;
    REQUIRE(render_record(cfg, cfg.grasps[0], s, 5, 2, out, &solve));
    CHECK(solve.converged);
    REQUIRE(out.size() == 2);
    CHECK(out[0].label.x == static_cast<double>(static_cast<float>(s.x)));
    CHECK(out[0].noise_seed == image_seed(cfg.master_seed, static_cast<std::uint32_t>(cfg.grasps[0].id), 5, 0));
    CHECK(out[0].noise_seed != out[1].noise_seed);
    CHECK(out[0].image.width == 160);
    CHECK(!(out[0].image == out[1].image));
    CHECK(out[0].anchors[0].u == out[1].anchors[0].u);
}

TEST_CASE("generate, manifest and prepare") {
    const auto cfg = fixture::tiny_config();
    const auto dir = fixture::temp_dir("ds_generate");
    GenerateOptions opts;
    opts.jobs = 2;
    const auto m = generate(cfg.generation, cfg.split, dir, opts);
    CHECK(m.pose_count == 9);
    CHECK(m.record_count == 27);
    CHECK(m.skipped.empty());
    CHECK(m.assignment.size() == 27);

    const auto back = read_manifest(dir + "/manifest.json");
    CHECK(manifest_to_json(back) == manifest_to_json(m));
    CHECK(back.assignment == split(back, back.split_plan));

    const auto keys = m.record_keys();
    CHECK(keys.front() == RecordKey{static_cast<std::uint32_t>(cfg.generation.grasps[0].id), 0, 0});
    CHECK(poses_in(keys, m.assignment, Split::unused_pose).size() == 2);

    const auto set = prepare(dir, m, cfg.generation.preprocess, [](const RecordKey&, Split s) {
        return s != Split::unused_grasp;
    });
    CHECK(set.size() == 18);
    CHECK(set.input_size == 64);
    CHECK(set.inputs.size() == 18u * 64 * 64);
    const auto mx = *std::max_element(set.inputs.begin(), set.inputs.end());
    CHECK(mx > 0.0f);
    CHECK(mx <= 1.0f);

    // Single-threaded run produces the same bytes.
    const auto dir2 = fixture::temp_dir("ds_generate_1");
    generate(cfg.generation, cfg.split, dir2, {});
    CHECK(read_all(dir + "/dataset.bin") == read_all(dir2 + "/dataset.bin"));
}

TEST_CASE("manifest with a bad assignment is rejected") {
    const auto cfg = fixture::tiny_config();
    DatasetManifest m;
    m.config = cfg.generation;
    m.pose_count = 9;
    m.record_count = 27;
    m.split_plan = cfg.split;
    m.assignment.assign(27, Split::train);
    auto j = manifest_to_json(m);
    CHECK_NOTHROW(manifest_from_json(j));
    j["assignment"] = std::string(26, '0');
    CHECK_THROWS_AS(manifest_from_json(j), DatasetError);
    j["assignment"] = std::string(26, '0') + "9";
    CHECK_THROWS_AS(manifest_from_json(j), DatasetError);
}

}
