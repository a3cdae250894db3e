#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "sonarp/dataset_io.hpp"
#include "sonarp/synth.hpp"

using namespace sonarp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("sonarp_test_" + name);
    fs::remove_all(p);
    return p;
}

double contrast(const SonarFrame& f) {
    double in = 0, out = 0;
    std::size_t n_in = 0, n_out = 0;
    const std::size_t w = f.fov.width;
    for (std::size_t y = 0; y < f.fov.height; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            if (!f.fov.at(static_cast<long>(y), static_cast<long>(x))) continue;
            bool inside = false;
            for (const auto& b : f.boxes)
                inside |= static_cast<int>(x) >= b.x && static_cast<int>(x) < b.x + b.w && static_cast<int>(y) >= b.y &&
                          static_cast<int>(y) < b.y + b.h;
            (inside ? in : out) += f.image[y * w + x];
            ++(inside ? n_in : n_out);
        }
    }
    return in / static_cast<double>(n_in) - out / static_cast<double>(n_out);
}

}  // namespace

TEST_CASE("scene config validation and json") {
    SceneConfig c;
    CHECK_NOTHROW(c.validate());
    c.r_min = 400;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = SceneConfig{};
    c.min_objects = 4;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = SceneConfig{};
    c.seed = 99;
    c.speckle = 0.25;
    const auto back = SceneConfig::from_json(c.to_json());
    CHECK(back.seed == 99);
    CHECK(back.speckle == 0.25);
    CHECK(back.to_json() == c.to_json());
    CHECK_THROWS_AS(SceneConfig::from_json("{not json"), ConfigError);
}

TEST_CASE("frames are deterministic and well formed") {
    SceneConfig c;
    c.seed = 5;
    const auto a = generate_frame(c, 3);
    const auto b = generate_frame(c, 3);
    CHECK(a.image == b.image);
    CHECK(a.boxes == b.boxes);
    CHECK(a.id == "frame_000003");
    CHECK_FALSE(generate_frame(c, 4).image == a.image);

    // Parallel batch generation equals one-by-one generation.
    const auto batch = generate_frames(c, 4, 2);
    CHECK(batch[1].image == a.image);

    for (const auto& f : generate_frames(c, 12)) {
        CHECK(f.image.shape() == Shape{1, 320, 480});
        CHECK(f.fov.count() > 0);
        CHECK(f.boxes.size() >= 1);
        CHECK(f.boxes.size() <= 3);
        for (float v : f.image.data()) CHECK((v >= 0.0f && v <= 1.0f));
        for (std::size_t i = 0; i < f.boxes.size(); ++i) {
            CHECK(f.fov.contains(f.boxes[i]));
            CHECK(f.fov.contains(centered_window(f.boxes[i], 96)));
            REQUIRE(f.boxes[i].label);
            CHECK(*f.boxes[i].label < 10);
            for (std::size_t j = i + 1; j < f.boxes.size(); ++j) CHECK(iou(f.boxes[i], f.boxes[j]) == 0.0);
        }
        CHECK(contrast(f) >= 0.2);
    }
}

TEST_CASE("background-only and forced-class scenes") {
    SceneConfig c;
    Rng rng(51);
    const auto empty = generate_scene(c, rng, 0);
    CHECK(empty.boxes.empty());
    const std::vector<std::size_t> want{7, 2};
    const auto forced = generate_scene(c, rng, std::nullopt, want);
    REQUIRE(forced.boxes.size() == 2);
    CHECK(*forced.boxes[0].label == 7);
    CHECK(*forced.boxes[1].label == 2);

    // Impossible packing is reported instead of looping forever.
    c.max_objects = 40;
    CHECK_THROWS_AS(generate_scene(c, rng, 40), ConfigError);
}

TEST_CASE("sequences drift and keep the target first") {
    SceneConfig c;
    const auto seq = generate_sequence(c, 8, 2, 3.0, 77);
    REQUIRE(seq.size() == 8);
    const int label = *seq[0].boxes[0].label;
    bool moved = false;
    for (const auto& f : seq) {
        CHECK(f.boxes.size() == 3);
        CHECK(*f.boxes[0].label == label);
        for (std::size_t i = 1; i < f.boxes.size(); ++i) CHECK(*f.boxes[i].label != label);
        CHECK(f.fov.contains(f.boxes[0]));
        moved |= !(f.boxes[0] == seq[0].boxes[0]);
    }
    CHECK(moved);
    CHECK(generate_sequence(c, 8, 2, 3.0, 77)[5].image == seq[5].image);
}

TEST_CASE("classification set sizes and background crops") {
    SceneConfig c;
    const auto one = make_classification_set(c, 1, 1, 1);
    CHECK(one.classes == 11);
    CHECK(one.train.size() == 11);
    CHECK(one.val.size() == 11);
    CHECK(one.test.size() == 11);
    std::set<std::size_t> labels(one.train.labels.begin(), one.train.labels.end());
    CHECK(labels.size() == 11);

    const auto small = make_classification_set(c, 2, 0, 1, 48);
    CHECK(small.train.patches[0].shape() == Shape{1, 48, 48});
    const auto ds = small.train.to_dataset(small.classes);
    CHECK(ds.inputs[0].shape() == Shape{22, 1, 48, 48});
    CHECK(ds.targets.shape() == Shape{22, 11});

    CHECK_THROWS_AS(make_classification_set(c, 50, 0, 0, 96, 3), DataError);
}

TEST_CASE("matching pairs") {
    SceneConfig c;
    c.classes = 4;
    const auto set = make_matching_set(c, 3, MatchingSplit::Shared, 9);
    const std::size_t total = set.train.size() + set.val.size() + set.test.size();
    CHECK(total == 4 * 3 * 20);
    std::size_t pos = 0, neg_obj = 0, neg_bg = 0;
    for (const auto* split : {&set.train, &set.val, &set.test}) {
        for (const auto& p : *split) {
            CHECK(p.a.shape() == Shape{1, 96, 96});
            CHECK(p.label == (p.type == PairType::Positive ? 1 : 0));
            pos += p.type == PairType::Positive;
            neg_obj += p.type == PairType::NegativeObject;
            neg_bg += p.type == PairType::NegativeBackground;
        }
    }
    CHECK(pos == total / 2);
    CHECK(neg_obj == total / 4);
    CHECK(neg_bg == total / 4);
    CHECK(set.train.size() == doctest::Approx(0.7 * total).epsilon(0.02));

    // Pair order does not matter for the target.
    const std::vector<PatchPair> one{set.train[0]};
    const std::vector<PatchPair> swapped{{set.train[0].b, set.train[0].a, set.train[0].label, set.train[0].type}};
    CHECK(pairs_to_dataset(one, true, false).targets == pairs_to_dataset(swapped, true, false).targets);
    const auto two = pairs_to_dataset(set.val, true, true);
    CHECK(two.inputs[0].shape() == Shape{set.val.size(), 2, 96, 96});
    CHECK(two.targets.shape() == Shape{set.val.size(), 2});
    CHECK(pairs_to_dataset(set.val, false, false).inputs.size() == 2);

    CHECK_THROWS_AS(make_matching_set(c, 1, MatchingSplit::Shared, 9), ConfigError);
}

TEST_CASE("class-disjoint matching split") {
    SceneConfig c;
    c.classes = 6;
    const auto set = make_matching_set(c, 2, MatchingSplit::Disjoint, 4);
    // Pairs carry no class ids, so check that no test patch reappears in train.
    std::size_t overlaps = 0;
    for (const auto& t : set.test)
        for (const auto& r : set.train) overlaps += t.a == r.a || t.a == r.b;
    CHECK(overlaps == 0);
    CHECK_FALSE(set.train.empty());
    CHECK_FALSE(set.test.empty());
    c.classes = 5;
    CHECK_THROWS_AS(make_matching_set(c, 2, MatchingSplit::Disjoint, 4), ConfigError);
}

TEST_CASE("objectness samples with flips") {
    SceneConfig c;
    const auto frames = generate_frames(c, 2);
    std::size_t windows = 0;
    for (const auto& f : frames) windows += sliding_windows(320, 480, f.fov, 96, 16).size();
    const auto all = make_objectness_set(frames, 0.2, 16, 100000, 1e9, 3);
    CHECK(all.size() == 3 * windows);
    for (std::size_t i = 0; i + 2 < all.size(); i += 3) {
        CHECK(all[i].objectness == all[i + 2].objectness);
        CHECK(all[i + 1].objectness == all[i + 2].objectness);
        CHECK(all[i].patch == flip_lr(all[i + 2].patch));
        CHECK(all[i + 1].patch == flip_ud(all[i + 2].patch));
        CHECK((all[i].objectness > 0) == (all[i].label >= 0));
    }

    Rng rng(52);
    std::vector<SonarFrame> bg{generate_scene(c, rng, 0)};
    for (const auto& s : make_objectness_set(bg, 0.2, 32, 10, 1.0, 1)) CHECK(s.objectness == 0.0);

    const auto capped = make_objectness_set(frames, 0.2, 8, 5, 1.0, 3);
    std::size_t pos = 0;
    for (const auto& s : capped) pos += s.objectness > 0;
    CHECK(pos <= 3 * 5 * 2);
    const auto ds = objectness_to_dataset(capped);
    CHECK(ds.targets.shape() == Shape{capped.size(), 1});
}

TEST_CASE("dataset directory round trip") {
    SonarDataset data;
    data.config.seed = 8;
    data.frames = generate_frames(data.config, 8);
    data.frames[2].boxes.at(0).label.reset();
    const auto dir = scratch("roundtrip");
    save_dataset(dir, data);
    CHECK(fs::exists(dir / "config.json"));
    CHECK(fs::exists(dir / "images" / "frame_000000.png"));

    const auto back = load_dataset(dir);
    CHECK(back.config.to_json() == data.config.to_json());
    REQUIRE(back.frames.size() == 8);
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(back.frames[i].id == data.frames[i].id);
        CHECK(back.frames[i].boxes == data.frames[i].boxes);
        CHECK(back.frames[i].fov.pixels == data.frames[i].fov.pixels);
        CHECK(max_abs_diff(back.frames[i].image, data.frames[i].image) <= 1.0f / 255.0f);
    }

    // Break line 7 of the annotations.
    std::vector<std::string> lines;
    {
        std::ifstream in(dir / "annotations.jsonl");
        for (std::string l; std::getline(in, l);) lines.push_back(l);
    }
    lines[6] = "{\"id\": \"frame_000006\", \"boxes\": [";
    {
        std::ofstream out(dir / "annotations.jsonl");
        for (const auto& l : lines) out << l << '\n';
    }
    try {
        load_dataset(dir);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 7);
        CHECK(std::string(e.what()).find("line 7") != std::string::npos);
    }

    const auto missing = scratch("missing");
    save_dataset(missing, data);
    fs::remove(missing / "images" / "frame_000004.png");
    CHECK_THROWS_AS(load_dataset(missing), DataError);
    CHECK_THROWS_AS(load_dataset(scratch("nothing")), DataError);
    fs::remove_all(dir);
    fs::remove_all(missing);
}
