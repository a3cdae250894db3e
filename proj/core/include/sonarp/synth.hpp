#pragma once

#include <optional>

#include "sonarp/geometry.hpp"
#include "sonarp/layers.hpp"
#include "sonarp/train.hpp"

namespace sonarp {

/// Synthetic forward-looking-sonar scene parameters. The field of view is a
/// polar sector whose apex sits below the bottom edge of the frame.
struct SceneConfig {
    std::size_t height = 320;
    std::size_t width = 480;
    double apex_x = 240;
    double apex_y = 330;
    double r_min = 30;
    double r_max = 340;
    double half_angle_deg = 60;

    std::size_t classes = 10;  // object classes; background is label `classes`
    std::size_t min_objects = 1;
    std::size_t max_objects = 3;
    int min_size = 64;
    int max_size = 96;
    int window = 96;  // patch size; every object is centered in such a window inside the FOV

    double background = 0.12;
    double highlight = 0.9;
    double speckle = 1.0;  // 0 = noise free, 1 = full exponential speckle
    double shadow_probability = 0.5;
    double shadow_factor = 0.3;
    double contrast_margin = 0.2;

    std::uint64_t seed = 1;

    /// Throws ConfigError for inconsistent values.
    void validate() const;
    std::string to_json() const;
    static SceneConfig from_json(const std::string& text);
};

struct SonarFrame {
    std::string id;
    Tensor<float> image;  // [1, H, W] in [0, 1]
    FovMask fov;
    std::vector<BoundingBox> boxes;  // labelled ground truth
};

/// Field of view raster of a config.
FovMask make_fov(const SceneConfig& config);

/// Deterministic per-frame seed derived from the base seed and an index.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

/// One frame. `objects` overrides the random object count; `classes` forces
/// the labels of the placed objects (its size then sets the count). Throws
/// ConfigError when the objects cannot be placed without overlap.
SonarFrame generate_scene(const SceneConfig& config, Rng& rng, std::optional<std::size_t> objects = std::nullopt,
                          std::span<const std::size_t> classes = {});

/// Frame `index` of the dataset defined by config.seed.
SonarFrame generate_frame(const SceneConfig& config, std::size_t index);
/// Frames [first, first + count), generated in parallel.
std::vector<SonarFrame> generate_frames(const SceneConfig& config, std::size_t count, std::size_t first = 0);

/// Frames with one tracked object (always boxes[0]) drifting with constant
/// velocity and reflecting at the FOV border, plus static distractors of
/// other classes. Speckle is redrawn every frame.
std::vector<SonarFrame> generate_sequence(const SceneConfig& config, std::size_t frames, std::size_t distractors,
                                          double speed, std::uint64_t seed);

/// Window of size config.window centered on a box.
BoundingBox centered_window(const BoundingBox& box, int window);

struct PatchSet {
    std::vector<Tensor<float>> patches;  // [1, s, s]
    std::vector<std::size_t> labels;

    std::size_t size() const noexcept { return patches.size(); }
    /// Stacked inputs with one-hot targets over `classes`.
    Dataset<float> to_dataset(std::size_t classes) const;
};

struct ClassificationSet {
    PatchSet train, val, test;
    std::size_t classes = 0;  // object classes + background
};

/// Object-centered crops (labels 0..C-1) and background crops (label C) with
/// IoU < 0.1 against every object. `samples_per_class` go to train, then
/// val_per_class and test_per_class. Patches are resized to `size` when it
/// differs from the window.
ClassificationSet make_classification_set(const SceneConfig& config, std::size_t samples_per_class,
                                          std::size_t val_per_class, std::size_t test_per_class,
                                          std::size_t size = 96, std::size_t max_frames = 100000);

enum class PairType { Positive, NegativeObject, NegativeBackground };
std::string to_string(PairType t);

struct PatchPair {
    Tensor<float> a, b;  // [1, 96, 96]
    int label = 0;       // 1 = same object class
    PairType type = PairType::Positive;
};

struct MatchingSet {
    std::vector<PatchPair> train, val, test;
};

enum class MatchingSplit { Shared, Disjoint };

/// Per object instance: 10 same-class pairs, 5 different-class pairs and 5
/// object-background pairs. Shared mode splits pairs 70/15/15 at random;
/// disjoint mode partitions the classes (60/20/20) and builds each split from
/// its own classes and background crops.
MatchingSet make_matching_set(const SceneConfig& config, std::size_t instances_per_class, MatchingSplit split,
                              std::uint64_t seed);

/// Stacked pair inputs: a [N, 2, 96, 96] tensor (two-channel) or two
/// [N, 1, 96, 96] tensors (siamese). Targets are [N, 1] scores or [N, 2]
/// one-hot depending on `one_hot`.
Dataset<float> pairs_to_dataset(std::span<const PatchPair> pairs, bool two_channel, bool one_hot);

struct ObjectnessSample {
    Tensor<float> patch;
    double objectness = 0;
    int label = -1;  // class of the best-overlapping object, -1 when objectness is 0
};

/// Sliding windows of each frame labelled by max-IoU objectness. At most
/// `positives_per_frame` windows with a non-zero label are kept per frame,
/// plus `zero_ratio` times as many zero-label windows. Each kept window adds
/// its LR and UD flips.
std::vector<ObjectnessSample> make_objectness_set(std::span<const SonarFrame> frames, double eps, int stride,
                                                  std::size_t positives_per_frame, double zero_ratio,
                                                  std::uint64_t seed);
Dataset<float> objectness_to_dataset(std::span<const ObjectnessSample> samples);

}  // namespace sonarp
