#pragma once

#include <filesystem>
#include <optional>

#include "sonarp/synth.hpp"
#include "sonarp/tmatch.hpp"
#include "sonarp/train.hpp"
#include "sonarp/zoo.hpp"

namespace sonarp {

enum class PipelineKind { Classification, Transfer, Matching, Proposals, Detector, Tracker };
std::string to_string(PipelineKind k);
PipelineKind pipeline_kind_from_string(const std::string& name);

enum class ScorerKind { Cnn, Fcn, Tm };
std::string to_string(ScorerKind k);
ScorerKind scorer_kind_from_string(const std::string& name);

/// Everything a pipeline run needs. Missing JSON fields keep these defaults.
struct ExperimentSpec {
    PipelineKind kind = PipelineKind::Classification;
    SceneConfig scene{};
    std::optional<std::filesystem::path> dataset;  // frames from disk instead of the generator
    std::filesystem::path output_dir = "runs";
    std::uint64_t seed = 1;
    std::size_t repeats = 3;  // independent training seeds

    // Classifier
    std::string network = "classic";  // classic | tiny | fire
    std::size_t modules = 2;
    std::size_t filters = 16;
    Regularization regularization = Regularization::BatchNorm;
    TrainConfig train{};
    std::size_t spc = 100;
    std::size_t val_per_class = 20;
    std::size_t test_per_class = 50;
    std::vector<std::size_t> spc_grid;   // defaults to {spc}
    std::vector<std::size_t> size_grid;  // defaults to {96}

    // Transfer
    std::vector<std::string> layers{"fc1", "bn2"};
    bool shared_classes = false;  // feature and target classes overlap

    // Matching
    MatcherKind matcher = MatcherKind::TwoChannel;
    MatcherHead matcher_head = MatcherHead::Softmax2;
    MatchingSplit matching_split = MatchingSplit::Shared;
    std::size_t instances_per_class = 20;

    // Proposals / detector / tracker
    ScorerKind scorer = ScorerKind::Fcn;
    ObjectnessKind objectness = ObjectnessKind::Tiny;
    // The objectness nets have no batch norm; Adam at 0.01 saturates their
    // sigmoid within the first epoch.
    double objectness_lr = 0.001;
    double eps = 0.2;
    int stride = 8;
    std::size_t train_frames = 40;
    std::size_t test_frames = 20;
    std::size_t positives_per_frame = 24;
    double zero_ratio = 1.0;
    std::size_t templates_per_class = 2;
    double to = 0.5;
    double st = 0.7;
    double ot = 0.5;
    std::size_t k = 10;
    std::vector<double> to_grid;   // defaults to 0.05, 0.10, ..., 1.0
    std::vector<double> st_grid;   // defaults to 0.5 ... 0.9
    std::vector<std::size_t> k_grid;  // defaults to 1..10, 20..100
    std::vector<double> ot_grid;   // defaults to 0.1 ... 0.9
    std::vector<double> gamma_grid;  // defaults to {train.gamma}
    bool svm_head = true;

    // Tracker
    std::size_t sequence_frames = 30;
    std::size_t distractors = 2;
    double speed = 3.0;
    std::optional<std::filesystem::path> objectness_model;
    std::optional<std::filesystem::path> matcher_model;  // absent: CC baseline only

    /// Fills empty grids with their defaults and throws ConfigError for
    /// invalid values.
    void finalize();
    std::string to_json() const;
    static ExperimentSpec from_json(const std::string& text);
    static ExperimentSpec load(const std::filesystem::path& path);
};

}  // namespace sonarp
