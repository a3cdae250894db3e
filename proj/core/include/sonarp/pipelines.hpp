#pragma once

#include "sonarp/csv.hpp"
#include "sonarp/experiment.hpp"
#include "sonarp/metrics.hpp"
#include "sonarp/proposals.hpp"
#include "sonarp/svm.hpp"

namespace sonarp {

/// Tabular result of a pipeline; written as report.csv.
struct EvalReport {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> row);
    /// Cell of the given row and column name, parsed as a number.
    double number(std::size_t row, const std::string& column) const;
    void write(const std::filesystem::path& path) const;
};

/// Trains the chosen classifier for every (SPC, image size) grid point and
/// `repeats` seeds; reports mean and std of test accuracy.
EvalReport run_classification(const ExperimentSpec& spec);
/// Frozen features of a trained classifier at each requested layer, L2
/// normalized and classified by a one-vs-one linear SVM.
EvalReport run_transfer(const ExperimentSpec& spec);
/// Trains a matcher; reports AUC and accuracy per pair type.
EvalReport run_matching(const ExperimentSpec& spec);
/// Trains (or builds) an objectness scorer and sweeps T_o, k, S_t and O_t.
EvalReport run_proposals(const ExperimentSpec& spec);
/// Dual-head detector per gamma: recall and classification accuracy over T_o
/// for the FC head and, optionally, a linear SVM on the shared trunk.
EvalReport run_detector(const ExperimentSpec& spec);
/// Tracking by matching on a generated drifting-object sequence: CC baseline
/// and, when available, a learned matcher.
EvalReport run_tracker(const ExperimentSpec& spec);
EvalReport run_pipeline(const ExperimentSpec& spec);

// Building blocks shared by the pipelines, the CLI and the tests.

/// Network chosen by spec.network / modules / filters / regularization.
Network<float> build_classifier(const ExperimentSpec& spec, std::size_t classes, std::size_t input_size);

/// Score of the "match" class: probs[:, 1] for a softmax head, the sigmoid
/// output otherwise. Pairs are stacked as the matcher expects.
std::vector<double> matcher_scores(Network<float>& matcher, const Tensor<float>& templ,
                                   std::span<const Tensor<float>> candidates);
/// argmax{1 - p, p}: 1 only when p > 0.5.
inline int score_to_class(double p) { return p > 0.5 ? 1 : 0; }

/// Infer-mode forward in chunks; returns every network output and, when
/// `layer` is non-empty, that node's activations flattened to [N, D].
struct ForwardResult {
    std::vector<Tensor<float>> outputs;
    Tensor<float> features;
};
ForwardResult forward_chunks(Network<float>& net, std::span<const Tensor<float>> inputs, const std::string& layer = "",
                             std::size_t batch_size = 64);

/// Matcher trained on the train split (validation on val) per spec.
Network<float> train_matcher(const ExperimentSpec& spec, const MatchingSet& set);

/// Train and test frames: the generator (disjoint index ranges) or the first
/// train_frames / remaining frames of spec.dataset.
std::pair<std::vector<SonarFrame>, std::vector<SonarFrame>> proposal_frames(const ExperimentSpec& spec);

/// Patch objectness network trained by MSE on flip-augmented windows.
Network<float> train_objectness(const ExperimentSpec& spec, std::span<const SonarFrame> frames);

/// templates_per_class object-centered crops per class.
TemplateSet sample_templates(std::span<const SonarFrame> frames, std::size_t per_class, std::size_t classes,
                             int window);

/// Scores every FOV window of one frame. `net` is a patch network (Cnn), an
/// FCN (Fcn) or unused (Tm, which uses `templates`).
std::vector<BoundingBox> score_frame(ScorerKind kind, Network<float>* net, const TemplateSet* templates,
                                     const SonarFrame& frame, int stride);

struct SweepPoint {
    double parameter = 0;
    double proposals = 0;  // mean per frame
    double recall = 0;     // detected / total ground truth over all frames
    double abo = 0;        // mean best overlap over all ground-truth boxes
};

/// Each sweep applies the selection to the scored windows of every frame.
/// Threshold: score >= T_o then NMS(S_t). Top-k: NMS(S_t) then the k best.
/// NMS: score >= T_o then NMS(S_t) per grid value. Overlap: fixed T_o and
/// S_t, recall per O_t.
std::vector<SweepPoint> sweep_threshold(const std::vector<std::vector<BoundingBox>>& scored,
                                        std::span<const SonarFrame> frames, std::span<const double> grid, double st,
                                        double ot);
std::vector<SweepPoint> sweep_top_k(const std::vector<std::vector<BoundingBox>>& scored,
                                    std::span<const SonarFrame> frames, std::span<const std::size_t> grid, double st,
                                    double ot);
std::vector<SweepPoint> sweep_nms(const std::vector<std::vector<BoundingBox>>& scored,
                                  std::span<const SonarFrame> frames, std::span<const double> grid, double to,
                                  double ot);
std::vector<SweepPoint> sweep_overlap(const std::vector<std::vector<BoundingBox>>& scored,
                                      std::span<const SonarFrame> frames, std::span<const double> grid, double to,
                                      double st);
void write_sweep(const std::filesystem::path& path, const std::string& parameter,
                 std::span<const SweepPoint> points);

}  // namespace sonarp
