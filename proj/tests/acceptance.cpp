// End-to-end acceptance run: one PASS/FAIL line per criterion, details on the
// indented lines below it. Optional arguments select criteria ("1", "5c", ...).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "gradient_suite.hpp"
#include "oracles.hpp"
#include "sonarp/dataset_io.hpp"
#include "sonarp/pipelines.hpp"
#include "sonarp/serialize.hpp"
#include "sonarp/tracker.hpp"

using namespace sonarp;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Collects failed checks of one criterion.
struct Check {
    std::vector<std::string> failures;
    void expect(bool ok, const std::string& what) {
        if (!ok && failures.size() < 20) failures.push_back(what);
        if (!ok && failures.size() == 20) failures.push_back("(further failures omitted)");
    }
    bool ok() const { return failures.empty(); }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

Tensor<float> random_image(Shape shape, Rng& rng) { return testing::random_tensor<float>(std::move(shape), rng, 0, 1); }

Network<float> initialized(Network<float> net, std::uint64_t seed) {
    Rng rng(seed);
    initialize(net, InitSpec{}, rng);
    return net;
}

Tensor<float> infer(Network<float>& net, const Tensor<float>& x) {
    Rng rng(0);
    return net.forward(x, Mode::Infer, rng);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("sonarp_accept_" + name);
    fs::remove_all(p);
    return p;
}

// ------------------------------------------------------------------ 1

void gradients(Check& c, std::vector<std::string>& notes) {
    const auto rep = testing::run_gradient_suite(20, 2024);
    c.expect(rep.worst.size() == 21, "expected 21 components, got " + std::to_string(rep.worst.size()));
    double worst = 0;
    std::string worst_name;
    for (const auto& [name, err] : rep.worst) {
        c.expect(rep.configs.at(name) >= 20, name + ": only " + std::to_string(rep.configs.at(name)) + " configs");
        c.expect(err < 1e-3, name + ": relative error " + fmt("%.3g", err));
        if (err >= worst) worst = err, worst_name = name;
    }
    notes.push_back(std::to_string(rep.worst.size()) + " components, worst " + worst_name + " " + fmt("%.3g", worst));
}

// ------------------------------------------------------------------ 2

void fcn_equivalence(Check& c, std::vector<std::string>& notes) {
    auto patch = initialized(build_objectness_net(ObjectnessKind::Tiny), 7);
    // Non-trivial batch-norm statistics so the buffers take part.
    Rng rng(8);
    patch.forward(random_image({16, 1, 96, 96}, rng), Mode::Train, rng);
    auto fcn = to_fcn(patch);
    double worst = 0;
    for (int i = 0; i < 50; ++i) {
        const auto x = random_image({1, 1, 96, 96}, rng);
        const auto a = infer(patch, x), b = infer(fcn, x);
        c.expect(b.size() == 1, "FCN output is not a single score");
        worst = std::max(worst, double(std::abs(a[0] - b[0])));
    }
    c.expect(worst < 1e-5, "max |patch - fcn| = " + fmt("%.3g", worst));
    notes.push_back("50 patches, max |patch - fcn| " + fmt("%.3g", worst));
}

// ------------------------------------------------------------------ 3

void oracles(Check& c, std::vector<std::string>& notes) {
    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
        const auto boxes = oracle::random_boxes(rng, 2 + t % 30, true);
        for (double th : {0.1, 0.3, 0.5, 0.7})
            c.expect(nms(boxes, th) == oracle::nms(boxes, th), "nms instance " + std::to_string(t));
    }
    for (int t = 0; t < 200; ++t) {
        const auto windows = oracle::random_boxes(rng, 12);
        const auto truth = oracle::random_boxes(rng, t % 5);
        const auto got = label_windows(windows, truth, 0.2);
        for (std::size_t i = 0; i < windows.size(); ++i) {
            double best = 0;
            for (const auto& g : truth) best = std::max(best, oracle::pixel_iou(windows[i], g));
            c.expect(std::abs(got[i] - oracle::objectness(best, 0.2)) < 1e-12,
                     "window label instance " + std::to_string(t));
        }
    }
    for (int t = 0; t < 200; ++t) {
        const auto truth = oracle::random_boxes(rng, 1 + t % 5);
        const auto props = oracle::random_boxes(rng, t % 7);
        for (double ot : {0.1, 0.3, 0.5, 0.7})
            c.expect(detection_recall(props, truth, ot).detected == oracle::max_detected(props, truth, ot),
                     "recall instance " + std::to_string(t));
        c.expect(std::abs(average_best_overlap(truth, props) - oracle::abo(truth, props)) < 1e-12,
                 "abo instance " + std::to_string(t));
    }
    std::uniform_int_distribution<int> q(0, 10), bit(0, 1);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 2 + t % 40;
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) s[i] = q(rng) / 10.0, y[i] = bit(rng);
        y[0] = 1;
        y[1] = 0;
        c.expect(std::abs(roc_auc(s, y).auc - oracle::auc(s, y)) < 1e-9, "auc instance " + std::to_string(t));
    }
    notes.push_back("200 instances each of nms, window labels, recall, abo and auc");
}

// ------------------------------------------------------------------ 4

void closed_form(Check& c, std::vector<std::string>& notes) {
    c.expect(objectness_label(0.85, 0.2) == 1.0, "objectness(0.85)");
    c.expect(objectness_label(0.15, 0.2) == 0.0, "objectness(0.15)");
    c.expect(std::abs(objectness_label(0.5, 0.2) - 0.5) < 1e-12, "objectness(0.5)");

    Rng rng(4);
    for (int t = 0; t < 100; ++t) {
        const auto a = random_image({1, 16, 16}, rng), b = random_image({1, 16, 16}, rng);
        const double v = cc_similarity(a, b);
        c.expect(v >= -1.0 && v <= 1.0, "cc out of range");
        c.expect(std::abs(cc_similarity(a, a) - 1.0) < 1e-6, "cc(I, I) != 1");
    }

    int points = 0;
    int rejected = 0;
    for (std::size_t w = 5; w <= 60 && points < 200; w += 3)
        for (std::size_t n : {1, 2, 3, 5})
            for (std::size_t p : {0, 1, 2})
                for (std::size_t s : {1, 2, 3}) {
                    if (n > w + 2 * p || points >= 200) continue;
                    if ((w + 2 * p - n) % s != 0) {
                        // Strides that do not tile the padded input are refused.
                        bool threw = false;
                        try {
                            conv_output_size(w, n, p, s);
                        } catch (const ConfigError&) {
                            threw = true;
                        }
                        c.expect(threw, "uneven stride accepted");
                        ++rejected;
                        continue;
                    }
                    // Enumerate window positions directly.
                    std::size_t count = 0;
                    for (std::size_t o = 0; o + n <= w + 2 * p; o += s) ++count;
                    c.expect(conv_output_size(w, n, p, s) == count,
                             "conv size W=" + std::to_string(w) + " N=" + std::to_string(n));
                    ++points;
                }
    c.expect(points == 200, "conv grid has " + std::to_string(points) + " points");
    notes.push_back("objectness branches, 100 cc pairs, " + std::to_string(points) + " conv size points (" +
                    std::to_string(rejected) + " uneven strides refused)");
}

// ------------------------------------------------------------------ 5

void classic_net(Check& c, std::vector<std::string>& notes) {
    ExperimentSpec s;
    s.kind = PipelineKind::Classification;
    s.output_dir = scratch("classic");
    s.repeats = 1;
    const auto t0 = Clock::now();
    const auto rep = run_classification(s);
    const double secs = seconds_since(t0), acc = rep.number(0, "accuracy_mean");
    c.expect(acc >= 0.95, "ClassicNet accuracy " + fmt("%.4f", acc));
    c.expect(secs < 600, "ClassicNet took " + fmt("%.0f s", secs));
    notes.push_back("5a ClassicNet(2,16) 20 epochs: test accuracy " + fmt("%.4f", acc) + " in " + fmt("%.0f s", secs));
}

void matcher(Check& c, std::vector<std::string>& notes) {
    ExperimentSpec s;
    s.kind = PipelineKind::Matching;
    s.output_dir = scratch("matcher");
    s.train.epochs = 5;
    s.train.batch_size = 128;
    const auto t0 = Clock::now();
    const auto rep = run_matching(s);
    const double secs = seconds_since(t0), auc = rep.number(0, "auc");
    c.expect(auc >= 0.85, "matcher AUC " + fmt("%.4f", auc));
    c.expect(secs < 900, "matcher took " + fmt("%.0f s", secs));
    notes.push_back("5b two-channel matcher: AUC " + fmt("%.4f", auc) + " in " + fmt("%.0f s", secs));
}

void cnn_vs_tm(Check& c, std::vector<std::string>& notes) {
    ExperimentSpec s;
    s.kind = PipelineKind::Proposals;
    s.train.epochs = 5;
    s.finalize();
    const auto t0 = Clock::now();
    const auto [train_frames, test_frames] = proposal_frames(s);
    Network<float> patch = train_objectness(s, train_frames);
    Network<float> fcn = to_fcn(patch);
    const TemplateSet templates = sample_templates(train_frames, s.templates_per_class, s.scene.classes, 96);
    std::vector<std::vector<BoundingBox>> cnn, tm;
    for (const auto& f : test_frames) {
        cnn.push_back(score_frame(ScorerKind::Fcn, &fcn, nullptr, f, s.stride));
        tm.push_back(score_frame(ScorerKind::Tm, nullptr, &templates, f, s.stride));
    }
    const std::size_t ks[] = {5, 10, 20};
    const auto a = sweep_top_k(cnn, test_frames, ks, s.st, 0.5);
    const auto b = sweep_top_k(tm, test_frames, ks, s.st, 0.5);
    const double secs = seconds_since(t0);
    std::string line = "5c recall at O_t=0.5 (cnn/tm):";
    for (std::size_t i = 0; i < a.size(); ++i) {
        c.expect(std::abs(a[i].proposals - b[i].proposals) < 1e-9,
                 "unequal proposal counts at k=" + std::to_string(ks[i]));
        c.expect(a[i].recall >= b[i].recall, "cnn recall below tm at k=" + std::to_string(ks[i]));
        line += " k=" + std::to_string(ks[i]) + " " + fmt("%.3f", a[i].recall) + "/" + fmt("%.3f", b[i].recall);
    }
    c.expect(secs < 1200, "comparison took " + fmt("%.0f s", secs));
    notes.push_back(line + " in " + fmt("%.0f s", secs));
}

// ------------------------------------------------------------------ 6

template <typename Get>
bool monotone(const std::vector<SweepPoint>& pts, Get get, bool increasing) {
    for (std::size_t i = 1; i < pts.size(); ++i) {
        const double d = get(pts[i]) - get(pts[i - 1]);
        if (increasing ? d < -1e-12 : d > 1e-12) return false;
    }
    return true;
}

void monotonicity(Check& c, std::vector<std::string>& notes) {
    SceneConfig sc;
    sc.seed = 6;
    const auto frames = generate_frames(sc, 10, 1000);
    const TemplateSet templates = sample_templates(generate_frames(sc, 10), 2, sc.classes, 96);
    std::vector<std::vector<BoundingBox>> scored;
    for (const auto& f : frames) scored.push_back(score_frame(ScorerKind::Tm, nullptr, &templates, f, 8));

    auto recall = [](const SweepPoint& p) { return p.recall; };
    auto abo = [](const SweepPoint& p) { return p.abo; };
    auto count = [](const SweepPoint& p) { return p.proposals; };
    int sweeps = 0;
    for (double to : {0.0, 0.3, 0.5}) {
        const std::vector<double> ots{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
        for (double st : {0.5, 0.7, 1.0}) {
            c.expect(monotone(sweep_overlap(scored, frames, ots, to, st), recall, false),
                     "recall rises with O_t at T_o=" + fmt("%.1f", to));
            ++sweeps;
        }
        const std::vector<double> sts{0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
        c.expect(monotone(sweep_nms(scored, frames, sts, to, 0.5), count, true),
                 "nms survivors grow as S_t decreases at T_o=" + fmt("%.1f", to));
        ++sweeps;
    }
    std::vector<std::size_t> ks;
    for (std::size_t k = 1; k <= 100; ++k) ks.push_back(k);
    for (double st : {0.5, 0.7, 0.9}) {
        const auto pts = sweep_top_k(scored, frames, ks, st, 0.5);
        c.expect(monotone(pts, count, true), "top-k proposal count not growing");
        c.expect(monotone(pts, recall, true), "recall falls with more proposals");
        c.expect(monotone(pts, abo, true), "abo falls with more proposals");
        ++sweeps;
    }

    // Tracking with template objectness and the CC matcher.
    double ctf_low = 0, ctf_mid = 0;
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto seq = generate_sequence(sc, 15, 2, 3.0, seed);
        const WindowScorer scorer = [&](const SonarFrame& f) {
            return score_frame(ScorerKind::Tm, nullptr, &templates, f, 8);
        };
        TrackerConfig cfg;
        cfg.initial = centered_window(seq[0].boxes[0], 96);
        const auto res = track(seq, scorer, cc_pair_scorer(), cfg);
        std::vector<BoundingBox> truth;
        for (const auto& f : seq) truth.push_back(f.boxes[0]);
        double prev = 1.0;
        for (int i = 1; i <= 9; ++i) {
            const double v = ctf(res.boxes, truth, i / 10.0);
            c.expect(v <= prev + 1e-12, "CTF rises with O_t");
            prev = v;
            if (i == 1) ctf_low += v / 3;
            if (i == 5) ctf_mid += v / 3;
        }
        ++sweeps;
    }
    notes.push_back(std::to_string(sweeps) + " generated sweeps over 10 frames and 3 sequences, mean CTF " +
                    fmt("%.2f", ctf_low) + " at O_t=0.1 and " + fmt("%.2f", ctf_mid) + " at 0.5");
}

// ------------------------------------------------------------------ 7

ExperimentSpec small(PipelineKind kind, const fs::path& out) {
    ExperimentSpec s;
    s.kind = kind;
    s.output_dir = out;
    s.modules = 1;
    s.filters = 4;
    s.repeats = 2;
    s.spc = 6;
    s.val_per_class = 2;
    s.test_per_class = 3;
    s.train.epochs = 2;
    s.train_frames = 3;
    s.test_frames = 2;
    s.stride = 32;
    s.positives_per_frame = 4;
    s.instances_per_class = 2;
    s.sequence_frames = 5;
    s.layers = {"fc1", "bn1"};
    s.scene.classes = 6;
    return s;
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
    return files;
}

void determinism(Check& c, std::vector<std::string>& notes) {
    const PipelineKind kinds[] = {PipelineKind::Classification, PipelineKind::Transfer, PipelineKind::Matching,
                                  PipelineKind::Proposals,      PipelineKind::Detector, PipelineKind::Tracker};
    std::size_t files = 0;
    for (auto kind : kinds) {
        const auto name = to_string(kind);
        const auto a = scratch("det_a_" + name), b = scratch("det_b_" + name);
        run_pipeline(small(kind, a));
        run_pipeline(small(kind, b));
        const auto ta = tree(a), tb = tree(b);
        c.expect(!ta.empty(), name + " wrote nothing");
        c.expect(ta == tb, name + " outputs differ between reruns");
        files += ta.size();
    }
    notes.push_back("6 pipelines run twice, " + std::to_string(files) + " files compared byte for byte");
}

// ------------------------------------------------------------------ 8

void serialization(Check& c, std::vector<std::string>& notes) {
    Rng rng(8);
    std::vector<std::pair<std::string, Network<float>>> nets;
    nets.emplace_back("classic", build_classic_net(2, 8, Regularization::BatchNorm, 11));
    nets.emplace_back("classic-dropout", build_classic_net(1, 8, Regularization::Dropout, 11));
    nets.emplace_back("tiny", build_tiny_net(2, 8, 11));
    nets.emplace_back("fire", build_fire_net(1, 4, 11));
    nets.emplace_back("two-channel", build_matcher(MatcherKind::TwoChannel, MatcherHead::Softmax2));
    nets.emplace_back("siamese", build_matcher(MatcherKind::Siamese, MatcherHead::Sigmoid));
    nets.emplace_back("objectness", build_objectness_net(ObjectnessKind::Tiny));
    nets.emplace_back("detector", build_detector(11));
    const auto dir = scratch("models");
    fs::create_directories(dir);
    for (auto& [name, net] : nets) {
        initialize(net, InitSpec{}, rng);
        std::vector<Tensor<float>> in;
        for (const auto& shape : net.input_shapes()) {
            Shape full{4};
            full.insert(full.end(), shape.begin(), shape.end());
            in.push_back(random_image(full, rng));
        }
        net.forward(std::span<const Tensor<float>>(in), Mode::Train, rng);
        const auto path = dir / (name + ".flsn");
        save_model(net, path);
        auto back = load_model(path);
        c.expect(serialize_model(back) == serialize_model(net), name + ": bytes differ after reload");
        Rng r1(0), r2(0);
        const auto ya = net.forward(std::span<const Tensor<float>>(in), Mode::Infer, r1);
        const auto yb = back.forward(std::span<const Tensor<float>>(in), Mode::Infer, r2);
        c.expect(ya == yb, name + ": outputs differ after reload");
    }

    SonarDataset data;
    data.config.seed = 88;
    data.frames = generate_frames(data.config, 12);
    const auto ddir = scratch("dataset");
    save_dataset(ddir, data);
    const auto back = load_dataset(ddir);
    c.expect(back.frames.size() == data.frames.size(), "frame count differs");
    double worst = 0;
    for (std::size_t i = 0; i < std::min(back.frames.size(), data.frames.size()); ++i) {
        c.expect(back.frames[i].id == data.frames[i].id, "frame id differs");
        c.expect(back.frames[i].boxes == data.frames[i].boxes, "annotations differ in frame " + std::to_string(i));
        c.expect(back.frames[i].fov.pixels == data.frames[i].fov.pixels, "mask differs in frame " + std::to_string(i));
        const auto& x = back.frames[i].image.data();
        const auto& y = data.frames[i].image.data();
        for (std::size_t j = 0; j < x.size(); ++j) worst = std::max(worst, double(std::abs(x[j] - y[j])));
    }
    c.expect(worst <= 1.0 / 255.0 + 1e-7, "pixel error " + fmt("%.3g", worst));
    notes.push_back(std::to_string(nets.size()) + " model kinds bit-exact, 12 frames with pixel error " +
                    fmt("%.4f", worst));
}

struct Criterion {
    std::string id, title;
    std::vector<std::pair<std::string, std::function<void(Check&, std::vector<std::string>&)>>> parts;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria{
        {"1", "gradient correctness", {{"1", gradients}}},
        {"2", "FCN equivalence", {{"2", fcn_equivalence}}},
        {"3", "oracle equivalence", {{"3", oracles}}},
        {"4", "closed-form checks", {{"4", closed_form}}},
        {"5", "desk-scale learning", {{"5a", classic_net}, {"5b", matcher}, {"5c", cnn_vs_tm}}},
        {"6", "monotonicity", {{"6", monotonicity}}},
        {"7", "determinism", {{"7", determinism}}},
        {"8", "serialization", {{"8", serialization}}},
    };
    std::set<std::string> wanted(argv + 1, argv + argc);
    int failed = 0;
    for (const auto& cr : criteria) {
        Check check;
        std::vector<std::string> notes;
        bool ran = false;
        const auto t0 = Clock::now();
        for (const auto& [id, fn] : cr.parts) {
            if (!wanted.empty() && !wanted.count(cr.id) && !wanted.count(id)) continue;
            ran = true;
            try {
                fn(check, notes);
            } catch (const std::exception& e) {
                check.expect(false, id + " threw: " + e.what());
            }
        }
        if (!ran) continue;
        failed += !check.ok();
        std::printf("criterion %s %s: %s (%.1f s)\n", cr.id.c_str(), cr.title.c_str(), check.ok() ? "PASS" : "FAIL",
                    seconds_since(t0));
        for (const auto& n : notes) std::printf("    %s\n", n.c_str());
        for (const auto& f : check.failures) std::printf("    failed: %s\n", f.c_str());
        std::fflush(stdout);
    }
    return failed ? 1 : 0;
}
