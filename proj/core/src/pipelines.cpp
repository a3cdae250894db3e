#include "sonarp/pipelines.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "sonarp/dataset_io.hpp"
#include "sonarp/serialize.hpp"
#include "sonarp/tracker.hpp"

namespace sonarp {

namespace fs = std::filesystem;

void EvalReport::add_row(std::vector<std::string> row) {
    if (row.size() != header.size()) throw DimensionError("report row width differs from header");
    rows.push_back(std::move(row));
}

double EvalReport::number(std::size_t row, const std::string& column) const {
    const auto it = std::find(header.begin(), header.end(), column);
    if (it == header.end()) throw DataError("report has no column " + column);
    const std::string& cell = rows.at(row).at(static_cast<std::size_t>(it - header.begin()));
    if (cell == "nan") return std::nan("");
    if (cell == "inf") return INFINITY;
    if (cell == "-inf") return -INFINITY;
    return std::stod(cell);
}

void EvalReport::write(const fs::path& path) const {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    CsvWriter w(path, header);
    for (const auto& r : rows) w.row(r);
}

namespace {

std::string num(double v) { return format_number(v); }
std::string num(std::size_t v) { return std::to_string(v); }

struct OutputDirs {
    fs::path root, curves, models;
};

OutputDirs prepare(const ExperimentSpec& spec) {
    OutputDirs d{spec.output_dir, spec.output_dir / "curves", spec.output_dir / "models"};
    fs::create_directories(d.curves);
    fs::create_directories(d.models);
    return d;
}

ExperimentSpec finalized(const ExperimentSpec& in) {
    ExperimentSpec s = in;
    s.finalize();
    return s;
}

// Samples of a patch set whose per-class rank is below `spc`.
PatchSet first_per_class(const PatchSet& set, std::size_t spc) {
    PatchSet out;
    std::map<std::size_t, std::size_t> seen;
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (seen[set.labels[i]]++ < spc) {
            out.patches.push_back(set.patches[i]);
            out.labels.push_back(set.labels[i]);
        }
    }
    return out;
}

PatchSet relabel(const PatchSet& set, std::size_t lo, std::size_t hi) {
    PatchSet out;
    for (std::size_t i = 0; i < set.size(); ++i)
        if (set.labels[i] >= lo && set.labels[i] < hi) {
            out.patches.push_back(set.patches[i]);
            out.labels.push_back(set.labels[i] - lo);
        }
    return out;
}

std::string tag(double v) {
    std::string s = format_number(v);
    std::replace(s.begin(), s.end(), '.', 'p');
    return s;
}

Tensor<float> stack_patches(std::span<const Tensor<float>> patches) {
    return stack(patches);
}

}  // namespace

Network<float> build_classifier(const ExperimentSpec& spec, std::size_t classes, std::size_t input_size) {
    if (spec.network == "classic")
        return build_classic_net(spec.modules, spec.filters, spec.regularization, classes, input_size);
    if (spec.network == "tiny") return build_tiny_net(spec.modules, spec.filters, classes, input_size);
    if (spec.network == "fire") return build_fire_net(spec.modules, spec.filters, classes, input_size);
    throw ConfigError("unknown network " + spec.network);
}

ForwardResult forward_chunks(Network<float>& net, std::span<const Tensor<float>> inputs, const std::string& layer,
                             std::size_t batch_size) {
    if (inputs.empty() || inputs[0].rank() == 0) throw DimensionError("no inputs");
    if (!layer.empty()) net.node_id(layer);
    const std::size_t n = inputs[0].dim(0);
    Rng rng(0);
    ForwardResult res;
    std::vector<std::vector<float>> out_data(net.outputs().size());
    std::vector<Shape> out_shapes(net.outputs().size());
    std::vector<float> feat;
    std::size_t feat_dim = 0;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        std::vector<std::size_t> rows(end - start);
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = start + i;
        std::vector<Tensor<float>> chunk;
        for (const auto& x : inputs) chunk.push_back(gather_rows(x, rows));
        const auto outs = net.forward(chunk, Mode::Infer, rng);
        for (std::size_t k = 0; k < outs.size(); ++k) {
            out_shapes[k] = outs[k].shape();
            out_data[k].insert(out_data[k].end(), outs[k].data().begin(), outs[k].data().end());
        }
        if (!layer.empty()) {
            const auto& a = net.activation(layer);
            feat_dim = a.size() / a.dim(0);
            feat.insert(feat.end(), a.data().begin(), a.data().end());
        }
    }
    for (std::size_t k = 0; k < out_data.size(); ++k) {
        Shape s = out_shapes[k];
        s[0] = n;
        res.outputs.emplace_back(s, std::move(out_data[k]));
    }
    if (!layer.empty()) res.features = Tensor<float>({n, feat_dim}, std::move(feat));
    return res;
}

// ---------------------------------------------------------------- classification

EvalReport run_classification(const ExperimentSpec& in) {
    const ExperimentSpec spec = finalized(in);
    const auto dirs = prepare(spec);
    EvalReport report{{"network", "spc", "size", "repeats", "accuracy_mean", "accuracy_std"}, {}};
    CsvWriter runs(dirs.curves / "classification_runs.csv", {"spc", "size", "seed", "test_accuracy"});
    CsvWriter epochs(dirs.curves / "classification_epochs.csv",
                     {"spc", "size", "seed", "epoch", "train_loss", "val_loss", "val_accuracy"});
    TrainConfig cfg = spec.train;
    cfg.loss = LossKind::CategoricalCE;
    const std::size_t max_spc = *std::max_element(spec.spc_grid.begin(), spec.spc_grid.end());
    for (std::size_t size : spec.size_grid) {
        const ClassificationSet set =
            make_classification_set(spec.scene, max_spc, spec.val_per_class, spec.test_per_class, size);
        const Dataset<float> val = set.val.to_dataset(set.classes);
        const Dataset<float> test = set.test.to_dataset(set.classes);
        for (std::size_t spc : spec.spc_grid) {
            const Dataset<float> train_ds = first_per_class(set.train, spc).to_dataset(set.classes);
            std::vector<double> accs;
            for (std::size_t r = 0; r < spec.repeats; ++r) {
                Rng rng(derive_seed(spec.seed, r));
                Network<float> net = build_classifier(spec, set.classes, size);
                initialize(net, InitSpec{}, rng);
                train(net, train_ds, val.size() ? &val : nullptr, cfg, rng, [&](const EpochLog& e) {
                    epochs.row(std::vector<double>{double(spc), double(size), double(r), double(e.epoch),
                                                   e.train_loss, e.val_loss, e.val_metric});
                });
                const Tensor<float> probs = predict(net, test.inputs[0]);
                const double acc = accuracy(predicted_classes(probs), set.test.labels);
                accs.push_back(acc);
                runs.row(std::vector<double>{double(spc), double(size), double(r), acc});
                if (r == 0)
                    save_model(net, dirs.models / ("classifier_spc" + num(spc) + "_s" + num(size) + ".flsn"));
            }
            const auto [mean, sd] = mean_std(accs);
            report.add_row({spec.network, num(spc), num(size), num(spec.repeats), num(mean), num(sd)});
        }
    }
    report.write(dirs.root / "report.csv");
    return report;
}

// ---------------------------------------------------------------- transfer

EvalReport run_transfer(const ExperimentSpec& in) {
    const ExperimentSpec spec = finalized(in);
    const auto dirs = prepare(spec);
    const ClassificationSet set =
        make_classification_set(spec.scene, spec.spc, spec.val_per_class, spec.test_per_class);
    const std::size_t c = set.classes;
    PatchSet feat_train, svm_train, svm_test;
    std::size_t feat_classes, target_classes;
    if (spec.shared_classes) {
        feat_train = set.train;
        svm_train = set.val;
        svm_test = set.test;
        feat_classes = target_classes = c;
    } else {
        const std::size_t split = c / 2;
        feat_train = relabel(set.train, 0, split);
        svm_train = relabel(set.train, split, c);
        svm_test = relabel(set.test, split, c);
        feat_classes = split;
        target_classes = c - split;
    }
    if (svm_train.size() == 0 || svm_test.size() == 0) throw DataError("transfer split is empty");

    Rng rng(derive_seed(spec.seed, 0));
    Network<float> net = build_classifier(spec, feat_classes, 96);
    initialize(net, InitSpec{}, rng);
    for (const auto& layer : spec.layers) {
        try {
            net.node_id(layer);
        } catch (const Error&) {
            throw ConfigError("layer '" + layer + "' is not in the network");
        }
    }
    TrainConfig cfg = spec.train;
    cfg.loss = LossKind::CategoricalCE;
    if (cfg.epochs > 0) train<float>(net, feat_train.to_dataset(feat_classes), nullptr, cfg, rng);
    save_model(net, dirs.models / "transfer_features.flsn");

    const Tensor<float> xtr = stack_patches(svm_train.patches), xte = stack_patches(svm_test.patches);
    EvalReport report{{"layer", "feature_dim", "train_samples", "test_samples", "accuracy"}, {}};
    for (const auto& layer : spec.layers) {
        Tensor<float> ftr = forward_chunks(net, std::span(&xtr, 1), layer).features;
        Tensor<float> fte = forward_chunks(net, std::span(&xte, 1), layer).features;
        l2_normalize_rows(ftr);
        l2_normalize_rows(fte);
        LinearSvm svm(SvmConfig{1.0, 40, spec.seed});
        svm.fit(ftr, svm_train.labels, target_classes);
        const double acc = accuracy(svm.predict(fte), svm_test.labels);
        report.add_row({layer, num(ftr.dim(1)), num(svm_train.size()), num(svm_test.size()), num(acc)});
    }
    report.write(dirs.root / "report.csv");
    return report;
}

// ---------------------------------------------------------------- matching

namespace {

bool one_hot_head(const Network<float>& net) { return net.output_shape(0).back() == 2; }

std::vector<double> match_probability(const Tensor<float>& out) {
    std::vector<double> p(out.dim(0));
    const std::size_t k = out.size() / out.dim(0);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = k == 2 ? out[i * 2 + 1] : out[i];
    return p;
}

}  // namespace

Network<float> train_matcher(const ExperimentSpec& spec, const MatchingSet& set) {
    const bool two = spec.matcher == MatcherKind::TwoChannel;
    const bool onehot = spec.matcher_head == MatcherHead::Softmax2;
    const Dataset<float> tr = pairs_to_dataset(set.train, two, onehot);
    TrainConfig cfg = spec.train;
    cfg.loss = onehot ? LossKind::CategoricalCE : LossKind::BinaryCE;
    Rng rng(derive_seed(spec.seed, 0x4D));
    Network<float> net = build_matcher(spec.matcher, spec.matcher_head);
    initialize(net, InitSpec{}, rng);
    if (!set.val.empty()) {
        const Dataset<float> va = pairs_to_dataset(set.val, two, onehot);
        train(net, tr, &va, cfg, rng);
    } else {
        train<float>(net, tr, nullptr, cfg, rng);
    }
    return net;
}

std::vector<double> matcher_scores(Network<float>& matcher, const Tensor<float>& templ,
                                   std::span<const Tensor<float>> candidates) {
    if (candidates.empty()) return {};
    std::vector<PatchPair> pairs;
    for (const auto& c : candidates) pairs.push_back({templ, c, 0, PairType::Positive});
    const bool two = matcher.input_shapes().size() == 1;
    const Dataset<float> d = pairs_to_dataset(pairs, two, false);
    return match_probability(forward_chunks(matcher, d.inputs).outputs[0]);
}

EvalReport run_matching(const ExperimentSpec& in) {
    const ExperimentSpec spec = finalized(in);
    const auto dirs = prepare(spec);
    const MatchingSet set = make_matching_set(spec.scene, spec.instances_per_class, spec.matching_split, spec.seed);
    Network<float> net = train_matcher(spec, set);
    save_model(net, dirs.models / "matcher.flsn");

    const bool two = spec.matcher == MatcherKind::TwoChannel;
    const Dataset<float> te = pairs_to_dataset(set.test, two, one_hot_head(net));
    const std::vector<double> p = match_probability(forward_chunks(net, te.inputs).outputs[0]);
    std::vector<int> labels;
    for (const auto& pr : set.test) labels.push_back(pr.label);
    const RocCurve roc = roc_auc(p, labels);
    {
        CsvWriter w(dirs.curves / "roc.csv", {"fpr", "tpr", "threshold"});
        for (const auto& pt : roc.points) w.row(std::vector<double>{pt.fpr, pt.tpr, pt.threshold});
    }
    std::map<PairType, std::pair<std::size_t, std::size_t>> per_type;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const bool ok = score_to_class(p[i]) == labels[i];
        correct += ok;
        auto& [hit, total] = per_type[set.test[i].type];
        hit += ok;
        ++total;
    }
    auto type_acc = [&](PairType t) {
        const auto it = per_type.find(t);
        return it == per_type.end() || it->second.second == 0 ? std::nan("")
                                                                : double(it->second.first) / it->second.second;
    };
    EvalReport report{{"matcher", "head", "split", "test_pairs", "auc", "accuracy", "accuracy_positive",
                       "accuracy_negative_object", "accuracy_negative_background"},
                      {}};
    report.add_row({to_string(spec.matcher), to_string(spec.matcher_head),
                    spec.matching_split == MatchingSplit::Shared ? "shared" : "disjoint", num(p.size()), num(roc.auc),
                    num(double(correct) / p.size()), num(type_acc(PairType::Positive)),
                    num(type_acc(PairType::NegativeObject)), num(type_acc(PairType::NegativeBackground))});
    report.write(dirs.root / "report.csv");
    return report;
}

// ---------------------------------------------------------------- proposals

std::pair<std::vector<SonarFrame>, std::vector<SonarFrame>> proposal_frames(const ExperimentSpec& spec) {
    if (spec.dataset) {
        SonarDataset d = load_dataset(*spec.dataset);
        if (d.frames.size() < spec.train_frames + 1 || d.frames.empty())
            throw DataError("dataset has " + std::to_string(d.frames.size()) + " frames, need more than " +
                            std::to_string(spec.train_frames));
        std::vector<SonarFrame> train(std::make_move_iterator(d.frames.begin()),
                                      std::make_move_iterator(d.frames.begin() + spec.train_frames));
        std::vector<SonarFrame> test(std::make_move_iterator(d.frames.begin() + spec.train_frames),
                                     std::make_move_iterator(d.frames.end()));
        if (test.size() > spec.test_frames) test.resize(spec.test_frames);
        return {std::move(train), std::move(test)};
    }
    // Test frames come from a separate index range of the same generator.
    return {generate_frames(spec.scene, spec.train_frames, 0), generate_frames(spec.scene, spec.test_frames, 1000000)};
}

Network<float> train_objectness(const ExperimentSpec& spec, std::span<const SonarFrame> frames) {
    const auto samples =
        make_objectness_set(frames, spec.eps, spec.stride, spec.positives_per_frame, spec.zero_ratio, spec.seed);
    const Dataset<float> ds = objectness_to_dataset(samples);
    TrainConfig cfg = spec.train;
    cfg.loss = LossKind::MSE;
    cfg.optimizer.learning_rate = spec.objectness_lr;
    Rng rng(derive_seed(spec.seed, 0x0B));
    Network<float> net = build_objectness_net(spec.objectness);
    initialize(net, InitSpec{}, rng);
    train<float>(net, ds, nullptr, cfg, rng);
    return net;
}

TemplateSet sample_templates(std::span<const SonarFrame> frames, std::size_t per_class, std::size_t classes,
                             int window) {
    TemplateSet t;
    std::vector<std::size_t> count(classes, 0);
    for (const auto& f : frames)
        for (const auto& b : f.boxes) {
            if (!b.label || static_cast<std::size_t>(*b.label) >= classes) continue;
            const auto c = static_cast<std::size_t>(*b.label);
            const BoundingBox w = centered_window(b, window);
            if (count[c] < per_class && w.x >= 0 && w.y >= 0 && w.x + w.w <= int(f.image.dim(2)) &&
                w.y + w.h <= int(f.image.dim(1))) {
                t.add(crop(f.image, w), c);
                ++count[c];
            }
        }
    if (t.size() == 0) throw DataError("no object crops available for templates");
    return t;
}

std::vector<BoundingBox> score_frame(ScorerKind kind, Network<float>* net, const TemplateSet* templates,
                                     const SonarFrame& frame, int stride) {
    const std::size_t h = frame.image.dim(1), w = frame.image.dim(2);
    const auto windows = sliding_windows(h, w, frame.fov, 96, stride);
    switch (kind) {
        case ScorerKind::Cnn:
            if (!net) throw ConfigError("objectness scorer missing");
            return score_windows(*net, frame.image, windows);
        case ScorerKind::Fcn: {
            if (!net) throw ConfigError("objectness scorer missing");
            const ObjectnessMap map = fcn_objectness_map(*net, frame.image);
            return score_windows(map, h, w, windows);
        }
        case ScorerKind::Tm: {
            if (!templates || templates->size() == 0) throw ConfigError("template scorer missing");
            const ObjectnessMap map = tm_objectness_map(frame.image, templates->patches, stride);
            return score_windows(map, h, w, windows);
        }
    }
    throw ConfigError("unknown scorer");
}

namespace {

struct Totals {
    std::size_t detected = 0, truth = 0, proposals = 0;
    double overlap_sum = 0;
    std::size_t frames = 0;

    void add(std::span<const BoundingBox> props, const SonarFrame& f, double ot) {
        const auto r = detection_recall(props, f.boxes, ot);
        detected += r.detected;
        truth += r.total;
        proposals += props.size();
        ++frames;
        if (!f.boxes.empty()) overlap_sum += average_best_overlap(f.boxes, props) * f.boxes.size();
    }
    SweepPoint point(double parameter) const {
        return {parameter, frames ? double(proposals) / frames : 0.0, truth ? double(detected) / truth : 1.0,
                truth ? overlap_sum / truth : 0.0};
    }
};

void check_sizes(const std::vector<std::vector<BoundingBox>>& scored, std::span<const SonarFrame> frames) {
    if (scored.size() != frames.size()) throw DimensionError("one scored window list per frame expected");
}

}  // namespace

std::vector<SweepPoint> sweep_threshold(const std::vector<std::vector<BoundingBox>>& scored,
                                        std::span<const SonarFrame> frames, std::span<const double> grid, double st,
                                        double ot) {
    check_sizes(scored, frames);
    std::vector<SweepPoint> out;
    for (double to : grid) {
        Totals t;
        for (std::size_t i = 0; i < frames.size(); ++i) t.add(nms(select_by_threshold(scored[i], to), st), frames[i], ot);
        out.push_back(t.point(to));
    }
    return out;
}

std::vector<SweepPoint> sweep_top_k(const std::vector<std::vector<BoundingBox>>& scored,
                                    std::span<const SonarFrame> frames, std::span<const std::size_t> grid, double st,
                                    double ot) {
    check_sizes(scored, frames);
    std::vector<std::vector<BoundingBox>> kept;
    for (const auto& s : scored) kept.push_back(nms(s, st));
    std::vector<SweepPoint> out;
    for (std::size_t k : grid) {
        Totals t;
        for (std::size_t i = 0; i < frames.size(); ++i) t.add(select_top_k(kept[i], k), frames[i], ot);
        out.push_back(t.point(double(k)));
    }
    return out;
}

std::vector<SweepPoint> sweep_nms(const std::vector<std::vector<BoundingBox>>& scored,
                                  std::span<const SonarFrame> frames, std::span<const double> grid, double to,
                                  double ot) {
    check_sizes(scored, frames);
    std::vector<SweepPoint> out;
    for (double st : grid) {
        Totals t;
        for (std::size_t i = 0; i < frames.size(); ++i) t.add(nms(select_by_threshold(scored[i], to), st), frames[i], ot);
        out.push_back(t.point(st));
    }
    return out;
}

std::vector<SweepPoint> sweep_overlap(const std::vector<std::vector<BoundingBox>>& scored,
                                      std::span<const SonarFrame> frames, std::span<const double> grid, double to,
                                      double st) {
    check_sizes(scored, frames);
    std::vector<std::vector<BoundingBox>> kept;
    for (const auto& s : scored) kept.push_back(nms(select_by_threshold(s, to), st));
    std::vector<SweepPoint> out;
    for (double ot : grid) {
        Totals t;
        for (std::size_t i = 0; i < frames.size(); ++i) t.add(kept[i], frames[i], ot);
        out.push_back(t.point(ot));
    }
    return out;
}

void write_sweep(const fs::path& path, const std::string& parameter, std::span<const SweepPoint> points) {
    CsvWriter w(path, {parameter, "proposals", "recall", "abo"});
    for (const auto& p : points) w.row(std::vector<double>{p.parameter, p.proposals, p.recall, p.abo});
}

EvalReport run_proposals(const ExperimentSpec& in) {
    const ExperimentSpec spec = finalized(in);
    const auto dirs = prepare(spec);
    auto [train_frames, test_frames] = proposal_frames(spec);

    std::optional<Network<float>> net;
    TemplateSet templates;
    if (spec.scorer == ScorerKind::Tm) {
        templates = sample_templates(train_frames, spec.templates_per_class, spec.scene.classes, spec.scene.window);
    } else {
        if (spec.objectness_model) {
            net.emplace(load_model(*spec.objectness_model));
        } else {
            net.emplace(train_objectness(spec, train_frames));
        }
        save_model(*net, dirs.models / "objectness.flsn");
        if (spec.scorer == ScorerKind::Fcn && net->contract() != OutputContract::ObjectnessMap)
            net.emplace(to_fcn(*net));
    }
    std::vector<std::vector<BoundingBox>> scored;
    for (const auto& f : test_frames)
        scored.push_back(score_frame(spec.scorer, net ? &*net : nullptr, &templates, f, spec.stride));

    write_sweep(dirs.curves / "threshold.csv", "to", sweep_threshold(scored, test_frames, spec.to_grid, spec.st, spec.ot));
    write_sweep(dirs.curves / "topk.csv", "k", sweep_top_k(scored, test_frames, spec.k_grid, spec.st, spec.ot));
    write_sweep(dirs.curves / "nms.csv", "st", sweep_nms(scored, test_frames, spec.st_grid, spec.to, spec.ot));
    write_sweep(dirs.curves / "overlap.csv", "ot", sweep_overlap(scored, test_frames, spec.ot_grid, spec.to, spec.st));

    std::vector<std::pair<std::string, std::vector<BoundingBox>>> props;
    for (std::size_t i = 0; i < test_frames.size(); ++i)
        props.emplace_back(test_frames[i].id, nms(select_by_threshold(scored[i], spec.to), spec.st));
    write_proposals_csv(dirs.root / "proposals.csv", props);

    const double to_point[] = {spec.to};
    const std::size_t k_point[] = {spec.k};
    const auto at = sweep_threshold(scored, test_frames, to_point, spec.st, spec.ot)[0];
    const auto at_k = sweep_top_k(scored, test_frames, k_point, spec.st, spec.ot)[0];
    EvalReport report{
        {"scorer", "to", "st", "ot", "frames", "proposals", "recall", "abo", "k", "recall_at_k", "abo_at_k"}, {}};
    report.add_row({to_string(spec.scorer), num(spec.to), num(spec.st), num(spec.ot), num(test_frames.size()),
                    num(at.proposals), num(at.recall), num(at.abo), num(spec.k), num(at_k.recall), num(at_k.abo)});
    report.write(dirs.root / "report.csv");
    return report;
}

// ---------------------------------------------------------------- detector

EvalReport run_detector(const ExperimentSpec& in) {
    const ExperimentSpec spec = finalized(in);
    const auto dirs = prepare(spec);
    auto [train_frames, test_frames] = proposal_frames(spec);
    const std::size_t classes = spec.scene.classes + 1;  // background last

    const auto samples = make_objectness_set(train_frames, spec.eps, spec.stride, spec.positives_per_frame,
                                             spec.zero_ratio, spec.seed);
    Dataset<float> ds = objectness_to_dataset(samples);
    std::vector<std::size_t> cls;
    for (const auto& s : samples) cls.push_back(s.label < 0 ? classes - 1 : static_cast<std::size_t>(s.label));
    ds.class_targets = one_hot<float>(cls, classes);

    // Window crops of the test frames, computed once.
    std::vector<std::vector<BoundingBox>> windows;
    std::vector<Tensor<float>> crops;
    for (const auto& f : test_frames) {
        windows.push_back(sliding_windows(f.image.dim(1), f.image.dim(2), f.fov, 96, spec.stride));
        std::vector<Tensor<float>> c;
        for (const auto& w : windows.back()) c.push_back(crop(f.image, w));
        crops.push_back(stack(std::span<const Tensor<float>>(c)));
    }

    EvalReport report{{"gamma", "to", "recall", "accuracy_fc", "accuracy_svm", "svm_minus_fc"}, {}};
    for (double gamma : spec.gamma_grid) {
        TrainConfig cfg = spec.train;
        cfg.gamma = gamma;
        Rng rng(derive_seed(spec.seed, 0xDE));
        Network<float> net = build_detector(classes);
        initialize(net, InitSpec{}, rng);
        train<float>(net, ds, nullptr, cfg, rng);
        save_model(net, dirs.models / ("detector_gamma" + tag(gamma) + ".flsn"));

        std::optional<LinearSvm> svm;
        if (spec.svm_head) {
            // Trunk features of clearly positive windows and pure background.
            std::vector<std::size_t> rows, labels;
            for (std::size_t i = 0; i < samples.size(); ++i) {
                if (samples[i].objectness >= 0.5 && samples[i].label >= 0) {
                    rows.push_back(i);
                    labels.push_back(static_cast<std::size_t>(samples[i].label));
                } else if (samples[i].objectness == 0) {
                    rows.push_back(i);
                    labels.push_back(classes - 1);
                }
            }
            const Tensor<float> x = gather_rows(ds.inputs[0], rows);
            Tensor<float> f = forward_chunks(net, std::span(&x, 1), "fc1_bn").features;
            l2_normalize_rows(f);
            svm.emplace(SvmConfig{1.0, 40, spec.seed});
            svm->fit(f, labels, classes);
        }

        std::vector<std::vector<BoundingBox>> fc_boxes, svm_boxes;
        for (std::size_t i = 0; i < test_frames.size(); ++i) {
            const auto res = forward_chunks(net, std::span(&crops[i], 1), svm ? "fc1_bn" : "");
            const auto pred = predicted_classes(res.outputs[1]);
            std::vector<std::size_t> svm_pred;
            if (svm) {
                Tensor<float> f = res.features;
                l2_normalize_rows(f);
                svm_pred = svm->predict(f);
            }
            fc_boxes.emplace_back();
            svm_boxes.emplace_back();
            for (std::size_t j = 0; j < windows[i].size(); ++j) {
                BoundingBox b = windows[i][j];
                b.score = std::clamp<double>(res.outputs[0][j], 0.0, 1.0);
                b.label = static_cast<int>(pred[j]);
                fc_boxes.back().push_back(b);
                if (svm) b.label = static_cast<int>(svm_pred[j]);
                svm_boxes.back().push_back(b);
            }
        }

        auto accuracy_at = [&](const std::vector<std::vector<BoundingBox>>& boxes, double to) {
            std::size_t correct = 0, detected = 0, total = 0;
            for (std::size_t i = 0; i < test_frames.size(); ++i) {
                const auto props = nms(select_by_threshold(boxes[i], to), spec.st);
                const auto r = detection_recall(props, test_frames[i].boxes, spec.ot);
                detected += r.detected;
                total += r.total;
                for (std::size_t g = 0; g < r.match.size(); ++g)
                    if (r.match[g] >= 0 && props[r.match[g]].label == test_frames[i].boxes[g].label) ++correct;
            }
            return std::pair{total ? double(detected) / total : 1.0, total ? double(correct) / total : 1.0};
        };
        CsvWriter curve(dirs.curves / ("detector_gamma" + tag(gamma) + ".csv"),
                        {"to", "recall", "accuracy_fc", "accuracy_svm"});
        for (double to : spec.to_grid) {
            const auto [rec, acc_fc] = accuracy_at(fc_boxes, to);
            const double acc_svm = svm ? accuracy_at(svm_boxes, to).second : std::nan("");
            curve.row(std::vector<double>{to, rec, acc_fc, acc_svm});
        }
        const auto [rec, acc_fc] = accuracy_at(fc_boxes, spec.to);
        const double acc_svm = svm ? accuracy_at(svm_boxes, spec.to).second : std::nan("");
        report.add_row({num(gamma), num(spec.to), num(rec), num(acc_fc), num(acc_svm), num(acc_svm - acc_fc)});
    }
    report.write(dirs.root / "report.csv");
    return report;
}

// ---------------------------------------------------------------- tracker

EvalReport run_tracker(const ExperimentSpec& in) {
    const ExperimentSpec spec = finalized(in);
    const auto dirs = prepare(spec);
    const auto sequence =
        generate_sequence(spec.scene, spec.sequence_frames, spec.distractors, spec.speed, derive_seed(spec.seed, 0x7A));
    if (sequence.empty()) throw ConfigError("tracking needs at least one frame");

    std::optional<Network<float>> obj;
    TemplateSet templates;
    if (spec.scorer == ScorerKind::Tm) {
        const auto frames = generate_frames(spec.scene, spec.train_frames, 0);
        templates = sample_templates(frames, spec.templates_per_class, spec.scene.classes, spec.scene.window);
    } else {
        if (spec.objectness_model) {
            obj.emplace(load_model(*spec.objectness_model));
        } else {
            const auto frames = generate_frames(spec.scene, spec.train_frames, 0);
            obj.emplace(train_objectness(spec, frames));
        }
        save_model(*obj, dirs.models / "objectness.flsn");
        if (spec.scorer == ScorerKind::Fcn && obj->contract() != OutputContract::ObjectnessMap)
            obj.emplace(to_fcn(*obj));
    }
    const WindowScorer scorer = [&](const SonarFrame& f) {
        return score_frame(spec.scorer, obj ? &*obj : nullptr, &templates, f, spec.stride);
    };

    // Target: the first-frame proposal that best covers the tracked object.
    TrackerConfig base;
    base.st = spec.st;
    {
        const auto first = nms(scorer(sequence[0]), spec.st);
        if (first.empty()) throw DataError("no proposals in the first frame");
        std::size_t best = 0;
        for (std::size_t i = 1; i < first.size(); ++i)
            if (iou(first[i], sequence[0].boxes[0]) > iou(first[best], sequence[0].boxes[0])) best = i;
        base.initial = first[best];
    }
    std::vector<BoundingBox> truth;
    for (const auto& f : sequence) truth.push_back(f.boxes[0]);

    std::vector<std::pair<std::string, TrackResult>> results;
    TrackerConfig cc_cfg = base;
    cc_cfg.min_score = 0.01;
    results.emplace_back("cc", track(sequence, scorer, cc_pair_scorer(), cc_cfg));

    std::optional<Network<float>> matcher;
    if (spec.matcher_model) {
        matcher.emplace(load_model(*spec.matcher_model));
    } else if (spec.instances_per_class > 0) {
        matcher.emplace(train_matcher(spec, make_matching_set(spec.scene, spec.instances_per_class,
                                                              spec.matching_split, spec.seed)));
    }
    if (matcher) {
        save_model(*matcher, dirs.models / "matcher.flsn");
        const PairScorer ps = [&](const Tensor<float>& t, std::span<const Tensor<float>> c) {
            return matcher_scores(*matcher, t, c);
        };
        results.emplace_back("matcher", track(sequence, scorer, ps, base));
    }

    EvalReport report{{"method", "ot", "frames", "ctf"}, {}};
    std::vector<std::string> ctf_header{"ot"};
    for (const auto& [name, res] : results) {
        ctf_header.push_back("ctf_" + name);
        CsvWriter w(dirs.curves / ("track_" + name + ".csv"), {"frame", "found", "x", "y", "w", "h", "iou"});
        for (std::size_t t = 0; t < res.boxes.size(); ++t) {
            if (res.boxes[t]) {
                const auto& b = *res.boxes[t];
                w.row(std::vector<double>{double(t), 1, double(b.x), double(b.y), double(b.w), double(b.h),
                                          iou(b, truth[t])});
            } else {
                w.row(std::vector<double>{double(t), 0, 0, 0, 0, 0, 0});
            }
        }
        report.add_row({name, num(spec.ot), num(res.boxes.size()), num(ctf(res.boxes, truth, spec.ot))});
    }
    CsvWriter curve(dirs.curves / "ctf.csv", ctf_header);
    for (double ot : spec.ot_grid) {
        std::vector<double> row{ot};
        for (const auto& r : results) row.push_back(ctf(r.second.boxes, truth, ot));
        curve.row(row);
    }
    report.write(dirs.root / "report.csv");
    return report;
}

EvalReport run_pipeline(const ExperimentSpec& spec) {
    switch (spec.kind) {
        case PipelineKind::Classification: return run_classification(spec);
        case PipelineKind::Transfer: return run_transfer(spec);
        case PipelineKind::Matching: return run_matching(spec);
        case PipelineKind::Proposals: return run_proposals(spec);
        case PipelineKind::Detector: return run_detector(spec);
        case PipelineKind::Tracker: return run_tracker(spec);
    }
    throw ConfigError("unknown pipeline");
}

}  // namespace sonarp
