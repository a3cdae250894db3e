// sonarp: command line front end for generation, training and evaluation.
#include <CLI11.hpp>
#include <deque>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <random>

#include "sonarp/dataset_io.hpp"
#include "sonarp/parallel.hpp"
#include "sonarp/pipelines.hpp"
#include "sonarp/serialize.hpp"

namespace fs = std::filesystem;
using namespace sonarp;

namespace {

constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kDivergence = 3;

// Flags of one subcommand. Options write into `flags`; after parsing, the
// ones given explicitly are copied over the --spec file (or the defaults).
struct Command {
    CLI::App* app = nullptr;
    ExperimentSpec flags;
    std::string spec_path;
    std::size_t threads = 0;
    std::vector<std::pair<CLI::Option*, std::function<void(ExperimentSpec&)>>> setters;

    template <typename Get>
    CLI::Option* bind(const std::string& name, Get get, const std::string& desc) {
        auto* o = app->add_option(name, get(flags), desc)->capture_default_str();
        setters.emplace_back(o, [this, get](ExperimentSpec& s) { get(s) = get(flags); });
        return o;
    }

    // String-valued flag converted into the spec by `apply`.
    CLI::Option* bind_str(const std::string& name, std::string def, const std::string& desc,
                          std::function<void(ExperimentSpec&, const std::string&)> apply) {
        auto value = std::make_shared<std::string>(std::move(def));
        auto* o = app->add_option(name, *value, desc)->capture_default_str();
        setters.emplace_back(o, [value, apply](ExperimentSpec& s) { apply(s, *value); });
        return o;
    }

    ExperimentSpec resolve(PipelineKind kind) const {
        ExperimentSpec s;
        if (!spec_path.empty()) s = ExperimentSpec::load(spec_path);
        s.kind = kind;
        for (const auto& [opt, set] : setters)
            if (opt->count() > 0) set(s);
        return s;
    }
};

void add_common(Command& c, const std::string& default_out = "runs") {
    c.flags.output_dir = default_out;
    c.bind("--seed", [](ExperimentSpec& s) -> auto& { return s.seed; }, "Random seed");
    c.app->add_option("--out", c.flags.output_dir, "Output directory")->capture_default_str();
    c.setters.emplace_back(c.app->get_option("--out"), [&c](ExperimentSpec& s) { s.output_dir = c.flags.output_dir; });
    c.app->add_option("--spec", c.spec_path, "Experiment spec JSON (flags override its fields)");
    c.app->add_option("--threads", c.threads, "Worker threads (0 = SONARP_THREADS or all cores)")
        ->capture_default_str();
}

void add_training(Command& c) {
    c.bind("--epochs", [](ExperimentSpec& s) -> auto& { return s.train.epochs; }, "Training epochs");
    c.bind("--batch", [](ExperimentSpec& s) -> auto& { return s.train.batch_size; }, "Mini-batch size");
    c.bind("--lr", [](ExperimentSpec& s) -> auto& { return s.train.optimizer.learning_rate; }, "Learning rate");
    c.bind_str("--optimizer", "adam", "sgd | adagrad | rmsprop | adam",
               [](ExperimentSpec& s, const std::string& v) { s.train.optimizer.kind = optimizer_from_string(v); });
}

void add_scene(Command& c) {
    c.bind("--classes", [](ExperimentSpec& s) -> auto& { return s.scene.classes; }, "Object classes in the scenes");
}

void add_proposal_flags(Command& c) {
    c.bind("--to", [](ExperimentSpec& s) -> auto& { return s.to; }, "Objectness threshold T_o");
    c.bind("--st", [](ExperimentSpec& s) -> auto& { return s.st; }, "NMS overlap threshold S_t");
    c.bind("--ot", [](ExperimentSpec& s) -> auto& { return s.ot; }, "Detection overlap threshold O_t");
    c.bind("--k", [](ExperimentSpec& s) -> auto& { return s.k; }, "Top-k proposals");
    c.bind("--obj-lr", [](ExperimentSpec& s) -> auto& { return s.objectness_lr; },
           "Learning rate of the objectness network");
    c.bind("--eps", [](ExperimentSpec& s) -> auto& { return s.eps; }, "Objectness label margin");
    c.bind("--stride", [](ExperimentSpec& s) -> auto& { return s.stride; }, "Sliding window stride");
    c.bind("--train-frames", [](ExperimentSpec& s) -> auto& { return s.train_frames; }, "Frames used for training");
    c.bind("--test-frames", [](ExperimentSpec& s) -> auto& { return s.test_frames; }, "Frames used for evaluation");
    c.bind_str("--scorer", "fcn", "cnn | fcn | tm",
               [](ExperimentSpec& s, const std::string& v) { s.scorer = scorer_kind_from_string(v); });
    c.bind_str("--objectness", "tiny", "Objectness network: tiny | classic",
               [](ExperimentSpec& s, const std::string& v) { s.objectness = objectness_kind_from_string(v); });
}

void add_matcher_flags(Command& c) {
    c.bind_str("--matcher", "two-channel", "two-channel | siamese",
               [](ExperimentSpec& s, const std::string& v) { s.matcher = matcher_kind_from_string(v); });
    c.bind_str("--head", "softmax2", "softmax2 | sigmoid",
               [](ExperimentSpec& s, const std::string& v) { s.matcher_head = matcher_head_from_string(v); });
    c.bind_str("--split", "shared", "shared | disjoint", [](ExperimentSpec& s, const std::string& v) {
        if (v != "shared" && v != "disjoint") throw ConfigError("--split must be shared or disjoint");
        s.matching_split = v == "shared" ? MatchingSplit::Shared : MatchingSplit::Disjoint;
    });
    c.bind("--instances", [](ExperimentSpec& s) -> auto& { return s.instances_per_class; },
           "Object instances per class for pair synthesis");
}

void print_report(const EvalReport& r, std::size_t row, const std::vector<std::string>& columns) {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        const auto it = std::find(r.header.begin(), r.header.end(), columns[i]);
        std::cout << (i ? " " : "") << columns[i] << "=" << r.rows.at(row).at(it - r.header.begin());
    }
    std::cout << "\n";
}

void apply_threads(const Command& c) {
    if (c.threads > 0) set_num_threads(c.threads);
}

SceneConfig load_scene(const std::string& path) {
    if (path.empty()) return SceneConfig{};
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path);
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ConfigError("invalid JSON in " + path);
    return SceneConfig::from_json(j.contains("scene") ? j.at("scene").dump() : text);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sonar patch classification, matching and detection proposals"};
    app.require_subcommand(1);
    std::deque<Command> cmds;
    auto make = [&](const std::string& name, const std::string& desc) -> Command& {
        Command& c = cmds.emplace_back();
        c.app = app.add_subcommand(name, desc);
        return c;
    };

    // gen
    Command& gen = make("gen", "Generate a synthetic sonar dataset directory");
    add_common(gen, "data");
    std::size_t gen_frames = 100;
    gen.app->add_option("--frames", gen_frames, "Number of frames")->capture_default_str();
    gen.app->get_option("--spec")->description("Scene config JSON (or an experiment spec with a scene)");
    gen.app->callback([&] {
        apply_threads(gen);
        SceneConfig scene = load_scene(gen.spec_path);
        if (gen.app->get_option("--seed")->count() > 0) scene.seed = gen.flags.seed;
        SonarDataset d{scene, generate_frames(scene, gen_frames)};
        save_dataset(gen.flags.output_dir, d);
        std::size_t boxes = 0;
        for (const auto& f : d.frames) boxes += f.boxes.size();
        std::cout << "frames=" << d.frames.size() << " objects=" << boxes << " out=" << gen.flags.output_dir.string()
                  << "\n";
    });

    // train-cls
    Command& cls = make("train-cls", "Train and evaluate a patch classifier");
    add_common(cls);
    add_training(cls);
    add_scene(cls);
    cls.bind("--network", [](ExperimentSpec& s) -> auto& { return s.network; }, "classic | tiny | fire");
    cls.bind("--modules", [](ExperimentSpec& s) -> auto& { return s.modules; }, "Number of modules n");
    cls.bind("--filters", [](ExperimentSpec& s) -> auto& { return s.filters; }, "Filters per module f");
    cls.bind("--spc", [](ExperimentSpec& s) -> auto& { return s.spc; }, "Training samples per class");
    cls.bind("--repeats", [](ExperimentSpec& s) -> auto& { return s.repeats; }, "Independently seeded runs");
    cls.bind_str("--reg", "bn", "none | bn | dropout",
                 [](ExperimentSpec& s, const std::string& v) { s.regularization = regularization_from_string(v); });
    cls.app->callback([&] {
        apply_threads(cls);
        auto spec = cls.resolve(PipelineKind::Classification);
        if (cls.app->get_option("--spc")->count() > 0) spec.spc_grid = {spec.spc};
        const auto r = run_classification(spec);
        print_report(r, r.rows.size() - 1, {"network", "spc", "accuracy_mean", "accuracy_std"});
    });

    // train-match
    Command& match = make("train-match", "Train a patch matcher and report AUC");
    add_common(match);
    add_training(match);
    add_scene(match);
    add_matcher_flags(match);
    match.app->callback([&] {
        apply_threads(match);
        const auto r = run_matching(match.resolve(PipelineKind::Matching));
        print_report(r, 0, {"matcher", "auc", "accuracy"});
    });

    // train-obj
    Command& obj = make("train-obj", "Train a patch objectness network");
    add_common(obj);
    add_training(obj);
    add_scene(obj);
    add_proposal_flags(obj);
    std::string obj_data;
    obj.app->add_option("--data", obj_data, "Dataset directory (default: generated scenes)");
    obj.bind("--positives", [](ExperimentSpec& s) -> auto& { return s.positives_per_frame; },
             "Non-zero windows kept per frame");
    obj.app->callback([&] {
        apply_threads(obj);
        auto spec = obj.resolve(PipelineKind::Proposals);
        if (!obj_data.empty()) spec.dataset = obj_data;
        spec.finalize();
        auto frames = proposal_frames(spec).first;
        Network<float> net = train_objectness(spec, frames);
        fs::create_directories(spec.output_dir / "models");
        const fs::path path = spec.output_dir / "models" / "objectness.flsn";
        save_model(net, path);
        EvalReport r{{"objectness", "frames", "parameters", "model"}, {}};
        r.add_row({to_string(spec.objectness), std::to_string(frames.size()), std::to_string(net.num_parameters()),
                   path.string()});
        r.write(spec.output_dir / "report.csv");
        print_report(r, 0, {"objectness", "frames", "model"});
    });

    // transfer
    Command& tr = make("transfer", "Frozen features + linear SVM transfer evaluation");
    add_common(tr);
    add_training(tr);
    add_scene(tr);
    tr.bind("--spc", [](ExperimentSpec& s) -> auto& { return s.spc; }, "Samples per class");
    tr.bind("--layers", [](ExperimentSpec& s) -> auto& { return s.layers; }, "Feature layers");
    tr.bind("--shared", [](ExperimentSpec& s) -> auto& { return s.shared_classes; },
            "Feature and target classes overlap");
    tr.app->callback([&] {
        apply_threads(tr);
        const auto r = run_transfer(tr.resolve(PipelineKind::Transfer));
        for (std::size_t i = 0; i < r.rows.size(); ++i) print_report(r, i, {"layer", "accuracy"});
    });

    // propose
    Command& prop = make("propose", "Score windows, select proposals and sweep thresholds");
    add_common(prop);
    add_training(prop);
    add_scene(prop);
    add_proposal_flags(prop);
    std::string prop_model, prop_data;
    prop.app->add_option("--model", prop_model, "Objectness model (.flsn); trained when absent");
    prop.app->add_option("--data", prop_data, "Dataset directory (default: generated scenes)");
    prop.app->callback([&] {
        apply_threads(prop);
        auto spec = prop.resolve(PipelineKind::Proposals);
        if (!prop_model.empty()) {
            spec.objectness_model = prop_model;
            if (prop.app->get_option("--train-frames")->count() == 0 && spec.scorer != ScorerKind::Tm)
                spec.train_frames = 0;
        }
        if (!prop_data.empty()) spec.dataset = prop_data;
        const auto r = run_proposals(spec);
        print_report(r, 0, {"scorer", "proposals", "recall", "abo"});
    });

    // detect
    Command& det = make("detect", "Train the dual-head detector and report recall and accuracy");
    add_common(det);
    add_training(det);
    add_scene(det);
    add_proposal_flags(det);
    det.bind("--gamma", [](ExperimentSpec& s) -> auto& { return s.gamma_grid; }, "Multi-task weights");
    det.bind("--svm", [](ExperimentSpec& s) -> auto& { return s.svm_head; }, "Also evaluate the linear SVM head");
    det.app->callback([&] {
        apply_threads(det);
        const auto r = run_detector(det.resolve(PipelineKind::Detector));
        for (std::size_t i = 0; i < r.rows.size(); ++i)
            print_report(r, i, {"gamma", "recall", "accuracy_fc", "accuracy_svm"});
    });

    // track
    Command& trk = make("track", "Track an object through a generated sequence");
    add_common(trk);
    add_training(trk);
    add_scene(trk);
    add_proposal_flags(trk);
    add_matcher_flags(trk);
    std::string trk_obj, trk_match;
    trk.app->add_option("--model", trk_obj, "Objectness model (.flsn); trained when absent");
    trk.app->add_option("--matcher-model", trk_match, "Matcher model (.flsn); trained when absent");
    trk.bind("--frames", [](ExperimentSpec& s) -> auto& { return s.sequence_frames; }, "Sequence length");
    trk.bind("--distractors", [](ExperimentSpec& s) -> auto& { return s.distractors; }, "Static distractor objects");
    trk.bind("--speed", [](ExperimentSpec& s) -> auto& { return s.speed; }, "Target speed in pixels per frame");
    trk.app->callback([&] {
        apply_threads(trk);
        auto spec = trk.resolve(PipelineKind::Tracker);
        if (!trk_obj.empty()) spec.objectness_model = trk_obj;
        if (!trk_match.empty()) spec.matcher_model = trk_match;
        const auto r = run_tracker(spec);
        for (std::size_t i = 0; i < r.rows.size(); ++i) print_report(r, i, {"method", "ctf"});
    });

    // eval
    Command& ev = make("eval", "Recall and ABO of a proposals CSV against a dataset");
    add_common(ev);
    std::string ev_props, ev_data;
    ev.app->add_option("--proposals", ev_props, "Proposals CSV (image_id,x,y,w,h,score)")->required();
    ev.app->add_option("--data", ev_data, "Dataset directory")->required();
    ev.bind("--ot", [](ExperimentSpec& s) -> auto& { return s.ot; }, "Detection overlap threshold O_t");
    ev.app->callback([&] {
        apply_threads(ev);
        const auto spec = ev.resolve(PipelineKind::Proposals);
        const SonarDataset d = load_dataset(ev_data);
        const CsvTable t = read_csv(ev_props);
        const std::size_t cid = t.column("image_id"), cx = t.column("x"), cy = t.column("y"), cw = t.column("w"),
                          ch = t.column("h"), cs = t.column("score");
        std::map<std::string, std::vector<BoundingBox>> by_image;
        for (const auto& row : t.rows)
            by_image[row[cid]].push_back({std::stoi(row[cx]), std::stoi(row[cy]), std::stoi(row[cw]),
                                          std::stoi(row[ch]), std::nullopt, std::stod(row[cs])});
        std::size_t detected = 0, total = 0, props = 0;
        double overlap = 0;
        for (const auto& f : d.frames) {
            const auto& p = by_image[f.id];
            const auto r = detection_recall(p, f.boxes, spec.ot);
            detected += r.detected;
            total += r.total;
            props += p.size();
            if (!f.boxes.empty()) overlap += average_best_overlap(f.boxes, p) * f.boxes.size();
        }
        EvalReport r{{"frames", "ot", "proposals", "recall", "abo"}, {}};
        r.add_row({std::to_string(d.frames.size()), format_number(spec.ot),
                   format_number(d.frames.empty() ? 0.0 : double(props) / d.frames.size()),
                   format_number(total ? double(detected) / total : 1.0), format_number(total ? overlap / total : 0.0)});
        fs::create_directories(spec.output_dir);
        r.write(spec.output_dir / "report.csv");
        print_report(r, 0, {"recall", "abo", "proposals"});
    });

    // bench
    Command& bn = make("bench", "Time forward passes of the model zoo");
    add_common(bn);
    std::size_t reps = 100;
    bn.app->add_option("--reps", reps, "Timed repetitions per model")->capture_default_str();
    bn.app->callback([&] {
        apply_threads(bn);
        const auto spec = bn.resolve(PipelineKind::Classification);
        Rng rng(spec.seed);
        std::normal_distribution<float> noise(0.5f, 0.2f);
        auto random = [&](Shape s) {
            Tensor<float> t(std::move(s));
            for (auto& v : t.data()) v = noise(rng);
            return t;
        };
        std::vector<std::pair<std::string, Network<float>>> nets;
        nets.emplace_back("classic_2x16", build_classic_net(2, 16, Regularization::BatchNorm, 11));
        nets.emplace_back("tiny_2x16", build_tiny_net(2, 16, 11));
        nets.emplace_back("fire_2x16", build_fire_net(2, 16, 11));
        nets.emplace_back("objectness_tiny", build_objectness_net(ObjectnessKind::Tiny));
        nets.emplace_back("matcher_two_channel", build_matcher(MatcherKind::TwoChannel, MatcherHead::Softmax2));
        fs::create_directories(spec.output_dir);
        CsvWriter w(spec.output_dir / "bench.csv", {"model", "parameters", "mean_ms", "std_ms", "repetitions"});
        for (auto& [name, net] : nets) {
            initialize(net, InitSpec{}, rng);
            std::vector<Tensor<float>> xs;
            for (const auto& s : net.input_shapes()) {
                Shape b{1};
                b.insert(b.end(), s.begin(), s.end());
                xs.push_back(random(b));
            }
            Rng frng(0);
            const auto res = bench([&] { net.forward(xs, Mode::Infer, frng); }, reps);
            w.row({name, std::to_string(net.num_parameters()), format_number(res.mean_ms), format_number(res.std_ms),
                   std::to_string(res.repetitions)});
            std::cout << name << " mean_ms=" << format_number(res.mean_ms) << " std_ms=" << format_number(res.std_ms)
                      << "\n";
        }
        // Dense objectness over a full frame.
        Network<float> fcn = to_fcn(nets[3].second);
        const Tensor<float> frame = random({1, 320, 480});
        const auto res = bench([&] { fcn_objectness_map(fcn, frame); }, std::max<std::size_t>(2, reps / 10));
        w.row({std::string("objectness_fcn_frame"), std::to_string(fcn.num_parameters()), format_number(res.mean_ms),
               format_number(res.std_ms), std::to_string(res.repetitions)});
        std::cout << "objectness_fcn_frame mean_ms=" << format_number(res.mean_ms) << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return kUsage;
    } catch (const DivergenceError& e) {
        std::cerr << "error: training diverged at epoch " << e.epoch() << ": " << e.what() << "\n";
        return kDivergence;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kData;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kData;
    }
    return 0;
}
