#include "sonarp/experiment.hpp"

#include <fstream>
#include <json.hpp>

namespace sonarp {

using nlohmann::json;

std::string to_string(PipelineKind k) {
    switch (k) {
        case PipelineKind::Classification: return "classification";
        case PipelineKind::Transfer: return "transfer";
        case PipelineKind::Matching: return "matching";
        case PipelineKind::Proposals: return "proposals";
        case PipelineKind::Detector: return "detector";
        case PipelineKind::Tracker: return "tracker";
    }
    return "?";
}

PipelineKind pipeline_kind_from_string(const std::string& name) {
    for (auto k : {PipelineKind::Classification, PipelineKind::Transfer, PipelineKind::Matching,
                   PipelineKind::Proposals, PipelineKind::Detector, PipelineKind::Tracker})
        if (to_string(k) == name) return k;
    throw ConfigError("unknown pipeline kind '" + name + "'");
}

std::string to_string(ScorerKind k) {
    switch (k) {
        case ScorerKind::Cnn: return "cnn";
        case ScorerKind::Fcn: return "fcn";
        case ScorerKind::Tm: return "tm";
    }
    return "?";
}

ScorerKind scorer_kind_from_string(const std::string& name) {
    for (auto k : {ScorerKind::Cnn, ScorerKind::Fcn, ScorerKind::Tm})
        if (to_string(k) == name) return k;
    throw ConfigError("unknown scorer '" + name + "'");
}

namespace {

std::string split_name(MatchingSplit s) { return s == MatchingSplit::Shared ? "shared" : "disjoint"; }

template <typename V>
void require_range(const std::vector<V>& grid, double lo, double hi, const char* name) {
    for (V v : grid)
        if (!(static_cast<double>(v) >= lo && static_cast<double>(v) <= hi))
            throw ConfigError(std::string(name) + " value out of range");
}

}  // namespace

void ExperimentSpec::finalize() {
    scene.validate();
    if (spc_grid.empty()) spc_grid = {spc};
    if (size_grid.empty()) size_grid = {96};
    if (to_grid.empty())
        for (int i = 1; i <= 20; ++i) to_grid.push_back(i / 20.0);
    if (st_grid.empty()) st_grid = {0.5, 0.6, 0.7, 0.8, 0.9};
    if (k_grid.empty()) {
        for (std::size_t i = 1; i <= 10; ++i) k_grid.push_back(i);
        for (std::size_t i = 20; i <= 100; i += 10) k_grid.push_back(i);
    }
    if (ot_grid.empty())
        for (int i = 1; i <= 9; ++i) ot_grid.push_back(i / 10.0);
    if (gamma_grid.empty()) gamma_grid = {train.gamma};

    if (repeats < 1) throw ConfigError("repeats must be >= 1");
    if (train.batch_size < 2) throw ConfigError("batch size must be >= 2");
    if (network != "classic" && network != "tiny" && network != "fire") throw ConfigError("unknown network " + network);
    require_range(spc_grid, 1, 1e9, "spc_grid");
    require_range(size_grid, 8, 96, "size_grid");
    require_range(to_grid, 0, 1, "to_grid");
    require_range(st_grid, 1e-9, 1, "st_grid");
    require_range(k_grid, 1, 1e9, "k_grid");
    require_range(ot_grid, 1e-9, 1, "ot_grid");
    require_range(gamma_grid, 0, 1e9, "gamma_grid");
    if (!(eps > 0 && eps < 0.5)) throw ConfigError("eps must lie in (0, 0.5)");
    if (!(objectness_lr > 0)) throw ConfigError("objectness_lr must be positive");
    if (stride < 1) throw ConfigError("stride must be >= 1");
    if (!(st > 0 && st <= 1) || !(to >= 0 && to <= 1) || !(ot > 0 && ot <= 1)) throw ConfigError("threshold outside (0, 1]");
    if (k < 1) throw ConfigError("k must be >= 1");
    if (kind == PipelineKind::Transfer && layers.empty()) throw ConfigError("transfer needs at least one layer");
    if ((kind == PipelineKind::Proposals || kind == PipelineKind::Detector) && test_frames < 1)
        throw ConfigError("proposal pipelines need test frames");
    const bool trains_scorer = kind == PipelineKind::Detector || scorer == ScorerKind::Tm || !objectness_model;
    if ((kind == PipelineKind::Proposals || kind == PipelineKind::Detector) && trains_scorer && train_frames < 1)
        throw ConfigError("training the scorer needs train frames");
}

std::string ExperimentSpec::to_json() const {
    json j;
    j["kind"] = to_string(kind);
    j["scene"] = json::parse(scene.to_json());
    if (dataset) j["dataset"] = dataset->string();
    j["output_dir"] = output_dir.string();
    j["seed"] = seed;
    j["repeats"] = repeats;
    j["network"] = network;
    j["modules"] = modules;
    j["filters"] = filters;
    j["regularization"] = to_string(regularization);
    j["train"] = {{"batch_size", train.batch_size},
                  {"epochs", train.epochs},
                  {"loss", to_string(train.loss)},
                  {"gamma", train.gamma},
                  {"optimizer",
                   {{"kind", to_string(train.optimizer.kind)},
                    {"learning_rate", train.optimizer.learning_rate},
                    {"rho", train.optimizer.rho},
                    {"rho1", train.optimizer.rho1},
                    {"rho2", train.optimizer.rho2},
                    {"epsilon", train.optimizer.epsilon}}}};
    j["spc"] = spc;
    j["val_per_class"] = val_per_class;
    j["test_per_class"] = test_per_class;
    j["spc_grid"] = spc_grid;
    j["size_grid"] = size_grid;
    j["layers"] = layers;
    j["shared_classes"] = shared_classes;
    j["matcher"] = to_string(matcher);
    j["matcher_head"] = to_string(matcher_head);
    j["matching_split"] = split_name(matching_split);
    j["instances_per_class"] = instances_per_class;
    j["scorer"] = to_string(scorer);
    j["objectness"] = to_string(objectness);
    j["objectness_lr"] = objectness_lr;
    j["eps"] = eps;
    j["stride"] = stride;
    j["train_frames"] = train_frames;
    j["test_frames"] = test_frames;
    j["positives_per_frame"] = positives_per_frame;
    j["zero_ratio"] = zero_ratio;
    j["templates_per_class"] = templates_per_class;
    j["to"] = to;
    j["st"] = st;
    j["ot"] = ot;
    j["k"] = k;
    j["to_grid"] = to_grid;
    j["st_grid"] = st_grid;
    j["k_grid"] = k_grid;
    j["ot_grid"] = ot_grid;
    j["gamma_grid"] = gamma_grid;
    j["svm_head"] = svm_head;
    j["sequence_frames"] = sequence_frames;
    j["distractors"] = distractors;
    j["speed"] = speed;
    if (objectness_model) j["objectness_model"] = objectness_model->string();
    if (matcher_model) j["matcher_model"] = matcher_model->string();
    return j.dump(2);
}

ExperimentSpec ExperimentSpec::from_json(const std::string& text) {
    ExperimentSpec s;
    try {
        const json j = json::parse(text);
        if (!j.is_object()) throw ConfigError("experiment spec must be a JSON object");
        auto get = [&](const json& obj, const char* key, auto& field) {
            if (obj.contains(key)) obj.at(key).get_to(field);
        };
        auto get_str = [&](const json& obj, const char* key, auto parse, auto& field) {
            if (obj.contains(key)) field = parse(obj.at(key).get<std::string>());
        };
        get_str(j, "kind", pipeline_kind_from_string, s.kind);
        if (j.contains("scene")) s.scene = SceneConfig::from_json(j.at("scene").dump());
        if (j.contains("dataset")) s.dataset = j.at("dataset").get<std::string>();
        if (j.contains("output_dir")) s.output_dir = j.at("output_dir").get<std::string>();
        get(j, "seed", s.seed);
        get(j, "repeats", s.repeats);
        get(j, "network", s.network);
        get(j, "modules", s.modules);
        get(j, "filters", s.filters);
        get_str(j, "regularization", regularization_from_string, s.regularization);
        if (j.contains("train")) {
            const json& t = j.at("train");
            get(t, "batch_size", s.train.batch_size);
            get(t, "epochs", s.train.epochs);
            get_str(t, "loss", loss_from_string, s.train.loss);
            get(t, "gamma", s.train.gamma);
            if (t.contains("optimizer")) {
                const json& o = t.at("optimizer");
                get_str(o, "kind", optimizer_from_string, s.train.optimizer.kind);
                get(o, "learning_rate", s.train.optimizer.learning_rate);
                get(o, "rho", s.train.optimizer.rho);
                get(o, "rho1", s.train.optimizer.rho1);
                get(o, "rho2", s.train.optimizer.rho2);
                get(o, "epsilon", s.train.optimizer.epsilon);
            }
        }
        get(j, "spc", s.spc);
        get(j, "val_per_class", s.val_per_class);
        get(j, "test_per_class", s.test_per_class);
        get(j, "spc_grid", s.spc_grid);
        get(j, "size_grid", s.size_grid);
        get(j, "layers", s.layers);
        get(j, "shared_classes", s.shared_classes);
        get_str(j, "matcher", matcher_kind_from_string, s.matcher);
        get_str(j, "matcher_head", matcher_head_from_string, s.matcher_head);
        if (j.contains("matching_split")) {
            const auto v = j.at("matching_split").get<std::string>();
            if (v != "shared" && v != "disjoint") throw ConfigError("matching_split must be shared or disjoint");
            s.matching_split = v == "shared" ? MatchingSplit::Shared : MatchingSplit::Disjoint;
        }
        get(j, "instances_per_class", s.instances_per_class);
        get_str(j, "scorer", scorer_kind_from_string, s.scorer);
        get_str(j, "objectness", objectness_kind_from_string, s.objectness);
        get(j, "objectness_lr", s.objectness_lr);
        get(j, "eps", s.eps);
        get(j, "stride", s.stride);
        get(j, "train_frames", s.train_frames);
        get(j, "test_frames", s.test_frames);
        get(j, "positives_per_frame", s.positives_per_frame);
        get(j, "zero_ratio", s.zero_ratio);
        get(j, "templates_per_class", s.templates_per_class);
        get(j, "to", s.to);
        get(j, "st", s.st);
        get(j, "ot", s.ot);
        get(j, "k", s.k);
        get(j, "to_grid", s.to_grid);
        get(j, "st_grid", s.st_grid);
        get(j, "k_grid", s.k_grid);
        get(j, "ot_grid", s.ot_grid);
        get(j, "gamma_grid", s.gamma_grid);
        get(j, "svm_head", s.svm_head);
        get(j, "sequence_frames", s.sequence_frames);
        get(j, "distractors", s.distractors);
        get(j, "speed", s.speed);
        if (j.contains("objectness_model")) s.objectness_model = j.at("objectness_model").get<std::string>();
        if (j.contains("matcher_model")) s.matcher_model = j.at("matcher_model").get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("experiment spec: ") + e.what());
    }
    return s;
}

ExperimentSpec ExperimentSpec::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read spec " + path.string());
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

}  // namespace sonarp
