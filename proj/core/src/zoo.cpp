#include "sonarp/zoo.hpp"

namespace sonarp {

namespace {

template <typename E>
E enum_from_string(const std::string& name, std::initializer_list<E> all, const char* what) {
    for (E e : all)
        if (to_string(e) == name) return e;
    throw ConfigError(std::string("unknown ") + what + " '" + name + "'");
}

using L = LayerSpec;
using A = ActivationKind;

void check_depth(std::size_t modules, std::size_t input_size) {
    if (modules == 0) throw ConfigError("at least one module is required");
    if (modules > max_modules(input_size)) {
        throw ConfigError(std::to_string(modules) + " modules too deep for input size " + std::to_string(input_size) +
                          " (max " + std::to_string(max_modules(input_size)) + ")");
    }
}

std::string idx(const std::string& base, std::size_t i) { return base + std::to_string(i); }

}  // namespace

std::string to_string(Regularization r) {
    switch (r) {
        case Regularization::None: return "none";
        case Regularization::BatchNorm: return "bn";
        case Regularization::Dropout: return "dropout";
    }
    return "?";
}
Regularization regularization_from_string(const std::string& n) {
    return enum_from_string(n, {Regularization::None, Regularization::BatchNorm, Regularization::Dropout},
                            "regularization");
}
std::string to_string(MatcherKind k) { return k == MatcherKind::TwoChannel ? "two_channel" : "siamese"; }
MatcherKind matcher_kind_from_string(const std::string& n) {
    return enum_from_string(n, {MatcherKind::TwoChannel, MatcherKind::Siamese}, "matcher");
}
std::string to_string(MatcherHead h) { return h == MatcherHead::Softmax2 ? "softmax2" : "sigmoid"; }
MatcherHead matcher_head_from_string(const std::string& n) {
    return enum_from_string(n, {MatcherHead::Softmax2, MatcherHead::Sigmoid}, "matcher head");
}
std::string to_string(ObjectnessKind k) { return k == ObjectnessKind::Classic ? "classic" : "tiny"; }
ObjectnessKind objectness_kind_from_string(const std::string& n) {
    return enum_from_string(n, {ObjectnessKind::Classic, ObjectnessKind::Tiny}, "objectness net");
}

std::size_t max_modules(std::size_t input_size) {
    std::size_t n = 0;
    while (input_size >= 2 && input_size % 2 == 0) {
        input_size /= 2;
        ++n;
    }
    return n;
}

Network<float> build_classic_net(std::size_t modules, std::size_t filters, Regularization reg, std::size_t classes,
                                 std::size_t input_size) {
    check_depth(modules, input_size);
    Network<float> net({{1, input_size, input_size}});
    for (std::size_t i = 1; i <= modules; ++i) {
        net.add(idx("conv", i), L::conv_same(filters, 5));
        net.add(idx("relu", i), L::act(A::Relu));
        net.add(idx("pool", i), L::max_pool());
        if (reg == Regularization::BatchNorm) net.add(idx("bn", i), L::batch_norm());
    }
    net.add("flatten", L::flatten());
    net.add("fc1", L::dense(64));
    net.add("fc1_relu", L::act(A::Relu));
    if (reg == Regularization::BatchNorm) net.add("fc1_bn", L::batch_norm());
    if (reg == Regularization::Dropout) net.add("fc1_dropout", L::dropout(0.5));
    net.add("fc2", L::dense(classes));
    const int out = net.add("probs", L::act(A::Softmax));
    net.set_outputs({out}, OutputContract::ClassProbs);
    return net;
}

Network<float> build_tiny_net(std::size_t modules, std::size_t filters, std::size_t classes, std::size_t input_size) {
    check_depth(modules, input_size);
    Network<float> net({{1, input_size, input_size}});
    for (std::size_t i = 1; i <= modules; ++i) {
        net.add(idx("conv", i) + "a", L::conv_same(filters, 3));
        net.add(idx("relu", i) + "a", L::act(A::Relu));
        net.add(idx("conv", i) + "b", L::conv(filters, 1, 0));
        net.add(idx("relu", i) + "b", L::act(A::Relu));
        net.add(idx("bn", i), L::batch_norm());
        net.add(idx("pool", i), L::max_pool());
    }
    net.add("conv_out", L::conv(classes, 1, 0));
    net.add("gap", L::global_avg_pool());
    const int out = net.add("probs", L::act(A::Softmax));
    net.set_outputs({out}, OutputContract::ClassProbs);
    return net;
}

namespace {

// Squeeze 1x1 then parallel expand 1x1 / 3x3, concatenated on channels.
int add_fire(Network<float>& net, const std::string& p, std::size_t s, std::size_t e11, std::size_t e33) {
    net.add(p + "_squeeze", L::conv(s, 1, 0));
    const int sq = net.add(p + "_squeeze_relu", L::act(A::Relu));
    net.add(p + "_e11", L::conv(e11, 1, 0), {sq});
    const int a = net.add(p + "_e11_relu", L::act(A::Relu));
    net.add(p + "_e33", L::conv_same(e33, 3), {sq});
    const int b = net.add(p + "_e33_relu", L::act(A::Relu));
    return net.add(p + "_concat", L::concat(), {a, b});
}

}  // namespace

Network<float> build_fire_net(std::size_t modules, std::size_t filters, std::size_t classes, std::size_t input_size) {
    check_depth(modules, input_size);
    Network<float> net({{1, input_size, input_size}});
    net.add("stem", L::conv_same(8, 5));
    net.add("stem_relu", L::act(A::Relu));
    for (std::size_t i = 1; i <= modules; ++i) {
        add_fire(net, idx("fire", i) + "a", filters, filters, filters);
        add_fire(net, idx("fire", i) + "b", filters, filters, filters);
        net.add(idx("bn", i), L::batch_norm());
        net.add(idx("pool", i), L::max_pool());
    }
    net.add("conv_out", L::conv(classes, 1, 0));
    net.add("gap", L::global_avg_pool());
    const int out = net.add("probs", L::act(A::Softmax));
    net.set_outputs({out}, OutputContract::ClassProbs);
    return net;
}

namespace {

// Conv16-MP-Conv32-MP-Conv32-MP-Conv16-MP (5x5, same, ReLU) then Flatten.
// When `source` is non-empty every trainable node shares its parameters with
// the equally named node of that branch.
int add_matcher_trunk(Network<float>& net, const std::string& p, int input, const std::string& source) {
    const std::size_t filters[] = {16, 32, 32, 16};
    int prev = input;
    for (std::size_t i = 0; i < 4; ++i) {
        const std::string conv = p + idx("conv", i + 1);
        prev = source.empty() ? net.add(conv, L::conv_same(filters[i], 5), {prev})
                              : net.add_shared(conv, source + idx("conv", i + 1), {prev});
        prev = net.add(p + idx("relu", i + 1), L::act(A::Relu), {prev});
        prev = net.add(p + idx("pool", i + 1), L::max_pool(), {prev});
    }
    return net.add(p + "flatten", L::flatten(), {prev});
}

int add_match_head(Network<float>& net, MatcherHead head) {
    if (head == MatcherHead::Softmax2) {
        net.add("fc_out", L::dense(2));
        return net.add("probs", L::act(A::Softmax));
    }
    net.add("fc_out", L::dense(1));
    return net.add("score", L::act(A::Sigmoid));
}

}  // namespace

Network<float> build_matcher(MatcherKind kind, MatcherHead head) {
    const OutputContract contract = head == MatcherHead::Softmax2 ? OutputContract::ClassProbs : OutputContract::Score;
    if (kind == MatcherKind::TwoChannel) {
        Network<float> net({{2, 96, 96}});
        add_matcher_trunk(net, "", Network<float>::input(0), "");
        net.add("fc1", L::dense(64));
        net.add("fc1_relu", L::act(A::Relu));
        net.add("fc1_dropout", L::dropout(0.5));
        net.add("fc2", L::dense(32));
        net.add("fc2_relu", L::act(A::Relu));
        net.add("fc2_dropout", L::dropout(0.5));
        net.set_outputs({add_match_head(net, head)}, contract);
        return net;
    }
    Network<float> net({{1, 96, 96}, {1, 96, 96}});
    int branch[2];
    for (int b = 0; b < 2; ++b) {
        const std::string p = b == 0 ? "a_" : "b_";
        const std::string src = b == 0 ? "" : "a_";
        int prev = add_matcher_trunk(net, p, Network<float>::input(b), src);
        for (int f = 1; f <= 2; ++f) {
            const std::string fc = p + idx("fc", f);
            prev = src.empty() ? net.add(fc, L::dense(96), {prev}) : net.add_shared(fc, src + idx("fc", f), {prev});
            prev = net.add(fc + "_relu", L::act(A::Relu), {prev});
        }
        branch[b] = prev;
    }
    net.add("merge", L::concat(), {branch[0], branch[1]});
    net.add("fc3", L::dense(64));
    net.add("fc3_relu", L::act(A::Relu));
    net.set_outputs({add_match_head(net, head)}, contract);
    return net;
}

Network<float> build_objectness_net(ObjectnessKind kind) {
    Network<float> net({{1, 96, 96}});
    if (kind == ObjectnessKind::Classic) {
        for (std::size_t i = 1; i <= 2; ++i) {
            net.add(idx("conv", i), L::conv_same(32, 5));
            net.add(idx("relu", i), L::act(A::Relu));
            net.add(idx("pool", i), L::max_pool());
            net.add(idx("bn", i), L::batch_norm());
        }
        net.add("flatten", L::flatten());
        net.add("fc1", L::dense(96));
        net.add("fc1_relu", L::act(A::Relu));
        net.add("fc1_bn", L::batch_norm());
    } else {
        for (std::size_t i = 1; i <= 2; ++i) {
            net.add(idx("conv", i) + "a", L::conv_same(24, 3));
            net.add(idx("relu", i) + "a", L::act(A::Relu));
            net.add(idx("conv", i) + "b", L::conv(24, 1, 0));
            net.add(idx("relu", i) + "b", L::act(A::Relu));
            net.add(idx("pool", i), L::max_pool());
        }
        net.add("flatten", L::flatten());
    }
    net.add("fc_out", L::dense(1));
    const int out = net.add("objectness", L::act(A::Sigmoid));
    net.set_outputs({out}, OutputContract::Score);
    return net;
}

Network<float> build_detector(std::size_t classes) {
    if (classes < 2) throw ConfigError("detector needs at least two classes");
    Network<float> net({{1, 96, 96}});
    for (std::size_t i = 1; i <= 2; ++i) {
        net.add(idx("conv", i), L::conv_valid(32, 5, 5));
        net.add(idx("relu", i), L::act(A::Relu));
        net.add(idx("pool", i), L::max_pool());
        net.add(idx("bn", i), L::batch_norm());
    }
    net.add("flatten", L::flatten());
    net.add("fc1", L::dense(128));
    net.add("fc1_relu", L::act(A::Relu));
    const int trunk = net.add("fc1_bn", L::batch_norm());

    net.add("obj_fc", L::dense(96), {trunk});
    net.add("obj_relu", L::act(A::Relu));
    net.add("obj_bn", L::batch_norm());
    net.add("obj_out", L::dense(1));
    const int obj = net.add("objectness", L::act(A::Sigmoid));

    net.add("cls_fc", L::dense(96), {trunk});
    net.add("cls_relu", L::act(A::Relu));
    net.add("cls_bn", L::batch_norm());
    net.add("cls_out", L::dense(classes));
    const int cls = net.add("probs", L::act(A::Softmax));

    net.set_outputs({obj, cls}, OutputContract::Dual);
    return net;
}

template <typename T>
Network<T> to_fcn(const Network<T>& net) {
    if (net.input_shapes().size() != 1 || net.outputs().size() != 1) {
        throw ConfigError("FCN conversion needs a single-input single-output network");
    }
    int flatten = -1;
    for (std::size_t i = 0; i < net.size(); ++i) {
        const auto& n = net.node(i);
        if (n.inputs.size() != 1 || n.inputs[0] != static_cast<int>(i) - 1) {
            throw ConfigError("FCN conversion needs a linear chain of layers");
        }
        if (n.spec.kind == LayerKind::BatchNorm) throw ConfigError("FCN conversion: network contains batch_norm");
        if (n.spec.kind == LayerKind::Flatten) {
            if (flatten >= 0) throw ConfigError("FCN conversion: more than one flatten");
            flatten = static_cast<int>(i);
        }
    }
    if (flatten < 0 || static_cast<std::size_t>(flatten) + 1 >= net.size() ||
        net.node(flatten + 1).spec.kind != LayerKind::FullyConnected) {
        throw ConfigError("FCN conversion: network must end in Flatten -> FullyConnected");
    }
    for (std::size_t i = flatten + 2; i < net.size(); ++i) {
        const auto& s = net.node(i).spec;
        if (s.kind != LayerKind::Activation || s.activation == ActivationKind::Softmax) {
            throw ConfigError("FCN conversion: only elementwise activations may follow the last FC layer");
        }
    }
    const Shape map = net.node(flatten - 1).shape;  // [C, h, w]
    const auto& fc = net.node(flatten + 1);

    Network<T> out(net.input_shapes());
    for (int i = 0; i < flatten; ++i) out.add(net.node(i).name, net.node(i).spec);
    out.add(fc.name, LayerSpec::conv_valid(fc.spec.units, map[1], map[2]));
    for (std::size_t i = flatten + 2; i < net.size(); ++i) out.add(net.node(i).name, net.node(i).spec);
    out.set_outputs({out.last()}, OutputContract::ObjectnessMap);

    // FC weights [k, C*h*w] are already the row-major layout of [k, C, h, w].
    const auto src = net.parameters();
    const auto dst = out.parameters();
    if (src.size() != dst.size()) throw DimensionError("FCN conversion: parameter mismatch");
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (src[i]->value.size() != dst[i]->value.size()) throw DimensionError("FCN conversion: size mismatch");
        dst[i]->value = src[i]->value.reshaped(dst[i]->value.shape());
    }
    return out;
}

template <typename T>
void initialize(Network<T>& net, const InitSpec& spec, Rng& rng) {
    for (auto& p : net.parameters()) {
        const auto& n = p->name;
        auto ends_with = [&](const std::string& suffix) {
            return n.size() >= suffix.size() && n.compare(n.size() - suffix.size(), suffix.size(), suffix) == 0;
        };
        if (ends_with(".weights")) {
            p->value = init_weights<T>(spec, p->value.shape(), rng);
        } else if (ends_with(".gamma")) {
            p->value.fill(T{1});
        } else {
            p->value.fill(T{0});
        }
    }
    for (auto& b : net.buffers()) b->value.fill(b->name.ends_with(".running_var") ? T{1} : T{0});
}

template Network<float> to_fcn<float>(const Network<float>&);
template Network<double> to_fcn<double>(const Network<double>&);
template void initialize<float>(Network<float>&, const InitSpec&, Rng&);
template void initialize<double>(Network<double>&, const InitSpec&, Rng&);

}  // namespace sonarp
