#include "sonarp/network.hpp"

#include <json.hpp>
#include <mutex>
#include <set>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace sonarp {

using nlohmann::json;

namespace {

// Activations of a training batch run to tens of megabytes. glibc maps such
// blocks fresh on every allocation and unmaps them on free, so each layer call
// pays for zeroed pages; keeping them in the heap roughly halves wall time.
void keep_large_buffers_in_heap() {
#if defined(__GLIBC__)
    static std::once_flag once;
    std::call_once(once, [] {
        mallopt(M_MMAP_THRESHOLD, 1 << 30);
        mallopt(M_TRIM_THRESHOLD, 1 << 30);
        mallopt(M_TOP_PAD, 64 << 20);
    });
#endif
}

}  // namespace

std::string to_string(OutputContract c) {
    switch (c) {
        case OutputContract::ClassProbs: return "class_probs";
        case OutputContract::Score: return "score";
        case OutputContract::ObjectnessMap: return "objectness_map";
        case OutputContract::Dual: return "dual";
    }
    return "?";
}

OutputContract output_contract_from_string(const std::string& name) {
    for (auto c : {OutputContract::ClassProbs, OutputContract::Score, OutputContract::ObjectnessMap,
                   OutputContract::Dual})
        if (to_string(c) == name) return c;
    throw ConfigError("unknown output contract '" + name + "'");
}

template <typename T>
Network<T>::Network(std::vector<Shape> input_shapes) : input_shapes_(std::move(input_shapes)) {
    if (input_shapes_.empty()) throw ConfigError("network needs at least one input");
    for (const auto& s : input_shapes_) {
        if (s.empty() || num_elements(s) == 0) throw DimensionError("invalid input shape " + to_string(s));
    }
}

template <typename T>
Shape Network<T>::input_shape_of(int id) const {
    if (id < 0) {
        const std::size_t k = static_cast<std::size_t>(-1 - id);
        if (k >= input_shapes_.size()) throw ConfigError("unknown graph input " + std::to_string(k));
        return input_shapes_[k];
    }
    if (static_cast<std::size_t>(id) >= nodes_.size()) throw ConfigError("unknown node id " + std::to_string(id));
    return nodes_[id].shape;
}

template <typename T>
int Network<T>::node_id(const std::string& name) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].name == name) return static_cast<int>(i);
    throw ConfigError("no node named '" + name + "'");
}

template <typename T>
int Network<T>::add(const std::string& name, const LayerSpec& spec, std::vector<int> inputs) {
    if (name.empty()) throw ConfigError("node name must not be empty");
    for (const auto& n : nodes_)
        if (n.name == name) throw ConfigError("duplicate node name '" + name + "'");
    if (inputs.empty()) throw ConfigError("node '" + name + "' has no inputs");
    std::vector<Shape> shapes;
    for (int id : inputs) shapes.push_back(input_shape_of(id));
    auto layer = make_layer<T>(spec, shapes, name);
    NodeInfo info{name, spec, std::move(inputs), "", layer->output_shape(shapes)};
    nodes_.push_back(std::move(info));
    layers_.push_back(std::move(layer));
    return last();
}

template <typename T>
int Network<T>::add(const std::string& name, const LayerSpec& spec) {
    return add(name, spec, {nodes_.empty() ? input(0) : last()});
}

template <typename T>
int Network<T>::add_shared(const std::string& name, const std::string& source, std::vector<int> inputs) {
    const int src = node_id(source);
    const int id = add(name, nodes_[src].spec, std::move(inputs));
    layers_[id]->share_from(*layers_[src]);
    nodes_[id].shares = nodes_[src].shares.empty() ? source : nodes_[src].shares;
    return id;
}

template <typename T>
void Network<T>::set_outputs(std::vector<int> outputs, OutputContract contract) {
    if (outputs.empty()) throw ConfigError("network needs at least one output");
    for (int id : outputs) {
        if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) throw ConfigError("invalid output node");
    }
    if ((contract == OutputContract::Dual) != (outputs.size() == 2)) {
        throw ConfigError("dual contract requires exactly two outputs");
    }
    outputs_ = std::move(outputs);
    contract_ = contract;
}

template <typename T>
std::vector<Tensor<T>> Network<T>::forward(std::span<const Tensor<T>> inputs, Mode mode, Rng& rng) {
    keep_large_buffers_in_heap();
    if (outputs_.empty()) throw ConfigError("network outputs not set");
    if (inputs.size() != input_shapes_.size()) {
        throw DimensionError("network expects " + std::to_string(input_shapes_.size()) + " inputs, got " +
                             std::to_string(inputs.size()));
    }
    acts_.assign(nodes_.size(), Tensor<T>());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        std::vector<const Tensor<T>*> in;
        for (int id : nodes_[i].inputs) in.push_back(id < 0 ? &inputs[-1 - id] : &acts_[id]);
        acts_[i] = layers_[i]->forward(std::span<const Tensor<T>* const>(in), mode, rng);
    }
    std::vector<Tensor<T>> out;
    for (int id : outputs_) out.push_back(acts_[id]);
    return out;
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& x, Mode mode, Rng& rng) {
    return std::move(forward(std::span<const Tensor<T>>(&x, 1), mode, rng).front());
}

template <typename T>
std::vector<Tensor<T>> Network<T>::backward(std::span<const Tensor<T>> grad_outputs) {
    if (grad_outputs.size() != outputs_.size()) throw DimensionError("one gradient per network output expected");
    std::vector<Tensor<T>> grads(nodes_.size());
    auto accumulate = [](Tensor<T>& dst, const Tensor<T>& g) {
        if (dst.empty()) {
            dst = g;
        } else {
            if (dst.shape() != g.shape()) throw DimensionError("gradient shape mismatch");
            for (std::size_t j = 0; j < g.size(); ++j) dst[j] += g[j];
        }
    };
    for (std::size_t k = 0; k < outputs_.size(); ++k) accumulate(grads[outputs_[k]], grad_outputs[k]);
    std::vector<Tensor<T>> input_grads(input_shapes_.size());
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        if (grads[i].empty()) continue;
        auto gin = layers_[i]->backward(grads[i]);
        grads[i] = Tensor<T>();
        for (std::size_t j = 0; j < nodes_[i].inputs.size(); ++j) {
            const int id = nodes_[i].inputs[j];
            accumulate(id < 0 ? input_grads[-1 - id] : grads[id], gin[j]);
        }
    }
    return input_grads;
}

template <typename T>
Tensor<T> Network<T>::backward(const Tensor<T>& grad_output) {
    return std::move(backward(std::span<const Tensor<T>>(&grad_output, 1)).front());
}

template <typename T>
std::vector<ParamPtr<T>> Network<T>::parameters() const {
    std::vector<ParamPtr<T>> out;
    std::set<const Parameter<T>*> seen;
    for (const auto& l : layers_)
        for (auto& p : l->parameters())
            if (seen.insert(p.get()).second) out.push_back(p);
    return out;
}

template <typename T>
std::vector<ParamPtr<T>> Network<T>::buffers() const {
    std::vector<ParamPtr<T>> out;
    std::set<const Parameter<T>*> seen;
    for (const auto& l : layers_)
        for (auto& p : l->buffers())
            if (seen.insert(p.get()).second) out.push_back(p);
    return out;
}

template <typename T>
void Network<T>::zero_grad() {
    for (auto& p : parameters()) p->grad.fill(T{0});
}

template <typename T>
std::size_t Network<T>::num_parameters() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p->value.size();
    return n;
}

template <typename T>
std::size_t Network<T>::num_buffer_values() const {
    std::size_t n = 0;
    for (const auto& p : buffers()) n += p->value.size();
    return n;
}

template <typename T>
const Tensor<T>& Network<T>::activation(const std::string& name) const {
    const int id = node_id(name);
    if (acts_.size() != nodes_.size() || acts_[id].empty()) {
        throw MissingCacheError("no activation for '" + name + "': run forward() first");
    }
    return acts_[id];
}

namespace {

json spec_to_json(const LayerSpec& s) {
    json j{{"kind", to_string(s.kind)}};
    switch (s.kind) {
        case LayerKind::Conv2D:
            j["filters"] = s.filters;
            j["kernel"] = {s.kernel_h, s.kernel_w};
            j["stride"] = s.stride;
            j["padding"] = s.padding;
            break;
        case LayerKind::FullyConnected: j["units"] = s.units; break;
        case LayerKind::Dropout: j["rate"] = s.rate; break;
        case LayerKind::Activation: j["activation"] = to_string(s.activation); break;
        case LayerKind::BatchNorm:
            j["epsilon"] = s.epsilon;
            j["momentum"] = s.momentum;
            break;
        default: break;
    }
    return j;
}

LayerSpec spec_from_json(const json& j) {
    LayerSpec s;
    s.kind = layer_kind_from_string(j.at("kind").get<std::string>());
    switch (s.kind) {
        case LayerKind::Conv2D:
            s.filters = j.at("filters").get<std::size_t>();
            s.kernel_h = j.at("kernel").at(0).get<std::size_t>();
            s.kernel_w = j.at("kernel").at(1).get<std::size_t>();
            s.stride = j.at("stride").get<std::size_t>();
            s.padding = j.at("padding").get<std::size_t>();
            break;
        case LayerKind::FullyConnected: s.units = j.at("units").get<std::size_t>(); break;
        case LayerKind::Dropout: s.rate = j.at("rate").get<double>(); break;
        case LayerKind::Activation: s.activation = activation_from_string(j.at("activation").get<std::string>()); break;
        case LayerKind::BatchNorm:
            s.epsilon = j.at("epsilon").get<double>();
            s.momentum = j.at("momentum").get<double>();
            break;
        default: break;
    }
    return s;
}

}  // namespace

template <typename T>
std::string Network<T>::descriptor() const {
    json j;
    j["inputs"] = input_shapes_;
    j["nodes"] = json::array();
    for (const auto& n : nodes_) {
        json node{{"name", n.name}, {"layer", spec_to_json(n.spec)}, {"inputs", n.inputs}};
        if (!n.shares.empty()) node["shares"] = n.shares;
        j["nodes"].push_back(std::move(node));
    }
    j["outputs"] = outputs_;
    j["contract"] = to_string(contract_);
    return j.dump();
}

template <typename T>
Network<T> Network<T>::from_descriptor(const std::string& text) {
    try {
        const json j = json::parse(text);
        Network<T> net(j.at("inputs").get<std::vector<Shape>>());
        for (const auto& node : j.at("nodes")) {
            const auto name = node.at("name").get<std::string>();
            auto inputs = node.at("inputs").get<std::vector<int>>();
            if (node.contains("shares")) {
                net.add_shared(name, node.at("shares").get<std::string>(), std::move(inputs));
            } else {
                net.add(name, spec_from_json(node.at("layer")), std::move(inputs));
            }
        }
        net.set_outputs(j.at("outputs").get<std::vector<int>>(),
                        output_contract_from_string(j.at("contract").get<std::string>()));
        return net;
    } catch (const json::exception& e) {
        throw FormatError(std::string("invalid network descriptor: ") + e.what());
    }
}

template class Network<float>;
template class Network<double>;

}  // namespace sonarp
