#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sonarp/layers.hpp"

namespace sonarp {

/// What the output nodes of a network mean.
enum class OutputContract { ClassProbs, Score, ObjectnessMap, Dual };

std::string to_string(OutputContract c);
OutputContract output_contract_from_string(const std::string& name);

struct NodeInfo {
    std::string name;
    LayerSpec spec;
    std::vector<int> inputs;  // node ids; negative values -1 - k refer to graph input k
    std::string shares;       // node whose parameters this node reuses ("" = own)
    Shape shape;              // per-sample output shape for the declared input shapes
};

/// Directed acyclic graph of layers in insertion (topological) order. Nodes
/// added with add_shared() point at the same Parameter objects as their
/// source, which is how siamese branches share weights.
template <typename T>
class Network {
public:
    explicit Network(std::vector<Shape> input_shapes);
    Network(Network&&) noexcept = default;
    Network& operator=(Network&&) noexcept = default;

    static constexpr int input(std::size_t k) { return -1 - static_cast<int>(k); }

    /// Appends a node fed by `inputs`; throws on unknown ids, duplicate
    /// names or shapes that do not compose.
    int add(const std::string& name, const LayerSpec& spec, std::vector<int> inputs);
    /// Appends a node fed by the previous node (or input 0 for the first node).
    int add(const std::string& name, const LayerSpec& spec);
    /// New node with the layer spec and parameters of `source`.
    int add_shared(const std::string& name, const std::string& source, std::vector<int> inputs);

    void set_outputs(std::vector<int> outputs, OutputContract contract);

    std::vector<Tensor<T>> forward(std::span<const Tensor<T>> inputs, Mode mode, Rng& rng);
    /// Single input, first output.
    Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng);
    /// Accumulates parameter gradients; returns gradients for the graph inputs.
    std::vector<Tensor<T>> backward(std::span<const Tensor<T>> grad_outputs);
    Tensor<T> backward(const Tensor<T>& grad_output);

    std::vector<ParamPtr<T>> parameters() const;  // unique, in node order
    std::vector<ParamPtr<T>> buffers() const;
    void zero_grad();
    std::size_t num_parameters() const;  // trainable scalars
    std::size_t num_buffer_values() const;

    std::size_t size() const noexcept { return nodes_.size(); }
    const NodeInfo& node(std::size_t id) const { return nodes_.at(id); }
    const NodeInfo& node(const std::string& name) const { return nodes_.at(node_id(name)); }
    int node_id(const std::string& name) const;
    int last() const noexcept { return static_cast<int>(nodes_.size()) - 1; }
    const Layer<T>& layer(std::size_t id) const { return *layers_.at(id); }
    Layer<T>& layer(std::size_t id) { return *layers_.at(id); }
    /// Output of a node from the most recent forward().
    const Tensor<T>& activation(const std::string& name) const;

    const std::vector<Shape>& input_shapes() const noexcept { return input_shapes_; }
    const std::vector<int>& outputs() const noexcept { return outputs_; }
    OutputContract contract() const noexcept { return contract_; }
    Shape output_shape(std::size_t k = 0) const { return nodes_.at(outputs_.at(k)).shape; }

    /// JSON text describing inputs, nodes and outputs (no tensor data).
    std::string descriptor() const;
    /// Architecture from a descriptor; parameters are zero-filled.
    static Network from_descriptor(const std::string& json);

    /// Same architecture and values in another scalar type.
    template <typename U>
    Network<U> converted() const {
        Network<U> out = Network<U>::from_descriptor(descriptor());
        copy_values(parameters(), out.parameters());
        copy_values(buffers(), out.buffers());
        return out;
    }
    Network clone() const { return converted<T>(); }

private:
    template <typename A, typename B>
    static void copy_values(const std::vector<ParamPtr<A>>& from, const std::vector<ParamPtr<B>>& to) {
        if (from.size() != to.size()) throw DimensionError("parameter list mismatch");
        for (std::size_t i = 0; i < from.size(); ++i) {
            const auto src = from[i]->value.data();
            auto dst = to[i]->value.data();
            if (src.size() != dst.size()) throw DimensionError("parameter size mismatch for " + from[i]->name);
            for (std::size_t j = 0; j < src.size(); ++j) dst[j] = static_cast<B>(src[j]);
        }
    }

    Shape input_shape_of(int id) const;

    std::vector<Shape> input_shapes_;
    std::vector<NodeInfo> nodes_;
    std::vector<std::unique_ptr<Layer<T>>> layers_;
    std::vector<int> outputs_;
    OutputContract contract_ = OutputContract::ClassProbs;
    std::vector<Tensor<T>> acts_;
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace sonarp
