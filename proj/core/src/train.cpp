#include "sonarp/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sonarp {

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& src, std::span<const std::size_t> rows) {
    if (src.empty() || rows.empty()) throw DimensionError("gather_rows: empty source or selection");
    const std::size_t row = src.size() / src.dim(0);
    Shape shape = src.shape();
    shape[0] = rows.size();
    Tensor<T> out(shape);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= src.dim(0)) throw DimensionError("gather_rows: row index out of range");
        std::copy(src.raw() + rows[i] * row, src.raw() + (rows[i] + 1) * row, out.raw() + i * row);
    }
    return out;
}

template <typename T>
void Dataset<T>::validate() const {
    const std::size_t n = size();
    if (n == 0) throw DataError("empty dataset");
    if (inputs.empty()) throw DataError("dataset has no inputs");
    for (const auto& x : inputs)
        if (x.empty() || x.dim(0) != n) throw DimensionError("dataset inputs and targets disagree on N");
    if (!class_targets.empty() && class_targets.dim(0) != n) {
        throw DimensionError("dataset class targets disagree on N");
    }
}

template <typename T>
Dataset<T> Dataset<T>::subset(std::span<const std::size_t> rows) const {
    Dataset out;
    for (const auto& x : inputs) out.inputs.push_back(gather_rows(x, rows));
    out.targets = gather_rows(targets, rows);
    if (!class_targets.empty()) out.class_targets = gather_rows(class_targets, rows);
    return out;
}

template <typename T>
std::vector<std::size_t> predicted_classes(const Tensor<T>& out) {
    if (out.rank() != 2) throw DimensionError("predicted_classes expects [N, K], got " + to_string(out.shape()));
    const std::size_t n = out.dim(0), k = out.dim(1);
    std::vector<std::size_t> cls(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (k == 1) {
            cls[i] = out[i] >= T(0.5) ? 1 : 0;
        } else {
            cls[i] = static_cast<std::size_t>(std::max_element(out.raw() + i * k, out.raw() + (i + 1) * k) -
                                              (out.raw() + i * k));
        }
    }
    return cls;
}

namespace {

template <typename T>
bool is_regression(LossKind k) {
    return k == LossKind::MSE || k == LossKind::MAE;
}

// Number of correct rows, or summed absolute error for regression.
template <typename T>
double metric_sum(LossKind kind, const Tensor<T>& out, const Tensor<T>& target) {
    if (is_regression<T>(kind)) {
        double s = 0;
        for (std::size_t i = 0; i < out.size(); ++i) s += std::abs(static_cast<double>(out[i]) - target[i]);
        return s / static_cast<double>(out.size() / out.dim(0));
    }
    if (kind == LossKind::Hinge) {
        double c = 0;
        for (std::size_t i = 0; i < out.size(); ++i) c += ((out[i] >= T{0}) == (target[i] > T{0})) ? 1 : 0;
        return c / static_cast<double>(out.size() / out.dim(0));
    }
    const auto p = predicted_classes(out);
    const auto y = predicted_classes(target);
    double c = 0;
    for (std::size_t i = 0; i < p.size(); ++i) c += p[i] == y[i] ? 1 : 0;
    return c;
}

struct BatchResult {
    double loss;
    double metric;
};

template <typename T>
BatchResult batch_loss(Network<T>& net, const std::vector<Tensor<T>>& outs, const Dataset<T>& batch,
                       const TrainConfig& cfg, std::vector<Tensor<T>>* grads) {
    if (net.contract() == OutputContract::Dual) {
        auto r = multitask_loss(outs[0], batch.targets, outs[1], batch.class_targets, static_cast<T>(cfg.gamma));
        if (grads) {
            grads->push_back(std::move(r.grad_objectness));
            grads->push_back(std::move(r.grad_classes));
        }
        return {static_cast<double>(r.value), metric_sum<T>(LossKind::CategoricalCE, outs[1], batch.class_targets)};
    }
    auto r = loss(cfg.loss, outs[0], batch.targets);
    if (grads) grads->push_back(std::move(r.grad));
    return {static_cast<double>(r.value), metric_sum<T>(cfg.loss, outs[0], batch.targets)};
}

template <typename T>
bool all_finite(const std::vector<Tensor<T>>& outs) {
    for (const auto& t : outs)
        for (T v : t.data())
            if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace

template <typename T>
std::vector<Tensor<T>> predict(Network<T>& net, std::span<const Tensor<T>> inputs, std::size_t batch_size) {
    if (inputs.empty() || inputs[0].empty()) throw DimensionError("predict: no inputs");
    if (batch_size == 0) throw ConfigError("batch size must be >= 1");
    const std::size_t n = inputs[0].dim(0);
    Rng rng(0);
    std::vector<std::vector<Tensor<T>>> chunks;
    for (std::size_t b = 0; b < n; b += batch_size) {
        const std::size_t m = std::min(batch_size, n - b);
        std::vector<Tensor<T>> batch;
        for (const auto& x : inputs) batch.push_back(slice_rows(x, b, m));
        chunks.push_back(net.forward(std::span<const Tensor<T>>(batch), Mode::Infer, rng));
    }
    std::vector<Tensor<T>> out;
    for (std::size_t k = 0; k < chunks[0].size(); ++k) {
        std::vector<const Tensor<T>*> parts;
        for (const auto& c : chunks) parts.push_back(&c[k]);
        Shape shape = chunks[0][k].shape();
        shape[0] = n;
        Tensor<T> joined(shape);
        std::size_t off = 0;
        for (const auto* p : parts) {
            std::copy(p->raw(), p->raw() + p->size(), joined.raw() + off);
            off += p->size();
        }
        out.push_back(std::move(joined));
    }
    return out;
}

template <typename T>
Tensor<T> predict(Network<T>& net, const Tensor<T>& input, std::size_t batch_size) {
    return std::move(predict(net, std::span<const Tensor<T>>(&input, 1), batch_size).front());
}

template <typename T>
Evaluation<T> evaluate(Network<T>& net, const Dataset<T>& data, const TrainConfig& config) {
    data.validate();
    auto outs = predict(net, std::span<const Tensor<T>>(data.inputs), config.batch_size);
    const auto r = batch_loss<T>(net, outs, data, config, nullptr);
    return {r.loss, r.metric / static_cast<double>(data.size())};
}

template <typename T>
std::vector<EpochLog> train(Network<T>& net, const Dataset<T>& data, const Dataset<T>* validation,
                            const TrainConfig& config, Rng& rng, const std::function<void(const EpochLog&)>& on_epoch) {
    if (config.batch_size == 0) throw ConfigError("batch size must be >= 1");
    data.validate();
    if (validation) validation->validate();
    if ((net.contract() == OutputContract::Dual) && data.class_targets.empty()) {
        throw DataError("dual-output training needs class targets");
    }

    Optimizer<T> opt(config.optimizer, net.parameters());
    const std::size_t n = data.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    std::vector<std::pair<std::size_t, std::size_t>> batches;  // (begin, count)
    for (std::size_t b = 0; b < n; b += config.batch_size) batches.emplace_back(b, std::min(config.batch_size, n - b));
    if (batches.size() > 1 && batches.back().second == 1) {
        batches.pop_back();
        batches.back().second += 1;
    }

    std::vector<EpochLog> log;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0;
        for (const auto& [begin, count] : batches) {
            const std::span<const std::size_t> rows(order.data() + begin, count);
            const Dataset<T> batch = data.subset(rows);
            opt.zero_grad();
            auto outs = net.forward(std::span<const Tensor<T>>(batch.inputs), Mode::Train, rng);
            if (!all_finite(outs)) throw DivergenceError("network output diverged at epoch " + std::to_string(epoch), epoch);
            std::vector<Tensor<T>> grads;
            const auto r = batch_loss(net, outs, batch, config, &grads);
            if (!std::isfinite(r.loss)) throw DivergenceError("loss diverged at epoch " + std::to_string(epoch), epoch);
            net.backward(std::span<const Tensor<T>>(grads));
            try {
                opt.step();
            } catch (const DomainError& e) {
                throw DivergenceError(std::string(e.what()) + " at epoch " + std::to_string(epoch), epoch);
            }
            loss_sum += r.loss * static_cast<double>(count);
        }
        EpochLog row{epoch, loss_sum / static_cast<double>(n), std::numeric_limits<double>::quiet_NaN(),
                     std::numeric_limits<double>::quiet_NaN()};
        if (validation) {
            Evaluation<T> ev;
            try {
                ev = evaluate(net, *validation, config);
            } catch (const DomainError& e) {
                throw DivergenceError(std::string("validation ") + e.what(), epoch);
            }
            if (!std::isfinite(ev.loss)) throw DivergenceError("validation loss diverged", epoch);
            row.val_loss = ev.loss;
            row.val_metric = ev.metric;
        }
        log.push_back(row);
        if (on_epoch) on_epoch(row);
    }
    return log;
}

#define SONARP_INSTANTIATE(T)                                                                                   \
    template struct Dataset<T>;                                                                                \
    template Tensor<T> gather_rows<T>(const Tensor<T>&, std::span<const std::size_t>);                         \
    template std::vector<std::size_t> predicted_classes<T>(const Tensor<T>&);                                  \
    template std::vector<Tensor<T>> predict<T>(Network<T>&, std::span<const Tensor<T>>, std::size_t);          \
    template Tensor<T> predict<T>(Network<T>&, const Tensor<T>&, std::size_t);                                 \
    template Evaluation<T> evaluate<T>(Network<T>&, const Dataset<T>&, const TrainConfig&);                    \
    template std::vector<EpochLog> train<T>(Network<T>&, const Dataset<T>&, const Dataset<T>*,                 \
                                            const TrainConfig&, Rng&, const std::function<void(const EpochLog&)>&);

SONARP_INSTANTIATE(float)
SONARP_INSTANTIATE(double)

#undef SONARP_INSTANTIATE

}  // namespace sonarp
