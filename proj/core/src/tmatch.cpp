#include "sonarp/tmatch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sonarp/parallel.hpp"

namespace sonarp {

namespace {

void require_same(const Tensor<float>& a, const Tensor<float>& b) {
    if (a.shape() != b.shape() || a.empty()) {
        throw DimensionError("patch shapes differ: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    }
}

double mean_of(const Tensor<float>& t) {
    double s = 0;
    for (float v : t.data()) s += v;
    return s / static_cast<double>(t.size());
}

}  // namespace

double cc_similarity(const Tensor<float>& templ, const Tensor<float>& image) {
    require_same(templ, image);
    const double mt = mean_of(templ), mi = mean_of(image);
    double num = 0, st = 0, si = 0;
    for (std::size_t k = 0; k < templ.size(); ++k) {
        const double dt = templ[k] - mt, di = image[k] - mi;
        num += dt * di;
        st += dt * dt;
        si += di * di;
    }
    if (st <= 0.0 || si <= 0.0) throw DegenerateInputError("constant patch has no correlation");
    return std::clamp(num / std::sqrt(st * si), -1.0, 1.0);
}

double sqd_similarity(const Tensor<float>& templ, const Tensor<float>& image) {
    require_same(templ, image);
    double s = 0;
    for (std::size_t k = 0; k < templ.size(); ++k) {
        const double d = static_cast<double>(image[k]) - templ[k];
        s += d * d;
    }
    return s / static_cast<double>(templ.size());
}

std::string to_string(TmMetric m) { return m == TmMetric::CC ? "cc" : "sqd"; }

TmMetric tm_metric_from_string(const std::string& name) {
    if (name == "cc") return TmMetric::CC;
    if (name == "sqd") return TmMetric::SQD;
    throw ConfigError("unknown template metric '" + name + "'");
}

void TemplateSet::add(Tensor<float> patch, std::size_t label) {
    if (!patches.empty() && patch.shape() != patches.front().shape()) {
        throw DimensionError("template shape " + to_string(patch.shape()) + " differs from " +
                             to_string(patches.front().shape()));
    }
    patches.push_back(std::move(patch));
    labels.push_back(label);
}

void TemplateSet::validate() const {
    if (patches.size() != labels.size()) throw DimensionError("template/label count mismatch");
    for (const auto& p : patches)
        if (p.shape() != patches.front().shape()) throw DimensionError("templates have mixed shapes");
}

std::size_t tm_classify(const Tensor<float>& image, const TemplateSet& templates, TmMetric metric) {
    templates.validate();
    if (templates.size() == 0) throw ConfigError("empty template set");
    std::size_t best = templates.size();
    double best_score = 0;
    for (std::size_t t = 0; t < templates.size(); ++t) {
        double s;
        if (metric == TmMetric::CC) {
            try {
                s = cc_similarity(templates.patches[t], image);
            } catch (const DegenerateInputError&) {
                continue;
            }
        } else {
            s = -sqd_similarity(templates.patches[t], image);
        }
        if (best == templates.size() || s > best_score) {
            best = t;
            best_score = s;
        }
    }
    if (best == templates.size()) throw DegenerateInputError("every template comparison was degenerate");
    return templates.labels[best];
}

ObjectnessMap tm_objectness_map(const Tensor<float>& frame, std::span<const Tensor<float>> templates, int stride) {
    if (templates.empty()) throw ConfigError("no templates");
    if (stride <= 0) throw ConfigError("stride must be positive");
    if (frame.rank() != 3 || frame.dim(0) != 1) throw DimensionError("frame must be [1, H, W]");
    const std::size_t th = templates[0].dim(1), tw = templates[0].dim(2);
    const std::size_t h = frame.dim(1), w = frame.dim(2);
    if (h < th || w < tw) throw DimensionError("frame smaller than template");
    const std::size_t n = th * tw;

    // Zero-mean, unit-norm templates as columns: C = windows x templates.
    const std::size_t nt = templates.size();
    std::vector<double> tc(nt * n);
    for (std::size_t t = 0; t < nt; ++t) {
        if (templates[t].shape() != templates[0].shape()) throw DimensionError("templates have mixed shapes");
        const double m = mean_of(templates[t]);
        double ss = 0;
        for (std::size_t k = 0; k < n; ++k) {
            tc[t * n + k] = templates[t][k] - m;
            ss += tc[t * n + k] * tc[t * n + k];
        }
        if (ss <= 0) throw DegenerateInputError("constant template");
        const double inv = 1.0 / std::sqrt(ss);
        for (std::size_t k = 0; k < n; ++k) tc[t * n + k] *= inv;
    }

    const std::size_t oh = (h - th) / stride + 1, ow = (w - tw) / stride + 1;
    // Integral images of I and I^2 for window means and variances.
    std::vector<double> s1((h + 1) * (w + 1), 0.0), s2((h + 1) * (w + 1), 0.0);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double v = frame[y * w + x];
            const std::size_t i = (y + 1) * (w + 1) + x + 1;
            s1[i] = v + s1[i - 1] + s1[i - (w + 1)] - s1[i - (w + 1) - 1];
            s2[i] = v * v + s2[i - 1] + s2[i - (w + 1)] - s2[i - (w + 1) - 1];
        }
    auto box_sum = [&](const std::vector<double>& s, std::size_t y, std::size_t x) {
        return s[(y + th) * (w + 1) + x + tw] - s[y * (w + 1) + x + tw] - s[(y + th) * (w + 1) + x] +
               s[y * (w + 1) + x];
    };

    ObjectnessMap map;
    map.values = Tensor<float>({oh, ow});
    map.stride = stride;
    map.offset = static_cast<int>(th / 2);
    parallel_for(oh, [&](std::size_t i) {
        std::vector<double> win(ow * n);
        for (std::size_t j = 0; j < ow; ++j)
            for (std::size_t y = 0; y < th; ++y) {
                const float* src = frame.raw() + (i * stride + y) * w + j * stride;
                std::copy(src, src + tw, win.data() + j * n + y * tw);
            }
        std::vector<double> dots(ow * nt);
        detail::gemm_nt(win.data(), tc.data(), dots.data(), ow, n, nt, false);
        for (std::size_t j = 0; j < ow; ++j) {
            const double sum = box_sum(s1, i * stride, j * stride);
            const double var = box_sum(s2, i * stride, j * stride) - sum * sum / static_cast<double>(n);
            double best = 0.0;
            if (var > 1e-12 * static_cast<double>(n)) {
                const double inv = 1.0 / std::sqrt(var);
                for (std::size_t t = 0; t < nt; ++t) best = std::max(best, dots[j * nt + t] * inv);
            }
            map.values[i * ow + j] = static_cast<float>(std::clamp(best, 0.0, 1.0));
        }
    });
    return map;
}

}  // namespace sonarp
