#include "sonarp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numbers>
#include <numeric>

#include "sonarp/parallel.hpp"

namespace sonarp {

using nlohmann::json;

void SceneConfig::validate() const {
    if (height < static_cast<std::size_t>(window) || width < static_cast<std::size_t>(window)) {
        throw ConfigError("frame smaller than the patch window");
    }
    if (!(r_min >= 0 && r_min < r_max)) throw ConfigError("sector needs 0 <= r_min < r_max");
    if (!(half_angle_deg > 0 && half_angle_deg <= 90)) throw ConfigError("sector half angle must be in (0, 90]");
    if (classes < 1 || classes > 10) throw ConfigError("between 1 and 10 object classes are supported");
    if (min_objects > max_objects) throw ConfigError("min_objects > max_objects");
    if (min_size < 8 || min_size > max_size || max_size > window) {
        throw ConfigError("object sizes must satisfy 8 <= min_size <= max_size <= window");
    }
    if (!(speckle >= 0 && speckle <= 1)) throw ConfigError("speckle strength must be in [0, 1]");
    if (!(background >= 0 && highlight <= 1 && background < highlight)) {
        throw ConfigError("need 0 <= background < highlight <= 1");
    }
    if (!(shadow_probability >= 0 && shadow_probability <= 1)) throw ConfigError("shadow probability outside [0, 1]");
    if (!(shadow_factor >= 0 && shadow_factor <= 1)) throw ConfigError("shadow factor outside [0, 1]");
}

std::string SceneConfig::to_json() const {
    json j{{"height", height},
           {"width", width},
           {"apex_x", apex_x},
           {"apex_y", apex_y},
           {"r_min", r_min},
           {"r_max", r_max},
           {"half_angle_deg", half_angle_deg},
           {"classes", classes},
           {"min_objects", min_objects},
           {"max_objects", max_objects},
           {"min_size", min_size},
           {"max_size", max_size},
           {"window", window},
           {"background", background},
           {"highlight", highlight},
           {"speckle", speckle},
           {"shadow_probability", shadow_probability},
           {"shadow_factor", shadow_factor},
           {"contrast_margin", contrast_margin},
           {"seed", seed}};
    return j.dump(2);
}

SceneConfig SceneConfig::from_json(const std::string& text) {
    SceneConfig c;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("scene config: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("scene config must be a JSON object");
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) {
            try {
                j.at(key).get_to(field);
            } catch (const json::exception& e) {
                throw ConfigError(std::string("scene config field '") + key + "': " + e.what());
            }
        }
    };
    get("height", c.height);
    get("width", c.width);
    get("apex_x", c.apex_x);
    get("apex_y", c.apex_y);
    get("r_min", c.r_min);
    get("r_max", c.r_max);
    get("half_angle_deg", c.half_angle_deg);
    get("classes", c.classes);
    get("min_objects", c.min_objects);
    get("max_objects", c.max_objects);
    get("min_size", c.min_size);
    get("max_size", c.max_size);
    get("window", c.window);
    get("background", c.background);
    get("highlight", c.highlight);
    get("speckle", c.speckle);
    get("shadow_probability", c.shadow_probability);
    get("shadow_factor", c.shadow_factor);
    get("contrast_margin", c.contrast_margin);
    get("seed", c.seed);
    c.validate();
    return c;
}

FovMask make_fov(const SceneConfig& c) {
    FovMask m = FovMask::full(c.height, c.width, false);
    const double half = c.half_angle_deg * std::numbers::pi / 180.0;
    for (std::size_t y = 0; y < c.height; ++y)
        for (std::size_t x = 0; x < c.width; ++x) {
            const double dx = x + 0.5 - c.apex_x, dy = c.apex_y - (y + 0.5);
            const double r = std::hypot(dx, dy);
            const double a = std::atan2(dx, dy);
            if (r >= c.r_min && r <= c.r_max && std::abs(a) <= half) m.pixels[y * c.width + x] = 1;
        }
    return m;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    // splitmix64 over the pair
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

BoundingBox centered_window(const BoundingBox& b, int window) {
    return {b.x + b.w / 2 - window / 2, b.y + b.h / 2 - window / 2, window, window, std::nullopt, std::nullopt};
}

namespace {

// Normalized coordinates (u, v) in [0, 1) inside the object box.
bool in_ellipse(double u, double v, double cu, double cv, double ru, double rv) {
    const double a = (u - cu) / ru, b = (v - cv) / rv;
    return a * a + b * b <= 1.0;
}

bool shape_contains(std::size_t cls, double u, double v) {
    switch (cls) {
        case 0: return in_ellipse(u, v, 0.25, 0.5, 0.25, 0.5) || in_ellipse(u, v, 0.75, 0.5, 0.25, 0.5);
        case 1: return in_ellipse(u, v, 0.5, 0.5, 0.5, 0.5);
        case 2: {
            const double cu = (std::floor(u * 3) + 0.5) / 3, cv = (std::floor(v * 2) + 0.5) / 2;
            return in_ellipse(u, v, cu, cv, 1.0 / 6, 0.25);
        }
        case 3: return true;
        case 4: return u < 0.3 || v > 0.7;
        case 5: return std::abs(u - 0.5) < 0.15 || std::abs(v - 0.5) < 0.15;
        case 6: return v < 0.3 || std::abs(u - 0.5) < 0.15;
        case 7: return std::abs(u - 0.5) <= 0.5 * v + 0.02;
        case 8: return in_ellipse(u, v, 0.5, 0.5, 0.5, 0.5) && !in_ellipse(u, v, 0.5, 0.5, 0.32, 0.32);
        case 9: return u < 0.2 || u > 0.8 || v < 0.2 || v > 0.8;
        default: throw ConfigError("unknown object class " + std::to_string(cls));
    }
}

struct Placed {
    BoundingBox box;
    bool shadow = false;
    double amplitude = 1.0;
};

// Box grown by a margin plus the shadow area above it.
BoundingBox keep_out(const BoundingBox& b) {
    const int m = 8;
    const int shadow = b.h / 2;
    return {b.x - m, b.y - m - shadow, b.w + 2 * m, b.h + 2 * m + shadow, std::nullopt, std::nullopt};
}

bool overlaps(const BoundingBox& a, const BoundingBox& b) {
    return a.x < b.x + b.w && b.x < a.x + a.w && a.y < b.y + b.h && b.y < a.y + a.h;
}

bool placeable(const SceneConfig& c, const FovMask& fov, const BoundingBox& b) {
    const BoundingBox win = centered_window(b, c.window);
    if (win.x < 0 || win.y < 0 || win.x + win.w > static_cast<int>(c.width) ||
        win.y + win.h > static_cast<int>(c.height)) {
        return false;
    }
    return fov.contains(win) && fov.contains(b);
}

// Renders objects over speckled background; retries the noise until the
// contrast margin holds.
Tensor<float> render(const SceneConfig& c, const FovMask& fov, const std::vector<Placed>& objects, Rng& rng) {
    const std::size_t h = c.height, w = c.width;
    std::vector<float> base(h * w, 0.0f);
    for (std::size_t i = 0; i < h * w; ++i) base[i] = fov.pixels[i] ? static_cast<float>(c.background) : 0.0f;
    for (const auto& o : objects) {
        if (!o.shadow) continue;
        const auto& b = o.box;
        const int y0 = std::max(0, b.y - b.h / 2);
        for (int y = y0; y < b.y; ++y)
            for (int x = b.x; x < b.x + b.w; ++x) base[y * w + x] *= static_cast<float>(c.shadow_factor);
    }
    for (const auto& o : objects) {
        const auto& b = o.box;
        const std::size_t cls = static_cast<std::size_t>(*b.label);
        for (int y = 0; y < b.h; ++y)
            for (int x = 0; x < b.w; ++x) {
                const double u = (x + 0.5) / b.w, v = (y + 0.5) / b.h;
                if (shape_contains(cls, u, v)) base[(b.y + y) * w + b.x + x] = static_cast<float>(c.highlight * o.amplitude);
            }
    }

    std::exponential_distribution<double> expo(1.0);
    Tensor<float> img({1, h, w});
    std::vector<float> noisy(h * w);
    for (int attempt = 0; attempt < 20; ++attempt) {
        for (std::size_t i = 0; i < h * w; ++i) {
            noisy[i] = static_cast<float>(base[i] * (1.0 - c.speckle + c.speckle * expo(rng)));
        }
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                float s = 0;
                int n = 0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const long yy = static_cast<long>(y) + dy, xx = static_cast<long>(x) + dx;
                        if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
                        s += noisy[yy * w + xx];
                        ++n;
                    }
                img[y * w + x] = fov.pixels[y * w + x] ? std::clamp(s / n, 0.0f, 1.0f) : 0.0f;
            }
        if (objects.empty()) return img;
        // Contrast: mean inside boxes vs mean of the remaining FOV pixels.
        std::vector<std::uint8_t> in_box(h * w, 0);
        double si = 0, so = 0;
        std::size_t ni = 0, no = 0;
        for (const auto& o : objects)
            for (int y = o.box.y; y < o.box.y + o.box.h; ++y)
                for (int x = o.box.x; x < o.box.x + o.box.w; ++x) in_box[y * w + x] = 1;
        for (std::size_t i = 0; i < h * w; ++i) {
            if (in_box[i]) {
                si += img[i];
                ++ni;
            } else if (fov.pixels[i]) {
                so += img[i];
                ++no;
            }
        }
        if (no == 0 || si / ni - so / no >= c.contrast_margin) return img;
    }
    throw ConfigError("could not reach the configured contrast margin");
}

BoundingBox random_box(const SceneConfig& c, Rng& rng, std::size_t cls) {
    std::uniform_int_distribution<int> size(c.min_size, c.max_size);
    const int bw = size(rng), bh = size(rng);
    std::uniform_int_distribution<int> px(0, static_cast<int>(c.width) - bw), py(0, static_cast<int>(c.height) - bh);
    return {px(rng), py(rng), bw, bh, static_cast<int>(cls), std::nullopt};
}

}  // namespace

SonarFrame generate_scene(const SceneConfig& c, Rng& rng, std::optional<std::size_t> objects,
                          std::span<const std::size_t> classes) {
    c.validate();
    const FovMask fov = make_fov(c);
    std::size_t count;
    if (!classes.empty()) {
        count = classes.size();
    } else if (objects) {
        count = *objects;
    } else {
        count = std::uniform_int_distribution<std::size_t>(c.min_objects, c.max_objects)(rng);
    }
    std::uniform_int_distribution<std::size_t> pick_class(0, c.classes - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<Placed> placed;
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t cls = classes.empty() ? pick_class(rng) : classes[k];
        if (cls >= c.classes) throw ConfigError("object class out of range");
        bool ok = false;
        for (int attempt = 0; attempt < 2000 && !ok; ++attempt) {
            const BoundingBox b = random_box(c, rng, cls);
            if (!placeable(c, fov, b)) continue;
            ok = std::none_of(placed.begin(), placed.end(),
                              [&](const Placed& p) { return overlaps(keep_out(p.box), keep_out(b)); });
            if (ok) placed.push_back({b, unit(rng) < c.shadow_probability, 0.85 + 0.15 * unit(rng)});
        }
        if (!ok) throw ConfigError("cannot place " + std::to_string(count) + " objects without overlap");
    }
    SonarFrame f;
    f.image = render(c, fov, placed, rng);
    f.fov = fov;
    for (const auto& p : placed) f.boxes.push_back(p.box);
    return f;
}

SonarFrame generate_frame(const SceneConfig& config, std::size_t index) {
    Rng rng(derive_seed(config.seed, index));
    SonarFrame f = generate_scene(config, rng);
    char id[32];
    std::snprintf(id, sizeof id, "frame_%06zu", index);
    f.id = id;
    return f;
}

std::vector<SonarFrame> generate_frames(const SceneConfig& config, std::size_t count, std::size_t first) {
    config.validate();
    std::vector<SonarFrame> frames(count);
    std::vector<std::string> errors(count);
    parallel_for(count, [&](std::size_t i) {
        try {
            frames[i] = generate_frame(config, first + i);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    for (const auto& e : errors)
        if (!e.empty()) throw ConfigError(e);
    return frames;
}

std::vector<SonarFrame> generate_sequence(const SceneConfig& config, std::size_t frames, std::size_t distractors,
                                          double speed, std::uint64_t seed) {
    config.validate();
    if (config.classes < 2 && distractors > 0) throw ConfigError("distractors need a second class");
    Rng rng(seed);
    const FovMask fov = make_fov(config);
    std::uniform_int_distribution<std::size_t> pick_class(0, config.classes - 1);
    const std::size_t target_cls = pick_class(rng);
    std::vector<std::size_t> classes{target_cls};
    while (classes.size() < 1 + distractors) {
        const std::size_t c = pick_class(rng);
        if (c != target_cls) classes.push_back(c);
    }
    // Initial layout from an ordinary scene with the requested labels.
    Rng layout_rng(derive_seed(seed, 0));
    const SonarFrame first = generate_scene(config, layout_rng, std::nullopt, classes);
    std::vector<Placed> objects;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (const auto& b : first.boxes) objects.push_back({b, unit(rng) < config.shadow_probability, 0.85 + 0.15 * unit(rng)});

    const double angle = unit(rng) * 2 * std::numbers::pi;
    double vx = speed * std::cos(angle), vy = speed * std::sin(angle);
    double px = objects[0].box.x, py = objects[0].box.y;

    std::vector<SonarFrame> out;
    for (std::size_t t = 0; t < frames; ++t) {
        if (t > 0) {
            bool moved = false;
            for (int flip = 0; flip < 4 && !moved; ++flip) {
                const double cvx = (flip & 1) ? -vx : vx, cvy = (flip & 2) ? -vy : vy;
                BoundingBox nb = objects[0].box;
                nb.x = static_cast<int>(std::lround(px + cvx));
                nb.y = static_cast<int>(std::lround(py + cvy));
                bool ok = placeable(config, fov, nb);
                for (std::size_t k = 1; ok && k < objects.size(); ++k)
                    ok = !overlaps(keep_out(objects[k].box), keep_out(nb));
                if (ok) {
                    vx = cvx;
                    vy = cvy;
                    px += vx;
                    py += vy;
                    objects[0].box = nb;
                    moved = true;
                }
            }
        }
        SonarFrame f;
        f.image = render(config, fov, objects, rng);
        f.fov = fov;
        for (const auto& o : objects) f.boxes.push_back(o.box);
        char id[32];
        std::snprintf(id, sizeof id, "seq_%06zu", t);
        f.id = id;
        out.push_back(std::move(f));
    }
    return out;
}

Dataset<float> PatchSet::to_dataset(std::size_t classes) const {
    if (patches.empty()) throw DataError("empty patch set");
    Dataset<float> d;
    d.inputs.push_back(stack(std::span<const Tensor<float>>(patches)));
    d.targets = one_hot<float>(labels, classes);
    return d;
}

namespace {

// Random window of the configured size inside the FOV with IoU < 0.1 against
// every object, or nullopt after a bounded number of tries.
std::optional<BoundingBox> background_window(const SceneConfig& c, const SonarFrame& f, Rng& rng) {
    std::uniform_int_distribution<int> px(0, static_cast<int>(c.width) - c.window);
    std::uniform_int_distribution<int> py(0, static_cast<int>(c.height) - c.window);
    for (int attempt = 0; attempt < 50; ++attempt) {
        BoundingBox b{px(rng), py(rng), c.window, c.window, std::nullopt, std::nullopt};
        if (!f.fov.contains(b)) continue;
        bool clear = true;
        for (const auto& g : f.boxes) clear = clear && iou(b, g) < 0.1;
        if (clear) return b;
    }
    return std::nullopt;
}

Tensor<float> maybe_resize(Tensor<float> patch, std::size_t size) {
    if (patch.dim(1) == size && patch.dim(2) == size) return patch;
    return resize_bilinear(patch, size, size);
}

}  // namespace

ClassificationSet make_classification_set(const SceneConfig& config, std::size_t spc, std::size_t val_per_class,
                                          std::size_t test_per_class, std::size_t size, std::size_t max_frames) {
    config.validate();
    if (spc < 1) throw ConfigError("samples per class must be >= 1");
    const std::size_t total_classes = config.classes + 1;
    const std::size_t need = spc + val_per_class + test_per_class;
    std::vector<std::vector<Tensor<float>>> buckets(total_classes);
    auto full = [&] {
        return std::all_of(buckets.begin(), buckets.end(), [&](const auto& b) { return b.size() >= need; });
    };
    Rng bg_rng(derive_seed(config.seed, 0xB6));
    std::size_t frame = 0;
    for (; frame < max_frames && !full(); ++frame) {
        const SonarFrame f = generate_frame(config, frame);
        for (const auto& b : f.boxes) {
            auto& bucket = buckets[static_cast<std::size_t>(*b.label)];
            if (bucket.size() < need) bucket.push_back(maybe_resize(crop(f.image, centered_window(b, config.window)), size));
        }
        auto& bg = buckets[config.classes];
        for (int k = 0; k < 2 && bg.size() < need; ++k) {
            if (auto w = background_window(config, f, bg_rng)) bg.push_back(maybe_resize(crop(f.image, *w), size));
        }
    }
    if (!full()) throw DataError("scene supply exhausted before every class reached " + std::to_string(need) + " samples");

    ClassificationSet set;
    set.classes = total_classes;
    for (std::size_t c = 0; c < total_classes; ++c) {
        for (std::size_t i = 0; i < need; ++i) {
            PatchSet& dst = i < spc ? set.train : i < spc + val_per_class ? set.val : set.test;
            dst.patches.push_back(std::move(buckets[c][i]));
            dst.labels.push_back(c);
        }
    }
    return set;
}

std::string to_string(PairType t) {
    switch (t) {
        case PairType::Positive: return "positive";
        case PairType::NegativeObject: return "negative_object";
        case PairType::NegativeBackground: return "negative_background";
    }
    return "?";
}

namespace {

struct Instance {
    Tensor<float> patch;
    std::size_t cls;
};

std::vector<PatchPair> build_pairs(const std::vector<Instance>& objects, const std::vector<Tensor<float>>& backgrounds,
                                   Rng& rng) {
    std::vector<PatchPair> pairs;
    std::vector<std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < objects.size(); ++i) {
        if (objects[i].cls >= by_class.size()) by_class.resize(objects[i].cls + 1);
        by_class[objects[i].cls].push_back(i);
    }
    auto pick = [&](const std::vector<std::size_t>& pool) {
        return pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
    };
    for (std::size_t i = 0; i < objects.size(); ++i) {
        const auto& same = by_class[objects[i].cls];
        std::vector<std::size_t> others;
        for (std::size_t j = 0; j < objects.size(); ++j)
            if (objects[j].cls != objects[i].cls) others.push_back(j);
        std::vector<std::size_t> mates;
        for (std::size_t j : same)
            if (j != i) mates.push_back(j);
        if (mates.empty()) throw DataError("class with a single instance cannot form positive pairs");
        if (others.empty()) throw DataError("matching pairs need at least two classes");
        for (int k = 0; k < 10; ++k) pairs.push_back({objects[i].patch, objects[pick(mates)].patch, 1, PairType::Positive});
        for (int k = 0; k < 5; ++k)
            pairs.push_back({objects[i].patch, objects[pick(others)].patch, 0, PairType::NegativeObject});
        for (int k = 0; k < 5; ++k) {
            const auto& bg = backgrounds[std::uniform_int_distribution<std::size_t>(0, backgrounds.size() - 1)(rng)];
            pairs.push_back({objects[i].patch, bg, 0, PairType::NegativeBackground});
        }
    }
    return pairs;
}

}  // namespace

MatchingSet make_matching_set(const SceneConfig& base, std::size_t instances_per_class, MatchingSplit split,
                              std::uint64_t seed) {
    SceneConfig config = base;
    config.seed = seed;
    config.validate();
    if (config.classes < 2) throw ConfigError("matching needs at least two classes");
    if (instances_per_class < 2) throw ConfigError("matching needs at least two instances per class");

    std::vector<Instance> objects;
    std::vector<std::size_t> per_class(config.classes, 0);
    std::vector<Tensor<float>> backgrounds;
    const std::size_t bg_needed = std::max<std::size_t>(8, instances_per_class * config.classes / 2);
    Rng rng(derive_seed(seed, 0x3A7C));
    for (std::size_t frame = 0; frame < 100000; ++frame) {
        const bool objects_done =
            std::all_of(per_class.begin(), per_class.end(), [&](std::size_t n) { return n >= instances_per_class; });
        if (objects_done && backgrounds.size() >= bg_needed) break;
        const SonarFrame f = generate_frame(config, frame);
        for (const auto& b : f.boxes) {
            const std::size_t c = static_cast<std::size_t>(*b.label);
            if (per_class[c] < instances_per_class) {
                objects.push_back({crop(f.image, centered_window(b, config.window)), c});
                ++per_class[c];
            }
        }
        if (backgrounds.size() < bg_needed)
            if (auto w = background_window(config, f, rng)) backgrounds.push_back(crop(f.image, *w));
    }

    MatchingSet set;
    if (split == MatchingSplit::Shared) {
        auto pairs = build_pairs(objects, backgrounds, rng);
        std::shuffle(pairs.begin(), pairs.end(), rng);
        const std::size_t n_train = pairs.size() * 70 / 100, n_val = pairs.size() * 15 / 100;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            auto& dst = i < n_train ? set.train : i < n_train + n_val ? set.val : set.test;
            dst.push_back(std::move(pairs[i]));
        }
        return set;
    }

    // Disjoint: partition classes 60/20/20 (at least two classes per split).
    std::vector<std::size_t> classes(config.classes);
    std::iota(classes.begin(), classes.end(), 0);
    std::shuffle(classes.begin(), classes.end(), rng);
    const std::size_t n_test = std::max<std::size_t>(2, config.classes / 5);
    const std::size_t n_val = n_test;
    if (config.classes < n_test + n_val + 2) throw ConfigError("disjoint matching split needs at least 6 classes");
    std::vector<int> split_of(config.classes);
    for (std::size_t i = 0; i < classes.size(); ++i)
        split_of[classes[i]] = i < classes.size() - n_val - n_test ? 0 : i < classes.size() - n_test ? 1 : 2;
    for (int s = 0; s < 3; ++s) {
        std::vector<Instance> objs;
        for (const auto& o : objects)
            if (split_of[o.cls] == s) objs.push_back(o);
        std::vector<Tensor<float>> bgs;
        for (std::size_t i = 0; i < backgrounds.size(); ++i)
            if (static_cast<int>(i % 3) == s) bgs.push_back(backgrounds[i]);
        auto pairs = build_pairs(objs, bgs, rng);
        std::shuffle(pairs.begin(), pairs.end(), rng);
        (s == 0 ? set.train : s == 1 ? set.val : set.test) = std::move(pairs);
    }
    return set;
}

Dataset<float> pairs_to_dataset(std::span<const PatchPair> pairs, bool two_channel, bool one_hot_targets) {
    if (pairs.empty()) throw DataError("empty pair set");
    const Shape ps = pairs[0].a.shape();
    const std::size_t n = pairs.size(), plane = num_elements(ps);
    Dataset<float> d;
    if (two_channel) {
        Tensor<float> x({n, 2, ps[1], ps[2]});
        for (std::size_t i = 0; i < n; ++i) {
            std::copy(pairs[i].a.raw(), pairs[i].a.raw() + plane, x.raw() + (2 * i) * plane);
            std::copy(pairs[i].b.raw(), pairs[i].b.raw() + plane, x.raw() + (2 * i + 1) * plane);
        }
        d.inputs.push_back(std::move(x));
    } else {
        Tensor<float> a({n, 1, ps[1], ps[2]}), b({n, 1, ps[1], ps[2]});
        for (std::size_t i = 0; i < n; ++i) {
            std::copy(pairs[i].a.raw(), pairs[i].a.raw() + plane, a.raw() + i * plane);
            std::copy(pairs[i].b.raw(), pairs[i].b.raw() + plane, b.raw() + i * plane);
        }
        d.inputs.push_back(std::move(a));
        d.inputs.push_back(std::move(b));
    }
    if (one_hot_targets) {
        std::vector<std::size_t> labels;
        for (const auto& p : pairs) labels.push_back(static_cast<std::size_t>(p.label));
        d.targets = one_hot<float>(labels, 2);
    } else {
        d.targets = Tensor<float>({n, 1});
        for (std::size_t i = 0; i < n; ++i) d.targets[i] = static_cast<float>(pairs[i].label);
    }
    return d;
}

std::vector<ObjectnessSample> make_objectness_set(std::span<const SonarFrame> frames, double eps, int stride,
                                                  std::size_t positives_per_frame, double zero_ratio,
                                                  std::uint64_t seed) {
    Rng rng(seed);
    std::vector<ObjectnessSample> out;
    for (const auto& f : frames) {
        const auto windows = sliding_windows(f.image.dim(1), f.image.dim(2), f.fov, 96, stride);
        const auto labels = label_windows(windows, f.boxes, eps);
        std::vector<std::size_t> pos, zero;
        for (std::size_t i = 0; i < windows.size(); ++i) (labels[i] > 0 ? pos : zero).push_back(i);
        std::shuffle(pos.begin(), pos.end(), rng);
        std::shuffle(zero.begin(), zero.end(), rng);
        if (pos.size() > positives_per_frame) pos.resize(positives_per_frame);
        const std::size_t n_zero =
            std::min(zero.size(), static_cast<std::size_t>(std::ceil(zero_ratio * std::max<std::size_t>(pos.size(), 1))));
        zero.resize(n_zero);
        std::vector<std::size_t> keep = pos;
        keep.insert(keep.end(), zero.begin(), zero.end());
        std::sort(keep.begin(), keep.end());
        for (std::size_t i : keep) {
            int cls = -1;
            double best = 0;
            for (const auto& g : f.boxes) {
                const double o = iou(windows[i], g);
                if (labels[i] > 0 && o > best && g.label) {
                    best = o;
                    cls = *g.label;
                }
            }
            Tensor<float> p = crop(f.image, windows[i]);
            out.push_back({flip_lr(p), labels[i], cls});
            out.push_back({flip_ud(p), labels[i], cls});
            out.push_back({std::move(p), labels[i], cls});
        }
    }
    return out;
}

Dataset<float> objectness_to_dataset(std::span<const ObjectnessSample> samples) {
    if (samples.empty()) throw DataError("empty objectness set");
    std::vector<const Tensor<float>*> patches;
    Dataset<float> d;
    d.targets = Tensor<float>({samples.size(), 1});
    for (std::size_t i = 0; i < samples.size(); ++i) {
        patches.push_back(&samples[i].patch);
        d.targets[i] = static_cast<float>(samples[i].objectness);
    }
    d.inputs.push_back(stack(std::span<const Tensor<float>* const>(patches)));
    return d;
}

}  // namespace sonarp
