#include "sonarp/dataset_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <memory>

namespace sonarp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// libpng reports errors by longjmp, so the encoder keeps only trivial locals.
bool encode_png(std::FILE* fp, png_uint_32 h, png_uint_32 w, int bit_depth, const std::uint8_t* packed,
                std::size_t row_bytes) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) return false;
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        return false;
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, w, h, bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (png_uint_32 y = 0; y < h; ++y) png_write_row(png, packed + y * row_bytes);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return true;
}

// One 8-bit sample per pixel in, PNG at the given bit depth (8 or 1) out.
void write_png(const fs::path& path, std::size_t h, std::size_t w, int bit_depth,
               const std::vector<std::uint8_t>& samples) {
    const std::size_t row_bytes = bit_depth == 8 ? w : (w + 7) / 8;
    std::vector<std::uint8_t> packed(h * row_bytes, 0);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            if (bit_depth == 8) {
                packed[y * row_bytes + x] = samples[y * w + x];
            } else if (samples[y * w + x]) {
                packed[y * row_bytes + x / 8] |= static_cast<std::uint8_t>(0x80 >> (x % 8));
            }
        }
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw DataError("cannot write " + path.string());
    if (!encode_png(fp.get(), static_cast<png_uint_32>(h), static_cast<png_uint_32>(w), bit_depth, packed.data(),
                    row_bytes))
        throw DataError("PNG encoding failed: " + path.string());
}

// Any PNG decoded to one 8-bit gray sample per pixel (1-bit images become
// 0/255).
std::vector<std::uint8_t> read_png(const fs::path& path, std::size_t& h, std::size_t& w) {
    if (!fs::exists(path)) throw DataError("missing image file " + path.string());
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw DataError("corrupt PNG " + path.string() + ": " + image.message);
    image.format = PNG_FORMAT_GRAY;
    h = image.height;
    w = image.width;
    std::vector<std::uint8_t> out(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, out.data(), 0, nullptr)) {
        png_image_free(&image);
        throw DataError("corrupt PNG " + path.string() + ": " + image.message);
    }
    return out;
}

}  // namespace

void write_png_gray(const fs::path& path, const Tensor<float>& image) {
    if (image.rank() != 3 || image.dim(0) != 1) throw DimensionError("grayscale PNG needs a [1, H, W] tensor");
    const std::size_t h = image.dim(1), w = image.dim(2);
    std::vector<std::uint8_t> samples(h * w);
    for (std::size_t i = 0; i < h * w; ++i)
        samples[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image[i], 0.0f, 1.0f) * 255.0f));
    write_png(path, h, w, 8, samples);
}

Tensor<float> read_png_gray(const fs::path& path) {
    std::size_t h = 0, w = 0;
    const auto samples = read_png(path, h, w);
    Tensor<float> img({1, h, w});
    for (std::size_t i = 0; i < h * w; ++i) img[i] = samples[i] / 255.0f;
    return img;
}

void save_dataset(const fs::path& dir, const SonarDataset& data) {
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    {
        std::ofstream cfg(dir / "config.json");
        cfg << data.config.to_json() << "\n";
        if (!cfg) throw DataError("cannot write " + (dir / "config.json").string());
    }
    std::ofstream ann(dir / "annotations.jsonl");
    if (!ann) throw DataError("cannot write " + (dir / "annotations.jsonl").string());
    for (const auto& f : data.frames) {
        if (f.id.empty() || f.id.find('/') != std::string::npos) throw DataError("frame ids must be plain file names");
        const std::string image = "images/" + f.id + ".png", mask = "masks/" + f.id + ".png";
        write_png_gray(dir / image, f.image);
        write_png(dir / mask, f.fov.height, f.fov.width, 1, f.fov.pixels);
        json boxes = json::array();
        for (const auto& b : f.boxes) {
            json jb{{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}};
            jb["label"] = b.label ? json(*b.label) : json(nullptr);
            boxes.push_back(jb);
        }
        ann << json{{"id", f.id}, {"image", image}, {"mask", mask}, {"boxes", boxes}}.dump() << "\n";
    }
}

SonarDataset load_dataset(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("dataset directory not found: " + dir.string());
    SonarDataset data;
    {
        std::ifstream cfg(dir / "config.json");
        if (!cfg) throw DataError("missing config.json in " + dir.string());
        std::string text((std::istreambuf_iterator<char>(cfg)), std::istreambuf_iterator<char>());
        try {
            data.config = SceneConfig::from_json(text);
        } catch (const ConfigError& e) {
            throw DataError(std::string("config.json: ") + e.what());
        }
    }
    std::ifstream ann(dir / "annotations.jsonl");
    if (!ann) throw DataError("missing annotations.jsonl in " + dir.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ann, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        SonarFrame f;
        std::string image, mask;
        try {
            const json j = json::parse(line);
            f.id = j.at("id").get<std::string>();
            image = j.at("image").get<std::string>();
            mask = j.at("mask").get<std::string>();
            for (const auto& jb : j.at("boxes")) {
                BoundingBox b{jb.at("x").get<int>(), jb.at("y").get<int>(), jb.at("w").get<int>(),
                              jb.at("h").get<int>(), std::nullopt, std::nullopt};
                if (jb.contains("label") && !jb.at("label").is_null()) b.label = jb.at("label").get<int>();
                b.validate();
                f.boxes.push_back(b);
            }
        } catch (const json::exception& e) {
            throw ParseError(std::string("annotations.jsonl: ") + e.what(), lineno);
        } catch (const DomainError& e) {
            throw ParseError(std::string("annotations.jsonl: ") + e.what(), lineno);
        }
        f.image = read_png_gray(dir / image);
        std::size_t mh = 0, mw = 0;
        const auto m = read_png(dir / mask, mh, mw);
        if (mh != f.image.dim(1) || mw != f.image.dim(2)) throw DataError("mask and image extents differ for " + f.id);
        f.fov = FovMask::full(mh, mw, false);
        for (std::size_t i = 0; i < m.size(); ++i) f.fov.pixels[i] = m[i] >= 128 ? 1 : 0;
        data.frames.push_back(std::move(f));
    }
    return data;
}

}  // namespace sonarp
