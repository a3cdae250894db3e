#include "sonarp/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace sonarp {

static_assert(std::endian::native == std::endian::little, "model IO assumes a little-endian host");

namespace {

template <typename U>
void put(std::string& out, U v) {
    char buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    out.append(buf, sizeof(U));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <typename U>
    U get() {
        U v;
        std::memcpy(&v, take(sizeof(U)), sizeof(U));
        return v;
    }
    const char* take(std::size_t n) {
        if (bytes_.size() - pos_ < n) {
            throw TruncatedFileError("model file truncated at byte " + std::to_string(pos_) + " (needed " +
                                     std::to_string(n) + " more)");
        }
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_model(const Network<float>& net) {
    std::string out = "FLSN";
    put<std::uint16_t>(out, kModelVersion);
    const std::string desc = net.descriptor();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(desc.size()));
    out += desc;
    auto tensors = net.parameters();
    for (auto& b : net.buffers()) tensors.push_back(b);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        put<std::uint16_t>(out, static_cast<std::uint16_t>(t->name.size()));
        out += t->name;
        put<std::uint8_t>(out, 0);
        put<std::uint8_t>(out, static_cast<std::uint8_t>(t->value.rank()));
        for (auto e : t->value.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(e));
        out.append(reinterpret_cast<const char*>(t->value.raw()), t->value.size() * sizeof(float));
    }
    return out;
}

Network<float> deserialize_model(const std::string& bytes) {
    Reader r(bytes);
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "FLSN", 4) != 0) {
        throw MagicMismatchError("not a model file (bad magic)");
    }
    r.take(4);
    const auto version = r.get<std::uint16_t>();
    if (version != kModelVersion) {
        throw VersionMismatchError("model version " + std::to_string(version) + " unsupported (expected " +
                                   std::to_string(kModelVersion) + ")");
    }
    const auto desc_len = r.get<std::uint32_t>();
    const std::string desc(r.take(desc_len), desc_len);
    Network<float> net = Network<float>::from_descriptor(desc);

    std::map<std::string, ParamPtr<float>> by_name;
    for (auto& p : net.parameters()) by_name[p->name] = p;
    for (auto& p : net.buffers()) by_name[p->name] = p;

    const auto count = r.get<std::uint32_t>();
    if (count != by_name.size()) {
        throw FormatError("model has " + std::to_string(count) + " tensors, architecture expects " +
                          std::to_string(by_name.size()));
    }
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = r.get<std::uint16_t>();
        const std::string name(r.take(name_len), name_len);
        const auto dtype = r.get<std::uint8_t>();
        if (dtype != 0) throw FormatError("tensor '" + name + "' has unsupported dtype " + std::to_string(dtype));
        const auto rank = r.get<std::uint8_t>();
        Shape shape;
        for (std::uint8_t k = 0; k < rank; ++k) shape.push_back(r.get<std::uint32_t>());
        auto it = by_name.find(name);
        if (it == by_name.end()) throw FormatError("unexpected tensor '" + name + "'");
        if (it->second->value.shape() != shape) {
            throw FormatError("tensor '" + name + "' has shape " + to_string(shape) + ", expected " +
                              to_string(it->second->value.shape()));
        }
        const std::size_t n = num_elements(shape) * sizeof(float);
        std::memcpy(it->second->value.raw(), r.take(n), n);
    }
    if (!r.done()) throw FormatError("trailing bytes after model data");
    return net;
}

void save_model(const Network<float>& net, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path.string());
    const std::string bytes = serialize_model(net);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("failed writing " + path.string());
}

Network<float> load_model(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return deserialize_model(ss.str());
}

}  // namespace sonarp
