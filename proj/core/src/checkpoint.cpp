#include "mlmkit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mlmkit/error.hpp"

namespace mlmkit {
namespace {

constexpr std::uint64_t kMaxString = 1u << 24;
constexpr std::uint64_t kMaxRank = 8;

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}

    void u32(std::uint32_t v) {
        char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
        out_.write(b, 4);
    }
    void u64(std::uint64_t v) {
        char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
        out_.write(b, 8);
    }
    void str(std::string_view s) {
        u64(s.size());
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    void floats(std::span<const float> v) {
        for (float f : v) u32(std::bit_cast<std::uint32_t>(f));
    }

private:
    std::ostream& out_;
};

class Reader {
public:
    Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

    void bytes(char* dst, std::size_t n, const char* what) {
        in_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            fail(std::string("truncated while reading ") + what);
        }
        offset_ += n;
    }
    std::uint32_t u32(const char* what) {
        unsigned char b[4];
        bytes(reinterpret_cast<char*>(b), 4, what);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }
    std::uint64_t u64(const char* what) {
        unsigned char b[8];
        bytes(reinterpret_cast<char*>(b), 8, what);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }
    std::string str(const char* what) {
        const std::uint64_t n = u64(what);
        if (n > kMaxString) {
            fail(std::string(what) + " length " + std::to_string(n) + " is implausible");
        }
        std::string s(n, '\0');
        bytes(s.data(), n, what);
        return s;
    }
    [[noreturn]] void fail(const std::string& what) const {
        throw Error("checkpoint " + path_ + ": " + what + " (offset " + std::to_string(offset_) + ")");
    }
    bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

private:
    std::istream& in_;
    std::string path_;
    std::size_t offset_ = 0;
};

}  // namespace

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path) {
    std::ostringstream buf(std::ios::binary);
    Writer w(buf);
    buf.write(kCheckpointMagic.data(), static_cast<std::streamsize>(kCheckpointMagic.size()));
    w.u32(kCheckpointVersion);
    w.str(model.config().to_key_values().render());
    w.u64(model.parameters().size());
    for (const auto& p : model.parameters()) {
        w.str(p.name);
        w.u64(p.tensor.rank());
        for (std::size_t d : p.tensor.shape()) w.u64(d);
        w.floats(p.tensor.data());
    }
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("cannot write checkpoint " + path.string());
        }
        const std::string bytes = buf.str();
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw Error("failed writing checkpoint " + path.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

Model<float> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open checkpoint " + path.string());
    }
    Reader r(in, path.string());
    char magic[4];
    r.bytes(magic, 4, "magic");
    if (std::string_view(magic, 4) != kCheckpointMagic) {
        r.fail("bad magic, expected \"" + std::string(kCheckpointMagic) + "\"");
    }
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion) {
        r.fail("unsupported version " + std::to_string(version));
    }
    const std::string config_text = r.str("config");
    ModelConfig config;
    try {
        config = ModelConfig::parse(config_text, path.string() + ":config");
        config.validate();
    } catch (const Error& e) {
        r.fail(std::string("invalid config: ") + e.what());
    }
    const auto layout = Model<float>::layout(config);
    const std::uint64_t count = r.u64("tensor count");
    if (count != layout.size()) {
        r.fail("expected " + std::to_string(layout.size()) + " tensors, found " + std::to_string(count));
    }
    std::vector<NamedTensor<float>> params;
    params.reserve(count);
    for (std::uint64_t t = 0; t < count; ++t) {
        std::string name = r.str("tensor name");
        const std::uint64_t rank = r.u64("tensor rank");
        if (rank == 0 || rank > kMaxRank) {
            r.fail("tensor " + name + " has invalid rank " + std::to_string(rank));
        }
        num::Shape shape(rank);
        for (auto& d : shape) d = r.u64("tensor dimension");
        const auto& [want_name, want_shape] = layout[t];
        if (name != want_name || shape != want_shape) {
            r.fail("tensor " + std::to_string(t) + " is " + name + " " + num::to_string(shape) + ", expected " +
                   want_name + " " + num::to_string(want_shape));
        }
        std::vector<float> data(num::numel(shape));
        for (float& f : data) f = std::bit_cast<float>(r.u32("tensor data"));
        params.push_back({std::move(name), num::Tensor<float>::from(std::move(shape), std::move(data), true)});
    }
    if (!r.at_end()) {
        r.fail("trailing bytes after the last tensor");
    }
    return Model<float>::from_parameters(config, std::move(params));
}

}  // namespace mlmkit
