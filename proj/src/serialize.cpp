#include "vitdp/serialize.hpp"

#include <fstream>

#include "vitdp/errors.hpp"
#include "vitdp/frame.hpp"

namespace vitdp {

namespace {

constexpr char kMagic[4] = {'V', 'I', 'T', 'P'};
constexpr uint32_t kVersion = 1;

void push_u32(std::vector<uint8_t>& out, uint32_t v) {
    uint8_t b[4];
    store_u32_le(b, v);
    out.insert(out.end(), b, b + 4);
}

uint32_t pull_u32(const std::vector<uint8_t>& in, size_t& off) {
    if (off + 4 > in.size()) throw FormatError("checkpoint truncated");
    const uint32_t v = load_u32_le(in.data() + off);
    off += 4;
    return v;
}

}  // namespace

std::vector<uint8_t> serialize_params(const ParamSet<float>& params) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    push_u32(out, kVersion);
    push_u32(out, static_cast<uint32_t>(params.entries.size()));
    for (const auto& [name, t] : params.entries) {
        push_u32(out, static_cast<uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        push_u32(out, static_cast<uint32_t>(t.ndim()));
        for (int64_t d = 0; d < t.ndim(); ++d) push_u32(out, static_cast<uint32_t>(t.dim(d)));
        const size_t base = out.size();
        out.resize(base + t.data.size() * 4);
        for (size_t i = 0; i < t.data.size(); ++i)
            store_f32_le(out.data() + base + i * 4, t.data[i]);
    }
    return out;
}

ParamSet<float> deserialize_params(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 12 || !std::equal(kMagic, kMagic + 4, bytes.begin()))
        throw FormatError("not a checkpoint (bad magic)");
    size_t off = 4;
    const uint32_t version = pull_u32(bytes, off);
    if (version != kVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const uint32_t count = pull_u32(bytes, off);
    ParamSet<float> p;
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = pull_u32(bytes, off);
        if (off + name_len > bytes.size()) throw FormatError("checkpoint truncated");
        std::string name(bytes.begin() + static_cast<std::ptrdiff_t>(off),
                         bytes.begin() + static_cast<std::ptrdiff_t>(off + name_len));
        off += name_len;
        const uint32_t ndim = pull_u32(bytes, off);
        if (ndim == 0 || ndim > 8) throw FormatError("bad tensor rank " + std::to_string(ndim));
        std::vector<int64_t> shape;
        int64_t numel = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            const uint32_t dim = pull_u32(bytes, off);
            if (dim == 0) throw FormatError("zero dimension in checkpoint");
            shape.push_back(static_cast<int64_t>(dim));
            numel *= dim;
        }
        if (off + static_cast<size_t>(numel) * 4 > bytes.size())
            throw FormatError("checkpoint truncated");
        Tensor<float> t(shape);
        for (int64_t j = 0; j < numel; ++j)
            t.data[static_cast<size_t>(j)] = load_f32_le(bytes.data() + off + j * 4);
        off += static_cast<size_t>(numel) * 4;
        p.add(std::move(name), std::move(t));
    }
    if (off != bytes.size()) throw FormatError("trailing bytes in checkpoint");
    return p;
}

void save_checkpoint(const std::string& path, const ParamSet<float>& params) {
    const std::vector<uint8_t> bytes = serialize_params(params);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path);
}

ParamSet<float> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return deserialize_params(bytes);
}

uint64_t param_fingerprint(const ParamSet<float>& params) {
    uint64_t h = 1469598103934665603ull;
    auto mix = [&h](uint8_t b) {
        h ^= b;
        h *= 1099511628211ull;
    };
    for (const auto& [name, t] : params.entries) {
        for (char c : name) mix(static_cast<uint8_t>(c));
        for (float v : t.data) {
            uint8_t b[4];
            store_f32_le(b, v);
            for (int i = 0; i < 4; ++i) mix(b[i]);
        }
    }
    return h;
}

}  // namespace vitdp
