#include "vitdp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "vitdp/errors.hpp"
#include "vitdp/rng.hpp"

namespace vitdp {

namespace {

constexpr int64_t kCifarSide = 32;
constexpr int64_t kCifarPixels = 3 * kCifarSide * kCifarSide;  // 3072

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    in.seekg(0, std::ios::end);
    const std::streamoff size = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<uint8_t> buf(static_cast<size_t>(size));
    if (size > 0) in.read(reinterpret_cast<char*>(buf.data()), size);
    if (!in) throw IoError("failed reading " + path);
    return buf;
}

}  // namespace

Dataset load_cifar_binary(const std::string& path, CifarVariant variant) {
    namespace fs = std::filesystem;
    std::vector<std::string> files;
    std::error_code ec;
    if (fs::is_directory(path, ec)) {
        for (const auto& entry : fs::directory_iterator(path)) {
            if (entry.is_regular_file() && entry.path().extension() == ".bin")
                files.push_back(entry.path().string());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) throw IoError("no .bin files in " + path);
    } else if (fs::is_regular_file(path, ec)) {
        files.push_back(path);
    } else {
        throw IoError("dataset path not found: " + path);
    }

    const bool fine = variant == CifarVariant::cifar100;
    const int64_t label_bytes = fine ? 2 : 1;
    const int64_t record = label_bytes + kCifarPixels;
    const int32_t class_count = fine ? 100 : 10;

    int64_t total = 0;
    std::vector<std::vector<uint8_t>> blobs;
    for (const std::string& f : files) {
        std::vector<uint8_t> bytes = read_file(f);
        if (bytes.empty() || static_cast<int64_t>(bytes.size()) % record != 0)
            throw FormatError(f + ": " + std::to_string(bytes.size()) +
                              " bytes is not a multiple of the " + std::to_string(record) +
                              "-byte record");
        total += static_cast<int64_t>(bytes.size()) / record;
        blobs.push_back(std::move(bytes));
    }

    Dataset ds;
    ds.class_count = class_count;
    ds.source = fine ? "cifar100" : "cifar10";
    ds.images = Tensor<float>({total, 3, kCifarSide, kCifarSide});
    ds.labels.reserve(static_cast<size_t>(total));

    int64_t out = 0;
    for (size_t b = 0; b < blobs.size(); ++b) {
        const std::vector<uint8_t>& bytes = blobs[b];
        const int64_t count = static_cast<int64_t>(bytes.size()) / record;
        for (int64_t r = 0; r < count; ++r) {
            const uint8_t* rec = bytes.data() + r * record;
            const int32_t label = rec[fine ? 1 : 0];
            if (label >= class_count)
                throw FormatError(files[b] + ": label " + std::to_string(label) + " >= " +
                                  std::to_string(class_count));
            ds.labels.push_back(label);
            float* dst = ds.images.ptr() + out * kCifarPixels;
            const uint8_t* px = rec + label_bytes;
            for (int64_t i = 0; i < kCifarPixels; ++i)
                dst[i] = static_cast<float>(px[i]) / 255.0f;
            ++out;
        }
    }
    return ds;
}

Dataset make_synthetic(int64_t n, int32_t class_count, int64_t image_size, uint64_t seed) {
    if (class_count < 2) throw InputError("synthetic dataset needs at least 2 classes");
    if (n < class_count)
        throw InputError("synthetic dataset of " + std::to_string(n) + " samples cannot cover " +
                         std::to_string(class_count) + " classes");
    if (image_size < 2) throw InputError("image size too small");

    const int64_t g = static_cast<int64_t>(std::ceil(std::sqrt(static_cast<double>(class_count))));
    const double cell = static_cast<double>(image_size) / static_cast<double>(g);
    const double sigma = cell / 2.8;
    const double jitter = cell / 6.0;

    Dataset ds;
    ds.class_count = class_count;
    ds.source = "synthetic";
    ds.images = Tensor<float>({n, 3, image_size, image_size});
    ds.labels.resize(static_cast<size_t>(n));

    Rng rng(seed);
    const int64_t plane = image_size * image_size;
    for (int64_t i = 0; i < n; ++i) {
        const int32_t c = static_cast<int32_t>(i % class_count);
        ds.labels[static_cast<size_t>(i)] = c;
        const double cx = (static_cast<double>(c % g) + 0.5) * cell + rng.uniform(-jitter, jitter);
        const double cy = (static_cast<double>(c / g) + 0.5) * cell + rng.uniform(-jitter, jitter);
        float* img = ds.images.ptr() + i * 3 * plane;
        for (int64_t y = 0; y < image_size; ++y)
            for (int64_t x = 0; x < image_size; ++x) {
                const double dx = static_cast<double>(x) - cx;
                const double dy = static_cast<double>(y) - cy;
                const double blob = 0.9 * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                for (int64_t ch = 0; ch < 3; ++ch) {
                    const double v = blob + 0.05 * rng.gaussian();
                    img[ch * plane + y * image_size + x] =
                        static_cast<float>(std::clamp(v, 0.0, 1.0));
                }
            }
    }
    return ds;
}

Dataset shard(const Dataset& ds, const ShardSpec& spec) {
    if (spec.world_size < 1 || spec.rank < 0 || spec.rank >= spec.world_size)
        throw ConfigError("bad shard spec: rank " + std::to_string(spec.rank) + " of " +
                          std::to_string(spec.world_size));
    const int64_t n = ds.size();
    int64_t per = 0;
    if (spec.mode == ShardMode::strong) {
        per = n / spec.world_size;
    } else {
        if (spec.weak_fraction <= 0.0)
            throw ConfigError("weak_fraction must be positive");
        if (static_cast<double>(spec.world_size) * spec.weak_fraction > 1.0 + 1e-12)
            throw ConfigError("weak shards overflow the dataset: " +
                              std::to_string(spec.world_size) + " x " +
                              std::to_string(spec.weak_fraction) + " > 1");
        per = static_cast<int64_t>(static_cast<double>(n) * spec.weak_fraction);
    }
    if (per < 1) throw ConfigError("shard would be empty (" + std::to_string(n) + " samples, world " +
                                   std::to_string(spec.world_size) + ")");

    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(spec.seed);
    rng.shuffle(order);

    const int64_t lo = static_cast<int64_t>(spec.rank) * per;
    Dataset out;
    out.class_count = ds.class_count;
    out.source = ds.source;
    const int64_t px = ds.images.numel() / n;
    out.images = Tensor<float>({per, ds.images.dim(1), ds.images.dim(2), ds.images.dim(3)});
    out.labels.resize(static_cast<size_t>(per));
    for (int64_t i = 0; i < per; ++i) {
        const int64_t src = order[static_cast<size_t>(lo + i)];
        std::copy(ds.images.ptr() + src * px, ds.images.ptr() + (src + 1) * px,
                  out.images.ptr() + i * px);
        out.labels[static_cast<size_t>(i)] = ds.labels[static_cast<size_t>(src)];
    }
    return out;
}

std::vector<int64_t> epoch_order(int64_t n, uint64_t seed, int64_t epoch) {
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed ^ static_cast<uint64_t>(epoch));
    rng.shuffle(order);
    return order;
}

Batch take(const Dataset& ds, const int64_t* idx, int64_t count) {
    const int64_t px = ds.images.numel() / ds.size();
    Batch b;
    b.images = Tensor<float>({count, ds.images.dim(1), ds.images.dim(2), ds.images.dim(3)});
    b.labels.resize(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) {
        const int64_t src = idx[i];
        std::copy(ds.images.ptr() + src * px, ds.images.ptr() + (src + 1) * px,
                  b.images.ptr() + i * px);
        b.labels[static_cast<size_t>(i)] = ds.labels[static_cast<size_t>(src)];
    }
    return b;
}

std::vector<Batch> batches(const Dataset& ds, int64_t micro_batch, uint64_t seed, int64_t epoch) {
    if (micro_batch < 1) throw ConfigError("micro batch must be at least 1");
    if (micro_batch > ds.size())
        throw ConfigError("micro batch " + std::to_string(micro_batch) + " exceeds shard of " +
                          std::to_string(ds.size()));
    const std::vector<int64_t> order = epoch_order(ds.size(), seed, epoch);
    const int64_t count = ds.size() / micro_batch;
    std::vector<Batch> out;
    out.reserve(static_cast<size_t>(count));
    for (int64_t b = 0; b < count; ++b)
        out.push_back(take(ds, order.data() + b * micro_batch, micro_batch));
    return out;
}

}  // namespace vitdp
