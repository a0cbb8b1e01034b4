#include "vitdp/vit.hpp"

#include <algorithm>
#include <cmath>

#include "vitdp/errors.hpp"
#include "vitdp/rng.hpp"
#include "vitdp/tape.hpp"

namespace vitdp {

void ViTConfig::validate() const {
    if (image_size <= 0 || channels <= 0 || patch_size <= 0 || embed_dim <= 0 || num_heads <= 0 ||
        depth <= 0 || mlp_ratio <= 0)
        throw ConfigError("model dimensions must be positive");
    if (image_size % patch_size != 0)
        throw ConfigError("image_size " + std::to_string(image_size) +
                          " not divisible by patch_size " + std::to_string(patch_size));
    if (embed_dim % num_heads != 0)
        throw ConfigError("embed_dim " + std::to_string(embed_dim) + " not divisible by num_heads " +
                          std::to_string(num_heads));
    if (num_classes < 2)
        throw ConfigError("num_classes must be at least 2, got " + std::to_string(num_classes));
}

int64_t seq_len(const ViTConfig& cfg) {
    cfg.validate();
    const int64_t side = cfg.image_size / cfg.patch_size;
    return side * side + 1;
}

template <typename T>
void ParamSet<T>::add(std::string name, Tensor<T> t) {
    entries.emplace_back(std::move(name), std::move(t));
}

template <typename T>
int64_t ParamSet<T>::total_elems() const {
    int64_t n = 0;
    for (const auto& [name, t] : entries) n += t.numel();
    return n;
}

template <typename T>
Tensor<T>& ParamSet<T>::at(const std::string& name) {
    for (auto& [k, t] : entries)
        if (k == name) return t;
    throw UsageError("no parameter named " + name);
}

template <typename T>
const Tensor<T>& ParamSet<T>::at(const std::string& name) const {
    for (const auto& [k, t] : entries)
        if (k == name) return t;
    throw UsageError("no parameter named " + name);
}

template <typename T>
bool ParamSet<T>::has(const std::string& name) const {
    for (const auto& [k, t] : entries)
        if (k == name) return true;
    return false;
}

template <typename T>
std::vector<T> ParamSet<T>::flatten() const {
    std::vector<T> out;
    out.reserve(static_cast<size_t>(total_elems()));
    for (const auto& [name, t] : entries) out.insert(out.end(), t.data.begin(), t.data.end());
    return out;
}

template <typename T>
void ParamSet<T>::unflatten(const std::vector<T>& flat) {
    if (static_cast<int64_t>(flat.size()) != total_elems())
        throw ShapeError("unflatten: " + std::to_string(flat.size()) + " values for " +
                         std::to_string(total_elems()) + " parameters");
    size_t off = 0;
    for (auto& [name, t] : entries) {
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                  flat.begin() + static_cast<std::ptrdiff_t>(off + t.data.size()), t.data.begin());
        off += t.data.size();
    }
}

namespace {

// Declares every parameter with its shape, in the fixed order used everywhere.
template <typename T>
ParamSet<T> make_param_shapes(const ViTConfig& cfg) {
    cfg.validate();
    const int64_t e = cfg.embed_dim;
    const int64_t hidden = cfg.mlp_ratio * e;
    ParamSet<T> p;
    p.add("patch_embed.weight", Tensor<T>({cfg.patch_dim(), e}));
    p.add("patch_embed.bias", Tensor<T>({e}));
    p.add("cls_token", Tensor<T>({static_cast<int64_t>(1), e}));
    p.add("pos_embed", Tensor<T>({seq_len(cfg), e}));
    for (int64_t i = 0; i < cfg.depth; ++i) {
        const std::string b = "blocks." + std::to_string(i) + ".";
        p.add(b + "ln1.gain", Tensor<T>({e}));
        p.add(b + "ln1.bias", Tensor<T>({e}));
        p.add(b + "attn.qkv.weight", Tensor<T>({e, 3 * e}));
        p.add(b + "attn.qkv.bias", Tensor<T>({3 * e}));
        p.add(b + "attn.proj.weight", Tensor<T>({e, e}));
        p.add(b + "attn.proj.bias", Tensor<T>({e}));
        p.add(b + "ln2.gain", Tensor<T>({e}));
        p.add(b + "ln2.bias", Tensor<T>({e}));
        p.add(b + "mlp.fc1.weight", Tensor<T>({e, hidden}));
        p.add(b + "mlp.fc1.bias", Tensor<T>({hidden}));
        p.add(b + "mlp.fc2.weight", Tensor<T>({hidden, e}));
        p.add(b + "mlp.fc2.bias", Tensor<T>({e}));
    }
    p.add("final_norm.gain", Tensor<T>({e}));
    p.add("final_norm.bias", Tensor<T>({e}));
    p.add("head.weight", Tensor<T>({e, cfg.num_classes}));
    p.add("head.bias", Tensor<T>({cfg.num_classes}));
    return p;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

constexpr double kLayerNormEps = 1e-5;

}  // namespace

template <typename T>
ParamSet<T> init_params(const ViTConfig& cfg, uint64_t seed) {
    ParamSet<T> p = make_param_shapes<T>(cfg);
    Rng rng(seed);
    for (auto& [name, t] : p.entries) {
        if (ends_with(name, ".gain")) {
            std::fill(t.data.begin(), t.data.end(), T(1));
        } else if (name == "cls_token" || ends_with(name, ".bias")) {
            std::fill(t.data.begin(), t.data.end(), T(0));
        } else if (name == "pos_embed") {
            for (auto& v : t.data) v = static_cast<T>(rng.uniform(-0.02, 0.02));
        } else {
            const double a = std::sqrt(6.0 / static_cast<double>(t.dim(0) + t.dim(1)));
            for (auto& v : t.data) v = static_cast<T>(rng.uniform(-a, a));
        }
    }
    return p;
}

template <typename T>
ParamSet<T> zeros_like(const ParamSet<T>& p) {
    ParamSet<T> out;
    for (const auto& [name, t] : p.entries) out.add(name, Tensor<T>(t.shape));
    return out;
}

template <typename T>
Tensor<T> patchify(const ViTConfig& cfg, const Tensor<T>& images) {
    cfg.validate();
    if (images.ndim() != 4 || images.dim(1) != cfg.channels || images.dim(2) != cfg.image_size ||
        images.dim(3) != cfg.image_size)
        throw InputError("patchify: images " + images.shape_str() + " do not match config (" +
                         std::to_string(cfg.channels) + "x" + std::to_string(cfg.image_size) + "x" +
                         std::to_string(cfg.image_size) + ")");
    const int64_t b = images.dim(0);
    const int64_t side = cfg.image_size / cfg.patch_size;
    const int64_t ps = cfg.patch_size;
    Tensor<T> out({b * cfg.num_patches(), cfg.patch_dim()});
    const int64_t img_stride = cfg.channels * cfg.image_size * cfg.image_size;
    for (int64_t i = 0; i < b; ++i) {
        const T* img = images.ptr() + i * img_stride;
        for (int64_t py = 0; py < side; ++py)
            for (int64_t px = 0; px < side; ++px) {
                T* row = out.ptr() + ((i * side + py) * side + px) * cfg.patch_dim();
                int64_t w = 0;
                for (int64_t c = 0; c < cfg.channels; ++c)
                    for (int64_t y = 0; y < ps; ++y)
                        for (int64_t x = 0; x < ps; ++x)
                            row[w++] = img[(c * cfg.image_size + py * ps + y) * cfg.image_size +
                                           px * ps + x];
            }
    }
    return out;
}

namespace {

template <typename T>
struct Graph {
    Tape<T> tape;
    std::vector<typename Tape<T>::Id> param_ids;  // parallel to params.entries
    typename Tape<T>::Id logits = -1;
};

template <typename T>
Graph<T> build_graph(const ViTConfig& cfg, const ParamSet<T>& params, const Tensor<T>& images,
                     bool want_grads) {
    using Id = typename Tape<T>::Id;
    Graph<T> g;
    Tape<T>& tp = g.tape;

    const int64_t b = images.dim(0);
    const int64_t s = seq_len(cfg);
    const int64_t e = cfg.embed_dim;
    const int64_t heads = cfg.num_heads;
    const T att_scale = T(1) / static_cast<T>(std::sqrt(static_cast<double>(e / heads)));

    Id patches = tp.leaf(patchify(cfg, images), false);
    g.param_ids.reserve(params.entries.size());
    for (const auto& [name, t] : params.entries) g.param_ids.push_back(tp.leaf(t, want_grads));

    auto pid = [&](size_t idx) { return g.param_ids[idx]; };
    size_t k = 0;
    const Id w_pe = pid(k++), b_pe = pid(k++), cls = pid(k++), pos = pid(k++);

    Id x = tp.add_bias_rows(tp.matmul(patches, w_pe), b_pe);
    x = tp.prepend_token(x, cls, b);
    x = tp.add_rows_cycled(x, pos);

    for (int64_t blk = 0; blk < cfg.depth; ++blk) {
        const Id g1 = pid(k++), b1 = pid(k++), wqkv = pid(k++), bqkv = pid(k++);
        const Id wproj = pid(k++), bproj = pid(k++), g2 = pid(k++), b2 = pid(k++);
        const Id w1 = pid(k++), bm1 = pid(k++), w2 = pid(k++), bm2 = pid(k++);

        Id h = tp.layer_norm(x, g1, b1, static_cast<T>(kLayerNormEps));
        Id qkv = tp.add_bias_rows(tp.matmul(h, wqkv), bqkv);
        Id q = tp.split_heads(tp.slice_cols(qkv, 0, e), b, s, heads);
        Id kk = tp.split_heads(tp.slice_cols(qkv, e, 2 * e), b, s, heads);
        Id v = tp.split_heads(tp.slice_cols(qkv, 2 * e, 3 * e), b, s, heads);
        Id att = tp.softmax_rows(tp.scale(tp.bmm_nt(q, kk), att_scale));
        Id ctx = tp.merge_heads(tp.bmm(att, v), b, s, heads);
        x = tp.add(x, tp.add_bias_rows(tp.matmul(ctx, wproj), bproj));

        Id h2 = tp.layer_norm(x, g2, b2, static_cast<T>(kLayerNormEps));
        Id f = tp.gelu(tp.add_bias_rows(tp.matmul(h2, w1), bm1));
        x = tp.add(x, tp.add_bias_rows(tp.matmul(f, w2), bm2));
    }

    const Id gf = pid(k++), bf = pid(k++), wh = pid(k++), bh = pid(k++);
    Id xf = tp.layer_norm(x, gf, bf, static_cast<T>(kLayerNormEps));
    g.logits = tp.add_bias_rows(tp.matmul(tp.take_first_row_per_group(xf, b), wh), bh);
    return g;
}

}  // namespace

template <typename T>
Tensor<T> forward(const ViTConfig& cfg, const ParamSet<T>& params, const Tensor<T>& images) {
    Graph<T> g = build_graph(cfg, params, images, false);
    return g.tape.value(g.logits);
}

template <typename T>
LossResult<T> loss_and_grads(const ViTConfig& cfg, const ParamSet<T>& params,
                             const Tensor<T>& images, const std::vector<int32_t>& labels) {
    Graph<T> g = build_graph(cfg, params, images, true);
    const Tensor<T>& logits = g.tape.value(g.logits);
    const int64_t b = logits.dim(0), c = logits.dim(1);

    int64_t correct = 0;
    for (int64_t r = 0; r < b; ++r) {
        const T* row = logits.ptr() + r * c;
        int64_t best = 0;
        for (int64_t j = 1; j < c; ++j)
            if (row[j] > row[best]) best = j;
        if (best == labels[static_cast<size_t>(r)]) ++correct;
    }

    auto loss_id = g.tape.cross_entropy(g.logits, labels);
    g.tape.backward(loss_id);

    LossResult<T> out;
    out.loss = g.tape.value(loss_id).data[0];
    out.accuracy = static_cast<double>(correct) / static_cast<double>(b);
    out.grads = zeros_like(params);
    for (size_t i = 0; i < params.entries.size(); ++i)
        out.grads.entries[i].second = g.tape.grad(g.param_ids[i]);
    return out;
}

double finite_diff_gradcheck(const std::function<double(const ParamSet<double>&)>& f,
                             const ParamSet<double>& params, const ParamSet<double>& analytic,
                             int samples, double h, uint64_t seed) {
    if (h < 1e-7 || h > 1e-3) throw UsageError("gradcheck step h outside [1e-7, 1e-3]");
    ParamSet<double> work = params;
    Rng rng(seed);
    double worst = 0.0;
    for (int s = 0; s < samples; ++s) {
        const size_t e = static_cast<size_t>(rng.next_below(work.entries.size()));
        Tensor<double>& t = work.entries[e].second;
        const size_t i = static_cast<size_t>(rng.next_below(t.data.size()));
        const double saved = t.data[i];
        t.data[i] = saved + h;
        const double fp = f(work);
        t.data[i] = saved - h;
        const double fm = f(work);
        t.data[i] = saved;
        const double numeric = (fp - fm) / (2.0 * h);
        const double exact = analytic.entries[e].second.data[i];
        const double denom = std::max({std::fabs(numeric), std::fabs(exact), 1e-3});
        worst = std::max(worst, std::fabs(numeric - exact) / denom);
    }
    return worst;
}

#define VITDP_VIT_INSTANTIATE(T)                                                              \
    template struct ParamSet<T>;                                                              \
    template ParamSet<T> init_params<T>(const ViTConfig&, uint64_t);                          \
    template ParamSet<T> zeros_like<T>(const ParamSet<T>&);                                   \
    template Tensor<T> patchify<T>(const ViTConfig&, const Tensor<T>&);                       \
    template Tensor<T> forward<T>(const ViTConfig&, const ParamSet<T>&, const Tensor<T>&);    \
    template LossResult<T> loss_and_grads<T>(const ViTConfig&, const ParamSet<T>&,            \
                                             const Tensor<T>&, const std::vector<int32_t>&);

VITDP_VIT_INSTANTIATE(float)
VITDP_VIT_INSTANTIATE(double)

}  // namespace vitdp
