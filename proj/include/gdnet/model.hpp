#pragma once

#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "gdnet/depth_io.hpp"
#include "gdnet/linalg.hpp"
#include "gdnet/ops.hpp"

namespace gdnet {

struct ModelConfig {
  std::vector<std::size_t> image_channels = {16, 32, 64};  // per pyramid scale
  std::size_t depth_channels = 32;
  int n_sa = 1;  // self-attention blocks per DCPM
  int n_ca = 1;  // cross-attention blocks per DCPM
  std::size_t heads = 4;
  std::size_t lowrank_dim = 16;  // d, number of learned basis vectors
  double rank_rel_tol = 1e-6;
  int neumann_terms = 6;
  InverseMode inverse_mode = InverseMode::neumann;
  std::size_t bins = 64;
  float d_min = 0.1f, d_max = 10.0f;
  // ablation switches (Table-style axes)
  bool use_fgde = true, use_dcpm = true, use_gge = true, use_lfr = true;

  void validate() const {
    if (image_channels.empty()) fail("ModelConfig", "need at least one image scale");
    if (n_sa < 1 || n_ca < 1) fail("ModelConfig", "N_SA and N_CA must be >= 1");
    if (bins < 2) fail("ModelConfig", "bin count must be >= 2");
    if (!(d_min > 0.0f) || !(d_max > d_min)) fail("ModelConfig", "need 0 < d_min < d_max");
    for (std::size_t c : image_channels)
      if (c % heads != 0)
        fail("ModelConfig", "channel width " + std::to_string(c) +
                                " not divisible by head count " + std::to_string(heads));
  }

  nlohmann::json to_json() const {
    return nlohmann::json{
        {"image_channels", image_channels},
        {"depth_channels", depth_channels},
        {"n_sa", n_sa},
        {"n_ca", n_ca},
        {"heads", heads},
        {"lowrank_dim", lowrank_dim},
        {"rank_rel_tol", rank_rel_tol},
        {"neumann_terms", neumann_terms},
        {"inverse_mode", inverse_mode == InverseMode::neumann ? "neumann" : "exact"},
        {"bins", bins},
        {"d_min", d_min},
        {"d_max", d_max},
        {"use_fgde", use_fgde},
        {"use_dcpm", use_dcpm},
        {"use_gge", use_gge},
        {"use_lfr", use_lfr}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.image_channels = j.value("image_channels", c.image_channels);
    c.depth_channels = j.value("depth_channels", c.depth_channels);
    c.n_sa = j.value("n_sa", c.n_sa);
    c.n_ca = j.value("n_ca", c.n_ca);
    c.heads = j.value("heads", c.heads);
    c.lowrank_dim = j.value("lowrank_dim", c.lowrank_dim);
    c.rank_rel_tol = j.value("rank_rel_tol", c.rank_rel_tol);
    c.neumann_terms = j.value("neumann_terms", c.neumann_terms);
    c.inverse_mode = j.value("inverse_mode", std::string("neumann")) == "exact"
                         ? InverseMode::exact_solve
                         : InverseMode::neumann;
    c.bins = j.value("bins", c.bins);
    c.d_min = j.value("d_min", c.d_min);
    c.d_max = j.value("d_max", c.d_max);
    c.use_fgde = j.value("use_fgde", true);
    c.use_dcpm = j.value("use_dcpm", true);
    c.use_gge = j.value("use_gge", true);
    c.use_lfr = j.value("use_lfr", true);
    return c;
  }
};

namespace detail {

/// Owns all learnable leaves; creation order is fixed, so initialization is
/// deterministic in the seed. Uniform fan-in scaling, zero biases.
template <typename T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed) : seed_(seed) {}

  Tensor<T> uniform(const std::string& name, Shape shape, std::size_t fan_in) {
    std::mt19937_64 rng(derive_seed(seed_, rng_tag::init, counter_++));
    const double s = 1.0 / std::sqrt(double(fan_in));
    std::uniform_real_distribution<double> dist(-s, s);
    std::vector<T> data(numel(shape));
    for (auto& v : data) v = T(dist(rng));
    Tensor<T> t = Tensor<T>::from_data(std::move(shape), std::move(data), true);
    params_.emplace_back(name, t);
    return t;
  }

  Tensor<T> zeros(const std::string& name, Shape shape) {
    ++counter_;
    Tensor<T> t = Tensor<T>::zeros(std::move(shape), true);
    params_.emplace_back(name, t);
    return t;
  }

  std::vector<std::pair<std::string, Tensor<T>>>& all() { return params_; }
  const std::vector<std::pair<std::string, Tensor<T>>>& all() const { return params_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  std::vector<std::pair<std::string, Tensor<T>>> params_;
};

template <typename T>
struct Linear {
  Tensor<T> w, b;

  static Linear make(ParamStore<T>& ps, const std::string& name, std::size_t in,
                     std::size_t out) {
    return {ps.uniform(name + ".w", {in, out}, in), ps.zeros(name + ".b", {out})};
  }
  Tensor<T> operator()(const Tensor<T>& x) const { return add(matmul(x, w), b); }
};

template <typename T>
struct Conv {
  Tensor<T> w, b;
  std::size_t stride = 1, pad = 0;

  static Conv make(ParamStore<T>& ps, const std::string& name, std::size_t in,
                   std::size_t out, std::size_t k, std::size_t stride, std::size_t pad) {
    return {ps.uniform(name + ".w", {out, in, k, k}, in * k * k),
            ps.zeros(name + ".b", {out}), stride, pad};
  }
  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, w, b, stride, pad); }
};

/// Multi-head scaled dot-product attention with learned projections.
/// Query and key/value streams may have different channel widths and
/// token counts; output has the query's tokens and channels.
template <typename T>
struct MultiHeadAttention {
  Linear<T> wq, wk, wv, wo;
  std::size_t heads = 1, model_dim = 0;

  static MultiHeadAttention make(ParamStore<T>& ps, const std::string& name,
                                 std::size_t q_channels, std::size_t kv_channels,
                                 std::size_t model_dim, std::size_t heads) {
    if (model_dim % heads != 0)
      fail("attention", "model dim " + std::to_string(model_dim) +
                            " not divisible by heads " + std::to_string(heads));
    MultiHeadAttention a;
    a.heads = heads;
    a.model_dim = model_dim;
    a.wq = Linear<T>::make(ps, name + ".q", q_channels, model_dim);
    a.wk = Linear<T>::make(ps, name + ".k", kv_channels, model_dim);
    a.wv = Linear<T>::make(ps, name + ".v", kv_channels, model_dim);
    a.wo = Linear<T>::make(ps, name + ".o", model_dim, q_channels);
    return a;
  }

  Tensor<T> operator()(const Tensor<T>& q_tokens, const Tensor<T>& kv_tokens) const {
    const std::size_t dh = model_dim / heads;
    Tensor<T> q = wq(q_tokens), k = wk(kv_tokens), v = wv(kv_tokens);
    const T scale = T(1) / T(std::sqrt(double(dh)));
    std::vector<Tensor<T>> heads_out;
    heads_out.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      // scale folded into the (small) query block, not the score matrix
      Tensor<T> qh = scalar_mul(slice(q, 1, h * dh, (h + 1) * dh), scale);
      Tensor<T> kh = slice(k, 1, h * dh, (h + 1) * dh);
      Tensor<T> vh = slice(v, 1, h * dh, (h + 1) * dh);
      Tensor<T> attn = softmax(matmul(qh, transpose(kh)));
      heads_out.push_back(matmul(attn, vh));
    }
    return wo(concat(heads_out, 1));
  }
};

template <typename T>
Tensor<T> to_tokens(const Tensor<T>& chw) {
  const Shape& s = chw.shape();
  return transpose(reshape(chw, {s[0], s[1] * s[2]}));
}

template <typename T>
Tensor<T> from_tokens(const Tensor<T>& tokens, std::size_t c, std::size_t h, std::size_t w) {
  return reshape(transpose(tokens), {c, h, w});
}

}  // namespace detail

/// The full toy network: image pyramid + DCPM cross-scale fusion (FGDE),
/// low-rank depth branch (GGE), and an adaptive-bins decoder.
template <typename T>
class GDNet {
 public:
  GDNet(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg), params_(seed) {
    cfg_.validate();
    build();
  }

  const ModelConfig& config() const { return cfg_; }

  std::vector<std::pair<std::string, Tensor<T>>>& parameters() { return params_.all(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_.all()) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& [name, t] : params_.all()) t.zero_grad();
  }

  /// D̂_hq = decoder(FGDE(I), GGE(D_lq)). Output has the RGB resolution and
  /// always lies in [d_min, d_max] (convex combination of bin centers).
  Tensor<T> forward(const Tensor<T>& rgb, const Tensor<T>& dlq) const {
    const Shape& rs = rgb.shape();
    if (rs.size() != 3 || rs[0] != 3)
      fail("GDNet::forward", "rgb must be [3,H,W], got " + shape_str(rs));
    const std::size_t h = rs[1], w = rs[2];
    const std::size_t div = std::size_t(1) << (cfg_.image_channels.size() - 1);
    if (h % div != 0 || w % div != 0)
      fail("GDNet::forward", "resolution must be divisible by " + std::to_string(div));
    if (dlq.shape().size() != 3 || dlq.shape()[0] != 1)
      fail("GDNet::forward", "depth input must be [1,h,w], got " + shape_str(dlq.shape()));

    Tensor<T> f_dg = fgde(rgb);
    Tensor<T> f_gg = gge(dlq);
    return decode(f_dg, f_gg, dlq, h, w);
  }

  // ---- FGDE ----

  std::vector<Tensor<T>> image_pyramid(const Tensor<T>& rgb) const {
    std::vector<Tensor<T>> feats;
    Tensor<T> cur = rgb;
    for (std::size_t s = 0; s < cfg_.image_channels.size(); ++s) {
      cur = relu(img_in_[s](cur));
      cur = relu(img_mix_[s](cur));
      feats.push_back(cur);
    }
    return feats;
  }

  Tensor<T> fgde(const Tensor<T>& rgb) const {
    const std::size_t h = rgb.shape()[1], w = rgb.shape()[2];
    if (!cfg_.use_fgde)
      return broadcast_to(fgde_const_, {cfg_.image_channels[0], h, w});
    std::vector<Tensor<T>> feats = image_pyramid(rgb);
    if (!cfg_.use_dcpm || feats.size() == 1) return feats[0];

    // DCPM per adjacent scale pair, coarsest to finest: the enhanced
    // output of one pair is the context stream of the next.
    Tensor<T> low = feats.back();
    for (std::size_t s = feats.size() - 1; s-- > 0;) {
      const Shape& ls = low.shape();
      const Shape& hs = feats[s].shape();
      Tensor<T> low_tok = detail::to_tokens(low);
      for (int i = 0; i < cfg_.n_sa; ++i)
        low_tok = add(low_tok, sa_[s][std::size_t(i)](low_tok, low_tok));
      Tensor<T> high_tok = detail::to_tokens(feats[s]);
      for (int i = 0; i < cfg_.n_ca; ++i)
        high_tok = add(high_tok, ca_[s][std::size_t(i)](high_tok, low_tok));
      low = detail::from_tokens(high_tok, hs[0], hs[1], hs[2]);
      (void)ls;
    }
    return low;
  }

  // ---- GGE ----

  Tensor<T> gge(const Tensor<T>& dlq) const {
    const std::size_t gh = (dlq.shape()[1] + 1) / 2, gw = (dlq.shape()[2] + 1) / 2;
    if (!cfg_.use_gge)
      return broadcast_to(gge_const_, {cfg_.depth_channels, gh, gw});
    Tensor<T> f = relu(dep_in_(dlq));
    f = relu(dep_down_(f));
    const Shape& fs = f.shape();
    Tensor<T> tokens = detail::to_tokens(f);  // n × c
    const std::size_t n = fs[1] * fs[2];
    if (cfg_.use_lfr) {
      if (cfg_.lowrank_dim >= n)
        fail("GDNet::gge", "lowrank_dim " + std::to_string(cfg_.lowrank_dim) +
                               " must be below token count " + std::to_string(n));
      Tensor<T> f_lv = lv_out_(relu(lv_in_(tokens)));  // n × d basis candidates
      // a dead-ReLU collapse can zero the whole basis; projection onto a
      // rank-0 space is undefined, so pass the tokens through unchanged
      bool degenerate = true;
      for (T v : f_lv.data())
        if (v != T(0)) {
          degenerate = false;
          break;
        }
      if (degenerate) {
        last_projection_rank_ = 0;
      } else {
        auto op = build_projection(f_lv, cfg_.rank_rel_tol, cfg_.neumann_terms,
                                   cfg_.inverse_mode);
        last_projection_rank_ = op.rank;
        tokens = project(op, tokens);  // F_lrd
      }
    }
    Tensor<T> out = gg_out_(relu(gg_in_(tokens)));
    return detail::from_tokens(out, cfg_.depth_channels, fs[1], fs[2]);
  }

  /// Rank of the most recent LFR projection (logged by the harness).
  std::size_t last_projection_rank() const { return last_projection_rank_; }

  // ---- decoder ----

  Tensor<T> decode(const Tensor<T>& f_dg, const Tensor<T>& f_gg, const Tensor<T>& dlq,
                   std::size_t h, std::size_t w) const {
    Tensor<T> g = relu(fuse_g_(upsample_bilinear(f_gg, h, w)));
    // direct low-quality depth channel, normalized to [0,1]: gives the bin
    // heads per-pixel access to the measurement itself, not only to the
    // bottlenecked GGE features
    Tensor<T> d0 = scalar_mul(scalar_add(upsample_bilinear(dlq, h, w), T(-cfg_.d_min)),
                              T(1) / T(cfg_.d_max - cfg_.d_min));
    Tensor<T> x = concat(std::vector<Tensor<T>>{f_dg, g, d0}, 0);
    x = relu(fuse1_(x));
    x = relu(fuse2_(x));
    const std::size_t c0 = cfg_.image_channels[0];
    const std::size_t hw = h * w;

    // per-image adaptive bin centers: softmax widths over the depth range,
    // cumulative midpoints give the centers
    Tensor<T> tok = detail::to_tokens(x);  // hw × c0
    Tensor<T> pooled = matmul(Tensor<T>::full({1, hw}, T(1) / T(hw)), tok);
    Tensor<T> widths = softmax(bin_head_(pooled));  // 1 × bins
    Tensor<T> cums = matmul(widths, cum_lower_t_);
    Tensor<T> centers = scalar_add(
        scalar_mul(sub(cums, scalar_mul(widths, T(0.5))), T(cfg_.d_max - cfg_.d_min)),
        T(cfg_.d_min));  // 1 × bins

    Tensor<T> logits =
        prob_head_(concat(std::vector<Tensor<T>>{x, d0}, 0));  // bins × h × w
    Tensor<T> p = softmax(transpose(reshape(logits, {cfg_.bins, hw})));  // hw × bins
    Tensor<T> depth = matmul(p, transpose(centers));                     // hw × 1
    return reshape(transpose(depth), {1, h, w});
  }

  // ---- checkpoint io ----
  // Layout (little-endian): magic "GDNC", u32 version=1, u64 json length,
  // config JSON bytes, u64 tensor count, then per tensor: u64 name length,
  // name bytes, u64 ndim, u64 dims..., float32 data.

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("GDNet::save", "cannot open " + path.string());
    out.write("GDNC", 4);
    const std::uint32_t version = 1;
    out.write(reinterpret_cast<const char*>(&version), 4);
    const std::string j = cfg_.to_json().dump();
    std::uint64_t len = j.size();
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(j.data(), std::streamsize(j.size()));
    std::uint64_t count = params_.all().size();
    out.write(reinterpret_cast<const char*>(&count), 8);
    for (const auto& [name, t] : params_.all()) {
      len = name.size();
      out.write(reinterpret_cast<const char*>(&len), 8);
      out.write(name.data(), std::streamsize(name.size()));
      std::uint64_t ndim = t.shape().size();
      out.write(reinterpret_cast<const char*>(&ndim), 8);
      for (std::size_t d : t.shape()) {
        std::uint64_t e = d;
        out.write(reinterpret_cast<const char*>(&e), 8);
      }
      for (T v : t.data()) {
        const float f = float(v);
        out.write(reinterpret_cast<const char*>(&f), 4);
      }
    }
  }

  static ModelConfig peek_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("GDNet::load", "cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "GDNC") fail("GDNet::load", "bad magic");
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    if (version != 1) fail("GDNet::load", "unsupported version " + std::to_string(version));
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 8);
    std::string j(len, '\0');
    in.read(j.data(), std::streamsize(len));
    if (!in) fail("GDNet::load", "truncated config");
    return ModelConfig::from_json(nlohmann::json::parse(j));
  }

  static GDNet load(const std::filesystem::path& path) {
    GDNet model(peek_config(path), /*seed=*/0);
    std::ifstream in(path, std::ios::binary);
    in.seekg(8);
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 8);
    in.seekg(std::streamoff(16 + len));
    std::uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&count), 8);
    if (count != model.params_.all().size())
      fail("GDNet::load", "tensor count mismatch with architecture");
    for (auto& [name, t] : model.params_.all()) {
      in.read(reinterpret_cast<char*>(&len), 8);
      std::string stored(len, '\0');
      in.read(stored.data(), std::streamsize(len));
      if (stored != name) fail("GDNet::load", "tensor order mismatch at " + name);
      std::uint64_t ndim = 0;
      in.read(reinterpret_cast<char*>(&ndim), 8);
      Shape shape(ndim);
      for (auto& d : shape) {
        std::uint64_t e = 0;
        in.read(reinterpret_cast<char*>(&e), 8);
        d = std::size_t(e);
      }
      if (shape != t.shape()) fail("GDNet::load", "shape mismatch for " + name);
      for (auto& v : t.data()) {
        float f = 0;
        in.read(reinterpret_cast<char*>(&f), 4);
        v = T(f);
      }
      if (!in) fail("GDNet::load", "truncated tensor data");
    }
    return model;
  }

 private:
  void build() {
    using detail::Conv;
    using detail::Linear;
    using detail::MultiHeadAttention;
    const auto& ch = cfg_.image_channels;

    for (std::size_t s = 0; s < ch.size(); ++s) {
      const std::size_t in = s == 0 ? 3 : ch[s - 1];
      const std::size_t stride = s == 0 ? 1 : 2;
      img_in_.push_back(Conv<T>::make(params_, "img" + std::to_string(s) + ".in",
                                      in, ch[s], 3, stride, 1));
      img_mix_.push_back(Conv<T>::make(params_, "img" + std::to_string(s) + ".mix",
                                       ch[s], ch[s], 3, 1, 1));
    }
    sa_.resize(ch.size() > 0 ? ch.size() - 1 : 0);
    ca_.resize(sa_.size());
    for (std::size_t s = 0; s + 1 < ch.size(); ++s) {
      for (int i = 0; i < cfg_.n_sa; ++i)
        sa_[s].push_back(MultiHeadAttention<T>::make(
            params_, "dcpm" + std::to_string(s) + ".sa" + std::to_string(i),
            ch[s + 1], ch[s + 1], ch[s + 1], cfg_.heads));
      for (int i = 0; i < cfg_.n_ca; ++i)
        ca_[s].push_back(MultiHeadAttention<T>::make(
            params_, "dcpm" + std::to_string(s) + ".ca" + std::to_string(i),
            ch[s], ch[s + 1], ch[s], cfg_.heads));
    }
    fgde_const_ = params_.uniform("fgde.const", {ch[0], 1, 1}, ch[0]);

    const std::size_t cd = cfg_.depth_channels;
    dep_in_ = Conv<T>::make(params_, "dep.in", 1, cd / 2, 3, 1, 1);
    dep_down_ = Conv<T>::make(params_, "dep.down", cd / 2, cd, 3, 2, 1);
    lv_in_ = Linear<T>::make(params_, "lfr.in", cd, cd);
    lv_out_ = Linear<T>::make(params_, "lfr.out", cd, cfg_.lowrank_dim);
    gg_in_ = Linear<T>::make(params_, "gge.in", cd, cd);
    gg_out_ = Linear<T>::make(params_, "gge.out", cd, cd);
    gge_const_ = params_.uniform("gge.const", {cd, 1, 1}, cd);

    fuse_g_ = Conv<T>::make(params_, "dec.g", cd, ch[0], 1, 1, 0);
    fuse1_ = Conv<T>::make(params_, "dec.fuse1", 2 * ch[0] + 1, ch[0], 1, 1, 0);
    fuse2_ = Conv<T>::make(params_, "dec.fuse2", ch[0], ch[0], 1, 1, 0);
    bin_head_ = Linear<T>::make(params_, "dec.bins", ch[0], cfg_.bins);
    prob_head_ = Conv<T>::make(params_, "dec.probs", ch[0] + 1, cfg_.bins, 1, 1, 0);

    // identity-style init of the probability head: on the normalized-depth
    // input channel, logit_j = 2k*c_j*d - k*c_j^2 which (up to a shared
    // -k*d^2 term that softmax ignores) equals -k*(d - c_j)^2. The network
    // therefore starts as a soft quantizer of the upsampled measurement and
    // training refines from there instead of from an uninformed prior.
    {
      const T kappa = T(0.25) * T(cfg_.bins) * T(cfg_.bins);
      auto& wdata = prob_head_.w.data();
      auto& bdata = prob_head_.b.data();
      for (std::size_t j = 0; j < cfg_.bins; ++j) {
        const T cj = (T(j) + T(0.5)) / T(cfg_.bins);
        wdata[j * (ch[0] + 1) + ch[0]] = T(2) * kappa * cj;
        bdata[j] = -kappa * cj * cj;
      }
    }

    // constant lower-triangular-ones (transposed) for cumulative sums
    std::vector<T> lt(cfg_.bins * cfg_.bins, T(0));
    for (std::size_t i = 0; i < cfg_.bins; ++i)
      for (std::size_t j = i; j < cfg_.bins; ++j) lt[i * cfg_.bins + j] = T(1);
    cum_lower_t_ = Tensor<T>::from_data({cfg_.bins, cfg_.bins}, std::move(lt));
  }

  ModelConfig cfg_;
  detail::ParamStore<T> params_;
  std::vector<detail::Conv<T>> img_in_, img_mix_;
  std::vector<std::vector<detail::MultiHeadAttention<T>>> sa_, ca_;
  Tensor<T> fgde_const_;
  detail::Conv<T> dep_in_, dep_down_;
  detail::Linear<T> lv_in_, lv_out_, gg_in_, gg_out_;
  Tensor<T> gge_const_;
  detail::Conv<T> fuse_g_, fuse1_, fuse2_;
  detail::Linear<T> bin_head_;
  detail::Conv<T> prob_head_;
  Tensor<T> cum_lower_t_;
  mutable std::size_t last_projection_rank_ = 0;
};

/// Converts rasters to model tensors. RGB maps to [0,1]; depth stays in meters.
template <typename T>
Tensor<T> rgb_to_tensor(const RgbImage& img) {
  std::vector<T> v(3 * img.width * img.height);
  const std::size_t plane = img.width * img.height;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) v[c * plane + i] = T(img.data[i * 3 + c]) / T(255);
  return Tensor<T>::from_data({3, img.height, img.width}, std::move(v));
}

template <typename T>
Tensor<T> depth_to_tensor(const DepthMap& d) {
  std::vector<T> v(d.data.begin(), d.data.end());
  return Tensor<T>::from_data({1, d.height, d.width}, std::move(v));
}

template <typename T>
DepthMap tensor_to_depth(const Tensor<T>& t, float d_min, float d_max) {
  const Shape& s = t.shape();
  if (s.size() != 3 || s[0] != 1) fail("tensor_to_depth", "expects [1,H,W]");
  DepthMap d;
  d.height = s[1];
  d.width = s[2];
  d.d_min = d_min;
  d.d_max = d_max;
  d.data.resize(t.size());
  for (std::size_t i = 0; i < t.size(); ++i)
    d.data[i] = std::clamp(float(t.data()[i]), d_min, d_max);
  return d;
}

}  // namespace gdnet
