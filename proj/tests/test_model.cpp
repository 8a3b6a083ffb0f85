// Model architecture: shape contracts, decoder range guarantees, closed
// forms for zeroed parameters, ablation switches, checkpoint round trips
// and a full-network gradient check at toy scale.

#include <random>

#include <catch2/catch_amalgamated.hpp>

#include "gdnet/gradcheck.hpp"
#include "gdnet/model.hpp"

using namespace gdnet;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.image_channels = {4, 8};
  c.depth_channels = 4;
  c.heads = 2;
  c.lowrank_dim = 2;
  c.bins = 4;
  c.neumann_terms = 4;
  return c;
}

template <typename T>
Tensor<T> random_rgb(std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<T> v(3 * h * w);
  for (auto& x : v) x = T(u(rng));
  return Tensor<T>::from_data({3, h, w}, std::move(v));
}

template <typename T>
Tensor<T> random_depth_tensor(std::size_t h, std::size_t w, std::uint64_t seed,
                              T d_min = T(0.1), T d_max = T(10)) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u{double(d_min), double(d_max)};
  std::vector<T> v(h * w);
  for (auto& x : v) x = T(u(rng));
  return Tensor<T>::from_data({1, h, w}, std::move(v));
}

}  // namespace

TEST_CASE("forward output has RGB resolution and stays inside the depth range") {
  GDNet<float> model(tiny_config(), 1);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{8, 8}, {16, 8}, {8, 16}}) {
    auto out = model.forward(random_rgb<float>(h, w, h * 100 + w),
                             random_depth_tensor<float>(h / 2, w / 2, 5));
    REQUIRE(out.shape() == Shape{1, h, w});
    for (float v : out.data()) {
      REQUIRE(v >= model.config().d_min - 1e-5f);
      REQUIRE(v <= model.config().d_max + 1e-5f);
    }
  }
}

TEST_CASE("forward validates its input contracts") {
  GDNet<float> model(tiny_config(), 1);
  auto rgb = random_rgb<float>(8, 8, 1);
  auto lq = random_depth_tensor<float>(2, 2, 2);
  REQUIRE_THROWS_AS(model.forward(random_depth_tensor<float>(8, 8, 1), lq), Error);
  REQUIRE_THROWS_AS(model.forward(random_rgb<float>(9, 9, 1), lq), Error);  // not divisible
  REQUIRE_THROWS_AS(model.forward(rgb, random_rgb<float>(2, 2, 3)), Error);  // 3-channel depth

  // lowrank_dim must stay below the GGE token count ((2x2 -> 1 token) < 2)
  REQUIRE_THROWS_AS(model.forward(rgb, random_depth_tensor<float>(2, 2, 2)), Error);
}

TEST_CASE("config validation rejects inconsistent settings") {
  auto c = tiny_config();
  c.heads = 3;  // does not divide 4
  REQUIRE_THROWS_AS(GDNet<float>(c, 1), Error);
  c = tiny_config();
  c.bins = 1;
  REQUIRE_THROWS_AS(GDNet<float>(c, 1), Error);
  c = tiny_config();
  c.n_sa = 0;
  REQUIRE_THROWS_AS(GDNet<float>(c, 1), Error);
  c = tiny_config();
  c.d_min = -1;
  REQUIRE_THROWS_AS(GDNet<float>(c, 1), Error);
}

TEST_CASE("zeroed parameters give the uniform-bins closed form") {
  // with every weight and bias zero, the bin-width logits and the per-pixel
  // probability logits are all zero, so widths and probabilities are
  // uniform and the output is d_min + range/2 everywhere. LFR is disabled
  // because a zeroed basis has rank 0 by construction.
  auto cfg = tiny_config();
  cfg.use_lfr = false;
  GDNet<float> model(cfg, 1);
  for (auto& [name, t] : model.parameters())
    std::fill(t.data().begin(), t.data().end(), 0.0f);
  auto out = model.forward(random_rgb<float>(8, 8, 3),
                           random_depth_tensor<float>(4, 4, 4));
  const float expected = cfg.d_min + 0.5f * (cfg.d_max - cfg.d_min);
  for (float v : out.data()) REQUIRE(v == Catch::Approx(expected).margin(1e-4));
}

TEST_CASE("attention is invariant to permuting key/value tokens") {
  detail::ParamStore<float> ps(7);
  auto attn = detail::MultiHeadAttention<float>::make(ps, "t", 4, 4, 4, 2);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<float> u(-1, 1);
  std::vector<float> qv(3 * 4), kv(5 * 4);
  for (auto& v : qv) v = u(rng);
  for (auto& v : kv) v = u(rng);
  auto q = Tensor<float>::from_data({3, 4}, qv);
  auto k1 = Tensor<float>::from_data({5, 4}, kv);
  // rotate the kv rows by two
  std::vector<float> kv2(kv.end() - 2 * 4, kv.end());
  kv2.insert(kv2.end(), kv.begin(), kv.end() - 2 * 4);
  auto k2 = Tensor<float>::from_data({5, 4}, kv2);
  auto y1 = attn(q, k1);
  auto y2 = attn(q, k2);
  for (std::size_t i = 0; i < y1.size(); ++i)
    REQUIRE(y1.data()[i] == Catch::Approx(y2.data()[i]).margin(1e-5));
}

TEST_CASE("attention with a single key/value token ignores the scores") {
  detail::ParamStore<float> ps(9);
  auto attn = detail::MultiHeadAttention<float>::make(ps, "t", 4, 4, 4, 2);
  auto q1 = Tensor<float>::from_data({1, 4}, {0.3f, -0.2f, 0.6f, 0.1f});
  auto q2 = Tensor<float>::from_data({1, 4}, {-5.0f, 2.0f, 1.0f, -1.0f});
  auto kv = Tensor<float>::from_data({1, 4}, {0.9f, 0.1f, -0.4f, 0.2f});
  // softmax over one token is identically 1, so the output cannot depend on q
  auto y1 = attn(q1, kv);
  auto y2 = attn(q2, kv);
  for (std::size_t i = 0; i < y1.size(); ++i)
    REQUIRE(y1.data()[i] == Catch::Approx(y2.data()[i]).margin(1e-6));
}

TEST_CASE("ablation switches change the computation") {
  auto rgb = random_rgb<float>(8, 8, 21);
  auto lq = random_depth_tensor<float>(4, 4, 22);
  GDNet<float> full(tiny_config(), 4);
  auto base = full.forward(rgb, lq);
  REQUIRE(full.last_projection_rank() >= 1);  // LFR actually active at this seed

  for (auto mutate : std::vector<void (*)(ModelConfig&)>{
           [](ModelConfig& c) { c.use_fgde = false; },
           [](ModelConfig& c) { c.use_dcpm = false; },
           [](ModelConfig& c) { c.use_gge = false; },
           [](ModelConfig& c) { c.use_lfr = false; }}) {
    auto cfg = tiny_config();
    mutate(cfg);
    GDNet<float> variant(cfg, 4);
    auto out = variant.forward(rgb, lq);
    REQUIRE(out.shape() == base.shape());
    REQUIRE(out.data() != base.data());
  }

  auto cfg = tiny_config();
  cfg.n_sa = 2;
  cfg.n_ca = 3;
  GDNet<float> deeper(cfg, 4);
  REQUIRE(deeper.forward(rgb, lq).shape() == base.shape());
  REQUIRE(deeper.parameter_count() > full.parameter_count());
}

TEST_CASE("LFR reports the projection rank") {
  GDNet<float> model(tiny_config(), 5);
  (void)model.forward(random_rgb<float>(8, 8, 31), random_depth_tensor<float>(4, 4, 32));
  REQUIRE(model.last_projection_rank() >= 1);
  REQUIRE(model.last_projection_rank() <= tiny_config().lowrank_dim);
}

TEST_CASE("default configuration stays desk-scale") {
  ModelConfig def;
  GDNet<float> model(def, 0);
  REQUIRE(model.parameter_count() < 2'000'000);
}

TEST_CASE("checkpoint round trip reproduces the forward pass bitwise") {
  const auto path = std::filesystem::temp_directory_path() / "ckpt.gdnc";
  GDNet<float> model(tiny_config(), 11);
  auto rgb = random_rgb<float>(8, 8, 41);
  auto lq = random_depth_tensor<float>(4, 4, 42);
  auto before = model.forward(rgb, lq);
  model.save(path);

  auto loaded = GDNet<float>::load(path);
  auto after = loaded.forward(rgb, lq);
  REQUIRE(before.data() == after.data());

  auto cfg = GDNet<float>::peek_config(path);
  REQUIRE(cfg.to_json() == tiny_config().to_json());
  std::filesystem::remove(path);

  REQUIRE_THROWS_AS(GDNet<float>::load("/nonexistent/ckpt.gdnc"), Error);
}

TEST_CASE("corrupt checkpoints are rejected") {
  const auto path = std::filesystem::temp_directory_path() / "bad.gdnc";
  std::ofstream out(path, std::ios::binary);
  out << "NOPE";
  out.close();
  REQUIRE_THROWS_AS(GDNet<float>::load(path), Error);
  std::filesystem::remove(path);
}

TEST_CASE("the full network passes gradcheck in double precision") {
  auto cfg = tiny_config();
  GDNet<double> model(cfg, 13);
  auto rgb = random_rgb<double>(8, 8, 51);
  auto lq = random_depth_tensor<double>(4, 4, 52, 0.5, 9.5);
  auto rep = gradcheck(
      [&](const std::vector<Tensor<double>>& in) {
        return mean(model.forward(in[0], in[1]));
      },
      {rgb, lq});
  INFO("max relative error " << rep.max_rel_err);
  REQUIRE(rep.pass);
}

TEST_CASE("FGDE and GGE blocks pass gradcheck in isolation") {
  auto cfg = tiny_config();
  GDNet<double> model(cfg, 17);
  auto rep_fgde = gradcheck(
      [&](const Tensor<double>& x) { return mean(model.fgde(x)); },
      random_rgb<double>(8, 8, 61));
  REQUIRE(rep_fgde.pass);
  auto rep_gge = gradcheck(
      [&](const Tensor<double>& x) { return mean(model.gge(x)); },
      random_depth_tensor<double>(4, 4, 62, 0.5, 9.5));
  REQUIRE(rep_gge.pass);
}
