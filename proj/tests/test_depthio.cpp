// Degradation pipeline, scene generator and file formats: quantization
// bounds, determinism, analytic ray-cast oracles, byte-level layout.

#include <cstdio>
#include <random>

#include <catch2/catch_amalgamated.hpp>

#include "gdnet/depth_io.hpp"

using namespace gdnet;

namespace {

DepthMap random_depth(std::size_t w, std::size_t h, std::uint64_t seed,
                      float d_min = 0.5f, float d_max = 10.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(d_min, d_max);
  DepthMap d;
  d.width = w;
  d.height = h;
  d.d_min = d_min;
  d.d_max = d_max;
  d.data.resize(w * h);
  for (auto& v : d.data) v = u(rng);
  return d;
}

std::filesystem::path tmp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

std::uint64_t fnv1a(const std::vector<float>& v) {
  std::uint64_t h = 1469598103934665603ULL;
  for (float f : v) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int i = 0; i < 4; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace

TEST_CASE("quantization hits exact grid values") {
  DepthMap d;
  d.width = 3;
  d.height = 1;
  d.d_min = 0.0f;  // validate() not invoked here; direct quantize call
  d.d_max = 1.0f;
  d.data = {0.0f, 0.4f, 1.0f};
  // 0.4 * 255 = 102 exactly
  auto q = quantize_depth(d, 8);
  REQUIRE(q.levels == std::vector<std::uint16_t>{0, 102, 255});
  auto back = dequantize_depth(q);
  REQUIRE(back.data[0] == 0.0f);
  REQUIRE(back.data[1] == Catch::Approx(0.4).margin(1e-7));
  REQUIRE(back.data[2] == 1.0f);
}

TEST_CASE("quantize/dequantize round trip is exact on every level, b <= 8") {
  for (int bits = 1; bits <= 8; ++bits) {
    const std::uint16_t max_level = std::uint16_t((1u << bits) - 1);
    QuantizedDepth q;
    q.width = std::size_t(max_level) + 1;
    q.height = 1;
    q.d_min = 0.5f;
    q.d_max = 9.5f;
    q.bits = bits;
    for (std::uint16_t l = 0; l <= max_level; ++l) q.levels.push_back(l);
    auto d = dequantize_depth(q);
    auto q2 = quantize_depth(d, bits);
    REQUIRE(q2.levels == q.levels);
  }
}

TEST_CASE("quantization error stays within half an LSB for b in 1..16") {
  for (int bits = 1; bits <= 16; ++bits) {
    auto d = random_depth(32, 8, std::uint64_t(bits) * 17);
    auto back = dequantize_depth(quantize_depth(d, bits));
    const double half_lsb = 0.5 * double(d.d_max - d.d_min) / double((1u << bits) - 1);
    for (std::size_t i = 0; i < d.data.size(); ++i)
      REQUIRE(std::abs(double(back.data[i]) - double(d.data[i])) <=
              half_lsb * (1.0 + 1e-5));
  }
}

TEST_CASE("dequantize rejects out-of-range levels") {
  QuantizedDepth q;
  q.width = q.height = 1;
  q.levels = {9};
  q.d_min = 0;
  q.d_max = 1;
  q.bits = 3;  // max level 7
  REQUIRE_THROWS_AS(dequantize_depth(q), Error);
  REQUIRE_THROWS_AS(quantize_depth(random_depth(2, 2, 1), 0), Error);
  REQUIRE_THROWS_AS(quantize_depth(random_depth(2, 2, 1), 17), Error);
}

TEST_CASE("area downsampling averages blocks, nearest picks corners") {
  DepthMap d;
  d.width = d.height = 2;
  d.d_min = 0.5f;
  d.d_max = 10.0f;
  d.data = {1.0f, 2.0f, 3.0f, 4.0f};
  auto area = downsample_depth(d, 2, DownsampleMode::area);
  REQUIRE(area.data == std::vector<float>{2.5f});
  auto nearest = downsample_depth(d, 2, DownsampleMode::nearest);
  REQUIRE(nearest.data == std::vector<float>{1.0f});
  REQUIRE_THROWS_AS(downsample_depth(random_depth(3, 3, 1), 2, DownsampleMode::area),
                    Error);
}

TEST_CASE("degradation is bit-deterministic and seed-sensitive") {
  auto gt = random_depth(16, 16, 5);
  DegradationSpec spec;
  spec.scale = 4;
  spec.bits = 6;
  spec.noise_sigma = 0.19f;
  spec.seed = 1234;
  auto a = degrade(gt, spec);
  auto b = degrade(gt, spec);
  REQUIRE(fnv1a(a.data) == fnv1a(b.data));
  spec.seed = 1235;
  auto c = degrade(gt, spec);
  REQUIRE(fnv1a(a.data) != fnv1a(c.data));
}

TEST_CASE("neutral settings leave a constant map constant") {
  DepthMap d;
  d.width = d.height = 8;
  d.d_min = 0.5f;
  d.d_max = 10.0f;
  d.data.assign(64, 4.25f);
  DegradationSpec spec;
  spec.scale = 2;
  spec.bits = 8;
  spec.noise_sigma = 0.0f;
  auto out = degrade(d, spec);
  const double half_lsb = 0.5 * 9.5 / 255.0;
  for (float v : out.data) {
    REQUIRE(v == out.data[0]);  // still constant
    REQUIRE(std::abs(double(v) - 4.25) <= half_lsb);
  }

  // fully neutral: scale 1, 16 bits, no noise
  spec.scale = 1;
  spec.bits = 16;
  auto same = degrade(d, spec);
  for (std::size_t i = 0; i < d.data.size(); ++i)
    REQUIRE(std::abs(double(same.data[i]) - double(d.data[i])) <=
            0.5 * 9.5 / 65535.0);
}

TEST_CASE("ray-cast depth oracles: fronto plane and centered sphere") {
  using detail::Primitive;
  using detail::Vec3;
  Vec3 n;

  // fronto-parallel plane at z = 2: every ray direction (u, v, 1) hits with
  // t = 2, i.e. constant scene depth 2
  Primitive plane{Primitive::plane, {0, 0, 2}, {0, 0, -1}, {}};
  for (double u : {-0.5, 0.0, 0.4})
    for (double v : {-0.3, 0.0, 0.5}) {
      const double t = detail::hit(plane, {u, v, 1.0}, n);
      REQUIRE(t == Catch::Approx(2.0).margin(1e-12));
    }

  // sphere center (0, 0, 5), radius 1, central ray: first hit at t = 4
  Primitive sphere{Primitive::sphere, {0, 0, 5}, {1, 0, 0}, {}};
  REQUIRE(detail::hit(sphere, {0, 0, 1}, n) == Catch::Approx(4.0).margin(1e-9));
  REQUIRE(n.z == Catch::Approx(-1.0).margin(1e-9));

  // axis-aligned box straddling the axis, near face at z = 3
  Primitive box{Primitive::box, {0, 0, 4}, {1, 1, 1}, {}};
  REQUIRE(detail::hit(box, {0, 0, 1}, n) == Catch::Approx(3.0).margin(1e-12));

  // miss: ray pointing away
  REQUIRE(!std::isfinite(detail::hit(sphere, {0, 1, 0.001}, n)));
}

TEST_CASE("scene generation is deterministic and in range") {
  SceneSpec spec;
  spec.seed = 31337;
  spec.width = 32;
  spec.height = 32;
  auto [d1, rgb1] = generate_scene(spec);
  auto [d2, rgb2] = generate_scene(spec);
  REQUIRE(d1.data == d2.data);
  REQUIRE(rgb1.data == rgb2.data);
  REQUIRE_NOTHROW(d1.validate());

  spec.seed = 31338;
  auto [d3, rgb3] = generate_scene(spec);
  REQUIRE(d1.data != d3.data);

  SceneSpec empty;
  empty.planes = empty.spheres = empty.boxes = false;
  REQUIRE_THROWS_AS(generate_scene(empty), Error);
}

TEST_CASE("depth edges co-locate with image edges") {
  // at a depth discontinuity the shading or albedo should change too
  std::size_t edges = 0, colocated = 0;
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    SceneSpec spec;
    spec.seed = seed;
    spec.width = 64;
    spec.height = 64;
    auto [d, rgb] = generate_scene(spec);
    const float jump = 0.05f * (d.d_max - d.d_min);
    auto rgb_delta = [&](std::size_t a, std::size_t b) {
      int m = 0;
      for (int c = 0; c < 3; ++c)
        m = std::max(m, std::abs(int(rgb.data[a * 3 + std::size_t(c)]) -
                                 int(rgb.data[b * 3 + std::size_t(c)])));
      return m;
    };
    for (std::size_t y = 1; y + 1 < 64; ++y)
      for (std::size_t x = 1; x + 1 < 64; ++x) {
        const std::size_t i = y * 64 + x;
        if (std::abs(d.data[i] - d.data[i + 1]) > jump) {
          ++edges;
          // look for any RGB change in the 1-pixel neighborhood of the edge
          int delta = rgb_delta(i, i + 1);
          delta = std::max(delta, rgb_delta(i - 64, i - 64 + 1));
          delta = std::max(delta, rgb_delta(i + 64, i + 64 + 1));
          if (delta > 6) ++colocated;
        }
      }
  }
  REQUIRE(edges > 100);  // scenes actually contain depth structure
  REQUIRE(double(colocated) / double(edges) > 0.90);
}

TEST_CASE("PGM16 byte layout is big-endian with a maxval of 65535") {
  QuantizedDepth q;
  q.width = 2;
  q.height = 1;
  q.levels = {0x0000, 0xFFFF};
  q.d_min = 0;
  q.d_max = 1;
  q.bits = 16;
  const auto path = tmp_file("layout.pgm");
  write_pgm16(path, q);
  std::ifstream in(path, std::ios::binary);
  std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  REQUIRE(all.substr(0, 3) == "P5\n");
  REQUIRE(all.find("65535") != std::string::npos);
  REQUIRE(all.size() >= 4);
  REQUIRE(std::uint8_t(all[all.size() - 4]) == 0x00);
  REQUIRE(std::uint8_t(all[all.size() - 3]) == 0x00);
  REQUIRE(std::uint8_t(all[all.size() - 2]) == 0xFF);
  REQUIRE(std::uint8_t(all[all.size() - 1]) == 0xFF);

  auto q2 = read_pgm16(path);
  REQUIRE(q2.levels == q.levels);
  std::filesystem::remove(path);
}

TEST_CASE("PFM round trip is bitwise and positive scale is rejected") {
  auto d = random_depth(5, 3, 77);
  const auto path = tmp_file("roundtrip.pfm");
  write_pfm(path, d);
  auto d2 = read_pfm(path);
  REQUIRE(d2.width == d.width);
  REQUIRE(d2.height == d.height);
  REQUIRE(d2.data == d.data);

  // forge a positive (big-endian) scale marker
  const auto bad = tmp_file("bad.pfm");
  std::ofstream out(bad, std::ios::binary);
  out << "Pf\n2 1\n1.0\n";
  const float payload[2] = {1.0f, 2.0f};
  out.write(reinterpret_cast<const char*>(payload), 8);
  out.close();
  REQUIRE_THROWS_AS(read_pfm(bad), Error);
  std::filesystem::remove(path);
  std::filesystem::remove(bad);
}

TEST_CASE("PPM round trip preserves RGB bytes") {
  RgbImage img;
  img.width = 3;
  img.height = 2;
  img.data = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 250, 251, 252, 253, 254, 255};
  const auto path = tmp_file("roundtrip.ppm");
  write_ppm(path, img);
  auto img2 = read_ppm(path);
  REQUIRE(img2.data == img.data);
  std::filesystem::remove(path);
}

TEST_CASE("sidecar JSON round trips the degradation parameters") {
  auto gt = random_depth(8, 8, 3);
  DegradationSpec spec;
  spec.scale = 4;
  spec.bits = 6;
  spec.noise_sigma = 0.19f;
  spec.seed = 42;
  const auto path = tmp_file("meta.json");
  write_sidecar(path, sidecar_json(gt, spec));
  auto j = read_sidecar(path);
  REQUIRE(j.at("d_min").get<float>() == gt.d_min);
  REQUIRE(j.at("d_max").get<float>() == gt.d_max);
  REQUIRE(j.at("bits").get<int>() == 6);
  REQUIRE(j.at("scale").get<int>() == 4);
  REQUIRE(j.at("seed").get<std::uint64_t>() == 42);
  std::filesystem::remove(path);
}

TEST_CASE("depth map validation rejects malformed rasters") {
  DepthMap d;
  d.width = 2;
  d.height = 2;
  d.data = {1, 2, 3};  // wrong length
  REQUIRE_THROWS_AS(d.validate(), Error);
  d.data = {1, 2, 3, 20};  // out of range
  REQUIRE_THROWS_AS(d.validate(), Error);
  d.d_min = -1;
  d.data = {1, 2, 3, 4};
  REQUIRE_THROWS_AS(d.validate(), Error);  // nonpositive d_min
}
