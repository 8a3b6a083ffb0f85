#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "gdnet/common.hpp"

namespace gdnet {

/// Single-channel depth raster in meters with a declared valid range.
/// d_min must be positive: the training objective works in log depth.
struct DepthMap {
  std::size_t width = 0, height = 0;
  std::vector<float> data;  // row-major, meters
  float d_min = 0.1f, d_max = 10.0f;

  void validate(const char* who = "DepthMap") const {
    if (width * height != data.size())
      fail(who, "width*height != data length");
    if (!(d_min > 0.0f) || !(d_max > d_min)) fail(who, "need 0 < d_min < d_max");
    for (float v : data)
      if (std::isfinite(v) && (v < d_min || v > d_max))
        fail(who, "depth value " + std::to_string(v) + " outside [d_min, d_max]");
  }
};

/// 8-bit RGB raster, interleaved row-major.
struct RgbImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> data;  // 3 bytes per pixel
};

// ---- bit-depth quantization ----

struct QuantizedDepth {
  std::size_t width = 0, height = 0;
  std::vector<std::uint16_t> levels;
  float d_min = 0, d_max = 0;
  int bits = 0;
};

inline float round_half_away(float x) { return std::round(x); }  // std::round is half-away-from-zero

inline QuantizedDepth quantize_depth(const DepthMap& d, int bits) {
  if (bits < 1 || bits > 16) fail("quantize_depth", "bits must be in 1..16, got " + std::to_string(bits));
  const float max_level = float((1u << bits) - 1);
  QuantizedDepth q{d.width, d.height, std::vector<std::uint16_t>(d.data.size()), d.d_min, d.d_max, bits};
  const float inv_range = 1.0f / (d.d_max - d.d_min);
  for (std::size_t i = 0; i < d.data.size(); ++i) {
    const float t = std::clamp((d.data[i] - d.d_min) * inv_range, 0.0f, 1.0f);
    q.levels[i] = std::uint16_t(round_half_away(t * max_level));
  }
  return q;
}

inline DepthMap dequantize_depth(const QuantizedDepth& q) {
  const std::uint16_t max_level = std::uint16_t((1u << q.bits) - 1);
  DepthMap d;
  d.width = q.width;
  d.height = q.height;
  d.d_min = q.d_min;
  d.d_max = q.d_max;
  d.data.resize(q.levels.size());
  const float range = q.d_max - q.d_min;
  for (std::size_t i = 0; i < q.levels.size(); ++i) {
    if (q.levels[i] > max_level)
      fail("dequantize_depth", "level " + std::to_string(q.levels[i]) + " exceeds 2^bits-1");
    d.data[i] = q.d_min + float(q.levels[i]) / float(max_level) * range;
  }
  return d;
}

// ---- degradation synthesizer ----

enum class DownsampleMode { area, nearest };
enum class NoiseOrder { after_quantize, before_quantize };

/// Fully determines D_lq from D_hq: same spec + same input gives
/// bit-identical output under any thread schedule.
struct DegradationSpec {
  int scale = 4;            // downsample factor >= 1
  int bits = 8;             // target bit depth 1..16
  float noise_sigma = 0.0f; // meters
  std::uint64_t seed = 0;
  DownsampleMode downsample = DownsampleMode::area;
  NoiseOrder noise_order = NoiseOrder::after_quantize;
};

inline DepthMap downsample_depth(const DepthMap& d, int scale, DownsampleMode mode) {
  if (scale < 1) fail("degrade", "scale must be >= 1");
  if (d.width % scale != 0 || d.height % scale != 0)
    fail("degrade", "resolution " + std::to_string(d.width) + "x" + std::to_string(d.height) +
                        " not divisible by scale " + std::to_string(scale));
  DepthMap out;
  out.width = d.width / scale;
  out.height = d.height / scale;
  out.d_min = d.d_min;
  out.d_max = d.d_max;
  out.data.resize(out.width * out.height);
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x) {
      if (mode == DownsampleMode::nearest) {
        out.data[y * out.width + x] = d.data[(y * scale) * d.width + x * scale];
      } else {
        double acc = 0;  // sums a (scale x scale) block in fixed order
        for (int dy = 0; dy < scale; ++dy)
          for (int dx = 0; dx < scale; ++dx)
            acc += d.data[(y * scale + dy) * d.width + (x * scale + dx)];
        out.data[y * out.width + x] = float(acc / (double(scale) * scale));
      }
    }
  return out;
}

inline void add_clamped_noise(DepthMap& d, float sigma, std::uint64_t seed) {
  if (sigma <= 0.0f) return;
  std::mt19937_64 rng(derive_seed(seed, rng_tag::noise));
  std::normal_distribution<float> dist(0.0f, sigma);
  for (auto& v : d.data) v = std::clamp(v + dist(rng), d.d_min, d.d_max);
}

/// Fig-style degradation: downsample -> bit-depth compression -> noise,
/// each stage neutral at scale=1 / bits=16 / sigma=0.
inline DepthMap degrade(const DepthMap& d, const DegradationSpec& spec) {
  d.validate("degrade");
  DepthMap cur = downsample_depth(d, spec.scale, spec.downsample);
  if (spec.noise_order == NoiseOrder::before_quantize)
    add_clamped_noise(cur, spec.noise_sigma, spec.seed);
  cur = dequantize_depth(quantize_depth(cur, spec.bits));
  if (spec.noise_order == NoiseOrder::after_quantize)
    add_clamped_noise(cur, spec.noise_sigma, spec.seed);
  return cur;
}

// ---- procedural scene generator ----

struct SceneSpec {
  std::uint64_t seed = 0;
  std::size_t width = 64, height = 64;
  float d_min = 0.5f, d_max = 10.0f;
  int min_primitives = 3, max_primitives = 7;
  bool planes = true, spheres = true, boxes = true;
};

namespace detail {

struct Vec3 {
  double x = 0, y = 0, z = 0;
};
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }
inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 normalize(Vec3 a) {
  const double n = std::sqrt(dot(a, a));
  return {a.x / n, a.y / n, a.z / n};
}

struct Primitive {
  enum Kind { sphere, box, plane } kind;
  Vec3 center;       // sphere/box center; plane point
  Vec3 extent;       // sphere: radius in x; box: half extents; plane: unit normal
  Vec3 albedo;
};

// Rays leave the origin as (u, v, 1)·t, so depth is simply t.
// Returns hit depth (+inf if missed) and the surface normal.
inline double hit(const Primitive& p, Vec3 dir, Vec3& normal) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  switch (p.kind) {
    case Primitive::plane: {
      const double denom = dot(dir, p.extent);
      if (std::abs(denom) < 1e-12) return inf;
      const double t = dot(p.center, p.extent) / denom;
      normal = p.extent;
      return t > 1e-6 ? t : inf;
    }
    case Primitive::sphere: {
      const double r = p.extent.x;
      const Vec3 oc = Vec3{} - p.center;
      const double a = dot(dir, dir);
      const double b = 2.0 * dot(oc, dir);
      const double c = dot(oc, oc) - r * r;
      const double disc = b * b - 4 * a * c;
      if (disc < 0) return inf;
      const double t = (-b - std::sqrt(disc)) / (2 * a);
      if (t <= 1e-6) return inf;
      normal = normalize(dir * t - p.center);
      return t;
    }
    case Primitive::box: {
      double tmin = -inf, tmax = inf;
      int axis = 0;
      const double o[3] = {0, 0, 0};
      const double dv[3] = {dir.x, dir.y, dir.z};
      const double cv[3] = {p.center.x, p.center.y, p.center.z};
      const double ev[3] = {p.extent.x, p.extent.y, p.extent.z};
      for (int i = 0; i < 3; ++i) {
        if (std::abs(dv[i]) < 1e-12) {
          if (o[i] < cv[i] - ev[i] || o[i] > cv[i] + ev[i]) return inf;
          continue;
        }
        double t0 = (cv[i] - ev[i] - o[i]) / dv[i];
        double t1 = (cv[i] + ev[i] - o[i]) / dv[i];
        if (t0 > t1) std::swap(t0, t1);
        if (t0 > tmin) {
          tmin = t0;
          axis = i;
        }
        tmax = std::min(tmax, t1);
      }
      if (tmin > tmax || tmin <= 1e-6) return inf;
      normal = {};
      const double sign = dv[axis] > 0 ? -1.0 : 1.0;
      (axis == 0 ? normal.x : axis == 1 ? normal.y : normal.z) = sign;
      return tmin;
    }
  }
  return inf;
}

}  // namespace detail

/// Ray-casts a deterministic synthetic scene: primitives in front of a
/// background plane, with pseudo-RGB shaded from normals and per-primitive
/// albedo so image edges co-locate with depth edges.
inline std::pair<DepthMap, RgbImage> generate_scene(const SceneSpec& spec) {
  using detail::Vec3;
  using detail::Primitive;
  if (!spec.planes && !spec.spheres && !spec.boxes)
    fail("generate_scene", "empty primitive set");
  std::mt19937_64 rng(derive_seed(spec.seed, rng_tag::scene));
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  const double bg_z = 0.9 * spec.d_max;
  std::vector<Primitive> prims;
  // background: fronto-parallel plane
  prims.push_back({Primitive::plane, {0, 0, bg_z}, {0, 0, -1},
                   {0.3 + 0.5 * uni(rng), 0.3 + 0.5 * uni(rng), 0.3 + 0.5 * uni(rng)}});

  std::vector<Primitive::Kind> kinds;
  if (spec.spheres) kinds.push_back(Primitive::sphere);
  if (spec.boxes) kinds.push_back(Primitive::box);
  if (spec.planes) kinds.push_back(Primitive::plane);
  const int count = spec.min_primitives +
                    int(uni(rng) * double(spec.max_primitives - spec.min_primitives + 1));
  for (int i = 0; i < count; ++i) {
    Primitive p;
    p.kind = kinds[std::size_t(uni(rng) * double(kinds.size())) % kinds.size()];
    const double z = spec.d_min + 1.0 + uni(rng) * (bg_z - spec.d_min - 2.5);
    const double spread = 0.45 * z;  // keep centers inside the frustum
    p.center = {(uni(rng) * 2 - 1) * spread, (uni(rng) * 2 - 1) * spread, z};
    p.albedo = {0.15 + 0.8 * uni(rng), 0.15 + 0.8 * uni(rng), 0.15 + 0.8 * uni(rng)};
    switch (p.kind) {
      case Primitive::sphere:
        p.extent = {0.2 + 0.6 * uni(rng) * z * 0.25, 0, 0};
        break;
      case Primitive::box:
        p.extent = {0.15 + uni(rng) * z * 0.15, 0.15 + uni(rng) * z * 0.15,
                    0.15 + uni(rng) * z * 0.15};
        break;
      case Primitive::plane: {
        // tilted local plane far enough to act as a wall segment
        Vec3 nrm = detail::normalize({(uni(rng) - 0.5) * 0.6, (uni(rng) - 0.5) * 0.6, -1});
        p.extent = nrm;
        p.center = {0, 0, bg_z - 0.5 - uni(rng) * 1.5};
        break;
      }
    }
    prims.push_back(p);
  }

  DepthMap depth;
  depth.width = spec.width;
  depth.height = spec.height;
  depth.d_min = spec.d_min;
  depth.d_max = spec.d_max;
  depth.data.resize(spec.width * spec.height);
  RgbImage rgb;
  rgb.width = spec.width;
  rgb.height = spec.height;
  rgb.data.resize(spec.width * spec.height * 3);

  const Vec3 light = detail::normalize({0.4, -0.6, -1});
  const double tan_half_fov = 0.55;
  for (std::size_t y = 0; y < spec.height; ++y)
    for (std::size_t x = 0; x < spec.width; ++x) {
      const double u = (2.0 * (double(x) + 0.5) / double(spec.width) - 1.0) * tan_half_fov;
      const double v = (2.0 * (double(y) + 0.5) / double(spec.height) - 1.0) * tan_half_fov;
      const Vec3 dir{u, v, 1.0};
      double best = std::numeric_limits<double>::infinity();
      Vec3 normal{0, 0, -1};
      Vec3 albedo{0.5, 0.5, 0.5};
      for (const auto& p : prims) {
        Vec3 nrm;
        const double t = detail::hit(p, dir, nrm);
        if (t < best) {
          best = t;
          normal = nrm;
          albedo = p.albedo;
        }
      }
      double z = std::isfinite(best) ? best * dir.z : bg_z;  // depth = z of hit point
      z = std::clamp(z, double(spec.d_min), double(spec.d_max));
      depth.data[y * spec.width + x] = float(z);
      const double shade = std::max(0.25, -dot(normal, light));
      const std::size_t o = (y * spec.width + x) * 3;
      rgb.data[o + 0] = std::uint8_t(std::clamp(albedo.x * shade, 0.0, 1.0) * 255.0);
      rgb.data[o + 1] = std::uint8_t(std::clamp(albedo.y * shade, 0.0, 1.0) * 255.0);
      rgb.data[o + 2] = std::uint8_t(std::clamp(albedo.z * shade, 0.0, 1.0) * 255.0);
    }
  return {depth, rgb};
}

// ---- file formats ----
// PGM P5 maxval 65535, big-endian payload, for quantized depth.
// PFM "Pf", negative scale marker (little-endian), bottom-up rows, float depth.
// PPM P6 8-bit for RGB. Sidecar metadata as JSON.

namespace detail {
inline void expect(std::istream& in, bool ok, const char* who, const char* what) {
  if (!ok || !in) fail(who, what);
}
}  // namespace detail

inline void write_pgm16(const std::filesystem::path& path, const QuantizedDepth& q) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("write_pgm16", "cannot open " + path.string());
  out << "P5\n" << q.width << " " << q.height << "\n65535\n";
  for (std::uint16_t lv : q.levels) {
    const unsigned char b[2] = {(unsigned char)(lv >> 8), (unsigned char)(lv & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 2);
  }
}

inline QuantizedDepth read_pgm16(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("read_pgm16", "cannot open " + path.string());
  std::string magic;
  in >> magic;
  detail::expect(in, magic == "P5", "read_pgm16", "bad magic (want P5)");
  std::size_t width = 0, height = 0;
  long maxval = 0;
  in >> width >> height >> maxval;
  detail::expect(in, width > 0 && height > 0, "read_pgm16", "bad dimensions");
  detail::expect(in, maxval == 65535, "read_pgm16", "maxval mismatch (want 65535)");
  in.get();  // single whitespace after header
  QuantizedDepth q;
  q.width = width;
  q.height = height;
  q.levels.resize(width * height);
  for (auto& lv : q.levels) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    detail::expect(in, bool(in), "read_pgm16", "truncated payload");
    lv = std::uint16_t((b[0] << 8) | b[1]);
  }
  return q;
}

inline void write_pfm(const std::filesystem::path& path, const DepthMap& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("write_pfm", "cannot open " + path.string());
  out << "Pf\n" << d.width << " " << d.height << "\n-1.0\n";  // negative: little-endian
  for (std::size_t y = d.height; y-- > 0;)                    // bottom-up scanlines
    out.write(reinterpret_cast<const char*>(d.data.data() + y * d.width),
              std::streamsize(d.width * sizeof(float)));
}

inline DepthMap read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("read_pfm", "cannot open " + path.string());
  std::string magic;
  in >> magic;
  detail::expect(in, magic == "Pf", "read_pfm", "bad magic (want Pf)");
  std::size_t width = 0, height = 0;
  double scale = 0;
  in >> width >> height >> scale;
  detail::expect(in, width > 0 && height > 0, "read_pfm", "bad dimensions");
  detail::expect(in, scale < 0, "read_pfm", "positive scale marks big-endian payload; unsupported");
  in.get();
  DepthMap d;
  d.width = width;
  d.height = height;
  d.data.resize(width * height);
  for (std::size_t y = height; y-- > 0;) {
    in.read(reinterpret_cast<char*>(d.data.data() + y * width),
            std::streamsize(width * sizeof(float)));
    detail::expect(in, bool(in), "read_pfm", "truncated payload");
  }
  return d;
}

inline void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("write_ppm", "cannot open " + path.string());
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()), std::streamsize(img.data.size()));
}

inline RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("read_ppm", "cannot open " + path.string());
  std::string magic;
  in >> magic;
  detail::expect(in, magic == "P6", "read_ppm", "bad magic (want P6)");
  std::size_t width = 0, height = 0;
  long maxval = 0;
  in >> width >> height >> maxval;
  detail::expect(in, width > 0 && height > 0 && maxval == 255, "read_ppm", "bad header");
  in.get();
  RgbImage img;
  img.width = width;
  img.height = height;
  img.data.resize(width * height * 3);
  in.read(reinterpret_cast<char*>(img.data.data()), std::streamsize(img.data.size()));
  detail::expect(in, bool(in), "read_ppm", "truncated payload");
  return img;
}

inline nlohmann::json sidecar_json(const DepthMap& gt, const DegradationSpec& spec) {
  return nlohmann::json{{"d_min", gt.d_min},       {"d_max", gt.d_max},
                        {"bits", spec.bits},       {"scale", spec.scale},
                        {"noise_sigma", spec.noise_sigma}, {"seed", spec.seed}};
}

inline void write_sidecar(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) fail("write_sidecar", "cannot open " + path.string());
  out << j.dump(2) << "\n";
}

inline nlohmann::json read_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("read_sidecar", "cannot open " + path.string());
  return nlohmann::json::parse(in);
}

}  // namespace gdnet
