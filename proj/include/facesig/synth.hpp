#pragma once

// Deterministic synthetic benchmark with a latent-identity model: every
// subject owns a latent patch matrix (unit-norm columns) and a latent logit
// vector; images are noisy copies. Probe images additionally get corrupted
// patch columns, dropped occlusion bits, and sign-flipped attribute logits,
// so patch-only matching degrades while attributes keep identity signal.
//
// Draw order on the single counter-based stream (fixes the output bytes):
//   1. per subject s: for each patch j, n gaussians (then column normalized);
//      then d gaussians scaled by latent_logit_scale.
//   2. per subject s, per image i (i = 0 is the gallery image):
//      a. n*m gaussians of feature noise, patch-major;
//      b. probes only, per patch j: one uniform for corruption (and, if
//         corrupted, n gaussians for the replacement column), then one
//         uniform for occlusion;
//      c. per attribute: one gaussian of logit noise; probes also draw one
//         uniform for the sign flip.
// Gaussians use Box-Muller on two uniforms and keep the cosine branch only.
// Every stored value is rounded to float32 so files reproduce it exactly.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "facesig/error.hpp"
#include "facesig/identification.hpp"
#include "facesig/signature.hpp"

namespace facesig {

/// Counter-based SplitMix64 stream: draw i is mix(seed + i * golden), so
/// the sequence is identical on every platform and standard library.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) noexcept : seed_(seed) {}

  std::uint64_t next() noexcept {
    ++counter_;
    std::uint64_t z = seed_ + counter_ * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double gaussian() noexcept {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t draws() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

struct SynthConfig {
  std::uint64_t seed = 1;
  std::size_t subjects = 50;
  std::size_t images_per_subject = 4;
  PatchLayout layout{8, 64, "SYNTH"};
  std::size_t attribute_dim = kDefaultAttributeCount;
  double patch_noise_sigma = 0.1;
  double attribute_noise_sigma = 0.1;
  double latent_logit_scale = 2.0;
  double corrupt_fraction = 0.0;
  double occlusion_rate = 0.0;
  double attribute_flip_rate = 0.0;
};

struct SynthBenchmark {
  std::vector<Signature> gallery;  // one per subject
  std::vector<Signature> probes;   // images 1.. of every subject

  Gallery make_gallery() const {
    std::vector<Template> t;
    t.reserve(gallery.size());
    for (const auto& s : gallery) t.emplace_back(s.subject_id, std::vector<Signature>{s});
    return Gallery(std::move(t));
  }

  std::vector<Template> make_probes() const {
    std::vector<Template> t;
    t.reserve(probes.size());
    for (const auto& s : probes) t.emplace_back(s);
    return t;
  }
};

inline std::vector<std::string> validate(const SynthConfig& c) {
  std::vector<std::string> out;
  auto rate = [&](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) out.push_back(std::string(name) + " must be in [0,1]");
  };
  auto sigma = [&](double v, const char* name) {
    if (!(std::isfinite(v) && v >= 0.0)) out.push_back(std::string(name) + " must be finite and >= 0");
  };
  if (c.subjects < 1) out.push_back("subjects must be >= 1");
  if (c.images_per_subject < 2)
    out.push_back("images_per_subject must be >= 2 (image 0 is the gallery image)");
  if (c.layout.patch_count < 1 || c.layout.feature_dim < 1)
    out.push_back("layout needs patch_count >= 1 and feature_dim >= 1");
  if (c.layout.scheme_name.empty()) out.push_back("layout scheme name is empty");
  if (c.attribute_dim < 1) out.push_back("attribute_dim must be >= 1");
  sigma(c.patch_noise_sigma, "patch_noise_sigma");
  sigma(c.attribute_noise_sigma, "attribute_noise_sigma");
  sigma(c.latent_logit_scale, "latent_logit_scale");
  if (c.latent_logit_scale == 0.0) out.push_back("latent_logit_scale must be > 0");
  rate(c.corrupt_fraction, "corrupt_fraction");
  rate(c.occlusion_rate, "occlusion_rate");
  rate(c.attribute_flip_rate, "attribute_flip_rate");
  if (c.occlusion_rate == 1.0) out.push_back("occlusion_rate = 1 leaves every probe unscorable");
  return out;
}

namespace detail {

inline double to_f32(double x) { return static_cast<double>(static_cast<float>(x)); }

inline void unit_gaussian_column(CounterRng& rng, std::span<double> col) {
  double ss = 0.0;
  for (auto& x : col) {
    x = rng.gaussian();
    ss += x * x;
  }
  const double inv = ss > 0.0 ? 1.0 / std::sqrt(ss) : 0.0;
  for (auto& x : col) x *= inv;
}

inline std::string padded(const char* prefix, std::size_t v, std::size_t count) {
  std::size_t width = 1;
  for (std::size_t c = count > 0 ? count - 1 : 0; c >= 10; c /= 10) ++width;
  std::ostringstream os;
  os << prefix << std::setw(static_cast<int>(width)) << std::setfill('0') << v;
  return os.str();
}

}  // namespace detail

inline SynthBenchmark generate_benchmark(const SynthConfig& cfg) {
  if (auto v = validate(cfg); !v.empty()) {
    std::string msg = "invalid synth config: ";
    for (std::size_t i = 0; i < v.size(); ++i) msg += (i ? "; " : "") + v[i];
    throw Error(ErrorCode::invalid_argument, msg);
  }
  const std::size_t m = cfg.layout.patch_count, n = cfg.layout.feature_dim, d = cfg.attribute_dim;
  CounterRng rng(cfg.seed);

  std::vector<std::vector<double>> latent_features(cfg.subjects, std::vector<double>(m * n));
  std::vector<std::vector<double>> latent_logits(cfg.subjects, std::vector<double>(d));
  for (std::size_t s = 0; s < cfg.subjects; ++s) {
    for (std::size_t j = 0; j < m; ++j)
      detail::unit_gaussian_column(rng, std::span<double>(latent_features[s]).subspan(j * n, n));
    for (auto& a : latent_logits[s]) a = cfg.latent_logit_scale * rng.gaussian();
  }

  const auto names = default_attribute_names(d);
  SynthBenchmark out;
  std::vector<double> replacement(n);
  for (std::size_t s = 0; s < cfg.subjects; ++s) {
    const std::string subject = detail::padded("S", s, cfg.subjects);
    for (std::size_t i = 0; i < cfg.images_per_subject; ++i) {
      const bool probe = i > 0;
      PatchFeatureComponent patch{cfg.layout, std::vector<double>(m * n),
                                  std::vector<std::uint8_t>(m, 1)};
      for (std::size_t e = 0; e < m * n; ++e)
        patch.features[e] = latent_features[s][e] + cfg.patch_noise_sigma * rng.gaussian();
      if (probe) {
        for (std::size_t j = 0; j < m; ++j) {
          if (rng.uniform() < cfg.corrupt_fraction) {
            detail::unit_gaussian_column(rng, replacement);
            std::copy(replacement.begin(), replacement.end(), patch.features.begin() + j * n);
          }
          patch.occlusion[j] = rng.uniform() < cfg.occlusion_rate ? 0 : 1;
        }
      }
      for (auto& x : patch.features) x = detail::to_f32(x);

      std::vector<double> logits(d);
      for (std::size_t a = 0; a < d; ++a) {
        double v = latent_logits[s][a] + cfg.attribute_noise_sigma * rng.gaussian();
        if (probe && rng.uniform() < cfg.attribute_flip_rate) v = -v;
        logits[a] = detail::to_f32(v);
      }
      auto sig = assemble_signature(subject, subject + detail::padded("_I", i, cfg.images_per_subject),
                                    std::move(patch), std::move(logits), names);
      (probe ? out.probes : out.gallery).push_back(std::move(sig));
    }
  }
  return out;
}

}  // namespace facesig
