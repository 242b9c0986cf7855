#pragma once

// Scoring math for gallery/probe signature pairs: occlusion-gated patch
// cosine, plain and weighted attribute cosine, and their linear fusion.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "facesig/error.hpp"
#include "facesig/signature.hpp"

namespace facesig {

enum class AttributeSource { logits, probabilities, binary };
enum class FusionScheme { plain, weighted };

inline constexpr double kDefaultLambda = 0.1;

struct FusionConfig {
  double lambda = kDefaultLambda;
  AttributeSource attribute_source = AttributeSource::logits;
  FusionScheme scheme = FusionScheme::plain;
};

struct ScoreBreakdown {
  double patch_score = 0.0;
  double attribute_score = 0.0;
  double fused_score = 0.0;
  std::size_t non_occluded_pairs = 0;

  bool operator==(const ScoreBreakdown&) const = default;
};

namespace detail {

inline double clamp_unit(double x) { return std::clamp(x, -1.0, 1.0); }

inline void require_same_length(std::size_t a, std::size_t b) {
  if (a != b)
    throw Error(ErrorCode::dimension_mismatch, "vector lengths differ: " + std::to_string(a) +
                                                   " vs " + std::to_string(b));
}

}  // namespace detail

/// u.v / (|u| |v|), clamped to [-1, 1]. Zero vectors are an error.
inline double cosine(std::span<const double> u, std::span<const double> v) {
  detail::require_same_length(u.size(), v.size());
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (!std::isfinite(dot) || !std::isfinite(uu) || !std::isfinite(vv))
    throw Error(ErrorCode::invalid_argument, "cosine of non-finite input");
  if (uu == 0.0 || vv == 0.0) throw Error(ErrorCode::zero_norm, "cosine of zero-norm vector");
  return detail::clamp_unit(dot / (std::sqrt(uu) * std::sqrt(vv)));
}

/// sum(w g p) / (sqrt(sum(w g^2)) sqrt(sum(w p^2))), clamped to [-1, 1].
inline double weighted_cosine(std::span<const double> g, std::span<const double> p,
                              std::span<const double> w) {
  detail::require_same_length(g.size(), p.size());
  detail::require_same_length(g.size(), w.size());
  double dot = 0.0, gg = 0.0, pp = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(w[i] >= 0.0))
      throw Error(ErrorCode::invalid_argument,
                  "weight " + std::to_string(i) + " is negative or NaN");
    dot += w[i] * g[i] * p[i];
    gg += w[i] * g[i] * g[i];
    pp += w[i] * p[i] * p[i];
  }
  if (!std::isfinite(dot) || !std::isfinite(gg) || !std::isfinite(pp))
    throw Error(ErrorCode::invalid_argument, "weighted cosine of non-finite input");
  if (gg == 0.0 || pp == 0.0)
    throw Error(ErrorCode::zero_norm, "weighted cosine with zero weighted norm");
  return detail::clamp_unit(dot / (std::sqrt(gg) * std::sqrt(pp)));
}

inline double weighted_cosine(std::span<const double> g, std::span<const double> p,
                              const WeightVector& w) {
  return weighted_cosine(g, p, std::span<const double>(w.weights));
}

struct PatchScore {
  double score = 0.0;
  std::size_t non_occluded_pairs = 0;
};

/// Mean cosine over patches visible in both components.
inline PatchScore patch_component_score(const PatchFeatureComponent& g,
                                        const PatchFeatureComponent& p) {
  if (!(g.layout == p.layout))
    throw Error(ErrorCode::dimension_mismatch, "patch layouts differ");
  const std::size_t m = g.layout.patch_count;
  if (g.occlusion.size() != m || p.occlusion.size() != m ||
      g.features.size() != m * g.layout.feature_dim ||
      p.features.size() != m * p.layout.feature_dim)
    throw Error(ErrorCode::dimension_mismatch, "patch component does not match its layout");

  double sum = 0.0;
  std::size_t k = 0;
  for (std::size_t j = 0; j < m; ++j) {
    if (!(g.visible(j) && p.visible(j))) continue;
    sum += cosine(g.patch(j), p.patch(j));
    ++k;
  }
  if (k == 0) throw Error(ErrorCode::no_comparable_patches, "no comparable patches");
  return {detail::clamp_unit(sum / static_cast<double>(k)), k};
}

namespace detail {

// Binary flags widened to reals so every source goes through the same cosine.
class SourceVector {
 public:
  SourceVector(const AttributeComponent& a, AttributeSource source) {
    switch (source) {
      case AttributeSource::logits: view_ = a.logits; break;
      case AttributeSource::probabilities: view_ = a.probabilities; break;
      case AttributeSource::binary:
        storage_.assign(a.binary.begin(), a.binary.end());
        view_ = storage_;
        break;
    }
  }

  std::span<const double> view() const { return view_; }

 private:
  std::vector<double> storage_;
  std::span<const double> view_;
};

}  // namespace detail

inline double attribute_score(const AttributeComponent& g, const AttributeComponent& p,
                              AttributeSource source = AttributeSource::logits) {
  if (g.size() != p.size())
    throw Error(ErrorCode::dimension_mismatch, "attribute dimensions differ");
  detail::SourceVector gv(g, source), pv(p, source);
  return cosine(gv.view(), pv.view());
}

inline double weighted_attribute_score(const AttributeComponent& g, const AttributeComponent& p,
                                       const WeightVector& w,
                                       AttributeSource source = AttributeSource::logits) {
  if (g.size() != p.size() || g.size() != w.size())
    throw Error(ErrorCode::dimension_mismatch, "attribute or weight dimensions differ");
  detail::SourceVector gv(g, source), pv(p, source);
  return weighted_cosine(gv.view(), pv.view(), w);
}

inline double fuse_scores(double patch_score, double attribute_score, double lambda) {
  if (!std::isfinite(patch_score) || !std::isfinite(attribute_score) || !std::isfinite(lambda))
    throw Error(ErrorCode::invalid_argument, "fuse_scores: non-finite input");
  if (lambda < 0.0) throw Error(ErrorCode::invalid_argument, "fuse_scores: lambda < 0");
  return patch_score + lambda * attribute_score;
}

namespace detail {

inline void check_config(const FusionConfig& cfg) {
  if (!std::isfinite(cfg.lambda) || cfg.lambda < 0.0)
    throw Error(ErrorCode::invalid_argument, "lambda must be finite and >= 0");
}

inline ScoreBreakdown match_impl(const Signature& g, const Signature& p, const FusionConfig& cfg,
                                 const WeightVector* w) {
  check_config(cfg);
  if (!comparable(g, p))
    throw Error(ErrorCode::dimension_mismatch,
                "signatures " + g.image_id + " and " + p.image_id + " are not comparable");
  ScoreBreakdown out;
  try {
    const auto ps = patch_component_score(g.patch, p.patch);
    out.patch_score = ps.score;
    out.non_occluded_pairs = ps.non_occluded_pairs;
  } catch (const Error& e) {
    rethrow_with_context(e, "patch component");
  }
  try {
    out.attribute_score =
        w ? weighted_attribute_score(g.attributes, p.attributes, *w, cfg.attribute_source)
          : attribute_score(g.attributes, p.attributes, cfg.attribute_source);
  } catch (const Error& e) {
    rethrow_with_context(e, "attribute component");
  }
  out.fused_score = fuse_scores(out.patch_score, out.attribute_score, cfg.lambda);
  return out;
}

}  // namespace detail

/// Plain matcher: patch score fused with the unweighted attribute cosine.
inline ScoreBreakdown match_signatures(const Signature& g, const Signature& p,
                                       const FusionConfig& cfg = {}) {
  if (cfg.scheme != FusionScheme::plain)
    throw Error(ErrorCode::invalid_argument, "weighted scheme requires a weight vector");
  return detail::match_impl(g, p, cfg, nullptr);
}

/// Weighted matcher: the attribute cosine uses per-attribute weights.
inline ScoreBreakdown match_signatures(const Signature& g, const Signature& p,
                                       const FusionConfig& cfg, const WeightVector& w) {
  if (cfg.scheme != FusionScheme::weighted)
    throw Error(ErrorCode::invalid_argument, "plain scheme does not take a weight vector");
  return detail::match_impl(g, p, cfg, &w);
}

}  // namespace facesig
