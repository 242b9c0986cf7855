#pragma once

// Two-component face signature: per-patch features with occlusion bits,
// plus soft facial attribute logits with their derived probabilities and
// binary flags.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "facesig/error.hpp"

namespace facesig {

struct PatchLayout {
  std::size_t patch_count = 0;  // m
  std::size_t feature_dim = 0;  // n
  std::string scheme_name;

  bool operator==(const PatchLayout&) const = default;

  static PatchLayout prfs() { return {64, 1024, "PRFS"}; }
  static PatchLayout dprfs() { return {8, 512, "DPRFS"}; }
};

// Features are stored patch-major: the n features of patch j occupy
// [j * n, (j + 1) * n). This is the column-major order of the n x m matrix.
struct PatchFeatureComponent {
  PatchLayout layout;
  std::vector<double> features;
  std::vector<std::uint8_t> occlusion;  // 1 = non-occluded

  std::span<const double> patch(std::size_t j) const {
    return std::span<const double>(features).subspan(j * layout.feature_dim,
                                                     layout.feature_dim);
  }

  bool visible(std::size_t j) const { return occlusion[j] != 0; }

  bool operator==(const PatchFeatureComponent&) const = default;
};

struct AttributeComponent {
  std::vector<double> logits;
  std::vector<double> probabilities;
  std::vector<std::uint8_t> binary;
  std::vector<std::string> attribute_names;

  std::size_t size() const { return logits.size(); }

  bool operator==(const AttributeComponent&) const = default;
};

struct Signature {
  std::string subject_id;
  std::string image_id;
  PatchFeatureComponent patch;
  AttributeComponent attributes;

  bool operator==(const Signature&) const = default;
};

struct WeightVector {
  std::vector<double> weights;

  std::size_t size() const { return weights.size(); }

  bool operator==(const WeightVector&) const = default;
};

inline constexpr std::size_t kDefaultAttributeCount = 40;
inline constexpr double kAttributeThreshold = 0.5;
inline constexpr double kProbabilityTolerance = 1e-9;

// The 40 soft facial attributes, in their default storage order.
inline constexpr std::array<std::string_view, kDefaultAttributeCount> kFacialAttributes = {
    "5 O'Clock Shadow", "Male",
    "Arched Eyebrows",  "Mouth Slightly Open",
    "Attractive",       "Mustache",
    "Bags Under Eyes",  "Narrow Eyes",
    "Bald",             "No Beard",
    "Bangs",            "Oval Face",
    "Big Lips",         "Pale Skin",
    "Big Nose",         "Pointy Nose",
    "Black Hair",       "Receding Hairline",
    "Blond Hair",       "Rosy Cheeks",
    "Blurry",           "Sideburns",
    "Brown Hair",       "Smiling",
    "Bushy Eyebrows",   "Straight Hair",
    "Chubby",           "Wavy Hair",
    "Double Chin",      "Wearing Earrings",
    "Eyeglasses",       "Wearing Hat",
    "Goatee",           "Wearing Lipstick",
    "Gray Hair",        "Wearing Necklace",
    "Heavy Makeup",     "Wearing Necktie",
    "High Cheekbones",  "Young",
};

/// Attribute labels for dimension `d`: the 40 facial attributes when d == 40,
/// otherwise attr1..attrd.
inline std::vector<std::string> default_attribute_names(std::size_t d) {
  std::vector<std::string> names;
  names.reserve(d);
  if (d == kDefaultAttributeCount) {
    for (auto name : kFacialAttributes) names.emplace_back(name);
  } else {
    for (std::size_t i = 0; i < d; ++i) names.push_back("attr" + std::to_string(i + 1));
  }
  return names;
}

inline double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

/// Derives probabilities and binary flags from logits. Flags use a strict
/// `p > 0.5`, so a zero logit is attribute-absent.
inline AttributeComponent make_attribute_component(std::vector<double> logits,
                                                   std::vector<std::string> names = {}) {
  AttributeComponent out;
  if (names.empty()) names = default_attribute_names(logits.size());
  out.probabilities.reserve(logits.size());
  out.binary.reserve(logits.size());
  for (double a : logits) {
    const double p = sigmoid(a);
    out.probabilities.push_back(p);
    out.binary.push_back(p > kAttributeThreshold ? 1 : 0);
  }
  out.logits = std::move(logits);
  out.attribute_names = std::move(names);
  return out;
}

namespace detail {

inline double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

inline void validate_layout(const PatchLayout& layout, std::vector<std::string>& out) {
  if (layout.patch_count < 1) out.push_back("patch.layout.patch_count must be >= 1");
  if (layout.feature_dim < 1) out.push_back("patch.layout.feature_dim must be >= 1");
}

inline void validate_patch(const PatchFeatureComponent& patch, std::vector<std::string>& out) {
  validate_layout(patch.layout, out);
  const std::size_t m = patch.layout.patch_count;
  const std::size_t n = patch.layout.feature_dim;
  bool features_ok = true;
  if (patch.features.size() != m * n) {
    std::ostringstream os;
    os << "patch.features has " << patch.features.size() << " entries, expected " << m * n;
    out.push_back(os.str());
    features_ok = false;
  }
  for (std::size_t i = 0; i < patch.features.size(); ++i) {
    if (!std::isfinite(patch.features[i])) {
      out.push_back("patch.features[" + std::to_string(i) + "] is not finite");
      features_ok = false;
      break;
    }
  }
  bool occlusion_ok = true;
  if (patch.occlusion.size() != m) {
    std::ostringstream os;
    os << "patch.occlusion has " << patch.occlusion.size() << " entries, expected " << m;
    out.push_back(os.str());
    occlusion_ok = false;
  }
  for (std::size_t j = 0; j < patch.occlusion.size(); ++j) {
    if (patch.occlusion[j] > 1) {
      out.push_back("patch.occlusion[" + std::to_string(j) + "] is not 0 or 1");
      occlusion_ok = false;
    }
  }
  if (!features_ok || !occlusion_ok || n == 0) return;
  for (std::size_t j = 0; j < m; ++j) {
    if (patch.visible(j) && squared_norm(patch.patch(j)) == 0.0)
      out.push_back("patch.features column " + std::to_string(j) +
                    " is non-occluded but has zero norm");
  }
}

inline void validate_attributes(const AttributeComponent& attrs, std::vector<std::string>& out) {
  const std::size_t d = attrs.logits.size();
  if (d < 1) {
    out.push_back("attributes.logits must have at least one entry");
    return;
  }
  auto check_size = [&](std::size_t size, const char* field) {
    if (size == d) return true;
    std::ostringstream os;
    os << "attributes." << field << " has " << size << " entries, expected " << d;
    out.push_back(os.str());
    return false;
  };
  const bool probs_ok = check_size(attrs.probabilities.size(), "probabilities");
  const bool binary_ok = check_size(attrs.binary.size(), "binary");
  check_size(attrs.attribute_names.size(), "attribute_names");

  bool logits_finite = true;
  for (std::size_t i = 0; i < d; ++i) {
    if (!std::isfinite(attrs.logits[i])) {
      out.push_back("attributes.logits[" + std::to_string(i) + "] is not finite");
      logits_finite = false;
    }
  }
  if (logits_finite && squared_norm(attrs.logits) == 0.0)
    out.push_back("attributes.logits has zero norm");
  if (!logits_finite) return;

  if (probs_ok) {
    for (std::size_t i = 0; i < d; ++i) {
      const double p = attrs.probabilities[i];
      if (!(p >= 0.0 && p <= 1.0)) {
        out.push_back("attributes.probabilities[" + std::to_string(i) + "] outside [0,1]");
      } else if (std::abs(p - sigmoid(attrs.logits[i])) > kProbabilityTolerance) {
        out.push_back("attributes.probabilities[" + std::to_string(i) +
                      "] disagrees with sigmoid(logits[" + std::to_string(i) + "])");
      }
    }
  }
  if (binary_ok && probs_ok) {
    for (std::size_t i = 0; i < d; ++i) {
      const std::uint8_t expected = attrs.probabilities[i] > kAttributeThreshold ? 1 : 0;
      if (attrs.binary[i] != expected)
        out.push_back("attributes.binary[" + std::to_string(i) +
                      "] disagrees with probabilities > 0.5");
    }
  }
}

}  // namespace detail

/// Lists every violated invariant in a fixed order (ids, patch, attributes).
/// An empty result means the signature is valid.
inline std::vector<std::string> validate(const Signature& sig) {
  std::vector<std::string> out;
  if (sig.subject_id.empty()) out.push_back("subject_id is empty");
  if (sig.image_id.empty()) out.push_back("image_id is empty");
  detail::validate_patch(sig.patch, out);
  detail::validate_attributes(sig.attributes, out);
  return out;
}

inline std::vector<std::string> validate(const WeightVector& w) {
  std::vector<std::string> out;
  if (w.weights.empty()) out.push_back("weights is empty");
  bool any_positive = false;
  for (std::size_t i = 0; i < w.weights.size(); ++i) {
    const double x = w.weights[i];
    if (!std::isfinite(x) || x < 0.0)
      out.push_back("weights[" + std::to_string(i) + "] is negative or not finite");
    else if (x > 0.0)
      any_positive = true;
  }
  if (!w.weights.empty() && !any_positive) out.push_back("weights has no positive entry");
  return out;
}

inline bool comparable(const Signature& a, const Signature& b) {
  return a.patch.layout == b.patch.layout && a.attributes.size() == b.attributes.size();
}

namespace detail {

[[noreturn]] inline void throw_violations(const std::vector<std::string>& violations,
                                          std::string_view what) {
  std::string msg(what);
  msg += ": ";
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i) msg += "; ";
    msg += violations[i];
  }
  throw Error(ErrorCode::invariant_violation, msg);
}

}  // namespace detail

inline void require_valid(const Signature& sig) {
  auto v = validate(sig);
  if (!v.empty()) detail::throw_violations(v, "invalid signature");
}

inline void require_valid(const WeightVector& w) {
  auto v = validate(w);
  if (!v.empty()) detail::throw_violations(v, "invalid weight vector");
}

/// Packages an upstream patch component and attribute logits into a signature.
inline Signature assemble_signature(std::string subject_id, std::string image_id,
                                    PatchFeatureComponent patch, std::vector<double> logits,
                                    std::vector<std::string> attribute_names = {}) {
  if (subject_id.empty() || image_id.empty())
    throw Error(ErrorCode::invalid_argument, "subject_id and image_id must be nonempty");
  const auto& layout = patch.layout;
  if (patch.features.size() != layout.patch_count * layout.feature_dim ||
      patch.occlusion.size() != layout.patch_count)
    throw Error(ErrorCode::dimension_mismatch,
                "patch component does not match its declared layout");
  for (double a : logits)
    if (!std::isfinite(a)) throw Error(ErrorCode::invalid_argument, "logits must be finite");
  if (!attribute_names.empty() && attribute_names.size() != logits.size())
    throw Error(ErrorCode::dimension_mismatch, "attribute_names size differs from logits");

  Signature sig{std::move(subject_id), std::move(image_id), std::move(patch),
                make_attribute_component(std::move(logits), std::move(attribute_names))};
  require_valid(sig);
  return sig;
}

}  // namespace facesig
