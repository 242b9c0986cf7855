#pragma once

// Closed-set identification: gallery of subject templates, ranked lists per
// probe template, and a batch driver whose output does not depend on the
// number of worker threads.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "facesig/error.hpp"
#include "facesig/matching.hpp"
#include "facesig/signature.hpp"
#include "facesig/weighting.hpp"

namespace facesig {

class Template {
 public:
  Template(std::string template_id, std::vector<Signature> members)
      : id_(std::move(template_id)), members_(std::move(members)) {
    if (members_.empty()) throw Error(ErrorCode::empty_input, "template " + id_ + " is empty");
    if (id_.empty()) throw Error(ErrorCode::invalid_argument, "template id is empty");
    for (const auto& s : members_) {
      if (s.subject_id != members_.front().subject_id)
        throw Error(ErrorCode::invalid_argument,
                    "template " + id_ + " mixes subjects " + members_.front().subject_id +
                        " and " + s.subject_id);
      if (!comparable(s, members_.front()))
        throw Error(ErrorCode::dimension_mismatch,
                    "template " + id_ + " has non-comparable members");
    }
  }

  // Single-image template; the image id doubles as the template id.
  explicit Template(Signature sig) : Template(sig.image_id, std::vector<Signature>{sig}) {}

  const std::string& id() const { return id_; }
  const std::string& subject_id() const { return members_.front().subject_id; }
  const std::vector<Signature>& members() const { return members_; }
  const PatchLayout& layout() const { return members_.front().patch.layout; }
  std::size_t attribute_dim() const { return members_.front().attributes.size(); }

 private:
  std::string id_;
  std::vector<Signature> members_;
};

class Gallery {
 public:
  explicit Gallery(std::vector<Template> templates) : templates_(std::move(templates)) {
    if (templates_.empty()) throw Error(ErrorCode::empty_input, "gallery is empty");
    std::set<std::string> seen;
    for (const auto& t : templates_) {
      if (!seen.insert(t.subject_id()).second)
        throw Error(ErrorCode::invalid_argument, "duplicate gallery subject " + t.subject_id());
      if (!(t.layout() == layout()) || t.attribute_dim() != attribute_dim())
        throw Error(ErrorCode::dimension_mismatch,
                    "gallery subject " + t.subject_id() + " does not match the gallery layout");
    }
  }

  const std::vector<Template>& templates() const { return templates_; }
  const PatchLayout& layout() const { return templates_.front().layout(); }
  std::size_t attribute_dim() const { return templates_.front().attribute_dim(); }
  std::size_t size() const { return templates_.size(); }

 private:
  std::vector<Template> templates_;
};

enum class WeightMode { uniform, trained, probe };
enum class Aggregation { max, mean };

struct IdentifyOptions {
  FusionConfig fusion;
  WeightMode weight_mode = WeightMode::uniform;
  Aggregation aggregation = Aggregation::max;
  // Required when weight_mode == trained.
  std::optional<AttributeAccuracyTable> accuracy;
};

struct RankedEntry {
  std::string subject_id;
  double score = 0.0;
  ScoreBreakdown breakdown;

  bool operator==(const RankedEntry&) const = default;
};

struct SkippedSubject {
  std::string subject_id;
  std::string reason;

  bool operator==(const SkippedSubject&) const = default;
};

struct RankedList {
  std::string probe_id;
  std::vector<RankedEntry> entries;  // score desc, subject_id asc
  std::vector<SkippedSubject> skipped;

  bool operator==(const RankedList&) const = default;
};

namespace detail {

inline bool ranks_before(const RankedEntry& a, const RankedEntry& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.subject_id < b.subject_id;
}

// Pre-resolved per-probe-member weights, so trained/probe weights are derived
// once per call instead of once per pair.
struct ProbeWeights {
  FusionConfig cfg;
  std::vector<WeightVector> per_member;  // empty for the plain scheme
};

inline ProbeWeights resolve_weights(const Template& probe, const IdentifyOptions& opt) {
  ProbeWeights out;
  out.cfg = opt.fusion;
  switch (opt.weight_mode) {
    case WeightMode::uniform:
      out.cfg.scheme = FusionScheme::plain;
      break;
    case WeightMode::trained: {
      if (!opt.accuracy)
        throw Error(ErrorCode::invalid_argument, "weight_mode=trained needs an accuracy table");
      out.cfg.scheme = FusionScheme::weighted;
      const auto& names = probe.members().front().attributes.attribute_names;
      const auto w = weights_from_training_accuracy(*opt.accuracy, names);
      out.per_member.assign(probe.members().size(), w);
      break;
    }
    case WeightMode::probe:
      out.cfg.scheme = FusionScheme::weighted;
      for (const auto& s : probe.members())
        out.per_member.push_back(weights_from_probe_confidence(s.attributes));
      break;
  }
  return out;
}

}  // namespace detail

/// Scores `probe` against every gallery template. A template's score is the
/// max (or mean) over all member pairs; pairs with no mutually visible patch
/// are dropped, and a subject whose every pair is dropped is reported as
/// skipped rather than ranked.
inline RankedList identify(const Template& probe, const Gallery& gallery,
                           const IdentifyOptions& opt = {}) {
  if (!(probe.layout() == gallery.layout()) || probe.attribute_dim() != gallery.attribute_dim())
    throw Error(ErrorCode::dimension_mismatch,
                "probe " + probe.id() + " is not comparable with the gallery");
  const auto pw = detail::resolve_weights(probe, opt);

  RankedList out;
  out.probe_id = probe.id();
  for (const auto& tmpl : gallery.templates()) {
    std::optional<ScoreBreakdown> best;
    ScoreBreakdown sum;
    std::size_t count = 0;
    std::string reason;
    for (const auto& g : tmpl.members()) {
      for (std::size_t pi = 0; pi < probe.members().size(); ++pi) {
        const auto& p = probe.members()[pi];
        ScoreBreakdown b;
        try {
          b = pw.per_member.empty() ? match_signatures(g, p, pw.cfg)
                                    : match_signatures(g, p, pw.cfg, pw.per_member[pi]);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::no_comparable_patches) throw;
          reason = e.what();
          continue;
        }
        if (!best || b.fused_score > best->fused_score) best = b;
        sum.patch_score += b.patch_score;
        sum.attribute_score += b.attribute_score;
        sum.fused_score += b.fused_score;
        sum.non_occluded_pairs = count == 0 ? b.non_occluded_pairs
                                            : std::min(sum.non_occluded_pairs, b.non_occluded_pairs);
        ++count;
      }
    }
    if (count == 0) {
      out.skipped.push_back({tmpl.subject_id(), reason});
      continue;
    }
    ScoreBreakdown agg = *best;
    if (opt.aggregation == Aggregation::mean) {
      const double c = static_cast<double>(count);
      agg = {sum.patch_score / c, sum.attribute_score / c, sum.fused_score / c,
             sum.non_occluded_pairs};
    }
    out.entries.push_back({tmpl.subject_id(), agg.fused_score, agg});
  }
  if (out.entries.empty())
    throw Error(ErrorCode::no_comparable_patches,
                "probe " + probe.id() + ": every gallery subject was skipped");
  std::sort(out.entries.begin(), out.entries.end(), detail::ranks_before);
  return out;
}

struct IdentifyOutcome {
  std::string probe_id;
  std::optional<RankedList> ranked;
  std::optional<ErrorCode> error_code;
  std::string error;

  bool ok() const { return ranked.has_value(); }
  bool operator==(const IdentifyOutcome&) const = default;
};

/// Runs identify for every probe. Failures are captured per probe. Output
/// order follows input order for any `threads` value (0 = hardware count).
inline std::vector<IdentifyOutcome> batch_identify(const std::vector<Template>& probes,
                                                   const Gallery& gallery,
                                                   const IdentifyOptions& opt = {},
                                                   unsigned threads = 1) {
  std::vector<IdentifyOutcome> out(probes.size());
  auto run_one = [&](std::size_t i) {
    auto& slot = out[i];
    slot.probe_id = probes[i].id();
    try {
      slot.ranked = identify(probes[i], gallery, opt);
    } catch (const Error& e) {
      slot.error_code = e.code();
      slot.error = e.what();
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, probes.size()));
  if (threads <= 1) {
    for (std::size_t i = 0; i < probes.size(); ++i) run_one(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> workers;
  workers.reserve(threads);
  for (unsigned t = 0; t < threads; ++t)
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < probes.size(); i = next++) run_one(i);
    });
  return out;
}

struct AttributeExplanation {
  std::vector<std::string> shared;
  std::vector<std::string> gallery_only;
  std::vector<std::string> probe_only;

  bool operator==(const AttributeExplanation&) const = default;
};

/// Partitions fired binary attributes into shared / gallery-only / probe-only.
inline AttributeExplanation explain_match(const Signature& g, const Signature& p) {
  const auto& ga = g.attributes;
  const auto& pa = p.attributes;
  if (ga.binary.size() != pa.binary.size())
    throw Error(ErrorCode::dimension_mismatch, "attribute dimensions differ");
  const auto& names = ga.attribute_names.size() == ga.binary.size()
                          ? ga.attribute_names
                          : default_attribute_names(ga.binary.size());
  AttributeExplanation out;
  for (std::size_t i = 0; i < ga.binary.size(); ++i) {
    const bool in_g = ga.binary[i] != 0, in_p = pa.binary[i] != 0;
    if (in_g && in_p) out.shared.push_back(names[i]);
    else if (in_g) out.gallery_only.push_back(names[i]);
    else if (in_p) out.probe_only.push_back(names[i]);
  }
  return out;
}

}  // namespace facesig
