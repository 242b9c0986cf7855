#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "facesig/matching.hpp"
#include "facesig/weighting.hpp"
#include "oracle.hpp"
#include "test_support.hpp"

using namespace facesig;
using facesig::testing::random_signature;
using facesig::testing::small_layout;

namespace {

template <class Fn>
ErrorCode error_code_of(Fn fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::invalid_argument;
}

using Vec = std::vector<double>;

}  // namespace

TEST(Cosine, Basics) {
  const Vec x{0.3, -1.7, 2.2};
  EXPECT_NEAR(cosine(x, x), 1.0, 1e-15);
  EXPECT_EQ(cosine(Vec{1, 0}, Vec{0, 1}), 0.0);
  const Vec a{1, 2, 3}, b{4, 5, 6};
  EXPECT_NEAR(cosine(a, b), oracle::cosine(a.data(), b.data(), 3), 1e-12);
  EXPECT_NEAR(cosine(a, b), 32.0 / std::sqrt(14.0 * 77.0), 1e-12);
}

TEST(Cosine, Errors) {
  EXPECT_EQ(error_code_of([] { cosine(Vec{0, 0}, Vec{1, 0}); }), ErrorCode::zero_norm);
  EXPECT_EQ(error_code_of([] { cosine(Vec{1, 0}, Vec{1, 0, 0}); }), ErrorCode::dimension_mismatch);
  EXPECT_EQ(error_code_of([] { cosine(Vec{NAN, 1}, Vec{1, 0}); }), ErrorCode::invalid_argument);
}

TEST(Cosine, ClampedAgainstRounding) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> dist(0.0, 1e3);
  for (int t = 0; t < 2000; ++t) {
    Vec x(7);
    for (auto& v : x) v = dist(rng);
    Vec y = x;
    for (auto& v : y) v *= 3.0;
    const double c = cosine(x, y);
    ASSERT_LE(c, 1.0);
    Vec z = x;
    for (auto& v : z) v = -v;
    ASSERT_GE(cosine(x, z), -1.0);
  }
}

TEST(PatchScore, IdentityIsOne) {
  std::mt19937_64 rng(2);
  auto s = random_signature(rng, small_layout(6, 10), 4);
  const auto ps = patch_component_score(s.patch, s.patch);
  EXPECT_NEAR(ps.score, 1.0, 1e-15);
  EXPECT_EQ(ps.non_occluded_pairs, 6u);
}

TEST(PatchScore, OcclusionGateSelectsMutuallyVisiblePatches) {
  // m = 2, n = 2; hand-built columns.
  PatchFeatureComponent g{{2, 2, "T"}, {1.0, 0.0, 0.0, 1.0}, {1, 1}};
  PatchFeatureComponent p{{2, 2, "T"}, {1.0, 1.0, 5.0, -3.0}, {1, 0}};
  const auto ps = patch_component_score(g, p);
  EXPECT_EQ(ps.non_occluded_pairs, 1u);
  EXPECT_NEAR(ps.score, 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(PatchScore, NoComparablePatches) {
  PatchFeatureComponent g{{2, 2, "T"}, {1, 0, 0, 1}, {0, 0}};
  PatchFeatureComponent p{{2, 2, "T"}, {1, 1, 1, 1}, {1, 1}};
  EXPECT_EQ(error_code_of([&] { patch_component_score(g, p); }), ErrorCode::no_comparable_patches);
  PatchFeatureComponent q{{2, 2, "U"}, {1, 1, 1, 1}, {1, 1}};
  EXPECT_EQ(error_code_of([&] { patch_component_score(p, q); }), ErrorCode::dimension_mismatch);
}

TEST(AttributeScore, PlainSources) {
  const auto g = make_attribute_component({1.0, 0.0});
  const auto p = make_attribute_component({1.0, 1.0});
  EXPECT_NEAR(attribute_score(g, g), 1.0, 1e-15);
  EXPECT_NEAR(attribute_score(g, p), 1.0 / std::sqrt(2.0), 1e-12);

  // Binary flags (1,0,1) and (1,1,0): dot 1, norms sqrt(2) each.
  const auto bg = make_attribute_component({2.0, -1.0, 3.0});
  const auto bp = make_attribute_component({1.0, 4.0, -2.0});
  EXPECT_NEAR(attribute_score(bg, bp, AttributeSource::binary), 0.5, 1e-15);

  EXPECT_NEAR(attribute_score(bg, bp, AttributeSource::probabilities),
              oracle::cosine(bg.probabilities.data(), bp.probabilities.data(), 3), 1e-12);
}

TEST(AttributeScore, ZeroBinaryVectorIsAnError) {
  const auto g = make_attribute_component({-1.0, -2.0});
  const auto p = make_attribute_component({1.0, 2.0});
  EXPECT_EQ(error_code_of([&] { attribute_score(g, p, AttributeSource::binary); }),
            ErrorCode::zero_norm);
}

TEST(WeightedCosine, Examples) {
  EXPECT_NEAR(weighted_cosine(Vec{1, 0}, Vec{1, 1}, Vec{2, 1}), 2.0 / (std::sqrt(2.0) * std::sqrt(3.0)),
              1e-12);
  EXPECT_NEAR(weighted_cosine(Vec{1, 0}, Vec{1, 1}, Vec{2, 1}), 0.81650, 1e-5);
  const Vec g{0.4, -1.1, 2.5}, p{1.3, 0.2, -0.7};
  EXPECT_NEAR(weighted_cosine(g, p, Vec{3, 3, 3}), cosine(g, p), 1e-12);
  // binary weights select a subset
  EXPECT_NEAR(weighted_cosine(g, p, Vec{1, 0, 1}), cosine(Vec{0.4, 2.5}, Vec{1.3, -0.7}), 1e-12);
}

TEST(WeightedCosine, Errors) {
  EXPECT_EQ(error_code_of([] { weighted_cosine(Vec{1, 0}, Vec{1, 1}, Vec{1, -1}); }),
            ErrorCode::invalid_argument);
  EXPECT_EQ(error_code_of([] { weighted_cosine(Vec{1, 0}, Vec{0, 1}, Vec{0, 1}); }),
            ErrorCode::zero_norm);
  EXPECT_EQ(error_code_of([] { weighted_cosine(Vec{1, 0}, Vec{0, 1}, Vec{1}); }),
            ErrorCode::dimension_mismatch);
}

TEST(FuseScores, Arithmetic) {
  EXPECT_EQ(fuse_scores(0.37, 0.9, 0.0), 0.37);
  EXPECT_NEAR(fuse_scores(0.8, 0.5, 0.1), 0.85, 1e-15);
  EXPECT_EQ(FusionConfig{}.lambda, 0.1);
  EXPECT_EQ(error_code_of([] { fuse_scores(NAN, 0.5, 0.1); }), ErrorCode::invalid_argument);
  EXPECT_EQ(error_code_of([] { fuse_scores(0.5, 0.5, -0.1); }), ErrorCode::invalid_argument);
}

TEST(MatchSignatures, IdentityPlain) {
  std::mt19937_64 rng(3);
  auto s = random_signature(rng, PatchLayout::dprfs(), 40);
  const auto b = match_signatures(s, s, FusionConfig{0.1});
  EXPECT_NEAR(b.fused_score, 1.1, 1e-12);
  EXPECT_EQ(b.non_occluded_pairs, 8u);
}

TEST(MatchSignatures, WeightedUniformEqualsPlain) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    auto g = random_signature(rng, small_layout(), 10, "a", "a1", 0.2);
    auto p = random_signature(rng, small_layout(), 10, "b", "b1", 0.2);
    ScoreBreakdown plain, weighted;
    try {
      plain = match_signatures(g, p, {0.1});
    } catch (const Error& e) {
      ASSERT_EQ(e.code(), ErrorCode::no_comparable_patches);
      continue;
    }
    weighted = match_signatures(g, p, {0.1, AttributeSource::logits, FusionScheme::weighted},
                                uniform_weights(10));
    EXPECT_NEAR(plain.fused_score, weighted.fused_score, 1e-12);
  }
}

TEST(MatchSignatures, MatchesStraightLineOracle) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 100; ++t) {
    auto g = random_signature(rng, small_layout(5, 12), 8, "a", "a1");
    auto p = random_signature(rng, small_layout(5, 12), 8, "b", "b1");
    const oracle::Raw rg{5, 12, g.patch.features, g.patch.occlusion, g.attributes.logits};
    const oracle::Raw rp{5, 12, p.patch.features, p.patch.occlusion, p.attributes.logits};
    const auto b = match_signatures(g, p, {0.3});
    EXPECT_NEAR(b.fused_score, oracle::fused(rg, rp, 0.3), 1e-12);
    EXPECT_NEAR(b.patch_score, oracle::patch_score(rg, rp), 1e-12);
  }
}

TEST(MatchSignatures, ErrorProvenance) {
  std::mt19937_64 rng(6);
  auto g = random_signature(rng, small_layout(2, 3), 3);
  auto p = random_signature(rng, small_layout(2, 3), 3);
  g.patch.occlusion = {0, 1};
  p.patch.occlusion = {1, 0};
  try {
    match_signatures(g, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::no_comparable_patches);
    EXPECT_EQ(std::string(e.what()).rfind("patch component", 0), 0u);
  }
  p.patch.occlusion = {1, 1};
  try {
    match_signatures(g, p, {0.1, AttributeSource::logits, FusionScheme::weighted},
                     WeightVector{{1, 1}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::dimension_mismatch);
    EXPECT_EQ(std::string(e.what()).rfind("attribute component", 0), 0u);
  }
  auto q = random_signature(rng, small_layout(3, 3), 3);
  EXPECT_EQ(error_code_of([&] { match_signatures(g, q); }), ErrorCode::dimension_mismatch);
  // Scheme and weight argument must agree.
  EXPECT_EQ(error_code_of([&] { match_signatures(g, p, {0.1, AttributeSource::logits,
                                                        FusionScheme::weighted}); }),
            ErrorCode::invalid_argument);
  EXPECT_EQ(error_code_of([&] { match_signatures(g, p, {0.1}, uniform_weights(3)); }),
            ErrorCode::invalid_argument);
}

TEST(MatchingProperty, SymmetryRangeMonotonicity) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> lam(0.0, 2.0);
  for (int t = 0; t < 300; ++t) {
    auto g = random_signature(rng, small_layout(4, 6), 6, "a", "a1", 0.3);
    auto p = random_signature(rng, small_layout(4, 6), 6, "b", "b1", 0.3);
    const FusionConfig cfg{lam(rng)};
    ScoreBreakdown gp, pg;
    try {
      gp = match_signatures(g, p, cfg);
    } catch (const Error& e) {
      ASSERT_EQ(e.code(), ErrorCode::no_comparable_patches);
      continue;
    }
    pg = match_signatures(p, g, cfg);
    EXPECT_EQ(gp, pg);
    EXPECT_GE(gp.patch_score, -1.0);
    EXPECT_LE(gp.patch_score, 1.0);
    EXPECT_GE(gp.attribute_score, -1.0);
    EXPECT_LE(gp.attribute_score, 1.0);
    EXPECT_LE(std::abs(gp.fused_score), 1.0 + cfg.lambda + 1e-15);
    EXPECT_GE(gp.non_occluded_pairs, 1u);
    if (cfg.lambda > 0.0)
      EXPECT_LT(fuse_scores(gp.patch_score, gp.attribute_score - 0.01, cfg.lambda), gp.fused_score);
  }
}
