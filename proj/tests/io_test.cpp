#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>
#include <sstream>

#include "facesig/io.hpp"
#include "test_support.hpp"

using namespace facesig;
using facesig::testing::random_signature;
using facesig::testing::small_layout;
namespace fs = std::filesystem;

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

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("facesig_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             std::to_string(counter++) + "_" + std::to_string(std::random_device{}()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void put_f32(std::string& s, std::size_t off, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) s[off + i] = static_cast<char>(bits >> (8 * i));
}

// m = 4, n = 8, d = 5 offsets.
constexpr std::size_t kOcclusionByte = 20 + 4 * 32;
constexpr std::size_t kLogits = kOcclusionByte + 1;
constexpr std::size_t kProbabilities = kLogits + 4 * 5;
constexpr std::size_t kBinaryByte = kProbabilities + 4 * 5;

Signature fixed_signature() {
  std::mt19937_64 rng(99);
  return random_signature(rng, small_layout(4, 8), 5, "S1", "S1_a", 0.25);
}

}  // namespace

TEST(SignatureFile, HeaderLayout) {
  const auto bytes = encode_signature(fixed_signature());
  EXPECT_EQ(bytes.substr(0, 4), "SIGM");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 0x00);
  EXPECT_EQ(static_cast<unsigned char>(bytes[5]), 0x01);
  EXPECT_EQ(bytes[8], 4);
  EXPECT_EQ(bytes[12], 8);
  EXPECT_EQ(bytes[16], 5);
  EXPECT_EQ(bytes.size(), kBinaryByte + 1 + (4 + 2) + (4 + 4) + (4 + 5));
}

TEST(SignatureFile, RoundTripIsExact) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    const std::size_t m = 1 + t % 9, n = 1 + t % 13, d = 1 + t % 41;
    const auto s = random_signature(rng, small_layout(m, n), d, "subj" + std::to_string(t),
                                    "img" + std::to_string(t), 0.3);
    ASSERT_EQ(decode_signature(encode_signature(s)), s);
    ASSERT_EQ(decode_signature(encode_signature(s, false)), s);
  }
}

TEST(SignatureFile, Dprfs40RoundTripKeepsAttributeNames) {
  std::mt19937_64 rng(2);
  const auto s = random_signature(rng, PatchLayout::dprfs(), 40);
  const auto back = decode_signature(encode_signature(s));
  EXPECT_EQ(back, s);
  EXPECT_EQ(back.attributes.attribute_names.front(), kFacialAttributes.front());
  EXPECT_EQ(back.patch.layout.scheme_name, "DPRFS");
}

TEST(SignatureFile, BadMagicAndVersion) {
  auto bytes = encode_signature(fixed_signature());
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(error_code_of([&] { decode_signature(bad); }), ErrorCode::bad_magic);
  bad = bytes;
  bad[5] = 0x02;
  EXPECT_EQ(error_code_of([&] { decode_signature(bad); }), ErrorCode::unsupported_version);
  bad = bytes;
  bad[6] = 0x02;  // unknown flag in a 1.0 file
  EXPECT_EQ(error_code_of([&] { decode_signature(bad); }), ErrorCode::unsupported_version);

  // A later minor version may carry trailing data.
  auto minor = bytes + "extension";
  minor[4] = 0x01;
  EXPECT_EQ(decode_signature(minor), fixed_signature());
}

TEST(SignatureFile, EveryTruncationIsRejected) {
  const auto bytes = encode_signature(fixed_signature());
  for (std::size_t len = 0; len < bytes.size(); ++len)
    ASSERT_EQ(error_code_of([&] { decode_signature(std::string_view(bytes).substr(0, len)); }),
              ErrorCode::truncated)
        << "length " << len;
}

TEST(SignatureFile, TrailingBytesAndPaddingBits) {
  const auto bytes = encode_signature(fixed_signature());
  EXPECT_EQ(error_code_of([&] { decode_signature(bytes + '\0'); }), ErrorCode::parse_error);
  auto bad = bytes;
  bad[kOcclusionByte] = static_cast<char>(bad[kOcclusionByte] | 0x80);
  EXPECT_EQ(error_code_of([&] { decode_signature(bad); }), ErrorCode::parse_error);
  bad = bytes;
  bad[kBinaryByte] = static_cast<char>(bad[kBinaryByte] | 0x40);
  EXPECT_EQ(error_code_of([&] { decode_signature(bad); }), ErrorCode::parse_error);
}

TEST(SignatureFile, DerivedMismatchAndBadValues) {
  const auto sig = fixed_signature();
  const auto bytes = encode_signature(sig);
  auto bad = bytes;
  put_f32(bad, kProbabilities + 8, static_cast<float>(sig.attributes.probabilities[2] + 1e-3));
  EXPECT_EQ(error_code_of([&] { decode_signature(bad); }), ErrorCode::derived_mismatch);
  bad = bytes;
  bad[kBinaryByte] = static_cast<char>(bad[kBinaryByte] ^ 0x01);
  EXPECT_EQ(error_code_of([&] { decode_signature(bad); }), ErrorCode::derived_mismatch);
  // Changing a logit without its stored probability is a mismatch too.
  bad = bytes;
  put_f32(bad, kLogits, static_cast<float>(sig.attributes.logits[0] + 0.5));
  EXPECT_EQ(error_code_of([&] { decode_signature(bad); }), ErrorCode::derived_mismatch);
  bad = bytes;
  put_f32(bad, kLogits, std::nanf(""));
  EXPECT_EQ(error_code_of([&] { decode_signature(bad); }), ErrorCode::invariant_violation);
  bad = bytes;
  put_f32(bad, 20, std::numeric_limits<float>::infinity());
  EXPECT_EQ(error_code_of([&] { decode_signature(bad); }), ErrorCode::invariant_violation);
}

TEST(SignatureFile, HugeDimensionsFailWithoutAllocating) {
  auto bytes = encode_signature(fixed_signature());
  for (int off : {8, 12, 16}) {
    auto bad = bytes;
    bad[off + 3] = static_cast<char>(0x7F);
    EXPECT_EQ(error_code_of([&] { decode_signature(bad); }), ErrorCode::truncated);
  }
}

TEST(SignatureFile, RandomCorruptionNeverCrashes) {
  const auto bytes = encode_signature(fixed_signature());
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> pos(0, bytes.size() - 1);
  std::uniform_int_distribution<int> val(0, 255);
  for (int t = 0; t < 3000; ++t) {
    auto bad = bytes;
    bad[pos(rng)] = static_cast<char>(val(rng));
    try {
      const auto s = decode_signature(bad);
      ASSERT_TRUE(validate(s).empty());
    } catch (const Error&) {
    }
  }
}

TEST(SignatureFile, WriteAndReadFile) {
  TempDir dir;
  const auto path = dir.path() / "a.sig";
  write_signature(path, fixed_signature());
  EXPECT_FALSE(fs::exists(dir.path() / "a.sig.tmp"));
  EXPECT_EQ(read_signature(path), fixed_signature());
  EXPECT_EQ(error_code_of([&] { read_signature(dir.path() / "missing.sig"); }), ErrorCode::io_error);
  try {
    write_file_atomic(path, "junk");
    read_signature(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::bad_magic);
    EXPECT_NE(std::string(e.what()).find("a.sig"), std::string::npos);
  }
}

TEST(Manifest, ParseAndResolve) {
  const auto entries = parse_manifest(
      "# gallery\n"
      "S1, S1_t, sig/a.sig\n"
      "\n"
      "S2,S2_t,/abs/b.sig,row1:col2\n",
      "/data");
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].subject_id, "S1");
  EXPECT_EQ(entries[0].template_id, "S1_t");
  EXPECT_EQ(entries[0].path, fs::path("/data/sig/a.sig"));
  EXPECT_EQ(entries[1].path, fs::path("/abs/b.sig"));
  EXPECT_EQ(entries[1].cell_label, "row1:col2");
  EXPECT_EQ(error_code_of([] { parse_manifest("S1,S1_t\n", "."); }), ErrorCode::parse_error);
  EXPECT_EQ(error_code_of([] { parse_manifest("S1,,a.sig\n", "."); }), ErrorCode::parse_error);
  EXPECT_EQ(error_code_of([] { parse_manifest("a,b,c,d,e\n", "."); }), ErrorCode::parse_error);
}

TEST(Manifest, GalleryAndProbeGrouping) {
  TempDir dir;
  std::mt19937_64 rng(4);
  auto sig = [&](const std::string& subj, const std::string& img) {
    const auto s = random_signature(rng, small_layout(), 5, subj, img);
    write_signature(dir.path() / (img + ".sig"), s);
    return s;
  };
  const auto a1 = sig("A", "A1"), a2 = sig("A", "A2"), b1 = sig("B", "B1");
  const auto p1 = sig("A", "P1"), p2 = sig("A", "P2"), p3 = sig("B", "P3");
  write_file_atomic(dir.path() / "gallery.csv", "A,A,A1.sig\nB,B,B1.sig\nA,A,A2.sig\n");
  write_file_atomic(dir.path() / "probes.csv", "A,T1,P1.sig,x\nA,T1,P2.sig,x\nB,T2,P3.sig\n");

  const auto g = load_gallery(dir.path() / "gallery.csv");
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g.templates()[0].subject_id(), "A");
  EXPECT_EQ(g.templates()[0].members().size(), 2u);
  EXPECT_EQ(g.templates()[0].members()[1], a2);

  const auto p = load_probes(dir.path() / "probes.csv");
  ASSERT_EQ(p.templates.size(), 2u);
  EXPECT_EQ(p.templates[0].id(), "T1");
  EXPECT_EQ(p.templates[0].members().size(), 2u);
  EXPECT_EQ(p.truth.at("T2"), "B");
  EXPECT_EQ(p.cells.at("T1"), "x");
  EXPECT_EQ(p.cells.count("T2"), 0u);

  write_file_atomic(dir.path() / "mixed.csv", "A,T1,P1.sig\nB,T1,P3.sig\n");
  EXPECT_EQ(error_code_of([&] { load_probes(dir.path() / "mixed.csv"); }), ErrorCode::parse_error);
  write_file_atomic(dir.path() / "liar.csv", "B,B,A1.sig\n");
  EXPECT_EQ(error_code_of([&] { load_gallery(dir.path() / "liar.csv"); }), ErrorCode::invariant_violation);
  write_file_atomic(dir.path() / "empty.csv", "# nothing\n");
  EXPECT_EQ(error_code_of([&] { load_gallery(dir.path() / "empty.csv"); }), ErrorCode::empty_input);

  std::ostringstream os;
  write_manifest(os, {{"A", "T1", "P1.sig", "x"}, {"B", "T2", "P3.sig", ""}});
  EXPECT_EQ(os.str(), "A,T1,P1.sig,x\nB,T2,P3.sig\n");
}

TEST(BenchmarkFiles, WrittenSetReloadsIdentically) {
  TempDir dir;
  SynthConfig c;
  c.subjects = 6;
  c.images_per_subject = 3;
  c.layout = {4, 8, "SYNTH"};
  c.attribute_dim = 7;
  c.occlusion_rate = 0.3;
  c.corrupt_fraction = 0.2;
  const auto bench = generate_benchmark(c);
  write_benchmark(dir.path(), bench);

  const auto splits = load_splits(dir.path() / "splits.csv");
  ASSERT_EQ(splits.size(), 1u);
  EXPECT_EQ(splits[0].name, "synth");
  ASSERT_EQ(splits[0].gallery.size(), 6u);
  for (std::size_t s = 0; s < 6; ++s) EXPECT_EQ(splits[0].gallery.templates()[s].members()[0], bench.gallery[s]);
  ASSERT_EQ(splits[0].probes.size(), 12u);
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(splits[0].probes[i].members()[0], bench.probes[i]);
    EXPECT_TRUE(validate(bench.probes[i]).empty());
  }
  EXPECT_EQ(splits[0].truth.at("S3_I2"), "S3");
}

TEST(AccuracyTable, Parse) {
  const auto t = parse_accuracy_table("attribute_name,accuracy\nSmiling,0.92\n# note\n Male , 0.98 \n");
  EXPECT_EQ(t.accuracy.size(), 2u);
  EXPECT_EQ(t.accuracy.at("Male"), 0.98);
  EXPECT_EQ(parse_accuracy_table("a,b,0.5\n").accuracy.at("a,b"), 0.5);
  EXPECT_EQ(error_code_of([] { parse_accuracy_table("Smiling 0.9\n"); }), ErrorCode::parse_error);
  EXPECT_EQ(error_code_of([] { parse_accuracy_table("Smiling,high\n"); }), ErrorCode::parse_error);
  EXPECT_EQ(error_code_of([] { parse_accuracy_table("Smiling,0.9\nSmiling,0.8\n"); }), ErrorCode::parse_error);
  EXPECT_EQ(error_code_of([] { parse_accuracy_table(",0.9\n"); }), ErrorCode::parse_error);
}

TEST(KeyValues, ParseAndSynthConfig) {
  const auto kv = parse_key_values("# synth\nseed = 7\nscheme = \"DPRFS\"\n\n");
  EXPECT_EQ(kv.at("seed"), "7");
  EXPECT_EQ(kv.at("scheme"), "DPRFS");
  EXPECT_EQ(error_code_of([] { parse_key_values("seed 7\n"); }), ErrorCode::parse_error);
  EXPECT_EQ(error_code_of([] { parse_key_values("a=1\na=2\n"); }), ErrorCode::parse_error);

  const auto c = parse_synth_config(
      "seed=7\nsubjects=30\nimages_per_subject=5\nscheme=DPRFS\nattribute_dim=40\n"
      "patch_noise_sigma=0.2\ncorrupt_fraction=0.3\nocclusion_rate=0.1\nattribute_flip_rate=0.05\n");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.subjects, 30u);
  EXPECT_EQ(c.layout, PatchLayout::dprfs());
  EXPECT_EQ(c.corrupt_fraction, 0.3);
  const auto d = parse_synth_config("patch_count=3\nfeature_dim=5\n");
  EXPECT_EQ(d.layout.patch_count, 3u);
  EXPECT_EQ(d.layout.feature_dim, 5u);
  EXPECT_EQ(error_code_of([] { parse_synth_config("colour=blue\n"); }), ErrorCode::parse_error);
  EXPECT_EQ(error_code_of([] { parse_synth_config("subjects=-3\n"); }), ErrorCode::parse_error);
  EXPECT_EQ(error_code_of([] { parse_synth_config("occlusion_rate=lots\n"); }), ErrorCode::parse_error);
}

TEST(MatrixCsv, RoundTrip) {
  AccuracyMatrix m{{"plain", "weighted"}, {"s1", "s2"}, {{91.25, 93.5}, {88.0, 90.75}}, {}};
  std::ostringstream os;
  write_matrix_csv(os, m);
  const auto back = parse_matrix_csv(os.str());
  EXPECT_EQ(back.methods, m.methods);
  EXPECT_EQ(back.splits, m.splits);
  EXPECT_EQ(back.values, m.values);
  EXPECT_EQ(error_code_of([] { parse_matrix_csv(""); }), ErrorCode::empty_input);
  EXPECT_EQ(error_code_of([] { parse_matrix_csv("split,a,b\ns1,1\n"); }), ErrorCode::parse_error);
}

TEST(RankedCsv, RowsPerOutcomeKind) {
  std::mt19937_64 rng(5);
  auto g1 = random_signature(rng, small_layout(2, 3), 4, "A", "A0");
  auto g2 = random_signature(rng, small_layout(2, 3), 4, "B", "B0");
  g2.patch.occlusion = {0, 1};
  auto probe = random_signature(rng, small_layout(2, 3), 4, "A", "P0");
  probe.patch.occlusion = {1, 0};
  const Gallery gallery({Template(g1), Template(g2)});
  IdentifyOptions opt;
  auto outcomes = batch_identify({Template(probe)}, gallery, opt);
  opt.weight_mode = WeightMode::trained;  // no table: fails
  outcomes.push_back(batch_identify({Template(probe)}, gallery, opt)[0]);
  std::ostringstream os;
  write_ranked_csv(os, outcomes);
  std::istringstream in(os.str());
  std::string header, ranked, skipped, failed;
  std::getline(in, header);
  std::getline(in, ranked);
  std::getline(in, skipped);
  std::getline(in, failed);
  EXPECT_EQ(header, "probe_id,status,rank,subject_id,fused_score,patch_score,attribute_score,"
                    "non_occluded_pairs,detail");
  EXPECT_EQ(ranked.rfind("P0,ranked,1,A,", 0), 0u);
  EXPECT_EQ(skipped.rfind("P0,skipped,,B,,,,,", 0), 0u);
  EXPECT_EQ(failed.rfind("P0,error,,,,,,,", 0), 0u);
  const auto fields = detail::split_csv(ranked);
  EXPECT_EQ(std::stod(fields[4]), outcomes[0].ranked->entries[0].score);
}
