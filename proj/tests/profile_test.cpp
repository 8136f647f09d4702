#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "thinserve/errors.hpp"
#include "thinserve/profile.hpp"
#include "thinserve/random.hpp"

namespace thinserve {
namespace {

ProfileTable parse(const std::string& text) {
  std::istringstream in(text);
  return parse_profile(in, "m");
}

TEST(ProfileTable, LookupReturnsMeasuredValues) {
  const auto table =
      parse("threads,batch,latency_ms\n1,1,10\n2,1,6\n1,2,18\n");
  EXPECT_EQ(table.size(), 3u);
  EXPECT_EQ(lookup(table, {1, 1}), 10.0);
  EXPECT_EQ(lookup(table, {2, 1}), 6.0);
  EXPECT_EQ(lookup(table, {1, 2}), 18.0);
  EXPECT_FALSE(lookup(table, {2, 2}).has_value());
  EXPECT_FALSE(lookup(table, {3, 1}).has_value());
}

TEST(ProfileTable, SkipsCommentsAndBlankLines) {
  const auto table = parse(
      "# model: resnet\n\nthreads,batch,latency_ms\n# warm\n4,8,12.5\n\n");
  EXPECT_EQ(table.size(), 1u);
  EXPECT_EQ(lookup(table, {4, 8}), 12.5);
}

TEST(ProfileTable, RejectsMalformedInput) {
  EXPECT_THROW(parse("threads,batch\n1,1\n"), ParseError);
  EXPECT_THROW(parse("threads,batch,latency_ms\n1,x,3\n"), ParseError);
  EXPECT_THROW(parse("threads,batch,latency_ms\n1,1\n"), ParseError);
  EXPECT_THROW(parse("threads,batch,latency_ms\n1,1,3\n1,1,4\n"),
               ValidationError);
  EXPECT_THROW(parse("threads,batch,latency_ms\n1,1,0\n"), ValidationError);
  EXPECT_THROW(parse("threads,batch,latency_ms\n0,1,1\n"), ValidationError);
  EXPECT_THROW(parse("threads,batch,latency_ms\n1,1,-2\n"), ValidationError);
}

TEST(ProfileTable, CanonicalGridHas176Cells) {
  SyntheticProfileSpec spec;
  spec.max_threads = 16;
  spec.batch_exponent = 10;
  const auto table = synthesize_profile(spec);
  EXPECT_EQ(table.size(), 176u);
  EXPECT_TRUE(table.is_canonical_grid());
  EXPECT_EQ(table.max_threads(), 16);
  EXPECT_EQ(table.batch_exponent(), 10);
  EXPECT_EQ(table.max_batch(), 1024);
  EXPECT_EQ(grid_size(16, 10), 176);
}

TEST(ProfileTable, PartialTablesAreLegal) {
  const auto table = parse("threads,batch,latency_ms\n1,2,5\n3,8,4\n");
  EXPECT_FALSE(table.is_canonical_grid());
  EXPECT_EQ(table.max_threads(), 3);
  EXPECT_EQ(table.max_batch(), 8);
}

TEST(ProfileTable, GridSizeProperty) {
  for (int T = 1; T <= 32; ++T) {
    for (int n = 0; n <= 12; ++n) {
      SyntheticProfileSpec spec;
      spec.max_threads = T;
      spec.batch_exponent = n;
      const auto table = synthesize_profile(spec);
      ASSERT_EQ(static_cast<std::int64_t>(table.size()), grid_size(T, n));
      ASSERT_EQ(grid_size(T, n), static_cast<std::int64_t>(n + 1) * T);
    }
  }
}

TEST(ProfileTable, RoundTripThroughFile) {
  SyntheticProfileSpec spec;
  spec.model_id = "roundtrip";
  spec.jitter = 0.1;
  spec.max_threads = 6;
  spec.batch_exponent = 5;
  const auto table = synthesize_profile(spec);
  const auto path =
      std::filesystem::temp_directory_path() / "thinserve_roundtrip.csv";
  save_profile(path, table);
  const auto loaded = load_profile(path);
  std::filesystem::remove(path);
  EXPECT_EQ(loaded, table);
  EXPECT_EQ(loaded.fingerprint(), table.fingerprint());
}

TEST(ProfileTable, ModelCommentNamesTheModel) {
  EXPECT_EQ(parse("# model: bert\nthreads,batch,latency_ms\n1,1,2\n").model_id(),
            "bert");
  EXPECT_EQ(parse("threads,batch,latency_ms\n# model: late\n1,1,2\n")
                .model_id(),
            "m");
}

TEST(ProfileTable, LoadMissingFileThrows) {
  EXPECT_THROW(load_profile("/nonexistent/profile.csv"), Error);
}

TEST(ProfileTable, FingerprintTracksContent) {
  const auto a = parse("threads,batch,latency_ms\n1,1,10\n");
  const auto b = parse("threads,batch,latency_ms\n1,1,11\n");
  EXPECT_NE(a.fingerprint(), b.fingerprint());
  EXPECT_EQ(a.fingerprint(), parse("threads,batch,latency_ms\n1,1,10\n")
                                 .fingerprint());
}

TEST(SyntheticProfile, ThreadSpeedupsShrink) {
  SyntheticProfileSpec spec;
  spec.jitter = 0.15;
  spec.max_threads = 16;
  spec.batch_exponent = 6;
  const auto table = synthesize_profile(spec);
  for (int e = 0; e <= 6; ++e) {
    double prev_gain = std::numeric_limits<double>::infinity();
    for (int t = 1; t < 16; ++t) {
      const double gain =
          *lookup(table, {t, 1 << e}) - *lookup(table, {t + 1, 1 << e});
      EXPECT_GT(gain, 0.0);
      EXPECT_LT(gain, prev_gain);
      prev_gain = gain;
    }
  }
}

TEST(SyntheticProfile, RejectsBadParameters) {
  SyntheticProfileSpec spec;
  spec.parallel_fraction = 1.5;
  EXPECT_THROW(synthesize_profile(spec), ValidationError);
  spec = {};
  spec.max_threads = 0;
  EXPECT_THROW(synthesize_profile(spec), ValidationError);
  spec = {};
  spec.fixed_fraction = 1.0;
  EXPECT_THROW(synthesize_profile(spec), ValidationError);
}

// Lookups answer only what was measured, for any table.
TEST(ProfileTable, LookupNeverFabricates) {
  Rng rng(11);
  for (int round = 0; round < 50; ++round) {
    ProfileTable::Entries entries;
    for (int k = 0; k < 20; ++k) {
      entries[{static_cast<int>(rng.uniform_int(1, 8)),
               static_cast<int>(rng.uniform_int(1, 32))}] =
          rng.uniform(0.5, 50.0);
    }
    const ProfileTable table("r", entries);
    for (int t = 1; t <= 9; ++t) {
      for (int b = 1; b <= 33; ++b) {
        const auto it = entries.find({t, b});
        const auto got = lookup(table, {t, b});
        if (it == entries.end()) {
          ASSERT_FALSE(got.has_value());
        } else {
          ASSERT_EQ(got, it->second);
        }
      }
    }
  }
}

}  // namespace
}  // namespace thinserve
