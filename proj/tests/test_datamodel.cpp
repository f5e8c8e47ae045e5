#include <cstring>
#include <functional>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "mmem/datamodel.hpp"
#include "mmem/error.hpp"
#include "oracles.hpp"

using namespace mmem;

namespace {

CohortFile parse(const std::string& text, Endpoint ep = Endpoint::kOs,
                 OutcomePolicy policy = OutcomePolicy::kRequireBothEndpoints) {
  std::istringstream in(text);
  return parse_cohort_csv(in, ep, policy);
}

std::string thrown_message(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(CohortCsv, FullyObservedFileHasNoMissingCells) {
  const auto c = parse(
      "patient_id,os_days,os_event,dfs_days,dfs_event,age,grade\n"
      "A,10,1,5,1,60,G2\n"
      "B,20,0,20,0,55,G3\n"
      "C,30,1,12,1,70,G2\n");
  EXPECT_EQ(c.features.rows(), 3);
  EXPECT_EQ(c.features.cols(), 2);
  EXPECT_FALSE(c.features.missing().any());
  EXPECT_EQ(c.features.column(1).kind, ColumnKind::kCategorical);
  EXPECT_EQ(c.features.category(1, 1), "G3");
  EXPECT_EQ(c.outcomes.at("B"), (SurvivalOutcome{20.0, false}));
}

TEST(CohortCsv, EmptyCellMarksOnlyThatCellMissing) {
  const auto c = parse(
      "patient_id,os_days,os_event,dfs_days,dfs_event,age,grade\n"
      "A,10,1,5,1,60,G2\n"
      "B,20,0,20,0,55,\n"
      "C,30,1,12,1,70,G1\n");
  const auto& m = c.features.missing();
  EXPECT_EQ(m.count(), 1);
  EXPECT_TRUE(m(1, 1));
}

TEST(CohortCsv, DuplicatePatientNamesBothLines) {
  const std::string msg = thrown_message([] {
    parse("patient_id,os_days,os_event,dfs_days,dfs_event,x\nA,1,1,1,1,0\nB,2,1,2,1,0\nA,3,0,3,0,1\n");
  });
  EXPECT_NE(msg.find("'A'"), std::string::npos);
  EXPECT_NE(msg.find("2"), std::string::npos);
  EXPECT_NE(msg.find("4"), std::string::npos);
}

TEST(CohortCsv, RejectsNegativeTimeAndBadEvent) {
  EXPECT_THROW(parse("patient_id,os_days,os_event,dfs_days,dfs_event\nA,-1,1,1,1\n"), DataError);
  EXPECT_THROW(parse("patient_id,os_days,os_event,dfs_days,dfs_event\nA,1,2,1,1\n"), DataError);
}

TEST(CohortCsv, OutcomePolicyControlsIncompleteFollowUp) {
  const std::string text =
      "patient_id,os_days,os_event,dfs_days,dfs_event,x\n"
      "A,10,1,,,1\n"
      "B,20,0,20,0,2\n";
  EXPECT_EQ(parse(text).outcomes.size(), 1u);
  EXPECT_EQ(parse(text, Endpoint::kOs, OutcomePolicy::kSelectedEndpointOnly).outcomes.size(), 2u);
}

TEST(CohortCsv, RoundTripsThroughWriter) {
  const auto c = parse(
      "patient_id,os_days,os_event,dfs_days,dfs_event,age,grade\n"
      "A,10.5,1,5,1,60.25,G2\n"
      "B,20,0,20,0,,G3\n");
  std::map<std::string, SurvivalOutcome> dfs{{"A", {5, true}}, {"B", {20, false}}};
  std::ostringstream out;
  write_cohort_csv(out, c.features, c.outcomes, dfs);
  const auto back = parse(out.str());
  EXPECT_TRUE((back.features.missing() == c.features.missing()).all());
  const auto observed = !c.features.missing();
  EXPECT_TRUE((observed.select(back.features.values().array(), 0.0) ==
               observed.select(c.features.values().array(), 0.0)).all());
  EXPECT_EQ(back.outcomes, c.outcomes);
}

namespace {

EmbeddingBag bag(const std::string& id, Eigen::Index n, Eigen::Index dim, float base) {
  EmbeddingBag b;
  b.patient_id = id;
  b.vectors.resize(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) b.vectors(i, j) = base + 0.1f * static_cast<float>(i * dim + j);
  }
  return b;
}

}  // namespace

TEST(EmbeddingContainer, TwoBagsOfEqualDim) {
  std::vector<EmbeddingBag> bags{bag("P1", 3, 8, 0.f), bag("P2", 5, 8, 1.f)};
  std::stringstream s;
  write_embedding_container(s, bags);
  const auto back = parse_embedding_container(s);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].n_tiles(), 5);
}

TEST(EmbeddingContainer, DimensionMismatchRejected) {
  // Writer refuses mixed dims, so assemble the bytes by hand.
  std::stringstream s;
  std::vector<EmbeddingBag> a{bag("P1", 1, 8, 0.f)}, b{bag("P2", 1, 16, 0.f)};
  std::stringstream sa, sb;
  write_embedding_container(sa, a);
  write_embedding_container(sb, b);
  s << sa.str() << sb.str().substr(4);
  EXPECT_THROW(parse_embedding_container(s), DataError);
}

TEST(EmbeddingContainer, BitExactRoundTripWithCoords) {
  EmbeddingBag b = bag("X", 3, 4, -2.5f);
  b.vectors(1, 2) = 1.0e-39f;  // subnormal survives unchanged
  TileCoords c(3, 2);
  c << 0, 0, 512, 0, 1024, 512;
  b.tile_coords = c;
  std::vector<EmbeddingBag> bags{b};
  std::stringstream s;
  write_embedding_container(s, bags);
  const auto back = parse_embedding_container(s);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(std::memcmp(back[0].vectors.data(), b.vectors.data(), sizeof(float) * 12), 0);
  ASSERT_TRUE(back[0].tile_coords.has_value());
  EXPECT_EQ(*back[0].tile_coords, c);
}

TEST(EmbeddingContainer, TruncationReportsOffset) {
  std::vector<EmbeddingBag> bags{bag("P1", 3, 8, 0.f)};
  std::stringstream s;
  write_embedding_container(s, bags);
  std::stringstream cut(s.str().substr(0, s.str().size() - 7));
  const std::string msg = thrown_message([&] { parse_embedding_container(cut); });
  EXPECT_NE(msg.find("offset"), std::string::npos);
}

namespace {

FeatureTable ids_table(std::vector<std::string> ids) {
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ids.size()), 1);
  return FeatureTable::numeric(std::move(ids), {"x"}, v);
}

}  // namespace

TEST(Align, IntersectionMatchesSetOracle) {
  const std::vector<std::vector<std::string>> sets{{"C", "A", "B"}, {"B", "C"}, {"D", "C", "B"}};
  std::vector<Modality> mods;
  for (std::size_t i = 0; i < sets.size(); ++i) mods.push_back({"m" + std::to_string(i), ids_table(sets[i])});
  std::map<std::string, SurvivalOutcome> outcomes;
  for (const auto& id : {"A", "B", "C", "D"}) outcomes[id] = {1.0, true};
  const auto aligned = align_modalities(mods, outcomes);
  EXPECT_EQ(aligned.patient_ids, oracle::intersect(sets));
  EXPECT_EQ(aligned.patient_ids, (std::vector<std::string>{"B", "C"}));
  for (const auto& m : aligned.modalities) EXPECT_EQ(m.table().patient_ids(), aligned.patient_ids);
}

TEST(Align, SingleModalityKeepsPatientsWithOutcomes) {
  std::vector<Modality> mods{{"m", ids_table({"Z", "A", "K"})}};
  std::map<std::string, SurvivalOutcome> outcomes{{"A", {1, true}}, {"Z", {2, false}}};
  EXPECT_EQ(align_modalities(mods, outcomes).patient_ids, (std::vector<std::string>{"A", "Z"}));
}

TEST(Align, DisjointSetsAreAnError) {
  std::vector<Modality> mods{{"a", ids_table({"A"})}, {"b", ids_table({"B"})}};
  std::map<std::string, SurvivalOutcome> outcomes{{"A", {1, true}}, {"B", {1, true}}};
  EXPECT_THROW(align_modalities(mods, outcomes), DataError);
}

TEST(Align, SeededSetsAgreeWithOracle) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<std::vector<std::string>> sets(3);
    for (auto& s : sets) {
      for (int i = 0; i < 30; ++i) {
        if (rng() % 3 != 0) s.push_back("P" + std::to_string(i));
      }
    }
    std::vector<Modality> mods;
    for (std::size_t i = 0; i < sets.size(); ++i) mods.push_back({"m" + std::to_string(i), ids_table(sets[i])});
    std::map<std::string, SurvivalOutcome> outcomes;
    for (int i = 0; i < 30; ++i) outcomes["P" + std::to_string(i)] = {1.0, true};
    const auto expected = oracle::intersect(sets);
    if (expected.empty()) continue;
    EXPECT_EQ(align_modalities(mods, outcomes).patient_ids, expected);
  }
}
