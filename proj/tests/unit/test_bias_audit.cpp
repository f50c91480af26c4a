#include <cmath>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "../support/audit_fixture.hpp"
#include "spgrpo/errors.hpp"

using spgrpo::DomainError;
using spgrpo::ShapeError;
using spgrpo::ConfigError;
namespace fixtures = spgrpo::fixtures;
namespace numerics = spgrpo::numerics;
using namespace spgrpo::audit;

namespace {

std::vector<std::vector<double>> features_of(const std::vector<ScoredItem>& items) {
  std::vector<std::vector<double>> f;
  for (const auto& it : items) f.push_back(it.features);
  return f;
}

}  // namespace

TEST(KMeans, KEqualsItemCount) {
  const std::vector<std::vector<double>> pts{{0, 0}, {1, 0}, {5, 5}, {9, 1}};
  const auto labels = kmeans(pts, 4, 3);
  EXPECT_EQ(std::set<std::size_t>(labels.begin(), labels.end()).size(), 4u);
}

TEST(KMeans, SeparatesTwoBlobs) {
  numerics::RandomSource rng(1);
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 40; ++i) {
    const double cx = i < 20 ? -50.0 : 50.0;
    pts.push_back({cx + rng.normal(), rng.normal()});
  }
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto labels = kmeans(pts, 2, seed);
    for (int i = 1; i < 20; ++i) EXPECT_EQ(labels[i], labels[0]);
    for (int i = 21; i < 40; ++i) EXPECT_EQ(labels[i], labels[20]);
    EXPECT_NE(labels[0], labels[20]);
  }
}

TEST(KMeans, DeterministicUnderSeed) {
  const auto f = features_of(fixtures::make_audit_fixture(2).biased);
  EXPECT_EQ(kmeans(f, 12, 9), kmeans(f, 12, 9));
}

TEST(KMeans, Errors) {
  const std::vector<std::vector<double>> pts{{0, 0}, {1, 1}};
  EXPECT_THROW(kmeans(pts, 3, 0), DomainError);
  EXPECT_THROW(kmeans(pts, 0, 0), DomainError);
  EXPECT_THROW(kmeans({{0, 0}, {1}}, 1, 0), ShapeError);
}

TEST(Kappa, Examples) {
  const auto k = cluster_kappa({{1, 1, 1}, {2, 4}, {-1, 1}});
  EXPECT_NEAR(*k[0], 0.0, 1e-12);
  EXPECT_NEAR(*k[1], 100.0 / 3.0, 1e-12);
  EXPECT_NEAR(*k[1], 33.33, 5e-3);
  EXPECT_FALSE(k[2].has_value());
  EXPECT_THROW(cluster_kappa({{}}), DomainError);
}

// Property: positive rescaling of every score leaves kappa and the inter-cluster CoV unchanged.
TEST(Kappa, ScaleInvariance) {
  auto items = fixtures::make_audit_fixture(3).biased;
  AuditOptions opt;
  opt.k = 10;
  const auto base = audit(items, opt);
  for (auto& it : items) it.score *= 3.7;
  const auto scaled = audit(items, opt);
  ASSERT_EQ(base.clusters.size(), scaled.clusters.size());
  for (std::size_t c = 0; c < base.clusters.size(); ++c)
    EXPECT_NEAR(*scaled.clusters[c].kappa, *base.clusters[c].kappa, 1e-9);
  EXPECT_NEAR(*scaled.inter_cluster_cov, *base.inter_cluster_cov, 1e-9);
}

TEST(Audit, LabelsBypassClustering) {
  std::vector<ScoredItem> items{{"a", 1.0, {}, 0}, {"b", 3.0, {}, 0}, {"c", 2.0, {}, 1}};
  const auto r = audit(items, AuditOptions{});
  EXPECT_TRUE(r.used_labels);
  ASSERT_EQ(r.clusters.size(), 2u);
  EXPECT_EQ(r.clusters[0].size, 2u);
  EXPECT_DOUBLE_EQ(r.clusters[0].mean, 2.0);
  EXPECT_DOUBLE_EQ(r.clusters[0].std, 1.0);
  EXPECT_NEAR(*r.clusters[0].kappa, 50.0, 1e-12);
  EXPECT_NEAR(*r.inter_cluster_cov, 0.0, 1e-12);
  // Features play no part once labels are given.
  items[0].features = {100.0};
  items[1].features = {-4.0};
  items[2].features = {0.5};
  const auto again = audit(items, AuditOptions{});
  EXPECT_EQ(report_json(again), report_json(r));
}

TEST(Audit, SizesSumToItemCount) {
  const auto items = fixtures::make_audit_fixture(4).biased;
  AuditOptions opt;
  opt.k = 15;
  const auto r = audit(items, opt);
  std::size_t total = 0;
  for (const auto& c : r.clusters) {
    total += c.size;
    ASSERT_TRUE(c.kappa.has_value());
    EXPECT_GE(*c.kappa, 0.0);
  }
  EXPECT_EQ(total, items.size());
  EXPECT_EQ(r.num_items, items.size());
}

TEST(Audit, UnbiasedScorerIsFlat) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    AuditOptions opt;
    opt.k = 15;
    opt.seed = seed;
    EXPECT_LT(*audit(fixtures::make_audit_fixture(seed).unbiased, opt).inter_cluster_cov, 2.0);
  }
}

TEST(Audit, BiasedScorerStandsOut) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto f = fixtures::make_audit_fixture(seed);
    AuditOptions opt;
    opt.k = 15;
    opt.seed = seed;
    const double unbiased = *audit(f.unbiased, opt).inter_cluster_cov;
    const double biased = *audit(f.biased, opt).inter_cluster_cov;
    EXPECT_GE(biased, 10.0 * unbiased) << "seed " << seed;
  }
}

TEST(Audit, MissingFeaturesAndLabelsThrow) {
  std::vector<ScoredItem> items{{"a", 1.0, {}, std::nullopt}, {"b", 1.0, {}, std::nullopt}};
  EXPECT_THROW(audit(items, AuditOptions{}), DomainError);
  AuditOptions opt;
  opt.k = 1;
  EXPECT_THROW(audit(items, opt), DomainError);
}

TEST(AuditIo, ReadsCsvWithFeaturesAndLabels) {
  std::istringstream in("id,score,label,f1,f2\nx,0.5,1,0.1,0.2\ny,0.7,,1.5,-2\n");
  const auto items = read_items_csv(in);
  ASSERT_EQ(items.size(), 2u);
  EXPECT_EQ(items[0].id, "x");
  EXPECT_EQ(items[0].label, std::optional<std::size_t>(1));
  EXPECT_FALSE(items[1].label.has_value());
  EXPECT_EQ(items[1].features, (std::vector<double>{1.5, -2.0}));
}

TEST(AuditIo, RejectsMalformedInput) {
  std::istringstream no_score("id,value\na,1\n");
  EXPECT_THROW(read_items_csv(no_score), ConfigError);
  std::istringstream ragged("id,score\na,1,2\n");
  EXPECT_THROW(read_items_csv(ragged), ConfigError);
  std::istringstream bad_number("id,score\na,abc\n");
  EXPECT_THROW(read_items_csv(bad_number), ConfigError);
}

TEST(AuditIo, CsvReportMarksMissingKappa) {
  std::vector<ScoredItem> items{{"a", -1.0, {}, 0}, {"b", 1.0, {}, 0}, {"c", 2.0, {}, 1}};
  const auto r = audit(items, AuditOptions{});
  std::ostringstream out;
  write_report_csv(out, r);
  EXPECT_NE(out.str().find("NA"), std::string::npos);
  EXPECT_NE(report_json(r).find("\"inter_cluster_cov\""), std::string::npos);
}
