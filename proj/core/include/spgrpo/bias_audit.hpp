#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace spgrpo::audit {

struct ScoredItem {
  std::string id;
  double score = 0.0;
  std::vector<double> features;
  std::optional<std::size_t> label;
};

struct ClusterStats {
  std::size_t label = 0;
  std::size_t size = 0;
  double mean = 0.0;
  double std = 0.0;  // population
  // std / mean * 100; empty when the mean is zero.
  std::optional<double> kappa;
};

struct ClusterReport {
  std::size_t k = 0;  // non-empty clusters
  std::size_t num_items = 0;
  std::vector<ClusterStats> clusters;
  // Coefficient of variation (percent, population std) of the cluster means.
  std::optional<double> inter_cluster_cov;
  bool used_labels = false;
};

// Lloyd iterations from farthest-point seeding: the first centre is drawn
// from `seed`, each next centre is the item farthest from all chosen ones.
// Throws DomainError when k is 0 or exceeds the item count, ShapeError on
// ragged features.
std::vector<std::size_t> kmeans(const std::vector<std::vector<double>>& features, std::size_t k,
                                std::uint64_t seed, std::size_t max_iters = 100);

// Per-cluster coefficient of variation, percent.
std::vector<std::optional<double>> cluster_kappa(
    const std::vector<std::vector<double>>& scores_by_cluster);

struct AuditOptions {
  // 0 means "use the labels carried by the items".
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::size_t max_iters = 100;
};

ClusterReport audit(const std::vector<ScoredItem>& items, const AuditOptions& options);

// Tabular input: header row with `id`, `score`, optional `label`, and any
// number of feature columns (every other column). Comma separated.
std::vector<ScoredItem> read_items_csv(std::istream& in);

// One JSON object (pretty printed) describing the report.
std::string report_json(const ClusterReport& report);
void write_report_csv(std::ostream& out, const ClusterReport& report);

}  // namespace spgrpo::audit
