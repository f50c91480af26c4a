#include "spgrpo/bias_audit.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "spgrpo/errors.hpp"
#include "spgrpo/random.hpp"

namespace spgrpo::audit {
namespace {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

struct Moments {
  double mean = 0.0;
  double std = 0.0;
};

Moments population_moments(const std::vector<double>& xs) {
  Moments m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(var / static_cast<double>(xs.size()));
  return m;
}

std::optional<double> coefficient_of_variation(const Moments& m) {
  if (m.mean == 0.0) return std::nullopt;
  return m.std / std::abs(m.mean) * 100.0;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("audit input line " + std::to_string(line_no) + ": '" + s +
                      "' is not a finite number");
  }
}

}  // namespace

std::vector<std::size_t> kmeans(const std::vector<std::vector<double>>& features, std::size_t k,
                                std::uint64_t seed, std::size_t max_iters) {
  const std::size_t n = features.size();
  if (k == 0 || k > n) {
    throw DomainError("kmeans: k = " + std::to_string(k) + " with " + std::to_string(n) +
                      " items");
  }
  const std::size_t dim = features.front().size();
  for (const auto& f : features) {
    if (f.size() != dim) throw ShapeError("kmeans: feature dimensions differ");
  }

  numerics::RandomSource rng(seed);
  std::vector<std::vector<double>> centres;
  std::vector<bool> chosen(n, false);
  std::size_t first = rng.uniform_index(n);
  centres.push_back(features[first]);
  chosen[first] = true;
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  while (centres.size() < k) {
    std::size_t pick = n;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(features[i], centres.back()));
      if (!chosen[i] && nearest[i] > best) {
        best = nearest[i];
        pick = i;
      }
    }
    chosen[pick] = true;
    centres.push_back(features[pick]);
  }

  std::vector<std::size_t> labels(n, 0);
  for (std::size_t iter = 0; iter <= max_iters; ++iter) {
    bool changed = iter == 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t arg = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_distance(features[i], centres[c]);
        if (d < best) {
          best = d;
          arg = c;
        }
      }
      if (labels[i] != arg) {
        labels[i] = arg;
        changed = true;
      }
    }
    if (!changed || iter == max_iters) break;
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[labels[i]];
      for (std::size_t d = 0; d < dim; ++d) sums[labels[i]][d] += features[i][d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      // An emptied cluster keeps its previous centre.
      if (counts[c] == 0) continue;
      for (std::size_t d = 0; d < dim; ++d) {
        centres[c][d] = sums[c][d] / static_cast<double>(counts[c]);
      }
    }
  }
  return labels;
}

std::vector<std::optional<double>> cluster_kappa(
    const std::vector<std::vector<double>>& scores_by_cluster) {
  std::vector<std::optional<double>> out;
  out.reserve(scores_by_cluster.size());
  for (const auto& scores : scores_by_cluster) {
    if (scores.empty()) throw DomainError("cluster_kappa: empty cluster");
    out.push_back(coefficient_of_variation(population_moments(scores)));
  }
  return out;
}

ClusterReport audit(const std::vector<ScoredItem>& items, const AuditOptions& options) {
  if (items.empty()) throw DomainError("audit: no items");
  for (const auto& item : items) {
    if (!std::isfinite(item.score)) throw DomainError("audit: item '" + item.id + "' has a non-finite score");
  }
  std::vector<std::size_t> labels(items.size());
  ClusterReport report;
  report.num_items = items.size();
  if (options.k == 0) {
    report.used_labels = true;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (!items[i].label) throw DomainError("audit: item '" + items[i].id + "' has no label");
      labels[i] = *items[i].label;
    }
  } else {
    std::vector<std::vector<double>> features;
    features.reserve(items.size());
    for (const auto& item : items) {
      if (item.features.empty()) {
        throw DomainError("audit: item '" + item.id + "' has no features to cluster");
      }
      features.push_back(item.features);
    }
    labels = kmeans(features, options.k, options.seed, options.max_iters);
  }

  std::map<std::size_t, std::vector<double>> by_label;
  for (std::size_t i = 0; i < items.size(); ++i) by_label[labels[i]].push_back(items[i].score);

  std::vector<double> means;
  for (const auto& [label, scores] : by_label) {
    const auto m = population_moments(scores);
    report.clusters.push_back({label, scores.size(), m.mean, m.std, coefficient_of_variation(m)});
    means.push_back(m.mean);
  }
  report.k = report.clusters.size();
  report.inter_cluster_cov = coefficient_of_variation(population_moments(means));
  return report;
}

std::vector<ScoredItem> read_items_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("audit input: empty file");
  const auto header = split_csv(line);
  std::optional<std::size_t> id_col, score_col, label_col;
  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "id") id_col = c;
    else if (header[c] == "score") score_col = c;
    else if (header[c] == "label") label_col = c;
    else feature_cols.push_back(c);
  }
  if (!id_col || !score_col) throw ConfigError("audit input: header needs 'id' and 'score'");

  std::vector<ScoredItem> items;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw ConfigError("audit input line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " columns");
    }
    ScoredItem item;
    item.id = cells[*id_col];
    item.score = parse_double(cells[*score_col], line_no);
    if (label_col && !cells[*label_col].empty()) {
      const double l = parse_double(cells[*label_col], line_no);
      if (l < 0.0 || l != std::floor(l)) {
        throw ConfigError("audit input line " + std::to_string(line_no) +
                          ": label must be a non-negative integer");
      }
      item.label = static_cast<std::size_t>(l);
    }
    for (auto c : feature_cols) item.features.push_back(parse_double(cells[c], line_no));
    items.push_back(std::move(item));
  }
  return items;
}

std::string report_json(const ClusterReport& report) {
  nlohmann::json j;
  j["statistic"] = "coefficient of variation, percent, population standard deviation";
  j["k"] = report.k;
  j["num_items"] = report.num_items;
  j["used_labels"] = report.used_labels;
  j["inter_cluster_cov"] =
      report.inter_cluster_cov ? nlohmann::json(*report.inter_cluster_cov) : nlohmann::json();
  auto& clusters = j["clusters"] = nlohmann::json::array();
  for (const auto& c : report.clusters) {
    clusters.push_back({{"label", c.label},
                        {"size", c.size},
                        {"mean", c.mean},
                        {"std", c.std},
                        {"kappa", c.kappa ? nlohmann::json(*c.kappa) : nlohmann::json()}});
  }
  return j.dump(2);
}

void write_report_csv(std::ostream& out, const ClusterReport& report) {
  out << "label,size,mean,std,kappa\n";
  for (const auto& c : report.clusters) {
    out << c.label << ',' << c.size << ',' << nlohmann::json(c.mean).dump() << ','
        << nlohmann::json(c.std).dump() << ',';
    if (c.kappa) out << nlohmann::json(*c.kappa).dump();
    else out << "NA";
    out << '\n';
  }
}

}  // namespace spgrpo::audit
