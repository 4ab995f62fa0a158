#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sscae/tensor.hpp"

namespace sscae {

/// One row of the training log. Column order in the CSV follows field order.
struct TrainReport {
  std::size_t epoch = 0;
  std::size_t iterations = 0;  // cumulative optimizer steps at the end of the epoch
  double l2rec = 0.0;
  double l1sp = 0.0;
  double total = 0.0;
  std::size_t delta_filter_count = 0;
  std::optional<double> mean_hoyer;
  std::optional<double> population_sparsity;
  std::optional<double> activity_uniformity;
  double wall_seconds = 0.0;

  bool operator==(const TrainReport&) const = default;
};

inline constexpr double kDeltaThreshold = 0.9;

/// max_i w_i^2 / sum_i w_i^2. A zero filter scores 1 (dead).
double delta_filter_score(std::span<const double> w);
double delta_filter_score(std::span<const float> w);

/// Number of filters in a [K, C, k_h, k_w] bank scoring >= threshold.
template <typename T>
std::size_t delta_filter_count(const Tensor<T>& weights, double threshold = kDeltaThreshold);

/// (sqrt(P) - l1/l2) / (sqrt(P) - 1); absent for zero vectors or P < 2.
std::optional<double> hoyer_sparseness(std::span<const double> v);
std::optional<double> hoyer_sparseness(std::span<const float> v);

/// Coefficient of variation (population std / mean) of the feature-vector
/// norms ||h[b,:,i,j]||_2 over sites with norm > eps; absent with no such site.
template <typename T>
std::optional<double> activity_uniformity(const Tensor<T>& maps, double eps = 1e-8);

/// Running sparsity statistics over many batches of featuremaps.
class MapStatistics {
 public:
  explicit MapStatistics(double eps = 1e-8) : eps_(eps) {}

  template <typename T>
  void add(const Tensor<T>& maps);

  /// Mean Hoyer sparseness of the non-zero featuremaps.
  std::optional<double> mean_hoyer() const;
  /// Mean Hoyer sparseness of the active feature vectors (across maps).
  std::optional<double> population_sparsity() const;
  std::optional<double> activity_uniformity() const;

 private:
  double eps_;
  double hoyer_sum_ = 0.0;
  std::size_t hoyer_count_ = 0;
  double pop_sum_ = 0.0;
  std::size_t pop_count_ = 0;
  double norm_sum_ = 0.0;
  double norm_sq_sum_ = 0.0;
  std::size_t norm_count_ = 0;
};

std::string csv_header();
std::string to_csv_row(const TrainReport& r);
TrainReport parse_csv_row(const std::string& line);

/// Header plus one row per report. Numbers use the shortest round-trip form.
void write_csv(std::span<const TrainReport> reports, const std::filesystem::path& path);
std::vector<TrainReport> read_csv(const std::filesystem::path& path);

}  // namespace sscae
