#include "sscae/metrics.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace sscae {

namespace {

template <typename T>
double delta_score_impl(std::span<const T> w) {
  double total = 0.0, peak = 0.0;
  for (T v : w) {
    const double e = static_cast<double>(v) * v;
    total += e;
    peak = std::max(peak, e);
  }
  if (total == 0.0) return 1.0;
  return peak / total;
}

template <typename T>
std::optional<double> hoyer_impl(std::span<const T> v) {
  if (v.size() < 2) return std::nullopt;
  double l1 = 0.0, l2sq = 0.0;
  for (T x : v) {
    l1 += std::abs(static_cast<double>(x));
    l2sq += static_cast<double>(x) * x;
  }
  if (l2sq == 0.0) return std::nullopt;
  const double root_p = std::sqrt(static_cast<double>(v.size()));
  const double h = (root_p - l1 / std::sqrt(l2sq)) / (root_p - 1.0);
  return std::clamp(h, 0.0, 1.0);
}

}  // namespace

double delta_filter_score(std::span<const double> w) { return delta_score_impl(w); }
double delta_filter_score(std::span<const float> w) { return delta_score_impl(w); }

std::optional<double> hoyer_sparseness(std::span<const double> v) { return hoyer_impl(v); }
std::optional<double> hoyer_sparseness(std::span<const float> v) { return hoyer_impl(v); }

template <typename T>
std::size_t delta_filter_count(const Tensor<T>& weights, double threshold) {
  const Shape& s = weights.shape();
  const std::size_t per_filter = s.c * s.h * s.w;
  std::size_t count = 0;
  for (std::size_t k = 0; k < s.n; ++k) {
    auto f = weights.data().subspan(k * per_filter, per_filter);
    if (delta_filter_score(f) >= threshold) ++count;
  }
  return count;
}

template <typename T>
std::optional<double> activity_uniformity(const Tensor<T>& maps, double eps) {
  MapStatistics stats(eps);
  stats.add(maps);
  return stats.activity_uniformity();
}

template <typename T>
void MapStatistics::add(const Tensor<T>& maps) {
  const Shape& s = maps.shape();
  const std::size_t sites = s.map_size();
  for (std::size_t b = 0; b < s.n; ++b)
    for (std::size_t k = 0; k < s.c; ++k)
      if (auto h = hoyer_sparseness(maps.map(b, k))) {
        hoyer_sum_ += *h;
        ++hoyer_count_;
      }
  std::vector<T> vec(s.c);
  for (std::size_t b = 0; b < s.n; ++b)
    for (std::size_t site = 0; site < sites; ++site) {
      const std::size_t base = maps.offset(b, 0, 0, 0) + site;
      double sq = 0.0;
      for (std::size_t k = 0; k < s.c; ++k) {
        vec[k] = maps[base + k * sites];
        sq += static_cast<double>(vec[k]) * vec[k];
      }
      const double norm = std::sqrt(sq);
      if (!(norm > eps_)) continue;
      norm_sum_ += norm;
      norm_sq_sum_ += norm * norm;
      ++norm_count_;
      if (auto h = hoyer_sparseness(std::span<const T>(vec))) {
        pop_sum_ += *h;
        ++pop_count_;
      }
    }
}

std::optional<double> MapStatistics::mean_hoyer() const {
  if (hoyer_count_ == 0) return std::nullopt;
  return hoyer_sum_ / static_cast<double>(hoyer_count_);
}

std::optional<double> MapStatistics::population_sparsity() const {
  if (pop_count_ == 0) return std::nullopt;
  return pop_sum_ / static_cast<double>(pop_count_);
}

std::optional<double> MapStatistics::activity_uniformity() const {
  if (norm_count_ == 0) return std::nullopt;
  const double n = static_cast<double>(norm_count_);
  const double mean = norm_sum_ / n;
  const double var = std::max(0.0, norm_sq_sum_ / n - mean * mean);
  if (norm_count_ == 1) return 0.0;
  return std::sqrt(var) / mean;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_optional(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

double parse_double(const std::string& s, const char* field) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw FormatError(std::string("csv: bad value '") + s + "' for " + field);
  return v;
}

std::size_t parse_size(const std::string& s, const char* field) {
  std::size_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw FormatError(std::string("csv: bad value '") + s + "' for " + field);
  return v;
}

std::optional<double> parse_optional(const std::string& s, const char* field) {
  if (s.empty()) return std::nullopt;
  return parse_double(s, field);
}

}  // namespace

std::string csv_header() {
  return "epoch,iterations,l2rec,l1sp,total,delta_filter_count,mean_hoyer,population_sparsity,"
         "activity_uniformity,wall_seconds";
}

std::string to_csv_row(const TrainReport& r) {
  std::string row;
  row += std::to_string(r.epoch) + ',';
  row += std::to_string(r.iterations) + ',';
  row += format_double(r.l2rec) + ',';
  row += format_double(r.l1sp) + ',';
  row += format_double(r.total) + ',';
  row += std::to_string(r.delta_filter_count) + ',';
  row += format_optional(r.mean_hoyer) + ',';
  row += format_optional(r.population_sparsity) + ',';
  row += format_optional(r.activity_uniformity) + ',';
  row += format_double(r.wall_seconds);
  return row;
}

TrainReport parse_csv_row(const std::string& line) {
  std::vector<std::string> f;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      f.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  f.push_back(cur);
  if (f.size() != 10)
    throw FormatError("csv: expected 10 fields, got " + std::to_string(f.size()));
  TrainReport r;
  r.epoch = parse_size(f[0], "epoch");
  r.iterations = parse_size(f[1], "iterations");
  r.l2rec = parse_double(f[2], "l2rec");
  r.l1sp = parse_double(f[3], "l1sp");
  r.total = parse_double(f[4], "total");
  r.delta_filter_count = parse_size(f[5], "delta_filter_count");
  r.mean_hoyer = parse_optional(f[6], "mean_hoyer");
  r.population_sparsity = parse_optional(f[7], "population_sparsity");
  r.activity_uniformity = parse_optional(f[8], "activity_uniformity");
  r.wall_seconds = parse_double(f[9], "wall_seconds");
  return r;
}

void write_csv(std::span<const TrainReport> reports, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << csv_header() << '\n';
  for (const auto& r : reports) out << to_csv_row(r) << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

std::vector<TrainReport> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("csv: missing header in " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != csv_header()) throw FormatError("csv: unexpected header in " + path.string());
  std::vector<TrainReport> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    rows.push_back(parse_csv_row(line));
  }
  return rows;
}

template std::size_t delta_filter_count(const Tensor<float>&, double);
template std::size_t delta_filter_count(const Tensor<double>&, double);
template std::optional<double> activity_uniformity(const Tensor<float>&, double);
template std::optional<double> activity_uniformity(const Tensor<double>&, double);
template void MapStatistics::add(const Tensor<float>&);
template void MapStatistics::add(const Tensor<double>&);

}  // namespace sscae
