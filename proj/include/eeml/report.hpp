#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "eeml/config.hpp"
#include "eeml/errors.hpp"

namespace eeml {

struct ConfidenceInterval {
  double mean = 0.0;
  double half_width = 0.0;
  bool single_sample = false;  // half-width is 0 by convention, flag it
};

// mean and 1.96 * sd / sqrt(n), sample sd with n-1 denominator
inline ConfidenceInterval confidence_interval(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("confidence_interval: empty input");
  const std::size_t n = values.size();
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  if (n == 1) return {mean, 0.0, true};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  return {mean, 1.96 * sd / std::sqrt(static_cast<double>(n)), false};
}

struct MetricsReport {
  std::string method;  // "eeml" or "maml"
  int shots = 0;
  int q_query = 0;
  int n_tasks = 0;
  std::vector<double> task_mse;
  double mean = 0.0;
  double ci_half_width = 0.0;
  bool single_sample = false;
  std::string config_hash;
  std::map<std::string, std::string> checkpoint_hashes;
  int degenerate_embeddings = 0;

  void finalize() {
    const ConfidenceInterval ci = confidence_interval(task_mse);
    n_tasks = static_cast<int>(task_mse.size());
    mean = ci.mean;
    ci_half_width = ci.half_width;
    single_sample = ci.single_sample;
  }

  nlohmann::json summary_json() const {
    return {{"method", method},
            {"shots", shots},
            {"q_query", q_query},
            {"n_tasks", n_tasks},
            {"mean_mse", mean},
            {"ci95_half_width", ci_half_width},
            {"single_sample", single_sample},
            {"config_hash", config_hash},
            {"checkpoint_hashes", checkpoint_hashes},
            {"degenerate_embeddings", degenerate_embeddings}};
  }
};

inline std::string hash_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DependencyError("missing file for hashing: " + path.string());
  std::string bytes(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>{});
  return hex64(fnv1a(std::span(bytes.data(), bytes.size())));
}

inline void write_task_csv(const std::filesystem::path& path, const MetricsReport& rep) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open report csv: " + path.string());
  f << "task,mse\n";
  f.precision(17);
  for (std::size_t i = 0; i < rep.task_mse.size(); ++i) f << i << "," << rep.task_mse[i] << "\n";
}

inline void write_summary_json(const std::filesystem::path& path, const MetricsReport& rep) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open report json: " + path.string());
  f << rep.summary_json().dump(2) << "\n";
}

inline void write_loss_csv(const std::filesystem::path& path, std::span<const double> trace) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open loss csv: " + path.string());
  f << "step,mean_query_loss\n";
  f.precision(17);
  for (std::size_t i = 0; i < trace.size(); ++i) f << i << "," << trace[i] << "\n";
}

}  // namespace eeml
