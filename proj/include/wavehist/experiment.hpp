#pragma once

// Experiment orchestration: run algorithms over generated or stored datasets
// and report communication and SSE per run.

#include "wavehist/approx.hpp"
#include "wavehist/cluster.hpp"
#include "wavehist/dataset.hpp"
#include "wavehist/exact.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace wavehist {

/// Every algorithm name accepted by run_algorithm, exact ones first.
const std::vector<std::string>& algorithm_names();
bool is_exact_algorithm(std::string_view algo);

struct AlgorithmOutcome {
  TopK topk;
  double wall_time_ms = 0.0;
};

/// Runs one algorithm by name on fresh copies of the split states.
AlgorithmOutcome run_algorithm(std::string_view algo, const Dataset& data,
                               std::span<SplitDescriptor> splits, std::size_t k,
                               const SamplingParams& sampling, CommLedger& ledger,
                               const JobOptions& options = {});

/// SSE of the exact best k-term representation of v.
double ideal_sse(const CountVector& v, std::size_t k);

struct ExperimentConfig {
  std::vector<std::string> algos = algorithm_names();
  std::size_t k = 30;
  double epsilon = 0.02;
  std::uint64_t n = 1'000'000;
  std::uint64_t u = 1 << 16;
  double alpha = 1.1;
  std::uint64_t beta = 125'000;  // records per split (m = 8 at the default n)
  std::vector<std::uint64_t> seeds{1};
  std::size_t trials = 1;         // sampling repetitions per dataset seed
  SampleMode samples_mode = SampleMode::noreplace;
  std::uint16_t record_size = kKeyBytes;
  std::optional<std::filesystem::path> data;  // use a stored dataset instead of generating
  std::optional<std::filesystem::path> output;

  /// Throws std::invalid_argument on a non-positive parameter or unknown algo.
  void validate() const;
};

/// Parses the JSON experiment file; absent keys keep their defaults.
ExperimentConfig parse_experiment_config(std::string_view json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct ResultRow {
  std::string algo;
  std::size_t trial = 0;
  std::size_t k = 0;
  double epsilon = 0.0;
  double alpha = 0.0;
  std::size_t m = 0;
  std::uint64_t pairs = 0;
  std::uint64_t bytes = 0;
  double wall_time_ms = 0.0;
  double sse = 0.0;
  double sse_ideal = 0.0;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  CommLedger ledger;  // all runs, accumulated
};

/// For each dataset seed and trial, runs every configured algorithm. Trial t
/// of seed s samples with seed derive_seed({s, t}); rows are numbered in
/// (seed, trial) order.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

inline constexpr std::string_view kResultCsvHeader =
    "algo,trial,k,epsilon,alpha,m,pairs,bytes,wall_time_ms,sse,sse_ideal";

void write_result_csv(std::ostream& os, std::span<const ResultRow> rows);
std::string format_row(const ResultRow& row);

/// Histogram file: CSV "index,value", one retained coefficient per line.
void write_histogram_csv(std::ostream& os, const TopK& top);
TopK read_histogram_csv(std::istream& is);

}  // namespace wavehist
