#include "wavehist/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace wavehist {

const std::vector<std::string>& algorithm_names() {
  static const std::vector<std::string> names{kSendV,  kSendCoef,   kHWTopk,
                                              kBasicS, kImprovedS, kTwoLevelS};
  return names;
}

bool is_exact_algorithm(std::string_view algo) {
  return algo == kSendV || algo == kSendCoef || algo == kHWTopk;
}

AlgorithmOutcome run_algorithm(std::string_view algo, const Dataset& data,
                               std::span<SplitDescriptor> splits, std::size_t k,
                               const SamplingParams& sampling, CommLedger& ledger,
                               const JobOptions& options) {
  for (auto& s : splits) s.state.clear();
  const auto start = std::chrono::steady_clock::now();
  AlgorithmOutcome out;
  if (algo == kSendV) {
    out.topk = send_v(data, splits, k, ledger, options);
  } else if (algo == kSendCoef) {
    out.topk = send_coef(data, splits, k, ledger, options);
  } else if (algo == kHWTopk) {
    out.topk = hwtopk(data, splits, k, ledger, options);
  } else if (algo == kBasicS) {
    out.topk = basic_sampling(data, splits, k, sampling, ledger, options).topk;
  } else if (algo == kImprovedS) {
    out.topk = improved_sampling(data, splits, k, sampling, ledger, options).topk;
  } else if (algo == kTwoLevelS) {
    out.topk = twolevel_sampling(data, splits, k, sampling, ledger, options).topk;
  } else {
    throw std::invalid_argument("unknown algorithm '" + std::string(algo) + "'");
  }
  const auto stop = std::chrono::steady_clock::now();
  out.wall_time_ms = std::chrono::duration<double, std::milli>(stop - start).count();
  return out;
}

double ideal_sse(const CountVector& v, std::size_t k) {
  const auto top = select_top_k(haar_transform(v), k);
  return compute_sse(v, reconstruct(top, static_cast<std::uint64_t>(v.size())));
}

void ExperimentConfig::validate() const {
  if (algos.empty()) throw std::invalid_argument("experiment: no algorithms");
  for (const auto& a : algos) {
    const auto& known = algorithm_names();
    if (std::find(known.begin(), known.end(), a) == known.end()) {
      throw std::invalid_argument("experiment: unknown algorithm '" + a + "'");
    }
  }
  if (k < 1) throw std::invalid_argument("experiment: k must be >= 1");
  if (!(epsilon > 0.0)) throw std::invalid_argument("experiment: epsilon must be > 0");
  if (beta < 1) throw std::invalid_argument("experiment: beta must be >= 1");
  if (seeds.empty()) throw std::invalid_argument("experiment: no seeds");
  if (trials < 1) throw std::invalid_argument("experiment: trials must be >= 1");
  if (!data) {
    if (n < 1) throw std::invalid_argument("experiment: n must be >= 1");
    if (u < 2) throw std::invalid_argument("experiment: u must be >= 2");
    if (!(alpha >= 0.0)) throw std::invalid_argument("experiment: alpha must be >= 0");
  }
}

ExperimentConfig parse_experiment_config(std::string_view json_text) {
  const auto j = nlohmann::json::parse(json_text);
  if (!j.is_object()) throw std::invalid_argument("experiment config must be a JSON object");
  ExperimentConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "algos") {
      cfg.algos = value.get<std::vector<std::string>>();
    } else if (key == "k") {
      cfg.k = value.get<std::size_t>();
    } else if (key == "epsilon") {
      cfg.epsilon = value.get<double>();
    } else if (key == "n") {
      cfg.n = value.get<std::uint64_t>();
    } else if (key == "u") {
      cfg.u = value.get<std::uint64_t>();
    } else if (key == "alpha") {
      cfg.alpha = value.get<double>();
    } else if (key == "beta") {
      cfg.beta = value.get<std::uint64_t>();
    } else if (key == "seeds") {
      cfg.seeds = value.get<std::vector<std::uint64_t>>();
    } else if (key == "trials") {
      cfg.trials = value.get<std::size_t>();
    } else if (key == "samples_mode") {
      cfg.samples_mode = parse_sample_mode(value.get<std::string>());
    } else if (key == "record_size") {
      cfg.record_size = value.get<std::uint16_t>();
    } else if (key == "data") {
      cfg.data = value.get<std::string>();
    } else if (key == "output") {
      cfg.output = value.get<std::string>();
    } else {
      throw std::invalid_argument("experiment config: unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult result;
  std::size_t trial_no = 0;

  std::optional<Dataset> stored;
  if (cfg.data) {
    stored = Dataset::open(*cfg.data);
    const auto& meta = stored->meta();
    if (cfg.n != 0 && cfg.n != meta.n) {
      throw std::invalid_argument("experiment: config n=" + std::to_string(cfg.n) +
                                  " but dataset has n=" + std::to_string(meta.n));
    }
    if (cfg.u != 0 && next_power_of_two(cfg.u) != meta.u) {
      throw std::invalid_argument("experiment: config u=" + std::to_string(cfg.u) +
                                  " but dataset has u=" + std::to_string(meta.u));
    }
  }

  for (auto seed : cfg.seeds) {
    const Dataset data =
        stored ? *stored
               : Dataset::from_keys(zipf_keys({cfg.n, cfg.u, cfg.alpha, seed, cfg.record_size}),
                                    cfg.u, cfg.record_size);
    const CountVector v = build_frequency_vector(data.read_keys(0, data.n()), data.u());
    const double sse_ideal = ideal_sse(v, cfg.k);
    auto splits = partition_dataset(data.meta(), cfg.beta);

    for (std::size_t t = 0; t < cfg.trials; ++t, ++trial_no) {
      const SamplingParams sampling{cfg.epsilon, derive_seed({seed, t}), cfg.samples_mode};
      for (const auto& algo : cfg.algos) {
        CommLedger ledger;
        const auto outcome = run_algorithm(algo, data, splits, cfg.k, sampling, ledger);
        const auto totals = ledger.total(algo);
        ResultRow row;
        row.algo = algo;
        row.trial = trial_no;
        row.k = cfg.k;
        row.epsilon = cfg.epsilon;
        row.alpha = cfg.alpha;
        row.m = splits.size();
        row.pairs = totals.pairs;
        row.bytes = totals.bytes;
        row.wall_time_ms = outcome.wall_time_ms;
        row.sse = compute_sse(v, reconstruct(outcome.topk, data.u()));
        row.sse_ideal = sse_ideal;
        result.rows.push_back(std::move(row));
        result.ledger.merge(ledger);
      }
    }
  }
  return result;
}

namespace {

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

std::string format_row(const ResultRow& r) {
  char wall[32];
  std::snprintf(wall, sizeof wall, "%.3f", r.wall_time_ms);
  std::ostringstream os;
  os << r.algo << ',' << r.trial << ',' << r.k << ',' << fmt_double(r.epsilon) << ','
     << fmt_double(r.alpha) << ',' << r.m << ',' << r.pairs << ',' << r.bytes << ',' << wall
     << ',' << fmt_double(r.sse) << ',' << fmt_double(r.sse_ideal);
  return os.str();
}

void write_result_csv(std::ostream& os, std::span<const ResultRow> rows) {
  os << kResultCsvHeader << '\n';
  for (const auto& r : rows) os << format_row(r) << '\n';
}

void write_histogram_csv(std::ostream& os, const TopK& top) {
  os << "index,value\n";
  for (const auto& c : top.entries) os << c.index << ',' << fmt_double(c.value) << '\n';
}

TopK read_histogram_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "index,value") {
    throw std::runtime_error("histogram file: expected header 'index,value'");
  }
  TopK top;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw std::runtime_error("histogram file line " + std::to_string(line_no) + ": no comma");
    }
    Coefficient c{};
    const auto idx = line.substr(0, comma);
    const auto [p, ec] = std::from_chars(idx.data(), idx.data() + idx.size(), c.index);
    if (ec != std::errc{} || p != idx.data() + idx.size()) {
      throw std::runtime_error("histogram file line " + std::to_string(line_no) +
                               ": bad index");
    }
    try {
      std::size_t used = 0;
      const auto val = line.substr(comma + 1);
      c.value = std::stod(val, &used);
      if (used != val.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw std::runtime_error("histogram file line " + std::to_string(line_no) +
                               ": bad value");
    }
    top.entries.push_back(c);
  }
  top.k = top.entries.size();
  return top;
}

}  // namespace wavehist
