// wavehist: generate datasets, build wavelet histograms on the simulated
// cluster, run experiment grids and score histograms.

#include "wavehist/experiment.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <string>

namespace {

using namespace wavehist;

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  return out;
}

void write_ledger(const std::string& path, const CommLedger& ledger) {
  if (path.empty()) return;
  auto out = open_out(path);
  ledger.write_csv(out);
}

struct GenerateArgs {
  ZipfConfig cfg;
  std::string out;
};

int cmd_generate(const GenerateArgs& a) {
  const auto meta = generate_zipf(a.cfg, a.out);
  std::cout << "wrote " << a.out << ": n=" << meta.n << " u=" << meta.u
            << " record_size=" << meta.record_size << " bytes=" << meta.file_bytes() << '\n';
  return 0;
}

struct RunArgs {
  std::string algo;
  std::size_t k = 30;
  std::uint64_t beta = 125'000;
  double epsilon = 0.02;
  std::uint64_t seed = 1;
  SampleMode mode = SampleMode::noreplace;
  std::string data;
  std::string out;
  std::string ledger;
  unsigned threads = 1;
};

int cmd_run(const RunArgs& a) {
  const auto data = Dataset::open(a.data);
  auto splits = partition_dataset(data.meta(), a.beta);
  CommLedger ledger;
  const SamplingParams sampling{a.epsilon, a.seed, a.mode};
  const auto outcome =
      run_algorithm(a.algo, data, splits, a.k, sampling, ledger, JobOptions{{}, a.threads});

  const CountVector v = build_frequency_vector(data.read_keys(0, data.n()), data.u());
  const auto totals = ledger.total(a.algo);
  ResultRow row;
  row.algo = a.algo;
  row.k = a.k;
  row.epsilon = is_exact_algorithm(a.algo) ? 0.0 : a.epsilon;
  row.m = splits.size();
  row.pairs = totals.pairs;
  row.bytes = totals.bytes;
  row.wall_time_ms = outcome.wall_time_ms;
  row.sse = compute_sse(v, reconstruct(outcome.topk, data.u()));
  row.sse_ideal = ideal_sse(v, a.k);
  std::cout << kResultCsvHeader << '\n' << format_row(row) << '\n';

  if (!a.out.empty()) {
    auto out = open_out(a.out);
    write_histogram_csv(out, outcome.topk);
  }
  write_ledger(a.ledger, ledger);
  return 0;
}

struct ExperimentArgs {
  std::string config;
  std::string out;
  std::string ledger;
};

int cmd_experiment(const ExperimentArgs& a) {
  auto cfg = load_experiment_config(a.config);
  if (!a.out.empty()) cfg.output = a.out;
  const auto result = run_experiment(cfg);
  if (cfg.output) {
    auto out = open_out(cfg.output->string());
    write_result_csv(out, result.rows);
  } else {
    write_result_csv(std::cout, result.rows);
  }
  write_ledger(a.ledger, result.ledger);
  return 0;
}

struct SseArgs {
  std::string data;
  std::string histogram;
};

int cmd_sse(const SseArgs& a) {
  const auto data = Dataset::open(a.data);
  std::ifstream in(a.histogram);
  if (!in) throw std::runtime_error("cannot open " + a.histogram);
  const auto top = read_histogram_csv(in);
  for (const auto& c : top.entries) {
    if (c.index < 1 || c.index > data.u()) {
      throw std::runtime_error("histogram index " + std::to_string(c.index) +
                               " outside [1, " + std::to_string(data.u()) + "]");
    }
  }
  const CountVector v = build_frequency_vector(data.read_keys(0, data.n()), data.u());
  std::cout << "k,sse,sse_ideal\n"
            << top.entries.size() << ',' << compute_sse(v, reconstruct(top, data.u())) << ','
            << ideal_sse(v, top.entries.size()) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exact and approximate Haar wavelet histograms on a simulated map-reduce cluster"};
  app.require_subcommand(1);

  const std::map<std::string, SampleMode> modes{{"coinflip", SampleMode::coinflip},
                                                {"noreplace", SampleMode::noreplace}};

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a Zipfian key dataset");
  g->add_option("--n", gen.cfg.n, "Number of records")->required()->check(CLI::PositiveNumber);
  g->add_option("--u", gen.cfg.u, "Key domain size (padded to a power of two)")
      ->required()
      ->check(CLI::Range(std::uint64_t{2}, std::uint64_t{1} << 32));
  g->add_option("--alpha", gen.cfg.alpha, "Zipf skew (0 = uniform)")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  g->add_option("--seed", gen.cfg.seed, "Generator seed")->capture_default_str();
  g->add_option("--record-size", gen.cfg.record_size, "Bytes per record (>= 4)")
      ->capture_default_str()
      ->check(CLI::Range(4, 65535));
  g->add_option("--out", gen.out, "Output dataset file")->required();

  RunArgs run;
  auto* r = app.add_subcommand("run", "Build one histogram and report communication and SSE");
  r->add_option("--algo", run.algo, "Algorithm")
      ->required()
      ->check(CLI::IsMember(algorithm_names()));
  r->add_option("--k", run.k, "Coefficients to keep")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  r->add_option("--beta", run.beta, "Records per split")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  r->add_option("--epsilon", run.epsilon, "Sampling error parameter")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  r->add_option("--seed", run.seed, "Sampling seed")->capture_default_str();
  r->add_option("--samples-mode", run.mode, "First-level sampler")
      ->transform(CLI::CheckedTransformer(modes, CLI::ignore_case))
      ->default_str("noreplace");
  r->add_option("--data", run.data, "Dataset file")->required()->check(CLI::ExistingFile);
  r->add_option("--out", run.out, "Histogram CSV (index,value)");
  r->add_option("--ledger", run.ledger, "Communication ledger CSV");
  r->add_option("--threads", run.threads, "Mapper threads")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  ExperimentArgs exp;
  auto* e = app.add_subcommand("experiment", "Run a JSON experiment grid, emit result rows");
  e->add_option("--config", exp.config, "JSON config file")->required()->check(CLI::ExistingFile);
  e->add_option("--out", exp.out, "Result CSV (overrides the config's output; default stdout)");
  e->add_option("--ledger", exp.ledger, "Accumulated ledger CSV");

  SseArgs sse;
  auto* s = app.add_subcommand("sse", "Score a histogram CSV against a dataset");
  s->add_option("--data", sse.data, "Dataset file")->required()->check(CLI::ExistingFile);
  s->add_option("--histogram", sse.histogram, "Histogram CSV (index,value)")
      ->required()
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*g) return cmd_generate(gen);
    if (*r) return cmd_run(run);
    if (*e) return cmd_experiment(exp);
    if (*s) return cmd_sse(sse);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}
