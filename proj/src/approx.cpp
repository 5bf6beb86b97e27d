#include "wavehist/approx.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace wavehist {

namespace {

// Job configuration shipped to every mapper: n, epsilon, m.
std::vector<std::byte> job_config(std::uint64_t n, double epsilon, std::size_t m) {
  ByteWriter w;
  w.u64(n);
  w.f64(epsilon);
  w.u32(static_cast<std::uint32_t>(m));
  return w.take();
}

struct JobConfig {
  std::uint64_t n;
  double epsilon;
  std::size_t m;
};

JobConfig read_job_config(std::span<const std::byte> bytes) {
  ByteReader r(bytes);
  JobConfig c{};
  c.n = r.u64();
  c.epsilon = r.f64();
  c.m = r.u32();
  return c;
}

void check_params(const Dataset& data, std::span<SplitDescriptor> splits,
                  const SamplingParams& params) {
  if (!(params.epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  if (splits.empty()) throw std::invalid_argument("no splits");
  if (data.n() == 0) throw std::invalid_argument("empty dataset");
}

SampleConfig first_level(const JobConfig& cfg, const SamplingParams& params) {
  return SampleConfig::for_dataset(cfg.epsilon, cfg.n, params.seed, params.mode);
}

// Shared skeleton: sample each split, let `select` decide what to emit, sum
// the received counts per key and scale by 1/p.
template <typename Select>
ApproxResult sum_and_scale(const std::string& algo, const Dataset& data,
                           std::span<SplitDescriptor> splits, std::size_t k,
                           const SamplingParams& params, CommLedger& ledger,
                           const JobOptions& options, Select select) {
  check_params(data, splits, params);
  const auto u = data.u();
  const double p = SampleConfig::for_dataset(params.epsilon, data.n(), params.seed).p;
  Eigen::VectorXd s = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(u));

  auto map = [&](const SplitDescriptor& split, std::span<const std::byte> broadcast,
                 MapContext& ctx) {
    const auto cfg = read_job_config(broadcast);
    const auto sample = sample_split(data, split, first_level(cfg, params));
    for (const auto& kc : select(sample, cfg)) {
      ctx.emit(kc.key, Count32{static_cast<std::uint32_t>(kc.count)});
    }
  };
  auto reduce = [&](std::uint32_t key, std::span<const Emission> group) {
    for (const auto& e : group) s(key - 1) += std::get<Count32>(e.value).count;
  };
  JobRunner(options).run(splits, {algo, 1, job_config(data.n(), params.epsilon, splits.size())},
                         map, reduce, ledger);

  ApproxResult r;
  r.p = p;
  r.v_hat = s / p;
  r.topk = select_top_k(haar_transform(r.v_hat), k);
  return r;
}

}  // namespace

ApproxResult basic_sampling(const Dataset& data, std::span<SplitDescriptor> splits,
                            std::size_t k, const SamplingParams& params, CommLedger& ledger,
                            const JobOptions& options) {
  return sum_and_scale(kBasicS, data, splits, k, params, ledger, options,
                       [](const SplitSample& sample, const JobConfig&) { return sample.counts; });
}

std::vector<KeyCount> improved_filter(std::span<const KeyCount> sample, std::uint64_t sampled,
                                      double epsilon) {
  const double cut = epsilon * static_cast<double>(sampled) * (1.0 - 1e-12);
  std::vector<KeyCount> out;
  for (const auto& kc : sample) {
    if (static_cast<double>(kc.count) >= cut) out.push_back(kc);
  }
  return out;
}

ApproxResult improved_sampling(const Dataset& data, std::span<SplitDescriptor> splits,
                               std::size_t k, const SamplingParams& params, CommLedger& ledger,
                               const JobOptions& options) {
  return sum_and_scale(kImprovedS, data, splits, k, params, ledger, options,
                       [](const SplitSample& sample, const JobConfig& cfg) {
                         return improved_filter(sample.counts, sample.sampled, cfg.epsilon);
                       });
}

double twolevel_threshold(double epsilon, std::size_t m) {
  return 1.0 / (epsilon * std::sqrt(static_cast<double>(m)));
}

std::vector<TwoLevelEmission> twolevel_map(std::span<const KeyCount> sample, double epsilon,
                                           std::size_t m, Rng& rng) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("twolevel_map: epsilon must be > 0");
  if (m == 0) throw std::invalid_argument("twolevel_map: m must be >= 1");
  const double rate = epsilon * std::sqrt(static_cast<double>(m));
  std::vector<TwoLevelEmission> out;
  for (const auto& kc : sample) {
    if (kc.count == 0) continue;
    const double weight = rate * static_cast<double>(kc.count);
    // weight >= 1 is the same test as s_j(x) >= 1/(eps sqrt(m)).
    if (weight >= 1.0 - 1e-12) {
      out.push_back({kc.key, TwoLevelKind::exact, kc.count});
    } else if (rng.bernoulli(std::min(weight, 1.0))) {
      out.push_back({kc.key, TwoLevelKind::presence, 0});
    }
  }
  return out;
}

EstimatorState::EstimatorState(double epsilon, std::size_t m) : epsilon_(epsilon), m_(m) {
  if (!(epsilon > 0.0) || m == 0) throw std::invalid_argument("EstimatorState: bad parameters");
}

void EstimatorState::add(std::uint32_t source, std::uint64_t count) {
  auto it = std::lower_bound(sources_.begin(), sources_.end(), source);
  if (it != sources_.end() && *it == source) {
    throw std::invalid_argument("twolevel: split " + std::to_string(source) +
                                " sent more than one pair for the same key");
  }
  sources_.insert(it, source);
  if (count == 0) {
    ++presence_;
  } else {
    rho_ += static_cast<double>(count);
  }
}

double EstimatorState::estimate() const {
  return rho_ + static_cast<double>(presence_) * twolevel_threshold(epsilon_, m_);
}

Eigen::VectorXd twolevel_estimate(std::span<const Emission> emissions, std::uint64_t u,
                                  double epsilon, std::size_t m, double p) {
  if (!(p > 0.0) || p > 1.0) throw std::invalid_argument("twolevel_estimate: p must be in (0,1]");
  std::map<std::uint32_t, EstimatorState> per_key;
  for (const auto& e : emissions) {
    if (e.key < 1 || e.key > u) throw std::out_of_range("twolevel_estimate: key out of domain");
    per_key.try_emplace(e.key, epsilon, m)
        .first->second.add(e.source, std::get<Count32>(e.value).count);
  }
  Eigen::VectorXd v_hat = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(u));
  for (const auto& [key, st] : per_key) v_hat(key - 1) = st.estimate() / p;
  return v_hat;
}

ApproxResult twolevel_sampling(const Dataset& data, std::span<SplitDescriptor> splits,
                               std::size_t k, const SamplingParams& params, CommLedger& ledger,
                               const JobOptions& options) {
  check_params(data, splits, params);
  const auto u = data.u();
  const std::size_t m = splits.size();
  const double p = SampleConfig::for_dataset(params.epsilon, data.n(), params.seed).p;
  Eigen::VectorXd s_hat = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(u));

  auto map = [&](const SplitDescriptor& split, std::span<const std::byte> broadcast,
                 MapContext& ctx) {
    const auto cfg = read_job_config(broadcast);
    const auto sample = sample_split(data, split, first_level(cfg, params));
    Rng rng(derive_seed({params.seed, split.id, 0x6c766c32ULL}));
    for (const auto& e : twolevel_map(sample.counts, cfg.epsilon, cfg.m, rng)) {
      ctx.emit(e.key, Count32{static_cast<std::uint32_t>(e.count)});
    }
  };
  auto reduce = [&](std::uint32_t key, std::span<const Emission> group) {
    EstimatorState st(params.epsilon, m);
    for (const auto& e : group) st.add(e.source, std::get<Count32>(e.value).count);
    s_hat(key - 1) = st.estimate();
  };
  JobRunner(options).run(splits, {kTwoLevelS, 1, job_config(data.n(), params.epsilon, m)}, map,
                         reduce, ledger);

  ApproxResult r;
  r.p = p;
  r.v_hat = s_hat / p;
  r.topk = select_top_k(haar_transform(r.v_hat), k);
  return r;
}

double coeff_variance_bound(std::uint64_t index, const Eigen::Ref<const Eigen::VectorXd>& sample,
                            double epsilon, std::size_t m, std::uint64_t n) {
  const auto u = static_cast<std::uint64_t>(sample.size());
  const auto support = coefficient_support(index, u);
  if (support.level < 0) {
    throw std::invalid_argument("coeff_variance_bound: defined for detail coefficients (i >= 2)");
  }
  const double covered =
      sample.segment(static_cast<Eigen::Index>(support.first - 1),
                     static_cast<Eigen::Index>(support.last - support.first + 1))
          .sum();
  const double scale = std::ldexp(1.0, support.level);
  return epsilon * scale * static_cast<double>(n) /
         (static_cast<double>(u) * std::sqrt(static_cast<double>(m))) * covered;
}

}  // namespace wavehist
