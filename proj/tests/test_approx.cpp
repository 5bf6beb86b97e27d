#include "instances.hpp"
#include "wavehist/approx.hpp"
#include "wavehist/exact.hpp"

#include <doctest.h>

#include <cmath>

using namespace wavehist;

namespace {

Emission count_pair(std::uint32_t key, std::uint32_t source, std::uint32_t count) {
  return {key, Count32{count}, 1, source};
}

}  // namespace

TEST_CASE("full-rate sampling reproduces the exact answer") {
  // n <= 1/eps^2, so p = 1.
  const auto inst = testing::make_instance(400, 64, 4, 1.1, 5, 12);
  auto splits = inst.splits;
  const SamplingParams params{0.05, 3, SampleMode::noreplace};
  CommLedger ledger;
  const auto exact = send_v(inst.data, splits, 5, ledger);
  const auto basic = basic_sampling(inst.data, splits, 5, params, ledger);
  CHECK(basic.p == 1.0);
  CHECK(basic.v_hat == inst.v.cast<double>());
  CHECK(basic.topk.entries == exact.entries);
  CHECK(ledger.total(kBasicS).pairs <= inst.data.n());
}

TEST_CASE("basic sampling ships every sampled key once per split") {
  const auto inst = testing::make_instance(100000, 1024, 8, 1.1, 10, 4);
  auto splits = inst.splits;
  const SamplingParams params{0.02, 9, SampleMode::noreplace};
  CommLedger ledger;
  basic_sampling(inst.data, splits, 10, params, ledger);
  std::uint64_t distinct = 0, sampled = 0;
  const auto cfg = SampleConfig::for_dataset(0.02, inst.data.n(), 9);
  for (const auto& s : splits) {
    const auto sample = sample_split(inst.data, s, cfg);
    distinct += sample.counts.size();
    sampled += sample.sampled;
  }
  CHECK(ledger.total(kBasicS).pairs == distinct);
  CHECK(distinct <= sampled);
  CHECK(sampled == doctest::Approx(1.0 / (0.02 * 0.02)).epsilon(0.01));
  CHECK(ledger.total(kBasicS).broadcast_bytes == 20 * splits.size());
}

TEST_CASE("improved sampling filter") {
  std::vector<KeyCount> sample{{1, 4}, {2, 5}, {3, 20}, {4, 21}};
  const auto kept = improved_filter(sample, 50, 0.1);
  CHECK(kept == std::vector<KeyCount>{{2, 5}, {3, 20}, {4, 21}});
}

TEST_CASE("improved sampling drops keys spread thin across splits") {
  // p = 1 (n = 64, eps = 1/8); each split has t_j = 32 so the cut is 4.
  std::vector<std::uint32_t> keys;
  for (int split = 0; split < 2; ++split) {
    for (int r = 0; r < 3; ++r) keys.push_back(2);
    for (int r = 0; r < 29; ++r) keys.push_back(5);
  }
  const auto data = Dataset::from_keys(keys, 8);
  auto splits = partition_dataset(data.meta(), 32);
  CommLedger ledger;
  const auto r = improved_sampling(data, splits, 2, {0.125, 1, SampleMode::noreplace}, ledger);
  CHECK(r.p == 1.0);
  CHECK(r.v_hat(1) == 0.0);
  CHECK(r.v_hat(4) == 58.0);
  CHECK(ledger.total(kImprovedS).pairs == 2);
}

TEST_CASE("improved sampling per-split emissions stay under 1/eps") {
  const auto inst = testing::make_instance(100000, 1024, 8, 0.8, 10, 6);
  auto splits = inst.splits;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (double eps : {0.02, 0.05, 0.1}) {
      const auto cfg = SampleConfig::for_dataset(eps, inst.data.n(), seed);
      for (const auto& s : splits) {
        const auto sample = sample_split(inst.data, s, cfg);
        CHECK(improved_filter(sample.counts, sample.sampled, eps).size() <=
              static_cast<std::size_t>(std::ceil(1.0 / eps)));
      }
    }
  }
}

TEST_CASE("second-level sampling") {
  SUBCASE("threshold") {
    CHECK(twolevel_threshold(0.5, 4) == 1.0);
    CHECK(twolevel_threshold(0.1, 4) == doctest::Approx(5.0));
  }
  SUBCASE("threshold of one sends everything exactly") {
    Rng rng(1);
    const std::vector<KeyCount> sample{{3, 1}, {7, 2}, {9, 40}};
    const auto out = twolevel_map(sample, 0.5, 4, rng);
    REQUIRE(out.size() == 3);
    for (std::size_t n = 0; n < out.size(); ++n) {
      CHECK(out[n] == TwoLevelEmission{sample[n].key, TwoLevelKind::exact, sample[n].count});
    }
  }
  SUBCASE("heavy keys exact, light keys by coin") {
    Rng rng(2);
    const std::vector<KeyCount> heavy{{1, 7}, {2, 5}};
    const auto out = twolevel_map(heavy, 0.1, 4, rng);
    REQUIRE(out.size() == 2);
    CHECK(out[0] == TwoLevelEmission{1, TwoLevelKind::exact, 7});
    CHECK(out[1] == TwoLevelEmission{2, TwoLevelKind::exact, 5});

    const std::vector<KeyCount> light{{4, 2}};
    int sent = 0;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) {
      const auto o = twolevel_map(light, 0.1, 4, rng);
      if (!o.empty()) {
        CHECK(o[0] == TwoLevelEmission{4, TwoLevelKind::presence, 0});
        ++sent;
      }
    }
    CHECK(static_cast<double>(sent) / trials == doctest::Approx(0.4).epsilon(0.05));
  }
  SUBCASE("bad parameters") {
    Rng rng(3);
    CHECK_THROWS_AS(twolevel_map({}, 0.0, 4, rng), std::invalid_argument);
    CHECK_THROWS_AS(twolevel_map({}, 0.1, 0, rng), std::invalid_argument);
  }
}

TEST_CASE("reducer estimate") {
  SUBCASE("exact part plus scaled presence count") {
    EstimatorState st(0.5, 4);
    st.add(1, 6);
    st.add(2, 4);
    st.add(3, 0);
    st.add(4, 0);
    st.add(5, 0);
    CHECK(st.rho() == 10.0);
    CHECK(st.presence() == 3);
    CHECK(st.estimate() == 13.0);
    std::vector<Emission> ems{count_pair(2, 1, 6), count_pair(2, 2, 4), count_pair(2, 3, 0),
                              count_pair(2, 4, 0), count_pair(2, 5, 0)};
    const auto v_hat = twolevel_estimate(ems, 4, 0.5, 4, 0.01);
    CHECK(v_hat(1) == doctest::Approx(1300.0));
    CHECK(v_hat(0) == 0.0);
  }
  SUBCASE("no presence markers leaves the exact sum") {
    EstimatorState st(0.1, 9);
    st.add(1, 8);
    CHECK(st.estimate() == 8.0);
  }
  SUBCASE("two pairs from one split for one key") {
    std::vector<Emission> ems{count_pair(1, 2, 6), count_pair(1, 2, 0)};
    CHECK_THROWS_AS(twolevel_estimate(ems, 4, 0.5, 4, 1.0), std::invalid_argument);
  }
  SUBCASE("invalid inputs") {
    CHECK_THROWS_AS(EstimatorState(0.0, 1), std::invalid_argument);
    std::vector<Emission> outside{count_pair(9, 1, 1)};
    CHECK_THROWS_AS(twolevel_estimate(outside, 4, 0.5, 4, 1.0), std::out_of_range);
    CHECK_THROWS_AS(twolevel_estimate({}, 4, 0.5, 4, 0.0), std::invalid_argument);
  }
}

TEST_CASE("two-level sampling degenerates to exact at full rate and unit threshold") {
  // eps = 0.25, m = 16: p = 1/(eps^2 n) = 1 for n = 16, threshold 1/(eps*4) = 1.
  const auto inst = testing::make_instance(16, 8, 16, 0.8, 3, 2);
  auto splits = inst.splits;
  REQUIRE(splits.size() == 16);
  CommLedger ledger;
  const auto r = twolevel_sampling(inst.data, splits, 3, {0.25, 1, SampleMode::coinflip}, ledger);
  CHECK(r.p == 1.0);
  CHECK(r.v_hat == inst.v.cast<double>());
  CHECK(r.topk.entries == send_v(inst.data, splits, 3, ledger).entries);
}

TEST_CASE("two-level communication stays under its bound") {
  const auto inst = testing::make_instance(100000, 1024, 8, 1.1, 10, 1);
  auto splits = inst.splits;
  const double bound = 2.0 * std::sqrt(8.0) / 0.02;
  double total = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    CommLedger ledger;
    twolevel_sampling(inst.data, splits, 10,
                      {0.02, static_cast<std::uint64_t>(t), SampleMode::coinflip}, ledger);
    total += static_cast<double>(ledger.total(kTwoLevelS).pairs);
  }
  CHECK(total / trials <= bound);
}

TEST_CASE("sampling runs are deterministic and schedule independent") {
  const auto inst = testing::make_instance(50000, 512, 6, 1.1, 10, 7);
  auto splits = inst.splits;
  for (auto* algo : {&basic_sampling, &improved_sampling, &twolevel_sampling}) {
    CommLedger l1, l2, l3;
    const SamplingParams params{0.03, 11, SampleMode::noreplace};
    const auto a = (*algo)(inst.data, splits, 10, params, l1, {});
    const auto b = (*algo)(inst.data, splits, 10, params, l2, {});
    const auto c = (*algo)(inst.data, splits, 10, params, l3, {99, 4});
    CHECK(a.v_hat == b.v_hat);
    CHECK(a.v_hat == c.v_hat);
    CHECK(a.topk.entries == c.topk.entries);
    CHECK(l1 == l2);
    CHECK(l1 == l3);
  }
}

TEST_CASE("basic sampling is unbiased in coin-flip mode") {
  const auto inst = testing::make_instance(20000, 256, 4, 1.1, 5, 3);
  auto splits = inst.splits;
  const int trials = 400;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(256), sumsq = Eigen::VectorXd::Zero(256);
  for (int t = 0; t < trials; ++t) {
    CommLedger ledger;
    const auto r = basic_sampling(inst.data, splits, 5,
                                  {0.05, static_cast<std::uint64_t>(t), SampleMode::coinflip},
                                  ledger);
    sum += r.v_hat;
    sumsq += r.v_hat.cwiseAbs2();
  }
  const Eigen::VectorXd mean = sum / trials;
  const Eigen::VectorXd var = (sumsq - trials * mean.cwiseAbs2()) / (trials - 1);
  for (Eigen::Index x = 0; x < 256; ++x) {
    if (inst.v(x) < 200) continue;
    CAPTURE(x);
    CHECK(std::abs(mean(x) - static_cast<double>(inst.v(x))) <= 4 * std::sqrt(var(x) / trials));
  }
}

TEST_CASE("coefficient variance bound") {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(8);
  s.head(4).setConstant(10.0);
  s.tail(4).setConstant(2.5);
  // Coefficient 2 is level 0 and covers the whole domain: sum 50.
  CHECK(coeff_variance_bound(2, s, 0.1, 4, 10000) == doctest::Approx(3125.0));
  Eigen::VectorXd sparse = Eigen::VectorXd::Zero(8);
  sparse(0) = 5;
  CHECK(coeff_variance_bound(8, sparse, 0.1, 4, 10000) == 0.0);
  CHECK(coeff_variance_bound(5, sparse, 0.1, 4, 10000) > 0.0);
  CHECK_THROWS_AS(coeff_variance_bound(1, s, 0.1, 4, 10000), std::invalid_argument);
}
