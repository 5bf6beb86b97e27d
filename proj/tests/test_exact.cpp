#include "instances.hpp"
#include "wavehist/exact.hpp"

#include <doctest.h>

#include <cmath>

using namespace wavehist;

namespace {

const double kRoot2 = std::sqrt(2.0);

// Splits A = [1,1,2] and B = [3,3,3,4] over u = 4.
struct TwoSplits {
  Dataset data = Dataset::from_keys({1, 1, 2, 3, 3, 3, 4}, 4);
  std::vector<SplitDescriptor> splits;
  TwoSplits() {
    SplitDescriptor a;
    a.id = 1;
    a.n_records = 3;
    SplitDescriptor b;
    b.id = 2;
    b.first_record = 3;
    b.n_records = 4;
    splits = {a, b};
  }
};

void check_two_split_answer(const TopK& top) {
  REQUIRE(top.entries.size() == 2);
  CHECK(top.entries[0].index == 1);
  CHECK(top.entries[0].value == doctest::Approx(3.5));
  CHECK(top.entries[1].index == 4);
  CHECK(top.entries[1].value == doctest::Approx(-kRoot2));
}

void check_matches_oracle(const TopK& top, const testing::Instance& inst) {
  const auto expect = oracle::top_k(oracle::transform(inst.v.cast<double>()), inst.k);
  REQUIRE(top.entries.size() == expect.size());
  for (std::size_t n = 0; n < expect.size(); ++n) {
    CHECK(top.entries[n].index == expect[n].index);
    CHECK(std::abs(top.entries[n].value - expect[n].value) <=
          1e-9 * std::max(1.0, std::abs(expect[n].value)));
  }
}

ItemState item_with(std::size_t m, std::initializer_list<std::pair<std::uint32_t, double>> got) {
  ItemState it(1, m);
  for (auto [j, w] : got) it.receive(j, w);
  return it;
}

}  // namespace

TEST_CASE("all three algorithms on two hand-made splits") {
  TwoSplits t;
  CommLedger ledger;
  check_two_split_answer(send_v(t.data, t.splits, 2, ledger));
  CHECK(ledger.total(kSendV).pairs == 4);
  CHECK(ledger.total(kSendV).bytes == 4 * 8);
  check_two_split_answer(send_coef(t.data, t.splits, 2, ledger));
  check_two_split_answer(hwtopk(t.data, t.splits, 2, ledger));
}

TEST_CASE("send-coef ships each split's non-zero coefficients") {
  const auto data = Dataset::from_keys({1, 1, 2}, 4);
  auto splits = partition_dataset(data.meta(), 3);
  CommLedger ledger;
  send_coef(data, splits, 1, ledger);
  CHECK(ledger.total(kSendCoef).pairs == 3);
  CHECK(ledger.total(kSendCoef).bytes == 3 * 12);
}

TEST_CASE("single split equals the centralized answer, later rounds silent") {
  const auto inst = testing::make_instance(5000, 256, 1, 1.1, 8, 3);
  auto splits = inst.splits;
  REQUIRE(splits.size() == 1);
  CommLedger ledger;
  check_matches_oracle(send_v(inst.data, splits, 8, ledger), inst);
  check_matches_oracle(send_coef(inst.data, splits, 8, ledger), inst);
  check_matches_oracle(hwtopk(inst.data, splits, 8, ledger), inst);
  CHECK(ledger.at(kHWTopk, 2).pairs == 0);
  CHECK(ledger.at(kHWTopk, 3).pairs == 0);
}

TEST_CASE("empty split emits nothing") {
  const auto data = Dataset::from_keys({1, 2}, 4);
  std::vector<SplitDescriptor> splits(2);
  splits[0].id = 1;
  splits[0].n_records = 2;
  splits[1].id = 2;
  splits[1].first_record = 2;
  CommLedger ledger;
  send_coef(data, splits, 1, ledger);
  CHECK(ledger.total(kSendCoef).pairs == 2);
}

TEST_CASE("bounds from partial scores") {
  SUBCASE("one exact score, the other split bounded by its marks") {
    auto it = item_with(2, {{1, 5.0}});
    const std::vector<double> high{0.0, 3.0}, low{0.0, -4.0};
    tau_bounds(it, high, low);
    CHECK(it.tau_plus == 8.0);
    CHECK(it.tau_minus == 1.0);
    CHECK(it.tau == 1.0);
    CHECK(it.tau_prime == 8.0);
  }
  SUBCASE("bounds of different sign give no magnitude floor") {
    CHECK(magnitude_lower_bound(2.0, -3.0) == 0.0);
    CHECK(magnitude_lower_bound(-2.0, -3.0) == 2.0);
  }
  SUBCASE("fully known item") {
    auto it = item_with(3, {{1, -1.0}, {2, -2.0}, {3, 0.5}});
    const std::vector<double> any{9.0, 9.0, 9.0}, neg{-9.0, -9.0, -9.0};
    tau_bounds(it, any, neg);
    CHECK(it.tau_plus == -2.5);
    CHECK(it.tau_minus == -2.5);
    CHECK(it.tau == 2.5);
    CHECK(it.missing_count() == 0);
  }
  SUBCASE("duplicate or unknown scores are protocol errors") {
    ItemState it(4, 2);
    it.receive(1, 1.0);
    CHECK_THROWS_AS(it.receive(1, 1.0), ProtocolError);
    CHECK_THROWS_AS(it.receive(3, 1.0), ProtocolError);
  }
}

TEST_CASE("k-th largest lower bound") {
  std::vector<ItemState> items(3);
  items[0].tau = 3;
  items[1].tau = 1;
  items[2].tau = 0;
  CHECK(threshold_T(items, 2) == 1.0);
  CHECK(threshold_T(items, 1) == 3.0);
  CHECK(threshold_T(items, 4) == 0.0);
}

TEST_CASE("round-two filter") {
  const std::vector<Coefficient> local{{2, 3.0}, {5, -2.5}, {9, 1.0}, {11, 1.5}};
  const std::vector<std::uint32_t> none;
  auto picked = round2_filter(local, 10.0, 5, none);
  REQUIRE(picked.size() == 2);
  CHECK(picked[0].index == 2);
  CHECK(picked[1].index == 5);
  CHECK(round2_filter(local, 0.0, 5, none).size() == 4);
  const std::vector<std::uint32_t> all{2, 5, 9, 11};
  CHECK(round2_filter(local, 0.0, 5, all).empty());
  const std::vector<std::uint32_t> some{5};
  CHECK(round2_filter(local, 10.0, 5, some).size() == 1);
  // A score sitting exactly on T1/m is sent: rounding may only add traffic.
  const std::vector<Coefficient> edge{{3, 2.0}};
  CHECK(round2_filter(edge, 10.0, 5, none).size() == 1);
}

TEST_CASE("pruning rule") {
  ItemState a;
  a.tau_plus = 1.5;
  a.tau_minus = -0.5;
  a.tau_prime = 1.5;
  CHECK(prunable(a, 2.0));
  ItemState b;
  b.tau_plus = 3;
  b.tau_minus = 1;
  b.tau_prime = 3;
  CHECK_FALSE(prunable(b, 2.0));
  ItemState edge;
  edge.tau_prime = 2.0 * (1 - 1e-15);
  CHECK_FALSE(prunable(edge, 2.0));
}

TEST_CASE("refinement never lowers the threshold") {
  // Two splits; split 1's k-th marks are tighter than T1/m.
  std::vector<ItemState> items;
  items.push_back(item_with(2, {{1, 4.0}}));
  items.push_back(item_with(2, {{2, 3.0}}));
  items.push_back(item_with(2, {{1, 0.2}, {2, 0.1}}));
  for (auto& it : items) it.index = static_cast<std::uint32_t>(&it - items.data() + 1);
  const std::vector<double> high{0.5, 3.0}, low{-0.5, -3.0};
  for (auto& it : items) tau_bounds(it, high, low);
  const double t1 = threshold_T(items, 2);
  const auto r = refine_and_prune(items, t1, 2, 2, high, low);
  CHECK(r.t2 >= t1);
  CHECK(r.pruned == std::vector<std::uint32_t>{3});
  CHECK(r.survivors.size() == 2);
}

TEST_CASE("local extremes") {
  SUBCASE("dense split: k highest and k lowest, k-th marked") {
    const std::vector<Coefficient> local{{1, 5}, {2, -1}, {3, 2}, {4, -3}};
    const auto ext = select_local_extremes(local, 1, 4);
    REQUIRE(ext.sent.size() == 2);
    CHECK(ext.sent[0].index == 1);
    CHECK(ext.tags[0] == CoefTag::kth_high);
    CHECK(ext.sent[1].index == 4);
    CHECK(ext.tags[1] == CoefTag::kth_low);
    CHECK(ext.kth_high == 5);
    CHECK(ext.kth_low == -3);
  }
  SUBCASE("implicit zeros cap the marks at zero") {
    const std::vector<Coefficient> local{{1, 5}, {3, -2}};
    const auto ext = select_local_extremes(local, 2, 8);
    CHECK(ext.sent.size() == 2);
    CHECK(ext.kth_high == 0.0);
    CHECK(ext.kth_low == 0.0);
    for (auto tag : ext.tags) CHECK(tag == CoefTag::exact);
  }
  SUBCASE("one item can carry both marks") {
    const std::vector<Coefficient> local{{1, 5}, {2, 1}};
    const auto ext = select_local_extremes(local, 2, 2);
    REQUIRE(ext.sent.size() == 2);
    CHECK(ext.tags[0] == CoefTag::kth_low);
    CHECK(ext.tags[1] == CoefTag::kth_high);
    const auto one = select_local_extremes(std::vector<Coefficient>{{1, 5}}, 1, 1);
    REQUIRE(one.tags.size() == 1);
    CHECK(one.tags[0] == CoefTag::kth_both);
  }
}

TEST_CASE("random instances agree with the oracle") {
  std::mt19937_64 gen(2024);
  for (int trial = 0; trial < 25; ++trial) {
    auto inst = testing::random_instance(gen);
    CAPTURE(trial);
    CommLedger ledger;
    check_matches_oracle(send_v(inst.data, inst.splits, inst.k, ledger), inst);
    check_matches_oracle(send_coef(inst.data, inst.splits, inst.k, ledger), inst);
    HWTopkTrace trace;
    check_matches_oracle(hwtopk(inst.data, inst.splits, inst.k, ledger, {}, &trace), inst);
    CHECK(trace.t2 >= trace.t1);

    const Eigen::VectorXd w = oracle::transform(inst.v.cast<double>());
    auto sound = [&](const ItemState& it) {
      const double wi = w(it.index - 1);
      const double tol = 1e-9 * std::max(1.0, std::abs(wi));
      CHECK(it.tau_minus <= wi + tol);
      CHECK(wi <= it.tau_plus + tol);
      CHECK(it.tau <= std::abs(wi) + tol);
      CHECK(std::abs(wi) <= it.tau_prime + tol);
    };
    for (const auto& it : trace.after_round1) sound(it);
    for (const auto& it : trace.after_round2) sound(it);
  }
}

TEST_CASE("h-wtopk is independent of mapper schedule") {
  auto inst = testing::make_instance(40000, 1024, 12, 1.1, 10, 8);
  CommLedger base_ledger;
  const auto base = hwtopk(inst.data, inst.splits, 10, base_ledger);
  for (std::uint64_t seed : {5, 6}) {
    CommLedger ledger;
    const auto top = hwtopk(inst.data, inst.splits, 10, ledger, {seed, 3});
    CHECK(top.entries == base.entries);
    CHECK(ledger == base_ledger);
  }
}

TEST_CASE("h-wtopk rejects misnumbered splits and k = 0") {
  auto inst = testing::make_instance(100, 16, 2, 0.0, 1, 1);
  CommLedger ledger;
  CHECK_THROWS_AS(hwtopk(inst.data, inst.splits, 0, ledger), std::invalid_argument);
  std::swap(inst.splits[0], inst.splits[1]);
  CHECK_THROWS_AS(hwtopk(inst.data, inst.splits, 1, ledger), std::invalid_argument);
}
