#include <array>
#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <vector>

#include "covbal/ledger.hpp"
#include "covbal/rational.hpp"
#include "covbal/rng.hpp"
#include "covbal/schema.hpp"
#include "doctest.h"

using covbal::AllocationLedger;
using covbal::AuditLedger;
using covbal::Covariate;
using covbal::CovariateSchema;
using covbal::ObservedProfile;
using covbal::PatientProfile;
using covbal::Rational;
using covbal::Scope;
using covbal::SplitMix64;

namespace {

CovariateSchema binary22() {
  return CovariateSchema({{"X1", 2}, {"X2", 2}}, {{"U1", 2}, {"U2", 2}});
}

std::vector<Rational> study1_ratios() { return {Rational(1, 5), Rational(3, 10), Rational(1, 2)}; }

}  // namespace

TEST_CASE("schema computes stratum counts as level products") {
  const auto s = binary22();
  CHECK(s.observed_strata() == 4);
  CHECK(s.unobserved_strata() == 4);
  CHECK(s.observed_count() == 2);
  CHECK(s.unobserved_count() == 2);

  const CovariateSchema lone({{"X1", 2}}, {});
  CHECK(lone.observed_strata() == 2);
  CHECK(lone.unobserved_strata() == 1);  // empty product

  std::vector<Covariate> ten;
  for (int k = 1; k <= 10; ++k) ten.push_back({"X" + std::to_string(k), 2});
  const CovariateSchema wide(ten, {{"U1", 2}, {"U2", 2}});
  CHECK(wide.observed_strata() == 1024);
  CHECK(wide.unobserved_strata() == 4);
}

TEST_CASE("schema rejects invalid blocks") {
  CHECK_THROWS_AS(CovariateSchema({}, {{"U1", 2}}), std::invalid_argument);
  CHECK_THROWS_AS(CovariateSchema({{"X1", 1}}, {}), std::invalid_argument);
  CHECK_THROWS_AS(CovariateSchema({{"X1", 2}, {"X1", 2}}, {}), std::invalid_argument);
  // names must be unique across the observed and unobserved blocks
  CHECK_THROWS_AS(CovariateSchema({{"A", 2}}, {{"A", 2}}), std::invalid_argument);
}

TEST_CASE("stratum indexing is a bijection onto 0..strata-1") {
  const CovariateSchema s({{"A", 2}, {"B", 3}}, {{"U", 2}});
  CHECK(s.observed_strata() == 6);

  std::set<std::int64_t> seen;
  for (int a = 1; a <= 2; ++a) {
    for (int b = 1; b <= 3; ++b) {
      const std::array<int, 2> levels = {a, b};
      const std::int64_t id = s.observed_index(levels);
      CHECK(id >= 0);
      CHECK(id < 6);
      seen.insert(id);
      std::array<int, 2> back{};
      s.decode_observed(id, back);
      CHECK(back == levels);
    }
  }
  CHECK(seen.size() == 6);

  // all-ones maps to 0, all-max to the last index
  CHECK(s.observed_index(std::array<int, 2>{1, 1}) == 0);
  CHECK(s.observed_index(std::array<int, 2>{2, 3}) == 5);
  CHECK(s.unobserved_index(std::array<int, 1>{2}) == 1);

  CHECK_THROWS_AS(s.observed_index(std::array<int, 2>{0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(s.observed_index(std::array<int, 2>{1, 4}), std::invalid_argument);
  CHECK_THROWS_AS(s.observed_index(std::array<int, 1>{1}), std::invalid_argument);
  std::array<int, 2> out{};
  CHECK_THROWS_AS(s.decode_observed(6, out), std::invalid_argument);
  CHECK_THROWS_AS(s.decode_observed(-1, out), std::invalid_argument);
}

TEST_CASE("covariate positions are looked up by name") {
  const auto s = binary22();
  CHECK(s.observed_position("X1") == 0);
  CHECK(s.observed_position("X2") == 1);
  CHECK(s.observed_position("U1") == -1);
  CHECK(s.unobserved_position("U2") == 1);
  CHECK(s.unobserved_position("X1") == -1);
}

TEST_CASE("profile validation enforces arity and level ranges") {
  const auto s = binary22();
  CHECK_NOTHROW(covbal::validate_profile(s, {{1, 2}, {2, 1}}));
  CHECK_THROWS_AS(covbal::validate_profile(s, {{1, 3}, {1, 1}}), std::invalid_argument);
  CHECK_THROWS_AS(covbal::validate_profile(s, {{1}, {1, 1}}), std::invalid_argument);
  CHECK_THROWS_AS(covbal::validate_profile(s, {{1, 1}, {0, 1}}), std::invalid_argument);
  CHECK_THROWS_AS(covbal::validate_profile(s, {{1, 1}, {1}}), std::invalid_argument);
}

TEST_CASE("scope factories validate and label their targets") {
  const auto s = binary22();
  const std::array<int, 2> s11 = {1, 1};
  const std::array<int, 2> r21 = {2, 1};

  CHECK(Scope::overall().label(s) == "overall");
  CHECK(Scope::obs_margin(s, 1, 2).label(s) == "X2=2");
  CHECK(Scope::obs_stratum(s, s11).label(s) == "s=(1,1)");
  CHECK(Scope::unobs_margin(s, 0, 1).label(s) == "U1=1");
  CHECK(Scope::unobs_stratum(s, r21).label(s) == "r=(2,1)");
  CHECK(Scope::joint_stratum_margin(s, s11, 0, 2).label(s) == "s=(1,1),U1=2");
  CHECK(Scope::joint_stratum_stratum(s, s11, r21).label(s) == "s=(1,1),r=(2,1)");

  CHECK_THROWS_AS(Scope::obs_margin(s, 2, 1), std::invalid_argument);
  CHECK_THROWS_AS(Scope::obs_margin(s, 0, 3), std::invalid_argument);
  CHECK_THROWS_AS(Scope::unobs_margin(s, -1, 1), std::invalid_argument);
  CHECK_THROWS_AS(Scope::unobs_stratum(s, std::array<int, 2>{1, 3}), std::invalid_argument);
  CHECK_THROWS_AS(Scope::joint_stratum_margin(s, std::array<int, 2>{3, 1}, 0, 1), std::invalid_argument);
}

TEST_CASE("scope membership matches the profile componentwise") {
  const auto s = binary22();
  const PatientProfile p{{1, 2}, {2, 1}};

  CHECK(Scope::overall().contains(s, p));
  CHECK(Scope::obs_margin(s, 0, 1).contains(s, p));
  CHECK_FALSE(Scope::obs_margin(s, 0, 2).contains(s, p));
  CHECK(Scope::obs_stratum(s, std::array<int, 2>{1, 2}).contains(s, p));
  CHECK_FALSE(Scope::obs_stratum(s, std::array<int, 2>{1, 1}).contains(s, p));
  CHECK(Scope::unobs_margin(s, 0, 2).contains(s, p));
  CHECK_FALSE(Scope::unobs_margin(s, 1, 2).contains(s, p));
  CHECK(Scope::unobs_stratum(s, std::array<int, 2>{2, 1}).contains(s, p));
  CHECK(Scope::joint_stratum_margin(s, std::array<int, 2>{1, 2}, 1, 1).contains(s, p));
  CHECK_FALSE(Scope::joint_stratum_margin(s, std::array<int, 2>{2, 2}, 1, 1).contains(s, p));
  CHECK(Scope::joint_stratum_stratum(s, std::array<int, 2>{1, 2}, std::array<int, 2>{2, 1}).contains(s, p));
  CHECK_FALSE(Scope::joint_stratum_stratum(s, std::array<int, 2>{1, 2}, std::array<int, 2>{1, 1}).contains(s, p));
}

TEST_CASE("allocation ratios are validated") {
  CHECK_THROWS_AS(covbal::validate_ratios(std::array<Rational, 1>{Rational(1)}, false), std::invalid_argument);
  CHECK_THROWS_AS(covbal::validate_ratios(std::array<Rational, 2>{Rational(1, 2), Rational(1, 3)}, false),
                  std::invalid_argument);
  CHECK_THROWS_AS(covbal::validate_ratios(std::array<Rational, 2>{Rational(3, 2), Rational(-1, 2)}, false),
                  std::invalid_argument);
  CHECK_NOTHROW(covbal::validate_ratios(std::array<Rational, 2>{Rational(1), Rational(0)}, false));
  CHECK_THROWS_AS(covbal::validate_ratios(std::array<Rational, 2>{Rational(1), Rational(0)}, true),
                  std::invalid_argument);
}

TEST_CASE("allocation ledger tracks exact imbalances") {
  const auto schema = binary22();
  AllocationLedger ledger(schema, study1_ratios());
  CHECK(ledger.arms() == 3);
  CHECK(ledger.scale() == 10);
  CHECK(ledger.scaled_ratio(1) == 2);
  CHECK(ledger.scaled_ratio(2) == 3);
  CHECK(ledger.scaled_ratio(3) == 5);

  const Scope overall = Scope::overall();
  const std::array<int, 2> s11 = {1, 1};
  const Scope stratum = Scope::obs_stratum(schema, s11);

  SUBCASE("empty ledger reads zero on every scope") {
    CHECK(ledger.total() == 0);
    CHECK(ledger.imbalance(overall, 1) == Rational(0));
    CHECK(ledger.imbalance(stratum, 2) == Rational(0));
    CHECK(ledger.imbalance(Scope::obs_margin(schema, 1, 2), 3) == Rational(0));
    CHECK(ledger.scaled_stratum(3, 1) == 0);
  }

  SUBCASE("one assignment splits into rho-weighted residuals") {
    const std::array<int, 2> obs = {1, 1};
    ledger.record(ObservedProfile(obs), 1);
    CHECK(ledger.imbalance(overall, 1) == Rational(4, 5));
    CHECK(ledger.imbalance(overall, 2) == Rational(-3, 10));
    CHECK(ledger.imbalance(overall, 3) == Rational(-1, 2));
    CHECK(ledger.scaled_imbalance(overall, 1) == 8);
    CHECK(ledger.scaled_imbalance(overall, 2) == -3);
    CHECK(ledger.scaled_imbalance(overall, 3) == -5);
    // sums to zero exactly
    CHECK(ledger.imbalance(overall, 1) + ledger.imbalance(overall, 2) + ledger.imbalance(overall, 3) == Rational(0));
  }

  SUBCASE("three same-stratum assignments reproduce the hand ledger") {
    const std::array<int, 2> obs = {1, 1};
    ledger.record(ObservedProfile(obs), 1);
    ledger.record(ObservedProfile(obs), 1);
    ledger.record(ObservedProfile(obs), 2);
    CHECK(ledger.total() == 3);
    CHECK(ledger.imbalance(stratum, 1) == Rational(7, 5));   // 2 - 3/5
    CHECK(ledger.imbalance(stratum, 2) == Rational(1, 10));  // 1 - 9/10
    CHECK(ledger.imbalance(stratum, 3) == Rational(-3, 2));
    CHECK(ledger.scaled_imbalance(stratum, 1) == 14);
    // margins see the same three patients
    CHECK(ledger.imbalance(Scope::obs_margin(schema, 0, 1), 1) == Rational(7, 5));
    CHECK(ledger.imbalance(Scope::obs_margin(schema, 0, 2), 1) == Rational(0));
  }

  SUBCASE("hot-path scaled accessors agree with the scope interface") {
    SplitMix64 rng(11);
    std::vector<int> obs(2);
    for (int i = 0; i < 200; ++i) {
      obs[0] = static_cast<int>(rng.next_below(2)) + 1;
      obs[1] = static_cast<int>(rng.next_below(2)) + 1;
      const int arm = static_cast<int>(rng.next_below(3)) + 1;
      ledger.record(ObservedProfile(obs), arm);
    }
    for (int arm = 1; arm <= 3; ++arm) {
      CHECK(ledger.scaled_overall(arm) == ledger.scaled_imbalance(overall, arm));
      for (int cov = 0; cov < 2; ++cov)
        for (int level = 1; level <= 2; ++level)
          CHECK(ledger.scaled_margin(cov, level, arm) ==
                ledger.scaled_imbalance(Scope::obs_margin(schema, cov, level), arm));
      for (std::int64_t s = 0; s < 4; ++s) {
        std::array<int, 2> levels{};
        schema.decode_observed(s, levels);
        CHECK(ledger.scaled_stratum(s, arm) == ledger.scaled_imbalance(Scope::obs_stratum(schema, levels), arm));
      }
    }
  }

  SUBCASE("invalid input is rejected") {
    const std::array<int, 2> obs = {1, 1};
    CHECK_THROWS_AS(ledger.record(ObservedProfile(obs), 0), std::invalid_argument);
    CHECK_THROWS_AS(ledger.record(ObservedProfile(obs), 4), std::invalid_argument);
    CHECK_THROWS_AS(ledger.imbalance(Scope::unobs_margin(schema, 0, 1), 1), std::invalid_argument);
  }
}

TEST_CASE("audit ledger equals the brute-force definition on every scope kind") {
  const auto schema = binary22();
  const auto ratios = study1_ratios();
  AuditLedger audit(schema, ratios);

  // a deterministic random history, replayed below from first principles
  SplitMix64 rng(2024);
  std::vector<PatientProfile> history;
  std::vector<int> arms;
  for (int i = 0; i < 300; ++i) {
    PatientProfile p;
    p.observed = {static_cast<int>(rng.next_below(2)) + 1, static_cast<int>(rng.next_below(2)) + 1};
    p.unobserved = {static_cast<int>(rng.next_below(2)) + 1, static_cast<int>(rng.next_below(2)) + 1};
    const int arm = static_cast<int>(rng.next_below(3)) + 1;
    audit.record(p, arm);
    history.push_back(p);
    arms.push_back(arm);
  }
  CHECK(audit.total() == 300);

  std::vector<Scope> scopes;
  scopes.push_back(Scope::overall());
  for (int cov = 0; cov < 2; ++cov)
    for (int level = 1; level <= 2; ++level) {
      scopes.push_back(Scope::obs_margin(schema, cov, level));
      scopes.push_back(Scope::unobs_margin(schema, cov, level));
    }
  for (int a = 1; a <= 2; ++a)
    for (int b = 1; b <= 2; ++b) {
      const std::array<int, 2> levels = {a, b};
      scopes.push_back(Scope::obs_stratum(schema, levels));
      scopes.push_back(Scope::unobs_stratum(schema, levels));
      scopes.push_back(Scope::joint_stratum_margin(schema, levels, 1, a));
      scopes.push_back(Scope::joint_stratum_stratum(schema, levels, std::array<int, 2>{b, a}));
    }

  for (const Scope& scope : scopes) {
    std::int64_t count = 0;
    std::array<std::int64_t, 3> per_arm = {0, 0, 0};
    for (std::size_t i = 0; i < history.size(); ++i) {
      if (!scope.contains(schema, history[i])) continue;
      ++count;
      ++per_arm[static_cast<std::size_t>(arms[i] - 1)];
    }
    CHECK(audit.count(scope) == count);
    Rational sum;
    for (int arm = 1; arm <= 3; ++arm) {
      CHECK(audit.arm_count(scope, arm) == per_arm[static_cast<std::size_t>(arm - 1)]);
      const Rational expected =
          Rational(per_arm[static_cast<std::size_t>(arm - 1)]) - ratios[static_cast<std::size_t>(arm - 1)] * count;
      CHECK(audit.imbalance(scope, arm) == expected);
      sum += audit.imbalance(scope, arm);
    }
    CHECK(sum == Rational(0));  // exact zero-sum on every scope
  }
}

TEST_CASE("imbalances decompose across strata and margins exactly") {
  const auto schema = binary22();
  const auto ratios = study1_ratios();
  AuditLedger audit(schema, ratios);

  SplitMix64 rng(99);
  for (int i = 0; i < 500; ++i) {
    PatientProfile p;
    p.observed = {static_cast<int>(rng.next_below(2)) + 1, static_cast<int>(rng.next_below(2)) + 1};
    p.unobserved = {static_cast<int>(rng.next_below(2)) + 1, static_cast<int>(rng.next_below(2)) + 1};
    audit.record(p, static_cast<int>(rng.next_below(3)) + 1);
  }

  for (int arm = 1; arm <= 3; ++arm) {
    const Rational overall = audit.imbalance(Scope::overall(), arm);

    // strata tile the population
    Rational strata_sum;
    for (int a = 1; a <= 2; ++a)
      for (int b = 1; b <= 2; ++b) strata_sum += audit.imbalance(Scope::obs_stratum(schema, std::array<int, 2>{a, b}), arm);
    CHECK(strata_sum == overall);

    // each margin's levels tile the population; strata refine each margin
    for (int cov = 0; cov < 2; ++cov) {
      Rational margin_sum;
      for (int level = 1; level <= 2; ++level) {
        const Rational margin = audit.imbalance(Scope::obs_margin(schema, cov, level), arm);
        margin_sum += margin;
        Rational refined;
        for (int other = 1; other <= 2; ++other) {
          std::array<int, 2> levels{};
          levels[static_cast<std::size_t>(cov)] = level;
          levels[static_cast<std::size_t>(1 - cov)] = other;
          refined += audit.imbalance(Scope::obs_stratum(schema, levels), arm);
        }
        CHECK(refined == margin);
      }
      CHECK(margin_sum == overall);
    }

    // unobserved deepenings of an observed stratum tile that stratum
    for (int a = 1; a <= 2; ++a)
      for (int b = 1; b <= 2; ++b) {
        const std::array<int, 2> s = {a, b};
        const Rational stratum = audit.imbalance(Scope::obs_stratum(schema, s), arm);
        Rational joint_sum;
        for (int u1 = 1; u1 <= 2; ++u1)
          for (int u2 = 1; u2 <= 2; ++u2)
            joint_sum += audit.imbalance(Scope::joint_stratum_stratum(schema, s, std::array<int, 2>{u1, u2}), arm);
        CHECK(joint_sum == stratum);
        Rational margin_sum;
        for (int r1 = 1; r1 <= 2; ++r1) margin_sum += audit.imbalance(Scope::joint_stratum_margin(schema, s, 0, r1), arm);
        CHECK(margin_sum == stratum);
      }

    // joint scopes likewise tile each unobserved stratum
    for (int u1 = 1; u1 <= 2; ++u1)
      for (int u2 = 1; u2 <= 2; ++u2) {
        const std::array<int, 2> r = {u1, u2};
        Rational over_obs;
        for (int a = 1; a <= 2; ++a)
          for (int b = 1; b <= 2; ++b)
            over_obs += audit.imbalance(Scope::joint_stratum_stratum(schema, std::array<int, 2>{a, b}, r), arm);
        CHECK(over_obs == audit.imbalance(Scope::unobs_stratum(schema, r), arm));
      }
  }
}

TEST_CASE("splitmix streams are deterministic and well ranged") {
  SplitMix64 a(42);
  SplitMix64 b(42);
  for (int i = 0; i < 64; ++i) CHECK(a.next() == b.next());

  SplitMix64 c(43);
  bool differs = false;
  for (int i = 0; i < 8; ++i) differs = differs || (SplitMix64(42).next() != c.next());
  CHECK(differs);

  SplitMix64 r(7);
  for (int i = 0; i < 2000; ++i) {
    const double u = r.next_double();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double v = r.next_open_double();
    CHECK(v > 0.0);
    CHECK(v < 1.0);
    const std::uint64_t k = r.next_below(17);
    CHECK(k < 17);
    CHECK(r.next_below(1) == 0);
    CHECK(std::isfinite(r.next_normal()));
  }
  CHECK_THROWS_AS(r.next_below(0), std::invalid_argument);
}

TEST_CASE("replicate seeds separate lanes and replicates") {
  std::set<std::uint64_t> seeds;
  for (std::uint64_t rep = 0; rep < 100; ++rep)
    for (std::uint64_t lane = 0; lane < 2; ++lane) seeds.insert(covbal::replicate_seed(1234, rep, lane));
  CHECK(seeds.size() == 200);
  CHECK(covbal::replicate_seed(1, 0, 0) == covbal::replicate_seed(1, 0, 0));
  CHECK(covbal::replicate_seed(1, 0, 0) != covbal::replicate_seed(2, 0, 0));
}

TEST_CASE("normal cdf and quantile match reference values") {
  using covbal::normal_cdf;
  using covbal::normal_quantile;

  CHECK(normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(normal_cdf(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-12));
  CHECK(normal_cdf(1.96) == doctest::Approx(0.9750021048517796).epsilon(1e-12));
  CHECK(normal_cdf(-1.96) == doctest::Approx(0.0249978951482204).epsilon(1e-10));
  for (double z : {0.5, 1.0, 2.0, 5.0}) CHECK(normal_cdf(-z) + normal_cdf(z) == doctest::Approx(1.0).epsilon(1e-12));

  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(normal_quantile(0.8413447460685429) == doctest::Approx(1.0).epsilon(1e-12));
  for (double z = -4.0; z <= 4.0; z += 0.25) CHECK(normal_quantile(normal_cdf(z)) == doctest::Approx(z).epsilon(1e-9));

  CHECK_THROWS_AS(normal_cdf(std::nan("")), std::invalid_argument);
  CHECK_THROWS_AS(normal_quantile(0.0), std::invalid_argument);
  CHECK_THROWS_AS(normal_quantile(1.0), std::invalid_argument);
  CHECK_THROWS_AS(normal_quantile(-0.1), std::invalid_argument);
}
