#include <doctest.h>

#include <cmath>

#include "dualsr/tpp.hpp"
#include "test_support.hpp"

using namespace dualsr;

namespace {

// Integral of f over [0, G] where the cumulative hazard at G exceeds 60.
double density_mass(double a, double omega) {
  const double horizon = std::log1p(60.0 * omega / std::exp(a)) / omega;
  return oracle::simpson([&](double g) { return std::exp(log_density_from_activation(a, omega, g)); }, 0.0, horizon,
                         20000);
}

}  // namespace

TEST_CASE("log-density closed-form examples") {
  CHECK(log_density_from_activation(0.0, 1.0, 0.0) == 0.0);
  CHECK(log_density_from_activation(0.0, 1.0, 1.0) == doctest::Approx(2.0 - std::exp(1.0)).epsilon(1e-15));
  const TppSide side{{0.5, -1.0}, 0.3, 0.2};
  const std::vector<double> h{1.0, 2.0};
  // a = 0.5 - 2 + 0.2 = -1.3
  CHECK(log_density(h, 4.0, 6.5, side) == log_density_from_activation(-1.3, 0.3, 2.5));
  CHECK(intensity(h, 4.0, 6.5, side) == doctest::Approx(std::exp(-1.3 + 0.75)));
}

TEST_CASE("density integrates to one") {
  Rng rng(71);
  for (double omega : {0.1, 0.5, 1.0, 2.0}) {
    for (int k = 0; k < 10; ++k) {
      const double a = rng.uniform(-2.0, 2.0);
      CAPTURE(omega);
      CAPTURE(a);
      CHECK(density_mass(a, omega) == doctest::Approx(1.0).epsilon(1e-3));
    }
  }
}

TEST_CASE("hazard increases with elapsed time for positive omega") {
  const TppSide side{{0.4}, 0.7, -0.1};
  const std::vector<double> h{0.3};
  double prev = 0.0;
  for (int k = 0; k <= 20; ++k) {
    const double lam = intensity(h, 1.0, 1.0 + 0.25 * k, side);
    CHECK(lam > prev);
    prev = lam;
  }
}

TEST_CASE("zero gap gives the activation") {
  Rng rng(2);
  for (int k = 0; k < 50; ++k) {
    const double a = rng.uniform(-5.0, 5.0);
    const double omega = rng.uniform(0.05, 3.0);
    CHECK(std::abs(log_density_from_activation(a, omega, 0.0) - a) < 1e-12);
  }
}

TEST_CASE("contract errors") {
  CHECK_THROWS_AS(log_density_from_activation(0.0, 0.0, 1.0), ContractError);
  CHECK_THROWS_AS(log_density_from_activation(0.0, 1.0, -0.5), ContractError);
  const TppSide side{{1.0}, 1.0, 0.0};
  const std::vector<double> h{1.0, 2.0};
  CHECK_THROWS_AS(log_density(h, 0.0, 1.0, side), DimensionError);
  Tape t;
  CHECK_THROWS_AS(log_density(t.constant(Matrix(2, 1)), t.constant(Matrix::scalar(0.0)), Matrix(2, 1)), ContractError);
  CHECK_THROWS_AS(log_density(t.constant(Matrix(2, 1)), t.constant(Matrix::scalar(1.0)), Matrix(2, 1, -1.0)),
                  ContractError);
}

TEST_CASE("differentiable log-density matches values and finite differences") {
  Rng rng(13);
  ParameterSet ps;
  ps.add("a", oracle::random_matrix(6, 1, rng, -1.5, 1.5));
  ps.add("omega", Matrix::scalar(0.8));
  Matrix gaps(6, 1);
  for (double& g : gaps.data) g = rng.uniform(0.0, 2.0);
  {
    Tape t(false);
    const Matrix v = log_density(t.param(ps[0]), t.param(ps[1]), gaps).value();
    for (std::size_t k = 0; k < 6; ++k)
      CHECK(v.data[k] == doctest::Approx(log_density_from_activation(ps[0].value.data[k], 0.8, gaps.data[k])));
  }
  const double err = oracle::finite_difference_error(
      ps, [&](Tape& t) { return ad::sum(log_density(t.param(ps[0]), t.param(ps[1]), gaps)); });
  CHECK(err < 1e-6);
}

TEST_CASE("large exponents are clamped and counted") {
  Tape t;
  Matrix a(2, 1, {60.0, 0.0});
  std::size_t clamped = 0;
  const Var v = log_density(t.constant(a), t.constant(Matrix::scalar(1.0)), Matrix(2, 1, {0.0, 1.0}), &clamped);
  CHECK(clamped == 2);
  CHECK(std::isfinite(v.value().data[0]));
}

TEST_CASE("event times are the last interaction per slice in slice units") {
  InteractionLog log;
  log.num_users = 2;
  log.num_items = 2;
  log.slice_count = 3;
  log.slice_length = 10;
  log.t_min = 100;
  log.interactions = {{0, 0, 100, 0}, {0, 1, 105, 0}, {1, 1, 112, 1}, {0, 0, 128, 2}};
  const EventTimes ev = extract_event_times(log);
  CHECK(ev.user[0][0] == 0.5);
  CHECK(ev.item[0][0] == 0.0);
  CHECK(!EventTimes::present(ev.user[0][1]));
  CHECK(ev.user[1][1] == doctest::Approx(1.2));
  CHECK(ev.user[2][0] == doctest::Approx(2.8));

  const std::vector<std::uint32_t> users{0, 1}, items{0, 1};
  CHECK(collect_aux_terms(ev, users, items, 0).empty());
  const auto terms = collect_aux_terms(ev, users, items, 2);
  // user 0: (0,1) missing slice 1, (1,2) missing slice 1; item 0: same; item 1: (0,1).
  REQUIRE(terms.size() == 1);
  CHECK(!terms[0].is_user);
  CHECK(terms[0].node == 1);
  CHECK(terms[0].slice == 0);
  CHECK(terms[0].gap == doctest::Approx(0.7));
}

TEST_CASE("aux loss equals the term-by-term sum") {
  Rng rng(5);
  const std::size_t d = 3, nu = 4, ni = 5, slices = 3;
  ParameterSet ps;
  Rng init(1);
  const TppParamIds ids = register_tpp_params(ps, d, init);
  ps[ids.user.omega].value.data[0] = 0.6;
  ps[ids.item.bias].value.data[0] = -0.4;
  const Matrix us = oracle::random_matrix(slices * nu, d, rng);
  const Matrix is = oracle::random_matrix(slices * ni, d, rng);
  std::vector<AuxTerm> terms;
  for (int k = 0; k < 12; ++k) {
    const bool user = rng.below(2) == 0;
    terms.push_back({user, static_cast<std::uint32_t>(rng.below(user ? nu : ni)),
                     static_cast<std::uint32_t>(rng.below(slices)), rng.uniform(0.0, 1.8)});
  }
  double expect = 0.0;
  for (const auto& t : terms) {
    const TppSide side = TppSide::from(ps, t.is_user ? ids.user : ids.item);
    const Matrix& states = t.is_user ? us : is;
    const std::size_t row = t.slice * (t.is_user ? nu : ni) + t.node;
    expect -= log_density(states.row(row), 0.0, t.gap, side);
  }
  Tape tape;
  const AuxLoss loss = aux_loss(tape, tape.constant(us), tape.constant(is), nu, ni, terms, ps, ids);
  CHECK(loss.terms == terms.size());
  CHECK(loss.value.scalar() == doctest::Approx(expect).epsilon(1e-12));

  const AuxLoss none = aux_loss(tape, tape.constant(us), tape.constant(is), nu, ni, {}, ps, ids);
  CHECK(none.terms == 0);
  CHECK(none.value.scalar() == 0.0);
}

TEST_CASE("aux loss gradients match finite differences") {
  Rng rng(29);
  const std::size_t d = 2, nu = 3, ni = 2;
  ParameterSet ps;
  const TppParamIds ids = register_tpp_params(ps, d, rng);
  const auto us_id = ps.add("states.user", oracle::random_matrix(2 * nu, d, rng));
  const auto is_id = ps.add("states.item", oracle::random_matrix(2 * ni, d, rng));
  const std::vector<AuxTerm> terms{{true, 0, 0, 0.4}, {true, 2, 1, 1.1}, {false, 1, 0, 0.0}, {false, 0, 1, 2.0}};
  const double err = oracle::finite_difference_error(ps, [&](Tape& t) {
    return aux_loss(t, t.param(ps[us_id]), t.param(ps[is_id]), nu, ni, terms, ps, ids).value;
  });
  CHECK(err < 1e-6);
}
