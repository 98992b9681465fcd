#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "regacc/controller.hpp"
#include "support/qp_oracle.hpp"

using namespace regacc;
using Catch::Approx;

namespace {

std::vector<SignalTiming> two_signals() {
  return {SignalTiming::periodic(1000.0, 0.0, 25, 5, 20, 0.0, 300.0),
          SignalTiming::periodic(2000.0, 7.0, 25, 5, 20, 0.0, 300.0)};
}

std::shared_ptr<const TrafficCBF> traffic(int degree, double alpha = 1.0) {
  TrafficCBFParams params;
  params.alpha = alpha;
  return std::make_shared<const TrafficCBF>(build_traffic_cbf(two_signals(), params, {0.0, 300.0}, degree));
}

// Direct transcriptions of the constrained-mode safe-input sets, used as an
// oracle independent of the controller's assembly code.
std::vector<MuConstraint> oracle_constraints(const VehicleParams& p, const VehicleState& s, double t,
                                             double a_l, const TrafficCBF& tr) {
  const double vr = s.V_l - s.V_f;
  const double delta = s.X_l - s.X_f - p.headway * s.V_f - p.S0;
  const double h1 = delta - vr * vr / (2.0 * p.a_min);
  std::vector<MuConstraint> cs;
  cs.push_back({p.headway - vr / p.a_min, h1 + vr - vr * a_l / p.a_min});
  cs.push_back({1.0, p.V_max - s.V_f});
  std::size_t i = 0;
  while (s.X_f > tr.positions[i]) ++i;
  const auto signals = two_signals();
  const auto& sig = signals[i];
  const auto& c = sig.cycles()[sig.cycle_index(t)];
  const double D = tr.positions[i + 1] - tr.positions[i];
  const double mid = 0.5 * (c.yellow + c.red);
  const double sg = 1.0 / (1.0 + std::exp(tr.params.tau * (t - mid)));
  const double h3 = D * sg + tr.positions[i] - s.X_f - tr.params.gamma * s.V_f;
  const double h3_t = -tr.params.tau * D * sg * (1.0 - sg);
  cs.push_back({tr.params.gamma, tr.params.alpha * h3 + h3_t - s.V_f});
  cs.push_back({-1.0, p.a_min});
  cs.push_back({1.0, p.a_max - (p.c0 + p.c1 * s.V_f + p.c2 * s.V_f * s.V_f) / p.mass});
  return cs;
}

}  // namespace

TEST_CASE("nominal PID") {
  const VehicleParams p;
  const PIDGains g;
  SECTION("equilibrium only balances resistance") {
    const VehicleState s{0.0, 10.0, 1.4 * 10.0 + 4.5, 10.0, 0.0};
    CHECK(nominal_control(s, g, p) == Approx(friction_force(p, 10.0)));
  }
  SECTION("unit relative speed from standstill") {
    const VehicleState s{0.0, 0.0, 4.5, 1.0, 0.0};
    CHECK(nominal_control(s, g, p) == Approx(11748.1));
  }
  SECTION("doubling the mass doubles the acceleration part") {
    const VehicleState s{0.0, 3.0, 20.0, 4.0, 2.0};
    auto heavy = p;
    heavy.mass *= 2.0;
    const double part = nominal_control(s, g, p) - friction_force(p, 3.0);
    const double heavy_part = nominal_control(s, g, heavy) - friction_force(heavy, 3.0);
    CHECK(heavy_part == Approx(2.0 * part));
  }
  SECTION("gain definition") {
    const VehicleState s{0.0, 3.0, 20.0, 4.0, 2.0};
    CHECK(nominal_mu(s, g, p) == Approx(7.12 * 1.0 + 3.24 * (20.0 - 4.2 - 4.5) + 0.4 * 2.0));
  }
}

TEST_CASE("spacing barrier constraint") {
  const VehicleParams p;
  SECTION("both variants coincide without relative speed") {
    const VehicleState s{0.0, 10.0, 40.0, 10.0, 0.0};
    const auto plain = h1_constraint(s, p, false);
    const auto stop = h1_constraint(s, p, true);
    CHECK(plain.a == stop.a);
    CHECK(plain.b == stop.b);
    CHECK(plain.label == ConstraintLabel::H1);
  }
  SECTION("boundary of the safe set forbids closing the gap") {
    const VehicleState s{0.0, 10.0, 1.4 * 10.0 + 4.5, 10.0, 0.0};
    CHECK(h1_constraint(s, p, false).b == Approx(0.0).margin(1e-12));
    CHECK(h1_constraint(s, p, true).b == Approx(0.0).margin(1e-12));
  }
  SECTION("closing fast adds the stopping term to the coefficient") {
    const VehicleState s{0.0, 15.0, 60.0, 10.0, 0.0};
    CHECK(h1_constraint(s, p, true).a == Approx(1.4 + 5.0 / 3.92));
    CHECK(h1_constraint(s, p, true).a == Approx(2.676).margin(1e-3));
    CHECK(h1_value(s, p, true) == Approx(60.0 - 21.0 - 4.5 - 25.0 / 7.84));
  }
  SECTION("coefficient turns negative for a fast-receding lead") {
    const VehicleState s{0.0, 0.0, 10.0, 6.0, 0.0};
    CHECK(h1_constraint(s, p, true).a < 0.0);
  }
  SECTION("b - a mu equals dh1/dt + h1 along the dynamics") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> v(0.0, 20.0);
    std::uniform_real_distribution<double> acc(-2.0, 2.0);
    std::uniform_real_distribution<double> gap(5.0, 80.0);
    for (int n = 0; n < 1000; ++n) {
      const VehicleState s{0.0, v(rng), gap(rng), v(rng), 0.0};
      const double mu = acc(rng);
      const double a_l = acc(rng);
      for (bool stop : {false, true}) {
        const auto c = h1_constraint(s, p, stop, a_l);
        const double eps = 1e-6;
        auto shifted = [&](double d) {
          VehicleState q = s;
          q.X_f += d * s.V_f;
          q.V_f += d * mu;
          q.X_l += d * s.V_l;
          q.V_l += d * a_l;
          return h1_value(q, p, stop);
        };
        const double fd = (shifted(eps) - shifted(-eps)) / (2 * eps);
        REQUIRE(c.b - c.a * mu == Approx(fd + h1_value(s, p, stop)).epsilon(1e-6).margin(1e-5));
      }
    }
  }
}

TEST_CASE("speed limit constraint") {
  const VehicleParams p;
  CHECK(h2_constraint({0.0, p.V_max, 100.0, 0.0, 0.0}, p).b == 0.0);
  CHECK(h2_constraint({0.0, 0.0, 100.0, 0.0, 0.0}, p).b == p.V_max);
  CHECK(h2_constraint({0.0, 20.0, 100.0, 0.0, 0.0}, p).b < 0.0);
  CHECK(h2_constraint({0.0, 5.0, 100.0, 0.0, 0.0}, p).a == 1.0);
  CHECK(h2_value({0.0, 5.0, 100.0, 0.0, 0.0}, p) == Approx(11.67));
}

TEST_CASE("lambda selection") {
  CHECK(lambdas_from_bounds(1000.0, 5.0, 3.0, 0.1).l1 == 0.1);
  CHECK(lambdas_from_bounds(1000.0, 5.0, 3.0, 0.1).l2 == 0.1);
  CHECK(lambdas_from_bounds(1000.0, -100.0, 0.0, 0.01).l1 == Approx(0.11));
  const auto dom = lambdas_from_bounds(1000.0, -100.0, -1.0, 0.5);
  CHECK(dom.l1 == Approx(0.6));
  CHECK(dom.l2 == 0.5);
  const auto tight = lambdas_from_bounds(10.0, -5.0, -30.0, 0.1);
  CHECK(tight.l1 == Approx(0.6));
  CHECK(tight.l2 == Approx(30.0));
  for (const auto& l : {dom, tight}) CHECK(l.l1 >= 0.1);
  CHECK_THROWS_AS(lambdas_from_bounds(0.0, 1.0, 0.0, 0.1), StateOutsideSafeSetError);
  CHECK_THROWS_AS(lambdas_from_bounds(-1.0, 1.0, 0.0, 0.1), StateOutsideSafeSetError);
  CHECK_THROWS_AS(lambdas_from_bounds(1.0, 1.0, 0.0, 0.0), ArgumentError);
}

TEST_CASE("lambda selection from a traffic piece") {
  const auto tr = traffic(2);
  const VehicleParams p;
  const auto sys = mu_system(p, 0.0);
  const VehicleState s{0.0, 0.0, 4.5, 0.0, 0.0};
  const auto& piece = tr->regions[0].piece(0);
  const auto l = select_lambdas(piece, sys, 0.0, to_vector(s), 0.1);
  CHECK(l.l1 >= 0.1);
  CHECK(l.l2 >= 0.1);
  const double beta0 = piece.value(0.0, to_vector(s));
  CHECK(piece.time_derivs[0](0.0, to_vector(s)) + l.l1 * beta0 > 0.0);
}

TEST_CASE("pole placement gain") {
  CHECK(pole_placement_gain(2.0, 3.0).kp == 6.0);
  CHECK(pole_placement_gain(2.0, 3.0).kd == 5.0);
  CHECK(pole_placement_gain(1.0, 1.0).kp == 1.0);
  CHECK(pole_placement_gain(1.0, 1.0).kd == 2.0);
  const auto base = pole_placement_gain(0.7, 1.3);
  const auto scaled = pole_placement_gain(0.7 * 3.0, 1.3 * 3.0);
  CHECK(scaled.kp == Approx(9.0 * base.kp));
  CHECK(scaled.kd == Approx(3.0 * base.kd));
  CHECK_THROWS_AS(pole_placement_gain(0.0, 1.0), ArgumentError);
  CHECK_THROWS_AS(pole_placement_gain(1.0, -1.0), ArgumentError);
}

TEST_CASE("degree-2 traffic constraint") {
  const auto tr = traffic(2);
  const VehicleParams p;
  SECTION("inactive far from a red light") {
    const VehicleState s{0.0, 0.0, 4.5, 0.0, 0.0};
    const auto c = h3_constraint_deg2(s, 0.0, *tr, pole_placement_gain(0.1, 0.1));
    CHECK(c.a == 1.0);
    CHECK(c.b > p.a_max);
    CHECK(c.label == ConstraintLabel::H3);
  }
  SECTION("agrees with the general second-order constraint") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> ut(0.0, 299.0);
    std::uniform_real_distribution<double> ux(0.0, 2000.0);
    std::uniform_real_distribution<double> uv(0.0, 16.0);
    std::uniform_real_distribution<double> ul(0.1, 3.0);
    for (int n = 0; n < 500; ++n) {
      const double t = ut(rng);
      const VehicleState s{ux(rng), uv(rng), 2100.0, 10.0, 0.0};
      const double l1 = ul(rng);
      const double l2 = ul(rng);
      const auto c = h3_constraint_deg2(s, t, *tr, pole_placement_gain(l1, l2));
      const auto loc = locate(*tr, s, t);
      const auto& piece = tr->regions[loc.region].piece(loc.piece);
      const std::vector<ClassK> alphas{ClassK::linear(l1), ClassK::linear(l2)};
      const auto ref = hocbf_mu_constraint(piece, alphas, t, to_vector(s), mu_system(p, 0.3));
      REQUIRE(c.a == Approx(ref.a));
      REQUIRE(c.b == Approx(ref.b).epsilon(1e-9).margin(1e-9));
    }
  }
  SECTION("boundary equilibrium holds position") {
    // At the logistic midpoint the second derivative vanishes; place the
    // ego on h = 0 moving with dh/dt.
    const double mid = 27.5;
    const auto v = sigmoid_derivs(tr->sigmoids[0][0], mid);
    const double X = v.value + 1000.0 - 4.5;
    const VehicleState s{X, v.d1, 2000.0, 0.0, 0.0};
    // X is past p_1 here, so look the piece up in region 1 directly.
    const auto& piece = tr->regions[0].piece(0);
    CHECK(piece.value(mid, to_vector(s)) == Approx(0.0).margin(1e-9));
    const double b = v.d2 + 6.0 * 0.0 + 5.0 * (v.d1 - s.V_f);
    CHECK(b == Approx(0.0).margin(1e-9));
  }
  SECTION("wrong degree") {
    CHECK_THROWS_AS(h3_constraint_deg2({}, 0.0, *traffic(1), {1.0, 2.0}), ArgumentError);
  }
}

TEST_CASE("degree-1 traffic constraint") {
  const auto tr = traffic(1);
  const VehicleParams p;
  const double gamma = p.V_max / p.a_min;
  SECTION("standing start, green ahead") {
    const VehicleState s{0.0, 0.0, 4.5, 0.0, 0.0};
    const auto c = h3_constraint_deg1(s, 0.0, *tr);
    CHECK(c.a == Approx(gamma));
    CHECK(c.b == Approx(2000.0).margin(5.0));
  }
  SECTION("at rest on the stop line during red") {
    const VehicleState s{1000.0, 0.0, 1100.0, 0.0, 0.0};
    const auto c = h3_constraint_deg1(s, 40.0, *tr);
    CHECK(c.b == Approx(0.0).margin(1e-6));
    CHECK(c.b / c.a <= 1e-6);
  }
  SECTION("full speed at the braking envelope needs maximum braking") {
    const double X = 1000.0 - gamma * p.V_max;
    const VehicleState s{X, p.V_max, 1100.0, 0.0, 0.0};
    const auto c = h3_constraint_deg1(s, 40.0, *tr);
    CHECK(c.b / c.a == Approx(-p.a_min).epsilon(1e-6));
  }
  SECTION("agrees with the general first-order constraint") {
    const auto tr6 = traffic(1, 6.0);
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> ut(0.0, 299.0);
    std::uniform_real_distribution<double> ux(0.0, 2000.0);
    std::uniform_real_distribution<double> uv(0.0, 16.0);
    for (int n = 0; n < 500; ++n) {
      const double t = ut(rng);
      const VehicleState s{ux(rng), uv(rng), 2100.0, 10.0, 0.0};
      const auto c = h3_constraint_deg1(s, t, *tr6);
      const auto loc = locate(*tr6, s, t);
      const auto& region = tr6->regions[loc.region];
      const auto ref = hocbf_mu_constraint(region.piece(loc.piece), region.alphas(), t, to_vector(s), mu_system(p, 0.0));
      REQUIRE(c.a == Approx(ref.a));
      REQUIRE(c.b == Approx(ref.b).epsilon(1e-12).margin(1e-9));
    }
  }
  SECTION("wrong degree") {
    CHECK_THROWS_AS(h3_constraint_deg1({}, 0.0, *traffic(2)), ArgumentError);
  }
}

TEST_CASE("safety filter") {
  const VehicleParams p;
  SECTION("feasible nominal input passes through") {
    SafetyController ctl({p, {}, InputMode::Constrained});
    const VehicleState s{0.0, 10.0, 1.4 * 10.0 + 4.5 + 2.0, 9.0, 0.0};
    const auto out = ctl.filter(s, 0.0, 0.0);
    CHECK(out.mu_nom == Approx(-7.12 + 3.24 * 2.0));
    CHECK(out.u == out.u_nom);
    CHECK_FALSE(out.overridden);
    CHECK(out.active.empty());
  }
  SECTION("only the speed limit binds") {
    SafetyController ctl({p, {}, InputMode::Unconstrained});
    const VehicleState s{0.0, 16.0, 500.0, 25.0, 0.0};
    const auto out = ctl.filter(s, 0.0, 0.0);
    CHECK(out.mu == Approx(p.V_max - 16.0));
    CHECK(out.u == Approx(friction_force(p, 16.0) + p.mass * (p.V_max - 16.0)));
    REQUIRE(out.active.size() == 1);
    CHECK(out.active[0] == ConstraintLabel::H2);
    CHECK(out.overridden);
  }
  SECTION("red light inside the braking envelope brakes") {
    SafetyController ctl({p, {}, InputMode::Constrained}, traffic(1, 6.0));
    const double gamma = p.V_max / p.a_min;
    const VehicleState s{1000.0 - gamma * 14.0 - 0.5, 14.0, 1200.0, 20.0, 0.0};
    const auto out = ctl.filter(s, 40.0, 0.0);
    CHECK_FALSE(out.qp_infeasible);
    // h = 0.5 m with the sigmoid saturated: gamma mu <= alpha h - V.
    CHECK(out.mu == Approx((6.0 * 0.5 - 14.0) / gamma).epsilon(1e-6));
    CHECK(std::find(out.active.begin(), out.active.end(), ConstraintLabel::H3) != out.active.end());
    const VehicleState deep{1000.0 - gamma * 14.0 + 3.0, 14.0, 1200.0, 20.0, 0.0};
    CHECK(ctl.filter(deep, 40.0, 0.0).mu == -p.a_min);
  }
  SECTION("empty feasible set falls back to full braking") {
    SafetyController ctl({p, {}, InputMode::Constrained});
    const VehicleState s{0.0, 16.0, 10.0, 0.0, 0.0};
    const auto out = ctl.filter(s, 0.0, 0.0);
    CHECK(out.qp_infeasible);
    CHECK(out.mu == -p.a_min);
  }
  SECTION("barrier degree must match the mode") {
    CHECK_THROWS_AS(SafetyController({p, {}, InputMode::Constrained}, traffic(2)), ArgumentError);
    CHECK_THROWS_AS(SafetyController({p, {}, InputMode::Unconstrained}, traffic(1)), ArgumentError);
  }
  SECTION("lambdas are re-selected when the active piece changes") {
    SafetyController ctl({p, {}, InputMode::Unconstrained}, traffic(2));
    CHECK_FALSE(ctl.lambdas().has_value());
    ctl.filter({0.0, 0.0, 4.5, 0.0, 0.0}, 0.0, 0.0);
    REQUIRE(ctl.lambdas().has_value());
    const auto first = *ctl.lambdas();
    ctl.filter({100.0, 8.0, 150.0, 8.0, 0.0}, 49.99, 0.0);
    CHECK(ctl.lambdas()->l1 == first.l1);
    // New green at t = 50 with a fast ego near the line: a larger lambda_1.
    ctl.filter({990.0, 16.0, 1100.0, 16.0, 0.0}, 50.0, 0.0);
    CHECK(ctl.lambdas()->l1 != first.l1);
  }
}

TEST_CASE("constrained filter against a grid search") {
  const VehicleParams p;
  const auto tr = traffic(1, 6.0);
  SafetyController ctl({p, {}, InputMode::Constrained}, tr);
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> ut(0.0, 299.0);
  std::uniform_real_distribution<double> ux(0.0, 2000.0);
  std::uniform_real_distribution<double> uv(0.0, 16.67);
  std::uniform_real_distribution<double> ugap(0.0, 120.0);
  std::uniform_real_distribution<double> ua(-1.0, 1.0);
  std::uniform_real_distribution<double> ue(-20.0, 20.0);
  int infeasible = 0;
  int overridden = 0;
  for (int n = 0; n < 10000; ++n) {
    const double t = ut(rng);
    const double X = ux(rng);
    const VehicleState s{X, uv(rng), X + ugap(rng), uv(rng), ue(rng)};
    const double a_l = ua(rng);
    const auto out = ctl.filter(s, t, a_l);

    // Input bound on every output.
    REQUIRE(out.u >= -p.a_min * p.mass + friction_force(p, s.V_f) - 1e-6);
    REQUIRE(out.u <= p.a_max * p.mass + 1e-6);

    const auto cs = oracle_constraints(p, s, t, a_l, *tr);
    // the input box confines every feasible mu to [-a_min, a_max]
    const auto grid = testing::window_argmin(cs, out.mu_nom, -4.0, 2.0, 1e-3);
    const auto iv = reduce_constraints(cs);
    if (!grid) {
      REQUIRE((out.qp_infeasible || iv.hi - iv.lo < 1e-3));
      if (out.qp_infeasible) ++infeasible;
      continue;
    }
    REQUIRE_FALSE(out.qp_infeasible);
    REQUIRE(std::abs(out.mu - out.mu_nom) <= std::abs(*grid - out.mu_nom) + 1e-9);
    REQUIRE(std::abs(out.mu - *grid) <= 1e-3 + 1e-9);
    if (iv.contains(out.mu_nom)) REQUIRE(out.u == out.u_nom);
    if (out.overridden) ++overridden;
  }
  CHECK(overridden > 500);
  CHECK(infeasible > 0);
}
