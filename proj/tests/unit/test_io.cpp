#include <doctest.h>

#include <cmath>
#include <string>

#include "errors.hpp"
#include "io.hpp"
#include "simulate.hpp"

using namespace epi;

TEST_CASE("prevalence csv: sparse days become missing") {
  const ObservedSeries s = parse_prevalence_csv("day,observed\n1,5\n3,7\n");
  REQUIRE(s.size() == 3);
  CHECK(s.y[0] == 5);
  CHECK_FALSE(s.y[1].has_value());
  CHECK(s.y[2] == 7);

  const ObservedSeries blank = parse_prevalence_csv("day,observed\n1,\n2,4\n");
  CHECK_FALSE(blank.y[0].has_value());
  CHECK(blank.y[1] == 4);

  CHECK(parse_prevalence_csv("day,observed\n").empty());
  CHECK(parse_prevalence_csv("day,observed\n\n").empty());
}

TEST_CASE("prevalence csv: observations only in the last ten of forty years") {
  std::string text = "day,observed\n";
  for (int d = 31; d <= 40; ++d) text += std::to_string(d) + "," + std::to_string(100 + d) + "\n";
  const ObservedSeries s = parse_prevalence_csv(text);
  REQUIRE(s.size() == 40);
  for (int d = 0; d < 30; ++d) CHECK_FALSE(s.y[d].has_value());
  CHECK(s.y[30] == 131);
  CHECK(s.y[39] == 140);
}

TEST_CASE("prevalence csv: errors") {
  CHECK_THROWS_AS(parse_prevalence_csv("day,observed\n1,5\n1,6\n"), ParseError);
  CHECK_THROWS_AS(parse_prevalence_csv("day,observed\n1,-5\n"), ParseError);
  CHECK_THROWS_AS(parse_prevalence_csv("day,observed\n1,five\n"), ParseError);
  CHECK_THROWS_AS(parse_prevalence_csv("when,observed\n1,5\n"), ParseError);
  CHECK_THROWS_AS(parse_prevalence_csv("day,observed\n0,5\n"), ParseError);
}

TEST_CASE("csv quoting") {
  const auto rows = parse_csv("a,\"b,c\",d\n\n1,2,3\n");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0][1] == "b,c");
  CHECK(rows[1][2] == "3");
}

TEST_CASE("tip dates csv") {
  const auto with_header = parse_tip_dates_csv("label,time\nA,2019.5\nB,2020\n");
  REQUIRE(with_header.size() == 2);
  CHECK(with_header[0].first == "A");
  CHECK(with_header[0].second == 2019.5);
  CHECK(parse_tip_dates_csv("A,1\nB,2\n").size() == 2);
}

TEST_CASE("slices csv round trip") {
  TreeSlices s;
  s.a = {2, 4, 6, 7, 8, 5, 3, 3, 2};
  s.c = {0, 1, 0, 1, 3, 2, 0, 1, 1};
  CHECK(parse_slices_csv(slices_to_csv(s)) == s);
}

TEST_CASE("doubles print shortest round-trip text") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, -2.5}) {
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.1) == "0.1");
}

TEST_CASE("trace csv round trip") {
  ChainOutput c;
  c.n_days = 2;
  c.sigma = {0.05, 0.06};
  c.rho = {0.03, 1.0 / 7.0};
  c.x0 = {1, 4};
  c.log_lik = {-100.25, -99.0};
  c.accepted = {0, 1};
  c.beta = {0.1, 0.2, 0.15, 0.25};
  c.x = {5, 6, 7, 8};
  const std::string theta = theta_trace_csv(c);
  CHECK(theta.rfind("iter,sigma,rho,x0,log_lik,accepted\n", 0) == 0);
  const ChainOutput back = parse_traces(theta, beta_trace_csv(c), x_trace_csv(c));
  CHECK(back.sigma == c.sigma);
  CHECK(back.rho == c.rho);
  CHECK(back.x0 == c.x0);
  CHECK(back.log_lik == c.log_lik);
  CHECK(back.accepted == c.accepted);
  CHECK(back.beta == c.beta);
  CHECK(back.x == c.x);
  CHECK(back.n_days == 2);

  const ChainOutput thin = parse_traces(theta, "", "");
  CHECK(thin.size() == 2);
  CHECK(thin.beta.empty());
}

TEST_CASE("simulation prevalence csv") {
  LatentPath p;
  p.beta = {0.3, 0.3};
  p.x = {5, 6, 8};
  ObservedSeries o;
  o.y = {1, 2};
  CHECK(simulation_prevalence_csv(p, o) == "day,true_x,observed_y\n0,5,\n1,6,1\n2,8,2\n");
  CHECK(path_csv(p).rfind("day,beta,x\n1,0.3,6\n", 0) == 0);
}

TEST_CASE("scenario json round trip") {
  ScenarioSpec s = ScenarioSpec::peaked_reference(0.05, 0.03);
  const ScenarioSpec back = scenario_from_json(nlohmann::json::parse(to_json(s).dump()));
  CHECK(back.n_days == s.n_days);
  CHECK(back.beta.expand(s.n_days) == s.beta.expand(s.n_days));
  CHECK(back.rho == s.rho);
  CHECK(back.genetic_sampling_fraction == s.genetic_sampling_fraction);
  CHECK_THROWS_AS(scenario_from_json(nlohmann::json::parse(R"({"beta":{"kind":"wavy"}})")),
                  InvalidArgument);
}
