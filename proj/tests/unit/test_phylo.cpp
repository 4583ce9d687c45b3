#include <doctest.h>

#include <algorithm>
#include <string>

#include "errors.hpp"
#include "phylo.hpp"
#include "simulate.hpp"

using namespace epi;

namespace {

const char* kFigureTree =
    "((L7:3.2,L8:2.2):2.8,(((L3:2.2,L4:2.2):1.1,L6:2.3):2.7,(((L1:1.8,L2:1.8):2.4,L5:1.7):1.3,"
    "(L9:0.2,L10:0.2):0.8):2.0):1.0);";

double time_of(const DatedTree& tree, const std::string& label) {
  for (const auto& n : tree.nodes()) {
    if (n.label == label) return n.time;
  }
  FAIL("no leaf " << label);
  return 0.0;
}

std::int64_t leaves_in(const DatedTree& tree, std::size_t slice, double day_length, double present) {
  std::int64_t count = 0;
  for (const auto& n : tree.nodes()) {
    if (n.is_leaf() && slice_index(n.time, day_length, present) == static_cast<std::int64_t>(slice)) ++count;
  }
  return count;
}

}  // namespace

TEST_CASE("parse: times from branch lengths") {
  const DatedTree t = parse_newick("((A:1,B:1):1,C:2);", 10.0);
  CHECK(t.leaf_count() == 3);
  CHECK(time_of(t, "A") == 10.0);
  CHECK(time_of(t, "B") == 10.0);
  CHECK(time_of(t, "C") == 10.0);
  CHECK(t.node(t.root()).time == 8.0);
  const int internal = t.node(t.root()).left;
  const int other = t.node(t.root()).right;
  const double inner = t.node(internal).is_leaf() ? t.node(other).time : t.node(internal).time;
  CHECK(inner == 9.0);

  const DatedTree two = parse_newick("(A:1,B:1);", 0.0);
  CHECK(two.node(two.root()).time == -1.0);
  CHECK(two.latest_time() == 0.0);
}

TEST_CASE("parse: invariants") {
  const DatedTree t = parse_newick(kFigureTree, 10.0);
  CHECK(t.leaf_count() == 10);
  CHECK(t.size() == 19);
  for (const auto& n : t.nodes()) {
    if (n.parent >= 0) CHECK(n.time >= t.node(n.parent).time);
    if (!n.is_leaf()) CHECK(n.right >= 0);
  }
  CHECK(t.latest_time() == 10.0);
}

TEST_CASE("parse: errors") {
  CHECK_THROWS_AS(parse_newick("((A:1,B:1,C:1):1);", 0.0), UnsupportedTopology);
  CHECK_THROWS_AS(parse_newick("((A:1):1,B:1);", 0.0), UnsupportedTopology);
  try {
    parse_newick("((A:1,B:1):1,C:2;", 0.0);
    FAIL("expected a parse error");
  } catch (const UnsupportedTopology&) {
    FAIL("wrong error kind");
  } catch (const ParseError& e) {
    CHECK(e.offset() != ParseError::npos);
  }
  CHECK_THROWS_AS(parse_newick("((A,B:1):1,C:2);", 0.0), ParseError);
  CHECK_THROWS_AS(parse_newick("((A:1,B:x):1,C:2);", 0.0), ParseError);
  CHECK_THROWS_AS(parse_newick("((A:1,B:1):1,C:2);extra", 0.0), ParseError);
  CHECK_THROWS_AS(parse_newick("", 0.0), ParseError);
  try {
    parse_newick("((A:1,B:1):1,C:2))", 0.0);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.offset() <= 18);
  }
}

TEST_CASE("parse: comments, quoting and whitespace") {
  const DatedTree t = parse_newick(" ( 'x y':1.5 , B:1.5e0 )[&comment] ; \n", 2.0);
  CHECK(t.leaf_count() == 2);
  CHECK(time_of(t, "x y") == 2.0);
}

TEST_CASE("newick round trip") {
  const DatedTree t = parse_newick(kFigureTree, 10.0);
  const DatedTree back = parse_newick(to_newick(t), 10.0);
  CHECK(discretize(back, 1.0, 10.0) == discretize(t, 1.0, 10.0));
  REQUIRE(back.size() == t.size());
  for (const auto& n : t.nodes()) {
    if (n.is_leaf()) CHECK(time_of(back, n.label) == doctest::Approx(n.time).epsilon(1e-15));
  }
}

TEST_CASE("discretize: golden figure tree") {
  const TreeSlices s = discretize(parse_newick(kFigureTree, 10.0), 1.0, 10.0);
  CHECK(s.a == std::vector<std::int64_t>{2, 4, 6, 7, 8, 5, 3, 3, 2});
  CHECK(s.c == std::vector<std::int64_t>{0, 1, 0, 1, 3, 2, 0, 1, 1});
}

TEST_CASE("discretize: single leaf") {
  const DatedTree t = parse_newick("A:0;", 5.0);
  const TreeSlices s = discretize(t, 1.0, 7.0);
  REQUIRE(s.size() >= 1);
  for (std::size_t n = 0; n < s.size(); ++n) CHECK(s.c[n] == 0);
  CHECK(s.a.back() == 1);
}

TEST_CASE("discretize: two leaves coalescing a day and a half ago") {
  const TreeSlices s = discretize(parse_newick("(A:1.5,B:1.5);", 0.0), 1.0, 0.0);
  CHECK(s.a == std::vector<std::int64_t>{2, 2});
  CHECK(s.c == std::vector<std::int64_t>{0, 1});
}

TEST_CASE("discretize: a boundary point closes the older slice") {
  // Slice n is (present - (n+1) L, present - n L].
  const TreeSlices s = discretize(parse_newick("(A:1,B:1);", 0.0), 1.0, 0.0);
  CHECK(s.a == std::vector<std::int64_t>{2, 2});
  CHECK(s.c == std::vector<std::int64_t>{0, 1});
  CHECK(slice_index(0.0, 1.0, 0.0) == 0);
  CHECK(slice_index(-0.999, 1.0, 0.0) == 0);
  CHECK(slice_index(-1.0, 1.0, 0.0) == 1);
  CHECK(slice_index(-1.0 + 1e-6, 1.0, 0.0) == 0);
  // Floating-point noise below the tolerance snaps onto the boundary.
  CHECK(slice_index(-1.0 + 1e-12, 1.0, 0.0) == 1);
  CHECK(slice_index(-1e-12, 1.0, 0.0) == 0);
  CHECK(slice_index(1e-12, 1.0, 0.0) == 0);
  // The figure tree has an internal node exactly three days back.
  const TreeSlices fig = discretize(parse_newick(kFigureTree, 10.0), 1.0, 10.0);
  CHECK(fig.c[2] == 0);
  CHECK(fig.c[3] == 1);
}

TEST_CASE("discretize: translation invariance and day length") {
  const DatedTree t = parse_newick(kFigureTree, 10.0);
  const TreeSlices base = discretize(t, 1.0, 10.0);
  CHECK(discretize(t.shifted(1000.25), 1.0, 1010.25) == base);
  CHECK(discretize(parse_newick(kFigureTree, -3.5), 1.0, -3.5) == base);
  // Same tree in half-day units with slices of two units.
  const DatedTree scaled = parse_newick(
      "((L7:6.4,L8:4.4):5.6,(((L3:4.4,L4:4.4):2.2,L6:4.6):5.4,(((L1:3.6,L2:3.6):4.8,L5:3.4):2.6,"
      "(L9:0.4,L10:0.4):1.6):4.0):2.0);",
      20.0);
  CHECK(discretize(scaled, 2.0, 20.0) == base);
}

TEST_CASE("align to epidemic days") {
  const TreeSlices s = discretize(parse_newick(kFigureTree, 10.0), 1.0, 10.0);
  const AlignedGenetics nine = align_to_epidemic(s, 9);
  CHECK(nine.days.size() == 9);
  CHECK(nine.days[8] == DayGenetics{2, 0});
  CHECK(nine.days[0] == DayGenetics{2, 1});
  CHECK(nine.truncated_slices == 0);

  const AlignedGenetics twelve = align_to_epidemic(s, 12);
  CHECK(twelve.days[0] == DayGenetics{0, 0});
  CHECK(twelve.days[2] == DayGenetics{0, 0});
  CHECK(twelve.days[3] == DayGenetics{2, 1});
  CHECK(twelve.days[11] == DayGenetics{2, 0});

  const AlignedGenetics five = align_to_epidemic(s, 5);
  CHECK(five.days.size() == 5);
  CHECK(five.days[4] == DayGenetics{2, 0});
  CHECK(five.days[0] == DayGenetics{8, 3});
  CHECK(five.truncated_slices == 4);
  CHECK(five.truncated_coalescences == 2 + 0 + 1 + 1);
}

TEST_CASE("tip dates override branch-length dating") {
  const DatedTree t = parse_newick("((A:1,B:1):1,C:2);", 10.0);
  const DatedTree dated = apply_tip_dates(t, {{"A", 10.0}, {"B", 9.0}, {"C", 10.0}});
  CHECK(time_of(dated, "A") == 10.0);
  CHECK(time_of(dated, "B") == 9.0);
  CHECK(time_of(dated, "C") == 10.0);
  for (const auto& n : dated.nodes()) {
    if (n.parent >= 0) CHECK(n.time >= dated.node(n.parent).time);
  }
  CHECK_THROWS_AS(apply_tip_dates(t, {{"A", 10.0}, {"B", 9.0}}), InvalidArgument);
  // Consistent dates leave the tree unchanged.
  const DatedTree same = apply_tip_dates(t, {{"A", 10.0}, {"B", 10.0}, {"C", 10.0}});
  CHECK(discretize(same, 1.0, 10.0) == discretize(t, 1.0, 10.0));
}

TEST_CASE("simulated trees: round trip, bookkeeping and total coalescences") {
  int trees = 0;
  for (std::uint64_t seed = 1; trees < 100; ++seed) {
    REQUIRE(seed < 1000);
    ScenarioSpec spec = ScenarioSpec::peaked_reference(0.05, 0.05);
    const SimOutput out = run_scenario(spec, seed);
    if (out.tree.tree.leaf_count() < 2) continue;
    ++trees;
    const DatedTree& tree = out.tree.tree;
    const double present = static_cast<double>(spec.n_days);
    const DatedTree parsed = parse_newick(to_newick(tree), out.tree.most_recent_tip_time);
    const TreeSlices slices = discretize(parsed, 1.0, present);
    CHECK(slices == out.slices);
    CHECK(slices == discretize(tree, 1.0, present));

    const AlignedGenetics aligned = align_to_epidemic(slices, spec.n_days);
    CHECK(aligned.days == out.tree.records);

    std::int64_t total_c = 0;
    for (std::size_t n = 0; n < slices.size(); ++n) {
      total_c += slices.c[n];
      CHECK(slices.c[n] <= std::max<std::int64_t>(slices.a[n] - 1, 0));
      if (n + 1 < slices.size()) {
        CHECK(slices.a[n + 1] == slices.a[n] - slices.c[n] + leaves_in(parsed, n + 1, 1.0, present));
      }
    }
    CHECK(total_c == static_cast<std::int64_t>(parsed.leaf_count()) - 1);
  }
}
