#include "io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "errors.hpp"

namespace epi {
namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, std::string_view text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  std::size_t i = 0;
  auto end_row = [&] {
    row.push_back(std::move(field));
    field.clear();
    const bool blank = row.size() == 1 && row[0].empty() && !any;
    if (!blank) rows.push_back(std::move(row));
    row.clear();
    any = false;
  };
  for (; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
    } else if (ch == '"') {
      quoted = true;
      any = true;
    } else if (ch == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (ch == '\n') {
      end_row();
    } else if (ch != '\r') {
      field += ch;
    }
  }
  if (quoted) throw ParseError("unterminated quoted field", i);
  if (!field.empty() || !row.empty() || any) end_row();
  return rows;
}

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::int64_t parse_int(const std::string& raw, const std::string& what) {
  const std::string s = trim(raw);
  std::int64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || s.empty()) {
    throw ParseError("expected an integer for " + what + ", got '" + s + "'");
  }
  return v;
}

double parse_real(const std::string& raw, const std::string& what) {
  const std::string s = trim(raw);
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || s.empty()) {
    throw ParseError("expected a number for " + what + ", got '" + s + "'");
  }
  return v;
}

void expect_header(const std::vector<std::string>& row, const std::vector<std::string>& names,
                   const std::string& file) {
  bool ok = row.size() >= names.size();
  for (std::size_t i = 0; ok && i < names.size(); ++i) ok = trim(row[i]) == names[i];
  if (!ok) {
    std::string want;
    for (const auto& n : names) want += (want.empty() ? "" : ",") + n;
    throw ParseError(file + ": expected header '" + want + "'");
  }
}

std::string row_ref(std::size_t line) { return "row " + std::to_string(line + 1); }

std::string matrix_header(std::size_t n_days) {
  std::string s = "iter";
  for (std::size_t d = 1; d <= n_days; ++d) s += ",day_" + std::to_string(d);
  return s + "\n";
}

}  // namespace

ObservedSeries parse_prevalence_csv(std::string_view text) {
  const auto rows = parse_csv(text);
  ObservedSeries out;
  if (rows.empty()) return out;
  expect_header(rows[0], {"day", "observed"}, "prevalence CSV");
  std::map<std::int64_t, std::optional<std::int64_t>> values;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() < 2) throw ParseError("prevalence CSV " + row_ref(r) + ": needs two fields");
    const std::int64_t day = parse_int(row[0], "day in " + row_ref(r));
    if (day < 1) throw ParseError("prevalence CSV " + row_ref(r) + ": days start at 1");
    std::optional<std::int64_t> y;
    if (!trim(row[1]).empty()) {
      y = parse_int(row[1], "observed in " + row_ref(r));
      if (*y < 0) throw ParseError("prevalence CSV " + row_ref(r) + ": negative count");
    }
    if (!values.emplace(day, y).second) {
      throw ParseError("prevalence CSV: duplicate day " + std::to_string(day));
    }
  }
  if (values.empty()) return out;
  out.y.assign(static_cast<std::size_t>(values.rbegin()->first), std::nullopt);
  for (const auto& [day, y] : values) out.y[static_cast<std::size_t>(day - 1)] = y;
  return out;
}

ObservedSeries read_prevalence_csv(const fs::path& path) {
  return parse_prevalence_csv(read_text_file(path));
}

std::vector<std::pair<std::string, double>> parse_tip_dates_csv(std::string_view text) {
  const auto rows = parse_csv(text);
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() < 2) throw ParseError("tip-date CSV " + row_ref(r) + ": needs two fields");
    const std::string time = trim(row[1]);
    double t = 0;
    const auto res = std::from_chars(time.data(), time.data() + time.size(), t);
    const bool numeric = res.ec == std::errc() && res.ptr == time.data() + time.size() && !time.empty();
    if (!numeric) {
      if (r == 0) continue;  // header
      throw ParseError("tip-date CSV " + row_ref(r) + ": bad time '" + time + "'");
    }
    out.emplace_back(trim(row[0]), t);
  }
  return out;
}

std::string slices_to_csv(const TreeSlices& slices) {
  std::string s = "days_from_present,a,c\n";
  for (std::size_t n = 0; n < slices.size(); ++n) {
    s += std::to_string(n) + "," + std::to_string(slices.a[n]) + "," + std::to_string(slices.c[n]) + "\n";
  }
  return s;
}

TreeSlices parse_slices_csv(std::string_view text) {
  const auto rows = parse_csv(text);
  TreeSlices out;
  if (rows.empty()) return out;
  expect_header(rows[0], {"days_from_present", "a", "c"}, "slices CSV");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() < 3) throw ParseError("slices CSV " + row_ref(r) + ": needs three fields");
    const std::int64_t n = parse_int(row[0], "days_from_present");
    if (n != static_cast<std::int64_t>(r - 1)) {
      throw ParseError("slices CSV " + row_ref(r) + ": slices must be listed 0, 1, 2, ...");
    }
    out.a.push_back(parse_int(row[1], "a"));
    out.c.push_back(parse_int(row[2], "c"));
  }
  return out;
}

std::string simulation_prevalence_csv(const LatentPath& path, const ObservedSeries& observed) {
  std::string s = "day,true_x,observed_y\n";
  for (std::size_t n = 0; n < path.x.size(); ++n) {
    s += std::to_string(n) + "," + std::to_string(path.x[n]) + ",";
    if (n >= 1 && n <= observed.size() && observed.y[n - 1]) s += std::to_string(*observed.y[n - 1]);
    s += "\n";
  }
  return s;
}

std::string path_csv(const LatentPath& path) {
  std::string s = "day,beta,x\n";
  for (std::size_t n = 1; n <= path.n_days(); ++n) {
    s += std::to_string(n) + "," + format_double(path.beta[n - 1]) + "," +
         std::to_string(path.x[n]) + "\n";
  }
  return s;
}

std::string theta_trace_csv(const ChainOutput& chain) {
  std::string s = "iter,sigma,rho,x0,log_lik,accepted\n";
  for (std::size_t i = 0; i < chain.size(); ++i) {
    s += std::to_string(i + 1) + "," + format_double(chain.sigma[i]) + "," +
         format_double(chain.rho[i]) + "," + std::to_string(chain.x0[i]) + "," +
         format_double(chain.log_lik[i]) + "," + (chain.accepted[i] ? "1" : "0") + "\n";
  }
  return s;
}

std::string beta_trace_csv(const ChainOutput& chain) {
  std::string s = matrix_header(chain.n_days);
  if (chain.beta.size() != chain.size() * chain.n_days) return s;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    s += std::to_string(i + 1);
    for (std::size_t d = 1; d <= chain.n_days; ++d) s += "," + format_double(chain.beta_at(i, d));
    s += "\n";
  }
  return s;
}

std::string x_trace_csv(const ChainOutput& chain) {
  std::string s = matrix_header(chain.n_days);
  if (chain.x.size() != chain.size() * chain.n_days) return s;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    s += std::to_string(i + 1);
    for (std::size_t d = 1; d <= chain.n_days; ++d) s += "," + std::to_string(chain.x_at(i, d));
    s += "\n";
  }
  return s;
}

ChainOutput parse_traces(std::string_view theta_csv, std::string_view beta_csv,
                         std::string_view x_csv) {
  ChainOutput out;
  const auto rows = parse_csv(theta_csv);
  if (rows.empty()) throw ParseError("theta trace is empty");
  expect_header(rows[0], {"iter", "sigma", "rho", "x0", "log_lik", "accepted"}, "theta trace");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() < 6) throw ParseError("theta trace " + row_ref(r) + ": needs six fields");
    out.sigma.push_back(parse_real(row[1], "sigma"));
    out.rho.push_back(parse_real(row[2], "rho"));
    out.x0.push_back(parse_int(row[3], "x0"));
    const std::string ll = trim(row[4]);
    out.log_lik.push_back(ll == "-inf" ? kNegInf : parse_real(ll, "log_lik"));
    out.accepted.push_back(parse_int(row[5], "accepted") != 0 ? 1 : 0);
  }
  auto read_matrix = [&](std::string_view text, const std::string& name, auto&& sink) {
    const auto m = parse_csv(text);
    if (m.empty()) return std::size_t{0};
    const std::size_t days = m[0].size() - 1;
    if (m.size() - 1 != out.size()) {
      throw ParseError(name + " has " + std::to_string(m.size() - 1) + " rows but the theta trace has " +
                       std::to_string(out.size()));
    }
    for (std::size_t r = 1; r < m.size(); ++r) {
      if (m[r].size() != days + 1) throw ParseError(name + " " + row_ref(r) + ": wrong field count");
      for (std::size_t d = 1; d <= days; ++d) sink(m[r][d]);
    }
    return days;
  };
  const std::size_t nb = read_matrix(beta_csv, "beta trace",
                                     [&](const std::string& f) { out.beta.push_back(parse_real(f, "beta")); });
  const std::size_t nx = read_matrix(x_csv, "x trace",
                                     [&](const std::string& f) { out.x.push_back(parse_int(f, "x")); });
  if (nb > 0 && nx > 0 && nb != nx) throw ParseError("beta and x traces cover different days");
  out.n_days = std::max(nb, nx);
  if (out.beta.size() != out.size() * out.n_days) out.beta.clear();
  if (out.x.size() != out.size() * out.n_days) out.x.clear();
  return out;
}

std::string rt_summary_csv(const PosteriorSummary& summary) {
  std::string s = "day,mean,lo,hi\n";
  for (std::size_t n = 0; n < summary.rt.size(); ++n) {
    const auto& r = summary.rt[n];
    s += std::to_string(n + 1) + "," + format_double(r.mean) + "," + format_double(r.lo) + "," +
         format_double(r.hi) + "\n";
  }
  return s;
}

ordered_json to_json(const IntervalSummary& s) {
  return {{"mean", s.mean}, {"lo", s.lo}, {"hi", s.hi}};
}

ordered_json to_json(const PosteriorSummary& s) {
  ordered_json j;
  j["burn_in"] = s.burn_in;
  j["samples"] = s.samples;
  j["acceptance_rate"] = s.acceptance_rate;
  j["sigma"] = to_json(s.sigma);
  j["rho"] = to_json(s.rho);
  j["x0"] = to_json(s.x0);
  auto series = [](const std::vector<IntervalSummary>& v) {
    ordered_json a = ordered_json::array();
    for (const auto& e : v) a.push_back(to_json(e));
    return a;
  };
  j["beta"] = series(s.beta);
  j["rt"] = series(s.rt);
  j["x"] = series(s.x);
  return j;
}

ordered_json to_json(const ChainHealth& h) {
  return {{"acceptance_rate", h.acceptance_rate},
          {"ess", {{"sigma", h.ess_sigma}, {"rho", h.ess_rho}, {"x0", h.ess_x0}}},
          {"longest_rejection_run", h.longest_rejection_run},
          {"flagged", h.flagged}};
}

ordered_json to_json(const Score& s) {
  return {{"rmse", s.rmse}, {"mean_ci_width", s.mean_ci_width}, {"coverage", s.coverage}};
}

ordered_json to_json(const TuneReport& r) {
  ordered_json reps = ordered_json::array();
  for (const auto& rep : r.repeats) {
    ordered_json e;
    e["theta_bar"] = {{"sigma", rep.theta_bar.sigma}, {"rho", rep.theta_bar.rho}, {"x0", rep.theta_bar.x0}};
    e["variance"] = rep.variance ? ordered_json(*rep.variance) : ordered_json(nullptr);
    e["k_opt_raw"] = rep.k_raw;
    e["degenerate_replicates"] = rep.degenerate_replicates;
    e["discarded"] = rep.discarded;
    reps.push_back(e);
  }
  return {{"repeats", reps}, {"k_opt_raw_max", r.k_raw_max}, {"k_opt", r.k_opt}, {"warnings", r.warnings}};
}

ordered_json to_json(const ScenarioSpec& s) {
  ordered_json beta;
  switch (s.beta.kind) {
    case BetaSchedule::Kind::constant:
      beta = {{"kind", "constant"}, {"level", s.beta.level}};
      break;
    case BetaSchedule::Kind::peaked:
      beta = {{"kind", "peaked"}, {"low", s.beta.low}, {"high", s.beta.high}};
      break;
    case BetaSchedule::Kind::changepoint:
      beta = {{"kind", "changepoint"}, {"levels", s.beta.levels}, {"day", s.beta.change_day}};
      break;
  }
  return {{"n_days", s.n_days},
          {"beta", beta},
          {"gamma", s.gamma},
          {"x0", s.x0},
          {"rho", s.rho},
          {"genetic_sampling_fraction", s.genetic_sampling_fraction},
          {"max_attempts", s.max_attempts}};
}

ScenarioSpec scenario_from_json(const nlohmann::json& j) {
  ScenarioSpec s;
  try {
    if (!j.is_object()) throw InvalidArgument("scenario must be a JSON object");
    s.n_days = j.value("n_days", s.n_days);
    s.gamma = j.value("gamma", s.gamma);
    s.x0 = j.value("x0", s.x0);
    s.rho = j.value("rho", s.rho);
    s.genetic_sampling_fraction = j.value("genetic_sampling_fraction", s.genetic_sampling_fraction);
    s.max_attempts = j.value("max_attempts", s.max_attempts);
    if (j.contains("beta")) {
      const auto& b = j.at("beta");
      const std::string kind = b.value("kind", std::string("constant"));
      if (kind == "constant") {
        s.beta = BetaSchedule::constant(b.value("level", 0.3));
      } else if (kind == "peaked") {
        s.beta = BetaSchedule::peaked(b.value("low", 0.1), b.value("high", 0.3));
      } else if (kind == "changepoint") {
        const auto levels = b.at("levels").get<std::vector<double>>();
        if (levels.size() != 2) throw InvalidArgument("changepoint schedule needs two levels");
        s.beta = BetaSchedule::changepoint(levels[0], levels[1], b.at("day").get<std::int64_t>());
      } else {
        throw InvalidArgument("unknown birth-rate schedule '" + kind + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("bad scenario: ") + e.what());
  }
  s.validate();
  return s;
}

}  // namespace epi
