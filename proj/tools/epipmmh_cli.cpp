#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "epipmmh.h"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// Process exit codes.
enum Exit : int {
  kOk = 0,
  kFailure = 1,
  kConfig = 2,
  kParse = 3,
  kInfeasible = 4,
  kDegenerate = 5,
  kTuningFailed = 6,
  kInterrupted = 130,
};

struct CliError {
  int code;
  std::string message;
};

int exit_code_for(epi_status s) {
  switch (s) {
    case EPI_OK:
      return kOk;
    case EPI_ERR_PARSE:
    case EPI_ERR_UNSUPPORTED_TOPOLOGY:
      return kParse;
    case EPI_ERR_INVALID_ARGUMENT:
    case EPI_ERR_IO:
      return kConfig;
    case EPI_ERR_INFEASIBLE:
      return kInfeasible;
    case EPI_ERR_DEGENERATE:
      return kDegenerate;
    case EPI_ERR_TUNING_FAILED:
      return kTuningFailed;
    default:
      return kFailure;
  }
}

void check(epi_status s, const std::string& context) {
  if (s != EPI_OK) throw CliError{exit_code_for(s), context + ": " + epi_last_error()};
}

[[noreturn]] void config_error(const std::string& message) { throw CliError{kConfig, message}; }

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using TreePtr = std::unique_ptr<epi_tree, Deleter<epi_tree, epi_tree_free>>;
using SlicesPtr = std::unique_ptr<epi_slices, Deleter<epi_slices, epi_slices_free>>;
using ProblemPtr = std::unique_ptr<epi_problem, Deleter<epi_problem, epi_problem_free>>;
using ChainPtr = std::unique_ptr<epi_chain, Deleter<epi_chain, epi_chain_free>>;
using SimPtr = std::unique_ptr<epi_sim, Deleter<epi_sim, epi_sim_free>>;

std::string take(char* s) {
  std::string out = s ? s : "";
  epi_string_free(s);
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) config_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) config_error("cannot write " + path.string());
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::vector<std::string>> split_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (line.back() == ',') fields.emplace_back();
    rows.push_back(std::move(fields));
  }
  return rows;
}

/// Values of the named column of a headed CSV file, in row order.
std::vector<double> read_column(const fs::path& path, const std::string& column) {
  const auto rows = split_csv(read_file(path));
  if (rows.empty()) throw CliError{kParse, path.string() + ": empty file"};
  std::size_t col = rows[0].size();
  for (std::size_t i = 0; i < rows[0].size(); ++i) {
    if (rows[0][i] == column) col = i;
  }
  if (col == rows[0].size()) throw CliError{kParse, path.string() + ": no column '" + column + "'"};
  std::vector<double> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (col >= rows[r].size()) throw CliError{kParse, path.string() + ": short row " + std::to_string(r + 1)};
    try {
      std::size_t used = 0;
      out.push_back(std::stod(rows[r][col], &used));
      if (used != rows[r][col].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw CliError{kParse, path.string() + ": bad number '" + rows[r][col] + "' in row " +
                                 std::to_string(r + 1)};
    }
  }
  return out;
}

// ---- configuration ----

const char* const kPathKeys[] = {"prevalence", "tree", "tip_dates", "slices"};

json load_config(const std::optional<std::string>& path) {
  if (!path) return json::object();
  json cfg;
  try {
    cfg = json::parse(read_file(*path));
  } catch (const json::parse_error& e) {
    throw CliError{kParse, *path + ": " + e.what()};
  }
  if (!cfg.is_object()) config_error(*path + ": configuration must be a JSON object");
  const fs::path base = fs::absolute(fs::path(*path)).parent_path();
  for (const char* key : kPathKeys) {
    if (cfg.contains(key) && cfg[key].is_string()) {
      fs::path p(cfg[key].get<std::string>());
      if (p.is_relative()) cfg[key] = (base / p).lexically_normal().string();
    }
  }
  if (cfg.contains("output_dir") && cfg["output_dir"].is_string()) {
    fs::path p(cfg["output_dir"].get<std::string>());
    if (p.is_relative()) cfg["output_dir"] = (base / p).lexically_normal().string();
  }
  return cfg;
}

template <typename T>
void overlay(json& cfg, const char* key, const std::optional<T>& value) {
  if (value) cfg[key] = *value;
}

void overlay(json& cfg, const char* a, const char* b, const std::optional<double>& value) {
  if (value) cfg[a][b] = *value;
}

template <typename T>
T get_or(const json& cfg, const char* key, T fallback) {
  if (!cfg.contains(key) || cfg[key].is_null()) return fallback;
  try {
    return cfg[key].get<T>();
  } catch (const json::exception&) {
    config_error(std::string("configuration key '") + key + "' has the wrong type");
  }
}

template <typename T>
T get_or(const json& cfg, const char* outer, const char* key, T fallback) {
  if (!cfg.contains(outer)) return fallback;
  if (!cfg[outer].is_object()) config_error(std::string("configuration key '") + outer + "' must be an object");
  return get_or<T>(cfg[outer], key, fallback);
}

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (v && *v) return std::string(v);
  return std::nullopt;
}

/// Flag, then environment, then config file, then the fallback.
std::string resolve_output_dir(json& cfg, const std::optional<std::string>& flag,
                               const std::string& fallback) {
  std::string out = fallback;
  if (cfg.contains("output_dir")) out = get_or<std::string>(cfg, "output_dir", fallback);
  if (auto e = env("EPIPMMH_OUT_DIR")) out = *e;
  if (flag) out = *flag;
  cfg["output_dir"] = out;
  return out;
}

std::size_t resolve_threads(json& cfg, const std::optional<std::size_t>& flag) {
  std::size_t threads = get_or<std::size_t>(cfg, "threads", 1);
  if (auto e = env("EPIPMMH_THREADS")) {
    try {
      threads = static_cast<std::size_t>(std::stoul(*e));
    } catch (const std::exception&) {
      config_error("EPIPMMH_THREADS must be a positive integer");
    }
  }
  if (flag) threads = *flag;
  if (threads == 0) config_error("threads must be at least 1");
  cfg["threads"] = threads;
  return threads;
}

std::uint64_t resolve_seed(json& cfg) {
  if (cfg.contains("seed") && !cfg["seed"].is_null()) return get_or<std::uint64_t>(cfg, "seed", 0);
  std::random_device rd;
  const std::uint64_t seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  cfg["seed"] = seed;
  return seed;
}

struct DataFlags {
  std::optional<std::string> config, prevalence, tree, tip_dates, slices, time_unit, out;
  std::optional<double> gamma, most_recent_tip_time, present, day_length;
  std::optional<std::size_t> n_days, threads;

  void add(CLI::App* app) {
    app->add_option("-c,--config", config, "JSON configuration file");
    app->add_option("--prevalence", prevalence, "Prevalence CSV with header day,observed");
    app->add_option("--tree", tree, "Newick tree with branch lengths in time units");
    app->add_option("--tip-dates", tip_dates, "CSV of leaf label,time overriding branch-length dating");
    app->add_option("--slices", slices, "Precomputed slices CSV (days_from_present,a,c)");
    app->add_option("--most-recent-tip-time", most_recent_tip_time, "Time of the latest leaf");
    app->add_option("--present", present, "Time of the end of the last day");
    app->add_option("--day-length", day_length, "Length of one day in tree time units");
    app->add_option("--n-days", n_days, "Number of days; 0 takes the longest data source");
    app->add_option("--gamma", gamma, "Removal rate per day");
    app->add_option("--time-unit", time_unit, "Label of the time unit (day, year, ...)");
    app->add_option("--threads", threads, "Worker threads (env EPIPMMH_THREADS)");
    app->add_option("-o,--out", out, "Output directory (env EPIPMMH_OUT_DIR)");
  }

  json resolve() const {
    json cfg = load_config(config);
    overlay(cfg, "prevalence", prevalence);
    overlay(cfg, "tree", tree);
    overlay(cfg, "tip_dates", tip_dates);
    overlay(cfg, "slices", slices);
    overlay(cfg, "most_recent_tip_time", most_recent_tip_time);
    overlay(cfg, "present", present);
    overlay(cfg, "day_length", day_length);
    overlay(cfg, "n_days", n_days);
    overlay(cfg, "gamma", gamma);
    overlay(cfg, "time_unit", time_unit);
    if (!cfg.contains("time_unit")) cfg["time_unit"] = "day";
    return cfg;
  }
};

struct LoadedProblem {
  ProblemPtr problem;
  json info;
};

/// Reads the data sources named in `cfg` and builds the inference problem.
/// Fills in the resolved tree placement.
LoadedProblem load_problem(json& cfg) {
  const double gamma = get_or<double>(cfg, "gamma", std::nan(""));
  if (!(gamma > 0.0)) config_error("gamma must be given and positive");
  const auto prevalence = get_or<std::string>(cfg, "prevalence", "");
  const auto tree_path = get_or<std::string>(cfg, "tree", "");
  const auto slices_path = get_or<std::string>(cfg, "slices", "");
  if (prevalence.empty() && tree_path.empty() && slices_path.empty()) {
    config_error("no data: give a prevalence CSV, a tree or a slices CSV");
  }
  json info;
  SlicesPtr slices;
  if (!slices_path.empty()) {
    epi_slices* s = nullptr;
    check(epi_slices_parse_csv(read_file(slices_path).c_str(), &s), slices_path);
    slices.reset(s);
  } else if (!tree_path.empty()) {
    const double day_length = get_or<double>(cfg, "day_length", 1.0);
    std::optional<double> present;
    if (cfg.contains("present")) present = get_or<double>(cfg, "present", 0.0);
    const double mrtt = get_or<double>(cfg, "most_recent_tip_time", present.value_or(0.0));
    epi_tree* t = nullptr;
    check(epi_tree_parse_newick(read_file(tree_path).c_str(), mrtt, &t), tree_path);
    TreePtr tree(t);
    const auto tip_dates = get_or<std::string>(cfg, "tip_dates", "");
    if (!tip_dates.empty()) {
      epi_tree* dated = nullptr;
      check(epi_tree_apply_tip_dates(tree.get(), read_file(tip_dates).c_str(), &dated), tip_dates);
      tree.reset(dated);
    }
    const double resolved_present = present.value_or(epi_tree_latest_time(tree.get()));
    cfg["most_recent_tip_time"] = epi_tree_latest_time(tree.get());
    cfg["present"] = resolved_present;
    cfg["day_length"] = day_length;
    epi_slices* s = nullptr;
    check(epi_tree_discretize(tree.get(), day_length, resolved_present, &s), tree_path);
    slices.reset(s);
    info["leaves"] = epi_tree_leaf_count(tree.get());
  }
  std::string prevalence_text;
  if (!prevalence.empty()) prevalence_text = read_file(prevalence);
  epi_problem* p = nullptr;
  std::size_t truncated = 0;
  check(epi_problem_create(gamma, prevalence.empty() ? nullptr : prevalence_text.c_str(),
                           slices.get(), get_or<std::size_t>(cfg, "n_days", 0), &p, &truncated),
        "building the problem");
  ProblemPtr problem(p);
  cfg["n_days"] = epi_problem_n_days(problem.get());
  if (slices) info["slices"] = epi_slices_count(slices.get());
  info["truncated_slices"] = truncated;
  if (truncated > 0) {
    std::cerr << "warning: " << truncated
              << " tree slice(s) older than day 1 carried lineages and were dropped\n";
  }
  return {std::move(problem), info};
}

epi_smc_options smc_options(json& cfg, std::size_t threads) {
  epi_smc_options o = epi_smc_options_default();
  if (cfg.contains("particles") && cfg["particles"].is_number_integer()) {
    o.particles = cfg["particles"].get<std::size_t>();
  }
  o.ess_threshold = get_or<double>(cfg, "ess_threshold", o.ess_threshold);
  const auto resampling = get_or<std::string>(cfg, "resampling", "systematic");
  if (resampling != "systematic" && resampling != "multinomial") {
    config_error("resampling must be systematic or multinomial");
  }
  o.multinomial = resampling == "multinomial";
  o.threads = threads;
  cfg["ess_threshold"] = o.ess_threshold;
  cfg["resampling"] = resampling;
  return o;
}

epi_theta theta_from(json& cfg, const char* key, epi_theta fallback) {
  epi_theta t{get_or<double>(cfg, key, "sigma", fallback.sigma),
              get_or<double>(cfg, key, "rho", fallback.rho),
              get_or<std::int64_t>(cfg, key, "x0", fallback.x0)};
  cfg[key] = {{"sigma", t.sigma}, {"rho", t.rho}, {"x0", t.x0}};
  return t;
}

epi_prior prior_from(json& cfg) {
  epi_prior p = epi_prior_default();
  p.sigma_rate = get_or<double>(cfg, "prior", "sigma_rate", p.sigma_rate);
  p.x0_r = get_or<double>(cfg, "prior", "x0_r", p.x0_r);
  p.x0_p = get_or<double>(cfg, "prior", "x0_p", p.x0_p);
  cfg["prior"] = {{"sigma_rate", p.sigma_rate}, {"x0_r", p.x0_r}, {"x0_p", p.x0_p}};
  return p;
}

epi_chain_config chain_from(json& cfg, std::uint64_t seed) {
  epi_chain_config c = epi_chain_config_default();
  c.iterations = get_or<std::size_t>(cfg, "iterations", c.iterations);
  c.init = theta_from(cfg, "init", c.init);
  c.target_acceptance = get_or<double>(cfg, "target_acceptance", c.target_acceptance);
  c.adaptation_decay = get_or<double>(cfg, "adaptation_decay", c.adaptation_decay);
  c.initial_scale = get_or<double>(cfg, "initial_scale", c.initial_scale);
  c.store_paths = get_or<bool>(cfg, "store_paths", c.store_paths != 0) ? 1 : 0;
  c.seed = seed;
  cfg["iterations"] = c.iterations;
  cfg["target_acceptance"] = c.target_acceptance;
  cfg["adaptation_decay"] = c.adaptation_decay;
  cfg["initial_scale"] = c.initial_scale;
  cfg["store_paths"] = c.store_paths != 0;
  return c;
}

struct TuneFlags {
  std::optional<std::size_t> pilot_iterations, k_large, k_s, replicates, floor, cap, repeats;

  void add(CLI::App* app) {
    app->add_option("--pilot-iterations", pilot_iterations, "Pilot chain length");
    app->add_option("--k-large", k_large, "Particles of the pilot chain");
    app->add_option("--k-s", k_s, "Particles of the variance probes");
    app->add_option("--replicates", replicates, "Variance probes per repeat");
    app->add_option("--floor", floor, "Smallest particle count returned");
    app->add_option("--cap", cap, "Largest particle count returned");
    app->add_option("--repeats", repeats, "Independent repeats; the maximum is used");
  }

  void apply(json& cfg) const {
    json& t = cfg["tune"];
    if (!t.is_object()) t = json::object();
    overlay(t, "pilot_iterations", pilot_iterations);
    overlay(t, "k_large", k_large);
    overlay(t, "k_s", k_s);
    overlay(t, "replicates", replicates);
    overlay(t, "floor", floor);
    overlay(t, "cap", cap);
    overlay(t, "repeats", repeats);
  }
};

epi_tune_spec tune_from(json& cfg, std::uint64_t seed) {
  epi_tune_spec s = epi_tune_spec_default();
  s.pilot_iterations = get_or<std::size_t>(cfg, "tune", "pilot_iterations", s.pilot_iterations);
  s.k_large = get_or<std::size_t>(cfg, "tune", "k_large", s.k_large);
  s.k_s = get_or<std::size_t>(cfg, "tune", "k_s", s.k_s);
  s.replicates = get_or<std::size_t>(cfg, "tune", "replicates", s.replicates);
  s.floor = get_or<std::size_t>(cfg, "tune", "floor", s.floor);
  s.cap = get_or<std::size_t>(cfg, "tune", "cap", s.cap);
  s.repeats = get_or<std::size_t>(cfg, "tune", "repeats", s.repeats);
  s.seed = get_or<std::uint64_t>(cfg, "tune", "seed", seed);
  cfg["tune"] = {{"pilot_iterations", s.pilot_iterations}, {"k_large", s.k_large},
                 {"k_s", s.k_s}, {"replicates", s.replicates},
                 {"floor", s.floor}, {"cap", s.cap},
                 {"repeats", s.repeats}, {"seed", s.seed}};
  return s;
}

// ---- manifests ----

struct Run {
  std::string subcommand;
  std::vector<std::string> argv;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  std::vector<std::string> outputs;

  json manifest(const json& config) const {
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json m;
    m["tool"] = "epipmmh";
    m["version"] = epi_version();
    m["subcommand"] = subcommand;
    m["argv"] = argv;
    m["config"] = config;
    if (config.contains("seed")) m["seed"] = config["seed"];
    m["wall_time_seconds"] = wall;
    m["outputs"] = outputs;
    return m;
  }

  void write(const fs::path& dir, const std::string& name, const std::string& text) {
    write_file(dir / name, text);
    outputs.push_back(name);
  }
};

std::atomic<bool> g_interrupted{false};

extern "C" void on_sigint(int) { g_interrupted = true; }

// ---- subcommands ----

struct SimulateFlags {
  std::optional<std::string> scenario, preset, out;
  std::optional<std::size_t> n_days;
  std::optional<double> rho, genetic_fraction, gamma;
  std::optional<std::int64_t> x0;
  std::optional<std::uint64_t> seed;
  std::size_t pmmh_iterations = 20000;
  std::string pmmh_particles = "1000";
};

json preset_scenario(const std::string& name) {
  if (name == "peaked") {
    return {{"n_days", 40}, {"beta", {{"kind", "peaked"}, {"low", 0.1}, {"high", 0.3}}},
            {"gamma", 0.1}, {"x0", 5}, {"rho", 0.05}, {"genetic_sampling_fraction", 0.05}};
  }
  if (name == "constant") {
    return {{"n_days", 40}, {"beta", {{"kind", "constant"}, {"level", 0.3}}},
            {"gamma", 0.1}, {"x0", 5}, {"rho", 0.05}, {"genetic_sampling_fraction", 0.0}};
  }
  config_error("unknown preset '" + name + "' (peaked or constant)");
}

int cmd_simulate(const SimulateFlags& f, Run& run) {
  json scenario;
  if (f.scenario) {
    try {
      scenario = json::parse(read_file(*f.scenario));
    } catch (const json::parse_error& e) {
      throw CliError{kParse, *f.scenario + ": " + e.what()};
    }
    if (f.preset) config_error("give either --scenario or --preset");
  } else {
    scenario = preset_scenario(f.preset.value_or("peaked"));
  }
  overlay(scenario, "n_days", f.n_days);
  overlay(scenario, "rho", f.rho);
  overlay(scenario, "genetic_sampling_fraction", f.genetic_fraction);
  overlay(scenario, "gamma", f.gamma);
  overlay(scenario, "x0", f.x0);

  json cfg;
  cfg["scenario"] = scenario;
  if (f.seed) cfg["seed"] = *f.seed;
  const std::uint64_t seed = resolve_seed(cfg);
  const fs::path out = resolve_output_dir(cfg, f.out, "simulation");

  epi_sim* s = nullptr;
  check(epi_simulate(scenario.dump().c_str(), seed, &s), "simulate");
  SimPtr sim(s);
  const std::size_t n_days = epi_sim_n_days(sim.get());

  char* text = nullptr;
  check(epi_sim_prevalence_csv(sim.get(), &text), "simulate");
  run.write(out, "prevalence.csv", take(text));
  check(epi_sim_observed_csv(sim.get(), &text), "simulate");
  run.write(out, "observed.csv", take(text));
  check(epi_sim_newick(sim.get(), &text), "simulate");
  const std::string newick = take(text);
  run.write(out, "tree.nwk", newick);
  epi_slices* sl = nullptr;
  check(epi_sim_slices(sim.get(), &sl), "simulate");
  SlicesPtr slices(sl);
  check(epi_slices_to_csv(slices.get(), &text), "simulate");
  run.write(out, "slices.csv", take(text));

  std::vector<double> beta(n_days);
  check(epi_sim_true_beta(sim.get(), beta.data(), beta.size()), "simulate");
  check(epi_sim_manifest_json(sim.get(), &text), "simulate");
  const json sim_info = json::parse(take(text));
  const double gamma = sim_info["spec"]["gamma"].get<double>();
  std::string truth = "day,beta,rt\n";
  for (std::size_t n = 0; n < n_days; ++n) {
    truth += std::to_string(n + 1) + "," + format_number(beta[n]) + "," +
             format_number(beta[n] / gamma) + "\n";
  }
  run.write(out, "truth.csv", truth);

  json pmmh;
  pmmh["prevalence"] = "observed.csv";
  if (!newick.empty()) {
    pmmh["tree"] = "tree.nwk";
    pmmh["most_recent_tip_time"] = epi_sim_most_recent_tip_time(sim.get());
    pmmh["present"] = static_cast<double>(n_days);
    pmmh["day_length"] = 1.0;
  }
  pmmh["n_days"] = n_days;
  pmmh["gamma"] = gamma;
  pmmh["time_unit"] = "day";
  if (f.pmmh_particles == "auto") {
    pmmh["particles"] = "auto";
  } else {
    try {
      pmmh["particles"] = std::stoul(f.pmmh_particles);
    } catch (const std::exception&) {
      config_error("--pmmh-particles must be an integer or 'auto'");
    }
  }
  pmmh["iterations"] = f.pmmh_iterations;
  pmmh["seed"] = seed;
  pmmh["output_dir"] = "pmmh";
  run.write(out, "pmmh_config.json", dump(pmmh));

  json m = run.manifest(cfg);
  m["simulation"] = sim_info;
  write_file(out / "manifest.json", dump(m));
  std::cout << "simulated " << n_days << " days, " << sim_info["leaves"] << " leaves -> "
            << out.string() << "\n";
  return kOk;
}

struct DiscretizeFlags {
  std::string tree;
  std::optional<std::string> tip_dates, out;
  double most_recent_tip_time = 0.0;
  std::optional<double> present;
  double day_length = 1.0;
};

int cmd_discretize(const DiscretizeFlags& f, Run& run) {
  json cfg;
  cfg["tree"] = f.tree;
  const fs::path out = resolve_output_dir(cfg, f.out, "slices");
  epi_tree* t = nullptr;
  check(epi_tree_parse_newick(read_file(f.tree).c_str(), f.most_recent_tip_time, &t), f.tree);
  TreePtr tree(t);
  if (f.tip_dates) {
    epi_tree* dated = nullptr;
    check(epi_tree_apply_tip_dates(tree.get(), read_file(*f.tip_dates).c_str(), &dated), *f.tip_dates);
    tree.reset(dated);
    cfg["tip_dates"] = *f.tip_dates;
  }
  const double present = f.present.value_or(epi_tree_latest_time(tree.get()));
  cfg["most_recent_tip_time"] = epi_tree_latest_time(tree.get());
  cfg["present"] = present;
  cfg["day_length"] = f.day_length;
  epi_slices* s = nullptr;
  check(epi_tree_discretize(tree.get(), f.day_length, present, &s), f.tree);
  SlicesPtr slices(s);
  char* text = nullptr;
  check(epi_slices_to_csv(slices.get(), &text), "discretize");
  const std::string csv = take(text);
  run.write(out, "slices.csv", csv);
  json m = run.manifest(cfg);
  m["leaves"] = epi_tree_leaf_count(tree.get());
  m["slices"] = epi_slices_count(slices.get());
  write_file(out / "manifest.json", dump(m));
  std::cout << csv;
  return kOk;
}

struct SmcFlags {
  DataFlags data;
  std::optional<double> sigma, rho, ess_threshold;
  std::optional<std::int64_t> x0, x_max;
  std::optional<std::size_t> particles;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> resampling, fixed_beta;
  bool path = false;
};

int cmd_smc(const SmcFlags& f, Run& run) {
  json cfg = f.data.resolve();
  overlay(cfg, "theta", "sigma", f.sigma);
  overlay(cfg, "theta", "rho", f.rho);
  if (f.x0) cfg["theta"]["x0"] = *f.x0;
  overlay(cfg, "particles", f.particles);
  overlay(cfg, "seed", f.seed);
  overlay(cfg, "ess_threshold", f.ess_threshold);
  overlay(cfg, "resampling", f.resampling);
  overlay(cfg, "fixed_beta", f.fixed_beta);
  overlay(cfg, "x_max", f.x_max);
  const std::uint64_t seed = resolve_seed(cfg);
  const std::size_t threads = resolve_threads(cfg, f.data.threads);
  const fs::path out = resolve_output_dir(cfg, f.data.out, "smc");
  LoadedProblem lp = load_problem(cfg);
  if (cfg.contains("particles") && !cfg["particles"].is_number_integer()) {
    config_error("smc needs an integer particle count");
  }
  const epi_smc_options options = smc_options(cfg, threads);
  cfg["particles"] = options.particles;
  const epi_theta theta = theta_from(cfg, "theta", epi_chain_config_default().init);
  const auto fixed = get_or<std::string>(cfg, "fixed_beta", "");
  if (!fixed.empty()) {
    const std::vector<double> beta = read_column(fixed, "beta");
    check(epi_problem_set_fixed_beta(lp.problem.get(), beta.data(), beta.size()), fixed);
  }
  if (cfg.contains("x_max")) {
    check(epi_problem_set_x_max(lp.problem.get(), get_or<std::int64_t>(cfg, "x_max", -1)), "x_max");
  }

  double log_lik = 0.0;
  int degenerate = 0;
  char* path = nullptr;
  check(epi_smc_run(lp.problem.get(), theta, &options, seed, &log_lik, &degenerate,
                    f.path ? &path : nullptr),
        "smc");
  json result{{"log_likelihood", std::isfinite(log_lik) ? json(log_lik) : json(nullptr)},
              {"degenerate", degenerate != 0}};
  run.write(out, "smc.json", dump(result));
  if (path) run.write(out, "path.csv", take(path));
  json m = run.manifest(cfg);
  m["data"] = lp.info;
  m["result"] = result;
  write_file(out / "manifest.json", dump(m));
  std::cout << "log_likelihood " << format_number(log_lik) << "\n";
  return degenerate ? kDegenerate : kOk;
}

struct TuneCmdFlags {
  DataFlags data;
  TuneFlags tune;
  std::optional<std::uint64_t> seed;
};

int cmd_tune(const TuneCmdFlags& f, Run& run) {
  json cfg = f.data.resolve();
  f.tune.apply(cfg);
  overlay(cfg, "seed", f.seed);
  const std::uint64_t seed = resolve_seed(cfg);
  const std::size_t threads = resolve_threads(cfg, f.data.threads);
  const fs::path out = resolve_output_dir(cfg, f.data.out, "tune");
  LoadedProblem lp = load_problem(cfg);
  const epi_smc_options options = smc_options(cfg, threads);
  const epi_prior prior = prior_from(cfg);
  const epi_chain_config pilot = chain_from(cfg, seed);
  const epi_tune_spec spec = tune_from(cfg, seed);
  std::size_t k_opt = 0;
  char* report = nullptr;
  check(epi_tune_run(lp.problem.get(), &spec, &pilot, &options, &prior, &k_opt, &report), "tune");
  const std::string report_text = take(report);
  run.write(out, "tune_report.json", report_text);
  json m = run.manifest(cfg);
  m["data"] = lp.info;
  m["k_opt"] = k_opt;
  write_file(out / "manifest.json", dump(m));
  std::cout << "k_opt " << k_opt << "\n";
  return kOk;
}

struct PmmhFlags {
  DataFlags data;
  TuneFlags tune;
  std::optional<std::string> particles;
  std::optional<std::size_t> iterations;
  std::optional<std::uint64_t> seed;
  bool no_paths = false;
  bool quiet = false;
};

struct Progress {
  bool quiet;
  std::size_t every;
};

extern "C" int report_progress(size_t iteration, size_t total, double acceptance, void* user) {
  const auto* p = static_cast<const Progress*>(user);
  if (!p->quiet && (iteration + 1) % p->every == 0) {
    std::cerr << "iteration " << iteration + 1 << "/" << total << " acceptance "
              << format_number(std::round(acceptance * 1000.0) / 1000.0) << "\n";
  }
  return g_interrupted ? 1 : 0;
}

int cmd_pmmh(const PmmhFlags& f, Run& run) {
  json cfg = f.data.resolve();
  f.tune.apply(cfg);
  if (f.particles) {
    if (*f.particles == "auto") {
      cfg["particles"] = "auto";
    } else {
      try {
        cfg["particles"] = std::stoul(*f.particles);
      } catch (const std::exception&) {
        config_error("--particles must be an integer or 'auto'");
      }
    }
  }
  overlay(cfg, "iterations", f.iterations);
  overlay(cfg, "seed", f.seed);
  if (f.no_paths) cfg["store_paths"] = false;
  const std::uint64_t seed = resolve_seed(cfg);
  const std::size_t threads = resolve_threads(cfg, f.data.threads);
  const fs::path out = resolve_output_dir(cfg, f.data.out, "pmmh");
  LoadedProblem lp = load_problem(cfg);
  const bool auto_particles = cfg.contains("particles") && cfg["particles"].is_string();
  if (auto_particles && cfg["particles"].get<std::string>() != "auto") {
    config_error("particles must be an integer or \"auto\"");
  }
  epi_smc_options options = smc_options(cfg, threads);
  const epi_prior prior = prior_from(cfg);
  const epi_chain_config chain = chain_from(cfg, seed);

  json m_extra = json::object();
  if (auto_particles) {
    const epi_tune_spec spec = tune_from(cfg, seed);
    std::size_t k_opt = 0;
    char* report = nullptr;
    check(epi_tune_run(lp.problem.get(), &spec, &chain, &options, &prior, &k_opt, &report), "tune");
    const std::string report_text = take(report);
    run.write(out, "tune_report.json", report_text);
    options.particles = k_opt;
    m_extra["k_opt"] = k_opt;
    m_extra["tune_report"] = json::parse(report_text);
  } else {
    cfg["particles"] = options.particles;
  }

  Progress progress{f.quiet, std::max<std::size_t>(1, chain.iterations / 20)};
  g_interrupted = false;
  std::signal(SIGINT, on_sigint);
  epi_chain* c = nullptr;
  check(epi_pmmh_run(lp.problem.get(), &chain, &options, &prior, report_progress, &progress, &c),
        "pmmh");
  std::signal(SIGINT, SIG_DFL);
  ChainPtr result(c);
  check(epi_chain_write_traces(result.get(), out.string().c_str()), "writing traces");
  run.outputs.insert(run.outputs.end(), {"theta_trace.csv", "beta_trace.csv", "x_trace.csv"});

  const std::size_t done = epi_chain_size(result.get());
  json m = run.manifest(cfg);
  m["data"] = lp.info;
  m["particles"] = options.particles;
  m["iterations_completed"] = done;
  m["interrupted"] = done < chain.iterations;
  m["acceptance_rate"] = epi_chain_acceptance_rate(result.get(), 0);
  m["acceptance_rate_second_half"] = epi_chain_acceptance_rate(result.get(), done / 2);
  m["estimator_calls"] = epi_chain_estimator_calls(result.get());
  m.update(m_extra);
  write_file(out / "manifest.json", dump(m));
  std::cout << "acceptance " << format_number(m["acceptance_rate"].get<double>()) << " -> "
            << out.string() << "\n";
  return done < chain.iterations ? kInterrupted : kOk;
}

struct SummarizeFlags {
  std::vector<std::string> runs;
  std::optional<double> gamma;
  double burn_in = 0.1;
  std::optional<std::string> truth, out;
};

int cmd_summarize(const SummarizeFlags& f, Run& run) {
  json cfg;
  cfg["runs"] = f.runs;
  cfg["burn_in"] = f.burn_in;
  double gamma = f.gamma.value_or(std::nan(""));
  if (!f.gamma) {
    const fs::path manifest = fs::path(f.runs.front()) / "manifest.json";
    if (fs::exists(manifest)) {
      try {
        gamma = json::parse(read_file(manifest)).at("config").at("gamma").get<double>();
      } catch (const json::exception&) {
      }
    }
  }
  if (!(gamma > 0.0)) config_error("gamma must be given or recorded in the run manifest");
  cfg["gamma"] = gamma;
  const fs::path out = resolve_output_dir(cfg, f.out, (fs::path(f.runs.front()) / "summary").string());

  std::vector<ChainPtr> chains;
  std::vector<const epi_chain*> raw;
  for (const auto& dir : f.runs) {
    epi_chain* c = nullptr;
    check(epi_chain_read_traces(dir.c_str(), &c), dir);
    chains.emplace_back(c);
    raw.push_back(c);
  }
  epi_chain* p = nullptr;
  check(epi_chain_pool(raw.data(), raw.size(), f.burn_in, &p), "pooling chains");
  ChainPtr pooled(p);

  std::vector<double> truth;
  if (f.truth) {
    truth = read_column(*f.truth, "beta");
    cfg["truth"] = *f.truth;
  }
  char* summary = nullptr;
  char* rt = nullptr;
  check(epi_summarize(pooled.get(), gamma, 0.0, f.truth ? truth.data() : nullptr, truth.size(),
                      &summary, &rt),
        "summarize");
  json s = json::parse(take(summary));
  s["chains"] = f.runs.size();
  s["burn_in_fraction"] = f.burn_in;
  run.write(out, "summary.json", dump(s));
  run.write(out, "rt_summary.csv", take(rt));
  std::string prevalence = "day,mean,lo,hi\n";
  const json& x = s["x"];
  for (std::size_t n = 0; n < x.size(); ++n) {
    prevalence += std::to_string(n + 1) + "," + format_number(x[n]["mean"].get<double>()) + "," +
                  format_number(x[n]["lo"].get<double>()) + "," +
                  format_number(x[n]["hi"].get<double>()) + "\n";
  }
  run.write(out, "prevalence_summary.csv", prevalence);
  write_file(out / "manifest.json", dump(run.manifest(cfg)));
  if (s.contains("score")) std::cout << "score " << s["score"].dump() << "\n";
  std::cout << "summary -> " << out.string() << "\n";
  return kOk;
}

// ---- machine-readable help ----

json describe(const CLI::App* app) {
  json j;
  j["name"] = app->get_name();
  j["description"] = app->get_description();
  json options = json::array();
  for (const CLI::Option* opt : app->get_options()) {
    json o;
    o["names"] = json::array();
    for (const auto& s : opt->get_snames()) o["names"].push_back("-" + s);
    for (const auto& l : opt->get_lnames()) o["names"].push_back("--" + l);
    if (opt->get_positional()) o["positional"] = opt->get_name();
    o["description"] = opt->get_description();
    o["flag"] = opt->get_items_expected_max() == 0;
    o["required"] = opt->get_required();
    o["multiple"] = opt->get_items_expected_max() > 1;
    if (!opt->get_default_str().empty()) o["default"] = opt->get_default_str();
    options.push_back(o);
  }
  j["options"] = options;
  json subs = json::array();
  for (const CLI::App* sub : app->get_subcommands({})) {
    subs.push_back(describe(sub));
  }
  if (!subs.empty()) j["subcommands"] = subs;
  return j;
}

json exit_codes() {
  return {{"0", "success"},
          {"1", "numerical or internal failure"},
          {"2", "usage, configuration or file error"},
          {"3", "parse error in an input file"},
          {"4", "infeasible simulation scenario"},
          {"5", "degenerate likelihood at the initial parameters"},
          {"6", "particle-count tuning failed"},
          {"130", "interrupted; partial traces written"}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian inference of time-varying reproduction numbers from prevalence "
               "counts and dated phylogenies by particle marginal Metropolis-Hastings",
               "epipmmh"};
  app.set_version_flag("--version", std::string("epipmmh ") + epi_version());
  bool help_json = false;
  app.add_flag("--help-json", help_json, "Print a JSON description of all commands and exit");
  app.require_subcommand(0, 1);

  Run run;
  for (int i = 0; i < argc; ++i) run.argv.emplace_back(argv[i]);

  SimulateFlags sim;
  auto* c_sim = app.add_subcommand("simulate", "Simulate an epidemic, its observations and a dated tree");
  c_sim->add_option("--scenario", sim.scenario, "Scenario JSON file");
  c_sim->add_option("--preset", sim.preset, "Built-in scenario: peaked (default) or constant");
  c_sim->add_option("--n-days", sim.n_days, "Number of days");
  c_sim->add_option("--rho", sim.rho, "Reporting probability");
  c_sim->add_option("--genetic-fraction", sim.genetic_fraction, "Probability a new infection is sequenced");
  c_sim->add_option("--gamma", sim.gamma, "Removal rate per day");
  c_sim->add_option("--x0", sim.x0, "Initial prevalence");
  c_sim->add_option("--seed", sim.seed, "Random seed (generated and recorded if absent)");
  c_sim->add_option("--pmmh-iterations", sim.pmmh_iterations, "Iterations written to pmmh_config.json")
      ->capture_default_str();
  c_sim->add_option("--pmmh-particles", sim.pmmh_particles, "Particles written to pmmh_config.json")
      ->capture_default_str();
  c_sim->add_option("-o,--out", sim.out, "Output directory (env EPIPMMH_OUT_DIR)");

  DiscretizeFlags disc;
  auto* c_disc = app.add_subcommand("discretize", "Cut a dated tree into daily lineage and coalescence counts");
  c_disc->add_option("--tree", disc.tree, "Newick tree")->required();
  c_disc->add_option("--tip-dates", disc.tip_dates, "CSV of leaf label,time");
  c_disc->add_option("--most-recent-tip-time", disc.most_recent_tip_time, "Time of the latest leaf")
      ->capture_default_str();
  c_disc->add_option("--present", disc.present, "End of the last day (default: latest leaf)");
  c_disc->add_option("--day-length", disc.day_length, "Slice width")->capture_default_str();
  c_disc->add_option("-o,--out", disc.out, "Output directory (env EPIPMMH_OUT_DIR)");

  SmcFlags smc;
  auto* c_smc = app.add_subcommand("smc", "Run the particle filter once at fixed parameters");
  smc.data.add(c_smc);
  c_smc->add_option("--sigma", smc.sigma, "Random-walk scale of the birth rate");
  c_smc->add_option("--rho", smc.rho, "Reporting probability");
  c_smc->add_option("--x0", smc.x0, "Initial prevalence");
  c_smc->add_option("-K,--particles", smc.particles, "Number of particles");
  c_smc->add_option("--seed", smc.seed, "Random seed");
  c_smc->add_option("--ess-threshold", smc.ess_threshold, "Resample when ESS falls below this fraction of K");
  c_smc->add_option("--resampling", smc.resampling, "systematic or multinomial");
  c_smc->add_option("--fixed-beta", smc.fixed_beta, "CSV with a beta column: fix the birth rates");
  c_smc->add_option("--x-max", smc.x_max, "Truncate prevalence at this value");
  c_smc->add_flag("--path", smc.path, "Also write one sampled trajectory to path.csv");

  TuneCmdFlags tune;
  auto* c_tune = app.add_subcommand("tune", "Choose the particle count from the log-likelihood variance");
  tune.data.add(c_tune);
  tune.tune.add(c_tune);
  c_tune->add_option("--seed", tune.seed, "Random seed");

  PmmhFlags pmmh;
  auto* c_pmmh = app.add_subcommand("pmmh", "Run the particle marginal Metropolis-Hastings sampler");
  pmmh.data.add(c_pmmh);
  pmmh.tune.add(c_pmmh);
  c_pmmh->add_option("-K,--particles", pmmh.particles, "Number of particles or 'auto'");
  c_pmmh->add_option("-n,--iterations", pmmh.iterations, "Chain length");
  c_pmmh->add_option("--seed", pmmh.seed, "Random seed");
  c_pmmh->add_flag("--no-paths", pmmh.no_paths, "Do not sample or store latent trajectories");
  c_pmmh->add_flag("-q,--quiet", pmmh.quiet, "No progress output");

  SummarizeFlags summ;
  auto* c_summ = app.add_subcommand("summarize", "Posterior summaries from trace files");
  c_summ->add_option("--run", summ.runs, "Run directory holding traces; repeat to pool chains")
      ->required()
      ->expected(1, -1);
  c_summ->add_option("--gamma", summ.gamma, "Removal rate (default: from the run manifest)");
  c_summ->add_option("--burn-in", summ.burn_in, "Fraction discarded from each chain")
      ->capture_default_str();
  c_summ->add_option("--truth", summ.truth, "CSV with the true beta column for scoring");
  c_summ->add_option("-o,--out", summ.out, "Output directory (default RUN/summary)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (help_json) {
      // fall through
    } else {
      const int rc = app.exit(e);
      return rc == 0 ? kOk : kConfig;
    }
  }
  if (help_json) {
    json j = describe(&app);
    j["version"] = epi_version();
    j["exit_codes"] = exit_codes();
    j["environment"] = {{"EPIPMMH_OUT_DIR", "output directory when --out is not given"},
                        {"EPIPMMH_THREADS", "worker threads when --threads is not given"}};
    std::cout << dump(j);
    return kOk;
  }

  try {
    if (c_sim->parsed()) {
      run.subcommand = "simulate";
      return cmd_simulate(sim, run);
    }
    if (c_disc->parsed()) {
      run.subcommand = "discretize";
      return cmd_discretize(disc, run);
    }
    if (c_smc->parsed()) {
      run.subcommand = "smc";
      return cmd_smc(smc, run);
    }
    if (c_tune->parsed()) {
      run.subcommand = "tune";
      return cmd_tune(tune, run);
    }
    if (c_pmmh->parsed()) {
      run.subcommand = "pmmh";
      return cmd_pmmh(pmmh, run);
    }
    if (c_summ->parsed()) {
      run.subcommand = "summarize";
      return cmd_summarize(summ, run);
    }
    std::cerr << app.help();
    return kConfig;
  } catch (const CliError& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}
