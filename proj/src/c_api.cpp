#include "epipmmh.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <optional>
#include <algorithm>
#include <memory>
#include <new>
#include <string>

#include "diagnostics.hpp"
#include "errors.hpp"
#include "io.hpp"
#include "phylo.hpp"
#include "pmmh.hpp"
#include "simulate.hpp"
#include "smc.hpp"
#include "tune.hpp"

struct epi_tree {
  epi::DatedTree tree;
};

struct epi_slices {
  epi::TreeSlices slices;
};

struct epi_problem {
  epi::Problem problem;
};

struct epi_chain {
  epi::ChainOutput chain;
};

struct epi_sim {
  epi::SimOutput out;
  std::uint64_t seed = 0;
};

namespace {

thread_local std::string g_last_error;
thread_local std::int64_t g_last_offset = -1;

// Runs `body`, translating exceptions into status codes.
template <typename F>
epi_status guarded(F&& body) {
  g_last_error.clear();
  g_last_offset = -1;
  try {
    body();
    return EPI_OK;
  } catch (const epi::UnsupportedTopology& e) {
    g_last_error = e.what();
    g_last_offset = static_cast<std::int64_t>(e.offset());
    return EPI_ERR_UNSUPPORTED_TOPOLOGY;
  } catch (const epi::ParseError& e) {
    g_last_error = e.what();
    if (e.offset() != epi::ParseError::npos) g_last_offset = static_cast<std::int64_t>(e.offset());
    return EPI_ERR_PARSE;
  } catch (const epi::InvalidArgument& e) {
    g_last_error = e.what();
    return EPI_ERR_INVALID_ARGUMENT;
  } catch (const epi::DomainError& e) {
    g_last_error = e.what();
    return EPI_ERR_DOMAIN;
  } catch (const epi::IoError& e) {
    g_last_error = e.what();
    return EPI_ERR_IO;
  } catch (const epi::InfeasibleError& e) {
    g_last_error = e.what();
    return EPI_ERR_INFEASIBLE;
  } catch (const epi::DegenerateError& e) {
    g_last_error = e.what();
    return EPI_ERR_DEGENERATE;
  } catch (const epi::TuningFailed& e) {
    g_last_error = e.what();
    return EPI_ERR_TUNING_FAILED;
  } catch (const nlohmann::json::exception& e) {
    g_last_error = e.what();
    return EPI_ERR_PARSE;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return EPI_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return EPI_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return EPI_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw epi::InvalidArgument(what);
}

char* dup_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

epi::Theta to_theta(epi_theta t) { return {t.sigma, t.rho, t.x0}; }

epi::SmcOptions to_options(const epi_smc_options* o) {
  epi::SmcOptions s;
  if (!o) return s;
  s.particles = o->particles;
  s.ess_threshold = o->ess_threshold;
  s.resampling = o->multinomial ? epi::Resampling::multinomial : epi::Resampling::systematic;
  s.threads = o->threads == 0 ? 1 : o->threads;
  return s;
}

epi::PriorConfig to_prior(const epi_prior* p) {
  epi::PriorConfig c;
  if (!p) return c;
  c.sigma_rate = p->sigma_rate;
  c.x0_r = p->x0_r;
  c.x0_p = p->x0_p;
  return c;
}

epi::ChainConfig to_chain_config(const epi_chain_config* c) {
  epi::ChainConfig cfg;
  if (!c) return cfg;
  cfg.iterations = c->iterations;
  cfg.init_theta = to_theta(c->init);
  cfg.target_acceptance = c->target_acceptance;
  cfg.adaptation_decay = c->adaptation_decay;
  cfg.initial_scale = c->initial_scale;
  cfg.seed = c->seed;
  cfg.store_paths = c->store_paths != 0;
  return cfg;
}

epi::TuneSpec to_tune_spec(const epi_tune_spec* s) {
  epi::TuneSpec t;
  if (!s) return t;
  t.pilot_iterations = s->pilot_iterations;
  t.k_large = s->k_large;
  t.k_s = s->k_s;
  t.replicates = s->replicates;
  t.floor = s->floor;
  t.cap = s->cap;
  t.repeats = s->repeats;
  t.seed = s->seed;
  return t;
}

struct StopRequested {};

}  // namespace

extern "C" {

const char* epi_version(void) { return EPIPMMH_VERSION; }
const char* epi_last_error(void) { return g_last_error.c_str(); }
int64_t epi_last_error_offset(void) { return g_last_offset; }
void epi_string_free(char* s) { std::free(s); }

epi_status epi_skellam_log_pmf(int64_t k, double mu1, double mu2, double* out) {
  return guarded([&] {
    require(out != nullptr, "null output");
    require(mu1 >= 0.0 && mu2 >= 0.0, "Skellam rates must be non-negative");
    *out = epi::skellam_log_pmf(k, mu1, mu2);
  });
}

epi_status epi_coal_slice_log_pmf(int64_t a, int64_t c, double beta, int64_t x, double* out) {
  return guarded([&] {
    require(out != nullptr, "null output");
    *out = epi::coal_slice_log_pmf(a, c, beta, x);
  });
}

epi_status epi_tree_parse_newick(const char* text, double most_recent_tip_time, epi_tree** out) {
  return guarded([&] {
    require(text && out, "null argument");
    *out = new epi_tree{epi::parse_newick(text, most_recent_tip_time)};
  });
}

epi_status epi_tree_apply_tip_dates(const epi_tree* tree, const char* csv_text, epi_tree** out) {
  return guarded([&] {
    require(tree && csv_text && out, "null argument");
    *out = new epi_tree{epi::apply_tip_dates(tree->tree, epi::parse_tip_dates_csv(csv_text))};
  });
}

epi_status epi_tree_to_newick(const epi_tree* tree, char** out) {
  return guarded([&] {
    require(tree && out, "null argument");
    *out = dup_string(epi::to_newick(tree->tree));
  });
}

size_t epi_tree_leaf_count(const epi_tree* tree) { return tree ? tree->tree.leaf_count() : 0; }
double epi_tree_latest_time(const epi_tree* tree) {
  return tree && !tree->tree.empty() ? tree->tree.latest_time() : 0.0;
}
void epi_tree_free(epi_tree* tree) { delete tree; }

epi_status epi_tree_discretize(const epi_tree* tree, double day_length, double present,
                               epi_slices** out) {
  return guarded([&] {
    require(tree && out, "null argument");
    *out = new epi_slices{epi::discretize(tree->tree, day_length, present)};
  });
}

epi_status epi_slices_parse_csv(const char* csv_text, epi_slices** out) {
  return guarded([&] {
    require(csv_text && out, "null argument");
    *out = new epi_slices{epi::parse_slices_csv(csv_text)};
  });
}

epi_status epi_slices_to_csv(const epi_slices* slices, char** out) {
  return guarded([&] {
    require(slices && out, "null argument");
    *out = dup_string(epi::slices_to_csv(slices->slices));
  });
}

size_t epi_slices_count(const epi_slices* slices) { return slices ? slices->slices.size() : 0; }

epi_status epi_slices_get(const epi_slices* slices, size_t i, int64_t* a, int64_t* c) {
  return guarded([&] {
    require(slices && a && c, "null argument");
    require(i < slices->slices.size(), "slice index out of range");
    *a = slices->slices.a[i];
    *c = slices->slices.c[i];
  });
}

void epi_slices_free(epi_slices* slices) { delete slices; }

epi_status epi_problem_create(double gamma, const char* prevalence_csv_text,
                              const epi_slices* slices, size_t n_days, epi_problem** out,
                              size_t* truncated) {
  return guarded([&] {
    require(out != nullptr, "null output");
    epi::ObservedSeries observed;
    if (prevalence_csv_text) observed = epi::parse_prevalence_csv(prevalence_csv_text);
    std::size_t days = n_days;
    if (days == 0) days = std::max(observed.size(), slices ? slices->slices.size() : 0);
    std::vector<epi::DayGenetics> genetics;
    std::size_t cut = 0;
    if (slices && days > 0) {
      auto aligned = epi::align_to_epidemic(slices->slices, days);
      genetics = std::move(aligned.days);
      cut = aligned.truncated_slices;
    }
    if (truncated) *truncated = cut;
    *out = new epi_problem{
        epi::Problem::make(epi::FixedRates{gamma}, std::move(observed), std::move(genetics), days)};
  });
}

epi_status epi_problem_set_fixed_beta(epi_problem* problem, const double* beta, size_t n) {
  return guarded([&] {
    require(problem && (beta || n == 0), "null argument");
    epi::Problem p = problem->problem;
    p.fixed_beta.assign(beta, beta + n);
    p.validate();
    problem->problem = std::move(p);
  });
}

epi_status epi_problem_set_x_max(epi_problem* problem, int64_t x_max) {
  return guarded([&] {
    require(problem != nullptr, "null argument");
    problem->problem.x_max = x_max;
  });
}

size_t epi_problem_n_days(const epi_problem* problem) {
  return problem ? problem->problem.n_days() : 0;
}

void epi_problem_free(epi_problem* problem) { delete problem; }

epi_smc_options epi_smc_options_default(void) {
  const epi::SmcOptions d;
  return {d.particles, d.ess_threshold, 0, d.threads};
}

epi_status epi_smc_run(const epi_problem* problem, epi_theta theta,
                       const epi_smc_options* options, uint64_t seed, double* log_lik,
                       int* degenerate, char** path_csv) {
  return guarded([&] {
    require(problem && log_lik, "null argument");
    const epi::Theta t = to_theta(theta);
    const epi::SmcEstimate est = epi::run_smc(t, problem->problem, to_options(options), seed);
    *log_lik = est.log_likelihood;
    if (degenerate) *degenerate = est.degenerate ? 1 : 0;
    if (path_csv) {
      *path_csv = nullptr;
      if (!est.degenerate) {
        epi::Rng rng = epi::Rng::stream(seed, 0, 2);
        *path_csv = dup_string(epi::path_csv(epi::backward_simulate(est.history, t, problem->problem, rng)));
      }
    }
  });
}

epi_prior epi_prior_default(void) {
  const epi::PriorConfig d;
  return {d.sigma_rate, d.x0_r, d.x0_p};
}

epi_chain_config epi_chain_config_default(void) {
  const epi::ChainConfig d;
  return {d.iterations,
          {d.init_theta.sigma, d.init_theta.rho, d.init_theta.x0},
          d.target_acceptance,
          d.adaptation_decay,
          d.initial_scale,
          d.seed,
          d.store_paths ? 1 : 0};
}

epi_status epi_pmmh_run(const epi_problem* problem, const epi_chain_config* config,
                        const epi_smc_options* options, const epi_prior* prior,
                        epi_progress_fn progress, void* user, epi_chain** out) {
  epi::ChainOutput partial;
  bool stopped = false;
  const epi_status st = guarded([&] {
    require(problem && config && out, "null argument");
    const epi::ChainConfig cfg = to_chain_config(config);
    epi::ChainObserver observer;
    if (progress) {
      observer = [&](std::size_t i, const epi::ChainOutput& o) {
        if (progress(i, cfg.iterations, o.acceptance_rate(), user) != 0) {
          partial = o;
          throw StopRequested{};
        }
      };
    }
    try {
      *out = new epi_chain{epi::run_pmmh(cfg, problem->problem, to_options(options), to_prior(prior), observer)};
    } catch (const StopRequested&) {
      stopped = true;
    }
  });
  if (stopped) {
    *out = new epi_chain{std::move(partial)};
  }
  return st;
}

size_t epi_chain_size(const epi_chain* chain) { return chain ? chain->chain.size() : 0; }

double epi_chain_acceptance_rate(const epi_chain* chain, size_t from) {
  return chain ? chain->chain.acceptance_rate(from) : 0.0;
}

size_t epi_chain_estimator_calls(const epi_chain* chain) {
  return chain ? chain->chain.estimator_calls : 0;
}

epi_status epi_chain_write_traces(const epi_chain* chain, const char* dir) {
  return guarded([&] {
    require(chain && dir, "null argument");
    const std::filesystem::path d(dir);
    epi::write_text_file(d / "theta_trace.csv", epi::theta_trace_csv(chain->chain));
    epi::write_text_file(d / "beta_trace.csv", epi::beta_trace_csv(chain->chain));
    epi::write_text_file(d / "x_trace.csv", epi::x_trace_csv(chain->chain));
  });
}

epi_status epi_chain_read_traces(const char* dir, epi_chain** out) {
  return guarded([&] {
    require(dir && out, "null argument");
    const std::filesystem::path d(dir);
    auto optional_file = [](const std::filesystem::path& p) {
      return std::filesystem::exists(p) ? epi::read_text_file(p) : std::string();
    };
    *out = new epi_chain{epi::parse_traces(epi::read_text_file(d / "theta_trace.csv"),
                                           optional_file(d / "beta_trace.csv"),
                                           optional_file(d / "x_trace.csv"))};
  });
}

void epi_chain_free(epi_chain* chain) { delete chain; }

epi_status epi_chain_pool(const epi_chain* const* chains, size_t n, double burn_in_fraction,
                          epi_chain** out) {
  return guarded([&] {
    require(chains && n > 0 && out, "null argument");
    require(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0, "burn-in fraction must be in [0, 1)");
    epi::ChainOutput pooled;
    pooled.n_days = chains[0]->chain.n_days;
    for (size_t c = 0; c < n; ++c) {
      require(chains[c] != nullptr, "null chain");
      const epi::ChainOutput& s = chains[c]->chain;
      require(s.n_days == pooled.n_days, "chains cover different numbers of days");
      const bool paths = !s.beta.empty();
      require(paths == !chains[0]->chain.beta.empty(), "chains disagree on stored paths");
      const auto burn = static_cast<std::size_t>(burn_in_fraction * static_cast<double>(s.size()));
      for (std::size_t i = burn; i < s.size(); ++i) {
        pooled.sigma.push_back(s.sigma[i]);
        pooled.rho.push_back(s.rho[i]);
        pooled.x0.push_back(s.x0[i]);
        pooled.log_lik.push_back(s.log_lik[i]);
        pooled.accepted.push_back(s.accepted[i]);
        if (paths) {
          const auto row = static_cast<std::ptrdiff_t>(i * s.n_days);
          const auto len = static_cast<std::ptrdiff_t>(s.n_days);
          pooled.beta.insert(pooled.beta.end(), s.beta.begin() + row, s.beta.begin() + row + len);
          pooled.x.insert(pooled.x.end(), s.x.begin() + row, s.x.begin() + row + len);
        }
      }
      pooled.estimator_calls += s.estimator_calls;
      pooled.jitter_events += s.jitter_events;
    }
    *out = new epi_chain{std::move(pooled)};
  });
}

epi_status epi_summarize(const epi_chain* chain, double gamma, double burn_in_fraction,
                         const double* true_beta, size_t n_true, char** summary_json,
                         char** rt_csv) {
  return guarded([&] {
    require(chain != nullptr, "null argument");
    const epi::PosteriorSummary s = epi::summarize(chain->chain, {gamma}, burn_in_fraction);
    if (summary_json) {
      nlohmann::ordered_json j = epi::to_json(s);
      j["health"] = epi::to_json(epi::chain_health(chain->chain));
      if (true_beta) {
        j["score"] = epi::to_json(
            epi::score_vs_truth(s, std::vector<double>(true_beta, true_beta + n_true)));
      }
      *summary_json = dup_string(j.dump(2) + "\n");
    }
    if (rt_csv) *rt_csv = dup_string(epi::rt_summary_csv(s));
  });
}

epi_tune_spec epi_tune_spec_default(void) {
  const epi::TuneSpec d;
  return {d.pilot_iterations, d.k_large, d.k_s, d.replicates, d.floor, d.cap, d.repeats, d.seed};
}

epi_status epi_tune_run(const epi_problem* problem, const epi_tune_spec* spec,
                        const epi_chain_config* pilot, const epi_smc_options* options,
                        const epi_prior* prior, size_t* k_opt, char** report_json) {
  return guarded([&] {
    require(problem && k_opt, "null argument");
    const epi::TuneReport r =
        epi::choose_particles(to_tune_spec(spec), problem->problem, to_chain_config(pilot),
                              to_options(options), to_prior(prior));
    *k_opt = r.k_opt;
    if (report_json) *report_json = dup_string(epi::to_json(r).dump(2) + "\n");
  });
}

epi_status epi_tune_from_variances(const epi_tune_spec* spec, const double* variances, size_t n,
                                   size_t* k_opt, double* k_raw_max) {
  return guarded([&] {
    require(spec && (variances || n == 0) && k_opt, "null argument");
    std::vector<std::optional<double>> v;
    for (size_t i = 0; i < n; ++i) {
      if (std::isnan(variances[i])) {
        v.emplace_back();
      } else {
        v.emplace_back(variances[i]);
      }
    }
    const epi::TuneReport r = epi::choose_particles_from_variances(to_tune_spec(spec), v);
    *k_opt = r.k_opt;
    if (k_raw_max) *k_raw_max = r.k_raw_max;
  });
}

epi_status epi_simulate(const char* scenario_json, uint64_t seed, epi_sim** out) {
  return guarded([&] {
    require(scenario_json && out, "null argument");
    const epi::ScenarioSpec spec = epi::scenario_from_json(nlohmann::json::parse(scenario_json));
    *out = new epi_sim{epi::run_scenario(spec, seed), seed};
  });
}

epi_status epi_sim_prevalence_csv(const epi_sim* sim, char** out) {
  return guarded([&] {
    require(sim && out, "null argument");
    *out = dup_string(epi::simulation_prevalence_csv(sim->out.epidemic.path, sim->out.observed));
  });
}

epi_status epi_sim_observed_csv(const epi_sim* sim, char** out) {
  return guarded([&] {
    require(sim && out, "null argument");
    std::string s = "day,observed\n";
    const auto& y = sim->out.observed.y;
    for (std::size_t n = 1; n <= y.size(); ++n) {
      s += std::to_string(n) + ",";
      if (y[n - 1]) s += std::to_string(*y[n - 1]);
      s += "\n";
    }
    *out = dup_string(s);
  });
}

epi_status epi_sim_newick(const epi_sim* sim, char** out) {
  return guarded([&] {
    require(sim && out, "null argument");
    const auto& tree = sim->out.tree.tree;
    *out = dup_string(tree.empty() ? std::string() : epi::to_newick(tree) + "\n");
  });
}

epi_status epi_sim_slices(const epi_sim* sim, epi_slices** out) {
  return guarded([&] {
    require(sim && out, "null argument");
    *out = new epi_slices{sim->out.slices};
  });
}

epi_status epi_sim_manifest_json(const epi_sim* sim, char** out) {
  return guarded([&] {
    require(sim && out, "null argument");
    const auto& o = sim->out;
    nlohmann::ordered_json j;
    j["spec"] = epi::to_json(o.spec);
    j["seed"] = sim->seed;
    j["attempts"] = o.attempts;
    j["extinct"] = o.epidemic.extinct;
    j["forced_root"] = o.tree.forced_root;
    j["leaves"] = o.tree.tree.leaf_count();
    j["most_recent_tip_time"] = o.tree.most_recent_tip_time;
    j["present"] = static_cast<double>(o.spec.n_days);
    j["true_beta"] = o.true_beta;
    *out = dup_string(j.dump(2) + "\n");
  });
}

size_t epi_sim_n_days(const epi_sim* sim) { return sim ? sim->out.spec.n_days : 0; }

double epi_sim_most_recent_tip_time(const epi_sim* sim) {
  return sim ? sim->out.tree.most_recent_tip_time : 0.0;
}

epi_status epi_sim_true_beta(const epi_sim* sim, double* out, size_t n) {
  return guarded([&] {
    require(sim && out, "null argument");
    require(n == sim->out.true_beta.size(), "output length must equal the number of days");
    std::copy(sim->out.true_beta.begin(), sim->out.true_beta.end(), out);
  });
}

void epi_sim_free(epi_sim* sim) { delete sim; }

}  // extern "C"
