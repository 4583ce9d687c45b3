#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "diagnostics.hpp"
#include "phylo.hpp"
#include "pmmh.hpp"
#include "simulate.hpp"
#include "tune.hpp"

namespace epi {

std::string read_text_file(const std::filesystem::path& path);
/// Creates parent directories. Throws IoError.
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

/// Splits CSV text into rows of fields. Double-quoted fields may contain
/// commas; blank lines are skipped. Throws ParseError.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

/// `day,observed` rows, days possibly sparse; absent days and empty values
/// become missing. Throws ParseError on duplicates, negatives or bad numbers.
ObservedSeries parse_prevalence_csv(std::string_view text);
ObservedSeries read_prevalence_csv(const std::filesystem::path& path);

/// Two columns label,time; a header row is optional.
std::vector<std::pair<std::string, double>> parse_tip_dates_csv(std::string_view text);

std::string slices_to_csv(const TreeSlices& slices);
TreeSlices parse_slices_csv(std::string_view text);

/// `day,true_x,observed_y` for days 0..N (day 0 has no observation).
std::string simulation_prevalence_csv(const LatentPath& path, const ObservedSeries& observed);

/// `day,beta,x` for days 1..N.
std::string path_csv(const LatentPath& path);

std::string theta_trace_csv(const ChainOutput& chain);
std::string beta_trace_csv(const ChainOutput& chain);
std::string x_trace_csv(const ChainOutput& chain);

/// Rebuilds a chain from trace files. Path traces are optional (empty text).
ChainOutput parse_traces(std::string_view theta_csv, std::string_view beta_csv,
                         std::string_view x_csv);

/// `day,mean,lo,hi` of R_t.
std::string rt_summary_csv(const PosteriorSummary& summary);

nlohmann::ordered_json to_json(const IntervalSummary& s);
nlohmann::ordered_json to_json(const PosteriorSummary& s);
nlohmann::ordered_json to_json(const ChainHealth& h);
nlohmann::ordered_json to_json(const Score& s);
nlohmann::ordered_json to_json(const TuneReport& r);
nlohmann::ordered_json to_json(const ScenarioSpec& s);

/// Inverse of to_json(ScenarioSpec); absent keys keep their defaults.
/// Throws InvalidArgument on unknown schedule kinds or wrong types.
ScenarioSpec scenario_from_json(const nlohmann::json& j);

}  // namespace epi
