#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pltts/eval/eval.hpp"
#include "pltts/pipeline/tts_train.hpp"

namespace pltts::pipeline {

struct TrajectoryRun {
  std::string label;  // mode name, with the level appended when two runs share a mode
  tts::Mode mode = tts::Mode::Baseline;
  ser::StyleLevel level = ser::StyleLevel::Low;
  std::vector<TrajectoryRow> rows;
};

struct TrajectoryComparison {
  std::vector<TrajectoryRun> runs;
  std::vector<std::int64_t> grid;            // steps of the first run
  std::vector<std::vector<double>> frame;    // [run][grid index], interpolated
  std::vector<double> final_window;          // mean frame loss over the last 10 grid points
  std::string winner;                        // label with the lowest final window
  nlohmann::json summary() const;
  /// step, one frame column per run, then <label>_minus_<first> columns.
  void write_csv(const std::filesystem::path& path) const;
};

/// Aligns frame-loss trajectories on the first log's step grid, linearly
/// interpolating the others.
TrajectoryComparison compare_trajectories(const std::vector<std::filesystem::path>& logs);

/// Pairs manifest `id,reference_wav,synthesized_wav`; relative paths resolve
/// against the manifest directory. Unreadable pairs become error rows.
eval::EvalReport evaluate_pairs(const std::filesystem::path& manifest, const std::string& config_hash,
                                std::size_t workers = 1);

struct SystemScores {
  std::string system;
  double mcd_db = 0.0;
  std::optional<double> f0_rmse_hz;
  double fd_frames = 0.0;
};

/// Reads `evaluate` summary JSONs into Table-I rows.
std::vector<SystemScores> collect_system_scores(
    const std::vector<std::pair<std::string, std::filesystem::path>>& summaries);

/// systems × {MCD, RMSE, FD} as CSV and as a markdown table.
void write_system_table(const std::vector<SystemScores>& rows, const std::filesystem::path& csv,
                        const std::filesystem::path& markdown);

}  // namespace pltts::pipeline
