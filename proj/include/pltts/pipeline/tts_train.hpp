#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pltts/dsp/features.hpp"
#include "pltts/numerics/adam.hpp"
#include "pltts/pipeline/config.hpp"
#include "pltts/pipeline/corpus.hpp"
#include "pltts/ser/ser.hpp"
#include "pltts/tts/model.hpp"

namespace pltts::pipeline {

/// A trained acoustic model with everything synthesis needs. ST systems
/// carry their fine-tuned reference encoder.
struct TtsSystem {
  tts::TtsModel model;
  dsp::NormStats stats;
  std::optional<ser::SerModel> reference_encoder;
  std::string config_hash;
  std::int64_t step = 0;
};

/// Writes model, stats, optional reference encoder and, when given, the
/// optimizer state for resuming.
void save_tts_checkpoint(const std::filesystem::path& path, TtsSystem& system, const RunConfig& run,
                         const Adam* optimizer = nullptr);
TtsSystem load_tts_system(const std::filesystem::path& path);

struct TrajectoryRow {
  std::int64_t step = 0;
  tts::Mode mode = tts::Mode::Baseline;
  ser::StyleLevel level = ser::StyleLevel::Low;
  double frame = 0.0;
  double style = 0.0;
  double stop = 0.0;
  double total = 0.0;
  double lr = 0.0;
};

inline constexpr const char* kTrajectoryHeader = "step,mode,level,frame,style,stop,total,lr";

void write_trajectory(const std::filesystem::path& path, const std::vector<TrajectoryRow>& rows,
                      const std::string& config_hash);
std::vector<TrajectoryRow> read_trajectory(const std::filesystem::path& path);

struct TtsTrainOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume;  // checkpoint to continue from
  std::optional<std::int64_t> stop_after;       // end early at this step (total schedule unchanged)
  std::function<void(const TrajectoryRow&)> on_step;
};

struct TtsTrainResult {
  std::vector<TrajectoryRow> trajectory;
  std::filesystem::path final_checkpoint;
  double first_window_frame = 0.0;  // mean frame loss of the first 10 steps
  double last_window_frame = 0.0;   // mean frame loss of the last 10 steps
  double wall_seconds = 0.0;
};

/// Stage II. PL and ST need `run.paths.ser_checkpoint`; it is checked before
/// any step runs. Writes trajectory.csv, summary.json, timing.json,
/// norm_stats.json and checkpoints under `options.out_dir`.
TtsTrainResult train_tts(const RunConfig& run, const TtsDataset& train, const TtsTrainOptions& options);

}  // namespace pltts::pipeline
