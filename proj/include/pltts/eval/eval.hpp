#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pltts/dsp/audio.hpp"
#include "pltts/dsp/features.hpp"
#include "pltts/dsp/pitch.hpp"
#include "pltts/numerics/matrix.hpp"

namespace pltts::eval {

/// Monotone alignment between a reference (x) and a synthesized (y) sequence.
struct AlignmentPath {
  std::vector<std::pair<std::size_t, std::size_t>> steps;
  double cost = 0.0;

  std::size_t size() const { return steps.size(); }
};

/// Three-move DTW summing Euclidean frame distances along the path. Ties in
/// the backtrack prefer the diagonal, then (1,0), then (0,1).
AlignmentPath dtw_align(const Matrix& a, const Matrix& b);

/// Throws unless the path starts at (0,0), ends at (tx-1, ty-1) and only
/// uses the three allowed moves.
void validate_path(const AlignmentPath& path, std::size_t tx, std::size_t ty);

/// (10√2/ln10) · (1/N) · sqrt(Σ_k (y_k − ŷ_k)²) per aligned pair, averaged
/// over the path steps.
double mcd(const Matrix& reference, const Matrix& synthesized, const AlignmentPath& path);

inline constexpr double kMcdConstant = 6.141851463713754;  // 10·√2 / ln 10

struct F0Error {
  std::optional<double> rmse_hz;  // empty when no aligned pair is voiced on both sides
  std::size_t voiced_pairs = 0;
};

/// RMSE over aligned pairs where both frames are voiced (F0 > 0).
F0Error f0_rmse(const std::vector<double>& reference, const std::vector<double>& synthesized,
                const AlignmentPath& path);

/// sqrt of the mean squared (x − y) index offset along the path.
double frame_disturbance(const AlignmentPath& path);

struct StyleGroup {
  std::string name;
  std::vector<Matrix> members;
};

struct ClusterReport {
  double within = 0.0;   // mean pairwise L2 inside groups
  double between = 0.0;  // mean pairwise L2 across groups
  double score = 0.0;    // (between − within) / max(between, within)
  std::vector<std::string> labels;
  Matrix distances;

  void write_distance_csv(const std::filesystem::path& path) const;
};

ClusterReport style_cluster_report(const std::vector<StyleGroup>& groups);

struct PairScore {
  std::string id;
  double mcd_db = 0.0;
  std::optional<double> f0_rmse_hz;
  double fd_frames = 0.0;
  std::size_t voiced_pairs = 0;
  std::size_t reference_frames = 0;
  std::size_t synthesized_frames = 0;
  std::string error;  // non-empty when the pair could not be scored

  bool ok() const { return error.empty(); }
};

struct EvalConfig {
  dsp::MelConfig mel;
  dsp::PitchConfig pitch;
};

/// Mel features, F0 and one DTW path on the mel frames, reused by all metrics.
PairScore score_pair(const std::string& id, const dsp::Waveform& reference, const dsp::Waveform& synthesized,
                     const EvalConfig& cfg = {});

struct EvalReport {
  std::vector<PairScore> rows;  // sorted by id
  double mean_mcd_db = 0.0;
  std::optional<double> mean_f0_rmse_hz;
  double mean_fd_frames = 0.0;
  std::size_t scored = 0;
  std::size_t failed = 0;
  std::size_t voiced_pairs = 0;
  std::string config_hash;

  nlohmann::json summary_json() const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Sorts rows by id and recomputes the corpus means over the scored rows.
EvalReport make_report(std::vector<PairScore> rows, std::string config_hash = {});

}  // namespace pltts::eval
