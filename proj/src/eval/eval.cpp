#include "pltts/eval/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace pltts::eval {

namespace {

double euclidean(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return std::sqrt(s);
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

AlignmentPath dtw_align(const Matrix& a, const Matrix& b) {
  if (a.rows == 0 || b.rows == 0) throw std::invalid_argument("dtw_align: both sequences need at least one frame");
  if (a.cols != b.cols)
    throw std::invalid_argument("dtw_align: feature dimension " + std::to_string(a.cols) + " vs " +
                                std::to_string(b.cols));
  const std::size_t tx = a.rows, ty = b.rows;
  constexpr double inf = std::numeric_limits<double>::infinity();
  Matrix acc(tx, ty, inf);
  for (std::size_t i = 0; i < tx; ++i) {
    for (std::size_t j = 0; j < ty; ++j) {
      const double d = euclidean(a.row(i), b.row(j));
      if (i == 0 && j == 0) {
        acc(i, j) = d;
        continue;
      }
      double best = inf;
      if (i > 0 && j > 0) best = acc(i - 1, j - 1);
      if (i > 0) best = std::min(best, acc(i - 1, j));
      if (j > 0) best = std::min(best, acc(i, j - 1));
      acc(i, j) = best + d;
    }
  }

  AlignmentPath path;
  path.cost = acc(tx - 1, ty - 1);
  std::size_t i = tx - 1, j = ty - 1;
  path.steps.emplace_back(i, j);
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const double diag = acc(i - 1, j - 1), up = acc(i - 1, j), left = acc(i, j - 1);
      if (diag <= up && diag <= left) {
        --i;
        --j;
      } else if (up <= left) {
        --i;
      } else {
        --j;
      }
    } else if (i > 0) {
      --i;
    } else {
      --j;
    }
    path.steps.emplace_back(i, j);
  }
  std::reverse(path.steps.begin(), path.steps.end());
  return path;
}

void validate_path(const AlignmentPath& path, std::size_t tx, std::size_t ty) {
  if (path.steps.empty()) throw std::invalid_argument("alignment path is empty");
  if (path.steps.front() != std::pair<std::size_t, std::size_t>{0, 0})
    throw std::invalid_argument("alignment path does not start at (0,0)");
  if (path.steps.back() != std::pair<std::size_t, std::size_t>{tx - 1, ty - 1})
    throw std::invalid_argument("alignment path does not end at (" + std::to_string(tx - 1) + "," +
                                std::to_string(ty - 1) + ")");
  for (std::size_t t = 1; t < path.steps.size(); ++t) {
    const auto [px, py] = path.steps[t - 1];
    const auto [x, y] = path.steps[t];
    if (x < px || y < py || x - px > 1 || y - py > 1 || (x == px && y == py))
      throw std::invalid_argument("alignment path has an illegal move at step " + std::to_string(t));
  }
}

double mcd(const Matrix& reference, const Matrix& synthesized, const AlignmentPath& path) {
  if (path.steps.empty()) throw std::invalid_argument("mcd: empty alignment path");
  if (reference.cols != synthesized.cols)
    throw std::invalid_argument("mcd: channel count " + std::to_string(reference.cols) + " vs " +
                                std::to_string(synthesized.cols));
  const double inv_n = 1.0 / static_cast<double>(reference.cols);
  double total = 0.0;
  for (const auto& [x, y] : path.steps) {
    if (x >= reference.rows || y >= synthesized.rows) throw std::out_of_range("mcd: path leaves the feature grid");
    total += kMcdConstant * inv_n * euclidean(reference.row(x), synthesized.row(y));
  }
  return total / static_cast<double>(path.steps.size());
}

F0Error f0_rmse(const std::vector<double>& reference, const std::vector<double>& synthesized,
                const AlignmentPath& path) {
  F0Error out;
  double sq = 0.0;
  for (const auto& [x, y] : path.steps) {
    if (x >= reference.size() || y >= synthesized.size()) continue;
    if (reference[x] <= 0.0 || synthesized[y] <= 0.0) continue;
    const double d = reference[x] - synthesized[y];
    sq += d * d;
    ++out.voiced_pairs;
  }
  if (out.voiced_pairs > 0) out.rmse_hz = std::sqrt(sq / static_cast<double>(out.voiced_pairs));
  return out;
}

double frame_disturbance(const AlignmentPath& path) {
  if (path.steps.empty()) return 0.0;
  double sq = 0.0;
  for (const auto& [x, y] : path.steps) {
    const double d = static_cast<double>(x) - static_cast<double>(y);
    sq += d * d;
  }
  return std::sqrt(sq / static_cast<double>(path.steps.size()));
}

ClusterReport style_cluster_report(const std::vector<StyleGroup>& groups) {
  if (groups.size() < 2) throw std::invalid_argument("style_cluster_report: need at least two groups");
  std::vector<const Matrix*> points;
  std::vector<std::size_t> group_of;
  ClusterReport r;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].members.size() < 2)
      throw std::invalid_argument("style_cluster_report: group '" + groups[g].name + "' has fewer than two members");
    for (std::size_t m = 0; m < groups[g].members.size(); ++m) {
      const Matrix& p = groups[g].members[m];
      if (!points.empty() && p.values.size() != points.front()->values.size())
        throw std::invalid_argument("style_cluster_report: feature sizes differ within the corpus");
      points.push_back(&p);
      group_of.push_back(g);
      r.labels.push_back(groups[g].name + "/" + std::to_string(m));
    }
  }
  const std::size_t n = points.size();
  r.distances = Matrix(n, n);
  double within = 0.0, between = 0.0;
  std::size_t n_within = 0, n_between = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = euclidean(points[i]->values, points[j]->values);
      r.distances(i, j) = r.distances(j, i) = d;
      if (group_of[i] == group_of[j]) {
        within += d;
        ++n_within;
      } else {
        between += d;
        ++n_between;
      }
    }
  }
  r.within = within / static_cast<double>(n_within);
  r.between = between / static_cast<double>(n_between);
  const double scale = std::max(r.within, r.between);
  r.score = scale > 0.0 ? (r.between - r.within) / scale : 0.0;
  return r;
}

void ClusterReport::write_distance_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "member";
  for (const auto& l : labels) out << ',' << l;
  out << '\n';
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << labels[i];
    for (std::size_t j = 0; j < labels.size(); ++j) out << ',' << format_double(distances(i, j));
    out << '\n';
  }
}

PairScore score_pair(const std::string& id, const dsp::Waveform& reference, const dsp::Waveform& synthesized,
                     const EvalConfig& cfg) {
  PairScore s;
  s.id = id;
  try {
    for (const auto* w : {&reference, &synthesized})
      if (w->sample_rate != cfg.mel.sample_rate)
        throw std::invalid_argument("sample rate " + std::to_string(w->sample_rate) + " Hz, expected " +
                                    std::to_string(cfg.mel.sample_rate));
    const auto ref_mel = dsp::mel_spectrogram(reference, cfg.mel);
    const auto syn_mel = dsp::mel_spectrogram(synthesized, cfg.mel);
    const auto path = dtw_align(ref_mel.frames, syn_mel.frames);
    s.reference_frames = ref_mel.frames.rows;
    s.synthesized_frames = syn_mel.frames.rows;
    s.mcd_db = mcd(ref_mel.frames, syn_mel.frames, path);
    s.fd_frames = frame_disturbance(path);
    const auto f0 = f0_rmse(dsp::estimate_f0(reference, cfg.pitch).hz, dsp::estimate_f0(synthesized, cfg.pitch).hz,
                            path);
    s.f0_rmse_hz = f0.rmse_hz;
    s.voiced_pairs = f0.voiced_pairs;
  } catch (const std::exception& e) {
    s.error = e.what();
  }
  return s;
}

EvalReport make_report(std::vector<PairScore> rows, std::string config_hash) {
  std::sort(rows.begin(), rows.end(), [](const PairScore& a, const PairScore& b) { return a.id < b.id; });
  EvalReport r;
  r.config_hash = std::move(config_hash);
  double mcd_sum = 0.0, fd_sum = 0.0, f0_sum = 0.0;
  std::size_t f0_count = 0;
  for (const auto& row : rows) {
    if (!row.ok()) {
      ++r.failed;
      continue;
    }
    ++r.scored;
    mcd_sum += row.mcd_db;
    fd_sum += row.fd_frames;
    r.voiced_pairs += row.voiced_pairs;
    if (row.f0_rmse_hz) {
      f0_sum += *row.f0_rmse_hz;
      ++f0_count;
    }
  }
  if (r.scored > 0) {
    r.mean_mcd_db = mcd_sum / static_cast<double>(r.scored);
    r.mean_fd_frames = fd_sum / static_cast<double>(r.scored);
  }
  if (f0_count > 0) r.mean_f0_rmse_hz = f0_sum / static_cast<double>(f0_count);
  r.rows = std::move(rows);
  return r;
}

nlohmann::json EvalReport::summary_json() const {
  nlohmann::json j;
  j["pairs"] = rows.size();
  j["scored"] = scored;
  j["failed"] = failed;
  j["mcd_db"] = mean_mcd_db;
  j["f0_rmse_hz"] = mean_f0_rmse_hz ? nlohmann::json(*mean_f0_rmse_hz) : nlohmann::json(nullptr);
  j["fd_frames"] = mean_fd_frames;
  j["voiced_pairs"] = voiced_pairs;
  j["config_hash"] = config_hash;
  nlohmann::json errors = nlohmann::json::array();
  for (const auto& row : rows)
    if (!row.ok()) errors.push_back({{"id", row.id}, {"error", row.error}});
  j["errors"] = errors;
  return j;
}

void EvalReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << '\n';
  out << "id,mcd_db,f0_rmse_hz,fd_frames,voiced_pairs\n";
  for (const auto& row : rows) {
    out << row.id << ',';
    if (!row.ok()) {
      out << ",,,0\n";
      continue;
    }
    out << format_double(row.mcd_db) << ',' << (row.f0_rmse_hz ? format_double(*row.f0_rmse_hz) : "nan") << ','
        << format_double(row.fd_frames) << ',' << row.voiced_pairs << '\n';
  }
}

}  // namespace pltts::eval
