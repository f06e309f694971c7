#include "pltts/pipeline/reports.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>
#include <thread>

namespace pltts::pipeline {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v, const char* spec = "%.17g") {
  char buf[40];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

double interpolate(const std::vector<TrajectoryRow>& rows, std::int64_t step) {
  if (step <= rows.front().step) return rows.front().frame;
  if (step >= rows.back().step) return rows.back().frame;
  const auto hi = std::lower_bound(rows.begin(), rows.end(), step,
                                   [](const TrajectoryRow& r, std::int64_t s) { return r.step < s; });
  if (hi->step == step) return hi->frame;
  const auto lo = hi - 1;
  const double w = static_cast<double>(step - lo->step) / static_cast<double>(hi->step - lo->step);
  return lo->frame + w * (hi->frame - lo->frame);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

TrajectoryComparison compare_trajectories(const std::vector<fs::path>& logs) {
  if (logs.size() < 2) throw std::invalid_argument("compare-trajectories: need at least two logs");
  TrajectoryComparison c;
  std::map<std::string, int> mode_count;
  for (const auto& path : logs) {
    TrajectoryRun run;
    run.rows = read_trajectory(path);
    if (run.rows.empty()) throw std::runtime_error("compare-trajectories: '" + path.string() + "' has no rows");
    std::sort(run.rows.begin(), run.rows.end(), [](const auto& a, const auto& b) { return a.step < b.step; });
    run.mode = run.rows.front().mode;
    run.level = run.rows.front().level;
    ++mode_count[tts::mode_name(run.mode)];
    c.runs.push_back(std::move(run));
  }
  std::map<std::string, int> seen;
  for (auto& run : c.runs) {
    run.label = tts::mode_name(run.mode);
    if (mode_count[run.label] > 1) {
      if (run.mode != tts::Mode::Baseline) run.label += "(" + ser::style_level_name(run.level) + ")";
      const int n = ++seen[run.label];
      if (n > 1) run.label += "#" + std::to_string(n);
    }
  }
  for (const auto& r : c.runs.front().rows) c.grid.push_back(r.step);
  for (const auto& run : c.runs) {
    std::vector<double> col;
    for (auto step : c.grid) col.push_back(interpolate(run.rows, step));
    const std::size_t n = std::min<std::size_t>(10, col.size());
    double s = 0.0;
    for (std::size_t i = col.size() - n; i < col.size(); ++i) s += col[i];
    c.final_window.push_back(s / static_cast<double>(n));
    c.frame.push_back(std::move(col));
  }
  const auto best = std::min_element(c.final_window.begin(), c.final_window.end()) - c.final_window.begin();
  c.winner = c.runs[static_cast<std::size_t>(best)].label;
  return c;
}

nlohmann::json TrajectoryComparison::summary() const {
  nlohmann::json j;
  j["grid_points"] = grid.size();
  j["final_window_points"] = std::min<std::size_t>(10, grid.size());
  nlohmann::json runs_json = nlohmann::json::array();
  const TrajectoryRun* baseline = nullptr;
  const TrajectoryRun* pl = nullptr;
  double baseline_final = 0.0, pl_final = 0.0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    runs_json.push_back({{"label", runs[i].label},
                         {"mode", tts::mode_name(runs[i].mode)},
                         {"style_level", ser::style_level_name(runs[i].level)},
                         {"steps", runs[i].rows.back().step},
                         {"final_window_frame", final_window[i]}});
    if (runs[i].mode == tts::Mode::Baseline && !baseline) {
      baseline = &runs[i];
      baseline_final = final_window[i];
    }
    if (runs[i].mode == tts::Mode::PL && !pl) {
      pl = &runs[i];
      pl_final = final_window[i];
    }
  }
  j["runs"] = runs_json;
  j["winner"] = winner;
  if (baseline && pl) {
    j["pl_vs_baseline"] = {{"pl", pl->label},
                           {"pl_final_window_frame", pl_final},
                           {"baseline_final_window_frame", baseline_final},
                           {"pl_lower", pl_final < baseline_final},
                           {"note", "reported only; the expected ordering (PL below baseline) is not asserted"}};
  }
  return j;
}

void TrajectoryComparison::write_csv(const fs::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "step";
  for (const auto& r : runs) out << ',' << r.label;
  for (std::size_t i = 1; i < runs.size(); ++i) out << ',' << runs[i].label << "_minus_" << runs[0].label;
  out << '\n';
  for (std::size_t g = 0; g < grid.size(); ++g) {
    out << grid[g];
    for (const auto& col : frame) out << ',' << fmt(col[g]);
    for (std::size_t i = 1; i < runs.size(); ++i) out << ',' << fmt(frame[i][g] - frame[0][g]);
    out << '\n';
  }
}

eval::EvalReport evaluate_pairs(const fs::path& manifest, const std::string& config_hash, std::size_t workers) {
  std::ifstream in(manifest);
  if (!in) throw std::runtime_error("cannot read pairs manifest '" + manifest.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != "id,reference_wav,synthesized_wav")
    throw std::runtime_error(manifest.string() + ": expected header id,reference_wav,synthesized_wav");
  struct Pair {
    std::string id;
    fs::path reference, synthesized;
    std::string error;
  };
  std::vector<Pair> pairs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    Pair p;
    p.id = f[0];
    if (f.size() != 3) {
      p.error = "expected 3 fields";
    } else {
      p.reference = f[1];
      p.synthesized = f[2];
      if (p.reference.is_relative()) p.reference = manifest.parent_path() / p.reference;
      if (p.synthesized.is_relative()) p.synthesized = manifest.parent_path() / p.synthesized;
    }
    pairs.push_back(std::move(p));
  }

  std::vector<eval::PairScore> rows(pairs.size());
  auto score = [&](std::size_t i) {
    const Pair& p = pairs[i];
    if (!p.error.empty()) {
      rows[i].id = p.id;
      rows[i].error = p.error;
      return;
    }
    try {
      rows[i] = eval::score_pair(p.id, dsp::load_wav(p.reference), dsp::load_wav(p.synthesized));
    } catch (const std::exception& e) {
      rows[i] = eval::PairScore{};
      rows[i].id = p.id;
      rows[i].error = e.what();
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, pairs.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < pairs.size(); ++i) score(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < pairs.size(); i += workers) score(i);
      });
    for (auto& t : pool) t.join();
  }
  return eval::make_report(std::move(rows), config_hash);
}

std::vector<SystemScores> collect_system_scores(const std::vector<std::pair<std::string, fs::path>>& summaries) {
  std::vector<SystemScores> out;
  for (const auto& [name, path] : summaries) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read evaluation summary '" + path.string() + "'");
    const auto j = nlohmann::json::parse(in);
    SystemScores s;
    s.system = name;
    s.mcd_db = j.at("mcd_db").get<double>();
    if (!j.at("f0_rmse_hz").is_null()) s.f0_rmse_hz = j.at("f0_rmse_hz").get<double>();
    s.fd_frames = j.at("fd_frames").get<double>();
    out.push_back(s);
  }
  return out;
}

void write_system_table(const std::vector<SystemScores>& rows, const fs::path& csv, const fs::path& markdown) {
  std::ofstream c(csv, std::ios::binary | std::ios::trunc);
  std::ofstream m(markdown, std::ios::binary | std::ios::trunc);
  if (!c || !m) throw std::runtime_error("cannot write system table");
  c << "system,mcd_db,f0_rmse_hz,fd_frames\n";
  m << "| System | MCD [dB] | RMSE [Hz] | FD [frame] |\n|---|---|---|---|\n";
  for (const auto& r : rows) {
    c << r.system << ',' << fmt(r.mcd_db) << ',' << (r.f0_rmse_hz ? fmt(*r.f0_rmse_hz) : "nan") << ','
      << fmt(r.fd_frames) << '\n';
    m << "| " << r.system << " | " << fmt(r.mcd_db, "%.2f") << " | "
      << (r.f0_rmse_hz ? fmt(*r.f0_rmse_hz, "%.2f") : "n/a") << " | " << fmt(r.fd_frames, "%.2f") << " |\n";
  }
}

}  // namespace pltts::pipeline
