#include "pltts/pipeline/commands.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include "pltts/numerics/checkpoint.hpp"
#include "pltts/pipeline/reports.hpp"
#include "pltts/ser/train.hpp"

namespace pltts::pipeline {

namespace fs = std::filesystem;

namespace {

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

void require_file(const fs::path& path, const std::string& what) {
  if (path.empty() || !fs::exists(path)) throw std::runtime_error(what + " '" + path.string() + "' not found");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

int gen_corpus_command(const RunConfig& run, CorpusKind kind, const fs::path& out_dir, bool force) {
  generate_corpus(kind, out_dir, run.seed, run.corpus, force);
  std::cerr << "[gen-synthetic-corpus] " << corpus_kind_name(kind) << " corpus written to " << out_dir.string() << '\n';
  return kExitOk;
}

int train_ser_command(const RunConfig& run, const fs::path& corpus_dir, const fs::path& out_dir) {
  require_file(corpus_dir / "train.csv", "SER manifest");
  require_file(corpus_dir / "holdout.csv", "SER manifest");
  const auto train = load_ser_examples(corpus_dir / "train.csv");
  const auto holdout = load_ser_examples(corpus_dir / "holdout.csv");
  fs::create_directories(out_dir);
  const std::string hash = run.hash();

  auto model = ser::SerModel::create(run.ser, run.seed);
  ser::SerTrainOptions opts;
  opts.steps = run.ser_optim.steps;
  opts.batch = run.ser_optim.batch;
  opts.learning_rate = run.ser_optim.lr;
  opts.beta1 = run.ser_optim.beta1;
  opts.seed = run.seed;
  std::vector<std::pair<double, double>> history;
  opts.on_step = [&](std::int64_t step, double loss, double acc) {
    history.emplace_back(loss, acc);
    if (step % 50 == 0) std::cerr << "[train-ser] step " << step << " loss " << loss << '\n';
  };
  const auto report = ser::train_ser(model, train, holdout, opts);
  model.set_frozen(true);
  model.save(out_dir / "ser.ckpt", {{"config_hash", hash}});

  std::ofstream traj(out_dir / "ser_trajectory.csv", std::ios::binary | std::ios::trunc);
  traj << "# config_hash=" << hash << "\nstep,loss,batch_accuracy\n";
  for (std::size_t i = 0; i < history.size(); ++i)
    traj << i + 1 << ',' << fmt(history[i].first) << ',' << fmt(history[i].second) << '\n';

  write_json(out_dir / "summary.json", {{"config_hash", hash},
                                        {"steps", report.steps},
                                        {"final_loss", report.final_loss},
                                        {"train_accuracy", report.train_accuracy},
                                        {"holdout_accuracy", report.holdout_accuracy},
                                        {"train_utterances", train.size()},
                                        {"holdout_utterances", holdout.size()},
                                        {"train_segments", report.train_segments}});
  std::cerr << "[train-ser] holdout accuracy " << report.holdout_accuracy << '\n';
  return kExitOk;
}

int train_tts_command(const RunConfig& run, const fs::path& corpus_dir, const fs::path& out_dir,
                      const std::optional<fs::path>& resume, const std::optional<std::int64_t>& stop_after) {
  if (run.mode != tts::Mode::Baseline) require_file(run.paths.ser_checkpoint, "SER checkpoint");
  require_file(corpus_dir / "metadata.csv", "TTS manifest");
  if (resume) require_file(*resume, "resume checkpoint");
  const auto data = load_tts_dataset(corpus_dir, false);
  TtsTrainOptions opts;
  opts.out_dir = out_dir;
  opts.resume = resume;
  opts.stop_after = stop_after;
  opts.on_step = [](const TrajectoryRow& r) {
    if (r.step % 50 == 0)
      std::cerr << "[train-tts] step " << r.step << " frame " << r.frame << " style " << r.style << '\n';
  };
  const auto result = train_tts(run, data, opts);
  std::cerr << "[train-tts] frame loss " << result.first_window_frame << " -> " << result.last_window_frame << " ("
            << result.wall_seconds << " s)\n";
  return kExitOk;
}

int synthesize_command(const fs::path& checkpoint, const std::string& text, const fs::path& out_wav,
                       const SynthesisOptions& options) {
  require_file(checkpoint, "checkpoint");
  auto system = load_tts_system(checkpoint);
  const auto out = synthesize(system, text, options);
  if (out_wav.has_parent_path()) fs::create_directories(out_wav.parent_path());
  const std::string tag = "config_hash=" + system.config_hash + " seed=" + std::to_string(options.seed);
  dsp::save_wav(out.wave, out_wav, tag);
  fs::path stem = out_wav;
  stem.replace_extension();
  write_matrix_csv(stem.string() + ".mel.csv", out.log_mel);
  write_matrix_csv(stem.string() + ".attention.csv", out.result.attention);
  const bool hit_limit = out.result.halt == tts::HaltReason::MaxSteps;
  write_json(stem.string() + ".json", {{"config_hash", system.config_hash},
                                       {"text", text},
                                       {"frames", out.log_mel.rows},
                                       {"samples", out.wave.samples.size()},
                                       {"halt", hit_limit ? "max_steps" : "stop_token"},
                                       {"seed", options.seed}});
  if (hit_limit) {
    std::cerr << "[synthesize] warning: decoding reached the step limit (" << out.log_mel.rows << " frames)\n";
    return kExitWarning;
  }
  return kExitOk;
}

int synthesize_manifest_command(const fs::path& checkpoint, const fs::path& manifest, const fs::path& out_dir,
                                const SynthesisOptions& options) {
  require_file(checkpoint, "checkpoint");
  auto system = load_tts_system(checkpoint);
  const auto rows = read_text_manifest(manifest);
  fs::create_directories(out_dir / "wavs");
  std::ofstream pairs(out_dir / "pairs.csv", std::ios::binary | std::ios::trunc);
  pairs << "id,reference_wav,synthesized_wav\n";
  const std::string tag = "config_hash=" + system.config_hash + " seed=" + std::to_string(options.seed);
  int code = kExitOk;
  std::size_t limited = 0;
  for (const auto& row : rows) {
    SynthesisOptions o = options;
    if (system.model.config.mode == tts::Mode::ST) o.reference_wav = row.wav;
    const auto out = synthesize(system, row.normalized, o);
    const fs::path wav = out_dir / "wavs" / (row.id + ".wav");
    dsp::save_wav(out.wave, wav, tag);
    pairs << row.id << ',' << fs::proximate(fs::absolute(row.wav), fs::absolute(out_dir)).generic_string() << ",wavs/"
          << row.id << ".wav\n";
    if (out.result.halt == tts::HaltReason::MaxSteps) {
      ++limited;
      code = kExitWarning;
    }
  }
  if (limited) std::cerr << "[synthesize] warning: " << limited << " utterance(s) reached the step limit\n";
  return code;
}

int extract_style_command(const fs::path& ser_checkpoint, const fs::path& manifest, ser::StyleLevel level,
                          const fs::path& out_dir, double* score_out) {
  require_file(ser_checkpoint, "SER checkpoint");
  auto model = ser::SerModel::load(ser_checkpoint);
  const auto rows = read_labeled_manifest(manifest);
  fs::create_directories(out_dir);
  Checkpoint out;
  out.meta["kind"] = "style";
  out.meta["level"] = ser::style_level_name(level);
  std::vector<std::string> group_order;
  std::map<std::string, std::map<ser::StyleLevel, std::vector<Matrix>>> grouped;
  for (const auto& row : rows) {
    dsp::MelSpectrogram mel = dsp::mel_spectrogram(dsp::load_wav(row.wav));
    for (const auto& f : ser::extract_style(model, mel, level, row.id)) {
      out.add("psi." + ser::style_level_name(f.level) + "." + row.id, f.matrix.to_tensor());
      if (!grouped.count(row.label)) group_order.push_back(row.label);
      grouped[row.label][f.level].push_back(f.matrix);
    }
  }
  out.save(out_dir / "style.ckpt");

  bool clusterable = group_order.size() >= 2;
  for (const auto& g : group_order)
    for (const auto& [lvl, members] : grouped[g]) clusterable = clusterable && members.size() >= 2;
  if (!clusterable) return kExitOk;
  nlohmann::json cluster;
  const std::vector<ser::StyleLevel> levels =
      level == ser::StyleLevel::All
          ? std::vector<ser::StyleLevel>{ser::StyleLevel::Low, ser::StyleLevel::Middle, ser::StyleLevel::High}
          : std::vector<ser::StyleLevel>{level};
  for (auto lvl : levels) {
    std::vector<eval::StyleGroup> groups;
    for (const auto& g : group_order) groups.push_back({g, grouped[g][lvl]});
    const auto report = eval::style_cluster_report(groups);
    const std::string name = ser::style_level_name(lvl);
    report.write_distance_csv(out_dir / (levels.size() > 1 ? "distances_" + name + ".csv" : "distances.csv"));
    cluster[name] = {{"within", report.within}, {"between", report.between}, {"score", report.score}};
    if (score_out && levels.size() == 1) *score_out = report.score;
  }
  write_json(out_dir / "cluster.json", cluster);
  return kExitOk;
}

int evaluate_command(const RunConfig& run, const fs::path& pairs_manifest, const fs::path& out_dir) {
  require_file(pairs_manifest, "pairs manifest");
  const std::size_t workers = run.single_thread ? 1 : std::max(1u, std::thread::hardware_concurrency());
  const auto report = evaluate_pairs(pairs_manifest, run.hash(), workers);
  fs::create_directories(out_dir);
  report.write_csv(out_dir / "pairs_scores.csv");
  write_json(out_dir / "summary.json", report.summary_json());
  std::cerr << "[evaluate] " << report.scored << " scored, " << report.failed << " failed; MCD " << report.mean_mcd_db
            << " dB, FD " << report.mean_fd_frames << '\n';
  return report.failed > 0 ? kExitWarning : kExitOk;
}

int compare_trajectories_command(const std::vector<fs::path>& logs, const fs::path& out_dir) {
  const auto c = compare_trajectories(logs);
  fs::create_directories(out_dir);
  c.write_csv(out_dir / "trajectories.csv");
  write_json(out_dir / "comparison.json", c.summary());
  std::cerr << "[compare-trajectories] lowest final frame loss: " << c.winner << '\n';
  return kExitOk;
}

int summarize_systems_command(const std::vector<std::pair<std::string, fs::path>>& systems, const fs::path& out_dir) {
  if (systems.empty()) throw std::invalid_argument("summarize-systems: no systems given");
  fs::create_directories(out_dir);
  write_system_table(collect_system_scores(systems), out_dir / "systems.csv", out_dir / "systems.md");
  return kExitOk;
}

}  // namespace pltts::pipeline
