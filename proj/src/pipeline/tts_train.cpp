#include "pltts/pipeline/tts_train.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "pltts/loss/loss.hpp"
#include "pltts/numerics/checkpoint.hpp"
#include "pltts/numerics/rng.hpp"

namespace pltts::pipeline {

namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kBatchStream = 10;
constexpr std::uint32_t kDropoutStream = 100;
constexpr std::uint32_t kInitStream = 50;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string checkpoint_name(std::int64_t step) {
  std::string digits = std::to_string(step);
  if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
  return "step_" + digits + ".ckpt";
}

nlohmann::json run_json_without_paths(const RunConfig& run) {
  auto j = run.to_json();
  j.erase("paths");
  return j;
}

std::vector<std::size_t> draw_batch(std::uint64_t seed, std::int64_t step, std::size_t n, std::size_t batch) {
  std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(step), kBatchStream));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  batch = std::min(batch, n);
  for (std::size_t i = 0; i < batch; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  order.resize(batch);
  return order;
}

Tensor accumulate(const Tensor& acc, const Tensor& term) { return acc.defined() ? add(acc, term) : term; }

// Per-utterance terms averaged over the batch; frame and style stay separate
// so the breakdown keeps total = frame + style.
loss::LossBreakdown batch_loss(TtsSystem& system, ser::SerModel* ser_model, const RunConfig& run,
                               const TtsDataset& data, const std::vector<std::size_t>& batch, std::int64_t step) {
  Tensor pre, post, stop, style;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const TtsItem& item = data.items[batch[k]];
    const tts::RunOptions opts{true, derive_seed(run.seed, static_cast<std::uint64_t>(step), kDropoutStream + k)};
    Tensor psi;
    if (run.mode == tts::Mode::ST) psi = loss::style_of(*ser_model, item.target, data.stats).at(run.style_level);
    const Tensor memory = tts::build_memory(system.model, item.ids, psi.defined() ? &psi : nullptr, opts);
    const auto out = tts::decode_teacher_forced(system.model, memory, item.target, opts);
    const auto f = loss::loss_frame(item.target, out.pre_mel, out.post_mel, out.stop_logits);
    pre = accumulate(pre, f.mel_pre);
    post = accumulate(post, f.mel_post);
    stop = accumulate(stop, f.stop);
    if (run.mode == tts::Mode::PL)
      style = accumulate(style, loss::loss_style(item.target, out.post_mel, ser_model, data.stats, run.style_level));
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  loss::FrameLoss frame;
  frame.mel_pre = scale(pre, inv);
  frame.mel_post = scale(post, inv);
  frame.stop = scale(stop, inv);
  frame.total = add(add(frame.mel_pre, frame.mel_post), frame.stop);
  return loss::loss_total(run.mode, run.style_level, frame, style.defined() ? scale(style, inv) : Tensor());
}

double window_mean(const std::vector<TrajectoryRow>& rows, bool first) {
  if (rows.empty()) return 0.0;
  const std::size_t n = std::min<std::size_t>(10, rows.size());
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += first ? rows[i].frame : rows[rows.size() - n + i].frame;
  return s / static_cast<double>(n);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

}  // namespace

void save_tts_checkpoint(const fs::path& path, TtsSystem& system, const RunConfig& run, const Adam* optimizer) {
  Checkpoint ck;
  ck.meta["kind"] = "tts";
  ck.meta["tts_config"] = system.model.config.to_json();
  ck.meta["run_config"] = run_json_without_paths(run).dump();
  ck.meta["config_hash"] = system.config_hash;
  ck.meta["step"] = std::to_string(system.step);
  ck.meta["tts_stats"] = system.stats.to_json();
  ck.add_all(system.model.params());
  ck.add_all(system.model.buffers());
  if (system.reference_encoder) system.reference_encoder->write_into(ck);
  if (optimizer) ck.add_all(optimizer->state());
  ck.save(path);
}

TtsSystem load_tts_system(const fs::path& path) {
  const Checkpoint ck = Checkpoint::load(path);
  if (!ck.meta.count("kind") || ck.meta.at("kind") != "tts")
    throw std::runtime_error("'" + path.string() + "' is not a TTS checkpoint");
  TtsSystem s;
  s.model = tts::TtsModel::create(tts::TtsConfig::from_json(ck.meta_value("tts_config")), 0);
  ck.restore_into(s.model.params());
  ck.restore_into(s.model.buffers());
  s.stats = dsp::NormStats::from_json(ck.meta_value("tts_stats"));
  if (ck.meta.count("ser_config")) s.reference_encoder = ser::SerModel::read_from(ck);
  s.config_hash = ck.meta_value("config_hash");
  s.step = std::stoll(ck.meta_value("step"));
  return s;
}

void write_trajectory(const fs::path& path, const std::vector<TrajectoryRow>& rows, const std::string& config_hash) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "# config_hash=" << config_hash << '\n' << kTrajectoryHeader << '\n';
  for (const auto& r : rows)
    out << r.step << ',' << tts::mode_name(r.mode) << ',' << ser::style_level_name(r.level) << ',' << fmt(r.frame)
        << ',' << fmt(r.style) << ',' << fmt(r.stop) << ',' << fmt(r.total) << ',' << fmt(r.lr) << '\n';
}

std::vector<TrajectoryRow> read_trajectory(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read trajectory '" + path.string() + "'");
  std::vector<TrajectoryRow> rows;
  std::string line;
  bool header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != kTrajectoryHeader)
        throw std::runtime_error(path.string() + ": expected header '" + kTrajectoryHeader + "'");
      header = true;
      continue;
    }
    std::istringstream ls(line);
    std::string f[8];
    for (auto& x : f) std::getline(ls, x, ',');
    try {
      TrajectoryRow r;
      r.step = std::stoll(f[0]);
      r.mode = tts::parse_mode(f[1]);
      r.level = ser::parse_style_level(f[2]);
      r.frame = std::stod(f[3]);
      r.style = std::stod(f[4]);
      r.stop = std::stod(f[5]);
      r.total = std::stod(f[6]);
      r.lr = std::stod(f[7]);
      rows.push_back(r);
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!header) throw std::runtime_error(path.string() + ": missing header");
  return rows;
}

TtsTrainResult train_tts(const RunConfig& run, const TtsDataset& train, const TtsTrainOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  const bool needs_ser = run.mode != tts::Mode::Baseline;
  if (needs_ser && (run.paths.ser_checkpoint.empty() || !fs::exists(run.paths.ser_checkpoint)))
    throw std::runtime_error("train-tts: mode " + tts::mode_name(run.mode) + " needs an SER checkpoint, '" +
                             run.paths.ser_checkpoint.string() + "' not found");
  if (train.items.empty()) throw std::invalid_argument("train-tts: empty training set");
  fs::create_directories(options.out_dir / "checkpoints");

  TtsSystem system;
  system.model = tts::TtsModel::create(run.tts, derive_seed(run.seed, 0, kInitStream));
  system.stats = train.stats;
  system.config_hash = run.hash();

  std::optional<ser::SerModel> frozen;
  ser::SerModel* ser_model = nullptr;
  if (needs_ser) {
    auto loaded = ser::SerModel::load(run.paths.ser_checkpoint);
    if (loaded.config.n_mels != run.tts.n_mels)
      throw std::runtime_error("train-tts: SER expects " + std::to_string(loaded.config.n_mels) +
                               " mel channels, TTS produces " + std::to_string(run.tts.n_mels));
    if (run.mode == tts::Mode::ST) {
      system.reference_encoder = std::move(loaded);
      system.reference_encoder->set_frozen(false);
      ser_model = &*system.reference_encoder;
    } else {
      frozen = std::move(loaded);
      frozen->set_frozen(true);
      ser_model = &*frozen;
    }
  }

  TensorList params = system.model.params();
  if (system.reference_encoder)
    for (const auto& p : system.reference_encoder->params()) params.push_back(p);
  AdamConfig ac;
  ac.beta1 = run.tts_optim.beta1;
  ac.beta2 = run.tts_optim.beta2;
  ac.eps = run.tts_optim.eps;
  ac.weight_decay = run.tts_optim.l2;
  ac.schedule.base = run.tts_optim.lr;
  ac.schedule.floor = run.tts_optim.lr_floor;
  ac.schedule.decay_start = run.tts_optim.decay_start;
  ac.schedule.decay_end = std::max(run.tts_optim.steps, run.tts_optim.decay_start + 1);
  Adam optimizer(params, ac);

  TtsTrainResult result;
  const fs::path trajectory_path = options.out_dir / "trajectory.csv";
  std::int64_t start = 0;
  if (options.resume) {
    const Checkpoint ck = Checkpoint::load(*options.resume);
    if (!ck.meta.count("kind") || ck.meta.at("kind") != "tts")
      throw std::runtime_error("'" + options.resume->string() + "' is not a TTS checkpoint");
    if (ck.meta_value("config_hash") != system.config_hash)
      throw std::runtime_error("resume: checkpoint config " + ck.meta_value("config_hash") +
                               " does not match this run's config " + system.config_hash);
    ck.restore_into(system.model.params());
    ck.restore_into(system.model.buffers());
    if (system.reference_encoder) {
      ck.restore_into(system.reference_encoder->params());
      ck.restore_into(system.reference_encoder->buffers());
    }
    TensorList state;
    for (const auto& t : ck.tensors)
      if (t.name.rfind("adam.", 0) == 0) state.push_back(t);
    if (state.empty()) throw std::runtime_error("resume: checkpoint has no optimizer state");
    optimizer.load_state(state);
    start = std::stoll(ck.meta_value("step"));
    if (fs::exists(trajectory_path))
      for (const auto& r : read_trajectory(trajectory_path))
        if (r.step <= start) result.trajectory.push_back(r);
  }

  const std::int64_t end =
      options.stop_after ? std::min(*options.stop_after, run.tts_optim.steps) : run.tts_optim.steps;
  for (std::int64_t step = start; step < end; ++step) {
    tape::reset();
    optimizer.zero_grad();
    const auto batch = draw_batch(run.seed, step, train.items.size(), run.tts_optim.batch);
    TrajectoryRow row;
    row.lr = optimizer.current_lr();
    const auto b = batch_loss(system, ser_model, run, train, batch, step);
    backward(b.total_tensor);
    optimizer.step();
    row.step = step + 1;
    row.mode = run.mode;
    row.level = run.style_level;
    row.frame = b.frame;
    row.style = b.style;
    row.stop = b.stop;
    row.total = b.total;
    result.trajectory.push_back(row);
    if (options.on_step) options.on_step(row);
    system.step = step + 1;
    if (run.tts_optim.checkpoint_every > 0 && system.step % run.tts_optim.checkpoint_every == 0)
      save_tts_checkpoint(options.out_dir / "checkpoints" / checkpoint_name(system.step), system, run, &optimizer);
  }
  tape::reset();
  system.step = std::max(system.step, start);

  result.final_checkpoint = options.out_dir / "final.ckpt";
  save_tts_checkpoint(result.final_checkpoint, system, run, &optimizer);
  write_trajectory(trajectory_path, result.trajectory, system.config_hash);
  system.stats.save(options.out_dir / "norm_stats.json");
  result.first_window_frame = window_mean(result.trajectory, true);
  result.last_window_frame = window_mean(result.trajectory, false);

  nlohmann::json summary;
  summary["config_hash"] = system.config_hash;
  summary["mode"] = tts::mode_name(run.mode);
  summary["style_level"] = ser::style_level_name(run.style_level);
  summary["steps"] = system.step;
  summary["utterances"] = train.items.size();
  summary["first_window_frame"] = result.first_window_frame;
  summary["last_window_frame"] = result.last_window_frame;
  if (!result.trajectory.empty()) {
    const auto& last = result.trajectory.back();
    summary["final"] = {{"frame", last.frame}, {"style", last.style}, {"stop", last.stop}, {"total", last.total}};
  }
  write_json(options.out_dir / "summary.json", summary);

  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_json(options.out_dir / "timing.json", {{"wall_seconds", result.wall_seconds}, {"config_hash", system.config_hash}});
  return result;
}

}  // namespace pltts::pipeline
