#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <unistd.h>

#include "pltts/dsp/pitch.hpp"
#include "pltts/loss/loss.hpp"
#include "pltts/pipeline/commands.hpp"
#include "pltts/pipeline/reports.hpp"
#include "pltts/pipeline/synthetic.hpp"
#include "pltts/tts/text.hpp"

using namespace pltts;
using namespace pltts::pipeline;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(fs::temp_directory_path() / ("pltts_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

RunConfig micro_run() {
  auto run = RunConfig::desk();
  run.corpus.tts_train = 3;
  run.corpus.tts_test = 2;
  run.corpus.ser_train_per_class = 1;
  run.corpus.ser_holdout_per_class = 1;
  run.corpus.styled_per_group = 2;
  run.tts_optim.steps = 4;
  run.tts_optim.batch = 2;
  run.tts_optim.checkpoint_every = 2;
  run.griffin_lim_iters = 4;
  return RunConfig::from_json(run.to_json());
}

RunConfig with_mode(RunConfig run, const std::string& mode, const fs::path& ser_ckpt) {
  auto j = run.to_json();
  j["mode"] = mode;
  j["paths"]["ser_checkpoint"] = ser_ckpt.string();
  return RunConfig::from_json(j);
}

// Untrained descriptor with stats from a couple of utterances.
fs::path write_ser_checkpoint(const fs::path& dir) {
  auto model = ser::SerModel::create(ser::SerConfig::desk(), 3);
  std::mt19937_64 rng(4);
  std::vector<Matrix> mels;
  for (int label = 0; label < 4; ++label)
    mels.push_back(dsp::mel_spectrogram(synth_ser_utterance(label, rng)).frames);
  model.feature_stats = dsp::compute_norm_stats(mels);
  model.set_frozen(true);
  const fs::path p = dir / "ser.ckpt";
  model.save(p);
  return p;
}

}  // namespace

TEST(RunConfigTest, JsonRoundTripAndHash) {
  auto run = RunConfig::desk();
  run.paths.out_dir = "/somewhere";
  const auto back = RunConfig::from_json(run.to_json());
  EXPECT_EQ(back.to_json(), run.to_json());
  EXPECT_EQ(back.hash(), run.hash());
  EXPECT_EQ(run.hash().size(), 16u);
  auto moved = run;
  moved.paths.out_dir = "/elsewhere";
  EXPECT_EQ(moved.hash(), run.hash());
  auto reseeded = run;
  reseeded.seed = 2;
  EXPECT_NE(reseeded.hash(), run.hash());
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(hex64(fnv1a64("a")), "af63dc4c8601ec8c");
}

TEST(RunConfigTest, ProfilesAndOverrides) {
  const auto desk = RunConfig::desk();
  EXPECT_EQ(desk.tts_optim.steps, 1000);
  EXPECT_EQ(desk.tts_optim.decay_start, 333);
  EXPECT_EQ(desk.tts_optim.batch, 4u);
  const auto paper = RunConfig::paper();
  EXPECT_EQ(paper.tts_optim.steps, 150000);
  EXPECT_EQ(paper.tts_optim.decay_start, 50000);
  EXPECT_EQ(paper.tts_optim.batch, 32u);
  EXPECT_EQ(paper.tts_optim.l2, 1e-6);
  EXPECT_EQ(paper.tts.embedding, 256u);
  const auto r = RunConfig::resolve(Profile::Desk, {{"seed", 9}, {"mode", "pl"}, {"tts_optim", {{"steps", 300}}}});
  EXPECT_EQ(r.seed, 9u);
  EXPECT_EQ(r.mode, tts::Mode::PL);
  EXPECT_EQ(r.tts.mode, tts::Mode::PL);
  EXPECT_EQ(r.tts_optim.steps, 300);
  EXPECT_EQ(r.tts_optim.batch, 4u);
  EXPECT_THROW(RunConfig::resolve(Profile::Desk, {{"profile", "huge"}}), std::invalid_argument);
  EXPECT_THROW(RunConfig::resolve(Profile::Desk, {{"mode", "st"}, {"style_level", "LMH"}}), std::invalid_argument);
  const auto st = RunConfig::resolve(Profile::Desk, {{"mode", "st"}, {"style_level", "M"}});
  EXPECT_EQ(st.tts.style_input, 2 * st.ser.blstm_hidden);
}

TEST(Corpus, SameSeedGivesByteIdenticalCorpora) {
  TempDir dir("corpus_det");
  const auto run = micro_run();
  for (auto kind : {CorpusKind::Tts, CorpusKind::Ser, CorpusKind::Styled6}) {
    const auto a = dir / (corpus_kind_name(kind) + "_a");
    const auto b = dir / (corpus_kind_name(kind) + "_b");
    generate_corpus(kind, a, 7, run.corpus);
    generate_corpus(kind, b, 7, run.corpus);
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
      if (!e.is_regular_file()) continue;
      ++files;
      EXPECT_EQ(slurp(e.path()), slurp(b / fs::relative(e.path(), a))) << e.path();
    }
    EXPECT_GT(files, 2u);
  }
}

TEST(Corpus, RefusesNonEmptyDirectoryWithoutForce) {
  TempDir dir("corpus_force");
  const auto run = micro_run();
  generate_corpus(CorpusKind::Styled6, dir.path(), 1, run.corpus);
  try {
    generate_corpus(CorpusKind::Styled6, dir.path(), 1, run.corpus);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("--force"), std::string::npos);
  }
  EXPECT_NO_THROW(generate_corpus(CorpusKind::Styled6, dir.path(), 1, run.corpus, true));
}

TEST(Corpus, ManifestFormats) {
  TempDir dir("corpus_manifest");
  auto run = micro_run();
  run.corpus.styled_per_group = 5;
  generate_corpus(CorpusKind::Tts, dir / "tts", 3, run.corpus);
  generate_corpus(CorpusKind::Ser, dir / "ser", 3, run.corpus);
  generate_corpus(CorpusKind::Styled6, dir / "styled", 3, run.corpus);

  const auto text = read_text_manifest(dir / "tts" / "metadata.csv");
  ASSERT_EQ(text.size(), 3u);
  for (const auto& row : text) {
    EXPECT_EQ(tts::normalize_text(row.text), row.normalized);
    EXPECT_TRUE(fs::exists(row.wav));
  }
  EXPECT_EQ(read_text_manifest(dir / "tts" / "metadata_test.csv").size(), 2u);
  EXPECT_EQ(slurp(dir / "ser" / "train.csv").substr(0, 18), "id,wav_path,label\n");
  EXPECT_EQ(read_labeled_manifest(dir / "ser" / "holdout.csv").size(), 4u);

  const auto styled = read_labeled_manifest(dir / "styled" / "styled6.csv");
  ASSERT_EQ(styled.size(), 30u);
  std::map<std::string, int> per_group;
  for (const auto& row : styled) ++per_group[row.label];
  ASSERT_EQ(per_group.size(), 6u);
  for (const auto& [g, n] : per_group) EXPECT_EQ(n, 5) << g;

  std::ofstream(dir / "dup.csv") << "id,wav_path,label\na,x.wav,sad\na,y.wav,sad\n";
  EXPECT_THROW(read_labeled_manifest(dir / "dup.csv"), std::runtime_error);
}

TEST(Corpus, SerArchetypesHaveSeparatedPitch) {
  const auto& a = ser_archetypes();
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) EXPECT_GE(std::abs(a[i].f0_mean - a[j].f0_mean), 40.0);
  std::mt19937_64 rng(5);
  std::vector<double> measured;
  for (int label = 0; label < 4; ++label) {
    double sum = 0.0;
    std::size_t n = 0;
    for (int k = 0; k < 3; ++k) {
      for (double f : dsp::estimate_f0(synth_ser_utterance(label, rng)).hz)
        if (f > 0.0) {
          sum += f;
          ++n;
        }
    }
    measured.push_back(sum / static_cast<double>(n));
  }
  // Contours and estimator error blur the nominal gaps a little.
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) {
      EXPECT_GE(std::abs(measured[i] - measured[j]), 30.0) << i << " " << j;
      EXPECT_EQ(measured[i] > measured[j], a[i].f0_mean > a[j].f0_mean) << i << " " << j;
    }
}

TEST(TtsTraining, ModesAndStyleColumn) {
  TempDir dir("train_modes");
  const auto run = micro_run();
  generate_corpus(CorpusKind::Tts, dir / "tts", 1, run.corpus);
  const auto ser_ckpt = write_ser_checkpoint(dir.path());
  const auto data = load_tts_dataset(dir / "tts", false);

  TtsTrainOptions o;
  o.out_dir = dir / "base";
  const auto base = train_tts(run, data, o);
  ASSERT_EQ(base.trajectory.size(), 4u);
  for (const auto& r : base.trajectory) {
    EXPECT_EQ(r.style, 0.0);
    EXPECT_EQ(r.total, r.frame);
  }

  o.out_dir = dir / "pl";
  const auto pl = train_tts(with_mode(run, "pl", ser_ckpt), data, o);
  for (const auto& r : pl.trajectory) {
    EXPECT_GT(r.style, 0.0);
    EXPECT_EQ(r.total, r.frame + r.style);
  }
  EXPECT_EQ(pl.trajectory.front().frame, base.trajectory.front().frame);
  const auto rows = read_trajectory(dir / "pl" / "trajectory.csv");
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows.back().total, pl.trajectory.back().total);
  EXPECT_EQ(slurp(dir / "pl" / "trajectory.csv").rfind("# config_hash=", 0), 0u);
  EXPECT_TRUE(fs::exists(dir / "pl" / "checkpoints" / "step_000002.ckpt"));
  EXPECT_FALSE(load_tts_system(pl.final_checkpoint).reference_encoder.has_value());

  o.out_dir = dir / "st";
  const auto st = train_tts(with_mode(run, "st", ser_ckpt), data, o);
  for (const auto& r : st.trajectory) EXPECT_EQ(r.style, 0.0);
  auto system = load_tts_system(st.final_checkpoint);
  ASSERT_TRUE(system.reference_encoder.has_value());
  const auto original = ser::SerModel::load(ser_ckpt);
  double moved = 0.0;
  const auto a = original.params();
  const auto b = system.reference_encoder->params();
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < a[i].tensor.numel(); ++k) moved += std::abs(a[i].tensor.data()[k] - b[i].tensor.data()[k]);
  EXPECT_GT(moved, 0.0);
}

TEST(TtsTraining, MissingSerCheckpointFailsBeforeTraining) {
  TempDir dir("train_missing");
  const auto run = micro_run();
  generate_corpus(CorpusKind::Tts, dir / "tts", 1, run.corpus);
  const auto data = load_tts_dataset(dir / "tts", false);
  TtsTrainOptions o;
  o.out_dir = dir / "pl";
  int steps = 0;
  o.on_step = [&](const TrajectoryRow&) { ++steps; };
  EXPECT_THROW(train_tts(with_mode(run, "pl", dir / "absent.ckpt"), data, o), std::runtime_error);
  EXPECT_EQ(steps, 0);
  EXPECT_FALSE(fs::exists(dir / "pl" / "trajectory.csv"));
}

TEST(TtsTraining, ResumeReproducesTheNextStepsBitwise) {
  TempDir dir("train_resume");
  const auto run = micro_run();
  generate_corpus(CorpusKind::Tts, dir / "tts", 2, run.corpus);
  const auto data = load_tts_dataset(dir / "tts", false);

  TtsTrainOptions straight;
  straight.out_dir = dir / "straight";
  const auto full = train_tts(run, data, straight);

  TtsTrainOptions first;
  first.out_dir = dir / "split";
  first.stop_after = 2;
  train_tts(run, data, first);
  TtsTrainOptions second;
  second.out_dir = dir / "split";
  second.resume = dir / "split" / "checkpoints" / "step_000002.ckpt";
  const auto resumed = train_tts(run, data, second);

  ASSERT_EQ(resumed.trajectory.size(), full.trajectory.size());
  for (std::size_t i = 0; i < full.trajectory.size(); ++i) {
    EXPECT_EQ(resumed.trajectory[i].frame, full.trajectory[i].frame) << i;
    EXPECT_EQ(resumed.trajectory[i].total, full.trajectory[i].total) << i;
  }
  EXPECT_EQ(slurp(dir / "split" / "final.ckpt"), slurp(dir / "straight" / "final.ckpt"));
  EXPECT_EQ(slurp(dir / "split" / "trajectory.csv"), slurp(dir / "straight" / "trajectory.csv"));

  auto other = run;
  other.seed = 99;
  TtsTrainOptions bad;
  bad.out_dir = dir / "bad";
  bad.resume = second.resume;
  EXPECT_THROW(train_tts(other, data, bad), std::runtime_error);
}

TEST(StConditioning, GradientReachesTheReferenceEncoder) {
  auto run = RunConfig::resolve(Profile::Desk, {{"mode", "st"}});
  auto model = tts::TtsModel::create(run.tts, 1);
  auto encoder = ser::SerModel::create(run.ser, 2);
  encoder.feature_stats.mean.assign(40, -3.0);
  encoder.feature_stats.std.assign(40, 1.5);
  encoder.set_frozen(false);
  dsp::NormStats stats;
  stats.mean.assign(40, -2.5);
  stats.std.assign(40, 1.2);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  std::vector<double> v(30 * 40);
  for (auto& x : v) x = g(rng);
  const Tensor target({30, 40}, v);
  const Tensor psi = loss::style_of(encoder, target, stats).at(ser::StyleLevel::Low);
  const Tensor memory = tts::build_memory(model, tts::encode_text_ids("a cat"), &psi);
  const auto out = tts::decode_teacher_forced(model, memory, target);
  backward(loss::loss_frame(target, out.pre_mel, out.post_mel, out.stop_logits).total);
  double norm = 0.0;
  for (const auto& p : encoder.params())
    if (p.tensor.has_grad())
      for (double d : p.tensor.grad()) norm += d * d;
  EXPECT_GT(norm, 0.0);
  tape::reset();
}

TEST(Synthesis, DurationArithmeticAndDeterminism) {
  TempDir dir("synth");
  const auto run = micro_run();
  generate_corpus(CorpusKind::Tts, dir / "tts", 1, run.corpus);
  TtsTrainOptions o;
  o.out_dir = dir / "run";
  const auto trained = train_tts(run, load_tts_dataset(dir / "tts", false), o);
  SynthesisOptions so;
  so.max_steps = 12;
  so.griffin_lim_iters = 4;
  so.seed = 5;
  EXPECT_EQ(synthesize_command(trained.final_checkpoint, "A cat.", dir / "a.wav", so), kExitWarning);
  EXPECT_EQ(synthesize_command(trained.final_checkpoint, "A cat.", dir / "b.wav", so), kExitWarning);
  EXPECT_EQ(slurp(dir / "a.wav"), slurp(dir / "b.wav"));
  const auto wave = dsp::load_wav(dir / "a.wav");
  EXPECT_EQ(wave.samples.size(), 12u * 200u);
  EXPECT_NEAR(wave.duration_seconds(), 12 * 0.0125, 1e-12);
  EXPECT_TRUE(fs::exists(dir / "a.mel.csv"));
  EXPECT_TRUE(fs::exists(dir / "a.attention.csv"));
  EXPECT_THROW(synthesize_command(trained.final_checkpoint, "cat #", dir / "c.wav", so), tts::UnknownCharacterError);

  auto system = load_tts_system(trained.final_checkpoint);
  system.model.stop_projection.bias.mutable_data()[0] = 50.0;
  const auto halted = synthesize(system, "cat", so);
  EXPECT_EQ(halted.result.halt, tts::HaltReason::StopToken);
  EXPECT_EQ(halted.wave.samples.size(), halted.log_mel.rows * 200u);
}

TEST(Evaluation, SelfPairsScoreZeroAndFailuresAreRows) {
  TempDir dir("evaluate");
  auto run = micro_run();
  generate_corpus(CorpusKind::Tts, dir / "tts", 1, run.corpus);
  {
    std::ofstream m(dir / "pairs.csv");
    m << "id,reference_wav,synthesized_wav\n";
    m << "b,tts/wavs/tts_0001.wav,tts/wavs/tts_0001.wav\n";
    m << "a,tts/wavs/tts_0000.wav,tts/wavs/tts_0000.wav\n";
    m << "c,tts/wavs/tts_0000.wav,tts/wavs/missing.wav\n";
  }
  EXPECT_EQ(evaluate_command(run, dir / "pairs.csv", dir / "out"), kExitWarning);
  const auto summary = nlohmann::json::parse(slurp(dir / "out" / "summary.json"));
  EXPECT_EQ(summary["pairs"], 3);
  EXPECT_EQ(summary["failed"], 1);
  EXPECT_EQ(summary["mcd_db"], 0.0);
  EXPECT_EQ(summary["fd_frames"], 0.0);
  EXPECT_EQ(summary["f0_rmse_hz"], 0.0);
  std::ifstream csv(dir / "out" / "pairs_scores.csv");
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(csv, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[2].substr(0, 2), "a,");

  run.single_thread = false;
  const auto parallel = evaluate_pairs(dir / "pairs.csv", "h", 3);
  const auto serial = evaluate_pairs(dir / "pairs.csv", "h", 1);
  ASSERT_EQ(parallel.rows.size(), serial.rows.size());
  for (std::size_t i = 0; i < serial.rows.size(); ++i) EXPECT_EQ(parallel.rows[i].id, serial.rows[i].id);
}

TEST(Reports, ComparingALogWithItselfGivesZeroDifference) {
  TempDir dir("compare");
  std::vector<TrajectoryRow> rows;
  for (int s = 1; s <= 20; ++s) rows.push_back({s, tts::Mode::Baseline, ser::StyleLevel::Low, 3.0 / s, 0.0, 0.1, 3.0 / s, 1e-3});
  write_trajectory(dir / "a.csv", rows, "h");
  EXPECT_EQ(compare_trajectories_command({dir / "a.csv", dir / "a.csv"}, dir / "out"), kExitOk);
  std::ifstream in(dir / "out" / "trajectories.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "step,baseline,baseline#2,baseline#2_minus_baseline");
  while (std::getline(in, line)) EXPECT_EQ(line.substr(line.rfind(',') + 1), "0");
  EXPECT_THROW(compare_trajectories({dir / "a.csv"}), std::invalid_argument);
  write_trajectory(dir / "empty.csv", {}, "h");
  EXPECT_THROW(compare_trajectories({dir / "a.csv", dir / "empty.csv"}), std::runtime_error);
}

TEST(Reports, ThreeWayComparisonInterpolatesAndPicksAWinner) {
  TempDir dir("compare3");
  auto make = [&](tts::Mode mode, double scale, int stride, const std::string& name) {
    std::vector<TrajectoryRow> rows;
    for (int s = stride; s <= 40; s += stride)
      rows.push_back({s, mode, ser::StyleLevel::Low, scale / s, 0.0, 0.0, scale / s, 1e-3});
    write_trajectory(dir / name, rows, "h");
  };
  make(tts::Mode::Baseline, 4.0, 1, "base.csv");
  make(tts::Mode::PL, 3.0, 2, "pl.csv");
  make(tts::Mode::ST, 5.0, 4, "st.csv");
  const auto c = compare_trajectories({dir / "base.csv", dir / "pl.csv", dir / "st.csv"});
  EXPECT_EQ(c.grid.size(), 40u);
  EXPECT_EQ(c.winner, "pl");
  EXPECT_NEAR(c.frame[1][2], 0.5 * (3.0 / 2 + 3.0 / 4), 1e-15);
  const auto j = c.summary();
  EXPECT_TRUE(j["pl_vs_baseline"]["pl_lower"].get<bool>());
  const std::set<std::string> allowed = {"baseline", "st", "pl"};
  EXPECT_TRUE(allowed.count(j["winner"].get<std::string>()));
}

TEST(Reports, SystemTableHasOneRowPerSystem) {
  TempDir dir("table");
  const std::vector<std::string> names = {"Tacotron", "Tacotron-PL(L)", "Tacotron-PL(M)", "Tacotron-PL(H)",
                                          "Tacotron-PL(LMH)"};
  std::vector<std::pair<std::string, fs::path>> systems;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto p = dir / ("s" + std::to_string(i) + ".json");
    std::ofstream(p) << nlohmann::json{{"mcd_db", 6.0 + i}, {"f0_rmse_hz", 1.0}, {"fd_frames", 14.0}}.dump();
    systems.emplace_back(names[i], p);
  }
  EXPECT_EQ(summarize_systems_command(systems, dir / "out"), kExitOk);
  std::ifstream in(dir / "out" / "systems.csv");
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 6u);
  EXPECT_EQ(lines[0], "system,mcd_db,f0_rmse_hz,fd_frames");
  EXPECT_EQ(lines[5], "Tacotron-PL(LMH),10,1,14");
}
