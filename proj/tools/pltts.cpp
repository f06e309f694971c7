#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "pltts/pipeline/commands.hpp"
#include "pltts/tts/text.hpp"

using namespace pltts;
using namespace pltts::pipeline;
namespace fs = std::filesystem;

namespace {

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string profile;
  bool single_thread = false;
  std::string out_dir;
};

nlohmann::json read_config_file(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("config '" + path + "': " + e.what());
  }
}

RunConfig resolve(const GlobalFlags& g, nlohmann::json extra = nlohmann::json::object()) {
  auto overrides = read_config_file(g.config);
  if (!g.profile.empty()) overrides["profile"] = g.profile;
  if (g.seed) overrides["seed"] = *g.seed;
  if (g.single_thread) overrides["single_thread"] = true;
  if (!g.out_dir.empty()) overrides["paths"]["out_dir"] = g.out_dir;
  overrides.merge_patch(extra);
  const Profile profile = overrides.contains("profile") ? parse_profile(overrides["profile"].get<std::string>())
                                                        : Profile::Desk;
  return RunConfig::resolve(profile, overrides);
}

fs::path out_dir(const RunConfig& run, const std::string& sub) {
  return sub.empty() ? run.paths.out_dir : run.paths.out_dir / sub;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tacotron-style TTS with a perceptual style loss, SER style descriptor and objective evaluation"};
  app.require_subcommand(1);
  GlobalFlags g;
  app.add_option("--config", g.config, "JSON run config merged over the profile defaults");
  app.add_option("--seed", g.seed, "Run seed");
  app.add_option("--profile", g.profile, "paper or desk")->check(CLI::IsMember({"paper", "desk"}));
  app.add_flag("--single-thread", g.single_thread, "Keep every stage on one thread");
  app.add_option("--out-dir", g.out_dir, "Output directory");

  int code = kExitOk;

  auto* gen = app.add_subcommand("gen-synthetic-corpus", "Write a synthetic ser, tts or styled6 corpus");
  std::string kind;
  bool force = false;
  gen->add_option("kind", kind, "ser | tts | styled6")->required()->check(CLI::IsMember({"ser", "tts", "styled6"}));
  gen->add_flag("--force", force, "Overwrite a non-empty output directory");
  gen->callback([&] {
    const auto run = resolve(g);
    code = gen_corpus_command(run, parse_corpus_kind(kind), out_dir(run, ""), force);
  });

  auto* tser = app.add_subcommand("train-ser", "Stage I: train the emotion classifier used as style descriptor");
  std::string ser_corpus;
  tser->add_option("--corpus", ser_corpus, "SER corpus directory")->required();
  tser->callback([&] {
    const auto run = resolve(g);
    code = train_ser_command(run, ser_corpus, out_dir(run, ""));
  });

  auto* ttts = app.add_subcommand("train-tts", "Stage II: train a baseline, pl or st acoustic model");
  std::string tts_corpus, mode, level, ser_ckpt, resume;
  std::optional<std::int64_t> steps, stop_after;
  ttts->add_option("--corpus", tts_corpus, "TTS corpus directory")->required();
  ttts->add_option("--mode", mode, "baseline | pl | st")->check(CLI::IsMember({"baseline", "pl", "st"}));
  ttts->add_option("--level", level, "Style level: L, M, H or LMH");
  ttts->add_option("--ser-checkpoint", ser_ckpt, "Stage I checkpoint (pl and st)");
  ttts->add_option("--steps", steps, "Total steps (sets the decay horizon)");
  ttts->add_option("--stop-after", stop_after, "Stop at this step without changing the schedule");
  ttts->add_option("--resume", resume, "Checkpoint to continue from");
  ttts->callback([&] {
    nlohmann::json extra = nlohmann::json::object();
    if (!mode.empty()) extra["mode"] = mode;
    if (!level.empty()) extra["style_level"] = level;
    if (!ser_ckpt.empty()) extra["paths"]["ser_checkpoint"] = ser_ckpt;
    if (steps) extra["tts_optim"]["steps"] = *steps;
    const auto run = resolve(g, extra);
    code = train_tts_command(run, tts_corpus, out_dir(run, ""),
                             resume.empty() ? std::nullopt : std::optional<fs::path>(resume), stop_after);
  });

  auto* synth = app.add_subcommand("synthesize", "Stage III: text to wav with mel and attention dumps");
  std::string ckpt, text, wav_out, manifest, reference;
  std::size_t max_steps = 0;
  synth->add_option("--checkpoint", ckpt, "TTS checkpoint")->required();
  auto* text_opt = synth->add_option("--text", text, "Text to speak");
  auto* manifest_opt = synth->add_option("--manifest", manifest, "Synthesize every row of a TTS manifest");
  text_opt->excludes(manifest_opt);
  synth->add_option("--wav", wav_out, "Output wav (with --text)");
  synth->add_option("--reference", reference, "Reference recording for st systems");
  synth->add_option("--max-steps", max_steps, "Decoder step limit (0 = model default)");
  synth->callback([&] {
    const auto run = resolve(g);
    SynthesisOptions o;
    o.max_steps = max_steps;
    o.seed = run.seed;
    o.griffin_lim_iters = static_cast<int>(run.griffin_lim_iters);
    if (!reference.empty()) o.reference_wav = reference;
    if (!manifest.empty()) {
      code = synthesize_manifest_command(ckpt, manifest, out_dir(run, ""), o);
      return;
    }
    if (text.empty()) throw CLI::ValidationError("synthesize", "--text or --manifest is required");
    code = synthesize_command(ckpt, text, wav_out.empty() ? out_dir(run, "synth.wav") : fs::path(wav_out), o);
  });

  auto* style = app.add_subcommand("extract-style", "Deep style features for a labeled manifest");
  std::string style_manifest, style_level = "L";
  style->add_option("--ser-checkpoint", ser_ckpt, "Stage I checkpoint")->required();
  style->add_option("--manifest", style_manifest, "id,wav_path,<group> manifest")->required();
  style->add_option("--level", style_level, "L, M, H or LMH");
  style->callback([&] {
    const auto run = resolve(g);
    code = extract_style_command(ser_ckpt, style_manifest, ser::parse_style_level(style_level), out_dir(run, ""));
  });

  auto* evaluate = app.add_subcommand("evaluate", "MCD, F0 RMSE and frame disturbance over wav pairs");
  std::string pairs;
  evaluate->add_option("--pairs", pairs, "id,reference_wav,synthesized_wav manifest")->required();
  evaluate->callback([&] {
    const auto run = resolve(g);
    code = evaluate_command(run, pairs, out_dir(run, ""));
  });

  auto* compare = app.add_subcommand("compare-trajectories", "Align frame-loss trajectories of several runs");
  std::vector<std::string> logs;
  compare->add_option("logs", logs, "trajectory.csv files")->required()->expected(2, -1);
  compare->callback([&] {
    const auto run = resolve(g);
    code = compare_trajectories_command({logs.begin(), logs.end()}, out_dir(run, ""));
  });

  auto* summarize = app.add_subcommand("summarize-systems", "Systems × {MCD, RMSE, FD} table");
  std::vector<std::string> systems;
  summarize->add_option("systems", systems, "name=path/to/evaluate/summary.json")->required()->expected(1, -1);
  summarize->callback([&] {
    const auto run = resolve(g);
    std::vector<std::pair<std::string, fs::path>> parsed;
    for (const auto& s : systems) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw CLI::ValidationError("summarize-systems", "expected name=path, got " + s);
      parsed.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    code = summarize_systems_command(parsed, out_dir(run, ""));
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitError;
  } catch (const tts::UnknownCharacterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return code;
}
