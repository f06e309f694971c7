#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "pltts/ser/ser.hpp"
#include "pltts/tts/model.hpp"

namespace pltts::pipeline {

enum class Profile { Paper, Desk };

Profile parse_profile(const std::string& text);
std::string profile_name(Profile profile);

struct TtsOptimConfig {
  std::int64_t steps = 150000;
  std::size_t batch = 32;
  double lr = 1e-3;
  double lr_floor = 1e-5;
  std::int64_t decay_start = 50000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double l2 = 1e-6;
  std::int64_t checkpoint_every = 5000;
  std::size_t log_every = 1;
};

struct SerOptimConfig {
  std::int64_t steps = 200;
  std::size_t batch = 40;
  double lr = 1e-4;
  double beta1 = 0.9;
};

/// Sizes of the generated synthetic corpora.
struct CorpusSizes {
  std::size_t tts_train = 20;
  std::size_t tts_test = 4;
  std::size_t ser_train_per_class = 30;
  std::size_t ser_holdout_per_class = 10;
  std::size_t styled_per_group = 5;
};

struct RunPaths {
  std::filesystem::path tts_corpus;
  std::filesystem::path ser_corpus;
  std::filesystem::path styled_corpus;
  std::filesystem::path ser_checkpoint;
  std::filesystem::path out_dir = "runs";
};

struct RunConfig {
  std::uint64_t seed = 1;
  Profile profile = Profile::Desk;
  tts::Mode mode = tts::Mode::Baseline;
  ser::StyleLevel style_level = ser::StyleLevel::Low;
  tts::TtsConfig tts;
  ser::SerConfig ser;
  TtsOptimConfig tts_optim;
  SerOptimConfig ser_optim;
  CorpusSizes corpus;
  std::size_t griffin_lim_iters = 60;
  bool single_thread = false;
  RunPaths paths;

  static RunConfig paper();
  static RunConfig desk();
  static RunConfig for_profile(Profile profile);

  /// Profile defaults with `overrides` merged on top (RFC 7386 merge patch).
  static RunConfig resolve(Profile profile, const nlohmann::json& overrides);
  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  /// FNV-1a 64 of the canonical JSON without paths, as 16 hex digits.
  std::string hash() const;
};

std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t value);

}  // namespace pltts::pipeline
