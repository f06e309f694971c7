#include "pltts/pipeline/config.hpp"

#include <cstdio>
#include <stdexcept>

namespace pltts::pipeline {

Profile parse_profile(const std::string& text) {
  if (text == "paper") return Profile::Paper;
  if (text == "desk") return Profile::Desk;
  throw std::invalid_argument("unknown profile '" + text + "' (expected paper or desk)");
}

std::string profile_name(Profile profile) { return profile == Profile::Paper ? "paper" : "desk"; }

RunConfig RunConfig::paper() {
  RunConfig c;
  c.profile = Profile::Paper;
  c.tts = tts::TtsConfig::paper();
  c.ser = ser::SerConfig::paper();
  return c;
}

RunConfig RunConfig::desk() {
  RunConfig c;
  c.profile = Profile::Desk;
  c.tts = tts::TtsConfig::desk();
  c.ser = ser::SerConfig::desk();
  c.tts_optim.steps = 1000;
  c.tts_optim.decay_start = 333;
  c.tts_optim.batch = 4;
  c.tts_optim.checkpoint_every = 100;
  c.ser_optim.batch = 16;
  c.ser_optim.lr = 1e-3;
  c.griffin_lim_iters = 32;
  return c;
}

RunConfig RunConfig::for_profile(Profile profile) { return profile == Profile::Paper ? paper() : desk(); }

nlohmann::json RunConfig::to_json() const {
  using nlohmann::json;
  json j;
  j["seed"] = seed;
  j["profile"] = profile_name(profile);
  j["mode"] = tts::mode_name(mode);
  j["style_level"] = ser::style_level_name(style_level);
  j["tts"] = json::parse(tts.to_json());
  j["ser"] = json::parse(ser.to_json());
  j["tts_optim"] = {{"steps", tts_optim.steps},
                    {"batch", tts_optim.batch},
                    {"lr", tts_optim.lr},
                    {"lr_floor", tts_optim.lr_floor},
                    {"decay_start", tts_optim.decay_start},
                    {"beta1", tts_optim.beta1},
                    {"beta2", tts_optim.beta2},
                    {"eps", tts_optim.eps},
                    {"l2", tts_optim.l2},
                    {"checkpoint_every", tts_optim.checkpoint_every},
                    {"log_every", tts_optim.log_every}};
  j["ser_optim"] = {
      {"steps", ser_optim.steps}, {"batch", ser_optim.batch}, {"lr", ser_optim.lr}, {"beta1", ser_optim.beta1}};
  j["corpus"] = {{"tts_train", corpus.tts_train},
                 {"tts_test", corpus.tts_test},
                 {"ser_train_per_class", corpus.ser_train_per_class},
                 {"ser_holdout_per_class", corpus.ser_holdout_per_class},
                 {"styled_per_group", corpus.styled_per_group}};
  j["griffin_lim_iters"] = griffin_lim_iters;
  j["single_thread"] = single_thread;
  j["paths"] = {{"tts_corpus", paths.tts_corpus.string()},
                {"ser_corpus", paths.ser_corpus.string()},
                {"styled_corpus", paths.styled_corpus.string()},
                {"ser_checkpoint", paths.ser_checkpoint.string()},
                {"out_dir", paths.out_dir.string()}};
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c = for_profile(parse_profile(j.value("profile", std::string("desk"))));
  c.seed = j.value("seed", c.seed);
  if (j.contains("mode")) c.mode = tts::parse_mode(j["mode"].get<std::string>());
  if (j.contains("style_level")) c.style_level = ser::parse_style_level(j["style_level"].get<std::string>());
  if (j.contains("tts")) c.tts = tts::TtsConfig::from_json(j["tts"].dump());
  if (j.contains("ser")) c.ser = ser::SerConfig::from_json(j["ser"].dump());
  if (j.contains("tts_optim")) {
    const auto& o = j["tts_optim"];
    auto& t = c.tts_optim;
    t.steps = o.value("steps", t.steps);
    t.batch = o.value("batch", t.batch);
    t.lr = o.value("lr", t.lr);
    t.lr_floor = o.value("lr_floor", t.lr_floor);
    t.decay_start = o.value("decay_start", t.decay_start);
    t.beta1 = o.value("beta1", t.beta1);
    t.beta2 = o.value("beta2", t.beta2);
    t.eps = o.value("eps", t.eps);
    t.l2 = o.value("l2", t.l2);
    t.checkpoint_every = o.value("checkpoint_every", t.checkpoint_every);
    t.log_every = o.value("log_every", t.log_every);
  }
  if (j.contains("ser_optim")) {
    const auto& o = j["ser_optim"];
    c.ser_optim.steps = o.value("steps", c.ser_optim.steps);
    c.ser_optim.batch = o.value("batch", c.ser_optim.batch);
    c.ser_optim.lr = o.value("lr", c.ser_optim.lr);
    c.ser_optim.beta1 = o.value("beta1", c.ser_optim.beta1);
  }
  if (j.contains("corpus")) {
    const auto& o = j["corpus"];
    auto& s = c.corpus;
    s.tts_train = o.value("tts_train", s.tts_train);
    s.tts_test = o.value("tts_test", s.tts_test);
    s.ser_train_per_class = o.value("ser_train_per_class", s.ser_train_per_class);
    s.ser_holdout_per_class = o.value("ser_holdout_per_class", s.ser_holdout_per_class);
    s.styled_per_group = o.value("styled_per_group", s.styled_per_group);
  }
  c.griffin_lim_iters = j.value("griffin_lim_iters", c.griffin_lim_iters);
  c.single_thread = j.value("single_thread", c.single_thread);
  if (j.contains("paths")) {
    const auto& p = j["paths"];
    c.paths.tts_corpus = p.value("tts_corpus", std::string());
    c.paths.ser_corpus = p.value("ser_corpus", std::string());
    c.paths.styled_corpus = p.value("styled_corpus", std::string());
    c.paths.ser_checkpoint = p.value("ser_checkpoint", std::string());
    c.paths.out_dir = p.value("out_dir", c.paths.out_dir.string());
  }
  if (c.tts_optim.batch == 0 || c.ser_optim.batch == 0) throw std::invalid_argument("run config: batch must be positive");
  if (c.tts_optim.steps < 0 || c.ser_optim.steps < 0) throw std::invalid_argument("run config: steps must be >= 0");
  if (c.griffin_lim_iters == 0) throw std::invalid_argument("run config: griffin_lim_iters must be positive");
  c.tts.mode = c.mode;
  c.tts.style_level = c.style_level;
  if (c.mode == tts::Mode::ST) {
    if (c.style_level == ser::StyleLevel::All)
      throw std::invalid_argument("run config: ST conditions on a single style level, not LMH");
    c.tts.style_input = c.style_level == ser::StyleLevel::Low ? c.ser.projection : 2 * c.ser.blstm_hidden;
  }
  c.tts.validate();
  c.ser.validate();
  return c;
}

RunConfig RunConfig::resolve(Profile profile, const nlohmann::json& overrides) {
  if (!overrides.is_null() && !overrides.is_object()) throw std::invalid_argument("run config: expected a JSON object");
  nlohmann::json j = for_profile(profile).to_json();
  if (overrides.is_object() && overrides.contains("profile")) {
    const auto p = parse_profile(overrides["profile"].get<std::string>());
    if (p != profile) j = for_profile(p).to_json();
  }
  if (!overrides.is_null()) j.merge_patch(overrides);
  return from_json(j);
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::string RunConfig::hash() const {
  auto j = to_json();
  j.erase("paths");
  j.erase("single_thread");
  return hex64(fnv1a64(j.dump()));
}

}  // namespace pltts::pipeline
