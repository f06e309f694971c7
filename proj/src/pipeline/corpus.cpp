#include "pltts/pipeline/corpus.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "pltts/numerics/rng.hpp"
#include "pltts/pipeline/synthetic.hpp"
#include "pltts/tts/text.hpp"

namespace pltts::pipeline {

namespace fs = std::filesystem;

namespace {

std::string make_id(const std::string& prefix, std::size_t index) {
  std::string digits = std::to_string(index);
  if (digits.size() < 4) digits.insert(0, 4 - digits.size(), '0');
  return prefix + digits;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

void prepare_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw std::runtime_error("'" + dir.string() + "' exists and is not a directory");
    if (!fs::is_empty(dir)) {
      if (!force) throw std::runtime_error("'" + dir.string() + "' is not empty (use --force to overwrite)");
      for (const auto& e : fs::directory_iterator(dir)) fs::remove_all(e.path());
    }
  }
  fs::create_directories(dir / "wavs");
}

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

void check_unique(const std::vector<std::string>& ids, const fs::path& manifest) {
  std::set<std::string> seen;
  for (const auto& id : ids)
    if (!seen.insert(id).second) throw std::runtime_error(manifest.string() + ": duplicate id '" + id + "'");
}

void write_tts(const fs::path& dir, std::uint64_t seed, const CorpusSizes& sizes) {
  auto write_split = [&](const char* manifest, std::size_t count, std::size_t offset, const std::string& prefix) {
    auto out = open_out(dir / manifest);
    for (std::size_t i = 0; i < count; ++i) {
      std::mt19937_64 rng(derive_seed(seed, offset + i, 1));
      const std::string text = capitalize(random_sentence(rng));
      const std::string normalized = tts::normalize_text(text);
      const std::string id = make_id(prefix, i);
      dsp::save_wav(synth_tts_utterance(normalized, rng), dir / "wavs" / (id + ".wav"));
      out << id << '|' << text << '|' << normalized << '\n';
    }
  };
  write_split("metadata.csv", sizes.tts_train, 0, "tts_");
  write_split("metadata_test.csv", sizes.tts_test, 1000000, "tts_test_");
}

void write_ser(const fs::path& dir, std::uint64_t seed, const CorpusSizes& sizes) {
  const auto& labels = ser::kEmotionLabels;
  auto write_split = [&](const char* manifest, std::size_t per_class, std::size_t offset, const std::string& prefix) {
    auto out = open_out(dir / manifest);
    out << "id,wav_path,label\n";
    std::size_t index = 0;
    for (std::size_t i = 0; i < per_class; ++i) {
      for (std::size_t label = 0; label < labels.size(); ++label, ++index) {
        std::mt19937_64 rng(derive_seed(seed, offset + index, 2));
        const std::string id = make_id(prefix, index);
        dsp::save_wav(synth_ser_utterance(static_cast<int>(label), rng), dir / "wavs" / (id + ".wav"));
        out << id << ",wavs/" << id << ".wav," << labels[label] << '\n';
      }
    }
  };
  write_split("train.csv", sizes.ser_train_per_class, 0, "ser_");
  write_split("holdout.csv", sizes.ser_holdout_per_class, 1000000, "ser_holdout_");
}

void write_styled(const fs::path& dir, std::uint64_t seed, const CorpusSizes& sizes) {
  auto out = open_out(dir / "styled6.csv");
  out << "id,wav_path,group\n";
  std::size_t index = 0;
  for (std::size_t g = 0; g < kStyleGroups.size(); ++g) {
    for (std::size_t i = 0; i < sizes.styled_per_group; ++i, ++index) {
      std::mt19937_64 rng(derive_seed(seed, index, 3));
      const std::string id = make_id("styled_", index);
      dsp::save_wav(synth_styled_utterance(g, rng), dir / "wavs" / (id + ".wav"));
      out << id << ",wavs/" << id << ".wav," << kStyleGroups[g] << '\n';
    }
  }
}

}  // namespace

CorpusKind parse_corpus_kind(const std::string& text) {
  if (text == "ser") return CorpusKind::Ser;
  if (text == "tts") return CorpusKind::Tts;
  if (text == "styled6") return CorpusKind::Styled6;
  throw std::invalid_argument("unknown corpus kind '" + text + "' (expected ser, tts or styled6)");
}

std::string corpus_kind_name(CorpusKind kind) {
  switch (kind) {
    case CorpusKind::Ser: return "ser";
    case CorpusKind::Tts: return "tts";
    case CorpusKind::Styled6: return "styled6";
  }
  return "?";
}

void generate_corpus(CorpusKind kind, const fs::path& out_dir, std::uint64_t seed, const CorpusSizes& sizes,
                     bool force) {
  prepare_dir(out_dir, force);
  switch (kind) {
    case CorpusKind::Tts: write_tts(out_dir, seed, sizes); break;
    case CorpusKind::Ser: write_ser(out_dir, seed, sizes); break;
    case CorpusKind::Styled6: write_styled(out_dir, seed, sizes); break;
  }
}

std::vector<TextRow> read_text_manifest(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw std::runtime_error("cannot read manifest '" + manifest.string() + "'");
  std::vector<TextRow> rows;
  std::vector<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split(line, '|');
    if (f.size() != 3)
      throw std::runtime_error(manifest.string() + ":" + std::to_string(line_no) + ": expected id|text|normalized_text");
    rows.push_back({f[0], f[1], f[2], manifest.parent_path() / "wavs" / (f[0] + ".wav")});
    ids.push_back(f[0]);
  }
  check_unique(ids, manifest);
  return rows;
}

std::vector<LabeledRow> read_labeled_manifest(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw std::runtime_error("cannot read manifest '" + manifest.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(manifest.string() + ": empty manifest");
  const auto header = split(line, ',');
  if (header.size() != 3 || header[0] != "id" || header[1] != "wav_path")
    throw std::runtime_error(manifest.string() + ": expected header id,wav_path,<label>");
  std::vector<LabeledRow> rows;
  std::vector<std::string> ids;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 3) throw std::runtime_error(manifest.string() + ":" + std::to_string(line_no) + ": expected 3 fields");
    fs::path wav = f[1];
    if (wav.is_relative()) wav = manifest.parent_path() / wav;
    rows.push_back({f[0], wav, f[2]});
    ids.push_back(f[0]);
  }
  check_unique(ids, manifest);
  return rows;
}

TtsDataset load_tts_dataset(const fs::path& corpus_dir, bool test, const std::optional<dsp::NormStats>& stats,
                            const dsp::MelConfig& mel) {
  const auto rows = read_text_manifest(corpus_dir / (test ? "metadata_test.csv" : "metadata.csv"));
  if (rows.empty()) throw std::runtime_error("tts corpus '" + corpus_dir.string() + "' has no utterances");
  TtsDataset data;
  std::vector<Matrix> mels;
  for (const auto& row : rows) {
    TtsItem item;
    item.id = row.id;
    item.normalized_text = tts::normalize_text(row.normalized);
    item.ids = tts::encode_text_ids(item.normalized_text);
    item.log_mel = dsp::mel_spectrogram(dsp::load_wav(row.wav), mel).frames;
    mels.push_back(item.log_mel);
    data.items.push_back(std::move(item));
  }
  data.stats = stats ? *stats : dsp::compute_norm_stats(mels);
  for (auto& item : data.items) item.target = dsp::normalize(item.log_mel, data.stats).to_tensor();
  return data;
}

std::vector<ser::SerExample> load_ser_examples(const fs::path& manifest, const dsp::MelConfig& mel) {
  std::vector<ser::SerExample> out;
  for (const auto& row : read_labeled_manifest(manifest))
    out.push_back({row.id, dsp::mel_spectrogram(dsp::load_wav(row.wav), mel).frames, ser::label_index(row.label)});
  return out;
}

}  // namespace pltts::pipeline
