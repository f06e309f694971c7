#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pltts/dsp/features.hpp"
#include "pltts/numerics/tensor.hpp"
#include "pltts/pipeline/config.hpp"
#include "pltts/ser/train.hpp"

namespace pltts::pipeline {

enum class CorpusKind { Ser, Tts, Styled6 };

CorpusKind parse_corpus_kind(const std::string& text);
std::string corpus_kind_name(CorpusKind kind);

/// Writes a deterministic synthetic corpus with its manifests:
///   tts:     wavs/, metadata.csv and metadata_test.csv (id|text|normalized_text)
///   ser:     wavs/, train.csv and holdout.csv (id,wav_path,label)
///   styled6: wavs/, styled6.csv (id,wav_path,group)
/// A non-empty `out_dir` is refused unless `force` is set.
void generate_corpus(CorpusKind kind, const std::filesystem::path& out_dir, std::uint64_t seed,
                     const CorpusSizes& sizes, bool force = false);

struct TextRow {
  std::string id;
  std::string text;
  std::string normalized;
  std::filesystem::path wav;
};

struct LabeledRow {
  std::string id;
  std::filesystem::path wav;
  std::string label;
};

/// Pipe-delimited rows; wavs resolve to <dir>/wavs/<id>.wav.
std::vector<TextRow> read_text_manifest(const std::filesystem::path& manifest);

/// Header `id,wav_path,<label column>`; relative wav paths resolve against
/// the manifest's directory.
std::vector<LabeledRow> read_labeled_manifest(const std::filesystem::path& manifest);

struct TtsItem {
  std::string id;
  std::string normalized_text;
  std::vector<std::size_t> ids;
  Matrix log_mel;  // raw
  Tensor target;   // normalized T × n_mels
};

struct TtsDataset {
  std::vector<TtsItem> items;
  dsp::NormStats stats;
};

/// Loads `metadata.csv` (or `metadata_test.csv` when `test`). Stats are
/// computed from these items unless given.
TtsDataset load_tts_dataset(const std::filesystem::path& corpus_dir, bool test,
                            const std::optional<dsp::NormStats>& stats = std::nullopt,
                            const dsp::MelConfig& mel = {});

std::vector<ser::SerExample> load_ser_examples(const std::filesystem::path& manifest, const dsp::MelConfig& mel = {});

}  // namespace pltts::pipeline
