#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pltts/pipeline/config.hpp"
#include "pltts/pipeline/corpus.hpp"
#include "pltts/pipeline/synthesize.hpp"

namespace pltts::pipeline {

enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitWarning = 2 };

/// Every command takes the resolved run config and writes under `out_dir`.
/// They throw on hard errors; the CLI maps exceptions to exit code 1.

int gen_corpus_command(const RunConfig& run, CorpusKind kind, const std::filesystem::path& out_dir, bool force);

/// Writes ser.ckpt, ser_trajectory.csv (step,loss,batch_accuracy) and
/// summary.json.
int train_ser_command(const RunConfig& run, const std::filesystem::path& corpus_dir,
                      const std::filesystem::path& out_dir);

int train_tts_command(const RunConfig& run, const std::filesystem::path& corpus_dir,
                      const std::filesystem::path& out_dir,
                      const std::optional<std::filesystem::path>& resume = std::nullopt,
                      const std::optional<std::int64_t>& stop_after = std::nullopt);

/// One utterance: <out>.wav plus <out>.mel.csv, <out>.attention.csv and
/// <out>.json. Returns 2 when decoding hit the step limit.
int synthesize_command(const std::filesystem::path& checkpoint, const std::string& text,
                       const std::filesystem::path& out_wav, const SynthesisOptions& options);

/// Every row of a TTS test manifest; writes wavs and pairs.csv for
/// `evaluate`. ST systems use each row's own recording as the reference.
int synthesize_manifest_command(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest,
                                const std::filesystem::path& out_dir, const SynthesisOptions& options);

/// Ψ for every row of a labeled manifest (id,wav_path,<group>), saved to
/// style.ckpt. With two or more groups of two or more members it also
/// writes cluster.json and distances.csv.
int extract_style_command(const std::filesystem::path& ser_checkpoint, const std::filesystem::path& manifest,
                          ser::StyleLevel level, const std::filesystem::path& out_dir,
                          double* score_out = nullptr);

int evaluate_command(const RunConfig& run, const std::filesystem::path& pairs_manifest,
                     const std::filesystem::path& out_dir);

int compare_trajectories_command(const std::vector<std::filesystem::path>& logs,
                                 const std::filesystem::path& out_dir);

/// `systems` holds (name, evaluate summary.json) pairs.
int summarize_systems_command(const std::vector<std::pair<std::string, std::filesystem::path>>& systems,
                              const std::filesystem::path& out_dir);

}  // namespace pltts::pipeline
