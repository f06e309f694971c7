#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>
#include <pybind11/numpy.h>

#include "pltts/dsp/pitch.hpp"
#include "pltts/dsp/vocoder.hpp"
#include "pltts/eval/eval.hpp"
#include "pltts/pipeline/commands.hpp"
#include "pltts/pipeline/reports.hpp"
#include "pltts/tts/text.hpp"

namespace py = pybind11;
using namespace pltts;
namespace fs = std::filesystem;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
  Matrix m(a.shape(0), a.shape(1));
  std::copy_n(a.data(), m.values.size(), m.values.begin());
  return m;
}

Array from_matrix(const Matrix& m) {
  Array a({m.rows, m.cols});
  std::copy(m.values.begin(), m.values.end(), a.mutable_data());
  return a;
}

Array from_vector(const std::vector<double>& v) {
  Array a(v.size());
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

dsp::Waveform to_wave(const Array& samples, int sample_rate) {
  if (samples.ndim() != 1) throw std::invalid_argument("expected a 1-D sample array");
  dsp::Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(samples.data(), samples.data() + samples.size());
  return w;
}

pipeline::RunConfig run_config(const std::string& profile, const std::string& overrides) {
  return pipeline::RunConfig::resolve(pipeline::parse_profile(profile),
                                      overrides.empty() ? nlohmann::json::object() : nlohmann::json::parse(overrides));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of pltts";

  py::register_exception<tts::UnknownCharacterError>(m, "UnknownCharacterError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);

  m.def("normalize_text", &tts::normalize_text, py::arg("text"));
  m.def("encode_text", [](const std::string& raw) { return tts::encode_text_ids(tts::normalize_text(raw)); },
        py::arg("text"));
  m.attr("charset") = tts::kCharset;

  m.def("load_wav", [](const fs::path& p) {
    const auto w = dsp::load_wav(p);
    return py::make_tuple(from_vector(w.samples), w.sample_rate);
  }, py::arg("path"));
  m.def("save_wav", [](const fs::path& p, const Array& samples, int sample_rate, const std::string& comment) {
    dsp::save_wav(to_wave(samples, sample_rate), p, comment);
  }, py::arg("path"), py::arg("samples"), py::arg("sample_rate") = 16000, py::arg("comment") = "");

  m.def("log_mel", [](const Array& samples, int sample_rate) {
    dsp::MelConfig cfg;
    cfg.sample_rate = sample_rate;
    return from_matrix(dsp::mel_spectrogram(to_wave(samples, sample_rate), cfg).frames);
  }, py::arg("samples"), py::arg("sample_rate") = 16000);
  m.def("estimate_f0", [](const Array& samples, int sample_rate) {
    return from_vector(dsp::estimate_f0(to_wave(samples, sample_rate)).hz);
  }, py::arg("samples"), py::arg("sample_rate") = 16000);
  m.def("griffin_lim", [](const Array& log_mel, int n_iter, std::uint64_t seed) {
    dsp::MelSpectrogram mel;
    mel.frames = to_matrix(log_mel);
    const auto r = dsp::griffin_lim(mel, {}, {n_iter, seed});
    return py::make_tuple(from_vector(r.wave.samples), r.convergence);
  }, py::arg("log_mel"), py::arg("n_iter") = 60, py::arg("seed") = 0);

  m.def("dtw_align", [](const Array& a, const Array& b) {
    const auto path = eval::dtw_align(to_matrix(a), to_matrix(b));
    return py::make_tuple(path.steps, path.cost);
  }, py::arg("a"), py::arg("b"));
  m.def("score_pair", [](const fs::path& reference, const fs::path& synthesized) {
    const auto s = eval::score_pair("pair", dsp::load_wav(reference), dsp::load_wav(synthesized));
    if (!s.ok()) throw std::runtime_error(s.error);
    py::dict d;
    d["mcd_db"] = s.mcd_db;
    d["f0_rmse_hz"] = s.f0_rmse_hz ? py::cast(*s.f0_rmse_hz) : py::none();
    d["fd_frames"] = s.fd_frames;
    d["voiced_pairs"] = s.voiced_pairs;
    return d;
  }, py::arg("reference"), py::arg("synthesized"));

  m.def("resolve_config", [](const std::string& profile, const std::string& overrides) {
    return run_config(profile, overrides).to_json().dump();
  }, py::arg("profile") = "desk", py::arg("overrides") = "");
  m.def("config_hash", [](const std::string& profile, const std::string& overrides) {
    return run_config(profile, overrides).hash();
  }, py::arg("profile") = "desk", py::arg("overrides") = "");

  // Commands mirror the CLI and return its exit code.
  m.def("gen_corpus", [](const std::string& kind, const fs::path& out, std::uint64_t seed, const std::string& overrides,
                         bool force) {
    auto run = run_config("desk", overrides);
    run.seed = seed;
    return pipeline::gen_corpus_command(run, pipeline::parse_corpus_kind(kind), out, force);
  }, py::arg("kind"), py::arg("out_dir"), py::arg("seed") = 1, py::arg("overrides") = "", py::arg("force") = false);
  m.def("train_ser", [](const std::string& profile, const std::string& overrides, const fs::path& corpus,
                        const fs::path& out) {
    py::gil_scoped_release release;
    return pipeline::train_ser_command(run_config(profile, overrides), corpus, out);
  }, py::arg("profile"), py::arg("overrides"), py::arg("corpus"), py::arg("out_dir"));
  m.def("train_tts", [](const std::string& profile, const std::string& overrides, const fs::path& corpus,
                        const fs::path& out) {
    py::gil_scoped_release release;
    return pipeline::train_tts_command(run_config(profile, overrides), corpus, out);
  }, py::arg("profile"), py::arg("overrides"), py::arg("corpus"), py::arg("out_dir"));
  m.def("synthesize", [](const fs::path& checkpoint, const std::string& text, const fs::path& out_wav,
                         std::size_t max_steps, std::uint64_t seed, int griffin_lim_iters,
                         std::optional<fs::path> reference) {
    pipeline::SynthesisOptions o;
    o.max_steps = max_steps;
    o.seed = seed;
    o.griffin_lim_iters = griffin_lim_iters;
    o.reference_wav = std::move(reference);
    py::gil_scoped_release release;
    return pipeline::synthesize_command(checkpoint, text, out_wav, o);
  }, py::arg("checkpoint"), py::arg("text"), py::arg("out_wav"), py::arg("max_steps") = 0, py::arg("seed") = 0,
        py::arg("griffin_lim_iters") = 60, py::arg("reference") = py::none());
  m.def("evaluate", [](const fs::path& pairs, const fs::path& out, bool single_thread) {
    auto run = pipeline::RunConfig::desk();
    run.single_thread = single_thread;
    py::gil_scoped_release release;
    return pipeline::evaluate_command(run, pairs, out);
  }, py::arg("pairs"), py::arg("out_dir"), py::arg("single_thread") = false);
  m.def("compare_trajectories", [](const std::vector<fs::path>& logs, const fs::path& out) {
    return pipeline::compare_trajectories_command(logs, out);
  }, py::arg("logs"), py::arg("out_dir"));
}
