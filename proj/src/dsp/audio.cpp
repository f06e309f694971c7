#include "pltts/dsp/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace pltts::dsp {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void write_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

void write_u16(std::ostream& out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  out.write(b, 2);
}

}  // namespace

Waveform load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_wav: cannot open '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = "load_wav: '" + path.string() + "': ";
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw std::runtime_error(where + "not a RIFF/WAVE file");

  bool have_fmt = false;
  int sample_rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw std::runtime_error(where + "truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw std::runtime_error(where + "fmt chunk too short");
      const auto format = read_u16(chunk + 8);
      const auto channels = read_u16(chunk + 10);
      sample_rate = static_cast<int>(read_u32(chunk + 12));
      const auto bits = read_u16(chunk + 22);
      if (format != 1) throw std::runtime_error(where + "unsupported audio format " + std::to_string(format));
      if (channels != 1) throw std::runtime_error(where + "unsupported channel count " + std::to_string(channels));
      if (bits != 16) throw std::runtime_error(where + "unsupported bits per sample " + std::to_string(bits));
      if (sample_rate <= 0) throw std::runtime_error(where + "unsupported sample rate " + std::to_string(sample_rate));
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = size;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw std::runtime_error(where + "missing fmt chunk");
  if (!data) throw std::runtime_error(where + "missing data chunk");

  Waveform wave;
  wave.sample_rate = sample_rate;
  wave.samples.resize(data_size / 2);
  for (std::size_t i = 0; i < wave.samples.size(); ++i) {
    const auto raw = static_cast<std::int16_t>(read_u16(data + 2 * i));
    wave.samples[i] = static_cast<double>(raw) / 32768.0;
  }
  return wave;
}

void save_wav(const Waveform& wave, const std::filesystem::path& path, const std::string& comment) {
  if (wave.sample_rate <= 0) throw std::invalid_argument("save_wav: sample rate must be positive");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_wav: cannot open '" + path.string() + "' for writing");

  std::string info;
  if (!comment.empty()) {
    std::string text = comment;
    text.push_back('\0');
    if (text.size() & 1u) text.push_back('\0');
    info = "INFO";
    info += "ICMT";
    const auto n = static_cast<std::uint32_t>(text.size());
    info.push_back(static_cast<char>(n & 0xff));
    info.push_back(static_cast<char>((n >> 8) & 0xff));
    info.push_back(static_cast<char>((n >> 16) & 0xff));
    info.push_back(static_cast<char>((n >> 24) & 0xff));
    info += text;
  }
  const auto data_bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
  const std::uint32_t list_bytes = info.empty() ? 0 : static_cast<std::uint32_t>(8 + info.size());

  out.write("RIFF", 4);
  write_u32(out, 4 + (8 + 16) + list_bytes + 8 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);
  write_u16(out, 1);
  write_u32(out, static_cast<std::uint32_t>(wave.sample_rate));
  write_u32(out, static_cast<std::uint32_t>(wave.sample_rate) * 2);
  write_u16(out, 2);
  write_u16(out, 16);
  if (!info.empty()) {
    out.write("LIST", 4);
    write_u32(out, static_cast<std::uint32_t>(info.size()));
    out.write(info.data(), static_cast<std::streamsize>(info.size()));
  }
  out.write("data", 4);
  write_u32(out, data_bytes);
  for (double s : wave.samples) {
    if (!std::isfinite(s)) throw std::invalid_argument("save_wav: non-finite sample");
    const double scaled = std::round(s * 32768.0);
    const auto q = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    write_u16(out, static_cast<std::uint16_t>(q));
  }
  if (!out) throw std::runtime_error("save_wav: write failed for '" + path.string() + "'");
}

}  // namespace pltts::dsp
