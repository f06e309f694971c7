#include "pltts/tts/text.hpp"

#include <array>
#include <cctype>
#include <cstdio>
#include <cstring>

namespace pltts::tts {

std::size_t charset_size() { return std::strlen(kCharset); }

namespace {

std::string describe(char c) {
  if (std::isprint(static_cast<unsigned char>(c))) return std::string("'") + c + "'";
  char buf[8];
  std::snprintf(buf, sizeof buf, "0x%02x", static_cast<unsigned char>(c));
  return buf;
}

std::size_t symbol_id(char c) {
  const char* p = std::strchr(kCharset, c);
  return p && c != '\0' ? static_cast<std::size_t>(p - kCharset) : std::string::npos;
}

}  // namespace

UnknownCharacterError::UnknownCharacterError(char c, std::size_t position)
    : std::invalid_argument("unknown character " + describe(c) + " at position " + std::to_string(position)),
      character_(c),
      position_(position) {}

std::string normalize_text(const std::string& raw) {
  static const std::array<const char*, 10> digits = {"zero", "one", "two",   "three", "four",
                                                     "five", "six", "seven", "eight", "nine"};
  std::string out;
  auto push_space = [&out] {
    if (!out.empty() && out.back() != ' ') out.push_back(' ');
  };
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const char c = raw[i];
    const auto uc = static_cast<unsigned char>(c);
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      push_space();
    } else if (std::isdigit(uc)) {
      push_space();
      out += digits[static_cast<std::size_t>(c - '0')];
      out.push_back(' ');
    } else {
      const char lower = static_cast<char>(std::tolower(uc));
      if (lower == kEos || symbol_id(lower) == std::string::npos) throw UnknownCharacterError(c, i);
      out.push_back(lower);
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::vector<std::size_t> encode_text_ids(const std::string& normalized) {
  std::vector<std::size_t> ids;
  ids.reserve(normalized.size() + 1);
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    const char c = normalized[i];
    const std::size_t id = c == kEos ? std::string::npos : symbol_id(c);
    if (id == std::string::npos) throw UnknownCharacterError(c, i);
    ids.push_back(id);
  }
  ids.push_back(0);
  return ids;
}

}  // namespace pltts::tts
