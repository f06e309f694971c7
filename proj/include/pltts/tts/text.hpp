#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace pltts::tts {

/// Symbol inventory. Id 0 is the end-of-sequence marker appended to every
/// encoded text; it cannot appear in user text.
inline constexpr char kEos = '~';
inline constexpr const char* kCharset = "~ abcdefghijklmnopqrstuvwxyz.,?!'";

std::size_t charset_size();

class UnknownCharacterError : public std::invalid_argument {
 public:
  UnknownCharacterError(char c, std::size_t position);
  char character() const { return character_; }
  std::size_t position() const { return position_; }

 private:
  char character_;
  std::size_t position_;
};

/// Lowercases, spells out digits ("7" → "seven"), maps tabs and newlines
/// to spaces, collapses runs of spaces and trims. Throws
/// UnknownCharacterError with the 0-based position in `raw` for anything
/// outside the charset.
std::string normalize_text(const std::string& raw);

/// Ids of already-normalized text followed by the end marker.
std::vector<std::size_t> encode_text_ids(const std::string& normalized);

}  // namespace pltts::tts
