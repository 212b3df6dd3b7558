#pragma once

// Text serialization helpers: shortest round-trip float formatting, a
// whitespace tokenizer that tracks line numbers, and atomic file writes.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace gmf::io {

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double value);

double parse_double(std::string_view token, std::size_t line);
std::int64_t parse_int(std::string_view token, std::size_t line);
std::size_t parse_size(std::string_view token, std::size_t line);

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`, so the
/// destination is either fully written or untouched.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view content);

/// Splits text into lines of whitespace-separated tokens, skipping blank
/// lines. Line numbers are 1-based.
class LineReader {
 public:
  explicit LineReader(std::string text);

  /// False at end of input.
  bool next(std::vector<std::string_view>& tokens);
  std::size_t line() const { return line_; }

 private:
  std::string text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
};

/// Throws a parse error prefixed with "<what>:<line>: ".
[[noreturn]] void parse_error(std::string_view what, std::size_t line,
                              const std::string& message);

std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t value);

}  // namespace gmf::io
