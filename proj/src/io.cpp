#include "gmf/io.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

#include "gmf/error.hpp"

namespace gmf::io {

std::string format_double(double value) {
  std::array<char, 64> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) fail(ErrorCode::kInvalidArgument, "cannot format double");
  return std::string(buf.data(), end);
}

double parse_double(std::string_view token, std::size_t line) {
  double value = 0.0;
  const auto [end, ec] =
      std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || end != token.data() + token.size()) {
    fail(ErrorCode::kParse, "line " + std::to_string(line) +
                                ": expected a number, got '" +
                                std::string(token) + "'");
  }
  return value;
}

std::int64_t parse_int(std::string_view token, std::size_t line) {
  std::int64_t value = 0;
  const auto [end, ec] =
      std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || end != token.data() + token.size()) {
    fail(ErrorCode::kParse, "line " + std::to_string(line) +
                                ": expected an integer, got '" +
                                std::string(token) + "'");
  }
  return value;
}

std::size_t parse_size(std::string_view token, std::size_t line) {
  const std::int64_t v = parse_int(token, line);
  if (v < 0) {
    fail(ErrorCode::kParse, "line " + std::to_string(line) +
                                ": expected a non-negative integer");
  }
  return static_cast<std::size_t>(v);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) fail(ErrorCode::kIo, "read failure on '" + path.string() + "'");
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path,
                       std::string_view content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      fail(ErrorCode::kIo, "write failure on '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail(ErrorCode::kIo, "cannot move output into place at '" + path.string() + "'");
  }
}

LineReader::LineReader(std::string text) : text_(std::move(text)) {}

bool LineReader::next(std::vector<std::string_view>& tokens) {
  while (pos_ < text_.size()) {
    std::size_t eol = text_.find('\n', pos_);
    if (eol == std::string::npos) eol = text_.size();
    const std::string_view row(text_.data() + pos_, eol - pos_);
    pos_ = eol + 1;
    ++line_;
    tokens.clear();
    std::size_t i = 0;
    while (i < row.size()) {
      while (i < row.size() && (row[i] == ' ' || row[i] == '\t' || row[i] == '\r')) ++i;
      std::size_t j = i;
      while (j < row.size() && row[j] != ' ' && row[j] != '\t' && row[j] != '\r') ++j;
      if (j > i) tokens.push_back(row.substr(i, j - i));
      i = j;
    }
    if (!tokens.empty()) return true;
  }
  return false;
}

void parse_error(std::string_view what, std::size_t line,
                 const std::string& message) {
  fail(ErrorCode::kParse,
       std::string(what) + ":" + std::to_string(line) + ": " + message);
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  std::array<char, 17> buf{};
  std::snprintf(buf.data(), buf.size(), "%016llx",
                static_cast<unsigned long long>(value));
  return std::string(buf.data(), 16);
}

}  // namespace gmf::io
