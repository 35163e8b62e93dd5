#pragma once

#include <charconv>
#include <istream>
#include <string>
#include <string_view>

#include "battbench/errors.hpp"

namespace battbench::text_io {

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view token) {
  double v = 0.0;
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    throw Error(ErrorKind::Parse, "malformed number '" + std::string(token) + "'");
  }
  return v;
}

inline std::string next_token(std::istream& in, std::string_view what) {
  std::string tok;
  if (!(in >> tok)) throw Error(ErrorKind::Parse, "unexpected end of input reading " + std::string(what));
  return tok;
}

inline void expect_token(std::istream& in, std::string_view expected) {
  const auto tok = next_token(in, expected);
  if (tok != expected) {
    throw Error(ErrorKind::Parse, "expected '" + std::string(expected) + "', got '" + tok + "'");
  }
}

inline double read_double(std::istream& in, std::string_view what) {
  return parse_double(next_token(in, what));
}

inline long read_int(std::istream& in, std::string_view what) {
  const auto tok = next_token(in, what);
  long v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    throw Error(ErrorKind::Parse, "malformed integer '" + tok + "' for " + std::string(what));
  }
  return v;
}

}  // namespace battbench::text_io
