#pragma once

// Shared plumbing: error taxonomy, text normalization, UTF-8 iteration,
// deterministic RNG, and content hashing. Everything downstream assumes the
// whitespace rule defined here (trim ends, collapse runs to single spaces).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

namespace d2t {

inline constexpr const char* kToolVersion = "0.1.0";

// ----------------------------- errors -----------------------------

// Invalid user input: bad flags, malformed files, violated preconditions.
// The CLI maps these to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A bug or numerical breakdown (non-finite loss, broken invariant). Exit 2.
class InternalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class CheckpointErrorKind { BadMagic, Version, Truncated, Corrupt };

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  CheckpointErrorKind kind() const { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

// ----------------------------- text -----------------------------

inline bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// Trim ends, collapse internal whitespace runs to single spaces.
inline std::string normalize_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_ascii_space(c)) {
      if (!out.empty()) pending_space = true;
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(c);
    }
  }
  return out;
}

inline std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

// Decodes the UTF-8 sequence starting at s[i]. Malformed bytes are passed
// through one byte at a time so no input is ever lost.
struct Utf8Char {
  uint32_t codepoint;
  size_t length;  // bytes consumed
};

inline Utf8Char utf8_next(std::string_view s, size_t i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  size_t len = 0;
  uint32_t cp = 0;
  if (b0 < 0x80) {
    return {b0, 1};
  } else if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1Fu;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0Fu;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07u;
  } else {
    return {b0, 1};  // stray continuation byte
  }
  if (i + len > s.size()) return {b0, 1};
  for (size_t k = 1; k < len; ++k) {
    const auto bk = static_cast<unsigned char>(s[i + k]);
    if ((bk & 0xC0) != 0x80) return {b0, 1};
    cp = (cp << 6) | (bk & 0x3Fu);
  }
  return {cp, len};
}

// Splits into UTF-8 characters (each element one codepoint's bytes).
inline std::vector<std::string> utf8_chars(std::string_view s) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < s.size()) {
    const Utf8Char c = utf8_next(s, i);
    out.emplace_back(s.substr(i, c.length));
    i += c.length;
  }
  return out;
}

inline std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> words;
  size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_ascii_space(s[i])) ++i;
    size_t j = i;
    while (j < s.size() && !is_ascii_space(s[j])) ++j;
    if (j > i) words.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return words;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// ----------------------------- rng -----------------------------

// mt19937_64 is bit-exact across platforms by the standard; the standard
// library *distributions* are not, so the transforms live here.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) { return engine_() % n; }

  // Standard normal via Box-Muller (no spare caching).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Normal truncated to two standard deviations, redrawing outside.
  double truncated_normal(double stddev) {
    for (;;) {
      const double z = normal();
      if (std::abs(z) <= 2.0) return z * stddev;
    }
  }

  // Geometric with mean `mean` and support {1, 2, ...}.
  int geometric(double mean) {
    const double p = 1.0 / mean;
    if (p >= 1.0) return 1;
    const double u = std::max(uniform(), 1e-300);
    const int k = 1 + static_cast<int>(std::floor(std::log(u) / std::log(1.0 - p)));
    return std::max(k, 1);
  }

  // Derives an independent stream; used for per-(step, item) reproducibility.
  static uint64_t mix(uint64_t a, uint64_t b) {
    uint64_t x = a * 0x9E3779B97F4A7C15ull + b + 0x2545F4914F6CDD1Dull;
    x ^= x >> 33;
    x *= 0xFF51AFD7ED558CCDull;
    x ^= x >> 33;
    x *= 0xC4CEB9FE1A85EC53ull;
    x ^= x >> 33;
    return x;
  }

 private:
  std::mt19937_64 engine_;
};

// ----------------------------- hashing -----------------------------

inline std::array<uint8_t, 32> sha256_bytes(const void* data, size_t len) {
  std::array<uint8_t, 32> out{};
  unsigned int out_len = 0;
  if (EVP_Digest(data, len, out.data(), &out_len, EVP_sha256(), nullptr) != 1 ||
      out_len != out.size()) {
    throw InternalError("sha256 computation failed");
  }
  return out;
}

inline std::string hex_encode(const uint8_t* data, size_t len) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (size_t i = 0; i < len; ++i) {
    out.push_back(kHex[data[i] >> 4]);
    out.push_back(kHex[data[i] & 0xF]);
  }
  return out;
}

inline std::string sha256_hex(std::string_view data) {
  const auto h = sha256_bytes(data.data(), data.size());
  return hex_encode(h.data(), h.size());
}

}  // namespace d2t
