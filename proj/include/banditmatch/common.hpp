#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bmatch {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration values or schema contents.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// API misuse: empty inputs, out-of-range arguments, invalid flag combinations.
class UsageError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Non-finite values reached a place that requires finite ones.
class NumericError : public Error {
 public:
  using Error::Error;
};

using Rng = std::mt19937_64;

/// Sorted, duplicate-free list of atomic action indices.
using ActionSet = std::vector<int>;

ActionSet make_action_set(std::vector<int> actions);
bool contains(const ActionSet& set, int action);
std::vector<double> to_indicator(const ActionSet& set, int num_classes);

/// Seed of a named random stream derived from a master seed. Streams with
/// different names are statistically independent; the mapping is stable
/// across platforms.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream);

double uniform01(Rng& rng);
/// Uniform integer in [0, n).
int uniform_index(Rng& rng, int n);
double sample_beta(double a, double b, Rng& rng);

/// 64-bit FNV-1a over raw bytes, used for artifact hashes in run manifests.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace bmatch
