#include "banditmatch/common.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace bmatch {

ActionSet make_action_set(std::vector<int> actions) {
  std::sort(actions.begin(), actions.end());
  actions.erase(std::unique(actions.begin(), actions.end()), actions.end());
  return actions;
}

bool contains(const ActionSet& set, int action) {
  return std::binary_search(set.begin(), set.end(), action);
}

std::vector<double> to_indicator(const ActionSet& set, int num_classes) {
  std::vector<double> out(static_cast<std::size_t>(num_classes), 0.0);
  for (int a : set) {
    if (a < 0 || a >= num_classes) {
      throw UsageError("action index " + std::to_string(a) + " outside vocabulary of size " +
                       std::to_string(num_classes));
    }
    out[static_cast<std::size_t>(a)] = 1.0;
  }
  return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view stream) {
  return splitmix64(splitmix64(master) ^ fnv1a64(stream));
}

double uniform01(Rng& rng) {
  // 53 random mantissa bits; independent of the standard library's distributions.
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

int uniform_index(Rng& rng, int n) {
  if (n <= 0) throw UsageError("uniform_index needs a positive range");
  const int i = static_cast<int>(uniform01(rng) * n);
  return i < n ? i : n - 1;
}

double sample_beta(double a, double b, Rng& rng) {
  std::gamma_distribution<double> ga(a, 1.0);
  std::gamma_distribution<double> gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  if (x + y <= 0.0) return 0.5;
  return x / (x + y);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace bmatch
