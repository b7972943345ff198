#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace udnf {

// Error taxonomy, mirrored by CLI exit codes: usage 2, data 3, numeric 4.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};
struct UsageError : Error {
  explicit UsageError(const std::string& msg) : Error(msg) {}
};
struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(msg) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(msg) {}
};
struct ShapeError : NumericError {
  explicit ShapeError(const std::string& msg) : NumericError(msg) {}
};

// Deterministic RNG stream. One instance per logical purpose so that
// adding a consumer does not shift every other stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : gen_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(gen_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    std::normal_distribution<double> d(mean, stddev);
    return d(gen_);
  }
  // Inclusive range [lo, hi].
  std::int64_t randint(std::int64_t lo, std::int64_t hi) {
    std::uniform_int_distribution<std::int64_t> d(lo, hi);
    return d(gen_);
  }

  std::mt19937_64& engine() { return gen_; }

  std::string serialize() const {
    std::ostringstream os;
    os << gen_;
    return os.str();
  }
  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> gen_;
    if (is.fail()) throw DataError("Rng::deserialize: malformed state string");
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace udnf
