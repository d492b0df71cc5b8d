// Deterministic random-number plumbing: a master seed is split into
// independent per-task streams by hashing (master, stream tag, counter)
// through SplitMix64.  Any piece of work that draws randomness owns a
// stream derived from a documented tag, so results are byte-identical
// across reruns and independent of thread scheduling or block order.
#pragma once

#include <cstdint>
#include <random>

namespace apekit {

// One SplitMix64 step: advances the state and returns a well-mixed word.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d4a2475f4bd5ffULL;
    return z ^ (z >> 31);
}

// Stream tags keep derived seeds from colliding across unrelated tasks.
// New tags may be appended; existing values are frozen for reproducibility.
enum class Stream : std::uint64_t {
    household = 1,        // lifecycle simulation, one stream per household
    survey = 2,           // survey response synthesis, one per respondent
    bootstrap = 3,        // cluster bootstrap replicates
    cv_folds = 4,         // cross-validation fold assignment
    bias_correct = 5,     // measurement-error resampling replicates
    synthetic_panel = 6,  // synthetic panel generation
    oracle = 7,           // Monte Carlo oracles in tests
};

// Derives a child seed from (master, tag, counter).  Chained SplitMix64
// steps over the three words; cheap and collision-resistant in practice.
inline std::uint64_t derive_seed(std::uint64_t master, Stream tag, std::uint64_t counter) {
    std::uint64_t s = master;
    std::uint64_t h = splitmix64(s);
    s ^= static_cast<std::uint64_t>(tag) + 0x9e3779b97f4a7c15ULL;
    h ^= splitmix64(s);
    s ^= counter + 0x517cc1b727220a95ULL;
    h ^= splitmix64(s);
    return h;
}

// A single random stream.  Wraps the 64-bit Mersenne twister; normal
// draws go through std::normal_distribution (deterministic per build).
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed) : gen_(seed) {}
    RngStream(std::uint64_t master, Stream tag, std::uint64_t counter)
        : gen_(derive_seed(master, tag, counter)) {}

    double uniform() { return unif_(gen_); }                   // U(0,1)
    double normal() { return normal_(gen_); }                  // N(0,1)
    double normal(double mean, double sd) { return mean + sd * normal(); }
    // Integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(gen_);
    }
    std::mt19937_64& engine() { return gen_; }

  private:
    std::mt19937_64 gen_;
    std::uniform_real_distribution<double> unif_{0.0, 1.0};
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace apekit
