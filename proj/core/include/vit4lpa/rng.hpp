#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace vit4lpa {

// 64-bit FNV-1a over a byte string. Used for input digests and seed fan-out.
std::uint64_t fnv1a64(std::string_view bytes);

// Digest of a whole file. Throws IoError if the file cannot be read.
std::uint64_t fnv1a64_file(const std::string& path);

std::uint64_t splitmix64(std::uint64_t x);

// Child seed for a named component so that a single run seed drives every
// module without correlated streams.
std::uint64_t derive_seed(std::uint64_t master, std::string_view component);

// Deterministic generator with hand-rolled distributions: identical seeds
// give identical draws on every platform and standard library.
class Rng {
 public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();
    double uniform();                       // [0,1)
    double uniform(double lo, double hi);   // [lo,hi)
    double normal();                        // standard normal (Box-Muller)
    double normal(double mean, double stddev);
    int uniform_int(int n);                 // [0,n), n >= 1
    bool bernoulli(double p);

    // Fisher-Yates, consuming one draw per position.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_int(static_cast<int>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

 private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace vit4lpa
