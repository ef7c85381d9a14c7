#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace feduaa {

// Derives an independent stream seed from (base, label). Clients, the server
// and helper passes each get their own label, so scheduling order can never
// change what any of them draws.
std::uint64_t derive_seed(std::uint64_t base, const std::string& label);

// mt19937_64 engine with hand-rolled distributions. The standard distribution
// adaptors are implementation-defined, which would break byte-identical
// reruns across toolchains; these are not.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    double uniform();                     // [0, 1)
    double uniform(double lo, double hi); // [lo, hi)
    double uniform_open();                // (0, 1]
    std::uint64_t below(std::uint64_t n); // unbiased integer in [0, n)

    double normal(); // standard normal, Box-Muller
    double gamma(double shape); // scale 1, Marsaglia-Tsang
    std::vector<double> dirichlet(double concentration, int k);
    int discrete(const std::vector<double>& probs);

    // Fisher-Yates
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::mt19937_64 engine_;
};

}  // namespace feduaa
