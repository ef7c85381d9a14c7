#include "feduaa/rng.hpp"

#include <cmath>
#include <numbers>

#include "feduaa/errors.hpp"

namespace feduaa {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, const std::string& label) {
    return splitmix64(splitmix64(base) ^ fnv1a(label));
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double Rng::uniform_open() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw DomainError("Rng::below: n must be positive");
    // rejection sampling over the largest multiple of n
    const std::uint64_t limit = ~0ull - (~0ull % n);
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

double Rng::normal() {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::gamma(double shape) {
    if (!(shape > 0.0)) throw DomainError("Rng::gamma: shape must be positive");
    if (shape < 1.0) {
        const double u = uniform_open();
        return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / (3.0 * std::sqrt(d));
    for (;;) {
        double x;
        double v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform_open();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

std::vector<double> Rng::dirichlet(double concentration, int k) {
    if (k < 1) throw DomainError("Rng::dirichlet: k must be positive");
    if (!(concentration > 0.0)) throw DomainError("Rng::dirichlet: concentration must be positive");
    std::vector<double> out(static_cast<std::size_t>(k));
    double sum = 0.0;
    for (auto& g : out) {
        g = gamma(concentration);
        sum += g;
    }
    if (sum <= 0.0) {
        // all gamma draws underflowed; fall back to a one-hot draw, which is
        // the correct limit of an extremely sparse Dirichlet
        std::fill(out.begin(), out.end(), 0.0);
        out[static_cast<std::size_t>(below(static_cast<std::uint64_t>(k)))] = 1.0;
        return out;
    }
    for (auto& g : out) g /= sum;
    return out;
}

int Rng::discrete(const std::vector<double>& probs) {
    if (probs.empty()) throw DomainError("Rng::discrete: empty probability vector");
    const double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size() - 1);
}

}  // namespace feduaa
