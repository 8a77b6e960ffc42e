#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace flowcouple {

// Mixes (seed, purpose label, indices) into an independent stream key.
// Every random draw in the project is keyed this way, so results do not
// depend on evaluation order or worker count.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label,
                          std::uint64_t a = 0, std::uint64_t b = 0);

class Rng {
public:
    explicit Rng(std::uint64_t key) : engine_(key) {}
    Rng(std::uint64_t seed, std::string_view label, std::uint64_t a = 0, std::uint64_t b = 0)
        : engine_(derive_seed(seed, label, a, b)) {}

    double normal(double mean = 0.0, double stddev = 1.0)
    {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }
    double uniform(double lo = 0.0, double hi = 1.0)
    {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    std::size_t index(std::size_t n)
    {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
    }
    bool bernoulli(double p) { return uniform() < p; }

    void fill_normal(std::span<double> out, double stddev = 1.0)
    {
        std::normal_distribution<double> dist(0.0, stddev);
        for (double& v : out) {
            v = dist(engine_);
        }
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

} // namespace flowcouple
