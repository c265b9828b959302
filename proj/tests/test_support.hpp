#pragma once

#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

namespace noisy::testing {

inline nlohmann::json load_fixture(const std::string& name) {
    std::ifstream in(std::string(NOISY_FIXTURE_DIR) + "/" + name);
    if (!in) throw std::runtime_error("missing fixture " + name);
    return nlohmann::json::parse(in);
}

inline std::vector<double> white_noise(std::size_t n, std::uint64_t seed, double sd = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, sd);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

inline std::vector<double> cumsum(std::vector<double> v) {
    for (std::size_t i = 1; i < v.size(); ++i) v[i] += v[i - 1];
    return v;
}

}  // namespace noisy::testing
