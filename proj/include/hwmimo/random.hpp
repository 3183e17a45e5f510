/*
 * Copyright 2026 The hwmimo Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include "hwmimo/common.hpp"

namespace hwmimo {

/// Stream tags keep the random sources of one trial independent of each
/// other, so e.g. channel draws do not change when a hardware parameter does.
enum class Stream : std::uint64_t {
    channel = 1,
    phase = 2,
    pilot_noise = 3,
    data_noise = 4,
    topology = 5,
    shadowing = 6,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based sub-seed: a pure function of the master seed and the path
/// of counters (trial index, base station, stream, ...).
inline constexpr std::uint64_t derive_seed(std::uint64_t master,
                                           std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = splitmix64(master);
    for (std::uint64_t c : path) {
        h = splitmix64(h ^ splitmix64(c + 0x632be59bd9b4e019ULL));
    }
    return h;
}

inline constexpr std::uint64_t derive_seed(std::uint64_t master, Stream s,
                                           std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = derive_seed(master, {static_cast<std::uint64_t>(s)});
    for (std::uint64_t c : path) {
        h = splitmix64(h ^ splitmix64(c + 0x632be59bd9b4e019ULL));
    }
    return h;
}

class Rng {
    public:
        explicit Rng(std::uint64_t seed) : engine_(seed) {}

        double normal() { return normal_(engine_); }

        double uniform() { return uniform_(engine_); }

        /// CN(0, variance): independent real and imaginary parts of variance/2.
        Complex complex_normal(double variance) {
            const double s = std::sqrt(0.5 * variance);
            const double re = normal();
            const double im = normal();
            return {s * re, s * im};
        }

        /// Fills with i.i.d. CN(0, 1) entries.
        template <typename Derived>
        void fill_complex_normal(Eigen::MatrixBase<Derived>& m) {
            constexpr double s = 0.70710678118654752440;
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                for (Eigen::Index r = 0; r < m.rows(); ++r) {
                    const double re = normal();
                    const double im = normal();
                    m(r, c) = Complex(s * re, s * im);
                }
            }
        }

    private:
        boost::random::mt19937_64 engine_;
        boost::random::normal_distribution<double> normal_;
        boost::random::uniform_01<double> uniform_;
};

}  // namespace hwmimo
