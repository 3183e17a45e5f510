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

#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace hwmimo {

using Complex = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CRowVec = Eigen::RowVectorXcd;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;
using RMat = Eigen::MatrixXd;

/// A configuration or input violates a documented invariant.
class ValidationError : public std::invalid_argument {
    public:
        using std::invalid_argument::invalid_argument;
};

/// An argument lies outside the domain of a formula (e.g. t < B).
class DomainError : public std::domain_error {
    public:
        using std::domain_error::domain_error;
};

class UnsupportedError : public std::logic_error {
    public:
        using std::logic_error::logic_error;
};

class IoError : public std::runtime_error {
    public:
        using std::runtime_error::runtime_error;
};

/// Neumaier-compensated running sum.
class CompensatedSum {
    public:
        void add(double x) {
            const double t = sum_ + x;
            if (std::abs(sum_) >= std::abs(x)) {
                comp_ += (sum_ - t) + x;
            } else {
                comp_ += (x - t) + sum_;
            }
            sum_ = t;
        }

        void merge(const CompensatedSum& other) {
            add(other.sum_);
            add(other.comp_);
        }

        [[nodiscard]] double value() const { return sum_ + comp_; }

    private:
        double sum_ = 0.0;
        double comp_ = 0.0;
};

inline double compensated_sum(std::span<const double> values) {
    CompensatedSum acc;
    for (double v : values) {
        acc.add(v);
    }
    return acc.value();
}

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

}  // namespace hwmimo
