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

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "hwmimo/common.hpp"
#include "hwmimo/model.hpp"

namespace hwmimo {

/// Diagonal of the phase-decay matrix for a prediction at channel use t:
/// entry i (1-based, i = 1..B) is exp(-delta/2 (t - i)).
inline RVec phase_decay(int t, int pilot_length, double delta) {
    if (pilot_length < 1 || t < pilot_length) {
        throw DomainError("phase_decay requires t >= B >= 1 (t=" + std::to_string(t) +
                          ", B=" + std::to_string(pilot_length) + ")");
    }
    RVec d(pilot_length);
    for (int i = 1; i <= pilot_length; ++i) {
        d(i - 1) = std::exp(-0.5 * delta * static_cast<double>(t - i));
    }
    return d;
}

/// Correlation of the received pilot of one UE across the B pilot channel
/// uses: |x(i)|^2 (1 + kappa^2) on the diagonal, x(i1) x*(i2)
/// exp(-delta/2 |i1 - i2|) off the diagonal.
inline CMat pilot_gram(const CVec& pilot, double kappa, double delta) {
    const Eigen::Index B = pilot.size();
    CMat X(B, B);
    for (Eigen::Index a = 0; a < B; ++a) {
        for (Eigen::Index b = 0; b < B; ++b) {
            if (a == b) {
                X(a, a) = std::norm(pilot(a)) * (1.0 + kappa * kappa);
            } else {
                const double decay = std::exp(-0.5 * delta * static_cast<double>(std::abs(a - b)));
                X(a, b) = pilot(a) * std::conj(pilot(b)) * decay;
            }
        }
    }
    return X;
}

/// Covariance of the received pilot block at one BS (per antenna):
/// sum_{l,m} lambda_lm X_lm + sigma^2 xi I.
inline CMat psi_matrix(const RMat& lambda_j, const std::vector<CMat>& grams, double xi,
                       double sigma2) {
    const Eigen::Index users = lambda_j.cols();
    const Eigen::Index B = grams.empty() ? 0 : grams.front().rows();
    CMat psi = CMat::Identity(B, B) * (sigma2 * xi);
    for (Eigen::Index l = 0; l < lambda_j.rows(); ++l) {
        for (Eigen::Index m = 0; m < users; ++m) {
            psi += lambda_j(l, m) * grams[l * users + m];
        }
    }
    return psi;
}

struct ChannelEstimate {
        CVec hhat;
        /// Error covariance is c * I_N.
        double c = 0.0;
        /// tr(C) = N c.
        double mse = 0.0;
};

struct BatchEstimate {
        /// Column l*K + k holds the estimate of h_jlk(t).
        CMat hhat;
        RVec c;
};

/// Per-configuration precomputation for the LMMSE predictor of the
/// effective channels D_phi(t) h_jlk at any t >= B.
///
/// Immutable after construction; safe to share between threads.
class EstimatorContext {
    public:
        EstimatorContext(NetworkStats stats, PilotBook pilots, HardwareProfile hw)
            : stats_(std::move(stats)), pilots_(std::move(pilots)), hw_(hw) {
            const Dimensions& d = stats_.dims;
            const int B = d.pilot_length;
            grams_.reserve(d.total_users());
            for (const CVec& x : pilots_.sequences) {
                grams_.push_back(pilot_gram(x, hw_.kappa, hw_.delta));
            }
            psi_.reserve(d.cells);
            psi_inv_.reserve(d.cells);
            for (int j = 0; j < d.cells; ++j) {
                psi_.push_back(psi_matrix(stats_.lambda[j], grams_, hw_.xi, stats_.sigma2));
                Eigen::LLT<CMat> llt(psi_.back());
                if (llt.info() != Eigen::Success) {
                    throw DomainError("Psi_" + std::to_string(j) + " is not positive definite");
                }
                psi_inv_.push_back(llt.solve(CMat::Identity(B, B)));
            }
            decay_.resize(B, d.coherence - B + 1);
            for (int t = B; t <= d.coherence; ++t) {
                decay_.col(t - B) = phase_decay(t, B, hw_.delta);
            }
        }

        [[nodiscard]] const NetworkStats& stats() const { return stats_; }
        [[nodiscard]] const PilotBook& pilots() const { return pilots_; }
        [[nodiscard]] const HardwareProfile& hardware() const { return hw_; }
        [[nodiscard]] const Dimensions& dims() const { return stats_.dims; }

        [[nodiscard]] const CMat& gram(int l, int k) const { return grams_[dims().flat(l, k)]; }
        [[nodiscard]] const CMat& psi(int j) const { return psi_[j]; }
        [[nodiscard]] const CMat& psi_inverse(int j) const { return psi_inv_[j]; }

        /// Cached phase-decay diagonal; t must lie in [B, T].
        [[nodiscard]] RVec decay(int t) const {
            const int B = dims().pilot_length;
            if (t < B) {
                throw DomainError("prediction time t=" + std::to_string(t) + " precedes the pilot");
            }
            if (t <= dims().coherence) {
                return decay_.col(t - B);
            }
            return phase_decay(t, B, hw_.delta);
        }

        /// Psi_j^{-1} D(t) x_lk; the building block of every closed form.
        [[nodiscard]] CVec whitened_pilot(int j, int l, int k, int t) const {
            return psi_inv_[j] * decay(t).cwiseProduct(pilots_.sequence(l, k));
        }

        /// Row vector a = lambda_jlk x_lk^H D(t) Psi_j^{-1} with hhat = sum_i a_i y_j(i).
        [[nodiscard]] CRowVec weights(int j, int l, int k, int t) const {
            return stats_.attenuation(j, l, k) * whitened_pilot(j, l, k, t).adjoint();
        }

        /// c_jlk(t) = lambda (1 - lambda x^H D Psi^{-1} D x), floored at 0.
        [[nodiscard]] double error_coefficient(int j, int l, int k, int t) const {
            const double lam = stats_.attenuation(j, l, k);
            const CVec dx = decay(t).cwiseProduct(pilots_.sequence(l, k));
            const double quad = dx.dot(psi_inv_[j] * dx).real();
            return std::max(0.0, lam * (1.0 - lam * quad));
        }

        /// B x (L K) weight matrix: column l*K + k is the transpose of weights(j,l,k,t).
        [[nodiscard]] CMat weight_matrix(int j, int t) const {
            const Dimensions& d = dims();
            CMat W(d.pilot_length, d.total_users());
            const RVec dt = decay(t);
            for (int l = 0; l < d.cells; ++l) {
                for (int k = 0; k < d.users; ++k) {
                    const CVec w = psi_inv_[j] * dt.cwiseProduct(pilots_.sequence(l, k));
                    W.col(d.flat(l, k)) = stats_.attenuation(j, l, k) * w.conjugate();
                }
            }
            return W;
        }

    private:
        NetworkStats stats_;
        PilotBook pilots_;
        HardwareProfile hw_;
        std::vector<CMat> grams_;
        std::vector<CMat> psi_;
        std::vector<CMat> psi_inv_;
        RMat decay_;
};

/// LMMSE prediction of h_jlk(t) from the received pilot block (N x B,
/// column i = y_j(i+1)). The Kronecker structure is applied as a B-term
/// weighted sum of the received pilot vectors.
inline ChannelEstimate lmmse_estimate(const CMat& pilot_block, const EstimatorContext& ctx, int j,
                                      int l, int k, int t) {
    const CRowVec a = ctx.weights(j, l, k, t);
    if (pilot_block.cols() != a.size()) {
        throw ValidationError("pilot block must have B columns");
    }
    ChannelEstimate est;
    est.hhat = pilot_block * a.transpose();
    est.c = ctx.error_coefficient(j, l, k, t);
    est.mse = static_cast<double>(pilot_block.rows()) * est.c;
    return est;
}

/// Estimates of every h_jlm(t) at BS j sharing one received pilot block.
inline BatchEstimate lmmse_estimate_all(const CMat& pilot_block, const EstimatorContext& ctx,
                                        int j, int t) {
    const Dimensions& d = ctx.dims();
    BatchEstimate out;
    out.hhat = pilot_block * ctx.weight_matrix(j, t);
    out.c.resize(d.total_users());
    for (int l = 0; l < d.cells; ++l) {
        for (int k = 0; k < d.users; ++k) {
            out.c(d.flat(l, k)) = ctx.error_coefficient(j, l, k, t);
        }
    }
    return out;
}

}  // namespace hwmimo
