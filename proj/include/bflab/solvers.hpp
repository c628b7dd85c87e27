// SPDX-License-Identifier: Apache-2.0
//
// bflab - beamforming laboratory for weighted sum-rate precoding and learned beamformers
// Copyright (C) 2026 The bflab authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef BFLAB_SOLVERS_HPP
#define BFLAB_SOLVERS_HPP

#include "bflab/channel.hpp"
#include "bflab/numerics.hpp"

#include <cstddef>
#include <vector>

// Weighted sum-rate beamforming solvers.
//
// Rates are in nats. Every solver works on the power-absorbed formulation, where the receiver noise
// is sigma2 / p_max times the transmit power actually used; its solutions are scale invariant and are
// returned normalized to total power p_max = 1 (samples are expected to be normalized first).
//
// The reduced solver restricts each precoder to the row space of the stacked channel,
// V_k = H^H X_k, so all linear systems are (n_users * n_rx) square and only the Gram matrix
// Hbar = H H^H enters the updates. Hbar_k below denotes the n_rx rows of Hbar belonging to user k.
namespace bflab
{
    struct BeamformerSet
    {
        std::vector<CMat> v; // v[k] is n_tx x d_k

        double total_power() const;
    };

    // Iterate of the reduced solver. M_k = U_k W_k U_k^H is derived on demand.
    struct WmmseState
    {
        std::vector<CMat> x; // n_users * n_rx x d_k
        std::vector<CMat> u; // n_rx x d_k
        std::vector<CMat> w; // d_k x d_k, Hermitian positive definite
    };

    struct SolveOptions
    {
        std::size_t max_iter = 500;
        double tol = 1e-6; // absolute change of the objective between iterations
        bool trace = true; // keep the full objective history

        void validate() const;
    };

    struct SolveTrace
    {
        std::vector<double> objective_per_iter; // entry 0 is the initial point
        std::size_t iterations = 0;
        bool converged = false;
        double wall_time = 0.0; // seconds
    };

    struct ReducedSolution
    {
        WmmseState state;
        BeamformerSet v;
        SolveTrace trace;
    };

    struct FullSolution
    {
        BeamformerSet v;
        SolveTrace trace;
    };

    // log det(I + H_k V_k V_k^H H_k^H (A_k + sigma2 I)^{-1}), A_k the interference from the other users
    double user_rate(const ChannelSample &s, const BeamformerSet &v, std::size_t k);
    double weighted_sum_rate(const ChannelSample &s, const BeamformerSet &v);

    // MSE matrix of user k with the power-absorbed noise term (sigma2 / p_max) sum_i Tr(V_i V_i^H) U_k^H U_k
    CMat mse_matrix(const ChannelSample &s, const BeamformerSet &v, const CMat &u, std::size_t k);

    // Precoder update: one shared system
    //   (c Hbar + sum_i alpha_i Hbar_i^H M_i Hbar_i) X_k = alpha_k Hbar_k^H U_k W_k,
    //   c = (sigma2 / p_max) sum_j alpha_j Tr(M_j),
    // factorized once for all users. channel_gram is Hbar = gram(s.h).
    std::vector<CMat> x_update(const ChannelSample &s, const CMat &channel_gram, const WmmseState &state);
    std::vector<CMat> x_update(const ChannelSample &s, const WmmseState &state);

    // MMSE receivers U_k = J_k^{-1} Hbar_k X_k with
    //   J_k = (sigma2 / p_max) sum_j Tr(X_j^H Hbar X_j) I + sum_i Hbar_k X_i X_i^H Hbar_k^H
    std::vector<CMat> u_update(const ChannelSample &s, const CMat &channel_gram, const WmmseState &state);
    std::vector<CMat> u_update(const ChannelSample &s, const WmmseState &state);

    // W_k = (I - U_k^H Hbar_k X_k)^{-1}, symmetrized. Throws SingularMse.
    std::vector<CMat> w_update(const ChannelSample &s, const CMat &channel_gram, const WmmseState &state);
    std::vector<CMat> w_update(const ChannelSample &s, const WmmseState &state);

    // V_k = H^H X_k scaled to unit total power (zero X gives zero V)
    BeamformerSet precoders_from_x(const CMat &h, const std::vector<CMat> &x);

    // Normalized MRT start: the d_k leading columns of H_k^H, each user at power 1 / n_users
    BeamformerSet mrt_initialization(const ChannelSample &s);

    ReducedSolution rwmmse_solve(const ChannelSample &s, const SolveOptions &opts = {});

    // Classical WMMSE over unrestricted V_k (n_tx square systems); a cross-check for small problems
    FullSolution full_wmmse_solve(const ChannelSample &s, const SolveOptions &opts = {});

    // Zero-forcing along H^H (H H^H)^{-1}; a single-stream user keeps the column with the higher
    // post-ZF rate (lower index on ties); equal power per stream. Ignores priorities.
    BeamformerSet zf_solve(const ChannelSample &s);

    // Rebuilds precoders from receivers and MSE weights through the precoder update, then scales to
    // unit total power. channel_gram is the unweighted Hbar = gram(s.h); priorities come from s.
    // Throws AllZeroOutput if every U_k W_k vanishes, NotPositiveDefinite for an indefinite system.
    BeamformerSet reconstruct_v(const ChannelSample &s, const CMat &channel_gram, const std::vector<CMat> &u,
                                const std::vector<CMat> &w);
}

#endif
