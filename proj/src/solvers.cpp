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

#include "bflab/solvers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

namespace bflab
{
    namespace
    {
        using Clock = std::chrono::steady_clock;

        double noise_ratio(const ChannelSample &s) { return s.sigma2 / s.p_max; }

        void check_state(const ChannelSample &s, const std::vector<CMat> &blocks, const char *what)
        {
            if (blocks.size() != s.n_users())
                throw ShapeMismatch(std::string(what) + ": expected one block per user");
        }

        // Columns of all users side by side
        CMat hstack(const std::vector<CMat> &blocks, std::size_t rows)
        {
            std::size_t cols = 0;
            for (const auto &b : blocks)
                cols += b.cols();
            CMat out(rows, cols);
            std::size_t at = 0;
            for (const auto &b : blocks)
            {
                out.set_col_block(at, b);
                at += b.cols();
            }
            return out;
        }

        std::vector<CMat> hsplit(const CMat &m, const std::vector<int> &d)
        {
            std::vector<CMat> out;
            out.reserve(d.size());
            std::size_t at = 0;
            for (int dk : d)
            {
                out.push_back(m.col_block(at, static_cast<std::size_t>(dk)));
                at += static_cast<std::size_t>(dk);
            }
            return out;
        }

        // Per-user rates from the received-signal products HV = H [V_1 ... V_K]
        std::vector<double> rates_from_products(const ChannelSample &s, const CMat &hv,
                                                const std::vector<std::size_t> &col_offset)
        {
            const std::size_t n_users = s.n_users(), n_rx = s.n_rx();
            std::vector<double> rates(n_users);
            for (std::size_t k = 0; k < n_users; ++k)
            {
                const CMat rows = hv.row_block(k * n_rx, n_rx);
                CMat total = CMat::identity(n_rx) * s.sigma2;
                total += times_adjoint(rows, rows);
                const CMat own = rows.col_block(col_offset[k], col_offset[k + 1] - col_offset[k]);
                CMat interference = total;
                interference -= times_adjoint(own, own);
                rates[k] = logdet_hpd(total) - logdet_hpd(interference);
            }
            return rates;
        }

        std::vector<std::size_t> column_offsets(const BeamformerSet &v)
        {
            std::vector<std::size_t> off(v.v.size() + 1, 0);
            for (std::size_t k = 0; k < v.v.size(); ++k)
                off[k + 1] = off[k] + v.v[k].cols();
            return off;
        }

        std::vector<double> all_user_rates(const ChannelSample &s, const BeamformerSet &v)
        {
            if (v.v.size() != s.n_users())
                throw ShapeMismatch("rate: beamformer set has " + std::to_string(v.v.size()) + " users, sample has " +
                                    std::to_string(s.n_users()));
            for (const auto &vk : v.v)
                if (vk.rows() != s.n_tx())
                    throw ShapeMismatch("rate: precoder row count differs from n_tx");
            const CMat hv = s.h * hstack(v.v, s.n_tx());
            return rates_from_products(s, hv, column_offsets(v));
        }

        std::vector<CMat> mse_weights(const std::vector<CMat> &u, const std::vector<CMat> &w)
        {
            std::vector<CMat> m;
            m.reserve(u.size());
            for (std::size_t k = 0; k < u.size(); ++k)
                m.push_back(hermitian_part(times_adjoint(u[k] * w[k], u[k])));
            return m;
        }

        // Rethrows a numerical failure with the iteration index, keeping its type
        template <typename Fn>
        auto at_iteration(std::size_t iter, Fn &&fn) -> decltype(fn())
        {
            const std::string where = " (iteration " + std::to_string(iter) + ")";
            try
            {
                return fn();
            }
            catch (const NotPositiveDefinite &e)
            {
                throw NotPositiveDefinite(e.what() + where);
            }
            catch (const SingularMse &e)
            {
                throw SingularMse(e.what() + where);
            }
        }

        void record(SolveTrace &trace, double objective, bool keep_all)
        {
            if (keep_all || trace.objective_per_iter.empty())
                trace.objective_per_iter.push_back(objective);
            else
                trace.objective_per_iter.back() = objective;
        }
    }

    double BeamformerSet::total_power() const
    {
        double p = 0.0;
        for (const auto &vk : v)
            p += vk.frobenius_norm2();
        return p;
    }

    void SolveOptions::validate() const
    {
        if (max_iter < 1)
            throw std::invalid_argument("SolveOptions: max_iter must be at least 1");
        if (!(tol > 0.0))
            throw std::invalid_argument("SolveOptions: tol must be positive");
    }

    double user_rate(const ChannelSample &s, const BeamformerSet &v, std::size_t k)
    {
        if (k >= s.n_users())
            throw std::out_of_range("user_rate: user index out of range");
        return all_user_rates(s, v)[k];
    }

    double weighted_sum_rate(const ChannelSample &s, const BeamformerSet &v)
    {
        const auto rates = all_user_rates(s, v);
        double acc = 0.0;
        for (std::size_t k = 0; k < rates.size(); ++k)
            acc += s.alpha[k] * rates[k];
        return acc;
    }

    CMat mse_matrix(const ChannelSample &s, const BeamformerSet &v, const CMat &u, std::size_t k)
    {
        const CMat hk = s.user_channel(k);
        const std::size_t dk = v.v.at(k).cols();
        if (u.rows() != s.n_rx() || u.cols() != dk)
            throw ShapeMismatch("mse_matrix: receiver shape does not match the precoder");

        CMat residual = CMat::identity(dk);
        residual -= adjoint_times(u, hk * v.v[k]);
        CMat e = times_adjoint(residual, residual);
        for (std::size_t m = 0; m < v.v.size(); ++m)
        {
            if (m == k)
                continue;
            const CMat leak = adjoint_times(u, hk * v.v[m]);
            e += times_adjoint(leak, leak);
        }
        e.add_scaled(adjoint_times(u, u), noise_ratio(s) * v.total_power());
        return hermitian_part(e);
    }

    std::vector<CMat> x_update(const ChannelSample &s, const CMat &channel_gram, const WmmseState &state)
    {
        check_state(s, state.u, "x_update");
        check_state(s, state.w, "x_update");
        const std::size_t n_users = s.n_users(), n_rx = s.n_rx(), n = channel_gram.rows();

        const auto m = mse_weights(state.u, state.w);
        double trace_sum = 0.0;
        for (std::size_t j = 0; j < n_users; ++j)
            trace_sum += s.alpha[j] * trace_real(m[j]);

        CMat system = channel_gram * (noise_ratio(s) * trace_sum);
        std::vector<CMat> rhs;
        rhs.reserve(n_users);
        for (std::size_t i = 0; i < n_users; ++i)
        {
            const CMat gi = channel_gram.row_block(i * n_rx, n_rx);
            system.add_scaled(adjoint_times(gi, m[i] * gi), s.alpha[i]);
            rhs.push_back(adjoint_times(gi, state.u[i] * state.w[i]) * s.alpha[i]);
        }
        const CMat x = Cholesky(system).solve(hstack(rhs, n));
        return hsplit(x, s.d);
    }

    std::vector<CMat> x_update(const ChannelSample &s, const WmmseState &state)
    {
        return x_update(s, gram(s.h), state);
    }

    std::vector<CMat> u_update(const ChannelSample &s, const CMat &channel_gram, const WmmseState &state)
    {
        check_state(s, state.x, "u_update");
        const std::size_t n_users = s.n_users(), n_rx = s.n_rx();

        const CMat x_all = hstack(state.x, channel_gram.rows());
        const CMat gx = channel_gram * x_all; // H V for V = H^H X
        const double power = inner_real(x_all, gx);
        std::vector<std::size_t> off(n_users + 1, 0);
        for (std::size_t k = 0; k < n_users; ++k)
            off[k + 1] = off[k] + state.x[k].cols();

        std::vector<CMat> u;
        u.reserve(n_users);
        for (std::size_t k = 0; k < n_users; ++k)
        {
            const CMat rows = gx.row_block(k * n_rx, n_rx);
            CMat j = CMat::identity(n_rx) * (noise_ratio(s) * power);
            j += times_adjoint(rows, rows);
            u.push_back(Cholesky(j).solve(rows.col_block(off[k], off[k + 1] - off[k])));
        }
        return u;
    }

    std::vector<CMat> u_update(const ChannelSample &s, const WmmseState &state)
    {
        return u_update(s, gram(s.h), state);
    }

    std::vector<CMat> w_update(const ChannelSample &s, const CMat &channel_gram, const WmmseState &state)
    {
        check_state(s, state.x, "w_update");
        check_state(s, state.u, "w_update");
        const std::size_t n_rx = s.n_rx();
        std::vector<CMat> w;
        w.reserve(s.n_users());
        for (std::size_t k = 0; k < s.n_users(); ++k)
        {
            const std::size_t dk = state.x[k].cols();
            const CMat gk = channel_gram.row_block(k * n_rx, n_rx);
            CMat e = CMat::identity(dk);
            e -= adjoint_times(state.u[k], gk * state.x[k]);
            try
            {
                w.push_back(Cholesky(e).inverse());
            }
            catch (const NotPositiveDefinite &err)
            {
                throw SingularMse("w_update: MSE matrix of user " + std::to_string(k) +
                                  " is not positive definite: " + err.what());
            }
        }
        return w;
    }

    std::vector<CMat> w_update(const ChannelSample &s, const WmmseState &state)
    {
        return w_update(s, gram(s.h), state);
    }

    BeamformerSet precoders_from_x(const CMat &h, const std::vector<CMat> &x)
    {
        BeamformerSet out;
        out.v.reserve(x.size());
        for (const auto &xk : x)
            out.v.push_back(adjoint_times(h, xk));
        const double p = out.total_power();
        if (p > 0.0)
            for (auto &vk : out.v)
                vk *= 1.0 / std::sqrt(p);
        return out;
    }

    BeamformerSet mrt_initialization(const ChannelSample &s)
    {
        BeamformerSet v;
        const double user_power = 1.0 / static_cast<double>(s.n_users());
        for (std::size_t k = 0; k < s.n_users(); ++k)
        {
            const auto dk = static_cast<std::size_t>(s.d[k]);
            CMat vk = s.user_channel(k).row_block(0, dk).adjoint();
            const double p = vk.frobenius_norm2();
            if (p > 0.0)
                vk *= std::sqrt(user_power / p);
            v.v.push_back(std::move(vk));
        }
        return v;
    }

    ReducedSolution rwmmse_solve(const ChannelSample &s, const SolveOptions &opts)
    {
        opts.validate();
        const auto start = Clock::now();
        const CMat hbar = gram(s.h);

        ReducedSolution sol;
        auto &state = sol.state;
        {
            // X^0 solves H^H X = V^0 in the least-squares sense: Hbar X = H V^0
            const BeamformerSet v0 = mrt_initialization(s);
            const CMat x0 = at_iteration(0, [&] { return Cholesky(hbar).solve(s.h * hstack(v0.v, s.n_tx())); });
            state.x = hsplit(x0, s.d);
        }
        double objective = weighted_sum_rate(s, precoders_from_x(s.h, state.x));
        record(sol.trace, objective, opts.trace);

        for (std::size_t it = 1; it <= opts.max_iter; ++it)
        {
            at_iteration(it, [&]
                         {
                             state.u = u_update(s, hbar, state);
                             state.w = w_update(s, hbar, state);
                             state.x = x_update(s, hbar, state);
                         });
            const double next = weighted_sum_rate(s, precoders_from_x(s.h, state.x));
            record(sol.trace, next, opts.trace);
            sol.trace.iterations = it;
            const double change = std::abs(next - objective);
            objective = next;
            if (change < opts.tol)
            {
                sol.trace.converged = true;
                break;
            }
        }
        sol.v = precoders_from_x(s.h, state.x);
        sol.trace.wall_time = std::chrono::duration<double>(Clock::now() - start).count();
        return sol;
    }

    FullSolution full_wmmse_solve(const ChannelSample &s, const SolveOptions &opts)
    {
        opts.validate();
        const auto start = Clock::now();
        const std::size_t n_users = s.n_users(), n_rx = s.n_rx(), n_tx = s.n_tx();
        const double ratio = noise_ratio(s);

        FullSolution sol;
        sol.v = mrt_initialization(s);
        if (sol.v.total_power() == 0.0)
        {
            // Zero channel: nothing to optimize
            record(sol.trace, 0.0, opts.trace);
            sol.trace.converged = true;
            sol.trace.wall_time = std::chrono::duration<double>(Clock::now() - start).count();
            return sol;
        }

        std::vector<CMat> hk(n_users);
        for (std::size_t k = 0; k < n_users; ++k)
            hk[k] = s.user_channel(k);

        double objective = weighted_sum_rate(s, sol.v);
        record(sol.trace, objective, opts.trace);
        for (std::size_t it = 1; it <= opts.max_iter; ++it)
        {
            at_iteration(it, [&]
                         {
                             const CMat v_all = hstack(sol.v.v, n_tx);
                             const double power = sol.v.total_power();
                             std::vector<CMat> u(n_users), w(n_users);
                             for (std::size_t k = 0; k < n_users; ++k)
                             {
                                 const CMat rx = hk[k] * v_all;
                                 CMat j = CMat::identity(n_rx) * (ratio * power);
                                 j += times_adjoint(rx, rx);
                                 const CMat own = hk[k] * sol.v.v[k];
                                 u[k] = Cholesky(j).solve(own);
                                 CMat e = CMat::identity(own.cols());
                                 e -= adjoint_times(u[k], own);
                                 try
                                 {
                                     w[k] = Cholesky(e).inverse();
                                 }
                                 catch (const NotPositiveDefinite &err)
                                 {
                                     throw SingularMse(std::string("full_wmmse_solve: ") + err.what());
                                 }
                             }
                             const auto m = mse_weights(u, w);
                             double trace_sum = 0.0;
                             for (std::size_t k = 0; k < n_users; ++k)
                                 trace_sum += s.alpha[k] * trace_real(m[k]);
                             CMat system = CMat::identity(n_tx) * (ratio * trace_sum);
                             std::vector<CMat> rhs(n_users);
                             for (std::size_t k = 0; k < n_users; ++k)
                             {
                                 system.add_scaled(adjoint_times(hk[k], m[k] * hk[k]), s.alpha[k]);
                                 rhs[k] = adjoint_times(hk[k], u[k] * w[k]) * s.alpha[k];
                             }
                             const CMat v_new = Cholesky(system).solve(hstack(rhs, n_tx));
                             sol.v.v = hsplit(v_new, s.d);
                             const double p = sol.v.total_power();
                             if (p > 0.0)
                                 for (auto &vk : sol.v.v)
                                     vk *= 1.0 / std::sqrt(p);
                         });
            const double next = weighted_sum_rate(s, sol.v);
            record(sol.trace, next, opts.trace);
            sol.trace.iterations = it;
            const double change = std::abs(next - objective);
            objective = next;
            if (change < opts.tol)
            {
                sol.trace.converged = true;
                break;
            }
        }
        sol.trace.wall_time = std::chrono::duration<double>(Clock::now() - start).count();
        return sol;
    }

    BeamformerSet zf_solve(const ChannelSample &s)
    {
        const std::size_t n_users = s.n_users(), n_rx = s.n_rx();
        CMat z;
        try
        {
            z = Cholesky(gram(s.h)).solve(s.h); // (H H^H)^{-1} H, its adjoint holds the ZF directions
        }
        catch (const NotPositiveDefinite &e)
        {
            throw SingularChannel(std::string("zf_solve: H H^H is singular: ") + e.what());
        }

        const double stream_power = 1.0 / static_cast<double>(s.total_streams());
        BeamformerSet out;
        out.v.reserve(n_users);
        for (std::size_t k = 0; k < n_users; ++k)
        {
            const auto dk = static_cast<std::size_t>(s.d[k]);
            // With equal stream power p the post-ZF rate of column c is log(1 + p / ||c||^2),
            // so the best columns are the shortest ones.
            std::vector<std::size_t> order(n_rx);
            std::iota(order.begin(), order.end(), 0);
            std::vector<double> norm2(n_rx);
            for (std::size_t r = 0; r < n_rx; ++r)
                norm2[r] = z.row_block(k * n_rx + r, 1).frobenius_norm2();
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return norm2[a] < norm2[b]; });
            std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(dk));

            CMat vk(s.n_tx(), dk);
            for (std::size_t c = 0; c < dk; ++c)
            {
                const std::size_t r = order[c];
                CMat col = z.row_block(k * n_rx + r, 1).adjoint();
                col *= std::sqrt(stream_power / norm2[r]);
                vk.set_col_block(c, col);
            }
            out.v.push_back(std::move(vk));
        }
        return out;
    }

    BeamformerSet reconstruct_v(const ChannelSample &s, const CMat &channel_gram, const std::vector<CMat> &u,
                                const std::vector<CMat> &w)
    {
        check_state(s, u, "reconstruct_v");
        check_state(s, w, "reconstruct_v");
        bool any = false;
        for (std::size_t k = 0; k < u.size(); ++k)
        {
            if (u[k].rows() != s.n_rx() || u[k].cols() != static_cast<std::size_t>(s.d[k]) ||
                w[k].rows() != u[k].cols() || w[k].cols() != u[k].cols())
                throw ShapeMismatch("reconstruct_v: U/W shapes inconsistent with stream counts");
            any = any || !(u[k] * w[k]).all_zero();
        }
        if (!any)
            throw AllZeroOutput("reconstruct_v: every U_k W_k is zero");

        WmmseState state;
        state.u = u;
        state.w.reserve(w.size());
        for (const auto &wk : w)
            state.w.push_back(hermitian_part(wk));
        BeamformerSet v = precoders_from_x(s.h, x_update(s, channel_gram, state));
        if (v.total_power() == 0.0)
            throw AllZeroOutput("reconstruct_v: reconstructed precoders are all zero");
        return v;
    }
}
