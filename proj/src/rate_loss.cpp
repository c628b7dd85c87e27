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

// Reverse-mode derivative of -sum_k alpha_k R_k with respect to the packed (U, W) output.
//
// Complex gradients follow G = dL/dRe(Z) + i dL/dIm(Z), so that dL = Re Tr(G^H dZ). With that convention
//   Z = A B           ->  G_A = G_Z B^H,  G_B = A^H G_Z
//   X = A^{-1} B      ->  G_B = A^{-H} G_X,  G_A = -G_B X^H
//   L = ln det S(T)   ->  G_T = 2 S^{-1} T  for S = sigma2 I + T T^H + ...

#include "bflab/neuralnet.hpp"

#include <cmath>

namespace bflab
{
    namespace
    {
        struct Stacked
        {
            CMat all;
            std::vector<std::size_t> offset; // first column of each user
        };

        Stacked hstack(const std::vector<CMat> &blocks)
        {
            Stacked s;
            std::size_t cols = 0;
            for (const auto &b : blocks)
            {
                s.offset.push_back(cols);
                cols += b.cols();
            }
            s.all = CMat(blocks.empty() ? 0 : blocks.front().rows(), cols);
            for (std::size_t k = 0; k < blocks.size(); ++k)
                s.all.set_col_block(s.offset[k], blocks[k]);
            return s;
        }
    }

    RateLossResult rate_loss(const ChannelSample &s, const PackedOutput &out)
    {
        const std::size_t users = s.n_users(), n_rx = s.n_rx();
        const double ratio = s.sigma2 / s.p_max;
        const auto [u, w] = unpack_uw(out, s.d, n_rx);

        // Forward: X solves (c Hbar + sum_i alpha_i Hbar_i^H M_i Hbar_i) X_k = alpha_k Hbar_k^H U_k W_k
        const CMat hbar = gram(s.h);
        std::vector<CMat> hb(users), uw(users), m(users), rhs(users);
        bool any = false;
        for (std::size_t k = 0; k < users; ++k)
        {
            hb[k] = hbar.row_block(k * n_rx, n_rx);
            uw[k] = u[k] * w[k];
            m[k] = times_adjoint(uw[k], u[k]);
            any = any || !uw[k].all_zero();
        }
        if (!any)
            throw AllZeroOutput("rate_loss: every U_k W_k is zero");

        double c = 0.0;
        for (std::size_t k = 0; k < users; ++k)
            c += s.alpha[k] * trace_real(m[k]);
        CMat a = hbar * (ratio * c);
        for (std::size_t k = 0; k < users; ++k)
        {
            a += adjoint_times(hb[k], m[k] * hb[k]) * s.alpha[k];
            rhs[k] = adjoint_times(hb[k], uw[k]) * s.alpha[k];
        }
        const Stacked b = hstack(rhs);
        const Cholesky chol(a);
        const CMat x = chol.solve(b.all);

        const CMat v_raw = adjoint_times(s.h, x);
        const double power = v_raw.frobenius_norm2();
        if (!(power > 0.0))
            throw AllZeroOutput("rate_loss: reconstructed precoders vanish");
        const double scale = 1.0 / std::sqrt(power);
        const CMat v = v_raw * scale;

        // Rates and the gradient with respect to the normalized precoders
        RateLossResult r;
        CMat g_v(v.rows(), v.cols());
        for (std::size_t k = 0; k < users; ++k)
        {
            const CMat hk = s.user_channel(k);
            const CMat t = hk * v; // every user's streams as seen by user k
            const CMat own = t.col_block(b.offset[k], static_cast<std::size_t>(s.d[k]));
            CMat noise = CMat::identity(n_rx) * s.sigma2;
            for (std::size_t j = 0; j < users; ++j)
                if (j != k)
                {
                    const CMat tj = t.col_block(b.offset[j], static_cast<std::size_t>(s.d[j]));
                    noise += times_adjoint(tj, tj);
                }
            const CMat total = noise + times_adjoint(own, own);
            const Cholesky chol_total(total), chol_noise(noise);
            r.loss -= s.alpha[k] * (chol_total.logdet() - chol_noise.logdet());

            CMat g_t = chol_total.solve(t) * (-2.0 * s.alpha[k]);
            CMat interference = t;
            interference.set_col_block(b.offset[k], CMat(n_rx, static_cast<std::size_t>(s.d[k])));
            g_t += chol_noise.solve(interference) * (2.0 * s.alpha[k]);
            g_v += adjoint_times(hk, g_t);
        }

        // Power normalization V = V_raw / ||V_raw||
        CMat g_raw = (g_v - v * inner_real(g_v, v)) * scale;
        const CMat g_x = s.h * g_raw;

        // Linear solve and the system matrix
        const CMat g_b = chol.solve(g_x);
        const CMat g_a = times_adjoint(g_b, x) * -1.0;
        const double g_c = ratio * inner_real(g_a, hbar);

        std::vector<CMat> g_u(users), g_w(users);
        for (std::size_t k = 0; k < users; ++k)
        {
            const std::size_t dk = static_cast<std::size_t>(s.d[k]);
            CMat g_m = hb[k] * times_adjoint(g_a, hb[k]) * s.alpha[k];
            for (std::size_t i = 0; i < n_rx; ++i)
                g_m(i, i) += g_c * s.alpha[k];
            const CMat g_uw = hb[k] * g_b.col_block(b.offset[k], dk) * s.alpha[k];

            // M = U W U^H and P = U W
            g_u[k] = times_adjoint(g_uw, w[k]) + g_m * times_adjoint(u[k], w[k]) + adjoint_times(g_m, u[k]) * w[k];
            g_w[k] = adjoint_times(u[k], g_uw) + adjoint_times(u[k], g_m * u[k]);
        }

        // Unpacking: U entries map to (Re, Im) pairs, W is rebuilt Hermitian from its upper triangle
        r.grad.assign(out.v.size(), 0.0);
        const std::size_t slot = slot_length(n_rx);
        for (std::size_t k = 0; k < users; ++k)
        {
            const std::size_t base = k * slot, dk = static_cast<std::size_t>(s.d[k]);
            for (std::size_t col = 0; col < dk; ++col)
                for (std::size_t row = 0; row < n_rx; ++row)
                {
                    const std::size_t at = base + 2 * (col * n_rx + row);
                    r.grad[at] = g_u[k](row, col).real();
                    r.grad[at + 1] = g_u[k](row, col).imag();
                }
            for (std::size_t row = 0; row < dk; ++row)
            {
                r.grad[base + w_slot_offset(n_rx, row, row)] = g_w[k](row, row).real();
                for (std::size_t col = row + 1; col < dk; ++col)
                {
                    const std::size_t at = base + w_slot_offset(n_rx, row, col);
                    r.grad[at] = g_w[k](row, col).real() + g_w[k](col, row).real();
                    r.grad[at + 1] = g_w[k](row, col).imag() - g_w[k](col, row).imag();
                }
            }
        }
        return r;
    }
}
