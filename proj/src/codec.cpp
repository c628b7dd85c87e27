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

#include "bflab/codec.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace bflab
{
    namespace
    {
        void check_streams(std::span<const int> d)
        {
            for (int dk : d)
                if (dk < 1 || dk > static_cast<int>(kMaxStreams))
                    throw ShapeMismatch("stream count " + std::to_string(dk) + " outside [1, " +
                                        std::to_string(kMaxStreams) + "]");
        }
    }

    std::size_t slot_length(std::size_t n_rx)
    {
        return 2 * n_rx * kMaxStreams + kMaxStreams * kMaxStreams;
    }

    std::size_t packed_output_length(std::size_t n_users, std::size_t n_rx)
    {
        return n_users * slot_length(n_rx);
    }

    std::size_t w_slot_offset(std::size_t n_rx, std::size_t r, std::size_t c)
    {
        // Row r of the upper triangle starts after rows 0..r-1, each holding one real diagonal
        // entry plus two reals per off-diagonal entry.
        std::size_t offset = 2 * n_rx * kMaxStreams;
        for (std::size_t row = 0; row < r; ++row)
            offset += 1 + 2 * (kMaxStreams - row - 1);
        if (c > r)
            offset += 1 + 2 * (c - r - 1);
        return offset;
    }

    PackedInput pack_gram(const CMat &g)
    {
        if (!g.is_square())
            throw NotSquare("pack_gram: matrix is not square");
        const double tol = 1e-9 * std::max(1.0, g.max_abs());
        if (!is_hermitian(g, tol))
            throw NotHermitian("pack_gram: input is not Hermitian");

        PackedInput p;
        p.n = g.rows();
        p.m.assign(p.n * p.n, 0.0);
        for (std::size_t i = 0; i < p.n; ++i)
            for (std::size_t j = 0; j < p.n; ++j)
                p.at(i, j) = i <= j ? g(i, j).real() : g(i, j).imag();
        return p;
    }

    CMat unpack_gram(const PackedInput &p)
    {
        CMat g(p.n, p.n);
        for (std::size_t i = 0; i < p.n; ++i)
        {
            g(i, i) = p.at(i, i);
            for (std::size_t j = i + 1; j < p.n; ++j)
            {
                // Lower triangle carries Im g[j][i] = -Im g[i][j]
                const cplx upper(p.at(i, j), -p.at(j, i));
                g(i, j) = upper;
                g(j, i) = std::conj(upper);
            }
        }
        return g;
    }

    PackedOutput pack_uw(const std::vector<CMat> &u, const std::vector<CMat> &w, std::span<const int> d)
    {
        const std::size_t n_users = d.size();
        if (u.size() != n_users || w.size() != n_users)
            throw ShapeMismatch("pack_uw: expected " + std::to_string(n_users) + " users");
        check_streams(d);
        const std::size_t n_rx = n_users == 0 ? 0 : u[0].rows();
        const std::size_t slot = slot_length(n_rx);

        PackedOutput p;
        p.v.assign(n_users * slot, 0.0);
        for (std::size_t k = 0; k < n_users; ++k)
        {
            const auto dk = static_cast<std::size_t>(d[k]);
            if (u[k].rows() != n_rx || u[k].cols() != dk || w[k].rows() != dk || w[k].cols() != dk)
                throw ShapeMismatch("pack_uw: user " + std::to_string(k) + " has inconsistent U/W shapes");
            double *out = p.v.data() + k * slot;
            for (std::size_t c = 0; c < dk; ++c)
                for (std::size_t r = 0; r < n_rx; ++r)
                {
                    out[2 * (c * n_rx + r)] = u[k](r, c).real();
                    out[2 * (c * n_rx + r) + 1] = u[k](r, c).imag();
                }
            for (std::size_t r = 0; r < dk; ++r)
            {
                out[w_slot_offset(n_rx, r, r)] = w[k](r, r).real();
                for (std::size_t c = r + 1; c < dk; ++c)
                {
                    const std::size_t off = w_slot_offset(n_rx, r, c);
                    out[off] = w[k](r, c).real();
                    out[off + 1] = w[k](r, c).imag();
                }
            }
        }
        return p;
    }

    std::pair<std::vector<CMat>, std::vector<CMat>> unpack_uw(const PackedOutput &p, std::span<const int> d,
                                                               std::size_t n_rx)
    {
        check_streams(d);
        const std::size_t slot = slot_length(n_rx);
        if (p.v.size() != d.size() * slot)
            throw ShapeMismatch("unpack_uw: packed length " + std::to_string(p.v.size()) + ", expected " +
                                std::to_string(d.size() * slot));

        std::vector<CMat> u, w;
        u.reserve(d.size());
        w.reserve(d.size());
        for (std::size_t k = 0; k < d.size(); ++k)
        {
            const auto dk = static_cast<std::size_t>(d[k]);
            const double *in = p.v.data() + k * slot;
            CMat uk(n_rx, dk), wk(dk, dk);
            for (std::size_t c = 0; c < dk; ++c)
                for (std::size_t r = 0; r < n_rx; ++r)
                    uk(r, c) = cplx(in[2 * (c * n_rx + r)], in[2 * (c * n_rx + r) + 1]);
            for (std::size_t r = 0; r < dk; ++r)
            {
                wk(r, r) = in[w_slot_offset(n_rx, r, r)];
                for (std::size_t c = r + 1; c < dk; ++c)
                {
                    const std::size_t off = w_slot_offset(n_rx, r, c);
                    wk(r, c) = cplx(in[off], in[off + 1]);
                    wk(c, r) = std::conj(wk(r, c));
                }
            }
            u.push_back(std::move(uk));
            w.push_back(std::move(wk));
        }
        return {std::move(u), std::move(w)};
    }

    std::vector<double> stream_mask(std::span<const int> d, std::size_t n_rx)
    {
        check_streams(d);
        const std::size_t slot = slot_length(n_rx);
        std::vector<double> mask(d.size() * slot, 0.0);
        for (std::size_t k = 0; k < d.size(); ++k)
        {
            const auto dk = static_cast<std::size_t>(d[k]);
            double *out = mask.data() + k * slot;
            std::fill(out, out + 2 * n_rx * dk, 1.0);
            for (std::size_t r = 0; r < dk; ++r)
            {
                out[w_slot_offset(n_rx, r, r)] = 1.0;
                for (std::size_t c = r + 1; c < dk; ++c)
                {
                    const std::size_t off = w_slot_offset(n_rx, r, c);
                    out[off] = 1.0;
                    out[off + 1] = 1.0;
                }
            }
        }
        return mask;
    }
}
