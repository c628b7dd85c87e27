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

#ifndef BFLAB_CODEC_HPP
#define BFLAB_CODEC_HPP

#include "bflab/numerics.hpp"

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

// Packing between complex solver objects and the real-valued network input/output.
//
// Input: an n x n Hermitian Gram matrix g becomes one real n x n plane m with
//   m[i][j] = Re g[i][j]  for i <= j   (upper triangle and diagonal)
//   m[i][j] = Im g[i][j]  for i >  j   (strict lower triangle)
//
// Output: one fixed-size slot per user, kMaxStreams = 2 streams, n_rx receive antennas:
//   [0, 2*n_rx*kMaxStreams)   U columns in column-major order, (Re, Im) per entry
//   then W upper triangle row-major: diagonal entries as one real, off-diagonal as (Re, Im)
// For n_rx = 2 the slot holds 12 reals: U at 0..7, W as [W00, Re W01, Im W01, W11] at 8..11.
// A single-stream user (d = 1) owns only the first U column and W00 (5 reals for n_rx = 2).
namespace bflab
{
    inline constexpr std::size_t kMaxStreams = 2;

    struct PackedInput
    {
        std::size_t n = 0;
        std::vector<double> m; // row-major n x n

        double &at(std::size_t i, std::size_t j) { return m[i * n + j]; }
        double at(std::size_t i, std::size_t j) const { return m[i * n + j]; }
    };

    struct PackedOutput
    {
        std::vector<double> v;
    };

    std::size_t slot_length(std::size_t n_rx);
    std::size_t packed_output_length(std::size_t n_users, std::size_t n_rx);

    // Offset of W(r, c), r <= c, inside a user slot
    std::size_t w_slot_offset(std::size_t n_rx, std::size_t r, std::size_t c);

    // Throws NotHermitian if g deviates from Hermitian by more than 1e-9 (relative to max |g_ij| when > 1)
    PackedInput pack_gram(const CMat &g);
    CMat unpack_gram(const PackedInput &p);

    // u[k]: n_rx x d[k], w[k]: d[k] x d[k] Hermitian. Throws ShapeMismatch.
    PackedOutput pack_uw(const std::vector<CMat> &u, const std::vector<CMat> &w, std::span<const int> d);

    // Masked positions are ignored; W comes back Hermitian by construction
    std::pair<std::vector<CMat>, std::vector<CMat>> unpack_uw(const PackedOutput &p, std::span<const int> d,
                                                               std::size_t n_rx);

    // 1.0 at positions owned by the user's d streams, 0.0 elsewhere
    std::vector<double> stream_mask(std::span<const int> d, std::size_t n_rx);
}

#endif
