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

#ifndef BFLAB_CHANNEL_HPP
#define BFLAB_CHANNEL_HPP

#include "bflab/codec.hpp"
#include "bflab/numerics.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace bflab
{
    // Single-cell downlink scenario: n_tx base-station antennas, n_users users with n_rx antennas each
    struct ChannelConfig
    {
        std::size_t n_tx = 8;
        std::size_t n_users = 2;
        std::size_t n_rx = 2;
        double snr_db = 20.0;
        double p_max = 1.0;       // power budget in W
        double dist_min_km = 0.1; // user distances are uniform on [dist_min_km, dist_max_km]
        double dist_max_km = 0.3;
        std::uint64_t seed = 0;

        // Throws std::invalid_argument
        void validate() const;
        std::size_t stacked_rows() const { return n_users * n_rx; }
    };

    // Presets with n_rx = 2: case 1 (8, 2), case 2 (8, 4), case 3 (32, 12) as (n_tx, n_users)
    ChannelConfig case_config(int case_id);

    struct ChannelSample
    {
        CMat h;                  // (n_users * n_rx) x n_tx, per-user blocks stacked vertically
        std::vector<double> alpha; // priorities, sum equals n_users
        std::vector<int> d;        // stream counts in {1, 2}
        double sigma2 = 1.0;
        double p_max = 1.0;

        std::size_t n_users() const { return alpha.size(); }
        std::size_t n_rx() const { return alpha.empty() ? 0 : h.rows() / alpha.size(); }
        std::size_t n_tx() const { return h.cols(); }
        CMat user_channel(std::size_t k) const { return h.row_block(k * n_rx(), n_rx()); }
        std::size_t total_streams() const;
    };

    struct Dataset
    {
        ChannelConfig config;
        std::vector<ChannelSample> samples;
        std::optional<std::vector<PackedOutput>> labels;
    };

    // 128.1 + 37.6 log10(d) in dB. Throws NonPositiveDistance.
    double pathloss_db(double omega_km);

    ChannelSample sample_channel(const ChannelConfig &cfg, std::uint64_t seed);

    // Common noise power: geometric mean over users of ||H_k||_F^2 / n_rx, times 10^(-snr/10).
    // Throws ZeroChannel when some user block is identically zero.
    double noise_power(const CMat &h, std::size_t n_users, double snr_db);

    // k priorities, uniform(0,1) rescaled to sum to k
    std::vector<double> sample_weights(std::size_t k, std::uint64_t seed);

    // k stream counts, each 1 or 2 with probability 1/2
    std::vector<int> sample_streams(std::size_t k, std::uint64_t seed);

    // Scales H by sqrt(p_max / sigma2) and sets sigma2 = p_max = 1
    ChannelSample normalize_sample(const ChannelSample &s);

    // Gram of the priority-scaled channel: block (k, j) is sqrt(alpha_k alpha_j) H_k H_j^H
    CMat weighted_gram(const ChannelSample &s);

    // Sample i is drawn with seed cfg.seed + i; runs across worker threads
    Dataset generate_dataset(const ChannelConfig &cfg, std::size_t count);

    // Binary dataset file, see docs/FORMATS.md. Throws IoError / FormatError.
    void save_dataset(const Dataset &ds, const std::filesystem::path &path);
    Dataset load_dataset(const std::filesystem::path &path);
}

#endif
