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

#include "bflab/channel.hpp"
#include "bflab/binary_io.hpp"
#include "bflab/parallel.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

namespace bflab
{
    namespace
    {
        constexpr char kDatasetMagic[8] = {'B', 'F', 'L', 'A', 'B', '0', '0', '1'};

        nlohmann::json config_to_json(const ChannelConfig &cfg)
        {
            return {{"n_tx", cfg.n_tx},
                    {"n_users", cfg.n_users},
                    {"n_rx", cfg.n_rx},
                    {"snr_db", cfg.snr_db},
                    {"p_max", cfg.p_max},
                    {"dist_min_km", cfg.dist_min_km},
                    {"dist_max_km", cfg.dist_max_km},
                    {"seed", cfg.seed}};
        }

        ChannelConfig config_from_json(const nlohmann::json &j)
        {
            ChannelConfig cfg;
            cfg.n_tx = j.at("n_tx").get<std::size_t>();
            cfg.n_users = j.at("n_users").get<std::size_t>();
            cfg.n_rx = j.at("n_rx").get<std::size_t>();
            cfg.snr_db = j.at("snr_db").get<double>();
            cfg.p_max = j.at("p_max").get<double>();
            cfg.dist_min_km = j.at("dist_min_km").get<double>();
            cfg.dist_max_km = j.at("dist_max_km").get<double>();
            cfg.seed = j.at("seed").get<std::uint64_t>();
            return cfg;
        }
    }

    void ChannelConfig::validate() const
    {
        if (n_tx == 0 || n_users == 0 || n_rx == 0)
            throw std::invalid_argument("ChannelConfig: antenna and user counts must be positive");
        if (n_tx < n_users * n_rx)
            throw std::invalid_argument("ChannelConfig: n_tx (" + std::to_string(n_tx) +
                                        ") must be at least n_users * n_rx (" + std::to_string(n_users * n_rx) +
                                        ")");
        if (!(dist_min_km > 0.0) || !(dist_min_km <= dist_max_km))
            throw std::invalid_argument("ChannelConfig: need 0 < dist_min_km <= dist_max_km");
        if (!(p_max > 0.0))
            throw std::invalid_argument("ChannelConfig: p_max must be positive");
        if (!std::isfinite(snr_db))
            throw std::invalid_argument("ChannelConfig: snr_db must be finite");
    }

    ChannelConfig case_config(int case_id)
    {
        ChannelConfig cfg;
        cfg.n_rx = 2;
        switch (case_id)
        {
        case 1:
            cfg.n_tx = 8;
            cfg.n_users = 2;
            break;
        case 2:
            cfg.n_tx = 8;
            cfg.n_users = 4;
            break;
        case 3:
            cfg.n_tx = 32;
            cfg.n_users = 12;
            break;
        default:
            throw std::invalid_argument("case_config: unknown case " + std::to_string(case_id));
        }
        return cfg;
    }

    std::size_t ChannelSample::total_streams() const
    {
        return static_cast<std::size_t>(std::accumulate(d.begin(), d.end(), 0));
    }

    double pathloss_db(double omega_km)
    {
        if (!(omega_km > 0.0))
            throw NonPositiveDistance("pathloss_db: distance must be positive, got " + std::to_string(omega_km));
        return 128.1 + 37.6 * std::log10(omega_km);
    }

    double noise_power(const CMat &h, std::size_t n_users, double snr_db)
    {
        if (n_users == 0 || h.rows() % n_users != 0)
            throw ShapeMismatch("noise_power: " + std::to_string(h.rows()) + " rows do not split into " +
                                std::to_string(n_users) + " users");
        const std::size_t n_rx = h.rows() / n_users;
        double mean_log = 0.0;
        for (std::size_t k = 0; k < n_users; ++k)
        {
            const double energy = h.row_block(k * n_rx, n_rx).frobenius_norm2();
            if (!(energy > 0.0))
                throw ZeroChannel("noise_power: user " + std::to_string(k) + " has an all-zero channel");
            mean_log += std::log10(energy / static_cast<double>(n_rx));
        }
        mean_log /= static_cast<double>(n_users);
        return std::pow(10.0, mean_log) * std::pow(10.0, -snr_db / 10.0);
    }

    std::vector<double> sample_weights(std::size_t k, std::uint64_t seed)
    {
        if (k == 0)
            throw std::invalid_argument("sample_weights: k must be positive");
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::vector<double> alpha(k);
        for (auto &a : alpha)
        {
            do
                a = unif(rng);
            while (a == 0.0);
        }
        const double scale = static_cast<double>(k) / std::accumulate(alpha.begin(), alpha.end(), 0.0);
        for (auto &a : alpha)
            a *= scale;
        return alpha;
    }

    std::vector<int> sample_streams(std::size_t k, std::uint64_t seed)
    {
        if (k == 0)
            throw std::invalid_argument("sample_streams: k must be positive");
        std::mt19937_64 rng(seed);
        std::bernoulli_distribution coin(0.5);
        std::vector<int> d(k);
        for (auto &dk : d)
            dk = coin(rng) ? 2 : 1;
        return d;
    }

    ChannelSample sample_channel(const ChannelConfig &cfg, std::uint64_t seed)
    {
        cfg.validate();
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> distance(cfg.dist_min_km, cfg.dist_max_km);
        std::normal_distribution<double> normal(0.0, 1.0);

        ChannelSample s;
        s.h = CMat(cfg.stacked_rows(), cfg.n_tx);
        for (std::size_t k = 0; k < cfg.n_users; ++k)
        {
            const double omega = distance(rng);
            const double gain = std::pow(10.0, -pathloss_db(omega) / 10.0);
            // Circular complex Gaussian with E|h|^2 = gain
            const double sd = std::sqrt(gain / 2.0);
            for (std::size_t r = 0; r < cfg.n_rx; ++r)
                for (std::size_t t = 0; t < cfg.n_tx; ++t)
                {
                    const double re = normal(rng);
                    const double im = normal(rng);
                    s.h(k * cfg.n_rx + r, t) = cplx(sd * re, sd * im);
                }
        }
        s.sigma2 = noise_power(s.h, cfg.n_users, cfg.snr_db);
        s.p_max = cfg.p_max;
        s.alpha = sample_weights(cfg.n_users, rng());
        s.d = sample_streams(cfg.n_users, rng());
        return s;
    }

    ChannelSample normalize_sample(const ChannelSample &s)
    {
        ChannelSample out = s;
        out.h *= std::sqrt(s.p_max / s.sigma2);
        out.sigma2 = 1.0;
        out.p_max = 1.0;
        return out;
    }

    CMat weighted_gram(const ChannelSample &s)
    {
        CMat scaled = s.h;
        const std::size_t n_rx = s.n_rx();
        for (std::size_t k = 0; k < s.n_users(); ++k)
        {
            const double root = std::sqrt(s.alpha[k]);
            for (std::size_t r = 0; r < n_rx; ++r)
                for (std::size_t t = 0; t < scaled.cols(); ++t)
                    scaled(k * n_rx + r, t) *= root;
        }
        return gram(scaled);
    }

    Dataset generate_dataset(const ChannelConfig &cfg, std::size_t count)
    {
        cfg.validate();
        Dataset ds;
        ds.config = cfg;
        ds.samples.resize(count);
        parallel_for(count, [&](std::size_t i) { ds.samples[i] = sample_channel(cfg, cfg.seed + i); });
        return ds;
    }

    void save_dataset(const Dataset &ds, const std::filesystem::path &path)
    {
        const std::size_t label_len = packed_output_length(ds.config.n_users, ds.config.n_rx);
        if (ds.labels && ds.labels->size() != ds.samples.size())
            throw std::invalid_argument("save_dataset: label count differs from sample count");

        std::ofstream out(path, std::ios::binary);
        if (!out)
            throw IoError("save_dataset: cannot open " + path.string());

        nlohmann::json header = {{"format", "bflab-dataset/1"},
                                 {"config", config_to_json(ds.config)},
                                 {"count", ds.samples.size()},
                                 {"has_labels", ds.labels.has_value()},
                                 {"label_length", label_len}};
        io::write_magic(out, kDatasetMagic);
        io::write_json_blob(out, header);

        const std::size_t rows = ds.config.stacked_rows();
        for (std::size_t i = 0; i < ds.samples.size(); ++i)
        {
            const auto &s = ds.samples[i];
            if (s.h.rows() != rows || s.h.cols() != ds.config.n_tx || s.alpha.size() != ds.config.n_users ||
                s.d.size() != ds.config.n_users)
                throw ShapeMismatch("save_dataset: sample " + std::to_string(i) + " does not match the config");
            for (const auto &x : s.h.data())
            {
                io::write_f64(out, x.real());
                io::write_f64(out, x.imag());
            }
            for (double a : s.alpha)
                io::write_f64(out, a);
            for (int dk : s.d)
                io::write_u8(out, static_cast<std::uint8_t>(dk));
            io::write_f64(out, s.sigma2);
            io::write_f64(out, s.p_max);
            if (ds.labels)
            {
                const auto &lab = (*ds.labels)[i].v;
                if (lab.size() != label_len)
                    throw ShapeMismatch("save_dataset: label " + std::to_string(i) + " has wrong length");
                for (double x : lab)
                    io::write_f64(out, x);
            }
        }
        if (!out)
            throw IoError("save_dataset: write failed for " + path.string());
    }

    Dataset load_dataset(const std::filesystem::path &path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw IoError("load_dataset: cannot open " + path.string());
        io::expect_magic(in, kDatasetMagic, "dataset");
        const auto header = io::read_json_blob(in);

        Dataset ds;
        std::size_t count = 0, label_len = 0;
        bool has_labels = false;
        try
        {
            ds.config = config_from_json(header.at("config"));
            count = header.at("count").get<std::size_t>();
            has_labels = header.at("has_labels").get<bool>();
            label_len = header.at("label_length").get<std::size_t>();
        }
        catch (const nlohmann::json::exception &e)
        {
            throw FormatError(std::string("load_dataset: bad header: ") + e.what());
        }
        ds.config.validate();
        if (label_len != packed_output_length(ds.config.n_users, ds.config.n_rx))
            throw FormatError("load_dataset: label length does not match the config");

        const std::size_t rows = ds.config.stacked_rows(), cols = ds.config.n_tx, k = ds.config.n_users;
        ds.samples.resize(count);
        if (has_labels)
            ds.labels.emplace(count);
        for (std::size_t i = 0; i < count; ++i)
        {
            auto &s = ds.samples[i];
            std::vector<cplx> h(rows * cols);
            for (auto &x : h)
            {
                const double re = io::read_f64(in);
                const double im = io::read_f64(in);
                x = cplx(re, im);
            }
            s.h = CMat(rows, cols, std::move(h));
            s.alpha.resize(k);
            for (auto &a : s.alpha)
                a = io::read_f64(in);
            s.d.resize(k);
            for (auto &dk : s.d)
                dk = io::read_u8(in);
            s.sigma2 = io::read_f64(in);
            s.p_max = io::read_f64(in);
            if (has_labels)
            {
                auto &lab = (*ds.labels)[i].v;
                lab.resize(label_len);
                for (auto &x : lab)
                    x = io::read_f64(in);
            }
        }
        return ds;
    }
}
