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

#include "bflab/trainer.hpp"

#include "bflab/errors.hpp"
#include "bflab/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace bflab
{
    namespace
    {
        using clock = std::chrono::steady_clock;

        double seconds_since(clock::time_point start)
        {
            return std::chrono::duration<double>(clock::now() - start).count();
        }

        std::vector<ChannelSample> normalized_samples(const Dataset &ds)
        {
            std::vector<ChannelSample> out(ds.samples.size());
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] = normalize_sample(ds.samples[i]);
            return out;
        }

        // Reference sum-rates for the validation part: from labels when present, else a fresh solve
        std::vector<double> reference_rates(const Dataset &ds, std::span<const ChannelSample> normalized,
                                            std::size_t begin, std::size_t end)
        {
            std::vector<double> ref(end - begin, 0.0);
            parallel_for(end - begin, [&](std::size_t i) {
                const ChannelSample &s = normalized[begin + i];
                try
                {
                    ref[i] = ds.labels ? label_wsr(s, (*ds.labels)[begin + i])
                                       : weighted_sum_rate(s, rwmmse_solve(s, {500, 1e-6, false}).v);
                }
                catch (const NumericalError &)
                {
                    ref[i] = 0.0;
                }
            });
            return ref;
        }

        // Mean eval-mode Huber loss over a labeled range, in chunks
        double eval_huber(const NetParams &p, std::span<const ChannelSample> samples,
                          std::span<const PackedOutput> labels, double delta)
        {
            if (samples.empty())
                return 0.0;
            constexpr std::size_t kChunk = 256;
            double weighted = 0.0;
            for (std::size_t first = 0; first < samples.size(); first += kChunk)
            {
                const std::size_t n = std::min(kChunk, samples.size() - first);
                std::vector<PackedInput> in(n);
                std::vector<std::vector<int>> d(n);
                std::vector<double> target;
                for (std::size_t i = 0; i < n; ++i)
                {
                    in[i] = network_input(samples[first + i]);
                    d[i] = samples[first + i].d;
                    target.insert(target.end(), labels[first + i].v.begin(), labels[first + i].v.end());
                }
                const ForwardCache c = cmbnn_forward(p, in, d, NetMode::eval);
                weighted += huber_loss(std::span<const double>(c.output.data), target, delta).loss *
                            static_cast<double>(n);
            }
            return weighted / static_cast<double>(samples.size());
        }

        std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed)
        {
            std::vector<std::size_t> order(n);
            std::iota(order.begin(), order.end(), 0);
            std::mt19937_64 rng(seed);
            std::shuffle(order.begin(), order.end(), rng);
            return order;
        }

        // Batches of the shuffled order; a trailing batch of one sample is dropped (BN needs two)
        std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t> &order, std::size_t size)
        {
            std::vector<std::vector<std::size_t>> batches;
            for (std::size_t first = 0; first < order.size(); first += size)
            {
                const std::size_t last = std::min(order.size(), first + size);
                if (last - first < 2)
                    break;
                batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(first),
                                     order.begin() + static_cast<std::ptrdiff_t>(last));
            }
            return batches;
        }

        std::string save_checkpoint(const NetParams &p, const TrainConfig &cfg, const std::string &phase,
                                    std::size_t epoch)
        {
            if (cfg.checkpoint_dir.empty())
                return {};
            std::filesystem::create_directories(cfg.checkpoint_dir);
            char name[64];
            std::snprintf(name, sizeof name, "%s_epoch%03zu.bfnn", phase.c_str(), epoch);
            const auto path = cfg.checkpoint_dir / name;
            save_model(p, path);
            return path.string();
        }

        void fill_split(TrainReport &r, const Split &split)
        {
            r.train_begin = 0;
            r.train_end = split.train_end;
            r.val_begin = split.train_end;
            r.val_end = split.size;
        }
    }

    void TrainConfig::validate() const
    {
        if (batch_size < 2)
            throw std::invalid_argument("TrainConfig: batch_size must be at least 2");
        if (!(lr > 0.0) || !std::isfinite(lr))
            throw std::invalid_argument("TrainConfig: lr must be positive");
        if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
            throw std::invalid_argument("TrainConfig: validation_fraction must lie in [0, 1)");
        if (!(huber_delta > 0.0))
            throw std::invalid_argument("TrainConfig: huber_delta must be positive");
    }

    Split split_dataset(std::size_t size, double validation_fraction)
    {
        const auto val = static_cast<std::size_t>(std::floor(static_cast<double>(size) * validation_fraction));
        return {size - val, size};
    }

    double label_wsr(const ChannelSample &normalized, const PackedOutput &label)
    {
        const auto [u, w] = unpack_uw(label, normalized.d, normalized.n_rx());
        return weighted_sum_rate(normalized, reconstruct_v(normalized, gram(normalized.h), u, w));
    }

    Dataset generate_labels(const Dataset &ds, const SolveOptions &opts, LabelReport *report)
    {
        opts.validate();
        const auto start = clock::now();
        const std::size_t n = ds.samples.size();
        std::vector<PackedOutput> labels(n);
        std::vector<char> ok(n, 0);
        parallel_for(n, [&](std::size_t i) {
            try
            {
                const ChannelSample s = normalize_sample(ds.samples[i]);
                const ReducedSolution sol = rwmmse_solve(s, opts);
                labels[i] = pack_uw(sol.state.u, sol.state.w, s.d);
                ok[i] = 1;
            }
            catch (const NumericalError &)
            {
                ok[i] = 0;
            }
        });

        Dataset out;
        out.config = ds.config;
        out.labels.emplace();
        LabelReport rep;
        for (std::size_t i = 0; i < n; ++i)
        {
            if (!ok[i])
            {
                rep.dropped_ids.push_back(i);
                continue;
            }
            out.samples.push_back(ds.samples[i]);
            out.labels->push_back(std::move(labels[i]));
        }
        rep.labeled = out.samples.size();
        rep.wall_time_s = seconds_since(start);
        if (report)
            *report = rep;
        return out;
    }

    double mean_ratio(const NetParams &p, std::span<const ChannelSample> normalized,
                      std::span<const double> reference_wsr, std::size_t *failed)
    {
        if (normalized.size() != reference_wsr.size())
            throw ShapeMismatch("mean_ratio: one reference per sample required");
        if (normalized.empty())
        {
            if (failed)
                *failed = 0;
            return 0.0;
        }
        std::vector<double> ratio(normalized.size(), 0.0);
        std::vector<char> bad(normalized.size(), 0);
        parallel_for(normalized.size(), [&](std::size_t i) {
            try
            {
                if (!(reference_wsr[i] > 1e-12))
                    throw DegenerateReference("mean_ratio: reference rate is not positive");
                ratio[i] = weighted_sum_rate(normalized[i], cmbnn_beamformers(p, normalized[i])) / reference_wsr[i];
            }
            catch (const NumericalError &)
            {
                bad[i] = 1;
            }
        });
        if (failed)
            *failed = static_cast<std::size_t>(std::count(bad.begin(), bad.end(), 1));
        return std::accumulate(ratio.begin(), ratio.end(), 0.0) / static_cast<double>(ratio.size());
    }

    TrainResult train_supervised(const Dataset &ds, const TrainConfig &cfg)
    {
        cfg.validate();
        if (!ds.labels || ds.labels->size() != ds.samples.size())
            throw std::invalid_argument("train_supervised: the dataset needs one label per sample");
        const auto start = clock::now();

        TrainResult result;
        result.params = NetParams::initialize(NetDims{ds.config.n_users, ds.config.n_rx}, cfg.seed);
        TrainReport &rep = result.report;
        rep.phase = "supervised";
        rep.seed = cfg.seed;
        rep.determinism = cfg.determinism;
        const Split split = split_dataset(ds.samples.size(), cfg.validation_fraction);
        fill_split(rep, split);

        const std::vector<ChannelSample> samples = normalized_samples(ds);
        const std::span<const ChannelSample> all(samples);
        const std::span<const PackedOutput> labels(*ds.labels);
        const auto val_samples = all.subspan(split.train_end);
        const auto val_labels = labels.subspan(split.train_end);
        const std::vector<double> val_ref = reference_rates(ds, all, split.train_end, split.size);

        NetParams &p = result.params;
        // W labels reach the hundreds while Adam moves a weight by about lr per step, so the head works
        // on standardized targets through its fixed affine output map
        if (split.train_end > 0)
        {
            const std::size_t width = p.out_shift.size();
            std::vector<double> sum(width, 0.0), sum_sq(width, 0.0);
            for (std::size_t i = 0; i < split.train_end; ++i)
                for (std::size_t j = 0; j < width; ++j)
                {
                    sum[j] += labels[i].v[j];
                    sum_sq[j] += labels[i].v[j] * labels[i].v[j];
                }
            const double n = static_cast<double>(split.train_end);
            for (std::size_t j = 0; j < width; ++j)
            {
                const double mean = sum[j] / n;
                const double sd = std::sqrt(std::max(0.0, sum_sq[j] / n - mean * mean));
                p.out_shift.data[j] = mean;
                p.out_scale.data[j] = sd > 1e-12 ? sd : 1.0;
            }
        }

        if (cfg.supervised_epochs == 0)
        {
            rep.wall_time_s = seconds_since(start);
            return result;
        }

        AdamState adam = AdamState::create(p, cfg.lr);
        NetParams best = p;
        double best_val = std::numeric_limits<double>::infinity();
        std::size_t since_best = 0;
        const bool has_val = split.train_end < split.size;

        for (std::size_t epoch = 1; epoch <= cfg.supervised_epochs; ++epoch)
        {
            const auto epoch_start = clock::now();
            const auto batches = make_batches(shuffled_order(split.train_end, cfg.seed + epoch), cfg.batch_size);
            double loss_sum = 0.0;
            std::vector<ChannelSample> bs;
            std::vector<PackedOutput> bl;
            for (const auto &batch : batches)
            {
                bs.clear();
                bl.clear();
                for (std::size_t i : batch)
                {
                    bs.push_back(samples[i]);
                    bl.push_back(labels[i]);
                }
                const BatchLoss l = supervised_loss(p, bs, bl, cfg.huber_delta);
                adam_step(p, l.grads, adam, true);
                update_running_stats(p, l.cache);
                loss_sum += l.loss;
            }

            EpochRecord rec;
            rec.epoch = epoch;
            rec.train_loss = batches.empty() ? 0.0 : loss_sum / static_cast<double>(batches.size());
            if (has_val)
            {
                rec.val_loss = eval_huber(p, val_samples, val_labels, cfg.huber_delta);
                rec.val_ratio = mean_ratio(p, val_samples, val_ref, &rec.val_failed);
            }
            else
                rec.val_loss = rec.train_loss;
            rec.wall_time_s = seconds_since(epoch_start);
            rep.epochs.push_back(rec);
            if (auto path = save_checkpoint(p, cfg, rep.phase, epoch); !path.empty())
                rep.checkpoints.push_back(path);

            if (rec.val_loss < best_val)
            {
                best_val = rec.val_loss;
                best = p;
                rep.best_epoch = epoch;
                since_best = 0;
            }
            else if (++since_best >= cfg.early_stop_patience && cfg.early_stop_patience > 0)
            {
                rep.stopped_early = true;
                break;
            }
        }

        // Patience 0 disables validation-based selection: the last epoch is kept
        if (cfg.early_stop_patience > 0)
            p = best;
        else
            rep.best_epoch = rep.epochs.size();
        if (has_val)
            rep.ratio_after = mean_ratio(p, val_samples, val_ref);
        rep.wall_time_s = seconds_since(start);
        if (!cfg.log_path.empty())
            write_train_log(rep, cfg.log_path);
        return result;
    }

    TrainResult finetune_unsupervised(const NetParams &params, const Dataset &ds, const TrainConfig &cfg)
    {
        cfg.validate();
        params.validate();
        if (params.dims.n_users != ds.config.n_users || params.dims.n_rx != ds.config.n_rx)
            throw ShapeMismatch("finetune_unsupervised: model dimensions do not match the dataset");
        const auto start = clock::now();

        TrainResult result;
        result.params = params;
        TrainReport &rep = result.report;
        rep.phase = "unsupervised";
        rep.seed = cfg.seed;
        rep.determinism = cfg.determinism;
        const Split split = split_dataset(ds.samples.size(), cfg.validation_fraction);
        fill_split(rep, split);

        const std::vector<ChannelSample> samples = normalized_samples(ds);
        const std::span<const ChannelSample> all(samples);
        const auto val_samples = all.subspan(split.train_end);
        const std::vector<double> val_ref = reference_rates(ds, all, split.train_end, split.size);
        const bool has_val = split.train_end < split.size;

        if (has_val)
            rep.ratio_before = mean_ratio(params, val_samples, val_ref);
        rep.ratio_after = rep.ratio_before;
        if (cfg.unsupervised_epochs == 0)
        {
            rep.wall_time_s = seconds_since(start);
            return result;
        }

        NetParams &p = result.params;
        AdamState adam = AdamState::create(p, cfg.lr);
        for (std::size_t epoch = 1; epoch <= cfg.unsupervised_epochs; ++epoch)
        {
            const auto epoch_start = clock::now();
            const auto batches =
                make_batches(shuffled_order(split.train_end, cfg.seed + 1000003 + epoch), cfg.batch_size);
            double loss_sum = 0.0;
            std::size_t counted = 0;
            EpochRecord rec;
            rec.epoch = epoch;
            std::vector<ChannelSample> bs;
            for (const auto &batch : batches)
            {
                bs.clear();
                for (std::size_t i : batch)
                    bs.push_back(samples[i]);
                const BatchLoss l = unsupervised_loss(p, bs);
                rec.skipped += l.skipped.size();
                if (l.used == 0)
                    continue;
                adam_step(p, l.grads, adam, false);
                update_running_stats(p, l.cache);
                loss_sum += l.loss;
                ++counted;
            }
            rec.train_loss = counted ? loss_sum / static_cast<double>(counted) : 0.0;
            if (has_val)
                rec.val_ratio = mean_ratio(p, val_samples, val_ref, &rec.val_failed);
            rec.wall_time_s = seconds_since(epoch_start);
            rep.epochs.push_back(rec);
            if (auto path = save_checkpoint(p, cfg, rep.phase, epoch); !path.empty())
                rep.checkpoints.push_back(path);
        }
        rep.best_epoch = rep.epochs.size();
        if (has_val)
            rep.ratio_after = rep.epochs.back().val_ratio;
        rep.wall_time_s = seconds_since(start);
        if (!cfg.log_path.empty())
            write_train_log(rep, cfg.log_path);
        return result;
    }

    std::string train_report_json(const TrainReport &r)
    {
        nlohmann::json epochs = nlohmann::json::array();
        for (const auto &e : r.epochs)
            epochs.push_back({{"epoch", e.epoch},
                              {"train_loss", e.train_loss},
                              {"val_loss", e.val_loss},
                              {"val_ratio", e.val_ratio},
                              {"val_failed", e.val_failed},
                              {"skipped", e.skipped},
                              {"wall_time_s", e.wall_time_s}});
        const nlohmann::json j = {{"format", "bflab-trainlog/1"},
                                  {"phase", r.phase},
                                  {"seed", r.seed},
                                  {"determinism", r.determinism},
                                  {"train_range", {r.train_begin, r.train_end}},
                                  {"validation_range", {r.val_begin, r.val_end}},
                                  {"epochs", epochs},
                                  {"best_epoch", r.best_epoch},
                                  {"stopped_early", r.stopped_early},
                                  {"ratio_before", r.ratio_before},
                                  {"ratio_after", r.ratio_after},
                                  {"wall_time_s", r.wall_time_s},
                                  {"checkpoints", r.checkpoints}};
        return j.dump(2);
    }

    void write_train_log(const TrainReport &r, const std::filesystem::path &path)
    {
        if (path.has_parent_path())
            std::filesystem::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::trunc);
        if (!out)
            throw IoError("write_train_log: cannot open " + path.string());
        out << train_report_json(r) << '\n';
        if (!out)
            throw IoError("write_train_log: write failed for " + path.string());
    }
}
