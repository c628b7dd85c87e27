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

#ifndef BFLAB_TRAINER_HPP
#define BFLAB_TRAINER_HPP

#include "bflab/channel.hpp"
#include "bflab/neuralnet.hpp"
#include "bflab/solvers.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace bflab
{
    struct TrainConfig
    {
        std::size_t batch_size = 128;
        std::size_t supervised_epochs = 50;
        std::size_t unsupervised_epochs = 1;
        double lr = 1e-3;
        std::uint64_t seed = 0;
        std::size_t early_stop_patience = 5; // 0: run every epoch and keep the last one
        // Every stage already reduces in a fixed order, so runs are reproducible either way; the flag is
        // recorded in the training log.
        bool determinism = true;
        double validation_fraction = 0.1; // taken from the end of the dataset
        double huber_delta = 1.0;
        std::filesystem::path checkpoint_dir; // empty: no checkpoints
        std::filesystem::path log_path;       // empty: no JSON log

        // Throws std::invalid_argument
        void validate() const;
    };

    struct LabelReport
    {
        std::size_t labeled = 0;
        std::vector<std::size_t> dropped_ids; // indices into the input dataset
        double wall_time_s = 0.0;
    };

    // Solves every normalized sample with R-WMMSE and attaches the packed converged (U, W).
    // Samples whose solve fails are dropped. Runs across worker threads; the result does not depend
    // on the worker count.
    Dataset generate_labels(const Dataset &ds, const SolveOptions &opts = {}, LabelReport *report = nullptr);

    struct EpochRecord
    {
        std::size_t epoch = 0;     // 1-based
        double train_loss = 0.0;   // mean over the epoch's batches
        double val_loss = 0.0;     // eval-mode Huber loss (supervised phase only)
        double val_ratio = 0.0;    // mean performance ratio, failed samples counted as 0
        std::size_t val_failed = 0;
        std::size_t skipped = 0; // samples skipped inside the loss this epoch
        double wall_time_s = 0.0;
    };

    struct TrainReport
    {
        std::string phase; // "supervised" or "unsupervised"
        std::vector<EpochRecord> epochs;
        std::size_t best_epoch = 0; // 0 = initialization
        bool stopped_early = false;
        double ratio_before = 0.0;
        double ratio_after = 0.0;
        double wall_time_s = 0.0;
        std::vector<std::string> checkpoints;
        std::size_t train_begin = 0, train_end = 0; // sample index ranges of the split
        std::size_t val_begin = 0, val_end = 0;
        std::uint64_t seed = 0;
        bool determinism = true;
    };

    struct TrainResult
    {
        NetParams params;
        TrainReport report;
    };

    struct Split
    {
        std::size_t train_end = 0; // training samples are [0, train_end), validation the rest
        std::size_t size = 0;
    };

    Split split_dataset(std::size_t size, double validation_fraction);

    // Mean performance ratio of the network over samples against reference weighted sum-rates, in
    // eval mode. Failed reconstructions count as ratio 0 and are returned through failed.
    double mean_ratio(const NetParams &p, std::span<const ChannelSample> normalized,
                      std::span<const double> reference_wsr, std::size_t *failed = nullptr);

    // Weighted sum-rate achieved by a packed (U, W) label on its normalized sample
    double label_wsr(const ChannelSample &normalized, const PackedOutput &label);

    // Adam on the mean Huber loss over shuffled mini-batches, index network trained, keeping the
    // parameters of the epoch with the lowest validation loss. Requires labels.
    TrainResult train_supervised(const Dataset &ds, const TrainConfig &cfg);

    // Adam on the mean negative weighted sum-rate with the index network frozen
    TrainResult finetune_unsupervised(const NetParams &params, const Dataset &ds, const TrainConfig &cfg);

    std::string train_report_json(const TrainReport &r);
    void write_train_log(const TrainReport &r, const std::filesystem::path &path); // throws IoError
}

#endif
