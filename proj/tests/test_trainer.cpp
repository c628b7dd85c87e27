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

#include <catch_amalgamated.hpp>

#include "bflab/trainer.hpp"
#include "test_support.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace bflab;
using namespace bflab::test;

namespace
{
    Dataset labeled_case1(std::size_t count, std::uint64_t seed)
    {
        ChannelConfig cfg = case_config(1);
        cfg.seed = seed;
        return generate_labels(generate_dataset(cfg, count), {500, 1e-6, false});
    }

    bool same_tensors(const NetParams &a, const NetParams &b, bool index_only = false)
    {
        const auto x = a.tensors();
        const auto y = b.tensors();
        for (std::size_t t = 0; t < x.size(); ++t)
        {
            if (index_only && NetParams::role(t) != TensorRole::index)
                continue;
            if (x[t]->shape != y[t]->shape || x[t]->data != y[t]->data)
                return false;
        }
        return true;
    }

    // Shared trained model for the finetune and mask checks
    struct Trained
    {
        Dataset ds;
        TrainResult sup;
    };

    const Trained &trained()
    {
        static const Trained t = [] {
            Trained r;
            r.ds = labeled_case1(3000, 4242);
            TrainConfig cfg;
            cfg.supervised_epochs = 15;
            cfg.seed = 5;
            r.sup = train_supervised(r.ds, cfg);
            return r;
        }();
        return t;
    }
}

TEST_CASE("generate_labels - reconstruction reproduces the solver rate")
{
    ChannelConfig cfg = case_config(1);
    cfg.seed = 900;
    const Dataset raw = generate_dataset(cfg, 40);
    LabelReport rep;
    const Dataset ds = generate_labels(raw, {500, 1e-6, false}, &rep);
    REQUIRE(ds.labels.has_value());
    CHECK(ds.labels->size() == ds.samples.size());
    CHECK(rep.labeled + rep.dropped_ids.size() == raw.samples.size());
    CHECK(ds.samples.size() == raw.samples.size() - rep.dropped_ids.size());

    for (std::size_t i = 0; i < ds.samples.size(); ++i)
    {
        const ChannelSample s = normalize_sample(ds.samples[i]);
        const double solver = weighted_sum_rate(s, rwmmse_solve(s, {500, 1e-6, false}).v);
        const double label = label_wsr(s, (*ds.labels)[i]);
        CHECK(std::abs(label - solver) <= 1e-6 * solver);
        CHECK((*ds.labels)[i].v.size() == packed_output_length(2, 2));
    }
}

TEST_CASE("generate_labels - deterministic")
{
    ChannelConfig cfg = case_config(2);
    cfg.seed = 31;
    const Dataset raw = generate_dataset(cfg, 24);
    const Dataset a = generate_labels(raw, {300, 1e-6, false});
    const Dataset b = generate_labels(raw, {300, 1e-6, false});
    REQUIRE(a.labels->size() == b.labels->size());
    for (std::size_t i = 0; i < a.labels->size(); ++i)
        CHECK((*a.labels)[i].v == (*b.labels)[i].v);
}

TEST_CASE("TrainConfig - validation and preconditions")
{
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.batch_size = 1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.lr = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.validation_fraction = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    ChannelConfig cc = case_config(1);
    const Dataset unlabeled = generate_dataset(cc, 8);
    CHECK_THROWS_AS(train_supervised(unlabeled, TrainConfig{}), std::invalid_argument);

    const Split s = split_dataset(10000, 0.1);
    CHECK(s.train_end == 9000);
    CHECK(s.size == 10000);
}

TEST_CASE("train_supervised - zero epochs returns the initialization")
{
    const Dataset ds = labeled_case1(64, 12);
    TrainConfig cfg;
    cfg.supervised_epochs = 0;
    cfg.seed = 17;
    const TrainResult r = train_supervised(ds, cfg);
    CHECK(r.report.epochs.empty());
    const NetParams init = NetParams::initialize(NetDims{2, 2}, 17);
    const auto got = r.params.tensors();
    const auto want = init.tensors();
    for (std::size_t t = 0; t < got.size(); ++t)
        if (NetParams::role(t) != TensorRole::buffer)
            CHECK(got[t]->data == want[t]->data);
    CHECK(r.params.bn_running_mean.data == init.bn_running_mean.data);
    CHECK(r.params.bn_running_var.data == init.bn_running_var.data);

    // Output map carries the training-label statistics
    const Split split = split_dataset(ds.samples.size(), cfg.validation_fraction);
    for (std::size_t j = 0; j < r.params.out_shift.size(); ++j)
    {
        double mean = 0.0;
        for (std::size_t i = 0; i < split.train_end; ++i)
            mean += (*ds.labels)[i].v[j];
        mean /= static_cast<double>(split.train_end);
        CHECK(std::abs(r.params.out_shift.data[j] - mean) <= 1e-12 * std::max(1.0, std::abs(mean)));
        CHECK(r.params.out_scale.data[j] > 0.0);
    }
}

TEST_CASE("train_supervised - loss falls between epoch 1 and epoch 5")
{
    const Dataset ds = labeled_case1(2000, 77);
    TrainConfig cfg;
    cfg.supervised_epochs = 5;
    cfg.early_stop_patience = 100;
    cfg.seed = 3;
    const TrainResult r = train_supervised(ds, cfg);
    REQUIRE(r.report.epochs.size() == 5);
    CHECK(r.report.epochs[4].train_loss < r.report.epochs[0].train_loss);
    CHECK(r.report.val_begin == 1800);
    CHECK(r.report.val_end == 2000);
    for (const auto &e : r.report.epochs)
        CHECK(std::isfinite(e.val_loss));
}

TEST_CASE("train_supervised - overfits 32 samples in 500 epochs")
{
    ChannelConfig cc = case_config(1);
    cc.seed = 77;
    const Dataset ds = generate_labels(generate_dataset(cc, 32), {500, 1e-6, false});
    TrainConfig cfg;
    cfg.supervised_epochs = 500;
    cfg.validation_fraction = 0.0;
    cfg.early_stop_patience = 0;
    cfg.batch_size = 32;
    cfg.lr = 1e-2;
    const TrainResult r = train_supervised(ds, cfg);
    REQUIRE(r.report.epochs.size() == 500);
    INFO("final training Huber loss " << r.report.epochs.back().train_loss);
    CHECK(r.report.epochs.back().train_loss < 1e-3);
}

TEST_CASE("train_supervised - deterministic and blind to validation labels")
{
    Dataset ds = labeled_case1(400, 8);
    TrainConfig cfg;
    cfg.supervised_epochs = 3;
    cfg.early_stop_patience = 0; // keep the last epoch regardless of validation loss
    cfg.batch_size = 64;
    const TrainResult a = train_supervised(ds, cfg);
    const TrainResult b = train_supervised(ds, cfg);
    CHECK(same_tensors(a.params, b.params));

    // Corrupt every validation label: parameters must not move
    for (std::size_t i = 360; i < 400; ++i)
        for (double &x : (*ds.labels)[i].v)
            x = -7.0 * x + 1.0;
    const TrainResult c = train_supervised(ds, cfg);
    CHECK(same_tensors(a.params, c.params));
    CHECK(a.report.epochs.back().train_loss == c.report.epochs.back().train_loss);
    CHECK(a.report.epochs.back().val_loss != c.report.epochs.back().val_loss);
}

TEST_CASE("train_supervised - early stopping keeps the best epoch")
{
    const Dataset ds = labeled_case1(300, 21);
    TrainConfig cfg;
    cfg.supervised_epochs = 40;
    cfg.early_stop_patience = 2;
    cfg.batch_size = 32;
    cfg.lr = 3e-2;
    const TrainResult r = train_supervised(ds, cfg);
    REQUIRE(!r.report.epochs.empty());
    std::size_t argmin = 0;
    for (std::size_t i = 1; i < r.report.epochs.size(); ++i)
        if (r.report.epochs[i].val_loss < r.report.epochs[argmin].val_loss)
            argmin = i;
    CHECK(r.report.best_epoch == argmin + 1);
    if (r.report.stopped_early)
        CHECK(r.report.epochs.size() == r.report.best_epoch + 2);
}

TEST_CASE("finetune_unsupervised - does not regress and keeps the index network")
{
    const Trained &t = trained();
    TrainConfig cfg;
    cfg.unsupervised_epochs = 1;
    const TrainResult f = finetune_unsupervised(t.sup.params, t.ds, cfg);
    INFO("ratio before " << f.report.ratio_before << " after " << f.report.ratio_after);
    CHECK(f.report.ratio_before > 0.8);
    CHECK(f.report.ratio_after >= f.report.ratio_before - 0.005);
    CHECK(same_tensors(f.params, t.sup.params, true));
    CHECK(!same_tensors(f.params, t.sup.params));
    REQUIRE(f.report.epochs.size() == 1);
    CHECK(f.report.epochs[0].train_loss < 0.0);

    cfg.unsupervised_epochs = 0;
    const TrainResult none = finetune_unsupervised(t.sup.params, t.ds, cfg);
    CHECK(same_tensors(none.params, t.sup.params));
    CHECK(none.report.ratio_after == none.report.ratio_before);
}

TEST_CASE("trained index network separates masked and valid positions")
{
    const Trained &t = trained();
    const NetParams &p = t.sup.params;
    double masked = 0.0, valid = 0.0;
    std::size_t n_masked = 0, n_valid = 0;
    for (const std::vector<int> &d : {std::vector<int>{1, 1}, {1, 2}, {2, 1}, {2, 2}})
    {
        IndexCache cache;
        const std::vector<int> one[] = {d};
        index_forward(p, one, cache);
        const auto hard = stream_mask(d, 2);
        for (std::size_t j = 0; j < hard.size(); ++j)
        {
            if (hard[j] > 0.0)
            {
                valid += cache.mask.data[j];
                ++n_valid;
            }
            else
            {
                masked += cache.mask.data[j];
                ++n_masked;
            }
        }
    }
    REQUIRE(n_masked > 0);
    CHECK(masked / static_cast<double>(n_masked) < valid / static_cast<double>(n_valid));
}

TEST_CASE("training writes checkpoints and a JSON log")
{
    const auto dir = std::filesystem::temp_directory_path() / "bflab_test_trainer";
    std::filesystem::remove_all(dir);
    const Dataset ds = labeled_case1(200, 5);
    TrainConfig cfg;
    cfg.supervised_epochs = 2;
    cfg.early_stop_patience = 0;
    cfg.batch_size = 32;
    cfg.checkpoint_dir = dir / "ckpt";
    cfg.log_path = dir / "train.json";
    const TrainResult r = train_supervised(ds, cfg);
    REQUIRE(r.report.checkpoints.size() == 2);
    for (const auto &path : r.report.checkpoints)
        CHECK_NOTHROW(load_model(path));
    const NetParams last = load_model(r.report.checkpoints.back());
    CHECK(same_tensors(last, r.params));

    std::ifstream in(cfg.log_path);
    const auto log = nlohmann::json::parse(in);
    CHECK(log.at("format") == "bflab-trainlog/1");
    CHECK(log.at("phase") == "supervised");
    CHECK(log.at("epochs").size() == 2);
    CHECK(log.at("validation_range")[0] == 180);
    CHECK(log.at("validation_range")[1] == 200);
    std::filesystem::remove_all(dir);
}
