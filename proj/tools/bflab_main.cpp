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

// Command-line front end: dataset generation, labeling, training, evaluation and benchmarking

#include "bflab/channel.hpp"
#include "bflab/errors.hpp"
#include "bflab/evalcli.hpp"
#include "bflab/neuralnet.hpp"
#include "bflab/parallel.hpp"
#include "bflab/solvers.hpp"
#include "bflab/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace bflab;

namespace
{
    struct GenArgs
    {
        int case_id = 0;
        std::size_t n_tx = 0, n_users = 0, n_rx = 0;
        double snr_db = 20.0;
        std::size_t count = 1000;
        std::uint64_t seed = 0;
        std::string out;
    };

    struct LabelArgs
    {
        std::string data, out;
        double tol = 1e-6;
        std::size_t max_iter = 500;
    };

    struct TrainArgs
    {
        std::string data, model, out, log, checkpoints;
        std::size_t epochs = 50, batch = 128, patience = 5;
        double lr = 1e-3;
        std::uint64_t seed = 0;
    };

    struct EvalArgs
    {
        std::string data, model, method = "cmbnn", report, format = "json";
        std::string methods = "cmbnn,zf,rwmmse";
        std::size_t warmup = 10;
    };

    struct GradArgs
    {
        int case_id = 1;
        std::uint64_t seed = 0;
        std::string loss = "huber";
    };

    int run_gen(const GenArgs &a)
    {
        ChannelConfig cfg;
        if (a.case_id != 0)
            cfg = case_config(a.case_id);
        if (a.n_tx)
            cfg.n_tx = a.n_tx;
        if (a.n_users)
            cfg.n_users = a.n_users;
        if (a.n_rx)
            cfg.n_rx = a.n_rx;
        cfg.snr_db = a.snr_db;
        cfg.seed = a.seed;
        cfg.validate();
        const Dataset ds = generate_dataset(cfg, a.count);
        save_dataset(ds, a.out);
        std::printf("wrote %zu samples (n_tx=%zu, n_users=%zu, n_rx=%zu, snr=%g dB) to %s\n", ds.samples.size(),
                    cfg.n_tx, cfg.n_users, cfg.n_rx, cfg.snr_db, a.out.c_str());
        return 0;
    }

    int run_label(const LabelArgs &a)
    {
        const Dataset raw = load_dataset(a.data);
        LabelReport rep;
        const Dataset ds = generate_labels(raw, {a.max_iter, a.tol, false}, &rep);
        save_dataset(ds, a.out);
        std::printf("labeled %zu samples, dropped %zu, %.2f s\n", rep.labeled, rep.dropped_ids.size(),
                    rep.wall_time_s);
        for (std::size_t id : rep.dropped_ids)
            std::printf("  dropped sample %zu\n", id);
        return 0;
    }

    void print_epochs(const TrainReport &r)
    {
        for (const auto &e : r.epochs)
            std::printf("epoch %3zu  train %.6g  val %.6g  ratio %.4f  failed %zu  %.2f s\n", e.epoch, e.train_loss,
                        e.val_loss, e.val_ratio, e.val_failed, e.wall_time_s);
    }

    int run_train(const TrainArgs &a)
    {
        const Dataset ds = load_dataset(a.data);
        TrainConfig cfg;
        cfg.supervised_epochs = a.epochs;
        cfg.batch_size = a.batch;
        cfg.lr = a.lr;
        cfg.seed = a.seed;
        cfg.early_stop_patience = a.patience;
        cfg.log_path = a.log;
        cfg.checkpoint_dir = a.checkpoints;
        const TrainResult r = train_supervised(ds, cfg);
        print_epochs(r.report);
        save_model(r.params, a.out);
        std::printf("best epoch %zu, validation ratio %.4f, %.1f s; model written to %s\n", r.report.best_epoch,
                    r.report.ratio_after, r.report.wall_time_s, a.out.c_str());
        return 0;
    }

    int run_finetune(const TrainArgs &a)
    {
        const Dataset ds = load_dataset(a.data);
        const NetParams p = load_model(a.model);
        TrainConfig cfg;
        cfg.unsupervised_epochs = a.epochs;
        cfg.batch_size = a.batch;
        cfg.lr = a.lr;
        cfg.seed = a.seed;
        cfg.log_path = a.log;
        cfg.checkpoint_dir = a.checkpoints;
        const TrainResult r = finetune_unsupervised(p, ds, cfg);
        print_epochs(r.report);
        save_model(r.params, a.out);
        std::printf("validation ratio %.4f -> %.4f, %.1f s; model written to %s\n", r.report.ratio_before,
                    r.report.ratio_after, r.report.wall_time_s, a.out.c_str());
        return 0;
    }

    ReportFormat format_from_path(const std::string &path)
    {
        return path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0 ? ReportFormat::csv
                                                                                 : ReportFormat::json;
    }

    void print_report(const EvalReport &r)
    {
        std::printf("case n_tx=%zu n_users=%zu n_rx=%zu\n", r.case_info.n_tx, r.case_info.n_users, r.case_info.n_rx);
        std::printf("%-8s %8s %7s %11s %11s %14s %13s\n", "method", "samples", "failed", "mean_ratio", "median",
                    "mean_time_s", "mean_wsr_bit");
        for (const auto &m : r.methods)
            std::printf("%-8s %8zu %7zu %11.5f %11.5f %14.3e %13.4f\n", m.method.c_str(), m.samples, m.failed,
                        m.mean_ratio, m.median_ratio, m.mean_time_s, m.mean_wsr_bits);
    }

    std::vector<Method> parse_methods(const std::string &list)
    {
        std::vector<Method> out;
        std::stringstream in(list);
        std::string item;
        while (std::getline(in, item, ','))
            if (!item.empty())
                out.push_back(parse_method(item));
        if (out.empty())
            throw std::invalid_argument("--methods: no method given");
        return out;
    }

    int run_bench(const EvalArgs &a, const std::vector<Method> &methods, ReportFormat format)
    {
        const Dataset ds = load_dataset(a.data);
        NetParams params;
        const NetParams *model = nullptr;
        if (!a.model.empty())
        {
            params = load_model(a.model);
            model = &params;
        }
        BenchOptions opts;
        opts.warmup = a.warmup;
        const EvalReport r = bench_methods(ds, methods, model, opts);
        print_report(r);
        if (!a.report.empty())
        {
            export_report(r, a.report, format);
            std::printf("report written to %s\n", a.report.c_str());
        }
        return 0;
    }

    int run_gradcheck(const GradArgs &a)
    {
        if (a.loss != "huber" && a.loss != "unsup")
            throw std::invalid_argument("--loss must be huber or unsup");
        const LossKind kind = a.loss == "huber" ? LossKind::huber : LossKind::unsupervised;
        const double tol = kind == LossKind::huber ? 1e-6 : 1e-4;
        const GradCheckInstance inst = make_gradcheck_instance(case_config(a.case_id), a.seed, kind);
        GradCheckOptions opts;
        opts.seed = a.seed;
        const GradCheckReport r = grad_check(inst.params, inst.samples, inst.labels, kind, opts);
        std::printf("%zu entries, max relative error %.3e (tolerance %.0e): %s\n", r.entries.size(), r.max_rel_error,
                    tol, r.passed(tol) ? "PASS" : "FAIL");
        return r.passed(tol) ? 0 : 1;
    }
}

int main(int argc, char **argv)
{
    CLI::App app{"bflab: weighted sum-rate beamforming solvers and learned beamformers"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "bflab 1.0.0");
    app.footer("Environment: BFLAB_THREADS sets the worker count (default: hardware concurrency, now " +
               std::to_string(worker_count()) + ").");

    GenArgs gen;
    auto *gen_cmd = app.add_subcommand("gen-data", "Generate a channel dataset");
    auto *case_opt = gen_cmd->add_option("--case", gen.case_id, "Preset case (1, 2 or 3)")->check(CLI::Range(1, 3));
    auto *ntx = gen_cmd->add_option("--ntx", gen.n_tx, "Transmit antennas")->excludes(case_opt);
    auto *nusers = gen_cmd->add_option("--nusers", gen.n_users, "Users")->excludes(case_opt);
    auto *nrx = gen_cmd->add_option("--nrx", gen.n_rx, "Receive antennas per user")->excludes(case_opt);
    ntx->needs(nusers, nrx);
    gen_cmd->add_option("--snr-db", gen.snr_db, "SNR in dB")->capture_default_str();
    gen_cmd->add_option("--count", gen.count, "Number of samples")->capture_default_str();
    gen_cmd->add_option("--seed", gen.seed, "Base seed")->capture_default_str();
    gen_cmd->add_option("--out", gen.out, "Output dataset file")->required();

    LabelArgs lab;
    auto *label_cmd = app.add_subcommand("label", "Attach R-WMMSE labels to a dataset");
    label_cmd->add_option("--data", lab.data, "Input dataset")->required()->check(CLI::ExistingFile);
    label_cmd->add_option("--tol", lab.tol, "Objective tolerance")->capture_default_str();
    label_cmd->add_option("--max-iter", lab.max_iter, "Iteration cap")->capture_default_str();
    label_cmd->add_option("--out", lab.out, "Output dataset")->required();

    TrainArgs tr;
    auto *train_cmd = app.add_subcommand("train", "Supervised training on a labeled dataset");
    train_cmd->add_option("--data", tr.data, "Labeled dataset")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--epochs", tr.epochs, "Maximum epochs")->capture_default_str();
    train_cmd->add_option("--batch", tr.batch, "Batch size")->capture_default_str();
    train_cmd->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str();
    train_cmd->add_option("--seed", tr.seed, "Seed")->capture_default_str();
    train_cmd->add_option("--patience", tr.patience, "Early-stopping patience (0 keeps the last epoch)")
        ->capture_default_str();
    train_cmd->add_option("--log", tr.log, "JSON training log");
    train_cmd->add_option("--checkpoint-dir", tr.checkpoints, "Per-epoch checkpoints");
    train_cmd->add_option("--out", tr.out, "Output model")->required();

    TrainArgs ft;
    ft.epochs = 1;
    auto *ft_cmd = app.add_subcommand("finetune", "Unsupervised refinement of a trained model");
    ft_cmd->add_option("--data", ft.data, "Dataset")->required()->check(CLI::ExistingFile);
    ft_cmd->add_option("--model", ft.model, "Input model")->required()->check(CLI::ExistingFile);
    ft_cmd->add_option("--epochs", ft.epochs, "Epochs")->capture_default_str();
    ft_cmd->add_option("--batch", ft.batch, "Batch size")->capture_default_str();
    ft_cmd->add_option("--lr", ft.lr, "Adam learning rate")->capture_default_str();
    ft_cmd->add_option("--seed", ft.seed, "Seed")->capture_default_str();
    ft_cmd->add_option("--log", ft.log, "JSON training log");
    ft_cmd->add_option("--checkpoint-dir", ft.checkpoints, "Per-epoch checkpoints");
    ft_cmd->add_option("--out", ft.out, "Output model")->required();

    EvalArgs ev;
    auto *eval_cmd = app.add_subcommand("eval", "Evaluate one method against the R-WMMSE reference");
    eval_cmd->add_option("--data", ev.data, "Dataset")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--model", ev.model, "Model (required for cmbnn)")->check(CLI::ExistingFile);
    eval_cmd->add_option("--method", ev.method, "Method")
        ->check(CLI::IsMember({"cmbnn", "zf", "rwmmse"}))
        ->capture_default_str();
    eval_cmd->add_option("--report", ev.report, "Report file");
    eval_cmd->add_option("--format", ev.format, "Report format")
        ->check(CLI::IsMember({"json", "csv"}))
        ->capture_default_str();
    eval_cmd->add_option("--warmup", ev.warmup, "Untimed warmup samples")->capture_default_str();

    EvalArgs be;
    auto *bench_cmd = app.add_subcommand("bench", "Benchmark several methods; report format follows the extension");
    bench_cmd->add_option("--data", be.data, "Dataset")->required()->check(CLI::ExistingFile);
    bench_cmd->add_option("--model", be.model, "Model (required for cmbnn)")->check(CLI::ExistingFile);
    bench_cmd->add_option("--methods", be.methods, "Comma-separated methods")->capture_default_str();
    bench_cmd->add_option("--report", be.report, "Report file (.json or .csv)");
    bench_cmd->add_option("--warmup", be.warmup, "Untimed warmup samples")->capture_default_str();

    GradArgs gc;
    auto *grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the network gradients");
    grad_cmd->add_option("--case", gc.case_id, "Preset case")->check(CLI::Range(1, 3))->capture_default_str();
    grad_cmd->add_option("--seed", gc.seed, "Seed")->capture_default_str();
    grad_cmd->add_option("--loss", gc.loss, "Loss")->check(CLI::IsMember({"huber", "unsup"}))->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try
    {
        if (gen_cmd->parsed())
        {
            if (gen.case_id == 0 && gen.n_tx == 0)
                throw CLI::ValidationError("gen-data", "give --case or --ntx/--nusers/--nrx");
            return run_gen(gen);
        }
        if (label_cmd->parsed())
            return run_label(lab);
        if (train_cmd->parsed())
            return run_train(tr);
        if (ft_cmd->parsed())
            return run_finetune(ft);
        if (eval_cmd->parsed())
            return run_bench(ev, {parse_method(ev.method)}, parse_format(ev.format));
        if (bench_cmd->parsed())
            return run_bench(be, parse_methods(be.methods), format_from_path(be.report));
        if (grad_cmd->parsed())
            return run_gradcheck(gc);
    }
    catch (const CLI::Error &e)
    {
        return app.exit(e);
    }
    catch (const std::exception &e)
    {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
