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

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits non-zero if any fails.

#include "bflab/channel.hpp"
#include "bflab/codec.hpp"
#include "bflab/evalcli.hpp"
#include "bflab/neuralnet.hpp"
#include "bflab/solvers.hpp"
#include "bflab/trainer.hpp"
#include "test_support.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

using namespace bflab;
using namespace bflab::test;

namespace
{
    struct Outcome
    {
        bool pass = false;
        std::string detail;
    };

    std::string fmt(const char *f, auto... args)
    {
        char buf[512];
        std::snprintf(buf, sizeof buf, f, args...);
        return buf;
    }

    double relative(double a, double b)
    {
        return std::abs(a - b) / std::max(std::abs(a), std::abs(b));
    }

    // Mean ratio with failed samples counted as zero
    double conservative_ratio(const MethodStats &m)
    {
        const double total = static_cast<double>(m.samples + m.failed);
        return total > 0 ? m.mean_ratio * static_cast<double>(m.samples) / total : 0.0;
    }

    Outcome monotone_ascent()
    {
        std::size_t ok_monotone = 0, ok_converged = 0;
        double worst_drop = 0.0;
        constexpr std::size_t n = 200;
        for (std::uint64_t seed = 0; seed < n; ++seed)
        {
            const ChannelSample s = normalized_case(1, 1'000'000 + seed);
            const ReducedSolution sol = rwmmse_solve(s, {500, 1e-6, true});
            const auto &obj = sol.trace.objective_per_iter;
            bool monotone = true;
            for (std::size_t i = 1; i < obj.size(); ++i)
            {
                worst_drop = std::max(worst_drop, obj[i - 1] - obj[i]);
                monotone = monotone && obj[i] >= obj[i - 1] - 1e-8;
            }
            ok_monotone += monotone;
            ok_converged += sol.trace.converged && sol.trace.iterations <= 500;
        }
        const double frac = static_cast<double>(ok_converged) / n;
        return {ok_monotone == n && frac >= 0.99,
                fmt("monotone %zu/%zu (largest drop %.2e), converged %.1f%%", ok_monotone, n, worst_drop,
                    100.0 * frac)};
    }

    Outcome normalized_equivalence()
    {
        std::mt19937_64 rng(2024);
        std::uniform_real_distribution<double> pmax(1.0, 100.0);
        double worst = 0.0;
        for (std::uint64_t seed = 0; seed < 50; ++seed)
        {
            ChannelConfig cfg = case_config(1);
            cfg.p_max = pmax(rng);
            const ChannelSample original = sample_channel(cfg, 2'000'000 + seed);
            const ChannelSample normalized = normalize_sample(original);
            const BeamformerSet v = rwmmse_solve(normalized).v;
            BeamformerSet scaled = v;
            for (auto &vk : scaled.v)
                vk *= std::sqrt(cfg.p_max);
            worst = std::max(worst, relative(weighted_sum_rate(original, scaled), weighted_sum_rate(normalized, v)));
        }
        return {worst < 1e-9, fmt("max relative gap %.2e", worst)};
    }

    Outcome single_user_oracle()
    {
        ChannelConfig cfg;
        cfg.n_tx = 8;
        cfg.n_users = 1;
        cfg.n_rx = 2;
        double worst_reduced = 0.0, worst_full = 0.0;
        for (std::uint64_t seed = 0; seed < 50; ++seed)
        {
            ChannelSample s = normalize_sample(sample_channel(cfg, 3'000'000 + seed));
            s.d = {1};
            const double sv = spectral_norm(s.h);
            const double oracle = std::log(1.0 + sv * sv);
            worst_reduced = std::max(worst_reduced, relative(weighted_sum_rate(s, rwmmse_solve(s).v), oracle));
            worst_full = std::max(worst_full, relative(weighted_sum_rate(s, full_wmmse_solve(s).v), oracle));
        }
        return {worst_reduced < 1e-4 && worst_full < 1e-4,
                fmt("max relative gap R-WMMSE %.2e, full WMMSE %.2e", worst_reduced, worst_full)};
    }

    Outcome reduced_vs_full()
    {
        std::size_t agree = 0;
        double worst = 0.0;
        for (std::uint64_t seed = 0; seed < 50; ++seed)
        {
            const ChannelSample s = normalized_case(1, 4'000'000 + seed);
            const double a = rwmmse_solve(s).trace.objective_per_iter.back();
            const double b = full_wmmse_solve(s).trace.objective_per_iter.back();
            const double gap = relative(a, b);
            worst = std::max(worst, gap);
            agree += gap < 1e-3;
        }
        return {agree >= 49, fmt("%zu/50 within 1e-3 (largest gap %.2e)", agree, worst)};
    }

    Outcome zf_nulling()
    {
        double worst = 0.0;
        for (std::uint64_t seed = 0; seed < 100; ++seed)
        {
            const ChannelSample s = normalized_case(2, 5'000'000 + seed);
            const BeamformerSet v = zf_solve(s);
            for (std::size_t k = 0; k < s.n_users(); ++k)
                for (std::size_t j = 0; j < s.n_users(); ++j)
                    if (j != k)
                        worst = std::max(worst, std::sqrt((s.user_channel(k) * v.v[j]).frobenius_norm2()));
        }
        return {worst < 1e-8, fmt("max leakage ||H_k V_j||_F = %.2e", worst)};
    }

    Outcome gradient_check()
    {
        double huber = 0.0, unsup = 0.0;
        for (std::uint64_t seed = 0; seed < 20; ++seed)
        {
            GradCheckOptions opts;
            opts.seed = seed;
            const auto hi = make_gradcheck_instance(case_config(1), 6'000 + seed, LossKind::huber);
            const auto ui = make_gradcheck_instance(case_config(1), 6'000 + seed, LossKind::unsupervised);
            const auto h = grad_check(hi.params, hi.samples, hi.labels, LossKind::huber, opts);
            const auto u = grad_check(ui.params, ui.samples, ui.labels, LossKind::unsupervised, opts);
            huber = std::max(huber, h.entries.empty() ? INFINITY : h.max_rel_error);
            unsup = std::max(unsup, u.entries.empty() ? INFINITY : u.max_rel_error);
        }
        return {huber < 1e-6 && unsup < 1e-4, fmt("max relative error Huber %.2e, unsupervised %.2e", huber, unsup)};
    }

    Outcome codec_bijectivity()
    {
        std::mt19937_64 rng(7);
        std::bernoulli_distribution coin(0.5);
        double worst_gram = 0.0, worst_uw = 0.0;
        for (std::size_t trial = 0; trial < 10'000; ++trial)
        {
            const std::size_t users = 1 + trial % 4;
            const CMat g = gram(random_cmat(2 * users, 8, rng));
            worst_gram = std::max(worst_gram, max_abs_diff(unpack_gram(pack_gram(g)), g));

            std::vector<int> d(users);
            std::vector<CMat> u, w;
            for (std::size_t k = 0; k < users; ++k)
            {
                d[k] = coin(rng) ? 2 : 1;
                const auto dk = static_cast<std::size_t>(d[k]);
                u.push_back(random_cmat(2, dk, rng));
                w.push_back(random_hermitian(dk, rng));
            }
            const auto [u2, w2] = unpack_uw(pack_uw(u, w, d), d, 2);
            for (std::size_t k = 0; k < users; ++k)
                worst_uw = std::max({worst_uw, max_abs_diff(u2[k], u[k]), max_abs_diff(w2[k], w[k])});
        }
        const auto count = [](const std::vector<double> &m) {
            std::size_t n = 0;
            for (double x : m)
                n += x != 0.0;
            return n;
        };
        const std::size_t two = count(stream_mask(std::vector<int>{2}, 2));
        const std::size_t one = count(stream_mask(std::vector<int>{1}, 2));
        const std::size_t mixed = count(stream_mask(std::vector<int>{2, 1, 1, 2}, 2));
        const bool pass = worst_gram <= 1e-15 && worst_uw <= 1e-15 && two == 12 && one == 5 && mixed == 34;
        return {pass, fmt("max error gram %.1e, uw %.1e; valid entries d=2: %zu, d=1: %zu", worst_gram, worst_uw,
                          two, one)};
    }

    // Shared state of the learned-beamformer criteria
    struct Desk
    {
        Dataset test;
        NetParams supervised;
        NetParams refined;
        EvalReport before;
        EvalReport after;
        TrainReport sup_report;
        double train_seconds = 0.0;
    };

    Desk &desk()
    {
        static Desk d = [] {
            Desk r;
            const auto start = std::chrono::steady_clock::now();
            ChannelConfig cfg = case_config(1);
            cfg.seed = 10'000'000;
            LabelReport labels;
            const Dataset train = generate_labels(generate_dataset(cfg, 10'000), {500, 1e-6, false}, &labels);
            cfg.seed = 20'000'000;
            r.test = generate_dataset(cfg, 1'000);

            TrainConfig tc;
            tc.supervised_epochs = 50;
            tc.unsupervised_epochs = 1;
            tc.seed = 1;
            const TrainResult sup = train_supervised(train, tc);
            r.supervised = sup.params;
            r.sup_report = sup.report;
            r.refined = finetune_unsupervised(sup.params, train, tc).params;
            r.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            std::printf("  [desk] labeled %zu (dropped %zu), %zu supervised epochs (best %zu), pipeline %.1f s\n",
                        labels.labeled, labels.dropped_ids.size(), sup.report.epochs.size(), sup.report.best_epoch,
                        r.train_seconds);

            const Method both[] = {Method::cmbnn, Method::zf};
            r.before = bench_method(Method::cmbnn, r.test, &r.supervised);
            r.after = bench_methods(r.test, both, &r.refined);
            return r;
        }();
        return d;
    }

    Outcome desk_performance()
    {
        const Desk &d = desk();
        const MethodStats &before = *d.before.find("cmbnn");
        const MethodStats &after = *d.after.find("cmbnn");
        const double rb = conservative_ratio(before), ra = conservative_ratio(after);
        return {ra >= 0.90 && ra >= rb - 0.005 && d.train_seconds <= 1800.0,
                fmt("test ratio %.4f after fine-tuning (%.4f before; failures %zu counted as 0), %.0f s", ra, rb,
                    after.failed, d.train_seconds)};
    }

    Outcome priority_handling()
    {
        const Desk &d = desk();
        const double cm = conservative_ratio(*d.after.find("cmbnn"));
        const double zf = conservative_ratio(*d.after.find("zf"));
        return {cm > zf, fmt("CMBNN %.4f vs ZF %.4f", cm, zf)};
    }

    Outcome runtime_ordering()
    {
        const Desk &d = desk();
        const Method pair[] = {Method::cmbnn, Method::rwmmse};
        const EvalReport case1 = bench_methods(d.test, pair, &d.refined);
        const double c1_net = case1.find("cmbnn")->mean_time_s, c1_ref = case1.find("rwmmse")->mean_time_s;

        ChannelConfig cfg = case_config(3);
        cfg.seed = 30'000'000;
        const Dataset train = generate_labels(generate_dataset(cfg, 2'000), {500, 1e-6, false});
        cfg.seed = 40'000'000;
        const Dataset test = generate_dataset(cfg, 100);
        TrainConfig tc;
        tc.supervised_epochs = 20;
        tc.seed = 3;
        const NetParams p = train_supervised(train, tc).params;
        const EvalReport case3 = bench_methods(test, pair, &p);
        const MethodStats &n3 = *case3.find("cmbnn");
        const double c3_net = n3.mean_time_s, c3_ref = case3.find("rwmmse")->mean_time_s;

        return {c1_net < c1_ref && c3_net < c3_ref && n3.samples > 0,
                fmt("case 1: %.2e s vs %.2e s; case 3: %.2e s vs %.2e s (%zu timed, ratio %.3f)", c1_net, c1_ref,
                    c3_net, c3_ref, n3.samples, n3.mean_ratio)};
    }

    Outcome stream_masking()
    {
        const Desk &d = desk();
        std::size_t outputs = 0, bad_zero = 0, bad_cols = 0, reconstructed = 0;
        std::size_t single = 0, dual = 0;
        for (const ChannelSample &raw : d.test.samples)
        {
            const ChannelSample s = normalize_sample(raw);
            const PackedOutput out = cmbnn_predict(d.refined, s);
            const auto mask = stream_mask(s.d, s.n_rx());
            ++outputs;
            for (std::size_t j = 0; j < mask.size(); ++j)
                if (mask[j] == 0.0 && out.v[j] != 0.0)
                    ++bad_zero;
            for (int dk : s.d)
                (dk == 1 ? single : dual) += 1;
            try
            {
                const BeamformerSet v = cmbnn_beamformers(d.refined, s);
                ++reconstructed;
                for (std::size_t k = 0; k < s.n_users(); ++k)
                    if (v.v[k].cols() != static_cast<std::size_t>(s.d[k]) || v.v[k].rows() != s.n_tx())
                        ++bad_cols;
            }
            catch (const NumericalError &)
            {
            }
        }
        return {bad_zero == 0 && bad_cols == 0 && single > 0 && dual > 0 && reconstructed > 0,
                fmt("%zu outputs (%zu single / %zu dual streams): %zu nonzero masked entries; %zu reconstructions, "
                    "%zu with wrong column count",
                    outputs, single, dual, bad_zero, reconstructed, bad_cols)};
    }
}

int main()
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"R-WMMSE monotone ascent and convergence", monotone_ascent},
        {"normalized problem equivalence", normalized_equivalence},
        {"single-user oracle", single_user_oracle},
        {"R-WMMSE vs full WMMSE", reduced_vs_full},
        {"ZF nulling", zf_nulling},
        {"gradient correctness", gradient_check},
        {"codec bijectivity and mask accounting", codec_bijectivity},
        {"desk-scale CMBNN performance", desk_performance},
        {"priority handling (CMBNN beats ZF)", priority_handling},
        {"runtime ordering", runtime_ordering},
        {"stream masking", stream_masking},
    };

    std::size_t failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i)
    {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try
        {
            o = criteria[i].second();
        }
        catch (const std::exception &e)
        {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("[%s] criterion %2zu: %s (%s; %.1f s)\n", o.pass ? "PASS" : "FAIL", i + 1,
                    criteria[i].first.c_str(), o.detail.c_str(), secs);
        std::fflush(stdout);
        failed += !o.pass;
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
