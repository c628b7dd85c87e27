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

#include "bflab/evalcli.hpp"
#include "test_support.hpp"

#include <cmath>
#include <filesystem>
#include <numeric>

using namespace bflab;
using namespace bflab::test;

namespace
{
    // Reverses the user order of a sample
    ChannelSample reverse_users(const ChannelSample &s)
    {
        ChannelSample t = s;
        const std::size_t r = s.n_rx();
        const std::size_t k = s.n_users();
        for (std::size_t i = 0; i < k; ++i)
        {
            t.h.set_row_block(i * r, s.h.row_block((k - 1 - i) * r, r));
            t.alpha[i] = s.alpha[k - 1 - i];
            t.d[i] = s.d[k - 1 - i];
        }
        return t;
    }

    BeamformerSet reverse_users(const BeamformerSet &v)
    {
        return BeamformerSet{std::vector<CMat>(v.v.rbegin(), v.v.rend())};
    }

    Dataset small_dataset(int case_id, std::size_t count, std::uint64_t seed)
    {
        ChannelConfig cfg = case_config(case_id);
        cfg.seed = seed;
        return generate_dataset(cfg, count);
    }

    EvalReport sample_report()
    {
        EvalReport r;
        r.case_info = {8, 2, 2};
        MethodStats a;
        a.method = "zf";
        a.ratios = {0.1, 1.0 / 3.0, 0.7071067811865476};
        a.times_s = {1.25e-6, 3.3e-5, 2e-7};
        a.wsr_nats = {std::exp(1.0), 12.345678901234567, 0.0};
        a.failed_ids = {3, 9};
        finalize_stats(a);
        MethodStats b;
        b.method = "rwmmse";
        b.ratios = {1.0};
        b.times_s = {0.001};
        b.wsr_nats = {std::acos(-1.0)};
        finalize_stats(b);
        r.methods = {a, b};
        return r;
    }

    void check_same(const EvalReport &a, const EvalReport &b)
    {
        REQUIRE(a.schema == b.schema);
        CHECK(a.case_info.n_tx == b.case_info.n_tx);
        CHECK(a.case_info.n_users == b.case_info.n_users);
        CHECK(a.case_info.n_rx == b.case_info.n_rx);
        REQUIRE(a.methods.size() == b.methods.size());
        for (std::size_t i = 0; i < a.methods.size(); ++i)
        {
            const auto &x = a.methods[i];
            const auto &y = b.methods[i];
            CHECK(x.method == y.method);
            CHECK(x.samples == y.samples);
            CHECK(x.failed == y.failed);
            CHECK(x.mean_ratio == y.mean_ratio);
            CHECK(x.median_ratio == y.median_ratio);
            CHECK(x.mean_time_s == y.mean_time_s);
            CHECK(x.mean_wsr_nats == y.mean_wsr_nats);
            CHECK(x.mean_wsr_bits == y.mean_wsr_bits);
            CHECK(x.ratios == y.ratios);
            CHECK(x.times_s == y.times_s);
            CHECK(x.wsr_nats == y.wsr_nats);
            CHECK(x.failed_ids == y.failed_ids);
        }
    }
}

TEST_CASE("performance_ratio - identical, zero and degenerate references")
{
    const ChannelSample s = normalized_case(1, 11);
    const BeamformerSet v = rwmmse_solve(s).v;
    CHECK(performance_ratio(s, v, v) == 1.0);

    BeamformerSet zero = v;
    for (auto &vk : zero.v)
        vk = CMat(vk.rows(), vk.cols());
    CHECK(performance_ratio(s, zero, v) == 0.0);
    CHECK_THROWS_AS(performance_ratio(s, v, zero), DegenerateReference);
}

TEST_CASE("performance_ratio - one solver iteration stays within (0, 1]")
{
    SolveOptions one;
    one.max_iter = 1;
    one.trace = false;
    for (std::uint64_t seed = 0; seed < 100; ++seed)
    {
        const ChannelSample s = normalized_case(1, 5000 + seed);
        const BeamformerSet early = rwmmse_solve(s, one).v;
        const BeamformerSet done = rwmmse_solve(s, {500, 1e-6, false}).v;
        const double r = performance_ratio(s, early, done);
        CHECK(r > 0.0);
        CHECK(r <= 1.0 + 1e-12);
    }
}

TEST_CASE("performance_ratio - invariant under user relabeling")
{
    for (int case_id : {1, 2})
        for (std::uint64_t seed = 0; seed < 10; ++seed)
        {
            const ChannelSample s = normalized_case(case_id, 700 + seed);
            const BeamformerSet truth = rwmmse_solve(s).v;
            const BeamformerSet pred = zf_solve(s);
            const double a = performance_ratio(s, pred, truth);
            const double b = performance_ratio(reverse_users(s), reverse_users(pred), reverse_users(truth));
            CHECK(std::abs(a - b) <= 1e-12 * std::abs(a));
        }
}

TEST_CASE("method and format names")
{
    for (Method m : {Method::rwmmse, Method::zf, Method::cmbnn})
        CHECK(parse_method(method_name(m)) == m);
    CHECK_THROWS_AS(parse_method("wmmse"), std::invalid_argument);
    CHECK(parse_format("json") == ReportFormat::json);
    CHECK(parse_format("csv") == ReportFormat::csv);
    CHECK_THROWS_AS(parse_format("xml"), std::invalid_argument);
}

TEST_CASE("bench - R-WMMSE against itself has ratio exactly one")
{
    const Dataset ds = small_dataset(1, 30, 42);
    BenchOptions opts;
    opts.warmup = 2;
    const EvalReport r = bench_method(Method::rwmmse, ds, nullptr, opts);
    REQUIRE(r.methods.size() == 1);
    const MethodStats &m = r.methods[0];
    CHECK(m.method == "rwmmse");
    CHECK(m.samples + m.failed == ds.samples.size());
    CHECK(m.mean_ratio == 1.0);
    CHECK(m.median_ratio == 1.0);
    for (double x : m.ratios)
        CHECK(x == 1.0);
    CHECK(m.mean_wsr_bits == m.mean_wsr_nats / std::log(2.0));
    CHECK(r.case_info.n_tx == 8);
    CHECK(r.case_info.n_users == 2);
    CHECK(r.case_info.n_rx == 2);
}

TEST_CASE("bench - ZF, model requirement and counts")
{
    const Dataset ds = small_dataset(1, 20, 7);
    const Method both[] = {Method::zf, Method::rwmmse};
    const EvalReport r = bench_methods(ds, both, nullptr, {2});
    REQUIRE(r.find("zf") != nullptr);
    REQUIRE(r.find("rwmmse") != nullptr);
    const MethodStats &zf = *r.find("zf");
    CHECK(zf.samples + zf.failed == 20);
    CHECK(zf.ratios.size() == zf.samples);
    CHECK(zf.times_s.size() == zf.samples);
    for (double x : zf.ratios)
        CHECK((std::isfinite(x) && x >= 0.0));
    CHECK(zf.mean_ratio < 1.0);

    CHECK_THROWS_AS(bench_method(Method::cmbnn, ds, nullptr), std::invalid_argument);
    const NetParams wrong = NetParams::initialize(NetDims{4, 2}, 1);
    CHECK_THROWS_AS(bench_method(Method::cmbnn, ds, &wrong), ShapeMismatch);
}

TEST_CASE("bench - cmbnn with an untrained model counts failures")
{
    const Dataset ds = small_dataset(1, 25, 3);
    const NetParams p = NetParams::initialize(NetDims{2, 2}, 9);
    const EvalReport r = bench_method(Method::cmbnn, ds, &p, {2});
    const MethodStats &m = r.methods.at(0);
    CHECK(m.samples + m.failed == 25);
    CHECK(m.failed_ids.size() == m.failed);
    for (double x : m.ratios)
        CHECK((std::isfinite(x) && x >= 0.0));
}

TEST_CASE("bench - total time grows with dataset size")
{
    const Dataset big = small_dataset(1, 160, 99);
    Dataset half = big;
    half.samples.resize(80);
    BenchOptions opts;
    opts.warmup = 5;
    const auto total = [&](const Dataset &ds) {
        const MethodStats m = bench_method(Method::rwmmse, ds, nullptr, opts).methods.at(0);
        return std::accumulate(m.times_s.begin(), m.times_s.end(), 0.0);
    };
    const double t_half = total(half);
    const double t_big = total(big);
    CHECK(t_big >= 1.5 * t_half);
}

TEST_CASE("finalize_stats - means, median and bits")
{
    MethodStats m;
    m.ratios = {0.5, 0.9, 0.7, 0.1};
    m.times_s = {1.0, 3.0, 2.0, 2.0};
    m.wsr_nats = {std::log(2.0), std::log(2.0), 3 * std::log(2.0), 3 * std::log(2.0)};
    m.failed_ids = {6};
    finalize_stats(m);
    CHECK(m.samples == 4);
    CHECK(m.failed == 1);
    CHECK(std::abs(m.mean_ratio - 0.55) < 1e-15);
    CHECK(std::abs(m.median_ratio - 0.6) < 1e-15);
    CHECK(m.mean_time_s == 2.0);
    CHECK(std::abs(m.mean_wsr_bits - 2.0) < 1e-15);
}

TEST_CASE("report - JSON to CSV to JSON keeps every number")
{
    const EvalReport r = sample_report();
    const EvalReport from_json = report_from_json(report_to_json(r));
    check_same(r, from_json);
    const EvalReport via_csv = report_from_csv(report_to_csv(from_json));
    check_same(r, via_csv);
    check_same(r, report_from_json(report_to_json(via_csv)));
}

TEST_CASE("report - empty report gives a header-only CSV")
{
    EvalReport r;
    CHECK(report_to_csv(r) == "schema,n_tx,n_users,n_rx,method,metric,index,value\n");
    CHECK(report_from_csv(report_to_csv(r)).methods.empty());
}

TEST_CASE("report - schema string and file round trip")
{
    const EvalReport r = sample_report();
    CHECK(r.schema == "evalreport/1");
    const std::string csv = report_to_csv(r);
    CHECK(csv.find("\nevalreport/1,8,2,2,zf,mean_ratio,,") != std::string::npos);
    CHECK(report_to_json(r).find("\"schema\": \"evalreport/1\"") != std::string::npos);

    const auto dir = std::filesystem::temp_directory_path() / "bflab_test_evalcli";
    std::filesystem::create_directories(dir);
    for (ReportFormat f : {ReportFormat::json, ReportFormat::csv})
    {
        const auto path = dir / (f == ReportFormat::json ? "r.json" : "r.csv");
        export_report(r, path, f);
        check_same(r, load_report(path, f));
    }
    CHECK_THROWS_AS(export_report(r, dir / "missing" / "r.json", ReportFormat::json), IoError);
    CHECK_THROWS_AS(report_from_json("{\"schema\": \"evalreport/2\"}"), FormatError);
    CHECK_THROWS_AS(report_from_csv("a,b\n"), FormatError);
    std::filesystem::remove_all(dir);
}
