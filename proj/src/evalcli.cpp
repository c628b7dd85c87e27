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

#include "bflab/evalcli.hpp"

#include "bflab/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace bflab
{
    double performance_ratio(const ChannelSample &s, const BeamformerSet &pred, const BeamformerSet &truth)
    {
        const double ref = weighted_sum_rate(s, truth);
        if (!(ref > 1e-12))
            throw DegenerateReference("performance_ratio: reference weighted sum-rate is not positive");
        return weighted_sum_rate(s, pred) / ref;
    }

    std::string method_name(Method m)
    {
        switch (m)
        {
        case Method::rwmmse:
            return "rwmmse";
        case Method::zf:
            return "zf";
        case Method::cmbnn:
            return "cmbnn";
        }
        return "unknown";
    }

    Method parse_method(const std::string &name)
    {
        if (name == "rwmmse")
            return Method::rwmmse;
        if (name == "zf")
            return Method::zf;
        if (name == "cmbnn")
            return Method::cmbnn;
        throw std::invalid_argument("unknown method '" + name + "' (expected cmbnn, zf or rwmmse)");
    }

    const MethodStats *EvalReport::find(const std::string &method) const
    {
        for (const auto &m : methods)
            if (m.method == method)
                return &m;
        return nullptr;
    }

    void finalize_stats(MethodStats &m)
    {
        m.samples = m.ratios.size();
        m.failed = m.failed_ids.size();
        const auto mean = [](const std::vector<double> &v) {
            return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        };
        m.mean_ratio = mean(m.ratios);
        m.mean_time_s = mean(m.times_s);
        m.mean_wsr_nats = mean(m.wsr_nats);
        m.mean_wsr_bits = m.mean_wsr_nats / std::log(2.0);
        if (m.ratios.empty())
            m.median_ratio = 0.0;
        else
        {
            std::vector<double> sorted = m.ratios;
            std::sort(sorted.begin(), sorted.end());
            const std::size_t h = sorted.size() / 2;
            m.median_ratio = sorted.size() % 2 ? sorted[h] : 0.5 * (sorted[h - 1] + sorted[h]);
        }
    }

    namespace
    {
        using clock = std::chrono::steady_clock;

        BeamformerSet run_method(Method method, const ChannelSample &s, const NetParams *params,
                                 const BenchOptions &opts)
        {
            switch (method)
            {
            case Method::rwmmse:
                return rwmmse_solve(s, opts.rwmmse).v;
            case Method::zf:
                return zf_solve(s);
            case Method::cmbnn:
                return cmbnn_beamformers(*params, s);
            }
            throw std::invalid_argument("run_method: unknown method");
        }
    }

    EvalReport bench_methods(const Dataset &ds, std::span<const Method> methods, const NetParams *params,
                             const BenchOptions &opts)
    {
        const bool needs_model = std::find(methods.begin(), methods.end(), Method::cmbnn) != methods.end();
        if (needs_model && params == nullptr)
            throw std::invalid_argument("bench: the cmbnn method needs a model");
        if (needs_model && (params->dims.n_users != ds.config.n_users || params->dims.n_rx != ds.config.n_rx))
            throw ShapeMismatch("bench: model dimensions do not match the dataset");

        EvalReport report;
        report.case_info = {ds.config.n_tx, ds.config.n_users, ds.config.n_rx};
        const std::size_t n = ds.samples.size();

        std::vector<ChannelSample> samples(n);
        for (std::size_t i = 0; i < n; ++i)
            samples[i] = normalize_sample(ds.samples[i]);

        // Reference solutions, untimed
        std::vector<BeamformerSet> reference(n);
        std::vector<char> reference_ok(n, 0);
        parallel_for(
            n,
            [&](std::size_t i) {
                try
                {
                    reference[i] = rwmmse_solve(samples[i], opts.reference).v;
                    reference_ok[i] = 1;
                }
                catch (const NumericalError &)
                {
                    reference_ok[i] = 0;
                }
            },
            opts.reference_workers);

        for (Method method : methods)
        {
            MethodStats stats;
            stats.method = method_name(method);

            // Warmup runs are discarded
            for (std::size_t i = 0; i < std::min(opts.warmup, n); ++i)
            {
                try
                {
                    (void)run_method(method, samples[i], params, opts);
                }
                catch (const NumericalError &)
                {
                }
            }

            for (std::size_t i = 0; i < n; ++i)
            {
                try
                {
                    const auto start = clock::now();
                    const BeamformerSet v = run_method(method, samples[i], params, opts);
                    const double elapsed = std::chrono::duration<double>(clock::now() - start).count();
                    if (!reference_ok[i])
                        throw DegenerateReference("bench: reference solve failed");
                    const double ratio = performance_ratio(samples[i], v, reference[i]);
                    stats.ratios.push_back(ratio);
                    stats.times_s.push_back(elapsed);
                    stats.wsr_nats.push_back(weighted_sum_rate(samples[i], v));
                }
                catch (const NumericalError &)
                {
                    stats.failed_ids.push_back(i);
                }
            }
            finalize_stats(stats);
            report.methods.push_back(std::move(stats));
        }
        return report;
    }

    EvalReport bench_method(Method method, const Dataset &ds, const NetParams *params, const BenchOptions &opts)
    {
        const Method one[] = {method};
        return bench_methods(ds, one, params, opts);
    }

    // ---- report serialization ----

    ReportFormat parse_format(const std::string &name)
    {
        if (name == "json")
            return ReportFormat::json;
        if (name == "csv")
            return ReportFormat::csv;
        throw std::invalid_argument("unknown report format '" + name + "' (expected json or csv)");
    }

    namespace
    {
        std::string format_double(double v)
        {
            char buf[64];
            const auto res = std::to_chars(buf, buf + sizeof buf, v);
            return std::string(buf, res.ptr);
        }

        double parse_double(const std::string &s)
        {
            double v = 0.0;
            const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
            if (res.ec != std::errc() || res.ptr != s.data() + s.size())
                throw FormatError("report: bad number '" + s + "'");
            return v;
        }

        std::size_t parse_count(const std::string &s)
        {
            std::size_t v = 0;
            const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
            if (res.ec != std::errc() || res.ptr != s.data() + s.size())
                throw FormatError("report: bad count '" + s + "'");
            return v;
        }

        const char *kCsvHeader = "schema,n_tx,n_users,n_rx,method,metric,index,value";
    }

    std::string report_to_json(const EvalReport &r)
    {
        nlohmann::json methods = nlohmann::json::array();
        for (const auto &m : r.methods)
            methods.push_back({{"method", m.method},
                               {"samples", m.samples},
                               {"failed", m.failed},
                               {"mean_ratio", m.mean_ratio},
                               {"median_ratio", m.median_ratio},
                               {"mean_time_s", m.mean_time_s},
                               {"mean_wsr_nats", m.mean_wsr_nats},
                               {"mean_wsr_bits", m.mean_wsr_bits},
                               {"ratios", m.ratios},
                               {"times_s", m.times_s},
                               {"wsr_nats", m.wsr_nats},
                               {"failed_ids", m.failed_ids}});
        const nlohmann::json j = {
            {"schema", r.schema},
            {"case", {{"n_tx", r.case_info.n_tx}, {"n_users", r.case_info.n_users}, {"n_rx", r.case_info.n_rx}}},
            {"methods", methods}};
        return j.dump(2);
    }

    EvalReport report_from_json(const std::string &text)
    {
        try
        {
            const auto j = nlohmann::json::parse(text);
            EvalReport r;
            r.schema = j.at("schema").get<std::string>();
            if (r.schema != kReportSchema)
                throw FormatError("report: unsupported schema " + r.schema);
            r.case_info.n_tx = j.at("case").at("n_tx").get<std::size_t>();
            r.case_info.n_users = j.at("case").at("n_users").get<std::size_t>();
            r.case_info.n_rx = j.at("case").at("n_rx").get<std::size_t>();
            for (const auto &jm : j.at("methods"))
            {
                MethodStats m;
                m.method = jm.at("method").get<std::string>();
                m.samples = jm.at("samples").get<std::size_t>();
                m.failed = jm.at("failed").get<std::size_t>();
                m.mean_ratio = jm.at("mean_ratio").get<double>();
                m.median_ratio = jm.at("median_ratio").get<double>();
                m.mean_time_s = jm.at("mean_time_s").get<double>();
                m.mean_wsr_nats = jm.at("mean_wsr_nats").get<double>();
                m.mean_wsr_bits = jm.at("mean_wsr_bits").get<double>();
                m.ratios = jm.at("ratios").get<std::vector<double>>();
                m.times_s = jm.at("times_s").get<std::vector<double>>();
                m.wsr_nats = jm.at("wsr_nats").get<std::vector<double>>();
                m.failed_ids = jm.at("failed_ids").get<std::vector<std::size_t>>();
                r.methods.push_back(std::move(m));
            }
            return r;
        }
        catch (const nlohmann::json::exception &e)
        {
            throw FormatError(std::string("report: malformed JSON: ") + e.what());
        }
    }

    std::string report_to_csv(const EvalReport &r)
    {
        std::ostringstream out;
        out << kCsvHeader << '\n';
        const std::string prefix = r.schema + "," + std::to_string(r.case_info.n_tx) + "," +
                                   std::to_string(r.case_info.n_users) + "," + std::to_string(r.case_info.n_rx) + ",";
        for (const auto &m : r.methods)
        {
            const auto row = [&](const char *metric, const std::string &index, const std::string &value) {
                out << prefix << m.method << ',' << metric << ',' << index << ',' << value << '\n';
            };
            row("samples", "", std::to_string(m.samples));
            row("failed", "", std::to_string(m.failed));
            row("mean_ratio", "", format_double(m.mean_ratio));
            row("median_ratio", "", format_double(m.median_ratio));
            row("mean_time_s", "", format_double(m.mean_time_s));
            row("mean_wsr_nats", "", format_double(m.mean_wsr_nats));
            row("mean_wsr_bits", "", format_double(m.mean_wsr_bits));
            for (std::size_t i = 0; i < m.ratios.size(); ++i)
                row("ratio", std::to_string(i), format_double(m.ratios[i]));
            for (std::size_t i = 0; i < m.times_s.size(); ++i)
                row("time_s", std::to_string(i), format_double(m.times_s[i]));
            for (std::size_t i = 0; i < m.wsr_nats.size(); ++i)
                row("wsr_nats", std::to_string(i), format_double(m.wsr_nats[i]));
            for (std::size_t i = 0; i < m.failed_ids.size(); ++i)
                row("failed_id", std::to_string(i), std::to_string(m.failed_ids[i]));
        }
        return out.str();
    }

    EvalReport report_from_csv(const std::string &text)
    {
        std::istringstream in(text);
        std::string line;
        if (!std::getline(in, line) || line != kCsvHeader)
            throw FormatError("report: missing CSV header");

        EvalReport r;
        while (std::getline(in, line))
        {
            if (line.empty())
                continue;
            std::vector<std::string> f;
            std::string cell;
            std::istringstream cells(line);
            while (std::getline(cells, cell, ','))
                f.push_back(cell);
            if (!line.empty() && line.back() == ',')
                f.emplace_back();
            if (f.size() != 8)
                throw FormatError("report: CSV row with " + std::to_string(f.size()) + " fields");

            r.schema = f[0];
            if (r.schema != kReportSchema)
                throw FormatError("report: unsupported schema " + r.schema);
            r.case_info = {parse_count(f[1]), parse_count(f[2]), parse_count(f[3])};
            if (r.methods.empty() || r.methods.back().method != f[4])
            {
                r.methods.emplace_back();
                r.methods.back().method = f[4];
            }
            MethodStats &m = r.methods.back();
            const std::string &metric = f[5];
            const std::string &value = f[7];
            if (metric == "samples")
                m.samples = parse_count(value);
            else if (metric == "failed")
                m.failed = parse_count(value);
            else if (metric == "mean_ratio")
                m.mean_ratio = parse_double(value);
            else if (metric == "median_ratio")
                m.median_ratio = parse_double(value);
            else if (metric == "mean_time_s")
                m.mean_time_s = parse_double(value);
            else if (metric == "mean_wsr_nats")
                m.mean_wsr_nats = parse_double(value);
            else if (metric == "mean_wsr_bits")
                m.mean_wsr_bits = parse_double(value);
            else if (metric == "ratio")
                m.ratios.push_back(parse_double(value));
            else if (metric == "time_s")
                m.times_s.push_back(parse_double(value));
            else if (metric == "wsr_nats")
                m.wsr_nats.push_back(parse_double(value));
            else if (metric == "failed_id")
                m.failed_ids.push_back(parse_count(value));
            else
                throw FormatError("report: unknown metric " + metric);
        }
        return r;
    }

    void export_report(const EvalReport &r, const std::filesystem::path &path, ReportFormat format)
    {
        std::ofstream out(path, std::ios::trunc);
        if (!out)
            throw IoError("export_report: cannot open " + path.string());
        out << (format == ReportFormat::json ? report_to_json(r) + "\n" : report_to_csv(r));
        if (!out)
            throw IoError("export_report: write failed for " + path.string());
    }

    EvalReport load_report(const std::filesystem::path &path, ReportFormat format)
    {
        std::ifstream in(path);
        if (!in)
            throw IoError("load_report: cannot open " + path.string());
        std::stringstream buf;
        buf << in.rdbuf();
        return format == ReportFormat::json ? report_from_json(buf.str()) : report_from_csv(buf.str());
    }
}
