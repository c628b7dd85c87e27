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

#ifndef BFLAB_EVALCLI_HPP
#define BFLAB_EVALCLI_HPP

#include "bflab/channel.hpp"
#include "bflab/neuralnet.hpp"
#include "bflab/solvers.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bflab
{
    inline constexpr const char *kReportSchema = "evalreport/1";

    // Weighted sum-rate of pred over that of truth. Throws DegenerateReference if the reference
    // rate is at most 1e-12.
    double performance_ratio(const ChannelSample &s, const BeamformerSet &pred, const BeamformerSet &truth);

    enum class Method
    {
        rwmmse,
        zf,
        cmbnn,
    };

    std::string method_name(Method m);
    Method parse_method(const std::string &name); // throws std::invalid_argument

    struct MethodStats
    {
        std::string method;
        std::size_t samples = 0; // successful samples
        std::size_t failed = 0;
        double mean_ratio = 0.0;
        double median_ratio = 0.0;
        double mean_time_s = 0.0;
        double mean_wsr_nats = 0.0;
        double mean_wsr_bits = 0.0;
        std::vector<double> ratios;  // per successful sample, dataset order
        std::vector<double> times_s; // per successful sample
        std::vector<double> wsr_nats;
        std::vector<std::size_t> failed_ids;
    };

    struct CaseInfo
    {
        std::size_t n_tx = 0;
        std::size_t n_users = 0;
        std::size_t n_rx = 0;
    };

    struct EvalReport
    {
        std::string schema = kReportSchema;
        CaseInfo case_info;
        std::vector<MethodStats> methods;

        const MethodStats *find(const std::string &method) const;
    };

    struct BenchOptions
    {
        std::size_t warmup = 10;
        SolveOptions reference{500, 1e-6, false};
        SolveOptions rwmmse{500, 1e-6, false};
        // Reference solves fan out over worker threads; timed runs always execute on the calling thread
        std::size_t reference_workers = 0;
    };

    // Times each method over the dataset (samples are normalized first) and rates it against the
    // R-WMMSE reference. params is required iff cmbnn is among the methods. Per-sample numerical
    // failures are excluded from the statistics and counted.
    EvalReport bench_methods(const Dataset &ds, std::span<const Method> methods, const NetParams *params,
                             const BenchOptions &opts = {});
    EvalReport bench_method(Method method, const Dataset &ds, const NetParams *params,
                            const BenchOptions &opts = {});

    enum class ReportFormat
    {
        json,
        csv,
    };

    ReportFormat parse_format(const std::string &name);

    // CSV has columns schema,n_tx,n_users,n_rx,method,metric,index,value with one row per
    // (case, method, metric); per-sample metrics carry their sample index. Throws IoError.
    void export_report(const EvalReport &r, const std::filesystem::path &path, ReportFormat format);
    std::string report_to_json(const EvalReport &r);
    std::string report_to_csv(const EvalReport &r);
    EvalReport report_from_json(const std::string &text); // throws FormatError
    EvalReport report_from_csv(const std::string &text);  // throws FormatError
    EvalReport load_report(const std::filesystem::path &path, ReportFormat format);

    // Fills mean/median/bits fields from the per-sample vectors
    void finalize_stats(MethodStats &m);
}

#endif
