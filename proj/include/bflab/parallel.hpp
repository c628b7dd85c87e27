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

#ifndef BFLAB_PARALLEL_HPP
#define BFLAB_PARALLEL_HPP

#include <cstddef>
#include <functional>

namespace bflab
{
    // Worker count: BFLAB_THREADS if set to a positive integer, else hardware concurrency (at least 1)
    std::size_t worker_count();

    // Calls body(i) for i in [0, n) across up to `workers` threads (0 = worker_count()).
    // Every index runs exactly once; the first exception thrown by any body is rethrown after join.
    void parallel_for(std::size_t n, const std::function<void(std::size_t)> &body, std::size_t workers = 0);
}

#endif
