#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
#
# bflab - beamforming laboratory for weighted sum-rate precoding and learned beamformers
# Copyright (C) 2026 The bflab authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
# http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# ------------------------------------------------------------------------

"""Bar charts of mean time and mean performance ratio from one or more evalreport/1 JSON files.

Usage: plot_report.py OUT.png REPORT.json [REPORT.json ...]
"""

import json
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def main(argv):
    if len(argv) < 3:
        print(__doc__)
        return 2
    reports = []
    for path in argv[2:]:
        with open(path) as f:
            r = json.load(f)
        if r.get("schema") != "evalreport/1":
            raise SystemExit(f"{path}: unsupported schema {r.get('schema')}")
        reports.append(r)

    fig, (ax_time, ax_ratio) = plt.subplots(1, 2, figsize=(10, 4))
    width = 0.8 / max(1, max(len(r["methods"]) for r in reports))
    for ci, r in enumerate(reports):
        for mi, m in enumerate(r["methods"]):
            x = ci + mi * width
            ax_time.bar(x, m["mean_time_s"], width, color=f"C{mi}", label=m["method"] if ci == 0 else None)
            ax_ratio.bar(x, m["mean_ratio"], width, color=f"C{mi}", label=m["method"] if ci == 0 else None)
    ticks = [i + 0.4 - width / 2 for i in range(len(reports))]
    labels = [f"({r['case']['n_tx']}, {r['case']['n_users']})" for r in reports]
    for ax in (ax_time, ax_ratio):
        ax.set_xticks(ticks, labels)
        ax.set_xlabel("(n_tx, n_users)")
        ax.legend()
    ax_time.set_yscale("log")
    ax_time.set_ylabel("mean time per sample [s]")
    ax_ratio.set_ylabel("mean performance ratio")
    ax_ratio.set_ylim(0, 1.05)
    fig.tight_layout()
    fig.savefig(argv[1], dpi=150)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
