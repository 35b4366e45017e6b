"""Emission of self-contained plot scripts.

The harness writes data files plus standalone matplotlib scripts instead of
rendering images itself, so the core artifact keeps zero plotting
dependencies while every figure stays one command away.
"""

from __future__ import annotations

from pathlib import Path

_TEMPLATE = '''#!/usr/bin/env python3
"""Plot {name}: seed-mean curves from {csv}.  Requires matplotlib."""

import csv
from collections import defaultdict

import matplotlib.pyplot as plt


def load(path):
    by_k = defaultdict(lambda: defaultdict(list))
    with open(path) as fh:
        for row in csv.DictReader(fh):
            k = int(row["k"])
            for field in ("suboptimality", "grad_norm", "clip_frac", "eff_step"):
                by_k[field][k].append(float(row[field]))
    return by_k


def seed_mean(series):
    ks = sorted(series)
    return ks, [sum(series[k]) / len(series[k]) for k in ks]


def main():
    data = load("{csv}")
    fig, axes = plt.subplots(1, 3, figsize=(13, 4))
    for ax, field, ylab in (
        (axes[0], "suboptimality", "f - f*"),
        (axes[1], "grad_norm", "||grad f||"),
        (axes[2], "clip_frac", "clip fraction"),
    ):
        ks, vals = seed_mean(data[field])
        if field == "clip_frac":
            ax.semilogx(ks, vals)
        else:
            positive = [(k, v) for k, v in zip(ks, vals) if v > 0]
            if positive:
                ax.loglog(*zip(*positive))
        ax.set_xlabel("iteration k")
        ax.set_ylabel(ylab)
        ax.grid(True, which="both", alpha=0.3)
    fig.suptitle("{name}")
    fig.tight_layout()
    out = "{name}.png"
    fig.savefig(out, dpi=150)
    print("wrote", out)


if __name__ == "__main__":
    main()
'''


def write_plot_script(path: str | Path, csv_name: str, experiment_name: str):
    script = _TEMPLATE.replace("{csv}", csv_name).replace("{name}", experiment_name)
    Path(path).write_text(script, encoding="utf-8")
