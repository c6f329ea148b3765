//! Plot scripts written next to run outputs. They need Python with
//! matplotlib and read only the CSV beside them.

pub const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Accuracy and cumulative cost per evaluation point, mean over seeds."""
import csv
import os
from collections import defaultdict

import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
rows = list(csv.DictReader(open(os.path.join(here, "metrics.csv"))))
acc, ops = defaultdict(list), defaultdict(list)
for r in rows:
    t = int(r["task"])
    acc[t].append(float(r["accuracy"]))
    ops[t].append(int(r["weight_writes"]) + int(r["macs"]))
tasks = sorted(acc)
fig, (a, b) = plt.subplots(1, 2, figsize=(10, 4))
a.plot(tasks, [100 * sum(acc[t]) / len(acc[t]) for t in tasks], marker="o")
a.set_xlabel("task")
a.set_ylabel("accuracy (%)")
b.plot(tasks, [sum(ops[t]) / len(ops[t]) for t in tasks], marker="o")
b.set_xlabel("task")
b.set_ylabel("weight writes + MACs")
fig.suptitle(rows[0]["learner"] if rows else "")
fig.tight_layout()
fig.savefig(os.path.join(here, "metrics.png"), dpi=150)
"#;

pub const FRONTIER_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Final accuracy against update operations per sample."""
import csv
import os

import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
rows = list(csv.DictReader(open(os.path.join(here, "compare.csv"))))
fig, ax = plt.subplots(figsize=(6, 4))
for r in rows:
    x, y = float(r["ops_per_sample"]), 100 * float(r["final_accuracy"])
    ax.scatter(x, y)
    ax.annotate(r["run"], (x, y), textcoords="offset points", xytext=(4, 4))
best = []
for r in sorted(rows, key=lambda r: float(r["ops_per_sample"])):
    if not best or float(r["final_accuracy"]) > float(best[-1]["final_accuracy"]):
        best.append(r)
ax.plot([float(r["ops_per_sample"]) for r in best], [100 * float(r["final_accuracy"]) for r in best], "k--", lw=1)
ax.set_xscale("log")
ax.set_xlabel("weight writes + MACs per sample")
ax.set_ylabel("final accuracy (%)")
fig.tight_layout()
fig.savefig(os.path.join(here, "frontier.png"), dpi=150)
"#;
