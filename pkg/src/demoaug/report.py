"""Render run logs into delimited tables and matplotlib figures.

Consumes the JSON-lines cycle log written by training runs and the JSON
documents written by evaluation; emits CSV next to PNG figures so results
can be eyeballed or post-processed without rerunning anything.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

CYCLE_FIELDS = ["cycle", "L", "N_fail", "r_succ", "g_rate", "dataset_size", "scale"]


def load_cycle_log(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def write_cycle_csv(rows: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CYCLE_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k) for k in CYCLE_FIELDS})


def plot_training_progress(rows: list[dict], path) -> None:
    cycles = [r["cycle"] for r in rows]
    fig, ax = plt.subplots(figsize=(6.4, 4.0), dpi=110)
    ax.plot(cycles, [r["r_succ"] for r in rows], "o-", label="success rate", color="#1f77b4")
    ax.plot(cycles, [r["g_rate"] for r in rows], "s--", label="generation rate", color="#d62728")
    ax.set_xlabel("cycle")
    ax.set_ylabel("rate")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax2 = ax.twinx()
    ax2.plot(cycles, [r["dataset_size"] for r in rows], "^:", label="dataset size", color="#2ca02c")
    ax2.set_ylabel("dataset size")
    lines, labels = ax.get_legend_handles_labels()
    l2, lab2 = ax2.get_legend_handles_labels()
    ax.legend(lines + l2, labels + lab2, loc="center right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_level_schedule(rows: list[dict], path) -> None:
    cycles = [r["cycle"] for r in rows]
    fig, ax = plt.subplots(figsize=(6.4, 3.2), dpi=110)
    ax.step(cycles, [r["L"] for r in rows], where="post", label="level", color="#9467bd")
    ax.plot(cycles, [r["scale"] for r in rows], "--", label="randomness scale", color="#ff7f0e")
    ax.set_xlabel("cycle")
    ax.set_ylabel("level / scale")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def write_eval_csv(results: dict, path) -> None:
    """results: {"task", "episodes", "per_level": {level: rate}}"""
    levels = sorted(int(k) for k in results["per_level"])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["task", "episodes"] + [f"level{lv}" for lv in levels])
        w.writerow([results["task"], results["episodes"]] + [results["per_level"][str(lv) if str(lv) in results["per_level"] else lv] for lv in levels])


def plot_eval_bars(results: dict, path) -> None:
    per = {int(k): v for k, v in results["per_level"].items()}
    levels = sorted(per)
    fig, ax = plt.subplots(figsize=(4.8, 3.2), dpi=110)
    ax.bar([str(lv) for lv in levels], [per[lv] for lv in levels], color="#1f77b4", width=0.6)
    ax.set_xlabel("evaluation level")
    ax.set_ylabel("success rate")
    ax.set_ylim(0, 1.0)
    ax.grid(axis="y", alpha=0.3)
    ax.set_title(results.get("task", ""))
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def generate_report(log_path, out_dir, eval_path=None) -> list[str]:
    """Write all tables and figures; returns the artifact file names."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if log_path:
        rows = load_cycle_log(log_path)
        write_cycle_csv(rows, out / "cycles.csv")
        written.append("cycles.csv")
        if rows:
            plot_training_progress(rows, out / "training_progress.png")
            plot_level_schedule(rows, out / "level_schedule.png")
            written += ["training_progress.png", "level_schedule.png"]
    if eval_path:
        with open(eval_path, "r", encoding="utf-8") as fh:
            results = json.load(fh)
        write_eval_csv(results, out / "eval_table.csv")
        plot_eval_bars(results, out / "eval_levels.png")
        written += ["eval_table.csv", "eval_levels.png"]
    return written
