"""Results table and per-figure curve files from finished run directories."""

from __future__ import annotations

import csv
import json
import logging
import os
from collections import defaultdict

import numpy as np

from . import manifest as mf
from .batch import read_curve

log = logging.getLogger(__name__)

TABLE_COLUMNS = ("agent", "success_rate", "average_turn")
FIGURES = {
    "fig_dqn_family.csv": ("success_rate", "average_turn"),
    "fig_reward_monitor.csv": ("mean_learned_reward",),
    "fig_ppo_family.csv": ("success_rate", "average_turn"),
    "fig_transfer.csv": ("success_rate", "average_turn"),
}
VALIDATION = "Validation"


def _find_runs(paths) -> list[str]:
    found = []
    for p in paths:
        if not os.path.isdir(p):
            log.warning("run %s not found; omitted", p)
            continue
        for dirpath, _, names in os.walk(p):
            if mf.MANIFEST in names:
                found.append(dirpath)
    return sorted(set(found))


def collect(run_dirs) -> tuple[list[dict], dict[str, list[dict]]]:
    """(per-run final metrics, figure name -> long-format rows)."""
    finals, figs = [], defaultdict(list)
    for d in _find_runs(run_dirs):
        m = mf.RunManifest.read(d)
        if not m.complete(d):
            log.warning("run %s is incomplete; omitted", d)
            continue
        if m.stage == "train-agent":
            with open(os.path.join(d, "metrics.json")) as fh:
                met = json.load(fh)
            curve = read_curve(os.path.join(d, "curve.csv"))
            finals.append(met)
            fam = "fig_ppo_family.csv" if met["algo"] == "ppo" else "fig_dqn_family.csv"
            for row in curve:
                figs[fam].append({"agent": met["agent"], "seed": met["seed"], **row})
                figs["fig_reward_monitor.csv"].append({"agent": met["agent"], "seed": met["seed"], **row})
                if "validation_reward" in met:
                    figs["fig_reward_monitor.csv"].append(
                        {"agent": VALIDATION, "seed": met["seed"], "frames": row["frames"],
                         "mean_learned_reward": met["validation_reward"]})
        elif m.stage == "transfer":
            for label in m.info.get("final_success", {}):
                curve = read_curve(os.path.join(d, f"curve_{label}.csv"))
                for row in curve:
                    figs["fig_transfer.csv"].append({"agent": f"DQN_new({label})", "seed": m.seed, **row})
            with open(os.path.join(d, "summary.csv"), newline="") as fh:
                for r in csv.DictReader(fh):
                    finals.append({"agent": f"DQN_new({r['agent']})", "success_rate": float(r["success_rate"]),
                                   "average_turn": float(r["average_turn"]), "seed": m.seed})
    return finals, figs


def results_table(finals: list[dict]) -> list[dict]:
    """One row per agent label, averaged over seeds, in first-seen order."""
    groups: dict[str, list[dict]] = {}
    for f in finals:
        groups.setdefault(f["agent"], []).append(f)
    return [{"agent": a, "success_rate": float(np.mean([r["success_rate"] for r in rows])),
             "average_turn": float(np.mean([r["average_turn"] for r in rows]))}
            for a, rows in groups.items()]


def report(run_dirs, out_dir: str) -> list[dict]:
    """Write ``results.csv`` and the figure CSVs; returns the table rows."""
    os.makedirs(out_dir, exist_ok=True)
    finals, figs = collect(run_dirs)
    if not finals:
        log.warning("no finished runs found; writing an empty table")
    table = results_table(finals)
    files = ["results.csv"]
    with open(os.path.join(out_dir, "results.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(TABLE_COLUMNS), lineterminator="\n")
        w.writeheader()
        w.writerows(table)
    for name, metrics in FIGURES.items():
        cols = ["agent", "seed", "frames", *metrics]
        with open(os.path.join(out_dir, name), "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
            w.writeheader()
            w.writerows(figs.get(name, []))
        files.append(name)
    m = mf.begin(out_dir, "report", "", 0, force=True, inputs={"runs": [str(r) for r in run_dirs]})
    mf.finish(m, out_dir, files, {"rows": len(table)})
    return table
