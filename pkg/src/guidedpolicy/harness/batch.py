"""Multi-seed runs and mean / standard-deviation aggregation of learning curves."""

from __future__ import annotations

import csv
import logging
import os
from typing import Callable

import numpy as np

from ..agents.train import CURVE_FIELDS, curve_to_csv
from . import manifest as mf

log = logging.getLogger(__name__)

METRICS = CURVE_FIELDS[1:]


def aggregate_curves(curves: list[list[dict]]) -> list[dict]:
    """Mean and population std per eval point over the curves that reach it."""
    frames = sorted({row["frames"] for c in curves for row in c})
    out = []
    for f in frames:
        rows = [row for c in curves for row in c if row["frames"] == f]
        agg = {"frames": f, "n": len(rows)}
        for k in METRICS:
            vals = np.array([float(r[k]) for r in rows])
            finite = vals[np.isfinite(vals)]
            agg[f"{k}_mean"] = float(finite.mean()) if len(finite) else float("nan")
            agg[f"{k}_std"] = float(finite.std()) if len(finite) else float("nan")
        out.append(agg)
    return out


def aggregate_csv(agg: list[dict]) -> str:
    cols = ["frames", "n"] + [f"{k}_{s}" for k in METRICS for s in ("mean", "std")]
    lines = [",".join(cols)]
    for row in agg:
        lines.append(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in cols))
    return "\n".join(lines) + "\n"


def read_curve(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{"frames": int(r["frames"]), **{k: float(r[k]) for k in METRICS}}
                for r in csv.DictReader(fh)]


def batch_runs(config, seeds, out_dir: str, runner: Callable[[int], list[dict]],
               config_hash: str = "") -> dict:
    """Run ``runner(seed)`` per seed, write per-seed CSVs plus ``aggregate.csv``.

    A failing seed is logged and recorded in the manifest; the aggregate is
    computed over the seeds that completed.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    os.makedirs(out_dir, exist_ok=True)
    m = mf.begin(out_dir, "batch", config_hash, seeds[0], force=True)
    curves, files, failed = {}, [], {}
    for s in seeds:
        try:
            curves[s] = runner(s)
        except Exception as exc:   # recorded per seed; the batch carries on
            log.warning("seed %s failed: %s", s, exc)
            failed[s] = f"{type(exc).__name__}: {exc}"
            continue
        name = f"seed_{s}.csv"
        with open(os.path.join(out_dir, name), "w", newline="") as fh:
            fh.write(curve_to_csv(curves[s]))
        files.append(name)
    if failed:
        log.warning("aggregate over %d of %d seeds", len(curves), len(seeds))
    agg = aggregate_curves(list(curves.values()))
    with open(os.path.join(out_dir, "aggregate.csv"), "w", newline="") as fh:
        fh.write(aggregate_csv(agg))
    files.append("aggregate.csv")
    mf.finish(m, out_dir, files, {"seeds": seeds, "completed": sorted(curves),
                                  "failed": {str(k): v for k, v in failed.items()}},
              status="completed" if curves else "failed")
    return {"curves": curves, "aggregate": agg, "failed": failed}
