"""Single-run and Monte Carlo drivers with percentile statistics.

Every run owns four generator streams (measurement noise, radar draw, filter,
shaping) spawned from one 64-bit seed. Monte Carlo seeds come from
``(master, switch index, run index)`` and deliberately not from the law, so
the compared laws see identical noise (common random numbers).
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .bayes import classify_states
from .engagement import EvaderPolicy, run_engagement
from .errors import RunError
from .game_math import singular_boundary
from .guidance import FastPathCounters, Law, LawKind
from .immpf import ImmpfEstimator, TruthEstimator, dump_cloud

# Fraction of failed runs above which a Monte Carlo summary is refused.
MAX_FAILURE_FRACTION = 0.01
SUMMARY_SCHEMA = 1


class McAbort(RuntimeError):
    """Too many runs failed for the summary to be meaningful."""

    def __init__(self, message, failures):
        super().__init__(message)
        self.failures = failures


class _RecordingNormal:
    """Generator wrapper that remembers every standard normal it hands out."""

    def __init__(self, rng):
        self.rng = rng
        self.draws = []

    def standard_normal(self, *args, **kw):
        v = self.rng.standard_normal(*args, **kw)
        self.draws.append(float(v) if np.ndim(v) == 0 else np.asarray(v).tolist())
        return v


@dataclass
class RunStreams:
    meas: object
    radar: np.random.Generator
    filter: np.random.Generator
    shaping: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> "RunStreams":
        ss = np.random.SeedSequence(int(seed)).spawn(4)
        gens = [np.random.default_rng(s) for s in ss]
        return cls(_RecordingNormal(gens[0]), gens[1], gens[2], gens[3])


def derive_seed(master: int, switch_index: int, run_index: int) -> int:
    """64-bit run seed from the sweep coordinates (independent of scheduling and law)."""
    state = np.random.SeedSequence([int(master), int(switch_index), int(run_index)]).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


@dataclass
class RunRecord:
    seed: int
    law: str
    switch_time: float
    miss: float
    miss_flagged: bool
    decision_log: list
    counters: FastPathCounters
    wall_time: float
    meas_noise: list = field(repr=False, default_factory=list)
    trajectory: object = field(repr=False, default=None)
    clouds: list = field(repr=False, default_factory=list)

    @property
    def noise_checksum(self) -> str:
        return hashlib.sha256(np.asarray(self.meas_noise, dtype=float).tobytes()).hexdigest()


def _decision_rows(result, geom) -> list:
    traj = result.trajectory
    by_t = {round(r["t"], 9): r for r in traj.rows}
    rows = []
    for rep in result.decisions:
        truth = by_t.get(round(rep.t, 9))
        true_h = ""
        if truth is not None:
            st = np.array([[truth["t_go_true"], truth["z_true"], 0.0, 0.0]])
            true_h = f"H{int(classify_states(st, [truth['mode_true']], geom)[0])}"
        rows.append({
            "t": rep.t,
            **{f"L{i + 1}": float(v) for i, v in enumerate(rep.likelihoods)},
            **{f"P{i + 1}": float(v) for i, v in enumerate(rep.priors)},
            **{f"I{i + 1}": float(v) for i, v in enumerate(rep.risks)},
            "outcome": str(rep.outcome),
            "fast_path": int(rep.fast_path),
            "true_hypothesis": true_h,
        })
    return rows


DECISION_COLUMNS = ("t", "L1", "L2", "L3", "L4", "P1", "P2", "P3", "P4", "I1", "I2", "I3", "I4", "outcome",
                    "fast_path", "true_hypothesis")


def run_single(config, law, switch_time: float, seed: int, *, perfect_information=False, keep_trajectory=False,
               dump_clouds=False) -> RunRecord:
    """One closed-loop engagement; deterministic given ``seed``."""
    kind = LawKind.parse(law)
    streams = RunStreams.from_seed(seed)
    guidance = Law(kind, config, shaping_rng=streams.shaping)
    estimator = TruthEstimator(config) if perfect_information else ImmpfEstimator(config)
    policy = EvaderPolicy(switch_time, config.initial_mode)
    try:
        result = run_engagement(config, guidance, estimator, policy, streams, dump_cloud=dump_clouds)
    except RunError as exc:
        exc.seed, exc.law = seed, kind.value
        raise
    return RunRecord(
        seed=int(seed), law=kind.value, switch_time=float(switch_time), miss=result.miss.value,
        miss_flagged=result.miss.flagged, decision_log=_decision_rows(result, config.geometry), counters=guidance.counters,
        wall_time=result.wall_time, meas_noise=list(streams.meas.draws),
        trajectory=result.trajectory if keep_trajectory else None, clouds=result.cloud_dumps,
    )


def nearest_rank(samples, p: float) -> float:
    """The ceil(p/100 * n)-th smallest sample (1-based), ``0 < p <= 100``."""
    if not 0 < p <= 100:
        raise ValueError("p must lie in (0, 100]")
    xs = np.sort(np.asarray(samples, dtype=float))
    if len(xs) == 0:
        return float("nan")
    k = max(1, math.ceil(round(p / 100.0 * len(xs), 9)))
    return float(xs[k - 1])


@dataclass
class McSummary:
    laws: list
    switch_grid: list
    runs_per_point: int
    seed: int
    per_switch: dict  # law -> list of {switch_time, n, p50, p95}
    pooled: dict  # law -> {n, p50, p95, cdf}
    fast_path: dict  # law -> counters and fractions
    cpu_time: dict  # law -> mean wall time per run
    failures: list
    runs: list = field(default_factory=list, repr=False)  # (law, switch_time, run_index, seed, miss, flagged)

    TIMING_KEYS = ("cpu_time",)

    def to_dict(self, timing=True) -> dict:
        d = asdict(self)
        d["schema"] = SUMMARY_SCHEMA
        if not timing:
            for k in self.TIMING_KEYS:
                d.pop(k)
            for v in d["fast_path"].values():
                for k in ("mean_fast_time", "mean_full_time", "speedup"):
                    v.pop(k, None)
        return d

    def comparable(self) -> str:
        """Canonical JSON without the wall-clock fields, for reproducibility checks."""
        return json.dumps(self.to_dict(timing=False), sort_keys=True)

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
        with open(os.path.join(out_dir, "misses.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["law", "switch_time", "run", "seed", "miss", "flagged"])
            w.writerows(self.runs)
        with open(os.path.join(out_dir, "percentiles.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["law", "switch_time", "n", "p50", "p95"])
            for law in self.laws:
                for row in self.per_switch[law]:
                    w.writerow([law, row["switch_time"], row["n"], row["p50"], row["p95"]])
                p = self.pooled[law]
                w.writerow([law, "pooled", p["n"], p["p50"], p["p95"]])


def summarize(laws, switch_grid, runs_per_point, seed, results, failures) -> McSummary:
    """Reduce per-run results ``{(law, switch_index, run_index): RunRecord}``."""
    per_switch, pooled, fast, cpu, rows = {}, {}, {}, {}, []
    for law in laws:
        per_switch[law] = []
        all_miss = []
        counters = FastPathCounters()
        times = []
        for si, ts in enumerate(switch_grid):
            misses = []
            for ri in range(runs_per_point):
                rec = results.get((law, si, ri))
                if rec is None:
                    continue
                misses.append(rec.miss)
                counters = counters.merge(rec.counters)
                times.append(rec.wall_time)
                rows.append((law, ts, ri, rec.seed, repr(rec.miss), int(rec.miss_flagged)))
            per_switch[law].append({"switch_time": ts, "n": len(misses), "p50": nearest_rank(misses, 50),
                                    "p95": nearest_rank(misses, 95)})
            all_miss += misses
        pooled[law] = {"n": len(all_miss), "p50": nearest_rank(all_miss, 50), "p95": nearest_rank(all_miss, 95),
                       "cdf": sorted(all_miss)}
        mean_fast = counters.fast_time / counters.successes if counters.successes else float("nan")
        mean_full = counters.full_time / counters.full_count if counters.full_count else float("nan")
        fast[law] = {
            "attempts": counters.attempts, "successes": counters.successes, "ambiguous": counters.ambiguous,
            "full": counters.full_count,
            "fraction": counters.successes / counters.attempts if counters.attempts else float("nan"),
            "mean_fast_time": mean_fast, "mean_full_time": mean_full,
            "speedup": mean_full / mean_fast if counters.successes and counters.full_count else float("nan"),
        }
        cpu[law] = float(np.mean(times)) if times else float("nan")
    return McSummary(list(laws), list(switch_grid), runs_per_point, seed, per_switch, pooled, fast, cpu,
                     failures, rows)


def _mc_task(args):
    config, law, si, ri, ts, seed = args
    try:
        rec = run_single(config, law, ts, seed)
        rec.meas_noise = []
        rec.decision_log = []
        return (law, si, ri), rec, None
    except RunError as exc:
        return (law, si, ri), None, {"law": law, "switch_time": ts, "run": ri, "seed": seed, "error": str(exc)}


def run_mc(config, laws, switch_grid, runs_per_point: int, seed: int, *, workers: int = 1,
           progress=None) -> McSummary:
    """Sweep laws x switch times x runs with pre-derived seeds.

    Results land in slots keyed by (law, switch index, run index), so the
    summary does not depend on the worker count or completion order.
    """
    if runs_per_point < 1:
        raise ValueError("runs_per_point must be at least 1")
    laws = [LawKind.parse(l).value for l in laws]
    grid = [float(t) for t in switch_grid]
    tasks = [(config, law, si, ri, ts, derive_seed(seed, si, ri))
             for si, ts in enumerate(grid) for ri in range(runs_per_point) for law in laws]
    results, failures = {}, []
    if workers <= 1:
        outcomes = map(_mc_task, tasks)
    else:
        pool = ProcessPoolExecutor(max_workers=workers)
        outcomes = pool.map(_mc_task, tasks, chunksize=max(1, len(tasks) // (8 * workers)))
    try:
        for n, (key, rec, fail) in enumerate(outcomes, 1):
            if rec is not None:
                results[key] = rec
            else:
                failures.append(fail)
            if progress is not None:
                progress(n, len(tasks))
    finally:
        if workers > 1:
            pool.shutdown()
    failures.sort(key=lambda f: (f["law"], f["switch_time"], f["run"]))
    if len(failures) > MAX_FAILURE_FRACTION * len(tasks):
        raise McAbort(f"{len(failures)} of {len(tasks)} runs failed", failures)
    return summarize(laws, grid, runs_per_point, seed, results, failures)


def emit_game_space(config, t_go_max: float, n_points: int) -> list:
    """Rows ``(t_go, +z*, -z*)`` on a uniform grid from 0 to ``t_go_max``."""
    if n_points < 2:
        raise ValueError("n_points must be at least 2")
    if t_go_max <= 0:
        raise ValueError("t_go_max must be positive")
    t = np.linspace(0.0, t_go_max, n_points)
    zs = singular_boundary(t, config.geometry)
    return [(float(a), float(b), float(-b) + 0.0) for a, b in zip(t, zs)]


def write_rows(path_or_file, header, rows):
    own = isinstance(path_or_file, (str, os.PathLike))
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    finally:
        if own:
            fh.close()


def write_decisions(path, record: RunRecord):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=DECISION_COLUMNS)
        w.writeheader()
        w.writerows(record.decision_log)


def write_clouds(out_dir, record: RunRecord):
    os.makedirs(out_dir, exist_ok=True)
    for k, cloud in enumerate(record.clouds):
        dump_cloud(cloud, os.path.join(out_dir, f"cloud_{k:04d}.csv"))
