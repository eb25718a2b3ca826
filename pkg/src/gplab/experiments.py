"""Experiment orchestration: configs in, trial records and verdicts out.

A worker pool (capped by the GPL_THREADS environment variable) executes
trials concurrently; every trial owns the stream (seed, (grid-index, trial))
so results are bit-identical for any worker count, and aggregation always
folds records in trial-index order.  Each run writes trials.csv,
summary.csv, manifest.json and verdicts.json (UTF-8, LF) into its output
directory.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from . import calibration, constructions, geometry, models, stats
from .errors import ConditionBViolated, ConfigInvalid, DegenerateInput, IoFailure
from .sampling import RngStream, ball_tail, sample_gaussian

SCHEMA_VERSION = 1
ARTIFACT_VERSION = "0.1.0"

ExperimentKind = Literal[
    "clt",
    "var-scaling",
    "expectation",
    "sandwich",
    "depgraph",
    "coupling",
    "event-A",
    "cell-decomp",
]
FunctionalName = Literal["vol", "f_s", "surface", "prob-content"]


class ExperimentConfig(BaseModel):
    """Declarative description of one experiment sweep."""

    kind: ExperimentKind
    model: models.ModelKind = "gaussian"
    d: int = 2
    n_grid: list[int]
    trials: int
    seed: int = 42
    functional: FunctionalName = "vol"
    s: int = 0
    c_0: float | None = None
    c: float | None = None
    c_1: float | None = None
    b_1: float | None = None
    b_2: float | None = None
    c_2: float | None = None
    A: float | None = None
    prob_content_darts: int = 100_000
    cell_darts: int = 200_000
    out: str | None = None

    @field_validator("trials")
    @classmethod
    def _trials_at_least_two(cls, v):
        if v < 2:
            raise ValueError("must be >= 2")
        return v

    @field_validator("d")
    @classmethod
    def _d_in_range(cls, v):
        if not 2 <= v <= 8:
            raise ValueError("must lie in [2, 8]")
        return v

    @field_validator("n_grid")
    @classmethod
    def _grid_increasing(cls, v):
        if not v:
            raise ValueError("must be nonempty")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("must be strictly increasing")
        return v

    @model_validator(mode="after")
    def _cross_checks(self):
        if self.n_grid[0] < self.d + 1:
            raise ValueError("n_grid: entries must be at least d + 1")
        if self.functional == "f_s" and not 0 <= self.s < self.d:
            raise ValueError("s: must lie in [0, d - 1] for the f_s functional")
        return self

    def constants(self) -> dict:
        """Calibrated constants for this experiment kind, with overrides applied."""
        merged = calibration.constants_for(self.kind)
        merged["c_0"] = 100.0 * self.d
        for name in ("c_0", "c", "c_1", "b_1", "b_2", "c_2", "A"):
            override = getattr(self, name)
            if override is not None:
                merged[name] = override
        return merged

    def radii_for(self, n: int) -> models.RadiiBundle:
        k = self.constants()
        return models.RadiiBundle.for_model(
            n, self.d, c_0=k["c_0"], c=k["c"], c_1=k["c_1"], b_1=k["b_1"], b_2=k["b_2"]
        )


def parse_config(payload: dict) -> ExperimentConfig:
    """Validate a raw mapping, raising ConfigInvalid with the offending field."""
    try:
        return ExperimentConfig(**payload)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = ".".join(str(p) for p in first["loc"]) or "<config>"
        raise ConfigInvalid(f"{loc}: {first['msg']}") from exc


class RunManifest(BaseModel):
    """Everything needed to reproduce and audit one run."""

    config: dict
    artifact_version: str = ARTIFACT_VERSION
    schema_version: int = SCHEMA_VERSION
    per_n_streams: list[list[int]]
    wall_clock_s: float
    summary: list[dict]
    verdicts: list[dict]
    deterministic_hash: str

    def summary_csv(self) -> str:
        if not self.summary:
            return ""
        cols = list(self.summary[0].keys())
        lines = [",".join(cols)]
        for row in self.summary:
            lines.append(",".join(_csv_cell(row[c]) for c in cols))
        return "\n".join(lines) + "\n"


def _csv_cell(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def worker_count() -> int:
    cap = os.environ.get("GPL_THREADS")
    workers = os.cpu_count() or 1
    if cap:
        workers = min(workers, max(1, int(cap)))
    return workers


def _chunks(total: int, pieces: int) -> list[range]:
    size = max(1, math.ceil(total / pieces))
    return [range(lo, min(lo + size, total)) for lo in range(0, total, size)]


def _parallel(fn, payloads: list) -> list:
    workers = worker_count()
    if workers <= 1 or len(payloads) <= 1:
        return [fn(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, payloads))


# ---------------------------------------------------------------------------
# trial workers (top level so the process pool can pickle them)


def _sweep_batch(payload: dict) -> list[models.TrialRecord]:
    spec = models.ModelSpec(
        kind=payload["model"], d=payload["d"], n=payload["n"], c_0=payload["c_0"]
    )
    radii = models.RadiiBundle(**payload["radii"])
    darts = payload["prob_content_darts"]
    out = []
    for t in payload["trial_range"]:
        rng = RngStream(payload["seed"], (payload["n_index"], t))
        try:
            out.append(models.run_trial(spec, radii, rng, prob_content_darts=darts))
        except DegenerateInput:
            rec = models.TrialRecord(
                model=spec.kind,
                d=spec.d,
                n=spec.n,
                seed=rng.seed,
                stream=rng.stream,
                realized_n=0,
                degenerate_resampled=models.MAX_DEGENERATE_RESAMPLES + 1,
            )
            out.append(rec)
    return out


def _coupling_batch(payload: dict) -> list[tuple]:
    d = payload["d"]
    radii = models.RadiiBundle(**payload["radii"])
    out = []
    for t in payload["trial_range"]:
        rng = RngStream(payload["seed"], (payload["n_index"], t))
        try:
            if payload["pair"] == "gaussian":
                a, b = models.coupled_gaussian_truncated(d, payload["n"], radii, rng)
            else:
                a, b = models.coupled_run(d, payload["n"], payload["n_prime"], radii, rng)
            out.append((a.vol, b.vol, a.f[0], b.f[0]))
        except DegenerateInput:
            out.append((math.nan, math.nan, 0, 0))
    return out


def _event_batch(payload: dict) -> list[np.ndarray]:
    fam: constructions.SimplexFamily = payload["family"]
    out = []
    for t in payload["trial_range"]:
        rng = RngStream(payload["seed"], (payload["n_index"], t))
        sample = sample_gaussian(payload["n"], fam.d, rng)
        out.append(constructions.event_A_flags(sample, fam, payload["k_required"]))
    return out


def _cell_batch(payload: dict) -> list[dict]:
    spec = models.ModelSpec(kind="poisson", d=payload["d"], n=payload["n"], c_0=payload["c_0"])
    radii = models.RadiiBundle(**payload["radii"])
    cells: constructions.CellPartition = payload["cells"]
    c2_cap = payload["c2_cap"]
    s = payload["s"]
    out = []
    for t in payload["trial_range"]:
        rng = RngStream(payload["seed"], (payload["n_index"], t))
        row = {"trial": t, "condition_B": False, "faces_exact": None, "xi_z": math.nan,
               "condition_Bi": None, "max_cell_count": 0, "vol": math.nan, "max_xi": math.nan}
        points, _ = models.draw_points(spec, radii, rng)
        try:
            hull = geometry.convex_hull(points)
        except DegenerateInput:
            out.append(row)
            continue
        row["vol"] = geometry.volume(hull)
        counts = np.bincount(
            cells.cell_of(points[cells.in_annulus(points)]), minlength=cells.m
        )
        row["max_cell_count"] = int(counts.max()) if counts.size else 0
        row["condition_Bi"] = bool((counts <= c2_cap).all())
        row["condition_B"] = bool(hull.offsets.min() >= cells.r)
        if not row["condition_B"]:
            out.append(row)
            continue
        try:
            cs = constructions.cell_statistics(
                hull, cells, points, s, rng.child(5), darts=payload["cell_darts"]
            )
        except ConditionBViolated:
            row["condition_B"] = False
            out.append(row)
            continue
        fs = geometry.face_count(hull, s)
        row["faces_exact"] = bool(cs.face_numerators.sum() == (s + 1) * fs)
        xi_sum, xi_se = cs.xi_total()
        target = row["vol"] - _ball_volume(payload["d"], cells.r)
        row["xi_z"] = (xi_sum - target) / xi_se if xi_se > 0 else math.nan
        row["max_xi"] = float(cs.xi.max())
        out.append(row)
    return out


def _ball_volume(d: int, radius: float) -> float:
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0) * radius**d


def _sandwich_batch(payload: dict) -> list[bool]:
    spec = models.ModelSpec(
        kind=payload["model"], d=payload["d"], n=payload["n"], c_0=payload["c_0"]
    )
    radii = models.RadiiBundle(**payload["radii"])
    out = []
    for t in payload["trial_range"]:
        rng = RngStream(payload["seed"], (payload["n_index"], t))
        try:
            out.append(constructions.sandwich_trial(spec, radii, rng))
        except DegenerateInput:
            out.append(False)
    return out


# ---------------------------------------------------------------------------
# per-kind drivers


def _radii_payload(cfg: ExperimentConfig, n: int) -> dict:
    r = cfg.radii_for(n)
    return {
        "R": r.R, "rho": r.rho, "r_sandwich": r.r_sandwich,
        "r_construction": r.r_construction, "c": r.c, "c_1": r.c_1,
        "b_1": r.b_1, "b_2": r.b_2, "c_0": r.c_0,
    }


def _functional_values(records: list[models.TrialRecord], cfg: ExperimentConfig) -> np.ndarray:
    if cfg.functional == "vol":
        vals = [r.vol for r in records]
    elif cfg.functional == "surface":
        vals = [r.surface_area for r in records]
    elif cfg.functional == "prob-content":
        vals = [r.prob_content for r in records]
    else:
        vals = [r.f[cfg.s] if r.f else math.nan for r in records]
    return np.asarray(vals, dtype=float)


def _run_sweep(cfg: ExperimentConfig, n_index: int, n: int) -> list[models.TrialRecord]:
    darts = cfg.prob_content_darts if cfg.functional == "prob-content" else 0
    payloads = [
        {
            "model": cfg.model, "d": cfg.d, "n": n, "c_0": cfg.constants()["c_0"],
            "radii": _radii_payload(cfg, n), "seed": cfg.seed, "n_index": n_index,
            "trial_range": chunk, "prob_content_darts": darts,
        }
        for chunk in _chunks(cfg.trials, 4 * worker_count())
    ]
    records: list[models.TrialRecord] = []
    for batch in _parallel(_sweep_batch, payloads):
        records.extend(batch)
    return records


def _theory_expectation(cfg: ExperimentConfig, n: int) -> float:
    ln = math.log(n)
    d = cfg.d
    if cfg.functional == "vol":
        return _ball_volume(d, 1.0) * (2.0 * ln) ** (d / 2.0)
    if cfg.functional == "f_s":
        beta = beta_internal_angle(cfg.s, d - 1)
        return (
            (2.0**d / math.sqrt(d))
            * math.comb(d, cfg.s + 1)
            * beta
            * (math.pi * ln) ** ((d - 1) / 2.0)
        )
    raise ConfigInvalid("functional: expectation theory curves exist for vol and f_s only")


def beta_internal_angle(s: int, k: int, rng: RngStream | None = None, samples: int = 200_000) -> float:
    """Internal angle of the regular k-simplex at one of its s-faces.

    Exact for k <= 3; Monte Carlo (cone-membership frequency in the normal
    space of the face) for higher k, where no simple closed form is used.
    """
    if not 0 <= s <= k:
        raise ValueError("face dimension out of range")
    if s == k:
        return 1.0
    exact = {
        (0, 1): 0.5,
        (0, 2): 1.0 / 6.0,
        (1, 2): 0.5,
        (1, 3): math.acos(1.0 / 3.0) / (2.0 * math.pi),
        (2, 3): 0.5,
    }
    if (s, k) == (0, 3):
        return (3.0 * math.acos(1.0 / 3.0) - math.pi) / (4.0 * math.pi)
    if (s, k) in exact:
        return exact[(s, k)]
    # Monte Carlo: directions around the face centroid that stay inside
    from scipy.optimize import nnls

    frame = np.eye(k)
    verts = geometry.regular_simplex(k, 1.0, np.zeros(k), frame)
    centroid = verts[: s + 1].mean(axis=0)
    gen = (rng or RngStream(1234)).generator()
    dirs = gen.standard_normal((samples, k))
    spans = (verts - centroid).T
    hits = 0
    for u in dirs:
        coef, resid = nnls(spans, u)
        if resid < 1e-9 * np.linalg.norm(u):
            hits += 1
    return hits / samples


def _trend_nondecreasing(values, ses, z: float = 2.0) -> tuple[bool, float]:
    """True when no step decreases beyond z combined standard errors."""
    worst = 0.0
    ok = True
    for (v0, s0), (v1, s1) in zip(zip(values, ses), zip(values[1:], ses[1:])):
        drop = v0 - v1
        allowance = z * math.hypot(s0, s1)
        worst = max(worst, drop - allowance)
        if drop > allowance:
            ok = False
    return ok, worst


def _drive_clt(cfg: ExperimentConfig) -> tuple[list, list, list]:
    rows, verdicts, trials_csv = [], [], []
    ks_by_n = []
    for idx, n in enumerate(cfg.n_grid):
        records = _run_sweep(cfg, idx, n)
        trials_csv.extend(records)
        vals = _functional_values(records, cfg)
        vals = vals[np.isfinite(vals)]
        ks = stats.ks_distance(vals)
        ks_by_n.append(ks)
        rows.append(
            {
                "n": n, "trials": int(vals.size), "functional": _functional_label(cfg),
                "ks": ks, "mean": float(vals.mean()), "var": float(vals.var(ddof=1)),
                "ks_critical_0.01": 1.628 / math.sqrt(vals.size),
            }
        )
        verdicts.append(_verdict(f"ks(n={n})", ks, threshold=calibration.threshold("ks_clt"),
                                 passed=ks <= calibration.threshold("ks_clt")))
    increases = max(
        (b - a for a, b in zip(ks_by_n, ks_by_n[1:])), default=0.0
    )
    verdicts.append(_verdict("ks_nonincreasing", increases, threshold=0.0, passed=increases <= 0.0))
    return rows, verdicts, trials_csv


def _functional_label(cfg: ExperimentConfig) -> str:
    return f"f_{cfg.s}" if cfg.functional == "f_s" else cfg.functional


def _var_stderr(vals: np.ndarray) -> float:
    n = vals.size
    m2 = vals.var(ddof=1)
    m4 = ((vals - vals.mean()) ** 4).mean()
    inner = (m4 - m2 * m2 * (n - 3) / (n - 1)) / n
    return math.sqrt(max(inner, 0.0))


def _drive_var_scaling(cfg: ExperimentConfig) -> tuple[list, list, list]:
    rows, trials_csv = [], []
    per_n_values = []
    for idx, n in enumerate(cfg.n_grid):
        records = _run_sweep(cfg, idx, n)
        trials_csv.extend(records)
        vals = _functional_values(records, cfg)
        vals = vals[np.isfinite(vals)]
        per_n_values.append(vals)
        rows.append(
            {
                "n": n, "trials": int(vals.size), "functional": _functional_label(cfg),
                "mean": float(vals.mean()), "var": float(vals.var(ddof=1)),
                "var_stderr": _var_stderr(vals),
            }
        )
    grid = [(n, row["var"]) for n, row in zip(cfg.n_grid, rows)]
    slope, intercept, resid = stats.log_log_slope(grid)
    # bootstrap over trials within each n, refitting the slope
    gen = RngStream(cfg.seed, (999_999,)).generator()
    boots = np.empty(1000)
    for b in range(1000):
        resampled = [
            (n, float(vals[gen.integers(0, vals.size, vals.size)].var(ddof=1)))
            for n, vals in zip(cfg.n_grid, per_n_values)
        ]
        boots[b] = stats.log_log_slope(resampled)[0]
    lo, hi = np.quantile(boots, [0.025, 0.975])
    target_low = (cfg.d - 3) / 2.0
    target_high = (cfg.d - 1) / 2.0
    covers_low = bool(lo <= target_low <= hi)
    covers_high = bool(lo <= target_high <= hi)
    flag = (
        "lower" if covers_low and not covers_high
        else "upper" if covers_high and not covers_low
        else "both" if covers_low and covers_high
        else "neither"
    )
    verdicts = [
        {
            "metric": "var_slope", "estimate": slope, "ci": [float(lo), float(hi)],
            "residual_norm": resid, "target_low": target_low, "target_high": target_high,
            "bracket_flag": flag,
            "pass": covers_low if cfg.functional == "vol" else True,
        }
    ]
    return rows, verdicts, trials_csv


def _drive_expectation(cfg: ExperimentConfig) -> tuple[list, list, list]:
    rows, trials_csv = [], []
    ratios, ratio_ses = [], []
    for idx, n in enumerate(cfg.n_grid):
        records = _run_sweep(cfg, idx, n)
        trials_csv.extend(records)
        vals = _functional_values(records, cfg)
        vals = vals[np.isfinite(vals)]
        theory = _theory_expectation(cfg, n)
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(vals.size))
        ratios.append(mean / theory)
        ratio_ses.append(se / theory)
        rows.append(
            {
                "n": n, "trials": int(vals.size), "functional": _functional_label(cfg),
                "mean": mean, "se": se, "theory": theory, "ratio": mean / theory,
                "ratio_se": se / theory,
            }
        )
    ok, worst = _trend_nondecreasing(ratios, ratio_ses)
    verdicts = [_verdict("ratio_nondecreasing", worst, threshold=0.0, passed=ok)]
    try:
        lo, hi = calibration.bracket(f"expectation_ratio_{_functional_label(cfg)}", cfg.d)
        final = ratios[-1]
        verdicts.append(
            _verdict("ratio_final_bracket", final, threshold=[lo, hi], passed=lo <= final <= hi)
        )
    except KeyError:
        pass
    return rows, verdicts, trials_csv


def _drive_sandwich(cfg: ExperimentConfig) -> tuple[list, list, list]:
    rows, verdicts = [], []
    freqs, ses = [], []
    for idx, n in enumerate(cfg.n_grid):
        payloads = [
            {
                "model": cfg.model if cfg.model != "gaussian" else "truncated",
                "d": cfg.d, "n": n, "c_0": cfg.constants()["c_0"],
                "radii": _radii_payload(cfg, n), "seed": cfg.seed,
                "n_index": idx, "trial_range": chunk,
            }
            for chunk in _chunks(cfg.trials, 4 * worker_count())
        ]
        flags: list[bool] = []
        for batch in _parallel(_sandwich_batch, payloads):
            flags.extend(batch)
        freq, se = stats.event_frequency(flags)
        freqs.append(freq)
        ses.append(se)
        rows.append({"n": n, "trials": len(flags), "freq": freq, "se": se,
                     "r_sandwich": cfg.radii_for(n).r_sandwich})
    final_threshold = calibration.threshold("sandwich_freq_final")
    verdicts.append(_verdict("containment_freq_final", freqs[-1], threshold=final_threshold,
                             passed=freqs[-1] >= final_threshold))
    ok, worst = _trend_nondecreasing(freqs, ses)
    verdicts.append(_verdict("containment_nondecreasing", worst, threshold=0.0, passed=ok))
    return rows, verdicts, []


def _drive_depgraph(cfg: ExperimentConfig) -> tuple[list, list, list]:
    rows = []
    consts = cfg.constants()
    for idx, n in enumerate(cfg.n_grid):
        radii = cfg.radii_for(n)
        rng = RngStream(cfg.seed, (idx, 0, 777))
        net = constructions.build_net(radii.rho, 2.0 * consts["c_1"], cfg.d, rng)
        cells = constructions.build_cells(net, radii.R, radii.r_sandwich)
        graph = constructions.build_dependency_graph(cells)
        ln = math.log(n)
        m_norm = net.m / ln ** ((cfg.d - 1) / 2.0)
        d_norm = graph.max_degree / math.log(ln) ** ((cfg.d - 1) / 2.0)
        rows.append(
            {
                "n": n, "m": net.m, "D": graph.max_degree, "m_norm": m_norm,
                "D_norm": d_norm, "deg_ratio": graph.max_degree / net.m,
                "theta_edge": graph.parameters["theta_edge"],
            }
        )
    m_lo, m_hi = calibration.bracket("depgraph_m_norm", cfg.d)
    d_lo, d_hi = calibration.bracket("depgraph_D_norm", cfg.d)
    m_ok = all(m_lo <= r["m_norm"] <= m_hi for r in rows)
    d_ok = all(d_lo <= r["D_norm"] <= d_hi for r in rows)
    ratios = [r["deg_ratio"] for r in rows]
    if len(rows) >= 4:
        slope = stats.log_log_slope([(r["n"], max(r["deg_ratio"], 1e-12)) for r in rows])[0]
    else:
        slope = ratios[-1] - ratios[0]
    decreasing = ratios[-1] < ratios[0] and slope < 0
    verdicts = [
        _verdict("m_norm_in_bracket", [min(r["m_norm"] for r in rows), max(r["m_norm"] for r in rows)],
                 threshold=[m_lo, m_hi], passed=m_ok),
        _verdict("D_norm_in_bracket", [min(r["D_norm"] for r in rows), max(r["D_norm"] for r in rows)],
                 threshold=[d_lo, d_hi], passed=d_ok),
        _verdict("degree_ratio_decreasing", slope, threshold=0.0, passed=decreasing),
    ]
    return rows, verdicts, []


def _drive_coupling(cfg: ExperimentConfig) -> tuple[list, list, list]:
    rows, verdicts = [], []
    pair = "gaussian" if cfg.model == "gaussian" else "prefix"
    for idx, n in enumerate(cfg.n_grid):
        n_prime = n + round(math.sqrt(n * math.log(n)))
        payloads = [
            {
                "d": cfg.d, "n": n, "n_prime": n_prime, "pair": pair,
                "radii": _radii_payload(cfg, n), "seed": cfg.seed,
                "n_index": idx, "trial_range": chunk,
            }
            for chunk in _chunks(cfg.trials, 4 * worker_count())
        ]
        quads = []
        for batch in _parallel(_coupling_batch, payloads):
            quads.extend(batch)
        arr = np.asarray(quads, dtype=float)
        good = np.isfinite(arr[:, 0]) & np.isfinite(arr[:, 1])
        vol_a, vol_b = arr[good, 0], arr[good, 1]
        est = stats.coupling_estimate(vol_a, vol_b, RngStream(cfg.seed, (idx, 0, 888)))
        equal_freq = float((vol_a == vol_b).mean())
        ln = math.log(n)
        c0_const = cfg.constants()["c_0"]
        big_c0 = c0_const / 2.0 - (cfg.d - 2) / 2.0
        scale = ln ** (-big_c0 / 2.0) if pair == "gaussian" else n ** (-0.5)
        rows.append(
            {
                "n": n, "n_prime": n_prime if pair == "prefix" else n, "trials": int(good.sum()),
                "pair": pair, "eps1": est.eps1, "eps2": est.eps2, "eps3": est.eps3,
                "se1": est.se1, "se2": est.se2, "se3": est.se3,
                "equal_vol_freq": equal_freq, "paper_scale": scale,
            }
        )
        thresholds = calibration.threshold(
            "coupling_eps_gaussian" if pair == "gaussian" else "coupling_eps_prefix"
        )
        for name, value, thr in zip(("eps1", "eps2", "eps3"), (est.eps1, est.eps2, est.eps3), thresholds):
            verdicts.append(_verdict(f"{name}(n={n})", value, threshold=thr, passed=value <= thr))
        if pair == "prefix":
            thr = calibration.threshold("coupled_equal_vol_freq")
            verdicts.append(_verdict(f"equal_vol_freq(n={n})", equal_freq, threshold=thr,
                                     passed=equal_freq >= thr))
    return rows, verdicts, []


def _drive_event_a(cfg: ExperimentConfig) -> tuple[list, list, list]:
    rows, verdicts = [], []
    consts = cfg.constants()
    for idx, n in enumerate(cfg.n_grid):
        radii = cfg.radii_for(n)
        rng = RngStream(cfg.seed, (idx, 0, 555))
        net = constructions.build_net(radii.r_construction, 2.0 * consts["b_1"], cfg.d, rng)
        fam = constructions.build_simplex_family(net, radii.r_construction, consts["b_2"])
        payloads = [
            {
                "family": fam, "n": n, "seed": cfg.seed, "n_index": idx,
                "trial_range": chunk, "k_required": 2 if cfg.functional == "f_s" else 1,
            }
            for chunk in _chunks(cfg.trials, 4 * worker_count())
        ]
        flags = []
        for batch in _parallel(_event_batch, payloads):
            flags.extend(batch)
        all_flags = np.concatenate(flags) if flags else np.zeros(0, dtype=bool)
        freq, se = stats.event_frequency(all_flags)
        rows.append({"n": n, "m": fam.m, "trials": cfg.trials,
                     "cell_trials": int(all_flags.size), "freq": freq, "se": se})
        b3 = calibration.threshold("event_A_b3")
        verdicts.append(_verdict(f"event_A_freq(n={n})", freq, threshold=b3, passed=freq >= b3))
    return rows, verdicts, []


def _drive_cell_decomp(cfg: ExperimentConfig) -> tuple[list, list, list]:
    rows, verdicts = [], []
    consts = cfg.constants()
    for idx, n in enumerate(cfg.n_grid):
        radii = cfg.radii_for(n)
        rng = RngStream(cfg.seed, (idx, 0, 333))
        net = constructions.build_net(radii.rho, 2.0 * consts["c_1"], cfg.d, rng)
        cells = constructions.build_cells(net, radii.R, radii.r_sandwich)
        c2_cap = consts["c_2"] * math.log(math.log(n))
        payloads = [
            {
                "d": cfg.d, "n": n, "c_0": consts["c_0"], "radii": _radii_payload(cfg, n),
                "cells": cells, "c2_cap": c2_cap, "s": cfg.s, "seed": cfg.seed,
                "n_index": idx, "trial_range": chunk, "cell_darts": cfg.cell_darts,
            }
            for chunk in _chunks(cfg.trials, 4 * worker_count())
        ]
        trials = []
        for batch in _parallel(_cell_batch, payloads):
            trials.extend(batch)
        b_flags = [t["condition_B"] for t in trials]
        bi_flags = [t["condition_Bi"] for t in trials if t["condition_Bi"] is not None]
        faces = [t["faces_exact"] for t in trials if t["faces_exact"] is not None]
        zs = np.asarray([t["xi_z"] for t in trials if math.isfinite(t["xi_z"])])
        b_freq = float(np.mean(b_flags)) if b_flags else 0.0
        bi_freq = float(np.mean(bi_flags)) if bi_flags else 0.0
        rows.append(
            {
                "n": n, "m": cells.m, "trials": len(trials), "condition_B_freq": b_freq,
                "condition_Bi_freq": bi_freq, "faces_exact_all": bool(faces and all(faces)),
                "xi_z_within3_frac": float((np.abs(zs) <= 3.0).mean()) if zs.size else math.nan,
                "xi_z_mean": float(zs.mean()) if zs.size else math.nan,
                "c2_cap": c2_cap,
            }
        )
        verdicts.append(_verdict(f"faces_identity(n={n})", rows[-1]["faces_exact_all"],
                                 threshold=True, passed=rows[-1]["faces_exact_all"]))
        thr = calibration.threshold("condition_Bi_freq")
        verdicts.append(_verdict(f"condition_Bi_freq(n={n})", bi_freq, threshold=thr,
                                 passed=bi_freq >= thr))
        within = rows[-1]["xi_z_within3_frac"]
        verdicts.append(_verdict(f"xi_vs_volume(n={n})", within, threshold=0.985,
                                 passed=bool(within >= 0.985)))
    return rows, verdicts, []


def _verdict(metric: str, estimate, threshold, passed: bool) -> dict:
    return {"metric": metric, "estimate": estimate, "threshold": threshold, "pass": bool(passed)}


_DRIVERS = {
    "clt": _drive_clt,
    "var-scaling": _drive_var_scaling,
    "expectation": _drive_expectation,
    "sandwich": _drive_sandwich,
    "depgraph": _drive_depgraph,
    "coupling": _drive_coupling,
    "event-A": _drive_event_a,
    "cell-decomp": _drive_cell_decomp,
}


def run(config: ExperimentConfig | dict) -> RunManifest:
    """Execute one experiment and, when config.out is set, persist its outputs."""
    cfg = config if isinstance(config, ExperimentConfig) else parse_config(config)
    start = time.perf_counter()
    rows, verdicts, trial_records = _DRIVERS[cfg.kind](cfg)
    wall = time.perf_counter() - start
    trials_text = ""
    if trial_records:
        header = models.TrialRecord.csv_header(cfg.d)
        trials_text = "\n".join([header] + [r.csv_row() for r in trial_records]) + "\n"
    digest = hashlib.sha256()
    digest.update(json.dumps(cfg.model_dump(), sort_keys=True).encode())
    digest.update(json.dumps(rows, sort_keys=True, default=str).encode())
    digest.update(trials_text.encode())
    manifest = RunManifest(
        config=cfg.model_dump(),
        per_n_streams=[[idx, 0] for idx in range(len(cfg.n_grid))],
        wall_clock_s=wall,
        summary=rows,
        verdicts=verdicts,
        deterministic_hash=digest.hexdigest(),
    )
    if cfg.out:
        _write_outputs(cfg, manifest, trials_text)
    return manifest


def _write_outputs(cfg: ExperimentConfig, manifest: RunManifest, trials_text: str) -> None:
    try:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        if trials_text:
            (out / "trials.csv").write_text(trials_text, encoding="utf-8", newline="\n")
        (out / "summary.csv").write_text(manifest.summary_csv(), encoding="utf-8", newline="\n")
        (out / "manifest.json").write_text(
            manifest.model_dump_json(indent=2) + "\n", encoding="utf-8", newline="\n"
        )
        (out / "verdicts.json").write_text(
            json.dumps(manifest.verdicts, indent=2) + "\n", encoding="utf-8", newline="\n"
        )
        emit_plotdata(manifest, out)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def emit_plotdata(manifest: RunManifest, out_dir: str | Path) -> list[Path]:
    """One tidy CSV per figure-like output; returns written paths."""
    if not manifest.summary:
        return []
    out = Path(out_dir)
    kind = manifest.config["kind"]
    try:
        out.mkdir(parents=True, exist_ok=True)
        columns_by_kind = {
            "clt": ("n", "trials", "ks", "ks_critical_0.01"),
            "var-scaling": ("n", "mean", "var", "var_stderr"),
            "expectation": ("n", "mean", "se", "theory", "ratio"),
            "sandwich": ("n", "trials", "freq", "se"),
            "event-A": ("n", "cell_trials", "freq", "se"),
            "depgraph": ("n", "m", "D", "m_norm", "D_norm", "deg_ratio"),
            "coupling": ("n", "trials", "eps1", "eps2", "eps3", "equal_vol_freq"),
            "cell-decomp": ("n", "trials", "condition_B_freq", "condition_Bi_freq", "xi_z_within3_frac"),
        }
        cols = columns_by_kind[kind]
        lines = [",".join(cols)]
        for row in manifest.summary:
            lines.append(",".join(_csv_cell(row[c]) for c in cols))
        path = out / f"plot_{kind.replace('-', '_')}.csv"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
        return [path]
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
