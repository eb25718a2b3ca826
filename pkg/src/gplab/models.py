"""The three random-polytope models and their functionals.

* gaussian  - hull of n i.i.d. standard normal points
* truncated - same with the normal conditioned on the ball B(R)
* poisson   - hull of N ~ Poisson(n) i.i.d. ball-truncated draws

Radii follow the defining formulas: R^2 = 2 ln n + c0 ln ln n (truncation),
rho^2 = 2 ln n - ln ln n - 2 ln(c ln ln n) (net sphere) and the inner
sandwich radius r = rho - 5 c1^2 / rho, which satisfies
5 c1^2 < rho^2 - r^2 < 10 c1^2 whenever rho^2 > 5 c1^2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import geometry
from .errors import DegenerateInput, RadicandNegative, RhoTooSmall
from .sampling import (
    RngStream,
    TruncatedGaussian,
    sample_gaussian,
    sample_poisson_count,
    sample_truncated,
)

ModelKind = Literal["gaussian", "truncated", "poisson"]

MAX_DEGENERATE_RESAMPLES = 3


def radius_R(n: int, c_0: float) -> float:
    """Truncation radius: R^2 = 2 ln n + c_0 ln ln n."""
    if n < 3:
        raise ValueError("n must be >= 3")
    ln = math.log(n)
    return math.sqrt(2.0 * ln + c_0 * math.log(ln))


def radius_rho(n: int, c: float) -> float:
    """Net-sphere radius: rho^2 = 2 ln n - ln ln n - 2 ln(c ln ln n)."""
    ln = math.log(n)
    lnln = math.log(ln)
    if lnln <= 0 or c * lnln <= 0:
        raise RadicandNegative("n too small for the rho formula")
    rad = 2.0 * ln - lnln - 2.0 * math.log(c * lnln)
    if rad <= 0:
        raise RadicandNegative(f"rho^2 = {rad:.4f} <= 0 at n={n}, c={c}")
    return math.sqrt(rad)


def radius_r_sandwich(rho: float, c_1: float) -> float:
    """Inner sandwich radius r = rho - 5 c_1^2 / rho."""
    if rho * rho <= 5.0 * c_1 * c_1:
        raise RhoTooSmall(f"rho^2 = {rho * rho:.4f} <= 5 c_1^2 = {5 * c_1 * c_1:.4f}")
    return rho - 5.0 * c_1 * c_1 / rho


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind
    d: int
    n: int
    c_0: float | None = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "truncated", "poisson"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.d < 2:
            raise ValueError("dimension must be >= 2")
        if self.n < self.d + 1:
            raise ValueError("n must be at least d + 1")
        if self.c_0 is None:
            object.__setattr__(self, "c_0", 100.0 * self.d)
        if self.c_0 <= 0:
            raise ValueError("c_0 must be positive")


@dataclass(frozen=True)
class RadiiBundle:
    """All radii for one (n, constants) configuration.

    r_construction is the sphere radius of the simplex-family construction
    (r^2 = 2 ln n - ln ln n); rho/r_sandwich drive the sandwich and cells.
    """

    R: float
    rho: float
    r_sandwich: float
    r_construction: float
    c: float
    c_1: float
    b_1: float
    b_2: float
    c_0: float

    @classmethod
    def for_model(
        cls,
        n: int,
        d: int,
        c_0: float | None = None,
        c: float = 1.0,
        c_1: float = 1.0,
        b_1: float = 2.0,
        b_2: float = 0.3,
    ) -> "RadiiBundle":
        c_0 = 100.0 * d if c_0 is None else c_0
        rho = radius_rho(n, c)
        bundle = cls(
            R=radius_R(n, c_0),
            rho=rho,
            r_sandwich=radius_r_sandwich(rho, c_1),
            r_construction=math.sqrt(2.0 * math.log(n) - math.log(math.log(n))),
            c=c,
            c_1=c_1,
            b_1=b_1,
            b_2=b_2,
            c_0=c_0,
        )
        if not bundle.r_sandwich < bundle.rho < bundle.R:
            raise RhoTooSmall(
                f"radii out of order: r={bundle.r_sandwich:.4f}, rho={bundle.rho:.4f}, R={bundle.R:.4f}"
            )
        return bundle


@dataclass
class TrialRecord:
    """One Monte Carlo trial: realized counts, functional values and flags."""

    model: ModelKind
    d: int
    n: int
    seed: int
    stream: tuple[int, ...]
    realized_n: int
    degenerate_resampled: int = 0
    sandwich_ok: bool | None = None
    vol: float = math.nan
    surface_area: float = math.nan
    f: tuple[int, ...] = ()
    prob_content: float = math.nan
    prob_content_se: float = math.nan

    CSV_PREFIX = (
        "model",
        "d",
        "n",
        "seed",
        "stream",
        "realized_n",
        "degenerate_resampled",
        "sandwich_ok",
        "vol",
        "surface_area",
    )

    @classmethod
    def csv_header(cls, d: int) -> str:
        cols = list(cls.CSV_PREFIX) + [f"f_{s}" for s in range(d)] + [
            "prob_content",
            "prob_content_se",
        ]
        return ",".join(cols)

    def csv_row(self) -> str:
        fvals = list(self.f) if self.f else [math.nan] * self.d
        cells = [
            self.model,
            str(self.d),
            str(self.n),
            str(self.seed),
            ":".join(str(k) for k in self.stream),
            str(self.realized_n),
            str(self.degenerate_resampled),
            "" if self.sandwich_ok is None else str(int(self.sandwich_ok)),
            repr(float(self.vol)),
            repr(float(self.surface_area)),
            *[str(v) for v in fvals],
            repr(float(self.prob_content)),
            repr(float(self.prob_content_se)),
        ]
        return ",".join(cells)

    def to_json(self) -> str:
        payload = {
            "model": self.model,
            "d": self.d,
            "n": self.n,
            "seed": self.seed,
            "stream": list(self.stream),
            "realized_n": self.realized_n,
            "degenerate_resampled": self.degenerate_resampled,
            "sandwich_ok": self.sandwich_ok,
            "vol": self.vol,
            "surface_area": self.surface_area,
            "f": list(self.f),
            "prob_content": self.prob_content,
            "prob_content_se": self.prob_content_se,
        }
        return json.dumps(payload, allow_nan=True)


def draw_points(spec: ModelSpec, radii: RadiiBundle, rng: RngStream) -> tuple[np.ndarray, int]:
    """One point sample of the model: (points, realized count)."""
    if spec.kind == "gaussian":
        pts = sample_gaussian(spec.n, spec.d, rng)
        return pts, spec.n
    trunc = TruncatedGaussian(d=spec.d, R=radii.R)
    if spec.kind == "truncated":
        return sample_truncated(spec.n, trunc, rng), spec.n
    count = max(spec.d + 1, sample_poisson_count(spec.n, rng.child(0)))
    return sample_truncated(count, trunc, rng.child(1)), count


def generate(spec: ModelSpec, radii: RadiiBundle, rng: RngStream) -> tuple[geometry.Polytope, TrialRecord]:
    """Draw one realization of the model and hull it.

    Degenerate draws (affinely dependent beyond repair, a probability-zero
    event surfaced by floating point) are resampled on a child stream up to
    MAX_DEGENERATE_RESAMPLES times and counted in the record, so they can
    never silently bias statistics.
    """
    resampled = 0
    stream = rng
    while True:
        points, realized = draw_points(spec, radii, stream)
        try:
            hull = geometry.convex_hull(points)
            break
        except DegenerateInput:
            resampled += 1
            if resampled > MAX_DEGENERATE_RESAMPLES:
                raise
            stream = rng.child(1000 + resampled)
    record = TrialRecord(
        model=spec.kind,
        d=spec.d,
        n=spec.n,
        seed=rng.seed,
        stream=rng.stream,
        realized_n=realized,
        degenerate_resampled=resampled,
        sandwich_ok=bool(hull.offsets.min() >= radii.r_sandwich),
    )
    return hull, record


def evaluate_functionals(
    p: geometry.Polytope,
    rng: RngStream | None = None,
    prob_content_darts: int = 0,
) -> dict:
    """Exact vol / f-vector / surface area, plus optional Monte Carlo probability content.

    The probability content estimate uses ``prob_content_darts`` standard
    normal darts (0 disables it) and reports a binomial standard error.
    """
    out = {
        "vol": geometry.volume(p),
        "f": geometry.f_vector(p),
        "surface_area": geometry.surface_area(p),
        "prob_content": math.nan,
        "prob_content_se": math.nan,
    }
    if prob_content_darts > 0:
        if rng is None:
            raise ValueError("probability content estimation needs an RngStream")
        darts = sample_gaussian(prob_content_darts, p.d, rng)
        hit = float(p.contains(darts).mean())
        out["prob_content"] = hit
        out["prob_content_se"] = math.sqrt(hit * (1.0 - hit) / prob_content_darts)
    return out


def fill_functionals(record: TrialRecord, values: dict) -> TrialRecord:
    record.vol = values["vol"]
    record.f = tuple(values["f"])
    record.surface_area = values["surface_area"]
    record.prob_content = values["prob_content"]
    record.prob_content_se = values["prob_content_se"]
    return record


def run_trial(
    spec: ModelSpec,
    radii: RadiiBundle,
    rng: RngStream,
    prob_content_darts: int = 0,
) -> TrialRecord:
    """generate + evaluate_functionals in one step (the experiment work unit)."""
    hull, record = generate(spec, radii, rng)
    values = evaluate_functionals(hull, rng.child(9), prob_content_darts=prob_content_darts)
    return fill_functionals(record, values)


def coupled_run(
    d: int,
    n: int,
    n_prime: int,
    radii: RadiiBundle,
    rng: RngStream,
) -> tuple[TrialRecord, TrialRecord]:
    """Common-random-numbers pair: hull of an n-prefix vs hull of all n' points.

    One ball-truncated stream of n' points is drawn; the first record hulls
    points[:n], the second hulls all of them, so the prefix is shared exactly.
    """
    if n > n_prime:
        raise ValueError("need n <= n_prime")
    trunc = TruncatedGaussian(d=d, R=radii.R)
    resampled = 0
    stream = rng
    while True:
        points = sample_truncated(n_prime, trunc, stream)
        try:
            hull_small = geometry.convex_hull(points[:n])
            hull_big = geometry.convex_hull(points)
            break
        except DegenerateInput:
            resampled += 1
            if resampled > MAX_DEGENERATE_RESAMPLES:
                raise
            stream = rng.child(1000 + resampled)
    records = []
    for count, hull in ((n, hull_small), (n_prime, hull_big)):
        rec = TrialRecord(
            model="truncated",
            d=d,
            n=count,
            seed=rng.seed,
            stream=rng.stream,
            realized_n=count,
            degenerate_resampled=resampled,
            sandwich_ok=bool(hull.offsets.min() >= radii.r_sandwich),
        )
        fill_functionals(rec, evaluate_functionals(hull))
        records.append(rec)
    return records[0], records[1]


def coupled_gaussian_truncated(
    d: int,
    n: int,
    radii: RadiiBundle,
    rng: RngStream,
) -> tuple[TrialRecord, TrialRecord]:
    """Couple the plain and truncated models on one underlying normal stream.

    The truncated trial reuses the gaussian points whenever they all fall in
    B(R); otherwise only the escaping points are redrawn from the truncated
    law, so the two records differ exactly on the trials where some point
    leaves B(R).
    """
    spec = ModelSpec(kind="gaussian", d=d, n=n, c_0=radii.c_0)
    resampled = 0
    stream = rng
    while True:
        points = sample_gaussian(n, d, stream)
        outside = np.linalg.norm(points, axis=1) > radii.R
        truncated_points = points
        if outside.any():
            truncated_points = points.copy()
            trunc = TruncatedGaussian(d=d, R=radii.R)
            truncated_points[outside] = sample_truncated(int(outside.sum()), trunc, stream.child(7))
        try:
            hull_g = geometry.convex_hull(points)
            hull_t = geometry.convex_hull(truncated_points)
            break
        except DegenerateInput:
            resampled += 1
            if resampled > MAX_DEGENERATE_RESAMPLES:
                raise
            stream = rng.child(1000 + resampled)
    out = []
    for kind, hull in (("gaussian", hull_g), ("truncated", hull_t)):
        rec = TrialRecord(
            model=kind,
            d=d,
            n=n,
            seed=rng.seed,
            stream=rng.stream,
            realized_n=n,
            degenerate_resampled=resampled,
            sandwich_ok=bool(hull.offsets.min() >= radii.r_sandwich),
        )
        fill_functionals(rec, evaluate_functionals(hull))
        out.append(rec)
    return out[0], out[1]
