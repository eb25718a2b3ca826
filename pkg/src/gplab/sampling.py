"""Standard-normal machinery: tail formulas and seeded samplers.

All samplers are pure functions of their arguments and an :class:`RngStream`
value, so trials can run on any worker in any order and still reproduce
bit-exactly.  Tail evaluations go through SciPy's regularized incomplete
gamma / erf implementations, which are accurate to ~1e-15 in the far tails.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import gammainc, gammaincc, ndtr

from .errors import QuadratureFailure, RejectionStall


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream identified by (seed, stream).

    ``stream`` may be a single integer or a tuple of integers; tuples give
    collision-free hierarchical substreams (per n-grid entry, per trial,
    per purpose).  Identical (seed, stream) always reproduces identical
    output bit-exactly.
    """

    seed: int
    stream: tuple[int, ...] = ()

    def __post_init__(self):
        key = self.stream
        if isinstance(key, (int, np.integer)):
            key = (int(key),)
        object.__setattr__(self, "stream", tuple(int(k) for k in key))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream))
        )

    def child(self, *key: int) -> "RngStream":
        return RngStream(self.seed, self.stream + tuple(int(k) for k in key))


def std_normal_cdf(t):
    """Phi(t), accurate to ~1e-15."""
    return ndtr(t)


def ball_tail(r, d: int):
    """P(|X| > r) for X standard normal in R^d.

    Exact via the chi-square survival function with d degrees of freedom
    evaluated at r^2.
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    r = np.asarray(r, dtype=float)
    if (r < 0).any():
        raise ValueError("radius must be nonnegative")
    out = gammaincc(d / 2.0, r * r / 2.0)
    return float(out) if out.ndim == 0 else out


def halfspace_tail(r):
    """P(X . u >= r) for a unit direction u, i.e. 1 - Phi(r)."""
    r = np.asarray(r, dtype=float)
    out = ndtr(-r)
    return float(out) if out.ndim == 0 else out


def sample_gaussian(n: int, d: int, rng: RngStream) -> np.ndarray:
    """n i.i.d. standard normal points in R^d as an (n, d) array."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.generator().standard_normal((n, d))


@dataclass(frozen=True)
class TruncatedGaussian:
    """Standard normal conditioned on the ball B(R) in R^d."""

    d: int
    R: float
    acceptance_prob: float = field(init=False)

    def __post_init__(self):
        if self.R <= 0:
            raise ValueError("truncation radius must be positive")
        object.__setattr__(self, "acceptance_prob", 1.0 - ball_tail(self.R, self.d))


def sample_truncated(n: int, trunc: TruncatedGaussian, rng: RngStream) -> np.ndarray:
    """n i.i.d. draws from the ball-truncated normal, by rejection from the plain normal."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if trunc.acceptance_prob < 1e-6:
        raise RejectionStall(
            f"acceptance probability {trunc.acceptance_prob:.3e} too small; check R"
        )
    gen = rng.generator()
    r2 = trunc.R * trunc.R
    out = np.empty((n, trunc.d))
    have = 0
    while have < n:
        want = n - have
        batch = max(64, int(1.05 * want / trunc.acceptance_prob))
        draw = gen.standard_normal((batch, trunc.d))
        keep = draw[np.einsum("ij,ij->i", draw, draw) <= r2]
        take = min(want, keep.shape[0])
        out[have : have + take] = keep[:take]
        have += take
    return out


def sample_poisson_count(mean: float, rng: RngStream) -> int:
    """One Poisson(mean) draw."""
    if mean <= 0:
        raise ValueError("mean must be positive")
    return int(rng.generator().poisson(mean))


def cap_mass(offset: float, R: float, d: int) -> float:
    """P(X . u >= offset and |X| <= R) for any unit u, X standard normal in R^d.

    One-dimensional quadrature over the axis coordinate t, weighting by the
    chi-square mass of the remaining d-1 coordinates inside the ball slice:
    integrand phi(t) * P(chi^2_{d-1} <= R^2 - t^2).
    """
    if offset < 0:
        raise ValueError("offset must be nonnegative")
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if not np.isfinite(R):
        return float(halfspace_tail(offset))
    if R < offset:
        return 0.0
    if d == 1:
        return float(ndtr(R) - ndtr(offset))
    k = (d - 1) / 2.0
    inv_sqrt2pi = 1.0 / np.sqrt(2.0 * np.pi)

    def integrand(t):
        return inv_sqrt2pi * np.exp(-0.5 * t * t) * gammainc(k, 0.5 * (R * R - t * t))

    value, abserr = integrate.quad(integrand, offset, R, epsabs=0.0, epsrel=1e-11, limit=200)
    if value > 0 and abserr > 1e-8 * value:
        raise QuadratureFailure(f"cap mass quadrature error {abserr:.2e} vs value {value:.2e}")
    return float(value)
