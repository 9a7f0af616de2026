"""Point sets on the unit sphere and their correlation structure."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterator

import numpy as np

from . import fileio, rng

UNIT_TOLERANCE = 1e-8
BLOCK_ROWS = 1024


@dataclass(frozen=True, eq=False)
class SphereDataset:
    """``n`` unit vectors in dimension ``d``.

    ``correlations`` is the full Gram matrix, computed once on first use.
    ``rho_max`` is the largest off-diagonal ``|<x_i, x_j>|`` and is found
    blockwise, so it works for ``n`` too large to hold the Gram matrix.
    """

    points: np.ndarray
    source: str = "array"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[None, :]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("points must be an n x d array with n >= 1")
        norms = np.linalg.norm(pts, axis=1)
        bad = np.abs(norms - 1.0) > UNIT_TOLERANCE
        if np.any(bad):
            i = int(np.argmax(bad))
            raise ValueError(f"row {i} has norm {norms[i]!r}, expected 1")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @cached_property
    def correlations(self) -> np.ndarray:
        gram = self.points @ self.points.T
        np.fill_diagonal(gram, 1.0)
        return np.clip(gram, -1.0, 1.0)

    def off_diagonal_blocks(self) -> Iterator[np.ndarray]:
        """Yield the strict upper-triangular correlations in row blocks."""
        pts = self.points
        for start in range(0, self.n, BLOCK_ROWS):
            stop = min(start + BLOCK_ROWS, self.n)
            block = np.clip(pts[start:stop] @ pts[start:].T, -1.0, 1.0)
            rows, cols = np.triu_indices(stop - start, 1, m=self.n - start)
            yield block[rows, cols]

    @cached_property
    def rho_max(self) -> float:
        if self.n < 2:
            return 0.0
        return float(max(np.max(np.abs(b)) for b in self.off_diagonal_blocks() if b.size))

    def save(self, path: str | Path) -> None:
        fileio.write_matrix(path, self.points)

    @classmethod
    def load(cls, path: str | Path) -> "SphereDataset":
        return cls(fileio.read_matrix(path), source=str(path))


def sample_uniform_sphere(n: int, d: int, seed: int = rng.DEFAULT_SEED) -> SphereDataset:
    """``n`` i.i.d. uniform points ``g / |g|`` with ``g`` standard Gaussian in ``R^d``."""
    if n < 1 or d < 2:
        raise ValueError("need n >= 1 and d >= 2")
    g = rng.generator(seed).standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return SphereDataset(g, source=f"uniform(n={n},d={d},seed={seed})", metadata={"seed": seed})


def sample_correlation_equivalent(n: int, d: int, seed: int = rng.DEFAULT_SEED) -> SphereDataset:
    """Points whose correlation matrix has the law of ``n`` uniform points in ``R^d``.

    The Gram matrix of ``n`` standard Gaussian vectors in ``R^d`` is Wishart
    with ``d`` degrees of freedom. Its Bartlett factor is a lower-triangular
    ``n x n`` matrix with chi-distributed diagonal (``d - i`` degrees of
    freedom in row ``i``) and standard normal entries below it. Normalizing
    the rows of that factor gives ``n`` points in ``R^n`` with exactly the
    same joint correlations, at ``O(n^2)`` sampling cost instead of
    ``O(n d)``. Requires ``d >= n``.
    """
    if d < n:
        raise ValueError("the Bartlett construction needs d >= n")
    gen = rng.generator(seed)
    a = np.tril(gen.standard_normal((n, n)), -1)
    a[np.diag_indices(n)] = np.sqrt(gen.chisquare(d - np.arange(n)))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    return SphereDataset(
        a,
        source=f"wishart(n={n},d={d},seed={seed})",
        metadata={"seed": seed, "ambient_dimension": d},
    )


def orthonormal_dataset(n: int, d: int) -> SphereDataset:
    if n > d:
        raise ValueError("cannot fit more than d orthonormal vectors in R^d")
    return SphereDataset(np.eye(n, d), source=f"orthonormal(n={n},d={d})")


def concentration_band(n: int, d: int) -> tuple[float, float]:
    """``(0.5, 3) * sqrt(log n / d)``: the small-correlation band for ``rho_max``."""
    scale = math.sqrt(math.log(n) / d)
    return 0.5 * scale, 3.0 * scale


def polarized_threshold(r: float) -> float:
    """Points are ``r``-polarized iff ``|<x, y>| < 1 - r^2 / 2``."""
    return 1.0 - 0.5 * r * r


def greedy_polarized_packing(
    d: int,
    r: float,
    seed: int = rng.DEFAULT_SEED,
    max_rejections: int = 10**5,
    max_points: int | None = None,
) -> SphereDataset:
    """Greedy random ``r``-polarized packing of the sphere in ``R^d``.

    Uniform candidates are accepted when ``|x - x_i| > r`` and
    ``|x + x_i| > r`` for every accepted ``x_i``. The search stops after
    ``max_rejections`` consecutive rejections, so the result is maximal with
    high probability but carries no guarantee.
    """
    if d < 2:
        raise ValueError("need d >= 2")
    if not 0 < r <= 2:
        raise ValueError("radius must lie in (0, 2]")
    threshold = polarized_threshold(r)
    gen = rng.generator(seed)
    capacity = 64
    accepted = np.empty((capacity, d))
    count = 0
    streak = 0
    draws = 0
    while streak < max_rejections and (max_points is None or count < max_points):
        batch = gen.standard_normal((4096, d))
        batch /= np.linalg.norm(batch, axis=1, keepdims=True)
        for x in batch:
            draws += 1
            if count and np.max(np.abs(accepted[:count] @ x)) >= threshold:
                streak += 1
                if streak >= max_rejections:
                    break
                continue
            if count == capacity:
                capacity *= 2
                grown = np.empty((capacity, d))
                grown[:count] = accepted[:count]
                accepted = grown
            accepted[count] = x
            count += 1
            streak = 0
            if max_points is not None and count >= max_points:
                break
    return SphereDataset(
        accepted[:count].copy(),
        source=f"packing(d={d},r={r},seed={seed})",
        metadata={
            "radius": r,
            "seed": seed,
            "max_rejections": max_rejections,
            "final_rejection_streak": streak,
            "candidates_drawn": draws,
        },
    )


def packing_band(n: int, d: int) -> tuple[float, float]:
    """Band ``(1 - 18.2 e^{-2 log n / d}, 1 - 0.06 e^{-2 log n / (d-1)})`` for the max correlation of a maximal packing."""
    lower = 1.0 - 18.2 * math.exp(-2.0 * math.log(n) / d)
    upper = 1.0 - 0.06 * math.exp(-2.0 * math.log(n) / (d - 1))
    return lower, upper


def packing_cardinality_band(d: int, r: float) -> tuple[float, float]:
    """``((1/(3r))^(d-1), (3/r)^d)``: bounds on the polarized packing number."""
    return (1.0 / (3.0 * r)) ** (d - 1), (3.0 / r) ** d


@dataclass(frozen=True)
class CorrelationStats:
    n: int
    d: int
    rho_max: float
    mean: float
    sd: float
    histogram_counts: tuple[int, ...]
    histogram_edges: tuple[float, ...]
    packing_check: dict | None = None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "rho_max": self.rho_max,
            "mean": self.mean,
            "sd": self.sd,
            "histogram_counts": list(self.histogram_counts),
            "histogram_edges": list(self.histogram_edges),
            "packing_check": self.packing_check,
        }


def correlation_stats(ds: SphereDataset, bins: int = 20) -> CorrelationStats:
    """Summary of off-diagonal correlations, plus the band check for packings."""
    edges = np.linspace(-1.0, 1.0, bins + 1)
    counts = np.zeros(bins, dtype=np.int64)
    total = 0
    s1 = 0.0
    s2 = 0.0
    for block in ds.off_diagonal_blocks():
        if block.size == 0:
            continue
        counts += np.histogram(block, bins=edges)[0]
        total += block.size
        s1 += float(block.sum())
        s2 += float(block @ block)
    mean = s1 / total if total else math.nan
    sd = math.sqrt(max(s2 / total - mean * mean, 0.0)) if total else math.nan
    check = None
    if ds.source.startswith("packing") and ds.n >= 2:
        lower, upper = packing_band(ds.n, ds.d)
        check = {
            "lower": lower,
            "upper": upper,
            "max_abs_correlation": ds.rho_max,
            "within_band": bool(lower < ds.rho_max < upper),
            "conditional_on_maximality": True,
            "final_rejection_streak": ds.metadata.get("final_rejection_streak"),
        }
    return CorrelationStats(
        ds.n,
        ds.d,
        ds.rho_max,
        mean,
        sd,
        tuple(int(c) for c in counts),
        tuple(float(e) for e in edges),
        check,
    )
