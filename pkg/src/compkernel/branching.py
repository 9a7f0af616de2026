"""Galton-Watson simulation and exact generation-size laws.

``Z_L``, the size of generation ``L`` of a branching process with offspring
law ``g``, has generating function ``G`` composed ``L`` times. This module
samples trajectories, computes the law of ``Z_L`` exactly by truncated
power-series composition, and estimates the Kesten-Stigum limit
``W = lim Z_L / mu^L``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import rng
from .duality import Pgf, mean_and_mustar, point_mass

DEFAULT_CAP = 10**7
DEFAULT_DEGREE_CAP = 512
TRAJECTORY_CHUNK = 1 << 13
NOT_SIMULATED = -1


@dataclass(frozen=True)
class GwTrajectory:
    generation_sizes: tuple[int, ...]
    extinct: bool
    truncated: bool = False


@dataclass(frozen=True, eq=False)
class GwEnsemble:
    """Generation sizes of many independent trajectories.

    ``sizes[i, l]`` is ``Z_l`` for trajectory ``i``. A trajectory whose
    population passes ``cap`` is marked truncated and its later generations
    hold ``NOT_SIMULATED``.
    """

    sizes: np.ndarray
    truncated: np.ndarray
    cap: int

    def __len__(self) -> int:
        return self.sizes.shape[0]

    def __getitem__(self, i: int) -> GwTrajectory:
        row = self.sizes[i]
        return GwTrajectory(tuple(int(z) for z in row), bool(row[-1] == 0), bool(self.truncated[i]))

    def __iter__(self) -> Iterator[GwTrajectory]:
        for i in range(len(self)):
            yield self[i]

    @property
    def depth(self) -> int:
        return self.sizes.shape[1] - 1

    @property
    def extinct(self) -> np.ndarray:
        return self.sizes[:, -1] == 0

    def extinct_fraction(self, generation: int | None = None) -> float:
        """Fraction of trajectories with ``Z_generation == 0``."""
        col = self.depth if generation is None else generation
        return float(np.mean(self.sizes[:, col] == 0))

    def survival_fraction(self) -> float:
        """Survivors at the final generation; truncated trajectories count as alive."""
        return 1.0 - self.extinct_fraction()

    def summary(self) -> dict:
        return {
            "trials": len(self),
            "depth": self.depth,
            "cap": self.cap,
            "truncated": int(self.truncated.sum()),
            "extinct_by_generation": [self.extinct_fraction(l) for l in range(self.depth + 1)],
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)


def _offspring_table(g: Pgf) -> tuple[np.ndarray, np.ndarray]:
    # The tail is treated as an extra category at degree D + 1, matching pgf_eval.
    probs = np.append(g.coefficients, g.tail_mass)
    values = np.arange(probs.size, dtype=np.int64)
    keep = probs > 0
    return probs[keep] / probs[keep].sum(), values[keep]


def simulate_generation_sizes(
    g: Pgf,
    depth: int,
    trials: int,
    seed: int = rng.DEFAULT_SEED,
    cap: int = DEFAULT_CAP,
) -> GwEnsemble:
    """Sample ``trials`` independent trajectories ``Z_0 .. Z_depth``.

    Each generation draws the offspring counts of all ``Z`` parents at once
    from a multinomial over offspring values, which is exactly the law of a
    sum of ``Z`` i.i.d. draws. Trajectories are processed in fixed chunks,
    each with its own random substream.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    probs, values = _offspring_table(g)
    sizes = np.zeros((trials, depth + 1), dtype=np.int64)
    sizes[:, 0] = 1
    truncated = np.zeros(trials, dtype=bool)
    start = 0
    for index, size in rng.chunks(trials, TRAJECTORY_CHUNK):
        gen = rng.generator(seed, index)
        block = sizes[start : start + size]
        trunc = truncated[start : start + size]
        z = np.ones(size, dtype=np.int64)
        for level in range(1, depth + 1):
            alive = (z > 0) & ~trunc
            nxt = np.zeros(size, dtype=np.int64)
            if alive.any():
                if probs.size == 1:
                    nxt[alive] = z[alive] * values[0]
                else:
                    counts = gen.multinomial(z[alive], probs)
                    nxt[alive] = counts @ values
            nxt[trunc] = NOT_SIMULATED
            over = nxt > cap
            trunc |= over
            block[:, level] = nxt
            z = np.where(trunc, 0, nxt)
        start += size
    return GwEnsemble(sizes, truncated, cap)


def exact_generation_distribution(g: Pgf, depth: int, degree_cap: int = DEFAULT_DEGREE_CAP) -> Pgf:
    """Law of ``Z_depth`` as the coefficients of ``G`` composed ``depth`` times.

    Each composition ``G(H)`` runs Horner's scheme over the coefficients of
    ``G`` with power series in place of numbers, truncating every product
    at ``degree_cap``. Probability pushed past the cap becomes tail mass.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if degree_cap < 1:
        raise ValueError("degree_cap must be >= 1")
    if depth == 0:
        return point_mass(1)
    base = np.append(g.coefficients, g.tail_mass) if g.tail_mass else np.asarray(g.coefficients)
    series = np.array([0.0, 1.0])
    for _ in range(depth):
        out = np.array([base[-1]])
        for coeff in base[-2::-1]:
            out = np.convolve(out, series)[: degree_cap + 1]
            out[0] += coeff
        series = out
    series = np.clip(series, 0.0, None)
    tail = max(0.0, 1.0 - series.sum())
    if series.sum() > 1.0:
        series = series / series.sum()
    return Pgf(series, tail, family="generation", params={"depth": depth, "base": g.family})


@dataclass(frozen=True, eq=False)
class WEstimate:
    """Monte-Carlo summary of ``W_L = Z_L / mu^L``.

    ``samples`` holds ``W_L`` for surviving, non-truncated trajectories, so
    every entry is positive. ``mean`` and ``variance`` are unconditional:
    an extinct trajectory contributes ``W = 0``. That is the normalization
    under which ``E[W] = 1`` and ``Var W = Var Y / (mu (mu - 1))``.
    """

    samples: np.ndarray
    depth: int
    growth: float
    trials_used: int
    truncated: int
    mean: float
    mean_stderr: float
    variance: float
    variance_stderr: float
    survival_fraction: float
    t_grid: np.ndarray
    laplace_values: np.ndarray
    laplace_stderr: np.ndarray

    @property
    def conditional_mean(self) -> float:
        return float(self.samples.mean()) if self.samples.size else math.nan

    @property
    def conditional_mean_stderr(self) -> float:
        n = self.samples.size
        return float(self.samples.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan

    @property
    def conditional_variance(self) -> float:
        return float(self.samples.var(ddof=1)) if self.samples.size > 1 else math.nan

    def laplace_transform(self, t) -> np.ndarray:
        """``E[exp(-t W) | survival]`` estimated from the samples."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.exp(-np.outer(t, self.samples)).mean(axis=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "laplace_estimate", "stderr"])
        for t, v, e in zip(self.t_grid, self.laplace_values, self.laplace_stderr):
            writer.writerow([repr(float(t)), repr(float(v)), repr(float(e))])
        return buf.getvalue()


def offspring_variance(g: Pgf) -> float:
    k = np.arange(g.degree_cap + 1, dtype=float)
    mu = float(k @ g.coefficients)
    return float((k**2) @ g.coefficients - mu**2)


def kesten_stigum_variance(g: Pgf) -> float:
    """Limit variance ``Var Y / (mu (mu - 1))`` of the unconditional ``W``."""
    mu = mean_and_mustar(g).mean
    if mu <= 1:
        raise ValueError("no Kesten-Stigum limit when mu <= 1")
    return offspring_variance(g) / (mu * (mu - 1.0))


def kesten_stigum_estimate(
    g: Pgf,
    depth: int,
    trials: int = 10**5,
    seed: int = rng.DEFAULT_SEED,
    t_grid: Sequence[float] | None = None,
    cap: int = DEFAULT_CAP,
) -> WEstimate:
    """Estimate moments and the Laplace transform of ``Z_depth / mu^depth``."""
    mu = mean_and_mustar(g).mean
    if mu <= 1.0:
        raise ValueError(f"Kesten-Stigum limit needs mu > 1, got mu = {mu!r}")
    ens = simulate_generation_sizes(g, depth, trials, seed, cap)
    keep = ~ens.truncated
    w_all = ens.sizes[keep, -1].astype(float) / mu**depth
    n = w_all.size
    if n < 2:
        raise ValueError("too few non-truncated trajectories for moment estimates")
    mean = float(w_all.mean())
    centered = w_all - mean
    variance = float(centered @ centered / (n - 1))
    fourth = float(np.mean(centered**4))
    variance_se = math.sqrt(max(fourth - variance**2, 0.0) / n)
    samples = w_all[w_all > 0]
    grid = np.linspace(0.0, 5.0, 21) if t_grid is None else np.asarray(t_grid, dtype=float)
    if samples.size:
        expo = np.exp(-np.outer(grid, samples))
        lap = expo.mean(axis=1)
        lap_se = expo.std(axis=1, ddof=1) / math.sqrt(samples.size) if samples.size > 1 else np.full(grid.size, np.nan)
    else:
        lap = np.full(grid.size, np.nan)
        lap_se = np.full(grid.size, np.nan)
    return WEstimate(
        samples=samples,
        depth=depth,
        growth=mu,
        trials_used=n,
        truncated=int(ens.truncated.sum()),
        mean=mean,
        mean_stderr=float(w_all.std(ddof=1) / math.sqrt(n)),
        variance=variance,
        variance_stderr=variance_se,
        survival_fraction=ens.survival_fraction(),
        t_grid=grid,
        laplace_values=lap,
        laplace_stderr=lap_se,
    )
