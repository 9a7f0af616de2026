"""Compositional kernels ``K^(L) = G o ... o G`` and their depth limits."""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import branching, duality, rng
from .duality import Pgf
from .hermite import ActivationSpec

SNAP_TOLERANCE = 1e-12
UNIT_NORM_TOLERANCE = 1e-8

NO_EXTENSION = "none"


def _as_pgf(base) -> Pgf:
    if isinstance(base, Pgf):
        return base
    if isinstance(base, ActivationSpec):
        return duality.pgf_from_activation(base)
    raise TypeError(f"expected a Pgf or ActivationSpec, got {type(base).__name__}")


def snap(rho):
    """Clip to ``[-1, 1]`` and snap values within ``1e-12`` of ``+-1``."""
    r = np.clip(np.asarray(rho, dtype=float), -1.0, 1.0)
    r = np.where(np.abs(r - 1.0) <= SNAP_TOLERANCE, 1.0, r)
    r = np.where(np.abs(r + 1.0) <= SNAP_TOLERANCE, -1.0, r)
    return r


@dataclass(frozen=True, eq=False)
class CompositionalKernel:
    """The kernel of a depth-``depth`` network whose activation has dual ``base``."""

    base: Pgf
    depth: int

    def __post_init__(self):
        object.__setattr__(self, "base", _as_pgf(self.base))
        if self.depth < 0:
            raise ValueError("depth must be >= 0")

    def __call__(self, rho):
        return kernel_eval(self, rho)


def kernel_eval(k: CompositionalKernel, rho):
    """Apply ``G`` to ``rho`` ``k.depth`` times."""
    r = np.asarray(rho, dtype=float)
    if np.any(np.abs(r) > 1.0 + SNAP_TOLERANCE):
        raise ValueError("correlations must lie in [-1, 1]")
    value = snap(r)
    for _ in range(k.depth):
        value = duality.pgf_eval(k.base, value)
    return float(value) if np.ndim(value) == 0 else np.asarray(value)


def kernel_complement(k: CompositionalKernel, u):
    """``1 - K(1 - u)`` for ``u`` in ``[0, 1]`` without cancellation."""
    value = np.asarray(u, dtype=float)
    for _ in range(k.depth):
        value = duality.pgf_complement(k.base, value)
    return float(value) if np.ndim(value) == 0 else value


class McEstimate(tuple):
    """``(value, stderr)`` pair returned by Monte-Carlo oracles."""

    def __new__(cls, value: float, stderr: float):
        return super().__new__(cls, (float(value), float(stderr)))

    @property
    def value(self) -> float:
        return self[0]

    @property
    def stderr(self) -> float:
        return self[1]


def kernel_eval_via_branching(
    k: CompositionalKernel, rho: float, trials: int = 10**5, seed: int = rng.DEFAULT_SEED
) -> McEstimate:
    """Estimate ``K(rho) = E[rho^Z_L]`` by simulating the branching process."""
    if abs(rho) > 1.0:
        raise ValueError("rho must lie in [-1, 1]")
    ens = branching.simulate_generation_sizes(k.base, k.depth, trials, seed)
    z = ens.sizes[:, -1]
    # A trajectory stopped at the population cap has Z_L > 10^7, where rho^Z
    # underflows to 0 unless rho == 1.
    beyond = 1.0 if rho == 1.0 else 0.0
    values = np.where(ens.truncated, beyond, float(rho) ** np.maximum(z, 0).astype(float))
    se = values.std(ddof=1) / math.sqrt(values.size) if values.size > 1 else 0.0
    return McEstimate(values.mean(), se)


def extension_condition(g: Pgf) -> str:
    """Which sufficient condition lets the unscaled limit extend to negative rho.

    Returns ``"centered"`` when ``p_0 = 0``, ``"even"`` when all mass sits on
    even degrees, ``"symmetric"`` when ``|G(s)| = G(|s|)`` on a grid, and
    ``"none"`` otherwise.
    """
    p = g.coefficients
    if g.prob(0) == 0.0:
        return "centered"
    if not np.any(p[1::2]) and g.tail_mass == 0:
        return "even"
    if duality.check_pgf_symmetry(g).holds:
        return "symmetric"
    return NO_EXTENSION


def predicted_unscaled_limit(g: Pgf, rho):
    """Pointwise depth limit of ``K^(L)(rho)`` on ``[0, 1]``.

    The limit is 1 when ``mu <= 1``; otherwise it is ``xi`` on ``[0, 1)`` and
    1 at ``rho = 1``. Negative ``rho`` use the same value when
    :func:`extension_condition` finds a sufficient condition, and ``nan``
    otherwise.
    """
    r = snap(rho)
    if g.prob(1) == 1.0:
        return r.copy() if np.ndim(r) else float(r)
    mu = duality.mean_and_mustar(g).mean
    if mu <= 1.0:
        out = np.ones_like(r)
    else:
        xi = duality.extinction_probability(g)
        out = np.where(r == 1.0, 1.0, xi)
    neg = r < 0
    if np.any(neg) and extension_condition(g) == NO_EXTENSION:
        out = np.where(neg, np.nan, out)
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class CurveTable:
    """Rows of ``(L, x, value, prediction)`` for plotting depth limits."""

    x_name: str
    records: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    def add(self, depth, x, value, prediction):
        self.records.append((depth, float(x), float(value), float(prediction)))

    def values_at(self, depth) -> np.ndarray:
        return np.array([r[2] for r in self.records if r[0] == depth])

    def grid(self) -> np.ndarray:
        first = self.records[0][0]
        return np.array([r[1] for r in self.records if r[0] == first])

    def to_csv(self, extra: dict | None = None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        extra = extra or {}
        writer.writerow(["L", self.x_name, "value", "prediction", *extra])
        for depth, x, value, pred in self.records:
            writer.writerow([depth, repr(x), repr(value), repr(pred), *extra.values()])
        return buf.getvalue()


def unscaled_limit_curve(base, depths: Sequence[int], grid: Sequence[float]) -> CurveTable:
    """``K^(L)(rho)`` for each depth and grid point, with the predicted limit.

    The limit itself is appended as the rows with ``L = "inf"``.
    """
    g = _as_pgf(base)
    grid = np.asarray(grid, dtype=float)
    if np.any(np.abs(grid) > 1.0):
        raise ValueError("rho grid must lie in [-1, 1]")
    prediction = np.atleast_1d(predicted_unscaled_limit(g, grid))
    table = CurveTable("rho", notes={"extension_condition": extension_condition(g)})
    for depth in depths:
        values = np.atleast_1d(kernel_eval(CompositionalKernel(g, int(depth)), grid))
        for x, v, p in zip(grid, values, prediction):
            table.add(int(depth), x, v, p)
    for x, p in zip(grid, prediction):
        table.add("inf", x, p, p)
    return table


def rescaled_kernel_values(g: Pgf, depth: int, t) -> np.ndarray:
    """``K^(L)(exp(-t / mu^L))`` when ``mu > 1``, else ``K^(L)(exp(-t))``.

    Computed in complement form so that tiny ``t / mu^L`` keeps precision.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    mu = duality.mean_and_mustar(g).mean
    scale = mu**depth if mu > 1.0 else 1.0
    u0 = -np.expm1(-t / scale)
    return 1.0 - np.atleast_1d(kernel_complement(CompositionalKernel(g, depth), u0))


def rescaled_limit_curve(
    base,
    t_grid: Sequence[float],
    depths: Sequence[int],
    trials: int = 10**5,
    seed: int = rng.DEFAULT_SEED,
    simulation_depth: int | None = None,
) -> CurveTable:
    """Rescaled curves ``K^(L)(exp(-t / mu^L))`` with the branching prediction.

    For ``mu > 1`` the prediction is ``xi + (1 - xi) E[exp(-t W)]`` with the
    Laplace transform estimated from simulated ``Z_L / mu^L`` at
    ``simulation_depth`` (default: the largest requested depth, at most 16).
    For ``mu <= 1`` the curves use ``exp(-t)`` as the argument and tend to 1,
    since the process dies out; the identity law keeps ``exp(-t)``.
    """
    g = _as_pgf(base)
    t = np.asarray(t_grid, dtype=float)
    mu = duality.mean_and_mustar(g).mean
    table = CurveTable("t", notes={"mu": mu})
    prediction = np.ones(t.size)
    if g.prob(1) == 1.0:
        prediction = np.exp(-t)
    elif mu > 1.0:
        xi = duality.extinction_probability(g)
        sim_depth = simulation_depth if simulation_depth is not None else min(max(depths), 16)
        est = branching.kesten_stigum_estimate(g, sim_depth, trials, seed, t_grid=t)
        prediction = xi + (1.0 - xi) * est.laplace_values
        table.notes.update(xi=xi, simulation_depth=sim_depth)
    for depth in depths:
        values = rescaled_kernel_values(g, int(depth), t)
        for x, v, p in zip(t, values, prediction):
            table.add(int(depth), x, v, p)
    return table


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Dense symmetric kernel matrix with a cached spectrum."""

    entries: np.ndarray
    source: str = "array"
    depth: int = 0

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        for row in self.entries:
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def to_bytes(self) -> bytes:
        return struct.pack("<q", self.n) + np.ascontiguousarray(self.entries, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, source: str = "binary", depth: int = 0) -> "KernelMatrix":
        (n,) = struct.unpack("<q", data[:8])
        entries = np.frombuffer(data[8:], dtype="<f8").reshape(n, n).astype(float)
        return cls(entries, source, depth)


def build_kernel_matrix(base, dataset, depth: int) -> KernelMatrix:
    """Entrywise kernel ``K^(L)(<x_i, x_j>)`` on a unit-norm dataset."""
    g = _as_pgf(base)
    points = np.asarray(dataset.points, dtype=float)
    norms = np.linalg.norm(points, axis=1)
    if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOLERANCE):
        raise ValueError("dataset rows must have unit norm")
    rho = dataset.correlations
    iu = np.triu_indices(rho.shape[0], 1)
    kern = CompositionalKernel(g, depth)
    entries = np.empty_like(rho)
    upper = np.atleast_1d(kernel_eval(kern, rho[iu]))
    entries[iu] = upper
    entries.T[iu] = upper
    np.fill_diagonal(entries, kernel_eval(kern, 1.0))
    return KernelMatrix(entries, getattr(dataset, "source", "dataset"), depth)
