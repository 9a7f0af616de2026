"""Legendre polynomials on the sphere, kernel eigenvalues and dual activations.

``P_{k,d}`` is the degree-``k`` Gegenbauer polynomial normalized to
``P_{k,d}(1) = 1``; it is orthogonal under ``(1 - t^2)^((d-3)/2)`` on
``[-1, 1]``. The eigenvalue of a rotation-invariant kernel on the sphere
``S^{d-1}`` belonging to degree-``k`` harmonics has multiplicity ``N_{k,d}``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .duality import Pgf
from .errors import NotPositiveDefiniteError

DEFAULT_NODES = 256
MAX_NODES = 8192
PD_TOLERANCE = 1e-8


def _check_dimension(d: int) -> None:
    if d < 2:
        raise ValueError(f"dimension must be >= 2, got {d}")


def legendre_table(d: int, max_degree: int, t) -> np.ndarray:
    """``P_{0,d} .. P_{max_degree,d}`` at ``t``, stacked along axis 0.

    Uses ``(k + d - 2) P_{k+1} = (2k + d - 2) t P_k - k P_{k-1}`` with
    ``P_0 = 1`` and ``P_1 = t``.
    """
    _check_dimension(d)
    t = np.asarray(t, dtype=float)
    out = np.empty((max_degree + 1,) + t.shape)
    out[0] = 1.0
    if max_degree >= 1:
        out[1] = t
    for k in range(1, max_degree):
        out[k + 1] = ((2 * k + d - 2) * t * out[k] - k * out[k - 1]) / (k + d - 2)
    return out


def legendre_eval(d: int, k: int, t):
    if k < 0:
        raise ValueError("degree must be >= 0")
    value = legendre_table(d, k, t)[k]
    return float(value) if value.ndim == 0 else value


def legendre_series(d: int, weights: Sequence[float], t) -> np.ndarray:
    """``sum_k weights[k] P_{k,d}(t)`` without storing the whole table."""
    _check_dimension(d)
    w = np.asarray(weights, dtype=float)
    t = np.asarray(t, dtype=float)
    prev = np.ones_like(t)
    total = w[0] * prev
    if w.size == 1:
        return total
    cur = t.copy()
    total = total + w[1] * cur
    for k in range(1, w.size - 1):
        prev, cur = cur, ((2 * k + d - 2) * t * cur - k * prev) / (k + d - 2)
        if w[k + 1]:
            total = total + w[k + 1] * cur
    return total


@dataclass(frozen=True)
class LegendreBasis:
    d: int
    max_degree: int

    def __post_init__(self):
        _check_dimension(self.d)

    def __call__(self, t) -> np.ndarray:
        return legendre_table(self.d, self.max_degree, t)


def harmonic_dimension(d: int, k: int) -> int:
    """Dimension ``N_{k,d}`` of degree-``k`` spherical harmonics on ``S^{d-1}``.

    The coefficient of ``s^k`` in ``(1 + s) / (1 - s)^(d-1)``, computed with
    exact integers.
    """
    _check_dimension(d)
    if k < 0:
        raise ValueError("degree must be >= 0")
    if k == 0:
        return 1
    return math.comb(k + d - 2, d - 2) + math.comb(k + d - 3, d - 2)


def log_area_ratio(d: int) -> float:
    """``log(|S^{d-2}| / |S^{d-1}|) = log Gamma(d/2) - log sqrt(pi) - log Gamma((d-1)/2)``."""
    _check_dimension(d)
    return special.gammaln(d / 2) - 0.5 * math.log(math.pi) - special.gammaln((d - 1) / 2)


def area_ratio(d: int) -> float:
    return math.exp(log_area_ratio(d))


@lru_cache(maxsize=64)
def gauss_jacobi(d: int, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for ``int f(t) (1 - t^2)^((d-3)/2) dt``."""
    a = (d - 3) / 2.0
    x, w = special.roots_jacobi(nodes, a, a)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def spherical_integral(f: Callable, d: int, nodes: int = DEFAULT_NODES) -> float:
    """``(|S^{d-2}|/|S^{d-1}|) int f(t) (1 - t^2)^((d-3)/2) dt``: the mean of ``f(<u, e>)`` over the sphere."""
    x, w = gauss_jacobi(d, nodes)
    return float(area_ratio(d) * (w @ np.asarray(f(x), dtype=float)))


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    d: int
    eigenvalues: np.ndarray
    multiplicities: tuple[int, ...]
    trace_check: float
    tail_residual: float = 0.0

    def to_csv(self, extra: dict | None = None) -> str:
        extra = extra or {}
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["k", "lambda_k", "N_k_d", "lambda_times_mult", *extra])
        for k, (lam, mult) in enumerate(zip(self.eigenvalues, self.multiplicities)):
            writer.writerow([k, repr(float(lam)), mult, repr(float(lam * mult)), *extra.values()])
        return buf.getvalue()


def eigenvalues(max_degree: int, d: int, gen_dist: Pgf) -> SpectrumReport:
    """Eigenvalues ``lambda_0 .. lambda_max_degree`` of ``rho -> E[rho^Z]`` on ``S^{d-1}``.

    ``gen_dist`` is the law of ``Z`` (for a compositional kernel, the law of
    ``Z_L`` from :func:`branching.exact_generation_distribution`). Each
    ``lambda_k`` sums ``P(Z = k + l)`` over even ``l`` against a Gamma-ratio
    weight, evaluated in log space. Tail mass is placed at degree ``D + 1``.
    """
    _check_dimension(d)
    probs = np.append(gen_dist.coefficients, gen_dist.tail_mass)
    top = probs.size - 1
    log_pref = special.gammaln(d / 2) - 0.5 * math.log(math.pi)
    lam = np.zeros(max_degree + 1)
    for k in range(min(max_degree, top) + 1):
        ell = np.arange(0, top - k + 1, 2)
        p = probs[k + ell]
        keep = p > 0
        if not keep.any():
            continue
        ell = ell[keep].astype(float)
        log_terms = (
            np.log(p[keep])
            + special.gammaln(k + ell + 1)
            - special.gammaln(ell + 1)
            + math.log(2.0)
            - (k + 1) * math.log(2.0)
            + special.gammaln((ell + 1) / 2)
            - special.gammaln(k + (ell + d) / 2)
        )
        lam[k] = np.exp(log_pref + log_terms).sum()
    mults = tuple(harmonic_dimension(d, k) for k in range(max_degree + 1))
    trace = float(sum(float(m) * l for m, l in zip(mults, lam)))
    beyond = float(probs[max_degree + 1 :].sum()) if max_degree < top else 0.0
    return SpectrumReport(d, lam, mults, trace, beyond)


def eigenvalues_by_quadrature(f: Callable, max_degree: int, d: int, nodes: int = DEFAULT_NODES) -> np.ndarray:
    """``lambda_k = (|S^{d-2}|/|S^{d-1}|) int f(t) P_{k,d}(t) (1 - t^2)^((d-3)/2) dt``."""
    x, w = gauss_jacobi(d, nodes)
    table = legendre_table(d, max_degree, x)
    return area_ratio(d) * (table * w) @ np.asarray(f(x), dtype=float)


@dataclass(frozen=True, eq=False)
class LegendreExpansion:
    """``f(t) = sum_k alpha_k P_{k,d}(t)``."""

    coefficients: np.ndarray
    d: int
    nodes: int = DEFAULT_NODES

    @property
    def max_degree(self) -> int:
        return len(self.coefficients) - 1

    def is_positive_definite(self, tol: float = PD_TOLERANCE) -> bool:
        return bool(np.all(np.asarray(self.coefficients) >= -tol))

    def __call__(self, t):
        return legendre_series(self.d, self.coefficients, t)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "coefficients": [float(c) for c in self.coefficients],
            "nodes": self.nodes,
            "positive_definite": self.is_positive_definite(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "LegendreExpansion":
        return cls(np.asarray(data["coefficients"], dtype=float), int(data["d"]), int(data.get("nodes", DEFAULT_NODES)))


def legendre_expand(
    f: Callable,
    d: int,
    max_degree: int,
    nodes: int = DEFAULT_NODES,
    adaptive: bool = True,
    tol: float = 1e-10,
) -> LegendreExpansion:
    """Legendre coefficients ``alpha_k = N_{k,d} lambda_k`` by Gauss-Jacobi quadrature.

    With ``adaptive`` the node count doubles until the coefficients move by
    less than ``tol``.
    """
    _check_dimension(d)
    mults = np.array([float(harmonic_dimension(d, k)) for k in range(max_degree + 1)])
    coeffs = mults * eigenvalues_by_quadrature(f, max_degree, d, nodes)
    while adaptive and nodes < MAX_NODES:
        finer = mults * eigenvalues_by_quadrature(f, max_degree, d, 2 * nodes)
        nodes *= 2
        change = np.max(np.abs(finer - coeffs))
        coeffs = finer
        if change < tol:
            break
    return LegendreExpansion(coeffs, d, nodes)


@dataclass(frozen=True, eq=False)
class DualActivation:
    """``sigma_f(t) = sum_k sqrt(alpha_k N_{k,d}) P_{k,d}(t)`` on ``[-1, 1]``."""

    weights: np.ndarray
    d: int
    norm_check: float
    expansion: LegendreExpansion = field(repr=False)

    def __call__(self, t):
        return legendre_series(self.d, self.weights, t)


def activation_from_kernel(
    expansion: LegendreExpansion, tol: float = PD_TOLERANCE, nodes: int = DEFAULT_NODES
) -> DualActivation:
    """Activation whose sphere-direction random features reproduce ``f``.

    Coefficients above ``-tol`` are clamped to zero; more negative ones mean
    ``f`` is not positive definite. The expansion is rescaled so ``f(1) = 1``.
    ``norm_check`` is the sphere average of ``sigma_f^2``, which should be 1.
    """
    alpha = np.asarray(expansion.coefficients, dtype=float)
    worst = int(np.argmin(alpha))
    if alpha[worst] < -tol:
        raise NotPositiveDefiniteError(
            f"alpha_{worst} = {alpha[worst]!r} < 0: the kernel is not positive definite on the sphere"
        )
    alpha = np.clip(alpha, 0.0, None)
    total = alpha.sum()
    if total <= 0:
        raise NotPositiveDefiniteError("all Legendre coefficients vanish")
    alpha = alpha / total
    d = expansion.d
    mults = np.array([float(harmonic_dimension(d, k)) for k in range(alpha.size)])
    weights = np.sqrt(alpha * mults)
    max_deg = alpha.size - 1
    norm = spherical_integral(lambda t: legendre_series(d, weights, t) ** 2, d, max(nodes, max_deg + 2))
    normalized = LegendreExpansion(alpha, d, expansion.nodes)
    return DualActivation(weights, d, norm, normalized)
