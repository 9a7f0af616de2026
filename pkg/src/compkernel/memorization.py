"""Depth needed for epsilon-closeness and kappa-memorization.

``path_depth_exact(g, beta, alpha)`` counts how many applications of ``G``
bring ``beta`` down to ``alpha``. A kernel matrix is epsilon-close when every
off-diagonal entry has magnitude at most ``epsilon``, and kappa-memorizing
when its spectrum lies in ``[1 - kappa, 1 + kappa]``. Exact depths are
authoritative; the closed-form bounds are reported next to them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import duality, kernel
from .duality import Pgf
from .errors import BoundNotApplicableError, ConvergenceError

DEFAULT_MAX_DEPTH = 100_000
DEFAULT_EIG_LIMIT = 4096
CHAIN_GRID = (0.3, 0.5, 0.7)

SMALL = "small-correlation"
LARGE = "large-correlation"
NO_REGIME = "none"


def path_depth_exact(g: Pgf, beta: float, alpha: float, max_depth: int = DEFAULT_MAX_DEPTH) -> int:
    """Smallest ``L >= 0`` with ``G^(L)(beta) <= alpha``."""
    if not (0.0 < alpha and beta < 1.0):
        raise ValueError(f"need 0 < alpha and beta < 1, got beta={beta!r}, alpha={alpha!r}")
    value = float(beta)
    depth = 0
    while value > alpha:
        nxt = duality.pgf_eval(g, value)
        depth += 1
        if nxt >= value:
            raise ConvergenceError(
                "G does not decrease the correlation; the target is unreachable",
                last_value=value,
                depth=depth - 1,
            )
        if depth > max_depth:
            raise ConvergenceError("path depth exceeded max_depth", last_value=nxt, depth=depth)
        value = nxt
    return depth


class DepthBounds(NamedTuple):
    lower: float
    upper: float


def _log_ratio(num: float, den: float, what: str) -> float:
    if num <= 0 or den <= 0:
        raise BoundNotApplicableError(f"{what}: non-positive argument")
    value = math.log(num / den)
    if value <= 0:
        raise BoundNotApplicableError(f"{what}: log({num!r}/{den!r}) <= 0, no descent")
    return value


def path_depth_bounds(g: Pgf, beta: float, alpha: float) -> DepthBounds:
    """Closed-form sandwich around ``path_depth_exact(g, beta, alpha)``.

    Both bounds compare the ratios ``s / G(s)`` and
    ``(1 - G(s)) / (1 - s)`` at the two endpoints. They need ``G(beta) < beta``
    and ``G(alpha) < alpha``.
    """
    if not 0.0 < alpha <= beta < 1.0:
        raise ValueError("need 0 < alpha <= beta < 1")
    g_beta = duality.pgf_eval(g, beta)
    g_alpha = duality.pgf_eval(g, alpha)
    num_top = math.log(beta / alpha)
    num_bottom = math.log((1.0 - alpha) / (1.0 - beta))
    comp_beta = duality.pgf_complement(g, 1.0 - beta)
    comp_alpha = duality.pgf_complement(g, 1.0 - alpha)
    upper = (
        min(
            num_top / _log_ratio(beta, g_beta, "upper, multiplicative"),
            num_bottom / _log_ratio(comp_alpha, 1.0 - alpha, "upper, complement"),
        )
        + 1.0
    )
    lower = max(
        num_top / _log_ratio(alpha, g_alpha, "lower, multiplicative"),
        num_bottom / _log_ratio(comp_beta, 1.0 - beta, "lower, complement"),
    )
    return DepthBounds(lower, upper)


def chain_bounds(g: Pgf, beta: float, alpha: float, grid: Sequence[float] = CHAIN_GRID) -> DepthBounds | None:
    """Refine the sandwich by passing through intermediate points ``s``.

    For each ``s`` strictly between ``alpha`` and ``beta`` the depth splits
    into ``beta -> s`` and ``s -> alpha``; the best split over the grid is
    returned, or ``None`` when no grid point lies in between.
    """
    lows, ups = [], []
    for s in grid:
        if alpha < s < beta:
            top = path_depth_bounds(g, beta, s)
            bottom = path_depth_bounds(g, s, alpha)
            lows.append(top.lower + bottom.lower - 1.0)
            ups.append(top.upper + bottom.upper)
    if not lows:
        return None
    return DepthBounds(max(lows), min(ups))


def s_star(g: Pgf, tol: float = 1e-10) -> float:
    """``inf{s in (0, 1) : (1 - G(s)) / (1 - s) >= (1 + mu) / 2}`` by bisection."""
    mu = duality.mean_and_mustar(g).mean
    if mu <= 1.0:
        raise ValueError("s_star needs mu > 1")
    target = 0.5 * (1.0 + mu)

    def ratio(s):
        return duality.pgf_complement(g, 1.0 - s) / (1.0 - s)

    lo, hi = 0.0, 1.0
    if ratio(lo) >= target:
        return 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ratio(mid) >= target:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# --- regime-level closed forms ----------------------------------------------


def small_regime_constant(a1_squared: float) -> float:
    """``c = min(0.1, 0.5 (a_1 - a_1^2))``; the regime is ``sqrt(log n / d) < c``."""
    return min(0.1, 0.5 * (math.sqrt(a1_squared) - a1_squared))


def large_regime_constant(s_star_value: float) -> float:
    """``C = max(1.5 log 40, log((1 - s_star) / 0.06))``; the regime is ``log n / d > C``."""
    return max(1.5 * math.log(40.0), math.log((1.0 - s_star_value) / 0.06))


def _log_inverse_a1(a1_squared: float) -> float:
    if not 0.0 < a1_squared < 1.0:
        raise BoundNotApplicableError("needs 0 < a_1^2 < 1")
    return -math.log(a1_squared)


def small_correlation_memorization_bounds(a1_squared: float, n: int, d: int, kappa: float) -> dict:
    """Depth interval for kappa-memorization of i.i.d. uniform data."""
    la = _log_inverse_a1(a1_squared)
    scale = math.log(math.log(n) / d)
    lower = 0.5 * scale / la + math.log(0.5 / kappa) / la
    upper = scale / la + 2.0 * math.log(3.0 * n / kappa) / la + 1.0
    c = small_regime_constant(a1_squared)
    return {
        "lower": lower,
        "upper": upper,
        "c": c,
        "regime_holds": math.sqrt(math.log(n) / d) < c,
    }


def small_correlation_closeness_bounds(a1_squared: float, n: int, d: int, eps: float) -> dict:
    """Depth interval for epsilon-closeness of i.i.d. uniform data."""
    la = _log_inverse_a1(a1_squared)
    scale = math.log(math.log(n) / d)
    c = small_regime_constant(a1_squared)
    return {
        "lower": (0.5 * scale + math.log(0.5 / eps)) / la,
        "upper": (scale + 2.0 * math.log(3.0 / eps)) / la + 1.0,
        "c": c,
        "regime_holds": math.sqrt(math.log(n) / d) < c,
    }


def large_correlation_memorization_bounds(g: Pgf, n: int, d: int, kappa: float) -> dict:
    """Depth interval for kappa-memorization of a maximal polarized packing."""
    mu = duality.mean_and_mustar(g).mean
    a1sq = g.prob(1)
    la = _log_inverse_a1(a1sq)
    ss = s_star(g)
    half = 0.5 * (1.0 + mu)
    lower = 1.5 * (math.log(n) / d) / math.log(mu) + math.log(0.5 / kappa) / la - 1.0
    contraction = ss / (1.0 - (1.0 - ss) * half)
    upper = (
        3.0 * (math.log(n) / (d - 1)) / math.log(half)
        + math.log(ss * n / kappa) / math.log(contraction)
        + 2.0
    )
    C = large_regime_constant(ss)
    return {
        "lower": lower,
        "upper": upper,
        "s_star": ss,
        "C": C,
        "regime_holds": math.log(n) / d > C,
        "kappa_below_n_s_star": kappa < n * ss,
    }


def large_correlation_closeness_bounds(
    g: Pgf, n: int, d: int, eps: float, rho: float, grid_size: int = 400
) -> dict:
    """Depth interval for epsilon-closeness of a maximal polarized packing.

    The optimization over the split point ``s in (eps, rho)`` is done on a
    uniform grid of ``grid_size`` interior points.
    """
    mu = duality.mean_and_mustar(g).mean
    la = _log_inverse_a1(g.prob(1))
    s = np.linspace(eps, rho, grid_size + 2)[1:-1]
    g_s = duality.pgf_eval(g, s)
    comp = duality.pgf_complement(g, 1.0 - s)
    head = math.log(1.0 / eps) + np.log(s)
    lower_terms = head / la + (2.0 * math.log(n) / d + np.log((1.0 - s) / 18.2)) / math.log(mu)
    with np.errstate(divide="ignore", invalid="ignore"):
        upper_terms = head / np.log(s / g_s) + (
            2.0 * math.log(n) / (d - 1) + np.log((1.0 - s) / 0.06)
        ) / np.log(comp / (1.0 - s))
    return {
        "lower": float(np.max(lower_terms)) - 1.0,
        "upper": float(np.nanmin(upper_terms)) + 2.0,
        "grid_size": grid_size,
    }


# --- reports ----------------------------------------------------------------


@dataclass
class DepthReport:
    """Exact depth with the closed-form bounds that surround it."""

    exact: int | None
    lower: float
    upper: float
    regime: str
    rho: float
    target: float
    target_name: str
    n: int | None = None
    d: int | None = None
    components: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "exact": self.exact,
            "lower": self.lower,
            "upper": self.upper,
            "regime": self.regime,
            "rho": self.rho,
            self.target_name: self.target,
            "n": self.n,
            "d": self.d,
            "components": self.components,
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _dataset_geometry(data, n, d):
    if hasattr(data, "rho_max"):
        rho = float(data.rho_max)
        n = n if n is not None else data.n
        d = d if d is not None else data.metadata.get("ambient_dimension", data.d)
        return rho, n, d, data
    return float(data), n, d, None


def _regime(g: Pgf, n, d) -> tuple[str, dict]:
    if n is None or d is None or n < 2:
        return NO_REGIME, {}
    info = {"log_n_over_d": math.log(n) / d}
    a1sq = g.prob(1)
    if 0.0 < a1sq < 1.0:
        c = small_regime_constant(a1sq)
        info["c"] = c
        if math.sqrt(math.log(n) / d) < c:
            return SMALL, info
    mu = duality.mean_and_mustar(g).mean
    if mu > 1.0 and d > 1:
        C = large_regime_constant(s_star(g))
        info["C"] = C
        if math.log(n) / d > C:
            return LARGE, info
    return NO_REGIME, info


def _sandwich(g: Pgf, beta: float, alpha: float, components: dict, warnings: list) -> tuple[float, float]:
    if alpha >= beta:
        return 0.0, 0.0
    try:
        plain = path_depth_bounds(g, beta, alpha)
    except BoundNotApplicableError as exc:
        warnings.append(f"path-depth bounds not applicable: {exc}")
        return math.nan, math.nan
    components["path_depth_bounds"] = {"lower": plain.lower, "upper": plain.upper}
    lower, upper = plain
    chain = chain_bounds(g, beta, alpha)
    if chain is not None:
        components["chain_bounds"] = {"lower": chain.lower, "upper": chain.upper}
        lower, upper = max(lower, chain.lower), min(upper, chain.upper)
    return lower, upper


def _max_offdiag_kernel(g: Pgf, dataset, depth: int) -> float:
    rho = dataset.correlations
    iu = np.triu_indices(dataset.n, 1)
    return float(np.max(np.abs(kernel.kernel_eval(kernel.CompositionalKernel(g, depth), rho[iu]))))


def direct_closeness_depth(g: Pgf, dataset, eps: float, max_depth: int = 10_000) -> int:
    """Smallest depth at which every signed off-diagonal entry is at most ``eps``."""
    if dataset.n < 2:
        return 0
    iu = np.triu_indices(dataset.n, 1)
    values = dataset.correlations[iu]
    for depth in range(max_depth + 1):
        if np.max(np.abs(values)) <= eps:
            return depth
        values = duality.pgf_eval(g, values)
    raise ConvergenceError("closeness depth exceeded max_depth", depth=max_depth)


def _symmetry_note(g: Pgf, dataset, warnings: list) -> bool:
    if dataset is None or dataset.n < 2:
        return True
    iu = np.triu_indices(dataset.n, 1)
    if np.min(dataset.correlations[iu]) >= 0:
        return True
    check = duality.check_pgf_symmetry(g)
    if not check.holds:
        warnings.append(
            f"|G(s)| != G(|s|) (violation {check.violation:.3g}); the |rho| depth is an upper bound only"
        )
    return check.holds


def epsilon_closeness_depth(g: Pgf, data, eps: float, n: int | None = None, d: int | None = None) -> DepthReport:
    """Depth at which the kernel of ``data`` (a dataset or a max correlation) is ``eps``-close."""
    rho, n, d, dataset = _dataset_geometry(data, n, d)
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    warnings: list = []
    components: dict = {}
    symmetric = _symmetry_note(g, dataset, warnings)
    exact = 0 if eps >= rho else path_depth_exact(g, rho, eps)
    if dataset is not None and not symmetric:
        components["direct_signed_depth"] = direct_closeness_depth(g, dataset, eps)
    lower, upper = _sandwich(g, rho, eps, components, warnings)
    regime, info = _regime(g, n, d)
    components["regime_info"] = info
    if n is not None and d is not None and n >= 2 and eps < rho:
        try:
            components["small_correlation_closeness"] = small_correlation_closeness_bounds(g.prob(1), n, d, eps)
        except BoundNotApplicableError as exc:
            warnings.append(str(exc))
        if duality.mean_and_mustar(g).mean > 1.0 and 0.0 < g.prob(1) < 1.0 and d > 1:
            components["large_correlation_closeness"] = large_correlation_closeness_bounds(g, n, d, eps, rho)
    return DepthReport(exact, lower, upper, regime, rho, eps, "epsilon", n, d, components, warnings)


@dataclass(frozen=True)
class MemorizationCheck:
    holds: bool
    min_eigenvalue: float
    max_eigenvalue: float
    deviation: float
    condition_surrogate: float


def check_kappa_memorization(K, kappa: float, max_n: int = DEFAULT_EIG_LIMIT) -> MemorizationCheck:
    """Dense eigensolve: does every eigenvalue lie in ``[1 - kappa, 1 + kappa]``?"""
    entries = K.entries if hasattr(K, "entries") else np.asarray(K, dtype=float)
    n = entries.shape[0]
    if n > max_n:
        raise ValueError(f"n = {n} exceeds the dense eigensolve limit {max_n}")
    if not np.allclose(entries, entries.T, atol=1e-12, rtol=0):
        raise ValueError("kernel matrix must be symmetric")
    eig = K.eigenvalues if hasattr(K, "eigenvalues") else np.linalg.eigvalsh(entries)
    lo, hi = float(eig[0]), float(eig[-1])
    dev = max(abs(lo - 1.0), abs(hi - 1.0))
    cond = (1.0 + dev) / (1.0 - dev) if dev < 1.0 else math.inf
    return MemorizationCheck(bool(dev <= kappa), lo, hi, dev, cond)


def memorization_depth_bounds(
    g: Pgf,
    data,
    kappa: float,
    n: int | None = None,
    d: int | None = None,
    eig_limit: int = DEFAULT_EIG_LIMIT,
) -> DepthReport:
    """Bracket the kappa-memorization depth between two path depths.

    kappa-memorization forces kappa-closeness, giving the lower value
    ``L(rho -> kappa)``; ``kappa / n``-closeness forces kappa-memorization,
    giving the upper value ``L(rho -> kappa / n)``. When a dataset of at most
    ``eig_limit`` points is supplied, the exact minimum depth is found by
    eigensolves between the two.
    """
    rho, n, d, dataset = _dataset_geometry(data, n, d)
    if n is None:
        raise ValueError("the number of points n is required")
    if not 0.0 < kappa < 1.0:
        raise ValueError("kappa must lie in (0, 1)")
    warnings: list = []
    components: dict = {}
    if rho == 0.0:
        return DepthReport(0, 0.0, 0.0, NO_REGIME, rho, kappa, "kappa", n, d, components, warnings)
    if kappa >= rho:
        warnings.append("kappa >= rho: outside the stated range (0, rho)")
    symmetric = _symmetry_note(g, dataset, warnings)
    lower = 0 if kappa >= rho else path_depth_exact(g, rho, kappa)
    upper = path_depth_exact(g, rho, kappa / n) if kappa / n < rho else 0
    components["closeness_lower"] = {"target": kappa, "depth": lower}
    components["closeness_upper"] = {"target": kappa / n, "depth": upper}
    exact = None
    if dataset is not None and dataset.n <= eig_limit:
        start = lower if symmetric else 0
        for depth in range(start, upper + 1):
            K = kernel.build_kernel_matrix(g, dataset, depth)
            if check_kappa_memorization(K, kappa, eig_limit).holds:
                exact = depth
                break
    regime, info = _regime(g, n, d)
    components["regime_info"] = info
    if d is not None and n >= 2:
        try:
            components["small_correlation_memorization"] = small_correlation_memorization_bounds(
                g.prob(1), n, d, kappa
            )
        except BoundNotApplicableError as exc:
            warnings.append(str(exc))
        if duality.mean_and_mustar(g).mean > 1.0 and 0.0 < g.prob(1) < 1.0 and d > 1:
            large = large_correlation_memorization_bounds(g, n, d, kappa)
            components["large_correlation_memorization"] = large
            if regime == LARGE and not large["kappa_below_n_s_star"]:
                warnings.append("kappa >= n * s_star: outside the large-regime range")
    return DepthReport(
        exact, float(lower if symmetric else 0), float(upper), regime, rho, kappa, "kappa", n, d, components, warnings
    )
