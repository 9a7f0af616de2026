"""Activations as probability generating functions.

Squaring the Hermite coefficients of a normalized activation gives an
offspring distribution ``p_k = a_k^2`` whose generating function ``G`` is the
one-layer kernel: ``E[sigma(u) sigma(v)] = G(rho)`` for standard Gaussians
with correlation ``rho``. This module builds and analyses those ``G``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import stats

from . import hermite, rng
from .errors import ConvergenceError
from .hermite import ActivationSpec

PROBABILITY_TOLERANCE = 1e-10
ANALYTIC_TAIL = 1e-12
# Offspring means within this distance above 1 are rounding noise on a critical law.
CRITICAL_TOLERANCE = 1e-12

SUBCRITICAL = "subcritical-or-critical"
SUPERCRITICAL_KS = "supercritical-KS"
SUPERCRITICAL_HEAVY = "supercritical-heavy"


@dataclass(frozen=True, eq=False)
class Pgf:
    """Offspring law ``p_0 .. p_D`` plus the probability mass above ``D``.

    When evaluating, ``tail_mass`` is placed at degree ``D + 1`` so that
    ``G(1) == 1`` holds exactly.
    """

    coefficients: np.ndarray
    tail_mass: float = 0.0
    family: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.array(self.coefficients, dtype=float).reshape(-1)
        if p.size == 0:
            raise ValueError("a Pgf needs at least one coefficient")
        if not np.all(np.isfinite(p)):
            raise ValueError("Pgf coefficients must be finite")
        if np.any(p < 0):
            raise ValueError(f"Pgf coefficients must be non-negative, min is {p.min()!r}")
        if self.tail_mass < 0:
            raise ValueError("tail_mass must be non-negative")
        total = p.sum() + self.tail_mass
        if abs(total - 1.0) > PROBABILITY_TOLERANCE:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "coefficients", p)
        object.__setattr__(self, "tail_mass", float(self.tail_mass))

    @property
    def degree_cap(self) -> int:
        return self.coefficients.size - 1

    def __call__(self, s):
        return pgf_eval(self, s)

    def prob(self, k: int) -> float:
        return float(self.coefficients[k]) if 0 <= k <= self.degree_cap else 0.0

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": dict(self.params),
            "degree_cap": self.degree_cap,
            "coefficients": [float(c) for c in self.coefficients],
            "tail_mass": self.tail_mass,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "Pgf":
        coeffs = data["coefficients"]
        if "degree_cap" in data and int(data["degree_cap"]) != len(coeffs) - 1:
            raise ValueError("degree_cap does not match the number of coefficients")
        return cls(
            coefficients=coeffs,
            tail_mass=float(data.get("tail_mass", 0.0)),
            family=data.get("family"),
            params=dict(data.get("params") or {}),
        )

    @classmethod
    def from_json(cls, text: str) -> "Pgf":
        return cls.from_dict(json.loads(text))


def from_probabilities(probs: Sequence[float] | dict, family: str | None = None) -> Pgf:
    """Build a Pgf from a list ``[p_0, p_1, ...]`` or a ``{k: p_k}`` mapping."""
    if isinstance(probs, dict):
        top = max(int(k) for k in probs)
        p = np.zeros(top + 1)
        for k, v in probs.items():
            p[int(k)] = v
    else:
        p = np.asarray(probs, dtype=float)
    return Pgf(p, family=family)


def point_mass(k: int) -> Pgf:
    """Deterministic offspring count ``k``."""
    p = np.zeros(k + 1)
    p[k] = 1.0
    return Pgf(p, family="point_mass", params={"k": k})


def _cap_for_tail(sf, start: int = 1) -> int:
    D = start
    while sf(D) >= ANALYTIC_TAIL:
        D *= 2
    lo, hi = D // 2, D
    while lo < hi:
        mid = (lo + hi) // 2
        if sf(mid) < ANALYTIC_TAIL:
            hi = mid
        else:
            lo = mid + 1
    return max(hi, 1)


def poisson(lam: float, degree_cap: int | None = None) -> Pgf:
    """Poisson(lam), ``G(s) = exp(lam (s - 1))``."""
    if lam < 0:
        raise ValueError("Poisson rate must be non-negative")
    law = stats.poisson(lam)
    D = degree_cap if degree_cap is not None else _cap_for_tail(law.sf)
    p = law.pmf(np.arange(D + 1))
    tail = max(0.0, float(law.sf(D)))
    p, tail = _repair_rounding(p, tail)
    return Pgf(p, tail, family="poisson", params={"lambda": lam})


def geometric(p: float, degree_cap: int | None = None) -> Pgf:
    """Geometric law with pmf ``(1 - p) p^k``, ``G(s) = (1 - p) / (1 - p s)``."""
    if not 0 <= p < 1:
        raise ValueError("geometric parameter must lie in [0, 1)")
    if degree_cap is None:
        D = 1 if p == 0 else max(1, math.ceil(math.log(ANALYTIC_TAIL) / math.log(p)))
    else:
        D = degree_cap
    k = np.arange(D + 1)
    probs = (1 - p) * p**k
    tail = p ** (D + 1)
    probs, tail = _repair_rounding(probs, tail)
    return Pgf(probs, tail, family="geometric", params={"p": p})


def binomial(n: int, p: float) -> Pgf:
    """Binomial(n, p), ``G(s) = (1 - p + p s)^n``."""
    if n < 0 or not 0 <= p <= 1:
        raise ValueError("binomial needs n >= 0 and p in [0, 1]")
    probs = stats.binom(n, p).pmf(np.arange(n + 1))
    probs, _ = _repair_rounding(probs, 0.0)
    return Pgf(probs, family="binomial", params={"n": n, "p": p})


def uniform(n: int) -> Pgf:
    """Uniform offspring count on ``{0, ..., n}``."""
    if n < 0:
        raise ValueError("uniform support size must be non-negative")
    return Pgf(np.full(n + 1, 1.0 / (n + 1)), family="uniform", params={"n": n})


def printed_uniform_generating_function(n: int, s):
    """The uniform generating function ``(1 - s^{n+1}) / (n (1 - s))`` as printed.

    Its value at ``s = 1`` is ``(n + 1) / n``, so it is not a normalized PGF.
    :func:`uniform` uses the normalized pmf ``1 / (n + 1)`` instead.
    """
    s = np.asarray(s, dtype=float)
    powers = s[..., None] ** np.arange(n + 1)
    value = powers.sum(axis=-1) / n
    return float(value) if value.ndim == 0 else value


def _repair_rounding(p: np.ndarray, tail: float) -> tuple[np.ndarray, float]:
    # pmf and survival function come from separate evaluations; absorb the
    # last-ulp disagreement into the tail so the total is exactly one.
    p = np.clip(np.asarray(p, dtype=float), 0.0, None)
    gap = 1.0 - p.sum() - tail
    if abs(gap) > 1e-9:
        raise ValueError(f"distribution does not sum to one (gap {gap!r})")
    if tail + gap >= 0:
        tail = tail + gap
    else:
        p = p / (p.sum() + tail) * (1.0 - tail)
    return p, tail


def pgf_eval(g: Pgf, s):
    """``G(s) = sum_k p_k s^k + tail * s^(D+1)`` by Horner evaluation."""
    s_arr = np.asarray(s, dtype=float)
    value = npoly.polyval(s_arr, g.coefficients)
    if g.tail_mass:
        value = value + g.tail_mass * s_arr ** (g.degree_cap + 1)
    return float(value) if np.ndim(value) == 0 else value


def pgf_complement(g: Pgf, u):
    """``1 - G(1 - u)`` for ``u`` in ``[0, 1]``, accurate when ``u`` is tiny.

    Each term ``p_k (1 - (1 - u)^k)`` is formed with ``expm1``/``log1p`` so the
    result keeps full relative precision instead of cancelling against 1.
    """
    u_arr = np.asarray(u, dtype=float)
    if np.any((u_arr < 0) | (u_arr > 1)):
        raise ValueError("complement argument must lie in [0, 1]")
    k = np.arange(1, g.degree_cap + 2, dtype=float)
    weights = np.append(g.coefficients[1:], g.tail_mass)
    with np.errstate(divide="ignore"):
        log_s = np.log1p(-u_arr)[..., None]
    terms = -np.expm1(k * log_s)
    value = terms @ weights
    return float(value) if np.ndim(value) == 0 else value


def pgf_from_activation(spec: ActivationSpec) -> Pgf:
    """Dual offspring law ``p_k = a_k^2`` of a normalized activation."""
    if not spec.is_normalized():
        raise ValueError(
            f"activation {spec.name!r} is not normalized: sum a_k^2 = {spec.squared_norm()!r}"
        )
    p = spec.coefficients.astype(float) ** 2
    total = p.sum()
    if total > 1.0:
        # Only reachable inside the Monte-Carlo normalization tolerance.
        p = p / total
    tail = max(0.0, 1.0 - p.sum())
    return Pgf(p, tail, family=None, params={"activation": spec.name})


def activation_from_pgf(g: Pgf, name: str | None = None, tail_tolerance: float = PROBABILITY_TOLERANCE) -> ActivationSpec:
    """Activation with coefficients ``a_k = +sqrt(p_k)`` whose dual is ``g``."""
    if g.tail_mass > tail_tolerance:
        raise ValueError(
            f"tail mass {g.tail_mass!r} exceeds {tail_tolerance!r}; raise the degree cap"
        )
    a = np.sqrt(g.coefficients)
    return ActivationSpec(
        coefficients=a,
        name=name or g.family or "dual",
        normalized=True,
        centered=bool(a[0] == 0.0),
        tail_mass=g.tail_mass,
    )


class Moments(NamedTuple):
    mean: float
    mustar: float
    lower_bound: bool


def mean_and_mustar(g: Pgf) -> Moments:
    """Offspring mean and ``E[Y log Y]`` over the stored coefficients.

    Both are lower bounds when probability mass sits beyond the degree cap;
    ``lower_bound`` flags that case.
    """
    k = np.arange(g.degree_cap + 1, dtype=float)
    mu = float(k @ g.coefficients)
    klogk = np.zeros_like(k)
    klogk[2:] = k[2:] * np.log(k[2:])
    mustar = float(klogk @ g.coefficients)
    return Moments(mu, mustar, g.tail_mass > PROBABILITY_TOLERANCE)


def extinction_probability(g: Pgf, tol: float = 1e-12, max_iter: int = 100_000) -> float:
    """Smallest fixed point of ``G`` on ``[0, 1]``.

    Iterates ``s <- G(s)`` from 0; the sequence increases monotonically to
    the extinction probability.
    """
    if g.prob(1) == 1.0:
        raise ValueError("p_1 == 1: every point is fixed, extinction is undefined")
    mu = mean_and_mustar(g).mean
    if mu <= 1.0 + CRITICAL_TOLERANCE:
        return 1.0
    s = 0.0
    for it in range(1, max_iter + 1):
        nxt = pgf_eval(g, s)
        if abs(nxt - s) <= tol:
            return float(nxt)
        s = nxt
    raise ConvergenceError(
        "extinction fixed-point iteration did not converge",
        last_value=s,
        iterations=max_iter,
        mean=mu,
    )


@dataclass(frozen=True)
class PhaseReport:
    mean: float
    mustar: float
    extinction: float
    phase: str
    mustar_lower_bound: bool = False

    def to_dict(self) -> dict:
        return {
            "mu": self.mean,
            "mu_star": self.mustar,
            "xi": self.extinction,
            "phase": self.phase,
            "mu_star_lower_bound": self.mustar_lower_bound,
        }


def classify_phase(g: Pgf) -> PhaseReport:
    """Depth-limit phase of the kernel built from ``g``.

    ``mu <= 1`` gives the trivial limit; otherwise the finite ``E[Y log Y]``
    of any truncated law puts it in the Kesten-Stigum phase. The heavy-tail
    phase needs an infinite ``E[Y log Y]`` and cannot arise from a finite
    coefficient list. The identity law ``p_1 = 1`` never dies out, so its
    extinction probability is reported as 0.
    """
    mu, mustar, lower = mean_and_mustar(g)
    if g.prob(1) == 1.0:
        return PhaseReport(mu, mustar, 0.0, SUBCRITICAL, lower)
    xi = extinction_probability(g)
    phase = SUBCRITICAL if mu <= 1.0 + CRITICAL_TOLERANCE else SUPERCRITICAL_KS
    return PhaseReport(mu, mustar, xi, phase, lower)


def resnet_pgf(g: Pgf, r: float) -> Pgf:
    """Dual law of a residual block: ``(1 - r) G(s) + r s``."""
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"residual weight must lie in [0, 1], got {r!r}")
    if g.prob(0) > 0:
        warnings.warn("residual duality assumes a centered activation (p_0 == 0)", stacklevel=2)
    q = (1.0 - r) * np.asarray(g.coefficients)
    if q.size < 2:
        q = np.append(q, 0.0)
    q[1] += r
    return Pgf(q, (1.0 - r) * g.tail_mass, family="resnet", params={"r": r})


class SymmetryCheck(NamedTuple):
    holds: bool
    violation: float


def check_pgf_symmetry(g: Pgf, grid: Iterable[float] | None = None, tol: float = 1e-10) -> SymmetryCheck:
    """Test ``|G(s)| == G(|s|)`` on a grid of negative ``s``."""
    s = np.linspace(-0.99, -0.01, 99) if grid is None else np.asarray(list(grid), dtype=float)
    violation = float(np.max(np.abs(pgf_eval(g, np.abs(s)) - np.abs(pgf_eval(g, s)))))
    return SymmetryCheck(violation <= tol, violation)


# --- phase table -----------------------------------------------------------


@dataclass(frozen=True)
class PhaseRow:
    """Phase quantities of one activation with jackknife standard errors."""

    activation: str
    centered: bool
    mean: float
    mustar: float
    a1_squared: float
    extinction: float
    mean_se: float
    mustar_se: float
    a1_squared_se: float
    extinction_se: float


def _phase_values(coeffs: np.ndarray, centered: bool) -> tuple[float, float, float, float]:
    spec = ActivationSpec(coeffs)
    spec = hermite.center_and_normalize(spec) if centered else hermite.normalize(spec)
    g = pgf_from_activation(spec)
    report = classify_phase(g)
    return report.mean, report.mustar, g.prob(1), report.extinction


def phase_table(
    activations: Sequence,
    truncation: int = 20,
    samples: int = 10**6,
    seed: int = rng.DEFAULT_SEED,
) -> list[PhaseRow]:
    """Estimate ``mu``, ``E[Y log Y]``, ``a_1^2`` and ``xi`` for each activation.

    Coefficients come from :func:`hermite.estimate_coefficients`; each row is
    computed both without and with centering. Standard errors use a
    delete-one-chunk jackknife over the fixed Monte-Carlo chunks.
    """
    rows = []
    for act in activations:
        fn = hermite.get_activation(act) if isinstance(act, str) else act
        sums, _, sizes = hermite.estimate_coefficient_chunks(fn, truncation, samples, seed)
        full = sums.sum(axis=0) / sizes.sum()
        n_chunks = len(sizes)
        for centered in (False, True):
            est = np.array(_phase_values(full, centered))
            if n_chunks > 1:
                loo = np.array(
                    [
                        _phase_values((sums.sum(axis=0) - sums[c]) / (sizes.sum() - sizes[c]), centered)
                        for c in range(n_chunks)
                    ]
                )
                se = np.sqrt((n_chunks - 1) / n_chunks * ((loo - loo.mean(axis=0)) ** 2).sum(axis=0))
            else:
                se = np.full(4, np.nan)
            rows.append(PhaseRow(fn.name, centered, *est, *se))
    return rows
