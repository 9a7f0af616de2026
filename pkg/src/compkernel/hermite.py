"""Normalized Hermite polynomials, built-in activations and coefficient estimation.

The normalized probabilists' Hermite polynomials ``h_k = He_k / sqrt(k!)``
form an orthonormal basis of L2 under the standard Gaussian measure. An
activation is stored through its coefficients ``a_k = E[sigma(g) h_k(g)]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from . import rng
from .errors import DegenerateActivationError

EXACT_TOLERANCE = 1e-8


def hermite_table(max_degree: int, x) -> np.ndarray:
    """Evaluate ``h_0 .. h_max_degree`` at ``x``.

    Returns an array of shape ``(max_degree + 1,) + np.shape(x)``. The
    recurrence ``h_{k+1} = (x h_k - sqrt(k) h_{k-1}) / sqrt(k+1)`` keeps the
    normalization inside each step, so nothing overflows for large ``k``.
    """
    if max_degree < 0:
        raise ValueError(f"max_degree must be >= 0, got {max_degree}")
    x = np.asarray(x, dtype=float)
    out = np.empty((max_degree + 1,) + x.shape)
    out[0] = 1.0
    if max_degree >= 1:
        out[1] = x
    for k in range(1, max_degree):
        out[k + 1] = (x * out[k] - math.sqrt(k) * out[k - 1]) / math.sqrt(k + 1)
    return out


def hermite_eval(k: int, x):
    """Return ``h_k(x)``; scalar input gives a float, array input an array."""
    if k < 0:
        raise ValueError(f"degree must be >= 0, got {k}")
    value = hermite_table(k, x)[k]
    return float(value) if value.ndim == 0 else value


def mehler_kernel(rho, x, y):
    """Closed form of ``sum_k rho^k h_k(x) h_k(y)`` for ``|rho| < 1``.

    Equals ``exp((2 rho x y - rho^2 (x^2 + y^2)) / (2 (1 - rho^2))) / sqrt(1 - rho^2)``.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(np.abs(rho) >= 1.0):
        raise ValueError("Mehler's kernel needs |rho| < 1")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    q = 1.0 - rho * rho
    return np.exp((2.0 * rho * x * y - rho * rho * (x * x + y * y)) / (2.0 * q)) / np.sqrt(q)


def mehler_series(rho, x, y, terms: int = 60):
    """Truncated sum ``sum_{k <= terms} rho^k h_k(x) h_k(y)``."""
    rho = np.asarray(rho, dtype=float)
    hx = hermite_table(terms, x)
    hy = hermite_table(terms, y)
    powers = rho[..., None] ** np.arange(terms + 1)
    return np.sum(powers * np.moveaxis(hx * hy, 0, -1), axis=-1)


@dataclass(frozen=True)
class HermiteBasis:
    """Normalized Hermite polynomials up to ``max_degree``."""

    max_degree: int

    def __post_init__(self):
        if self.max_degree < 0:
            raise ValueError("max_degree must be >= 0")

    def __call__(self, x) -> np.ndarray:
        return hermite_table(self.max_degree, x)


@dataclass(frozen=True)
class ActivationFn:
    """A named scalar activation applied elementwise."""

    name: str
    evaluate: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x):
        return self.evaluate(np.asarray(x, dtype=float))


def _relu(t):
    return np.maximum(0.0, t)


def _gelu(t):
    return t * special.ndtr(t)


def _sigmoid(t):
    return special.expit(t)


def _swish(t):
    return t * special.expit(t)


def _identity(t):
    return 1.0 * t


ACTIVATIONS: dict[str, ActivationFn] = {
    "relu": ActivationFn("relu", _relu),
    "gelu": ActivationFn("gelu", _gelu),
    "sigmoid": ActivationFn("sigmoid", _sigmoid),
    "swish": ActivationFn("swish", _swish),
    "identity": ActivationFn("identity", _identity),
}

BUILTIN_TABLE_ACTIVATIONS = ("relu", "gelu", "sigmoid", "swish")


def get_activation(name: str) -> ActivationFn:
    try:
        return ACTIVATIONS[name.lower()]
    except KeyError:
        known = ", ".join(sorted(ACTIVATIONS))
        raise ValueError(f"unknown activation {name!r}; known: {known}") from None


@dataclass(frozen=True, eq=False)
class ActivationSpec:
    """Truncated Hermite expansion ``sigma = sum_k a_k h_k``.

    ``tail_mass`` records squared-coefficient mass known to live above the
    truncation (used by compressed activations). ``sample_count`` is set for
    Monte-Carlo estimates and widens the normalization tolerance.
    """

    coefficients: np.ndarray
    name: str = "custom"
    normalized: bool = False
    centered: bool = False
    tail_mass: float = 0.0
    sample_count: int | None = None
    stderr: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        coeffs = np.array(self.coefficients, dtype=float).reshape(-1)
        if coeffs.size == 0:
            raise ValueError("an activation needs at least one coefficient")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("coefficients must be finite")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coefficients", coeffs)
        if self.tail_mass < 0:
            raise ValueError("tail_mass must be non-negative")
        if self.centered and coeffs[0] != 0.0:
            raise ValueError("a centered activation must have a_0 == 0")
        if self.normalized:
            total = self.squared_norm()
            if abs(total - 1.0) > self.tolerance:
                raise ValueError(
                    f"normalized flag set but sum of a_k^2 + tail is {total!r}"
                )

    @property
    def truncation(self) -> int:
        return self.coefficients.size - 1

    @property
    def tolerance(self) -> float:
        if self.sample_count:
            return 3.0 * max(1, self.truncation) / math.sqrt(self.sample_count)
        return EXACT_TOLERANCE

    def squared_norm(self) -> float:
        return float(np.sum(self.coefficients**2) + self.tail_mass)

    def is_normalized(self) -> bool:
        return abs(self.squared_norm() - 1.0) <= self.tolerance

    def __call__(self, x):
        return spec_eval(self, x)

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "truncation": self.truncation,
            "coefficients": [float(c) for c in self.coefficients],
            "centered": bool(self.centered),
            "normalized": bool(self.normalized),
        }
        if self.tail_mass:
            out["tail_mass"] = float(self.tail_mass)
        if self.sample_count:
            out["sample_count"] = int(self.sample_count)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ActivationSpec":
        coeffs = data["coefficients"]
        if "truncation" in data and int(data["truncation"]) != len(coeffs) - 1:
            raise ValueError("truncation does not match the number of coefficients")
        return cls(
            coefficients=coeffs,
            name=data.get("name", "custom"),
            normalized=bool(data.get("normalized", False)),
            centered=bool(data.get("centered", False)),
            tail_mass=float(data.get("tail_mass", 0.0)),
            sample_count=data.get("sample_count"),
        )

    @classmethod
    def from_json(cls, text: str) -> "ActivationSpec":
        return cls.from_dict(json.loads(text))


def spec_eval(spec: ActivationSpec, x):
    """Evaluate the truncated series ``sum_{k<=iota} a_k h_k(x)``."""
    table = hermite_table(spec.truncation, x)
    value = np.tensordot(spec.coefficients, table, axes=(0, 0))
    return float(value) if np.ndim(value) == 0 else value


def estimate_coefficient_chunks(
    sigma: Callable, truncation: int, samples: int, seed: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-chunk sums used by :func:`estimate_coefficients`.

    Returns ``(sums, square_sums, sizes)`` where ``sums[c, k]`` is the sum of
    ``sigma(x) h_k(x)`` over chunk ``c``. Keeping chunk totals lets callers
    build jackknife errors for nonlinear functions of the coefficients.
    """
    if samples < 1:
        raise ValueError("sample count must be >= 1")
    if truncation < 0:
        raise ValueError("truncation must be >= 0")
    sums, squares, sizes = [], [], []
    for index, size in rng.chunks(samples):
        x = rng.generator(seed, index).standard_normal(size)
        y = np.asarray(sigma(x), dtype=float)
        if not np.all(np.isfinite(y)):
            bad = x[~np.isfinite(y)][0]
            raise ValueError(f"activation returned a non-finite value at x={bad!r}")
        products = hermite_table(truncation, x) * y
        sums.append(products.sum(axis=1))
        squares.append((products**2).sum(axis=1))
        sizes.append(size)
    return np.array(sums), np.array(squares), np.array(sizes)


def estimate_coefficients(
    sigma: Callable,
    truncation: int = 20,
    samples: int = 10**6,
    seed: int = rng.DEFAULT_SEED,
    name: str | None = None,
) -> ActivationSpec:
    """Monte-Carlo Hermite coefficients ``a_k = mean(sigma(x_i) h_k(x_i))``.

    The returned spec is neither centered nor normalized. Its ``stderr``
    holds the per-coefficient standard error of the sample mean.
    """
    sums, squares, sizes = estimate_coefficient_chunks(sigma, truncation, samples, seed)
    total = sizes.sum()
    mean = sums.sum(axis=0) / total
    second = squares.sum(axis=0) / total
    var = np.maximum(second - mean**2, 0.0) * total / max(total - 1, 1)
    if name is None:
        name = getattr(sigma, "name", getattr(sigma, "__name__", "custom"))
    return ActivationSpec(
        coefficients=mean,
        name=name,
        sample_count=int(total),
        stderr=np.sqrt(var / total),
    )


def _gaussian_pdf(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def project_coefficients(
    sigma: Callable,
    truncation: int = 20,
    breakpoints: Sequence[float] = (0.0,),
    name: str | None = None,
) -> ActivationSpec:
    """Deterministic Hermite coefficients by adaptive quadrature.

    The real line is split at ``breakpoints`` (kinks of the activation) and
    each piece is integrated with :func:`scipy.integrate.quad`. This is the
    reference against which the Monte-Carlo estimator is checked.
    """
    edges = [-np.inf, *sorted(breakpoints), np.inf]
    coeffs = np.zeros(truncation + 1)
    for k in range(truncation + 1):
        def integrand(x, k=k):
            return float(sigma(np.array(x))) * hermite_table(k, x)[k] * _gaussian_pdf(x)

        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            value, _ = integrate.quad(integrand, lo, hi, limit=400, epsabs=1e-13, epsrel=1e-12)
            total += value
        coeffs[k] = total
    if name is None:
        name = getattr(sigma, "name", "custom")
    return ActivationSpec(coefficients=coeffs, name=name)


def normalize(spec: ActivationSpec) -> ActivationSpec:
    """Scale coefficients so that ``sum a_k^2 + tail`` equals one."""
    total = spec.squared_norm()
    if total <= 0.0:
        raise DegenerateActivationError("cannot normalize a zero activation")
    scale = 1.0 / math.sqrt(total)
    return replace(
        spec,
        coefficients=spec.coefficients * scale,
        tail_mass=spec.tail_mass / total,
        normalized=True,
        stderr=None if spec.stderr is None else spec.stderr * scale,
    )


def center_and_normalize(spec: ActivationSpec, atol: float = 1e-14) -> ActivationSpec:
    """Drop ``a_0`` and rescale the rest to unit squared norm."""
    rest = float(np.sum(spec.coefficients[1:] ** 2) + spec.tail_mass)
    if rest <= atol:
        raise DegenerateActivationError(
            f"activation {spec.name!r} has no non-constant component (sum_k>=1 a_k^2 = {rest!r})"
        )
    coeffs = spec.coefficients.copy()
    coeffs[0] = 0.0
    scale = 1.0 / math.sqrt(rest)
    stderr = None
    if spec.stderr is not None:
        stderr = spec.stderr * scale
        stderr[0] = 0.0
    return replace(
        spec,
        coefficients=coeffs * scale,
        tail_mass=spec.tail_mass / rest,
        centered=True,
        normalized=True,
        stderr=stderr,
    )
