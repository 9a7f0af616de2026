"""Random features for compositional and positive-definite sphere kernels.

Two constructions are provided:

* sphere features: ``sigma_f(<x, u>)`` with ``u`` uniform on the sphere
  (Gaussian directions divided by their norm), valid for any positive
  definite ``f`` expanded in Legendre polynomials;
* Gaussian features: ``sigma(<x, theta>)`` with an unnormalized standard
  Gaussian ``theta`` and a compressed activation whose Hermite coefficients
  are ``sqrt(P(Z_L = k))``. One such layer reproduces the depth-``L`` kernel.

The normalization difference matters: sphere features integrate over the
sphere, Gaussian features rely on the Gaussian Mehler identity.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.sparse import linalg as sparse_linalg

from . import branching, duality, fileio, hermite, rng, spectral
from .duality import Pgf
from .hermite import ActivationSpec
from .spectral import DualActivation, LegendreExpansion

SPHERE = "legendre-sphere"
GAUSSIAN = "hermite-gaussian"
GAUSSIAN_NOISED = "hermite-truncated-noised"
FEATURE_CHUNK = 2048
DENSE_EIG_LIMIT = 4096
# Tail mass below this is rounding in the exact distribution, not truncation.
CAP_WARNING_MASS = 1e-12


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """``n x m`` random-feature matrix ``Phi``; ``gram()`` is ``Phi Phi^T / m``."""

    entries: np.ndarray
    generator: str
    seed: int
    truncation: int | None = None

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def m(self) -> int:
        return self.entries.shape[1]

    def gram(self) -> np.ndarray:
        return self.entries @ self.entries.T / self.m

    def gram_stderr(self) -> np.ndarray:
        """Per-entry standard error of the Gram estimate.

        Entry ``(i, l)`` averages ``Phi[i, j] Phi[l, j]`` over independent
        features ``j``, so its error is the sample deviation over ``sqrt(m)``.
        """
        phi = self.entries
        mean = self.gram()
        second = (phi**2) @ (phi**2).T / self.m
        var = np.maximum(second - mean**2, 0.0) * self.m / max(self.m - 1, 1)
        return np.sqrt(var / self.m)

    def to_bytes(self) -> bytes:
        return fileio.matrix_to_bytes(self.entries)

    def to_csv(self) -> str:
        return fileio.matrix_to_csv(self.entries)


def _as_dual_activation(f) -> DualActivation:
    if isinstance(f, DualActivation):
        return f
    if isinstance(f, LegendreExpansion):
        return spectral.activation_from_kernel(f)
    raise TypeError("expected a LegendreExpansion or DualActivation")


def _feature_columns(m: int, seed: int):
    start = 0
    for index, size in rng.chunks(m, FEATURE_CHUNK):
        yield start, size, rng.generator(seed, index)
        start += size


def legendre_features(dataset, expansion, m: int, seed: int = rng.DEFAULT_SEED) -> FeatureMatrix:
    """``Phi[i, j] = sigma_f(<x_i, theta_j / |theta_j|>)`` for Gaussian ``theta_j``."""
    act = _as_dual_activation(expansion)
    x = np.asarray(dataset.points)
    if x.shape[1] != act.d:
        raise ValueError(f"dataset dimension {x.shape[1]} != expansion dimension {act.d}")
    if m < 1:
        raise ValueError("m must be >= 1")
    phi = np.empty((x.shape[0], m))
    for start, size, gen in _feature_columns(m, seed):
        theta = gen.standard_normal((act.d, size))
        theta /= np.linalg.norm(theta, axis=0, keepdims=True)
        proj = np.clip(x @ theta, -1.0, 1.0)
        phi[:, start : start + size] = act(proj)
    return FeatureMatrix(phi, SPHERE, seed, act.weights.size - 1)


def compressed_activation(
    base: Pgf, depth: int, truncation: int, degree_cap: int = branching.DEFAULT_DEGREE_CAP
) -> ActivationSpec:
    """Activation with ``a_k = sqrt(P(Z_depth = k))`` for ``k <= truncation``.

    The probability above the truncation, including any mass beyond the
    degree cap, is kept as ``tail_mass``.
    """
    if truncation < 0:
        raise ValueError("truncation must be >= 0")
    gen = branching.exact_generation_distribution(base, depth, degree_cap)
    if gen.tail_mass > CAP_WARNING_MASS:
        warnings.warn(
            f"P(Z_L > {degree_cap}) = {gen.tail_mass:.3g} folds into the regularization mass",
            stacklevel=2,
        )
    alpha = np.zeros(truncation + 1)
    keep = min(truncation, gen.degree_cap) + 1
    alpha[:keep] = gen.coefficients[:keep]
    tail = float(gen.coefficients[keep:].sum() + gen.tail_mass)
    return ActivationSpec(
        coefficients=np.sqrt(alpha),
        name=f"compressed(L={depth})",
        normalized=True,
        centered=bool(alpha[0] == 0.0),
        tail_mass=tail,
    )


def hermite_features(
    dataset, spec: ActivationSpec, m: int, seed: int = rng.DEFAULT_SEED, noise: float | None = None
) -> FeatureMatrix:
    """``Psi[i, j] = sigma(<x_i, theta_j>)`` with unnormalized Gaussian ``theta_j``.

    With ``noise = nu`` each entry also gets ``sqrt(nu) z_ij`` for i.i.d.
    standard normal ``z``; pass ``spec.tail_mass`` to stand in for the
    truncated high-degree part.
    """
    if noise is not None and noise < 0:
        raise ValueError("noise mass must be non-negative")
    if m < 1:
        raise ValueError("m must be >= 1")
    x = np.asarray(dataset.points)
    n, d = x.shape
    psi = np.empty((n, m))
    for start, size, gen in _feature_columns(m, seed):
        theta = gen.standard_normal((d, size))
        block = hermite.spec_eval(spec, x @ theta)
        if noise:
            block = block + math.sqrt(noise) * gen.standard_normal((n, size))
        psi[:, start : start + size] = block
    kind = GAUSSIAN_NOISED if noise else GAUSSIAN
    return FeatureMatrix(psi, kind, seed, spec.truncation)


def operator_norm(a: np.ndarray) -> float:
    """Spectral norm of a symmetric matrix."""
    if a.shape[0] <= DENSE_EIG_LIMIT:
        return float(np.max(np.abs(np.linalg.eigvalsh(a))))
    val = sparse_linalg.eigsh(a, k=1, which="LM", return_eigenvectors=False)
    return float(abs(val[0]))


@dataclass(frozen=True, eq=False)
class TruncationDecomposition:
    """``K = regularization_mass * I + truncated_gram + remainder``."""

    kernel: np.ndarray
    regularization_mass: float
    truncated_gram: np.ndarray
    remainder: np.ndarray
    remainder_op_norm: float
    rho_max: float
    truncation: int

    @property
    def remainder_bound(self) -> float:
        """``n * rho_max^(truncation + 1)``."""
        return self.kernel.shape[0] * self.rho_max ** (self.truncation + 1)

    def to_dict(self) -> dict:
        return {
            "n": int(self.kernel.shape[0]),
            "truncation": self.truncation,
            "regularization_mass": self.regularization_mass,
            "remainder_op_norm": self.remainder_op_norm,
            "rho_max": self.rho_max,
            "remainder_bound": self.remainder_bound,
            "bound_holds": bool(self.remainder_op_norm <= self.remainder_bound),
        }


def truncation_decomposition(dataset, gen_dist: Pgf, truncation: int) -> TruncationDecomposition:
    """Split the kernel ``E[rho^Z]`` at degree ``truncation``.

    ``truncated_gram`` is ``sum_{k <= truncation} alpha_k rho^k`` evaluated
    exactly (its diagonal is ``sum_{k <= truncation} alpha_k``); the mass of
    the higher degrees sits on the identity and ``remainder`` holds the rest,
    which vanishes on the diagonal.
    """
    if truncation < 0:
        raise ValueError("truncation must be >= 0")
    rho = dataset.correlations
    alpha = np.asarray(gen_dist.coefficients)
    low = alpha[: truncation + 1]
    mass = float(alpha[truncation + 1 :].sum() + gen_dist.tail_mass)
    K = np.asarray(duality.pgf_eval(gen_dist, rho))
    np.fill_diagonal(K, duality.pgf_eval(gen_dist, 1.0))
    trunc = np.polynomial.polynomial.polyval(rho, low)
    remainder = K - mass * np.eye(K.shape[0]) - trunc
    return TruncationDecomposition(
        kernel=K,
        regularization_mass=mass,
        truncated_gram=trunc,
        remainder=remainder,
        remainder_op_norm=operator_norm(remainder),
        rho_max=dataset.rho_max,
        truncation=truncation,
    )


def _to_pgf(base) -> Pgf:
    if isinstance(base, Pgf):
        return base
    if isinstance(base, ActivationSpec):
        return duality.pgf_from_activation(base)
    raise TypeError("expected a Pgf or ActivationSpec")


def condition_number_vs_depth(
    dataset,
    base,
    depths: Sequence[int],
    truncation: int = 20,
    m: int = 10_000,
    seed: int = rng.DEFAULT_SEED,
    degree_cap: int = branching.DEFAULT_DEGREE_CAP,
) -> list[dict]:
    """Condition number of ``Psi Psi^T / m`` for noised truncated features at each depth.

    The same seed is used at every depth so the curves share their random
    directions. A non-positive smallest eigenvalue gives an infinite ratio.
    """
    g = _to_pgf(base)
    if m < dataset.n:
        warnings.warn("m < n: the feature Gram matrix is singular", stacklevel=2)
    rows = []
    for depth in depths:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            spec = compressed_activation(g, int(depth), truncation, degree_cap)
        feats = hermite_features(dataset, spec, m, seed, noise=spec.tail_mass)
        eig = np.linalg.eigvalsh(feats.gram())
        lo, hi = float(eig[0]), float(eig[-1])
        rows.append(
            {
                "L": int(depth),
                "condition_number": hi / lo if lo > 0 else math.inf,
                "lambda_max": hi,
                "lambda_min": lo,
                "regularization_mass": spec.tail_mass,
            }
        )
    return rows
