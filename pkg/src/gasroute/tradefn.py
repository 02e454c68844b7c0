"""Pool invariant ("trade") functions and their gradients.

Four families are provided: geometric mean, weighted geometric mean,
weighted sum, and a weighted quasi-arithmetic mean built on the principal
branch of the Lambert W function.  Gradients are analytic; the quasi-
arithmetic family differentiates through W0 with the chain rule.

All evaluation functions broadcast over leading axes: ``z`` may be a single
vector of shape ``(n,)`` or a batch of shape ``(..., n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GEOMETRIC_MEAN = "geometric_mean"
WEIGHTED_GEOMETRIC_MEAN = "weighted_geometric_mean"
WEIGHTED_SUM = "weighted_sum"
WEIGHTED_QUASI_ARITHMETIC = "weighted_quasi_arithmetic"

KINDS = (
    GEOMETRIC_MEAN,
    WEIGHTED_GEOMETRIC_MEAN,
    WEIGHTED_SUM,
    WEIGHTED_QUASI_ARITHMETIC,
)

_BRANCH_POINT = -1.0 / math.e


def lambert_w0(s):
    """Principal branch of the Lambert W function, w*exp(w) = s.

    Accepts a scalar or ndarray with every entry >= -1/e (up to a small
    rounding allowance) and returns w >= -1 with residual
    |w*exp(w) - s| <= 1e-12 * max(1, |s|).  Uses Halley iteration from a
    branch-appropriate initial guess with a 50-iteration cap.
    """
    arr = np.asarray(s, dtype=float)
    if np.any(np.isnan(arr)):
        raise ValueError("lambert_w0: argument is NaN")
    if np.any(arr < _BRANCH_POINT - 1e-12):
        raise ValueError(
            f"lambert_w0: argument below the branch point -1/e: min={arr.min()!r}"
        )
    clipped = np.maximum(arr, _BRANCH_POINT)

    # Initial guess: ln(1+s) on the main range, a square-root expansion
    # around the branch point for negative arguments.
    with np.errstate(invalid="ignore"):
        series = np.sqrt(2.0 * math.e * (clipped - _BRANCH_POINT)) - 1.0
    w = np.where(clipped >= 0.0, np.log1p(np.maximum(clipped, 0.0)), series)

    for _ in range(50):
        c1 = np.exp(w)
        c2 = w * c1 - clipped
        w1 = w + 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            denom = c1 * w1 - (w + 2.0) * c2 / (2.0 * w1)
            dw = np.where(np.abs(w1) > 1e-300, c2 / denom, 0.0)
        dw = np.where(np.isfinite(dw), dw, 0.0)
        w = w - dw
        if np.all(np.abs(dw) <= 1e-16 * (2.0 + np.abs(w))):
            break
    if arr.ndim == 0:
        return float(w)
    return w


def _w0_prime_over_value(s):
    """Return W0'(s) = W0(s) / (s * (1 + W0(s))) with a series guard at s=0."""
    s_arr = np.asarray(s, dtype=float)
    w = np.asarray(lambert_w0(s_arr), dtype=float)
    small = np.abs(s_arr) < 1e-4
    # W0'(s) = 1 - 2s + 4.5s^2 + O(s^3) near the origin.
    series = 1.0 - 2.0 * s_arr + 4.5 * s_arr * s_arr
    with np.errstate(divide="ignore", invalid="ignore"):
        exact = w / (s_arr * (1.0 + w))
    return np.where(small, series, exact)


@dataclass(frozen=True)
class TradeFunction:
    """A pool invariant: kind, local dimension, and (where needed) weights.

    Use the classmethod constructors rather than building instances by hand;
    they validate weights length and positivity and the dimension bound.
    """

    kind: str
    dimension: int
    weights: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown trade function kind: {self.kind!r}")
        if self.dimension < 2:
            raise ValueError(f"dimension must be >= 2, got {self.dimension}")
        if self.kind in (WEIGHTED_GEOMETRIC_MEAN, WEIGHTED_SUM):
            if self.weights is None:
                raise ValueError(f"{self.kind} requires weights")
            if len(self.weights) != self.dimension:
                raise ValueError(
                    f"weights length {len(self.weights)} != dimension {self.dimension}"
                )
            if any(w <= 0.0 for w in self.weights):
                raise ValueError("weights must be strictly positive")
        elif self.weights is not None:
            raise ValueError(f"{self.kind} takes no weights")

    @classmethod
    def geometric_mean(cls, dimension: int) -> "TradeFunction":
        return cls(GEOMETRIC_MEAN, dimension)

    @classmethod
    def weighted_geometric_mean(cls, weights) -> "TradeFunction":
        weights = tuple(float(w) for w in weights)
        return cls(WEIGHTED_GEOMETRIC_MEAN, len(weights), weights)

    @classmethod
    def weighted_sum(cls, weights) -> "TradeFunction":
        weights = tuple(float(w) for w in weights)
        return cls(WEIGHTED_SUM, len(weights), weights)

    @classmethod
    def weighted_quasi_arithmetic(cls, dimension: int) -> "TradeFunction":
        return cls(WEIGHTED_QUASI_ARITHMETIC, dimension)

    # -- internal helpers ---------------------------------------------------

    def _exponents(self) -> np.ndarray:
        if self.kind == GEOMETRIC_MEAN:
            return np.full(self.dimension, 1.0 / self.dimension)
        w = np.asarray(self.weights, dtype=float)
        return w / w.sum()

    def _check_shape(self, z: np.ndarray, name: str) -> None:
        if z.shape[-1] != self.dimension:
            raise ValueError(
                f"{name}: expected last axis {self.dimension}, got {z.shape[-1]}"
            )

    # -- public surface -----------------------------------------------------

    def evaluate(self, z) -> float | np.ndarray:
        """Invariant value phi(z) for nonnegative z of shape (..., n)."""
        z = np.asarray(z, dtype=float)
        self._check_shape(z, "evaluate")
        if np.any(z < 0.0):
            raise ValueError("evaluate: negative reserve component")
        if self.kind == WEIGHTED_SUM:
            w = np.asarray(self.weights, dtype=float)
            out = z @ w
        elif self.kind in (GEOMETRIC_MEAN, WEIGHTED_GEOMETRIC_MEAN):
            e = self._exponents()
            positive = np.all(z > 0.0, axis=-1)
            with np.errstate(divide="ignore"):
                logs = np.where(z > 0.0, np.log(np.where(z > 0.0, z, 1.0)), 0.0)
            out = np.where(positive, np.exp(logs @ e), 0.0)
        else:
            zp = z + 1.0
            s = (2.0 / self.dimension) * np.sum(zp * zp * np.log(zp), axis=-1)
            out = np.exp(np.asarray(lambert_w0(s), dtype=float) / 2.0) - 1.0
        if out.ndim == 0:
            return float(out)
        return out

    def gradient(self, z) -> np.ndarray:
        """Gradient of phi at strictly positive z; shape matches z."""
        z = np.asarray(z, dtype=float)
        self._check_shape(z, "gradient")
        if np.any(z <= 0.0):
            raise ValueError("gradient: nonpositive reserve component")
        if self.kind == WEIGHTED_SUM:
            w = np.asarray(self.weights, dtype=float)
            return np.broadcast_to(w, z.shape).copy()
        if self.kind in (GEOMETRIC_MEAN, WEIGHTED_GEOMETRIC_MEAN):
            e = self._exponents()
            phi = np.exp(np.log(z) @ e)
            return e * phi[..., None] / z
        zp = z + 1.0
        s = (2.0 / self.dimension) * np.sum(zp * zp * np.log(zp), axis=-1)
        w0 = np.asarray(lambert_w0(s), dtype=float)
        dphi_ds = 0.5 * np.exp(w0 / 2.0) * _w0_prime_over_value(s)
        ds_dz = (2.0 / self.dimension) * zp * (2.0 * np.log(zp) + 1.0)
        return np.asarray(dphi_ds)[..., None] * ds_dz

    def invariant_residual(self, reserves, gamma: float, x, y) -> float | np.ndarray:
        """phi(R + gamma*y - x) - phi(R); zero means the trade is accepted."""
        reserves = np.asarray(reserves, dtype=float)
        post = reserves + gamma * np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        if np.any(post < 0.0):
            raise ValueError("invariant_residual: negative post-trade reserves")
        return self.evaluate(post) - self.evaluate(reserves)

    def updated_price(self, reserves, gamma: float, x, y) -> np.ndarray:
        """Gradient of phi at the post-trade reserves R + gamma*y - x."""
        reserves = np.asarray(reserves, dtype=float)
        post = reserves + gamma * np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        return self.gradient(post)
