"""Admissible coefficients a(u), c(x) and the Kirchhoff transform.

``a`` is piecewise linear on a knot grid and constant outside it, which keeps
the bounds ``alpha <= a <= 1/alpha`` and makes its primitive

    A(u) = int_0^u a(s) ds

exactly computable (piecewise quadratic). The inverse ``H = A^{-1}`` is
evaluated in closed form segment by segment.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

DEFAULT_SPAN = (-5.0, 5.0)


def _readonly(a):
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def _pl_primitive(x, a, u):
    """Integral from ``x[0]`` to ``u`` of the clamped piecewise-linear interpolant."""
    K = len(x) - 1
    if K == 0:
        return a[0] * (u - x[0])
    h = np.diff(x)
    P = np.concatenate([[0.0], np.cumsum(0.5 * (a[1:] + a[:-1]) * h)])
    slopes = np.diff(a) / h
    k = np.searchsorted(x, u, side="right") - 1
    out = np.empty_like(u)
    below = k < 0
    above = k >= K
    mid = ~(below | above)
    out[below] = a[0] * (u[below] - x[0])
    out[above] = P[K] + a[K] * (u[above] - x[K])
    km = k[mid]
    t = u[mid] - x[km]
    out[mid] = P[km] + a[km] * t + 0.5 * slopes[km] * t * t
    return out


@dataclass(frozen=True, eq=False)
class CoefficientA:
    """Piecewise-linear diffusion coefficient with clamped extension."""

    u_grid: np.ndarray
    a_values: np.ndarray
    alpha: float

    def __post_init__(self):
        u = _readonly(self.u_grid)
        a = _readonly(self.a_values)
        alpha = float(self.alpha)
        if u.ndim != 1 or a.shape != u.shape or len(u) < 1:
            raise ValueError("u_grid and a_values must be 1-D arrays of equal, non-zero length")
        if np.any(np.diff(u) <= 0):
            raise ValueError("u_grid must be strictly increasing")
        if not (alpha > 0):
            raise ValueError(f"alpha must be positive, got {alpha}")
        if not np.all(np.isfinite(a)) or np.any(a < alpha) or np.any(a > 1.0 / alpha):
            raise ValueError(f"a_values violate the admissibility bounds [{alpha}, {1 / alpha}]")
        object.__setattr__(self, "u_grid", u)
        object.__setattr__(self, "a_values", a)
        object.__setattr__(self, "alpha", alpha)
        # primitive measured from the first knot, P(u_k) at the knots
        if len(u) > 1:
            P = np.concatenate([[0.0], np.cumsum(0.5 * (a[1:] + a[:-1]) * np.diff(u))])
            slopes = np.diff(a) / np.diff(u)
        else:
            P = np.zeros(1)
            slopes = np.zeros(0)
        object.__setattr__(self, "_P", P)
        object.__setattr__(self, "_slopes", slopes)
        object.__setattr__(self, "_P0", float(self._primitive(np.array(0.0))))

    # -- construction helpers ----------------------------------------------

    @classmethod
    def constant(cls, a0: float, alpha: float | None = None, span=DEFAULT_SPAN) -> "CoefficientA":
        alpha = min(a0, 1.0 / a0) if alpha is None else alpha
        return cls(np.array(span, dtype=float), np.array([a0, a0]), alpha)

    @classmethod
    def from_function(cls, f: Callable, u_grid, alpha: float) -> "CoefficientA":
        u = np.asarray(u_grid, dtype=float)
        return cls(u, np.array([f(x) for x in u], dtype=float), alpha)

    def with_values(self, a_values) -> "CoefficientA":
        return CoefficientA(self.u_grid, a_values, self.alpha)

    # -- evaluation -----------------------------------------------------------

    def __call__(self, u):
        return np.interp(u, self.u_grid, self.a_values)

    def slope(self, u):
        """Piecewise-constant derivative of ``a`` (zero outside the grid)."""
        u = np.asarray(u, dtype=float)
        if len(self.u_grid) == 1:
            return np.zeros_like(u)
        k = np.searchsorted(self.u_grid, u, side="right") - 1
        inside = (k >= 0) & (k < len(self.u_grid) - 1)
        return np.where(inside, self._slopes[np.clip(k, 0, len(self._slopes) - 1)], 0.0)

    def _segment(self, u):
        # -1 below the grid, K-1 (last knot index) at or above the last knot
        return np.searchsorted(self.u_grid, u, side="right") - 1

    def _primitive(self, u):
        return _pl_primitive(self.u_grid, self.a_values, np.asarray(u, dtype=float))

    def A(self, u):
        """Kirchhoff transform ``A(u) = int_0^u a``."""
        u = np.asarray(u, dtype=float)
        return self._primitive(np.atleast_1d(u)).reshape(u.shape) - self._P0

    def H(self, U):
        """Inverse Kirchhoff transform; exact segmentwise inversion, no iteration."""
        U = np.asarray(U, dtype=float)
        target = np.atleast_1d(U) + self._P0
        x, a, P = self.u_grid, self.a_values, self._P
        K = len(x) - 1
        out = np.empty_like(target)
        below = target < 0.0
        above = target >= P[K]
        mid = ~(below | above)
        out[below] = x[0] + target[below] / a[0]
        out[above] = x[K] + (target[above] - P[K]) / a[K]
        if K > 0 and np.any(mid):
            k = np.clip(np.searchsorted(P, target[mid], side="right") - 1, 0, K - 1)
            R = target[mid] - P[k]
            ak, sk = a[k], self._slopes[k]
            disc = np.maximum(ak * ak + 2.0 * sk * R, 0.0)
            out[mid] = x[k] + 2.0 * R / (ak + np.sqrt(disc))
        return out.reshape(U.shape)

    def secant(self, u1, u2):
        """Mean of ``a`` over the interval between ``u1`` and ``u2``.

        Equals ``(A(u1) - A(u2)) / (u1 - u2)`` but stays well conditioned when the
        two arguments are close; for ``u1 == u2`` it is ``a(u1)``.
        """
        u1 = np.asarray(u1, dtype=float)
        u2 = np.asarray(u2, dtype=float)
        lo, hi = np.minimum(u1, u2), np.maximum(u1, u2)
        klo, khi = self._segment(lo), self._segment(hi)
        K = len(self.u_grid) - 1
        klo = np.minimum(klo, K)
        khi = np.minimum(khi, K)
        out = self(0.5 * (lo + hi))  # exact when both lie in one linear piece
        adjacent = khi == klo + 1
        if np.any(adjacent):
            xk = self.u_grid[khi[adjacent]]
            l, h = lo[adjacent], hi[adjacent]
            w1, w2 = xk - l, h - xk
            out[adjacent] = (w1 * self(0.5 * (l + xk)) + w2 * self(0.5 * (xk + h))) / (w1 + w2)
        far = khi > klo + 1
        if np.any(far):
            out[far] = (self._primitive(hi[far]) - self._primitive(lo[far])) / (hi[far] - lo[far])
        return out

    def basis_primitives(self, u):
        """Derivatives ``dA(u)/da_k`` for every knot value, shape ``u.shape + (K+1,)``.

        ``A`` is linear in the knot values, so these are the primitives (from 0) of
        the clamped hat functions of the knot grid.
        """
        u = np.atleast_1d(np.asarray(u, dtype=float))
        eye = np.eye(len(self.u_grid))
        zero = np.zeros(1)
        cols = [_pl_primitive(self.u_grid, e, u) - _pl_primitive(self.u_grid, e, zero) for e in eye]
        return np.stack(cols, axis=-1)

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "u_grid": self.u_grid.tolist(), "a_values": self.a_values.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "CoefficientA":
        try:
            return cls(np.asarray(data["u_grid"], float), np.asarray(data["a_values"], float), data["alpha"])
        except KeyError as exc:
            raise ValueError(f"coefficient a document is missing key {exc.args[0]!r}") from None


@dataclass(frozen=True, eq=False)
class CoefficientC:
    """Nodal absorption coefficient, linear on each triangle."""

    values: np.ndarray
    alpha: float

    def __post_init__(self):
        v = _readonly(self.values)
        alpha = float(self.alpha)
        if not (alpha > 0):
            raise ValueError(f"alpha must be positive, got {alpha}")
        if v.ndim != 1 or not np.all(np.isfinite(v)) or np.any(v < 0) or np.any(v > 1.0 / alpha):
            raise ValueError(f"c values must lie in [0, {1 / alpha}]")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def zeros(cls, n: int, alpha: float = 0.5) -> "CoefficientC":
        return cls(np.zeros(n), alpha)

    @classmethod
    def from_function(cls, mesh, f: Callable, alpha: float) -> "CoefficientC":
        x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
        return cls(np.broadcast_to(np.asarray(f(x, y), float), (mesh.n_vertices,)), alpha)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "c_values": self.values.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "CoefficientC":
        try:
            return cls(np.asarray(data["c_values"], float), data["alpha"])
        except KeyError as exc:
            raise ValueError(f"coefficient c document is missing key {exc.args[0]!r}") from None


def kirchhoff_A(coeffA: CoefficientA, u):
    return coeffA.A(u)


def kirchhoff_H(coeffA: CoefficientA, U):
    return coeffA.H(U)


def primitive_B(coeffA1: CoefficientA, coeffA2: CoefficientA, u_low, u):
    """``int_{u_low}^{u} (a1 - a2)``, written as a difference of primitives."""
    return (coeffA1.A(u) - coeffA1.A(u_low)) - (coeffA2.A(u) - coeffA2.A(u_low))


def load_json(path):
    data = json.loads(Path(path).read_text())
    return CoefficientC.from_dict(data) if "c_values" in data else CoefficientA.from_dict(data)
