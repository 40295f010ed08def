"""Least-squares objective, closed-form solution and constraint primitives.

The objective over ``U`` (shape ``d x (dp+1)``) is

    L(U) = 1/2 || U A - B ||_F^2,   A = Z Z^T / (n-p),  B = Y Z^T / (n-p)

which equals ``||U Z Z^T - Y Z^T||_F^2 / (2 (n-p)^2)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .discretize import DesignMatrices

__all__ = [
    "ConstraintSet",
    "SingularDesignError",
    "ConvergenceError",
    "DegenerateGradientWarning",
    "loss",
    "gradient",
    "cls_closed_form",
    "project_frobenius",
    "nuclear_norm",
    "top_singular_pair",
    "nuclear_lmo",
]

MAX_CONDITION = 1e12


class SingularDesignError(np.linalg.LinAlgError):
    def __init__(self, condition: float):
        super().__init__(f"normalised Gram matrix is singular (condition number {condition:.3g})")
        self.condition = condition


class ConvergenceError(RuntimeError):
    pass


class DegenerateGradientWarning(UserWarning):
    """The linear minimisation oracle got a zero matrix; every vertex is optimal."""


@dataclass(frozen=True)
class ConstraintSet:
    """A Frobenius or nuclear norm ball of the given radius around 0."""

    kind: str
    radius: float

    def __post_init__(self):
        if self.kind not in ("frobenius", "nuclear"):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")

    @classmethod
    def frobenius(cls, radius: float) -> "ConstraintSet":
        return cls("frobenius", radius)

    @classmethod
    def nuclear(cls, radius: float) -> "ConstraintSet":
        return cls("nuclear", radius)

    def norm(self, U) -> float:
        if self.kind == "frobenius":
            return float(np.linalg.norm(U))
        return nuclear_norm(U)

    def contains(self, U, tol: float = 1e-9) -> bool:
        return self.norm(U) <= self.radius + tol


def _check_shape(U: np.ndarray, design: DesignMatrices) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    if U.shape != design.param_shape:
        raise ValueError(f"parameter shape {U.shape} does not match design {design.param_shape}")
    return U


def loss(U, design: DesignMatrices) -> float:
    U = _check_shape(U, design)
    R = U @ design.gram - design.cross
    return 0.5 * float(np.sum(R * R))


def gradient(U, design: DesignMatrices) -> np.ndarray:
    """``(U A - B) A``; ``A`` is symmetric."""
    U = _check_shape(U, design)
    return (U @ design.gram - design.cross) @ design.gram


def cls_closed_form(design: DesignMatrices) -> np.ndarray:
    """Unconstrained minimiser ``B A^{-1}`` via an eigendecomposition of ``A``.

    Raises :class:`SingularDesignError` when the condition number of ``A``
    exceeds ``MAX_CONDITION``; no regularisation is applied.
    """
    w, V = np.linalg.eigh(design.gram)
    top = float(np.max(np.abs(w)))
    low = float(np.min(np.abs(w)))
    condition = np.inf if low == 0 else top / low
    if not condition <= MAX_CONDITION:
        raise SingularDesignError(condition)
    return ((design.cross @ V) / w) @ V.T


def project_frobenius(U, radius: float) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    norm = float(np.linalg.norm(U))
    if norm <= radius:
        return U.copy()
    out = U * (radius / norm)
    # rounding can leave the result an ulp outside; shrink until it is inside
    while np.linalg.norm(out) > radius:
        out *= 1.0 - 2.0**-52
    return out


def nuclear_norm(U) -> float:
    return float(np.sum(np.linalg.svd(np.asarray(U, dtype=float), compute_uv=False)))


def _fix_sign(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    nz = np.flatnonzero(u)
    if nz.size and u[nz[0]] < 0:
        return -u, -v
    return u, v


def top_singular_pair(G, tol: float = 1e-9, max_iter: int = 10_000, rng=None):
    """Leading singular triple ``(sigma, u, v)`` of ``G`` by power iteration on ``G^T G``.

    Stops once ``||G^T u - sigma v|| <= tol * sigma``. The sign is fixed so
    that the first nonzero entry of ``u`` is positive.
    """
    G = np.asarray(G, dtype=float)
    if G.ndim != 2:
        raise ValueError("expected a matrix")
    if not np.any(G):
        raise ValueError("top singular pair of a zero matrix is undefined")
    rng = np.random.default_rng(rng)
    v = rng.standard_normal(G.shape[1])
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        Gv = G @ v
        sigma = float(np.linalg.norm(Gv))
        if sigma == 0.0:
            # start orthogonal to the row space; restart
            v = rng.standard_normal(G.shape[1])
            v /= np.linalg.norm(v)
            continue
        u = Gv / sigma
        w = G.T @ u
        v_new = w / np.linalg.norm(w)
        sigma = float(u @ G @ v_new)
        if np.linalg.norm(w - sigma * v_new) <= tol * sigma and np.linalg.norm(G @ v_new - sigma * u) <= tol * sigma:
            u = G @ v_new
            u /= np.linalg.norm(u)
            u, v_new = _fix_sign(u, v_new)
            return sigma, u, v_new
        v = v_new
    raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations")


def nuclear_lmo(G, radius: float, tol: float = 1e-12, max_iter: int = 10_000, rng=None) -> np.ndarray:
    """Minimiser of ``<U, G>`` over ``||U||_* <= radius``: ``-radius * u1 v1^T``.

    The tolerance is tighter than ``top_singular_pair``'s default because the
    singular-vector error scales like ``tol * sigma1 / gap``. Falls back to a
    dense SVD when power iteration does not converge. A zero
    ``G`` yields the zero matrix and a :class:`DegenerateGradientWarning`.
    """
    G = np.asarray(G, dtype=float)
    if not np.any(G):
        warnings.warn("zero gradient passed to the nuclear-norm LMO", DegenerateGradientWarning, stacklevel=2)
        return np.zeros_like(G)
    try:
        _, u, v = top_singular_pair(G, tol=tol, max_iter=max_iter, rng=rng)
    except ConvergenceError:
        Us, _, Vt = np.linalg.svd(G, full_matrices=False)
        u, v = _fix_sign(Us[:, 0], Vt[0])
    return -radius * np.outer(u, v)
