"""Gaussian-perturbed projected gradient descent and conditional gradient.

Noise calibration follows the strong-composition formulas

    PGD:  sigma^2 =   8 rho^2 R^2 K log^2(K / delta) / eps^2   (rho = Delta B)
    CG:   sigma^2 = 128 rho^2 R^2 K log^2(K / delta) / eps^2   (rho = Delta r)

where ``rho`` is the radius of the constraint ball on ``U`` and ``R`` bounds
the squared Frobenius norms of the normalised design products.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .discretize import DesignMatrices
from .estimator import ConstraintSet, gradient, loss, nuclear_lmo, project_frobenius

__all__ = [
    "PrivacyBudget",
    "NoisePlan",
    "OptimizerReport",
    "UtilityBound",
    "calibrate_pgd",
    "calibrate_cg",
    "epsilon_of_sigma",
    "pgd_step",
    "dp_pgd",
    "dp_cg",
    "curvature_bound",
    "gaussian_width_bound",
    "utility_bound_pgd",
    "utility_bound_cg",
]

_CALIBRATION_CONSTANT = {"pgd_theorem1": 8.0, "cg_theorem3": 128.0}
_SOURCE_ALIASES = {"pgd": "pgd_theorem1", "cg": "cg_theorem3"}


def _source(name: str) -> str:
    name = _SOURCE_ALIASES.get(name, name)
    if name not in _CALIBRATION_CONSTANT:
        raise ValueError(f"no calibration formula for source {name!r}")
    return name


def _check_accounting_inputs(K: int, delta: float, radius: float, R: float) -> None:
    if int(K) != K or K < 1:
        raise ValueError(f"iteration count must be a positive integer, got {K}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    if not R > 0:
        raise ValueError(f"R must be positive, got {R}")


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float
    iterations: int

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ValueError(f"iterations must be a positive integer, got {self.iterations}")
        if self.delta >= 1.0 / self.iterations:
            warnings.warn(
                f"delta={self.delta} is not below 1/K={1.0 / self.iterations:.3g}",
                stacklevel=2,
            )


@dataclass(frozen=True)
class NoisePlan:
    """Per-iteration noise variance plus the inputs it was calibrated from.

    ``R`` also sets the PGD step size, so it must be present for any plan
    handed to :func:`dp_pgd`.
    """

    sigma2: float
    source: str = "manual"
    R: float | None = None
    radius: float | None = None
    epsilon: float | None = None
    delta: float | None = None
    iterations: int | None = None

    def __post_init__(self):
        if not self.sigma2 >= 0:
            raise ValueError(f"sigma2 must be non-negative, got {self.sigma2}")

    @classmethod
    def manual(cls, sigma2: float, R: float | None = None, **kwargs) -> "NoisePlan":
        return cls(sigma2=float(sigma2), source="manual", R=R, **kwargs)


@dataclass(frozen=True)
class OptimizerReport:
    iterations: int
    losses: np.ndarray
    final_loss: float
    sigma2: float
    epsilon: float | None
    delta: float | None
    schedule: str
    seed: int | None
    wall_clock: float = field(default=0.0, compare=False)


@dataclass(frozen=True)
class UtilityBound:
    """Rate expression with unit constant; for trend checks only."""

    value: float
    curvature: float | None = None
    gaussian_width: float | None = None
    lipschitz: float | None = None


def _calibrate(budget: PrivacyBudget, radius: float, R: float, source: str) -> NoisePlan:
    K, delta, eps = budget.iterations, budget.delta, budget.epsilon
    _check_accounting_inputs(K, delta, radius, R)
    c = _CALIBRATION_CONSTANT[source]
    sigma2 = c * radius**2 * R**2 * K * math.log(K / delta) ** 2 / eps**2
    return NoisePlan(sigma2, source, R=R, radius=radius, epsilon=eps, delta=delta, iterations=K)


def calibrate_pgd(budget: PrivacyBudget, rho_F: float, R: float) -> NoisePlan:
    """Noise variance making K-step noisy PGD ``(eps, delta)``-private."""
    return _calibrate(budget, rho_F, R, "pgd_theorem1")


def calibrate_cg(budget: PrivacyBudget, rho_star: float, R: float) -> NoisePlan:
    """Noise variance making K-step noisy conditional gradient private (16x PGD)."""
    return _calibrate(budget, rho_star, R, "cg_theorem3")


def epsilon_of_sigma(sigma2: float, K: int, delta: float, radius: float, R: float, source: str) -> float:
    """Invert the calibration formula of ``source``; ``inf`` when ``sigma2 == 0``."""
    source = _source(source)
    _check_accounting_inputs(K, delta, radius, R)
    if sigma2 < 0:
        raise ValueError(f"sigma2 must be non-negative, got {sigma2}")
    if sigma2 == 0:
        return math.inf
    c = _CALIBRATION_CONSTANT[source]
    return radius * R * math.sqrt(c * K) * math.log(K / delta) / math.sqrt(sigma2)


def pgd_step(k: int, rho_F: float, R: float, d: int, p: int, sigma2: float, constant: str = "appendix") -> float:
    """Step size ``rho / sqrt(k (L^2 + d (dp+1) sigma^2))``.

    ``constant="appendix"`` uses ``L^2 = 4 rho^2 R^2``; ``"theorem"`` uses
    ``(4 rho)^2 R^2``.
    """
    if k < 1:
        raise ValueError(f"iteration index starts at 1, got {k}")
    if constant == "appendix":
        lip2 = 4.0 * rho_F**2 * R**2
    elif constant == "theorem":
        lip2 = 16.0 * rho_F**2 * R**2
    else:
        raise ValueError(f"unknown step constant {constant!r}")
    return rho_F / math.sqrt(k * (lip2 + d * (d * p + 1) * sigma2))


def _setup(design: DesignMatrices, ball: ConstraintSet, kind: str, K: int, U0, rng):
    if ball.kind != kind:
        raise ValueError(f"expected a {kind} ball, got {ball.kind}")
    if int(K) != K or K < 1:
        raise ValueError(f"K must be a positive integer, got {K}")
    U = np.zeros(design.param_shape) if U0 is None else np.array(U0, dtype=float)
    if U.shape != design.param_shape:
        raise ValueError(f"U0 shape {U.shape} does not match {design.param_shape}")
    if not ball.contains(U, tol=1e-12 * ball.radius):
        raise ValueError(f"U0 lies outside the {kind} ball of radius {ball.radius}")
    seed = int(rng) if isinstance(rng, (int, np.integer)) else None
    return U, np.random.default_rng(rng), seed


def dp_pgd(
    design: DesignMatrices,
    ball: ConstraintSet,
    plan: NoisePlan,
    K: int,
    U0=None,
    rng=None,
    step_constant: str = "appendix",
    callback=None,
):
    """Run K noisy projected gradient steps on the Frobenius ball.

    ``U_{k+1} = Proj(U_k - eta_k (grad L(U_k) + zeta_k))`` for k = 1..K with
    ``zeta_k`` i.i.d. ``N(0, sigma^2)`` per entry. ``callback(k, U)`` sees every
    iterate. The loss trajectory in the report is computed from the raw data
    and is not itself private.
    """
    if plan.R is None:
        raise ValueError("PGD needs the data-scale bound R in the noise plan (sets the step size)")
    U, gen, seed = _setup(design, ball, "frobenius", K, U0, rng)
    d, p = design.dim, design.lag
    sigma = math.sqrt(plan.sigma2)
    losses = np.empty(K)
    start = time.perf_counter()
    for k in range(1, K + 1):
        g = gradient(U, design)
        if sigma > 0:
            g = g + gen.normal(0.0, sigma, size=g.shape)
        step = pgd_step(k, ball.radius, plan.R, d, p, plan.sigma2, step_constant)
        U = project_frobenius(U - step * g, ball.radius)
        losses[k - 1] = loss(U, design)
        if callback is not None:
            callback(k, U)
    report = OptimizerReport(
        iterations=K,
        losses=losses,
        final_loss=float(losses[-1]),
        sigma2=plan.sigma2,
        epsilon=plan.epsilon,
        delta=plan.delta,
        schedule=f"eta_k = rho / sqrt(k (L^2 + d(dp+1) sigma^2)), L^2 from {step_constant}",
        seed=seed,
        wall_clock=time.perf_counter() - start,
    )
    return U, report


def dp_cg(
    design: DesignMatrices,
    ball: ConstraintSet,
    plan: NoisePlan,
    K: int,
    U0=None,
    rng=None,
    schedule: str = "fixed",
    callback=None,
):
    """Run K noisy conditional-gradient steps on the nuclear ball.

    ``U_{k+1} = (1 - mu) U_k + mu * LMO(grad L(U_k) + zeta_k)``. With
    ``schedule="fixed"`` mu is ``1 / (K + 2)`` at every step; ``"classical"``
    uses ``2 / (k + 2)``, k = 0..K-1.
    """
    if schedule not in ("fixed", "classical"):
        raise ValueError(f"unknown schedule {schedule!r}")
    U, gen, seed = _setup(design, ball, "nuclear", K, U0, rng)
    sigma = math.sqrt(plan.sigma2)
    losses = np.empty(K)
    start = time.perf_counter()
    for k in range(K):
        g = gradient(U, design)
        if sigma > 0:
            g = g + gen.normal(0.0, sigma, size=g.shape)
        vertex = nuclear_lmo(g, ball.radius, rng=gen)
        mu = 1.0 / (K + 2) if schedule == "fixed" else 2.0 / (k + 2)
        U = (1.0 - mu) * U + mu * vertex
        losses[k] = loss(U, design)
        if callback is not None:
            callback(k + 1, U)
    desc = "mu = 1/(K+2)" if schedule == "fixed" else "mu_k = 2/(k+2)"
    report = OptimizerReport(
        iterations=K,
        losses=losses,
        final_loss=float(losses[-1]),
        sigma2=plan.sigma2,
        epsilon=plan.epsilon,
        delta=plan.delta,
        schedule=desc,
        seed=seed,
        wall_clock=time.perf_counter() - start,
    )
    return U, report


def curvature_bound(rho_star: float, R: float) -> float:
    """Upper bound ``4 rho^2 R`` on the curvature constant over the nuclear ball."""
    return 4.0 * rho_star**2 * R


def gaussian_width_bound(d: int, p: int, rho_star: float) -> float:
    """``rho * 2 (sqrt(dp+1) + sqrt(d))``: width of a d x (dp+1) nuclear ball."""
    return rho_star * 2.0 * (math.sqrt(d * p + 1) + math.sqrt(d))


def utility_bound_pgd(rho_F: float, d: int, p: int, epsilon: float, delta: float, R: float | None = None) -> UtilityBound:
    value = rho_F**2 * math.sqrt(d * (d * p + 1)) * math.log(1.0 / delta) / epsilon
    lipschitz = None if R is None else 2.0 * rho_F * R
    return UtilityBound(value=value, lipschitz=lipschitz)


def utility_bound_cg(R: float, rho_star: float, d: int, p: int, epsilon: float, delta: float) -> UtilityBound:
    value = R * rho_star ** (4.0 / 3.0) * (d * p + 1) ** (1.0 / 3.0) * math.log(1.0 / delta) / epsilon ** (2.0 / 3.0)
    return UtilityBound(
        value=value,
        curvature=curvature_bound(rho_star, R),
        gaussian_width=gaussian_width_bound(d, p, rho_star),
        lipschitz=2.0 * rho_star * R,
    )
