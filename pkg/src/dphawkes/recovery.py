"""Turning a fitted parameter matrix back into a baseline and kernel grid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hawkes_sim import EventStream, HawkesModel

__all__ = [
    "KernelEstimate",
    "rescale",
    "stack",
    "eval_estimate",
    "discretize_truth",
    "relative_error",
    "reconstruct_intensity",
]


@dataclass(frozen=True)
class KernelEstimate:
    """Kernel values on the grid ``delta, 2 delta, ..., p delta`` plus baseline.

    ``blocks[k][i, j]`` estimates ``h_ij((k+1) * delta)``.
    """

    blocks: np.ndarray
    eta_hat: np.ndarray
    delta_bin: float
    interpolation: str = "step"

    def __post_init__(self):
        blocks = np.asarray(self.blocks, dtype=float)
        eta = np.asarray(self.eta_hat, dtype=float).reshape(-1)
        if blocks.ndim != 3 or blocks.shape[1] != blocks.shape[2] or blocks.shape[1] != eta.size:
            raise ValueError(f"blocks must be p x d x d with d={eta.size}, got {blocks.shape}")
        if self.interpolation not in ("step", "linear"):
            raise ValueError(f"unknown interpolation {self.interpolation!r}")
        if not self.delta_bin > 0:
            raise ValueError("delta_bin must be positive")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "eta_hat", eta)

    @property
    def lag(self) -> int:
        return self.blocks.shape[0]

    @property
    def dim(self) -> int:
        return self.eta_hat.size

    @property
    def grid(self) -> np.ndarray:
        return self.delta_bin * np.arange(1, self.lag + 1)


def rescale(theta, delta_bin: float, interpolation: str = "step") -> KernelEstimate:
    """Split ``theta / delta`` into ``[H_1, ..., H_p, eta]``."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 2 or (theta.shape[1] - 1) % theta.shape[0] != 0 or theta.shape[1] < 2:
        raise ValueError(f"parameter matrix must have shape d x (dp+1), got {theta.shape}")
    d = theta.shape[0]
    p = (theta.shape[1] - 1) // d
    H = theta / delta_bin
    blocks = H[:, :-1].reshape(d, p, d).transpose(1, 0, 2)
    return KernelEstimate(blocks, H[:, -1], delta_bin, interpolation)


def stack(est: KernelEstimate) -> np.ndarray:
    """The ``d x (dp+1)`` matrix ``[H_1, ..., H_p, eta]`` (no delta factor)."""
    return np.hstack([*est.blocks, est.eta_hat[:, None]])


def _grid_index(t: float, delta: float) -> int:
    # ceil(t / delta) with bin edges landing in the left bin
    k = math.ceil(t / delta)
    if (k - 1) * delta >= t:
        k -= 1
    return k


def eval_estimate(est: KernelEstimate, i: int, j: int, t: float) -> float:
    """Interpolated kernel estimate ``h_ij(t)`` for ``0 < t <= p delta``."""
    p, delta = est.lag, est.delta_bin
    if not 0 < t <= p * delta * (1 + 1e-12):
        raise ValueError(f"t={t} outside (0, {p * delta}]")
    k = min(max(_grid_index(t, delta), 1), p)
    if est.interpolation == "step" or k == 1:
        # linear mode is held constant on (0, delta]
        return float(est.blocks[k - 1, i, j])
    w = (t - (k - 1) * delta) / delta
    return float((1 - w) * est.blocks[k - 2, i, j] + w * est.blocks[k - 1, i, j])


def discretize_truth(model: HawkesModel, delta_bin: float, p: int, interpolation: str = "step") -> KernelEstimate:
    """Sample each true kernel at ``k * delta``, k = 1..p."""
    grid = delta_bin * np.arange(1, p + 1)
    d = model.dim
    blocks = np.empty((p, d, d))
    for i in range(d):
        for j in range(d):
            blocks[:, i, j] = model.kernels[i][j](grid)
    return KernelEstimate(blocks, model.baseline.copy(), delta_bin, interpolation)


def relative_error(est: KernelEstimate, truth: KernelEstimate) -> float:
    """``||H_hat - H_true||_F / (d (dp+1) ||H_true||_F)`` on stacked matrices."""
    a, b = stack(est), stack(truth)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    denom = np.linalg.norm(b)
    if denom == 0:
        raise ValueError("ground truth has zero norm")
    return float(np.linalg.norm(a - b) / (b.size * denom))


def reconstruct_intensity(est: KernelEstimate, history: EventStream, t: float, m: int) -> float:
    """Intensity of dim ``m`` at ``t`` under the estimate, floored at zero.

    Events further back than ``p delta`` contribute nothing.
    """
    d = est.dim
    if not 0 <= m < d:
        raise IndexError(f"dim index {m} out of range for {d} dims")
    reach = est.lag * est.delta_bin
    value = float(est.eta_hat[m])
    lags = t - history.times
    keep = (lags > 0) & (lags <= reach * (1 + 1e-12))
    for j, u in zip(history.dims[keep].tolist(), lags[keep].tolist()):
        value += eval_estimate(est, m, j, min(u, reach))
    return max(value, 0.0)
