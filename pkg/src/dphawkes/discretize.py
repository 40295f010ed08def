"""Bin-count sequences, lagged design matrices and neighbouring datasets."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .hawkes_sim import EventStream

__all__ = [
    "BinConfig",
    "BinSeries",
    "DesignMatrices",
    "bin_counts",
    "build_design",
    "perturb_neighbor",
    "distance",
    "estimate_R",
    "lag_for_support",
    "read_bins",
    "write_bins",
]

# slack for float round-off when a time or horizon sits on a bin edge
_EDGE_TOL = 1e-9


@dataclass(frozen=True)
class BinConfig:
    """Bin width ``delta``, observation horizon and autoregressive ``lag``."""

    delta: float
    horizon: float
    lag: int

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"bin width must be positive, got {self.delta}")
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if int(self.lag) != self.lag or self.lag < 1:
            raise ValueError(f"lag must be a positive integer, got {self.lag}")
        object.__setattr__(self, "lag", int(self.lag))
        if self.n_bins <= self.lag:
            raise ValueError(
                f"horizon {self.horizon} holds {self.n_bins} bins of width {self.delta}, "
                f"need more than lag={self.lag}"
            )

    @property
    def n_bins(self) -> int:
        return int(math.floor(self.horizon / self.delta + _EDGE_TOL))

    @property
    def support(self) -> float:
        return self.lag * self.delta


def lag_for_support(support: float, delta: float) -> int:
    """``ceil(support / delta)``, robust to round-off (4 / 0.01 -> 400)."""
    return max(1, int(math.ceil(support / delta - _EDGE_TOL)))


@dataclass(frozen=True)
class BinSeries:
    counts: np.ndarray
    config: BinConfig

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2:
            raise ValueError("counts must be a 2-d array (bins x dims)")
        if np.any(counts < 0):
            raise ValueError("bin counts must be non-negative")
        if counts.shape[0] != self.config.n_bins:
            raise ValueError(f"expected {self.config.n_bins} bins, got {counts.shape[0]}")
        counts = counts.astype(np.uint32)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def dim(self) -> int:
        return self.counts.shape[1]

    @property
    def n_bins(self) -> int:
        return self.counts.shape[0]


@dataclass(frozen=True)
class DesignMatrices:
    """Lagged regression matrices and their normalised products.

    ``Z`` and ``Y`` are kept sparse (CSR); at small bin widths almost every
    bin is empty and the dense ``Z`` would not fit in memory. ``gram`` and
    ``cross`` are dense.
    """

    Z: sp.csr_matrix
    Y: sp.csr_matrix
    gram: np.ndarray
    cross: np.ndarray
    lag: int
    dim: int

    @property
    def n_samples(self) -> int:
        return self.Z.shape[1]

    @property
    def n_params(self) -> int:
        return self.dim * self.lag + 1

    @property
    def param_shape(self) -> tuple[int, int]:
        return (self.dim, self.n_params)


def bin_counts(stream: EventStream, config: BinConfig) -> BinSeries:
    """Count events of each dim in ``((k-1) delta, k delta]``, k = 1..n.

    Events after ``n * delta`` are dropped.
    """
    n, delta = config.n_bins, config.delta
    if stream.horizon < n * delta * (1 - _EDGE_TOL):
        raise ValueError(f"stream horizon {stream.horizon} shorter than {n} bins of width {delta}")
    times = stream.times
    k = np.ceil(times / delta).astype(np.int64)
    # undo round-off that pushes t = k*delta into bin k+1
    k -= (k - 1) * delta >= times
    keep = (k >= 1) & (k <= n)
    counts = np.zeros((n, stream.dim), dtype=np.uint32)
    np.add.at(counts, (k[keep] - 1, stream.dims[keep]), 1)
    return BinSeries(counts, config)


def build_design(bins: BinSeries) -> DesignMatrices:
    """Build ``Z``, ``Y`` and ``A = Z Z^T / (n-p)``, ``B = Y Z^T / (n-p)``.

    Column ``t`` of ``Z`` stacks ``X_{p+t-1}, ..., X_t`` (descending lag, 1-based)
    followed by a constant 1; column ``t`` of ``Y`` is ``X_{p+t}``.
    """
    p, n = bins.config.lag, bins.n_bins
    if n <= p:
        raise ValueError(f"need more than lag={p} bins, got {n}")
    X = sp.csr_matrix(bins.counts.astype(np.float64))
    m = n - p
    blocks = [X[p - 1 - lag : n - 1 - lag] for lag in range(p)]
    blocks.append(sp.csr_matrix(np.ones((m, 1))))
    Zt = sp.hstack(blocks, format="csr")
    Yt = X[p:n]
    gram = np.asarray((Zt.T @ Zt).todense()) / m
    cross = np.asarray((Yt.T @ Zt).todense()) / m
    # exact symmetry; sparse accumulation order can differ across the diagonal
    gram = 0.5 * (gram + gram.T)
    return DesignMatrices(
        Z=Zt.T.tocsr(), Y=Yt.T.tocsr(), gram=gram, cross=cross, lag=p, dim=bins.dim
    )


def perturb_neighbor(bins: BinSeries, bin: int, dim: int, sign: int) -> BinSeries:
    """Return a neighbouring series with one count moved by ``sign`` (+1/-1)."""
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign}")
    counts = bins.counts.astype(np.int64)
    counts[bin, dim] += sign
    if counts[bin, dim] < 0:
        raise ValueError(f"cannot decrement empty bin ({bin}, {dim})")
    return BinSeries(counts, bins.config)


def distance(a: BinSeries, b: BinSeries) -> int:
    """Sum of entrywise absolute differences between two count series."""
    if a.counts.shape != b.counts.shape:
        raise ValueError(f"shape mismatch: {a.counts.shape} vs {b.counts.shape}")
    return int(np.abs(a.counts.astype(np.int64) - b.counts.astype(np.int64)).sum())


def estimate_R(design: DesignMatrices) -> float:
    """Smallest data-scale constant for this dataset: ``max(||A||_F^2, ||B||_F^2)``.

    This depends on the data. Calibrating privacy noise with it is not
    private; use a configured bound for that.
    """
    return float(max(np.sum(design.gram**2), np.sum(design.cross**2)))


def write_bins(bins: BinSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j}" for j in range(bins.dim)])
        writer.writerows(bins.counts.tolist())


def read_bins(path, delta: float, lag: int) -> BinSeries:
    """Read a count CSV (optional header row). The horizon is ``n * delta``."""
    rows: list[list[int]] = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                rows.append([int(x) for x in row])
            except ValueError:
                if i == 0:
                    continue
                raise
    counts = np.array(rows, dtype=np.int64)
    if counts.ndim != 2 or counts.size == 0:
        raise ValueError(f"{path}: no count rows")
    config = BinConfig(delta, counts.shape[0] * delta, lag)
    return BinSeries(counts, config)
