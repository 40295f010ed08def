"""Multivariate Hawkes models, intensity evaluation and Ogata thinning.

Kernels are restricted to the non-negative families needed for the
synthetic experiments: zero, exponential ``alpha * exp(-beta t)``, box
``height * 1{lo <= t <= hi}`` and finite sums of these.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

__all__ = [
    "ZeroKernel",
    "ExponentialKernel",
    "BoxKernel",
    "SumKernel",
    "KernelSpec",
    "HawkesModel",
    "EventStream",
    "NonStationaryError",
    "EnvelopeError",
    "eval_kernel",
    "intensity_at",
    "simulate",
    "stationary_mean",
    "horizon_for_events",
    "kernel_from_dict",
    "kernel_to_dict",
    "model_from_dict",
    "model_to_dict",
    "load_model",
    "save_model",
    "read_events",
    "write_events",
]

# exp(-45) ~ 3e-20: beyond this many decay lengths a term is below float64
# resolution of any positive intensity, so the event leaves the active window.
_EXP_CUTOFF = 45.0


class NonStationaryError(ValueError):
    """Branching matrix has spectral radius >= 1 (or I - K is singular)."""


class EnvelopeError(RuntimeError):
    """The thinning upper bound was exceeded by the true intensity."""


@dataclass(frozen=True)
class ZeroKernel:
    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.zeros_like(t)

    def integral(self) -> float:
        return 0.0

    def sup_after(self, u):
        return np.zeros_like(np.asarray(u, dtype=float))

    @property
    def reach(self) -> float:
        return 0.0


@dataclass(frozen=True)
class ExponentialKernel:
    """``alpha * exp(-beta * t)`` for ``t >= 0``."""

    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"exponential kernel needs alpha >= 0, got {self.alpha}")
        if self.beta <= 0:
            raise ValueError(f"exponential kernel needs beta > 0, got {self.beta}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t >= 0, self.alpha * np.exp(-self.beta * np.maximum(t, 0.0)), 0.0)

    def integral(self) -> float:
        return self.alpha / self.beta

    def sup_after(self, u):
        # non-increasing on [0, inf), so the sup over [u, inf) is h(max(u, 0))
        u = np.asarray(u, dtype=float)
        return self.alpha * np.exp(-self.beta * np.maximum(u, 0.0))

    @property
    def reach(self) -> float:
        return 0.0 if self.alpha == 0 else _EXP_CUTOFF / self.beta


@dataclass(frozen=True)
class BoxKernel:
    """``height * 1{lo <= t <= hi}`` (closed on both ends)."""

    lo: float
    hi: float
    height: float

    def __post_init__(self):
        if not 0 <= self.lo < self.hi:
            raise ValueError(f"box kernel needs 0 <= lo < hi, got lo={self.lo}, hi={self.hi}")
        if self.height < 0:
            raise ValueError(f"box kernel needs height >= 0, got {self.height}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.where((t >= self.lo) & (t <= self.hi), self.height, 0.0)

    def integral(self) -> float:
        return self.height * (self.hi - self.lo)

    def sup_after(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(u <= self.hi, self.height, 0.0)

    @property
    def reach(self) -> float:
        return self.hi if self.height > 0 else 0.0


@dataclass(frozen=True)
class SumKernel:
    terms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    def __call__(self, t):
        out = np.zeros_like(np.asarray(t, dtype=float))
        for term in self.terms:
            out = out + term(t)
        return out

    def integral(self) -> float:
        return float(sum(term.integral() for term in self.terms))

    def sup_after(self, u):
        # sum of sups is an upper bound on the sup of the sum
        out = np.zeros_like(np.asarray(u, dtype=float))
        for term in self.terms:
            out = out + term.sup_after(u)
        return out

    @property
    def reach(self) -> float:
        return max((term.reach for term in self.terms), default=0.0)


KernelSpec = Union[ZeroKernel, ExponentialKernel, BoxKernel, SumKernel]


def eval_kernel(spec: KernelSpec, t):
    """Evaluate a kernel at ``t`` (scalar or array); zero for ``t < 0``."""
    out = spec(t)
    if np.ndim(out) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class HawkesModel:
    """Baseline rates ``baseline[i]`` and kernel matrix ``kernels[i][j]``.

    ``kernels[i][j]`` is the excitation that an event in dim ``j`` adds to the
    intensity of dim ``i``.
    """

    baseline: np.ndarray
    kernels: tuple

    def __post_init__(self):
        baseline = np.asarray(self.baseline, dtype=float).reshape(-1)
        kernels = tuple(tuple(row) for row in self.kernels)
        d = baseline.size
        if d == 0:
            raise ValueError("model needs at least one dimension")
        if np.any(baseline < 0) or not np.all(np.isfinite(baseline)):
            raise ValueError("baseline rates must be finite and non-negative")
        if len(kernels) != d or any(len(row) != d for row in kernels):
            raise ValueError(f"kernel matrix must be {d}x{d}")
        baseline.setflags(write=False)
        object.__setattr__(self, "baseline", baseline)
        object.__setattr__(self, "kernels", kernels)

    @property
    def dim(self) -> int:
        return self.baseline.size

    def branching_matrix(self) -> np.ndarray:
        """Closed-form integrals ``K[i, j] = int_0^inf h_ij(t) dt``."""
        d = self.dim
        return np.array([[self.kernels[i][j].integral() for j in range(d)] for i in range(d)])

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.branching_matrix()))))

    def check_stationary(self) -> None:
        rho = self.spectral_radius()
        if not rho < 1:
            raise NonStationaryError(f"spectral radius of branching matrix is {rho:.6g} >= 1")


@dataclass(frozen=True)
class EventStream:
    """Events on ``(0, horizon]`` as parallel ``dims`` / ``times`` arrays.

    Sorted by time, ties broken by dim.
    """

    horizon: float
    dims: np.ndarray
    times: np.ndarray
    dim: int | None = None

    def __post_init__(self):
        dims = np.asarray(self.dims, dtype=np.int64).reshape(-1)
        times = np.asarray(self.times, dtype=float).reshape(-1)
        if dims.shape != times.shape:
            raise ValueError("dims and times must have the same length")
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if times.size:
            if times.min() <= 0 or times.max() > self.horizon:
                raise ValueError("event times must lie in (0, horizon]")
            if dims.min() < 0:
                raise ValueError("dim indices must be non-negative")
        order = np.lexsort((dims, times))
        dims, times = dims[order], times[order]
        dim = self.dim
        if dim is None:
            dim = int(dims.max()) + 1 if dims.size else 1
        elif dims.size and dims.max() >= dim:
            raise ValueError(f"dim index {dims.max()} out of range for {dim} dims")
        dims.setflags(write=False)
        times.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "dim", dim)

    def __len__(self) -> int:
        return self.times.size

    @property
    def events(self) -> list[tuple[int, float]]:
        return list(zip(self.dims.tolist(), self.times.tolist()))

    def times_of(self, j: int) -> np.ndarray:
        return self.times[self.dims == j]

    def counts(self) -> np.ndarray:
        return np.bincount(self.dims, minlength=self.dim)


def intensity_at(model: HawkesModel, history: EventStream, t: float, m: int) -> float:
    """Conditional intensity of dim ``m`` at time ``t`` given ``history``.

    Only events strictly before ``t`` contribute.
    """
    if not 0 <= m < model.dim:
        raise IndexError(f"dim index {m} out of range for a {model.dim}-dim model")
    value = float(model.baseline[m])
    for j in range(model.dim):
        tj = history.times_of(j)
        tj = tj[tj < t]
        if tj.size:
            value += float(np.sum(model.kernels[m][j](t - tj)))
    return value


def stationary_mean(model: HawkesModel) -> np.ndarray:
    """Stationary rate vector ``(I - K)^{-1} eta``."""
    model.check_stationary()
    K = model.branching_matrix()
    try:
        return np.linalg.solve(np.eye(model.dim) - K, model.baseline)
    except np.linalg.LinAlgError as exc:
        raise NonStationaryError("I - K is singular") from exc


def horizon_for_events(model: HawkesModel, n_events: float) -> float:
    """Horizon whose expected total event count is ``n_events``."""
    total = float(stationary_mean(model).sum())
    if total <= 0:
        raise ValueError("model has zero stationary rate")
    return n_events / total


def simulate(model: HawkesModel, horizon: float, rng) -> EventStream:
    """Sample a path on ``(0, horizon]`` by Ogata's thinning.

    The envelope after time ``s`` is ``sum(eta) + sum_i sum_events
    sup_{u >= s - t_j} h_ij(u)``, which dominates the total intensity until
    the next accepted event. It is recomputed after every candidate.
    """
    model.check_stationary()
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    rng = np.random.default_rng(rng)
    d = model.dim
    eta = model.baseline
    eta_total = float(eta.sum())
    kernels = model.kernels
    reach = [max(kernels[i][j].reach for i in range(d)) for j in range(d)]
    # source dims whose kernels are all zero never need to be tracked
    live = [j for j in range(d) if reach[j] > 0]

    out_dims: list[int] = []
    out_times: list[float] = []
    active = {j: np.empty(0) for j in live}
    s = 0.0
    while True:
        lags = {}
        for j in live:
            tj = active[j]
            if tj.size and s - tj[0] > reach[j]:
                tj = tj[s - tj <= reach[j]]
                active[j] = tj
            lags[j] = s - tj
        bound = eta_total
        for j in live:
            if lags[j].size:
                for i in range(d):
                    bound += float(np.sum(kernels[i][j].sup_after(lags[j])))
        if bound <= 0:
            break
        s += rng.exponential(1.0 / bound)
        if s > horizon:
            break
        lam = eta.copy()
        for j in live:
            tj = active[j]
            if tj.size:
                u = s - tj
                for i in range(d):
                    lam[i] += float(np.sum(kernels[i][j](u)))
        total = float(lam.sum())
        if total > bound * (1 + 1e-9):
            raise EnvelopeError(f"intensity {total:.6g} exceeds thinning bound {bound:.6g} at t={s:.6g}")
        draw = rng.uniform() * bound
        if draw < total:
            m = int(np.searchsorted(np.cumsum(lam), draw, side="right"))
            m = min(m, d - 1)
            out_dims.append(m)
            out_times.append(s)
            if m in active:
                active[m] = np.append(active[m], s)
    return EventStream(horizon, np.array(out_dims, dtype=np.int64), np.array(out_times), dim=d)


# --- serialization -------------------------------------------------------

def kernel_from_dict(obj: dict) -> KernelSpec:
    kind = obj.get("kind")
    if kind == "zero":
        return ZeroKernel()
    if kind in ("exp", "exponential"):
        return ExponentialKernel(float(obj["alpha"]), float(obj["beta"]))
    if kind == "box":
        return BoxKernel(float(obj["lo"]), float(obj["hi"]), float(obj["height"]))
    if kind == "sum":
        return SumKernel(tuple(kernel_from_dict(term) for term in obj["terms"]))
    raise ValueError(f"unknown kernel kind {kind!r}")


def kernel_to_dict(spec: KernelSpec) -> dict:
    if isinstance(spec, ZeroKernel):
        return {"kind": "zero"}
    if isinstance(spec, ExponentialKernel):
        return {"kind": "exp", "alpha": spec.alpha, "beta": spec.beta}
    if isinstance(spec, BoxKernel):
        return {"kind": "box", "lo": spec.lo, "hi": spec.hi, "height": spec.height}
    if isinstance(spec, SumKernel):
        return {"kind": "sum", "terms": [kernel_to_dict(term) for term in spec.terms]}
    raise TypeError(f"not a kernel spec: {spec!r}")


def model_from_dict(obj: dict) -> HawkesModel:
    baseline = [float(x) for x in obj["baseline"]]
    kernels = tuple(tuple(kernel_from_dict(k) for k in row) for row in obj["kernels"])
    model = HawkesModel(np.array(baseline), kernels)
    if "dim" in obj and int(obj["dim"]) != model.dim:
        raise ValueError(f"dim field {obj['dim']} does not match baseline length {model.dim}")
    return model


def model_to_dict(model: HawkesModel) -> dict:
    return {
        "dim": model.dim,
        "baseline": model.baseline.tolist(),
        "kernels": [[kernel_to_dict(k) for k in row] for row in model.kernels],
    }


def load_model(path) -> HawkesModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def save_model(model: HawkesModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n")


def write_events(stream: EventStream, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dim", "time"])
        for j, t in zip(stream.dims.tolist(), stream.times.tolist()):
            writer.writerow([j, repr(t)])


def read_events(path, horizon: float | None = None, dim: int | None = None) -> EventStream:
    """Read a ``dim,time`` CSV. Horizon defaults to the last event time."""
    dims: list[int] = []
    times: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["dim", "time"]:
            raise ValueError(f"{path}: expected header 'dim,time'")
        for row in reader:
            dims.append(int(row["dim"]))
            times.append(float(row["time"]))
    if horizon is None:
        horizon = max(times) if times else 1.0
    return EventStream(float(horizon), np.array(dims, dtype=np.int64), np.array(times), dim=dim)

