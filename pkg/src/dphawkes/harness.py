"""Seeded simulate -> bin -> fit -> recover sweeps with CSV output.

Randomness is derived from one master seed with ``numpy.random.SeedSequence``:
replicate ``r`` simulates its event stream from spawn key ``(0, r)`` and the
grid cell ``(a, b, r)`` (bin-width index, noise index, replicate) draws its
optimiser noise from spawn key ``(1, a, b, r)``. All cells of a replicate
therefore see the same events, and reruns are byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .discretize import BinConfig, DesignMatrices, bin_counts, build_design, estimate_R, lag_for_support
from .estimator import ConstraintSet, cls_closed_form, loss
from .hawkes_sim import (
    BoxKernel,
    EventStream,
    ExponentialKernel,
    HawkesModel,
    ZeroKernel,
    horizon_for_events,
    load_model,
    model_from_dict,
    simulate,
)
from .optimizers import NoisePlan, dp_cg, dp_pgd, epsilon_of_sigma
from .recovery import discretize_truth, eval_estimate, relative_error, rescale

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ResultRow",
    "builtin_models",
    "resolve_model",
    "fit",
    "run_sweep",
    "kernel_overlay",
    "write_rows",
    "RESULT_COLUMNS",
    "OUTPUT_DIR_ENV",
]

OUTPUT_DIR_ENV = "DPHAWKES_OUTPUT_DIR"

RESULT_COLUMNS = [
    "replicate",
    "data_seed",
    "noise_seed",
    "delta_bin",
    "lag",
    "sigma2",
    "epsilon",
    "method",
    "relative_error",
    "final_loss",
    "empirical_R",
    "status",
]


class ConfigError(ValueError):
    pass


def builtin_models() -> dict[str, HawkesModel]:
    """The 2-variate and 4-variate synthetic models of the experiments."""
    z = ZeroKernel()
    paper_2d = HawkesModel(
        np.array([0.25, 0.125]),
        (
            (z, BoxKernel(1.0, 3.0, 0.125)),
            (BoxKernel(2.0, 4.0, 0.2), ExponentialKernel(0.25, 1.0)),
        ),
    )
    h12, h21, h22 = BoxKernel(1.0, 3.0, 0.125), BoxKernel(2.0, 4.0, 0.25), ExponentialKernel(0.2, 1.0)
    # H = [[H0, H0^T], [H0, H0^T]] with H0 = [[0, h12], [h21, h22]]
    top = ((z, h12, z, h21), (h21, h22, h12, h22))
    paper_4d = HawkesModel(np.full(4, 0.125), top + top)
    return {"paper-2d": paper_2d, "paper-4d": paper_4d}


def resolve_model(ref: Any, base_dir: Path | None = None) -> HawkesModel:
    """A builtin name, an inline model dict, or a path to a model JSON file."""
    if isinstance(ref, HawkesModel):
        return ref
    if isinstance(ref, dict):
        return model_from_dict(ref)
    models = builtin_models()
    if ref in models:
        return models[ref]
    path = Path(ref)
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    if not path.exists():
        raise ConfigError(f"unknown model {ref!r}: not a builtin ({', '.join(models)}) or a file")
    return load_model(path)


@dataclass
class ExperimentConfig:
    """One factorial sweep: bin widths x noise levels x replicates.

    ``radius`` is on the kernel scale (B for PGD, r for CG); the ball on the
    optimisation variable has radius ``delta_bin * radius``. ``R`` is the
    data-scale bound used for step sizes and privacy accounting.
    """

    model: Any
    delta_bins: list[float]
    noise_grid: list[float]
    method: str = "pgd"
    target_events: float | None = None
    horizon: float | None = None
    lag: int | None = None
    support: float | None = None
    radius: float = 0.2
    iterations: int = 1000
    replicates: int = 10
    master_seed: int = 0
    R: float = 1.0
    privacy_delta: float = 1e-5
    step_constant: str = "appendix"
    cg_schedule: str = "fixed"
    interpolation: str = "step"
    output_dir: str | None = None

    def __post_init__(self):
        self.delta_bins = [float(x) for x in self.delta_bins]
        self.noise_grid = [float(x) for x in self.noise_grid]
        if self.method not in ("pgd", "cg", "cls"):
            raise ConfigError(f"method must be pgd, cg or cls, got {self.method!r}")
        if not self.delta_bins or any(not x > 0 for x in self.delta_bins):
            raise ConfigError("delta_bins must be a non-empty list of positive widths")
        if not self.noise_grid or any(not x >= 0 for x in self.noise_grid):
            raise ConfigError("noise_grid must be a non-empty list of non-negative variances")
        if (self.target_events is None) == (self.horizon is None):
            raise ConfigError("give exactly one of target_events and horizon")
        if (self.lag is None) == (self.support is None):
            raise ConfigError("give exactly one of lag and support")
        if int(self.replicates) != self.replicates or self.replicates < 1:
            raise ConfigError("replicates must be a positive integer")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ConfigError("iterations must be a positive integer")
        if not self.radius > 0 or not self.R > 0:
            raise ConfigError("radius and R must be positive")
        if not 0 < self.privacy_delta < 1:
            raise ConfigError("privacy_delta must lie in (0, 1)")
        if self.step_constant not in ("appendix", "theorem"):
            raise ConfigError("step_constant must be 'appendix' or 'theorem'")
        if self.cg_schedule not in ("fixed", "classical"):
            raise ConfigError("cg_schedule must be 'fixed' or 'classical'")
        if self.interpolation not in ("step", "linear"):
            raise ConfigError("interpolation must be 'step' or 'linear'")

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            obj = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if isinstance(obj.get("model"), str) and obj["model"] not in builtin_models():
            obj["model"] = str((path.parent / obj["model"]).resolve())
        return cls.from_dict(obj)

    def to_dict(self) -> dict:
        return asdict(self)

    def lag_for(self, delta_bin: float) -> int:
        if self.lag is not None:
            return int(self.lag)
        return lag_for_support(self.support, delta_bin)

    def resolve_horizon(self, model: HawkesModel) -> float:
        if self.horizon is not None:
            return float(self.horizon)
        return horizon_for_events(model, self.target_events)


@dataclass
class ResultRow:
    replicate: int
    data_seed: int
    noise_seed: int
    delta_bin: float
    lag: int
    sigma2: float
    epsilon: float
    method: str
    relative_error: float = math.nan
    final_loss: float = math.nan
    empirical_R: float = math.nan
    status: str = "ok"
    wall_clock: float = field(default=0.0, compare=False)


def _seed(master: int, *key: int) -> int:
    ss = np.random.SeedSequence(master, spawn_key=key)
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def fit(
    design: DesignMatrices,
    method: str,
    rho: float,
    plan: NoisePlan,
    iterations: int,
    rng=None,
    step_constant: str = "appendix",
    cg_schedule: str = "fixed",
):
    """Fit ``U`` with one of the three methods; returns ``(U, final_loss)``."""
    if method == "cls":
        if plan.sigma2 != 0:
            raise ValueError("the closed-form estimator is non-private; sigma2 must be 0")
        U = cls_closed_form(design)
        return U, loss(U, design)
    if method == "pgd":
        U, report = dp_pgd(design, ConstraintSet.frobenius(rho), plan, iterations, rng=rng, step_constant=step_constant)
    elif method == "cg":
        U, report = dp_cg(design, ConstraintSet.nuclear(rho), plan, iterations, rng=rng, schedule=cg_schedule)
    else:
        raise ValueError(f"unknown method {method!r}")
    return U, report.final_loss


def _epsilon(config: ExperimentConfig, sigma2: float, rho: float) -> float:
    if config.method == "cls" or sigma2 == 0:
        return math.inf
    return epsilon_of_sigma(sigma2, config.iterations, config.privacy_delta, rho, config.R, config.method)


def _fmt(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".17g")
    return str(value)


def _output_dir(config: ExperimentConfig) -> Path | None:
    override = os.environ.get(OUTPUT_DIR_ENV)
    if override:
        return Path(override)
    return Path(config.output_dir) if config.output_dir else None


class _RowWriter:
    def __init__(self, directory: Path | None):
        self._fh = self._timing = None
        if directory is None:
            return
        directory.mkdir(parents=True, exist_ok=True)
        self._fh = open(directory / "results.csv", "w", newline="")
        self._timing = open(directory / "timings.csv", "w", newline="")
        self._fh.write(",".join(RESULT_COLUMNS) + "\n")
        self._timing.write("replicate,delta_bin,sigma2,wall_clock\n")

    def write(self, row: ResultRow) -> None:
        if self._fh is None:
            return
        values = asdict(row)
        self._fh.write(",".join(_fmt(values[c]) for c in RESULT_COLUMNS) + "\n")
        self._fh.flush()
        self._timing.write(f"{row.replicate},{_fmt(row.delta_bin)},{_fmt(row.sigma2)},{row.wall_clock:.6f}\n")

    def close(self) -> None:
        for fh in (self._fh, self._timing):
            if fh is not None:
                fh.close()


def write_rows(rows: list[ResultRow], path) -> None:
    """Write rows in the sweep's CSV format (no wall-clock column)."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(RESULT_COLUMNS) + "\n")
        for row in rows:
            values = asdict(row)
            fh.write(",".join(_fmt(values[c]) for c in RESULT_COLUMNS) + "\n")


def _simulate_replicate(config: ExperimentConfig, model: HawkesModel, r: int) -> tuple[int, EventStream]:
    data_seed = _seed(config.master_seed, 0, r)
    stream = simulate(model, config.resolve_horizon(model), np.random.default_rng(data_seed))
    return data_seed, stream


def run_sweep(config: ExperimentConfig, model: HawkesModel | None = None) -> list[ResultRow]:
    """Run every (replicate, bin width, noise level) cell.

    Rows are written to ``results.csv`` in the output directory as they
    finish (wall-clock times go to ``timings.csv`` so the results file stays
    reproducible). A failing stage marks the row's status and the sweep
    continues.
    """
    model = resolve_model(config.model) if model is None else model
    model.check_stationary()
    horizon = config.resolve_horizon(model)
    writer = _RowWriter(_output_dir(config))
    rows: list[ResultRow] = []
    try:
        for r in range(config.replicates):
            data_seed = _seed(config.master_seed, 0, r)
            try:
                stream = simulate(model, horizon, np.random.default_rng(data_seed))
                sim_error = None
            except Exception as exc:  # recorded per row
                stream, sim_error = None, f"error: simulate: {exc}"
            for a, delta_bin in enumerate(config.delta_bins):
                p = config.lag_for(delta_bin)
                rho = delta_bin * config.radius
                design = truth = None
                stage_error = sim_error
                if stage_error is None:
                    try:
                        design = build_design(bin_counts(stream, BinConfig(delta_bin, horizon, p)))
                        truth = discretize_truth(model, delta_bin, p, config.interpolation)
                        emp_R = estimate_R(design)
                    except Exception as exc:
                        stage_error = f"error: discretize: {exc}"
                for b, sigma2 in enumerate(config.noise_grid):
                    noise_seed = _seed(config.master_seed, 1, a, b, r)
                    row = ResultRow(
                        replicate=r,
                        data_seed=data_seed,
                        noise_seed=noise_seed,
                        delta_bin=delta_bin,
                        lag=p,
                        sigma2=sigma2,
                        epsilon=math.nan,
                        method=config.method,
                    )
                    start = time.perf_counter()
                    try:
                        row.epsilon = _epsilon(config, sigma2, rho)
                        if stage_error is not None:
                            row.status = stage_error
                        else:
                            row.empirical_R = emp_R
                            plan = NoisePlan.manual(sigma2, R=config.R)
                            U, final = fit(
                                design,
                                config.method,
                                rho,
                                plan,
                                config.iterations,
                                rng=noise_seed,
                                step_constant=config.step_constant,
                                cg_schedule=config.cg_schedule,
                            )
                            row.final_loss = final
                            row.relative_error = relative_error(rescale(U, delta_bin), truth)
                    except Exception as exc:
                        row.status = f"error: fit: {exc}"
                    row.wall_clock = time.perf_counter() - start
                    rows.append(row)
                    writer.write(row)
    finally:
        writer.close()
    return rows


def kernel_overlay(
    config: ExperimentConfig,
    entry: tuple[int, int],
    sigma2: float,
    delta_index: int = 0,
    replicate: int = 0,
    n_points: int = 200,
    model: HawkesModel | None = None,
) -> list[tuple[float, float, float]]:
    """Dense ``(t, h_true(t), h_hat(t))`` curve for one kernel entry.

    Uses the same event stream and noise seeds as the matching sweep cell
    (``sigma2`` need not be on the noise grid; off-grid values get their own
    noise stream).
    """
    model = resolve_model(config.model) if model is None else model
    i, j = entry
    if not (0 <= i < model.dim and 0 <= j < model.dim):
        raise IndexError(f"entry {entry} out of range for a {model.dim}-dim model")
    delta_bin = config.delta_bins[delta_index]
    p = config.lag_for(delta_bin)
    horizon = config.resolve_horizon(model)
    _, stream = _simulate_replicate(config, model, replicate)
    design = build_design(bin_counts(stream, BinConfig(delta_bin, horizon, p)))
    b = config.noise_grid.index(sigma2) if sigma2 in config.noise_grid else len(config.noise_grid)
    noise_seed = _seed(config.master_seed, 1, delta_index, b, replicate)
    U, _ = fit(
        design,
        config.method,
        delta_bin * config.radius,
        NoisePlan.manual(sigma2, R=config.R),
        config.iterations,
        rng=noise_seed,
        step_constant=config.step_constant,
        cg_schedule=config.cg_schedule,
    )
    est = rescale(U, delta_bin, config.interpolation)
    reach = p * delta_bin
    ts = reach * np.arange(1, n_points + 1) / n_points
    kernel = model.kernels[i][j]
    return [(float(t), float(kernel(t)), eval_estimate(est, i, j, float(t))) for t in ts]
