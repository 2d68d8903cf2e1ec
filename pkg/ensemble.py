"""
Gaussian spin inhomogeneous broadening: detuning grid, group runs, averages.

Groups are integrated in fixed-size blocks so the weighted merge happens in
the same order whatever the worker count; results are bit-identical with
one thread or many.
"""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable

import numpy as np

from dynamics import AtomParams, Trajectory, ground_state, integrate_batch, sample_times

if TYPE_CHECKING:
    from pulses import Sequence

logger = logging.getLogger(__name__)

BLOCK_SIZE = 64
WORKERS_ENV = "RAMAN_ECHO_WORKERS"


@dataclass(frozen=True)
class EnsembleSpec:
    """Gaussian distribution of the two-photon detuning.

    sigma_delta is the standard deviation in rad/us; the grid spans
    +-truncation*sigma_delta with n_groups (odd) nodes.
    """

    sigma_delta: float = 0.0
    n_groups: int = 201
    truncation: float = 4.0

    def __post_init__(self):
        if self.sigma_delta < 0:
            raise ValueError(f"sigma_delta must be >= 0, got {self.sigma_delta}")
        if self.n_groups < 1:
            raise ValueError(f"n_groups must be >= 1, got {self.n_groups}")
        if self.truncation <= 0:
            raise ValueError(f"truncation must be positive, got {self.truncation}")

    @property
    def fwhm(self) -> float:
        return self.sigma_delta * 2.0 * math.sqrt(2.0 * math.log(2.0))

    @classmethod
    def from_fwhm(cls, fwhm: float, n_groups: int = 201, truncation: float = 4.0) -> "EnsembleSpec":
        return cls(fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0))), n_groups, truncation)


@dataclass(frozen=True)
class Group:
    delta: float
    weight: float


@dataclass(frozen=True)
class EnsembleTrajectory:
    """Weighted-average density matrices on a time grid.

    ``mean_states`` has shape (n_times, 3, 3); ``per_group`` (optional) has
    shape (n_groups, n_times, 3, 3) in grid order.
    """

    times: np.ndarray
    groups: tuple[Group, ...]
    mean_states: np.ndarray
    per_group: np.ndarray | None = None

    @property
    def rho11(self) -> np.ndarray:
        return self.mean_states[:, 0, 0].real

    @property
    def rho22(self) -> np.ndarray:
        return self.mean_states[:, 1, 1].real

    @property
    def rho33(self) -> np.ndarray:
        return self.mean_states[:, 2, 2].real

    @property
    def avg_rho12(self) -> np.ndarray:
        return self.mean_states[:, 0, 1]

    @property
    def avg_rho13(self) -> np.ndarray:
        return self.mean_states[:, 0, 2]

    @property
    def abs_avg_rho12(self) -> np.ndarray:
        return np.abs(self.avg_rho12)

    @property
    def im_rho13(self) -> np.ndarray:
        return self.avg_rho13.imag

    @property
    def abs_avg_rho13(self) -> np.ndarray:
        return np.abs(self.avg_rho13)

    def columns(self) -> dict[str, np.ndarray]:
        """Averaged observables in CSV column order."""
        return {
            "t_us": self.times,
            "rho11": self.rho11,
            "rho22": self.rho22,
            "rho33": self.rho33,
            "re_rho12": self.avg_rho12.real,
            "im_rho12": self.avg_rho12.imag,
            "abs_avg_rho12": self.abs_avg_rho12,
            "im_rho13": self.im_rho13,
            "abs_avg_rho13": self.abs_avg_rho13,
        }

    def group_trajectory(self, index: int) -> Trajectory:
        if self.per_group is None:
            raise ValueError("Per-group states were not recorded for this run")
        return Trajectory(times=self.times, states=self.per_group[index])

    def group_index(self, delta: float) -> int:
        """Index of the grid node closest to ``delta``."""
        return int(np.argmin([abs(g.delta - delta) for g in self.groups]))


def _grid_arrays(spec: EnsembleSpec) -> tuple[np.ndarray, np.ndarray]:
    if spec.n_groups % 2 == 0:
        raise ValueError(f"n_groups must be odd so that delta = 0 is a node, got {spec.n_groups}")
    if spec.sigma_delta == 0 or spec.n_groups == 1:
        return np.zeros(1), np.ones(1)
    m = spec.n_groups // 2
    half = spec.truncation * spec.sigma_delta * np.arange(1, m + 1) / m
    deltas = np.concatenate((-half[::-1], [0.0], half))
    density = np.exp(-0.5 * (deltas / spec.sigma_delta) ** 2)
    weights = density / density.sum()
    # exact mirror symmetry of the weights
    weights = 0.5 * (weights + weights[::-1])
    return deltas, weights


def make_detuning_grid(spec: EnsembleSpec) -> list[Group]:
    """Uniform nodes on [-k*sigma, k*sigma] with normalized Gaussian weights."""
    deltas, weights = _grid_arrays(spec)
    return [Group(float(d), float(w)) for d, w in zip(deltas, weights)]


def ensemble_average(groups: Iterable[tuple[float, complex]]) -> complex:
    """Coherent weighted sum of per-group values."""
    total = 0j
    for weight, value in groups:
        total += weight * value
    return total


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        logger.warning("Ignoring non-integer %s=%r", WORKERS_ENV, raw)
        return 1


def _run_blocks(task, n_groups: int, workers: int) -> list:
    blocks = [slice(i, min(i + BLOCK_SIZE, n_groups)) for i in range(0, n_groups, BLOCK_SIZE)]
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(task, blocks))
    return [task(block) for block in blocks]


def run_ensemble(
    seq: "Sequence",
    spec: EnsembleSpec,
    base: AtomParams,
    sample_interval: float,
    *,
    span: float | None = None,
    per_group: bool = False,
    workers: int | None = None,
) -> EnsembleTrajectory:
    """Integrate every detuning group through ``seq`` and average them.

    Each group starts in |1><1| with delta overridden from the grid; all other
    parameters come from ``base``.
    """
    seq.ensure_valid()
    deltas, weights = _grid_arrays(spec)
    times = sample_times(seq.total_span if span is None else span, sample_interval)
    return _run(seq, deltas, weights, base, times, per_group=per_group, workers=workers)


def _run(seq, deltas, weights, base, times, *, per_group, workers) -> EnsembleTrajectory:
    workers = default_workers() if workers is None else max(1, workers)
    bound = float(np.max(np.abs(deltas)))
    rho0 = ground_state()
    started = time.perf_counter()

    def task(block: slice):
        states = integrate_batch(
            rho0, seq, base, deltas[block], times, delta_bound=bound, group_offset=block.start
        )
        partial = np.einsum("g,gtij->tij", weights[block], states)
        return partial, (states if per_group else None)

    results = _run_blocks(task, deltas.size, workers)
    mean = results[0][0].copy()
    for partial, _ in results[1:]:
        mean += partial
    stacked = np.concatenate([states for _, states in results]) if per_group else None

    logger.info(
        "Ensemble run: %d groups, span %.3f us, %d samples, %d worker(s), %.2fs",
        deltas.size, times[-1] if times.size else 0.0, times.size, workers, time.perf_counter() - started,
    )
    groups = tuple(Group(float(d), float(w)) for d, w in zip(deltas, weights))
    return EnsembleTrajectory(times=times, groups=groups, mean_states=mean, per_group=stacked)


def ensemble_states_at(
    seq: "Sequence",
    spec: EnsembleSpec,
    base: AtomParams,
    times,
    *,
    workers: int | None = None,
) -> tuple[list[Group], np.ndarray]:
    """Per-group density matrices at arbitrary instants, shape (n_groups, n_times, 3, 3)."""
    seq.ensure_valid()
    deltas, weights = _grid_arrays(spec)
    times = np.round(np.asarray(times, dtype=float), 12)
    traj = _run(seq, deltas, weights, base, times, per_group=True, workers=workers)
    return list(traj.groups), traj.per_group
