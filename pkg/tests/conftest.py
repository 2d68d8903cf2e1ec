"""Shared fixtures for the Raman echo test suite."""

import pytest
from pathlib import Path
import sys

sys.path.insert(0, str(Path(__file__).parent.parent))

from ensemble import EnsembleSpec, WORKERS_ENV, run_ensemble
from pulses import PulseLabel, default_ensemble, preset_sequence


@pytest.fixture(autouse=True)
def isolate_worker_env(monkeypatch):
    """Every test starts from the single-threaded default.

    A RAMAN_ECHO_WORKERS value left in the developer's shell would otherwise
    change which code path the ensemble tests exercise.
    """
    monkeypatch.delenv(WORKERS_ENV, raising=False)


@pytest.fixture
def small_spec():
    """Default broadening on a coarse grid; enough for qualitative checks."""
    return EnsembleSpec(sigma_delta=default_ensemble().sigma_delta, n_groups=51)


@pytest.fixture(scope="session")
def fig3_run():
    preset = preset_sequence("fig3")
    traj = run_ensemble(preset.sequence, preset.ensemble, preset.params, preset.sample_interval)
    return preset, traj


@pytest.fixture(scope="session")
def fig4a_runs():
    """(preset, run with C2, run without C2) on a shared grid."""
    preset = preset_sequence("fig4a")
    with_c2 = run_ensemble(preset.sequence, preset.ensemble, preset.params, preset.sample_interval)
    without = run_ensemble(
        preset.sequence.without(PulseLabel.C2), preset.ensemble, preset.params, preset.sample_interval
    )
    return preset, with_c2, without
