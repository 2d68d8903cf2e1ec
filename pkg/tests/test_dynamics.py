"""Tests for the single-group density-matrix dynamics."""

import logging
import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from dynamics import (
    AtomParams,
    DriveSample,
    IntegrationError,
    StepBoundaryError,
    build_hamiltonian,
    ground_state,
    integrate_sequence,
    physical_diagnostics,
    propagate_field_free,
    relaxation_rhs,
    resonant_lambda_oracle,
    rk4_step,
    sample_times,
    total_rhs,
)
from pulses import PulseLabel, Sequence, generalized_rabi, khz, make_raman_pulse


def _pure(amplitudes) -> np.ndarray:
    psi = np.asarray(amplitudes, dtype=complex)
    return np.outer(psi, psi.conj())


MIXED = _pure([0.6, 0.64j, 0.48])


def _single_pulse(omega_p, omega_c, duration, t_start=0.0, span=None):
    pulse = make_raman_pulse(PulseLabel.custom, omega_p, omega_c, t_start, duration)
    return Sequence((pulse,), span if span is not None else t_start + duration)


class TestAtomParams:
    def test_negative_rate_rejected(self):
        with pytest.raises(ValueError, match="decay_31"):
            AtomParams(decay_31=-1.0)

    def test_soft_check_warns_on_low_optical_dephasing(self, caplog):
        with caplog.at_level(logging.WARNING, logger="dynamics"):
            AtomParams(decay_31=1.0, decay_32=1.0, dephasing_13=0.1, dephasing_23=2.0)
        assert "Optical dephasing" in caplog.text

    def test_zero_rates_are_silent(self, caplog):
        with caplog.at_level(logging.WARNING, logger="dynamics"):
            params = AtomParams()
        assert caplog.text == ""
        assert not params.has_relaxation

    def test_with_detuning_keeps_rates(self):
        params = AtomParams(dephasing_12=0.01).with_detuning(0.3)
        assert params.delta == 0.3
        assert params.dephasing_12 == 0.01


class TestHamiltonian:
    def test_hermitian_with_complex_drive(self):
        h = build_hamiltonian(DriveSample(1.0 + 0.5j, 0.3 - 0.2j), AtomParams(delta=0.4, probe_detuning=-0.7))
        np.testing.assert_array_equal(h, h.conj().T)

    def test_half_amplitude_couplings(self):
        h = build_hamiltonian(DriveSample(2.0, 4.0), AtomParams(delta=0.5, probe_detuning=1.5))
        assert h[0, 2] == -1.0
        assert h[1, 2] == -2.0
        assert h[1, 1] == -0.5
        assert h[2, 2] == -1.5
        assert h[0, 0] == 0.0
        assert h[0, 1] == 0.0

    def test_total_rhs_is_traceless_and_hermitian(self):
        params = AtomParams(delta=0.2, decay_31=0.3, decay_32=0.1, dephasing_13=0.5, dephasing_23=0.5, dephasing_12=0.05)
        rhs = total_rhs(MIXED, DriveSample(1.2, 0.7j), params)
        assert abs(np.trace(rhs)) < 1e-12
        np.testing.assert_allclose(rhs, rhs.conj().T, atol=1e-15)


class TestRelaxation:
    def test_trace_preserving(self):
        params = AtomParams(decay_31=0.37, decay_32=0.21, dephasing_13=0.5, dephasing_23=0.4, dephasing_12=0.02)
        assert abs(np.trace(relaxation_rhs(MIXED, params))) < 1e-12

    def test_zero_rates_give_zero(self):
        np.testing.assert_array_equal(relaxation_rhs(MIXED, AtomParams()), np.zeros((3, 3)))

    def test_excited_population_feeds_ground_states(self):
        rho = np.zeros((3, 3), dtype=complex)
        rho[2, 2] = 1.0
        out = relaxation_rhs(rho, AtomParams(decay_31=0.3, decay_32=0.1, dephasing_13=0.2, dephasing_23=0.2))
        assert out[2, 2] == pytest.approx(-0.4)
        assert out[0, 0] == pytest.approx(0.3)
        assert out[1, 1] == pytest.approx(0.1)


class TestFieldFree:
    def test_zero_interval_is_identity(self):
        params = AtomParams(delta=0.3, probe_detuning=0.1, decay_31=0.2, dephasing_12=0.05)
        np.testing.assert_array_equal(propagate_field_free(MIXED, 0.0, params), MIXED)

    def test_pure_phase_evolution(self):
        out = propagate_field_free(MIXED, 2.0, AtomParams(delta=0.25))
        assert out[0, 1] == pytest.approx(MIXED[0, 1] * np.exp(-0.5j))
        assert abs(out[0, 1]) == pytest.approx(abs(MIXED[0, 1]))

    def test_agrees_with_rk4_over_20_us(self):
        params = AtomParams(
            delta=0.2, probe_detuning=0.3,
            decay_31=0.03, decay_32=0.02, dephasing_13=0.05, dephasing_23=0.05, dephasing_12=0.01,
        )
        seq = Sequence((), 20.0)
        rho = MIXED.copy()
        t = 0.0
        h = 0.01
        for _ in range(2000):
            rho = rk4_step(rho, t, h, seq, params)
            t += h
        exact = propagate_field_free(MIXED, 20.0, params)
        assert np.max(np.abs(rho - exact)) < 1e-10

    def test_negative_interval_rejected(self):
        with pytest.raises(ValueError):
            propagate_field_free(MIXED, -1.0, AtomParams())


class TestRK4Step:
    def test_step_across_boundary_raises(self):
        seq = _single_pulse(1.0, 1.0, 1.0, t_start=1.0, span=3.0)
        with pytest.raises(StepBoundaryError):
            rk4_step(ground_state(), 0.95, 0.1, seq, AtomParams())

    def test_step_ending_on_boundary_is_allowed(self):
        seq = _single_pulse(1.0, 1.0, 1.0, t_start=1.0, span=3.0)
        rho = rk4_step(ground_state(), 0.75, 0.25, seq, AtomParams())
        np.testing.assert_allclose(rho, ground_state(), atol=1e-15)

    def test_non_positive_dt_rejected(self):
        with pytest.raises(ValueError):
            rk4_step(ground_state(), 0.0, 0.0, Sequence((), 1.0), AtomParams())

    def test_fourth_order_convergence(self):
        omega_r = khz(200.0)
        leg = omega_r / math.sqrt(2.0)
        seq = _single_pulse(leg, leg, 10.0)
        params = AtomParams()
        grid = np.arange(1, 26) * 0.1
        exact = resonant_lambda_oracle(leg, leg, grid)

        errors = []
        for substeps in (1, 2, 4):
            h = 0.1 / substeps
            rho = ground_state()
            worst = 0.0
            for k in range(25):
                for j in range(substeps):
                    rho = rk4_step(rho, k * 0.1 + j * h, h, seq, params)
                worst = max(worst, float(np.max(np.abs(rho - exact[k]))))
            errors.append(worst)
        assert 10.0 < errors[0] / errors[1] < 22.0
        assert 10.0 < errors[1] / errors[2] < 22.0


class TestResonantOracle:
    @pytest.mark.parametrize(
        "omega_p, omega_c",
        [
            (khz(50.0), khz(193.649)),
            (khz(1767.767), khz(1767.767)),
        ],
    )
    def test_integrator_matches_closed_form(self, omega_p, omega_c):
        omega_r = generalized_rabi(omega_p, omega_c)
        span = 8.0 * math.pi / omega_r
        seq = _single_pulse(omega_p, omega_c, span)
        traj = integrate_sequence(ground_state(), seq, AtomParams(), span / 80.0)
        exact = resonant_lambda_oracle(omega_p, omega_c, traj.times)
        assert np.max(np.abs(traj.states - exact)) < 1e-8

    def test_full_return_at_4pi(self):
        omega_p, omega_c = khz(50.0), khz(193.649)
        t = 4.0 * math.pi / generalized_rabi(omega_p, omega_c)
        np.testing.assert_allclose(resonant_lambda_oracle(omega_p, omega_c, t), ground_state(), atol=1e-12)

    def test_trace_one_and_hermitian(self):
        states = resonant_lambda_oracle(0.4, 1.1, np.linspace(0.0, 30.0, 61))
        diag = physical_diagnostics(states)
        assert diag.max_trace_error < 1e-12
        assert diag.max_hermiticity_error < 1e-15

    def test_negative_amplitude_rejected(self):
        with pytest.raises(ValueError):
            resonant_lambda_oracle(-1.0, 1.0, 0.0)


class TestPulseOutcomes:
    def test_complete_swap_for_equal_legs(self):
        leg = khz(2500.0 / math.sqrt(2.0))
        duration = 2.0 * math.pi / generalized_rabi(leg, leg)
        seq = _single_pulse(leg, leg, duration, span=duration + 0.5)
        traj = integrate_sequence(ground_state(), seq, AtomParams(), 0.05)
        after = traj.states[-1]
        assert abs(after[1, 1].real - 1.0) < 1e-6
        assert after[2, 2].real < 1e-6

    def test_data_pulse_excitation(self):
        omega_p = khz(50.0)
        omega_c = math.sqrt(khz(1000.0) ** 2 - omega_p**2)
        seq = _single_pulse(omega_p, omega_c, 1.0)
        traj = integrate_sequence(ground_state(), seq, AtomParams(), 0.05)
        final = traj.states[-1]
        assert traj.times[-1] == pytest.approx(1.0)
        assert final[1, 1].real == pytest.approx(0.0099750, abs=1e-5)
        assert abs(final[0, 1]) == pytest.approx(0.0993755, abs=1e-5)
        assert final[2, 2].real < 1e-6


class TestIntegrateSequence:
    def test_invariants_hold_at_every_sample(self):
        omega_p = khz(50.0)
        omega_c = math.sqrt(khz(200.0) ** 2 - omega_p**2)
        seq = _single_pulse(omega_p, omega_c, 5.0, span=8.0)
        traj = integrate_sequence(ground_state(), seq, AtomParams(delta=0.3), 0.02)
        diag = physical_diagnostics(traj.states)
        assert diag.max_trace_error < 1e-9
        assert diag.max_hermiticity_error < 1e-12
        assert diag.min_eigenvalue > -1e-7

    def test_empty_sequence_is_constant(self):
        traj = integrate_sequence(ground_state(), Sequence((), 10.0), AtomParams(delta=0.5), 0.5)
        assert traj.times.size == 21
        for state in traj.states:
            np.testing.assert_array_equal(state, ground_state())

    def test_excited_state_decays_exactly(self):
        rho0 = np.zeros((3, 3), dtype=complex)
        rho0[2, 2] = 1.0
        params = AtomParams(decay_31=0.5, decay_32=0.5, dephasing_13=0.5, dephasing_23=0.5)
        traj = integrate_sequence(rho0, Sequence((), 2.0), params, 0.5)
        np.testing.assert_allclose(traj.element(2, 2).real, np.exp(-traj.times), rtol=1e-12)
        np.testing.assert_allclose(traj.element(0, 0).real, 0.5 * (1 - np.exp(-traj.times)), atol=1e-12)

    def test_deterministic(self):
        seq = _single_pulse(khz(300.0), khz(300.0), 2.0, span=4.0)
        first = integrate_sequence(ground_state(), seq, AtomParams(delta=0.2), 0.05)
        second = integrate_sequence(ground_state(), seq, AtomParams(delta=0.2), 0.05)
        np.testing.assert_array_equal(first.states, second.states)

    def test_non_finite_state_reports_location(self):
        rho0 = ground_state()
        rho0[0, 1] = np.nan
        with pytest.raises(IntegrationError) as exc_info:
            integrate_sequence(rho0, Sequence((), 1.0), AtomParams(), 0.5)
        assert exc_info.value.group_index == 0
        assert exc_info.value.time_us == pytest.approx(0.5)

    def test_invalid_sequence_rejected(self):
        bad = Sequence((), 0.0)
        with pytest.raises(ValueError):
            integrate_sequence(ground_state(), bad, AtomParams(), 0.1)


class TestSampleTimes:
    def test_inclusive_grid(self):
        times = sample_times(70.0, 0.05)
        assert times.size == 1401
        assert times[-1] == 70.0
        assert times[390] == 19.5

    def test_rejects_bad_interval(self):
        with pytest.raises(ValueError):
            sample_times(1.0, 0.0)
