"""Tests for pulse construction, sequence validation and the figure presets."""

import math
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from pulses import (
    PRESET_DESCRIPTIONS,
    PRESET_NAMES,
    Envelope,
    Leg,
    PulseLabel,
    PulseSegment,
    RamanPulse,
    Sequence,
    SequenceError,
    generalized_rabi,
    khz,
    make_raman_pulse,
    preset_sequence,
    pulse_area,
    pulse_center,
    pulse_end,
    solve_duration_for_area,
    to_khz,
    validate_sequence,
    with_pulse,
)


class TestUnits:
    def test_khz_round_trip(self):
        assert to_khz(khz(123.0)) == pytest.approx(123.0)

    def test_one_megahertz(self):
        assert khz(1000.0) == pytest.approx(2 * math.pi)


class TestPulseArea:
    def test_generalized_rabi(self):
        assert generalized_rabi(3.0, 4.0) == 5.0

    def test_two_pi_area_duration(self):
        assert solve_duration_for_area(khz(1000.0)) == pytest.approx(1.0)
        assert solve_duration_for_area(khz(2500.0)) == pytest.approx(0.4)

    def test_higher_orders(self):
        assert solve_duration_for_area(2 * math.pi, n=2) == pytest.approx(3.0)

    @pytest.mark.parametrize("omega_r, n", [(0.0, 1), (-1.0, 1), (1.0, 0)])
    def test_rejects_bad_arguments(self, omega_r, n):
        with pytest.raises(ValueError):
            solve_duration_for_area(omega_r, n)

    def test_area_of_two_leg_pulse(self):
        pulse = make_raman_pulse(PulseLabel.R1, 3.0, 4.0, 0.0, 0.5)
        assert pulse_area(pulse) == pytest.approx(2.5)

    def test_area_of_readout_pulse(self):
        pulse = make_raman_pulse(PulseLabel.C2, None, 2.0, 10.0, 0.25)
        assert pulse_area(pulse) == pytest.approx(0.5)

    @pytest.mark.parametrize("split", [0.1, 0.37, 0.9])
    def test_area_is_additive_over_a_split(self, split):
        whole = make_raman_pulse(PulseLabel.D, khz(50.0), khz(998.749), 2.0, 1.0)
        head = make_raman_pulse(PulseLabel.D, khz(50.0), khz(998.749), 2.0, split)
        tail = make_raman_pulse(PulseLabel.D, khz(50.0), khz(998.749), pulse_end(head), 1.0 - split)
        assert pulse_end(tail) == pytest.approx(pulse_end(whole))
        assert pulse_area(head) + pulse_area(tail) == pytest.approx(pulse_area(whole), rel=1e-12)


class TestMakeRamanPulse:
    def test_legs_are_time_aligned(self):
        pulse = make_raman_pulse(PulseLabel.D, 1.0, 2.0, 3.0, 4.0, phases=(0.1, 0.2))
        assert pulse.probe.t_start == pulse.coupling.t_start == 3.0
        assert pulse.t_end == 7.0
        assert pulse.probe.phase == 0.1
        assert pulse.coupling.phase == 0.2
        assert pulse_center(pulse) == 5.0

    def test_default_wave_vector_labels(self):
        d = make_raman_pulse(PulseLabel.D, 1.0, 2.0, 0.0, 1.0)
        c2 = make_raman_pulse(PulseLabel.C2, None, 2.0, 5.0, 1.0)
        assert (d.probe.k_label, d.coupling.k_label) == ("P", "C1")
        assert c2.probe is None
        assert c2.coupling.k_label == "C2"

    def test_c2_rejects_probe(self):
        with pytest.raises(ValueError, match="coupling leg only"):
            make_raman_pulse(PulseLabel.C2, 1.0, 1.0, 0.0, 1.0)

    def test_two_leg_label_needs_probe(self):
        with pytest.raises(ValueError):
            make_raman_pulse(PulseLabel.R1, None, 1.0, 0.0, 1.0)

    @pytest.mark.parametrize("duration", [0.0, -1.0])
    def test_rejects_non_positive_duration(self, duration):
        with pytest.raises(ValueError, match="duration"):
            make_raman_pulse(PulseLabel.D, 1.0, 1.0, 0.0, duration)

    def test_phase_enters_complex_amplitude(self):
        segment = PulseSegment(Leg.probe, 2.0, math.pi / 2)
        assert segment.complex_amplitude == pytest.approx(2j)


class TestDriveAt:
    def test_half_open_support(self):
        seq = Sequence((make_raman_pulse(PulseLabel.D, 1.0, 2.0, 1.0, 1.0),), 5.0)
        assert seq.drive_at(0.999).is_zero
        assert seq.drive_at(1.0).omega_p == 1.0
        assert seq.drive_at(1.5).omega_c == 2.0
        assert seq.drive_at(2.0).is_zero

    def test_active_pulses_and_closed_cover(self):
        d = make_raman_pulse(PulseLabel.D, 1.0, 2.0, 1.0, 1.0)
        seq = Sequence((d,), 5.0)
        assert seq.active_pulses(1.5) == [d]
        assert seq.active_pulses(2.0) == []
        assert seq.covers(2.0)
        assert not seq.covers(2.5)

    def test_boundaries_are_sorted_and_unique(self):
        seq = Sequence(
            (
                make_raman_pulse(PulseLabel.D, 1.0, 1.0, 0.0, 1.0),
                make_raman_pulse(PulseLabel.R1, 1.0, 1.0, 1.0, 2.0),
            ),
            5.0,
        )
        assert seq.boundaries() == (0.0, 1.0, 3.0)


class TestValidateSequence:
    def test_valid_preset_has_no_violations(self):
        assert validate_sequence(preset_sequence("fig4a").sequence) == []

    def test_overlap_is_reported(self):
        seq = Sequence(
            (
                make_raman_pulse(PulseLabel.D, 1.0, 1.0, 0.0, 2.0),
                make_raman_pulse(PulseLabel.R1, 1.0, 1.0, 1.0, 1.0),
            ),
            10.0,
        )
        problems = validate_sequence(seq)
        assert any("overlaps" in p for p in problems)

    def test_touching_pulses_are_allowed(self):
        seq = Sequence(
            (
                make_raman_pulse(PulseLabel.D, 1.0, 1.0, 0.0, 1.0),
                make_raman_pulse(PulseLabel.R1, 1.0, 1.0, 1.0, 1.0),
            ),
            10.0,
        )
        assert validate_sequence(seq) == []

    def test_all_problems_collected(self):
        misaligned = RamanPulse(
            PulseLabel.R1,
            PulseSegment(Leg.probe, 1.0, 0.0, 0.0, 1.0),
            PulseSegment(Leg.coupling, -1.0, 0.0, 0.5, 1.0),
        )
        late = make_raman_pulse(PulseLabel.R2, 1.0, 1.0, 9.0, 2.0)
        problems = validate_sequence(Sequence((misaligned, late), 10.0))
        assert any("not time-aligned" in p for p in problems)
        assert any("amplitude must be >= 0" in p for p in problems)
        assert any("after total_span" in p for p in problems)

    def test_readout_with_probe_leg_rejected(self):
        bad = RamanPulse(PulseLabel.C2, PulseSegment(Leg.probe, 1.0), PulseSegment(Leg.coupling, 1.0))
        problems = validate_sequence(Sequence((bad,), 5.0))
        assert any("C2 must not carry a probe leg" in p for p in problems)

    def test_missing_leg_on_rephasing_pulse(self):
        bad = RamanPulse(PulseLabel.R1, None, PulseSegment(Leg.coupling, 1.0))
        problems = validate_sequence(Sequence((bad,), 5.0))
        assert any("needs both probe and coupling" in p for p in problems)

    def test_non_positive_span(self):
        assert validate_sequence(Sequence((), 0.0))

    def test_ensure_valid_raises_with_violations(self):
        seq = Sequence((make_raman_pulse(PulseLabel.D, 1.0, 1.0, 0.0, 2.0),), 1.0)
        with pytest.raises(SequenceError) as exc_info:
            seq.ensure_valid()
        assert len(exc_info.value.violations) == 1
        assert isinstance(exc_info.value, ValueError)

    def test_envelope_is_rectangular(self):
        assert make_raman_pulse(PulseLabel.D, 1.0, 1.0, 0.0, 1.0).probe.envelope is Envelope.rect


class TestSequenceEditing:
    def test_without_drops_label(self):
        seq = preset_sequence("fig4a").sequence
        assert seq.find(PulseLabel.C2) is not None
        assert seq.without(PulseLabel.C2).find("C2") is None
        assert len(seq.without("C2").pulses) == 3

    def test_with_pulse_replaces_same_label(self):
        seq = preset_sequence("fig3").sequence
        new_d = make_raman_pulse(PulseLabel.D, 0.5, 0.5, 0.0, 1.0)
        edited = with_pulse(seq, new_d)
        assert len(edited.pulses) == 3
        assert edited.find(PulseLabel.D) is new_d
        assert edited.pulses[0] is new_d
        assert edited.total_span == seq.total_span


class TestPresets:
    def test_every_preset_is_described_and_valid(self):
        for name in PRESET_NAMES:
            assert name in PRESET_DESCRIPTIONS
            preset = preset_sequence(name)
            assert preset.sequence.violations() == []
            assert preset.sample_interval > 0

    def test_unknown_preset(self):
        with pytest.raises(ValueError, match="Unknown preset"):
            preset_sequence("fig9")

    def test_double_rephasing_timing(self):
        seq = preset_sequence("fig3").sequence
        d, r1, r2 = (seq.find(label) for label in ("D", "R1", "R2"))
        assert (d.t_start, d.t_end) == (0.0, 1.0)
        assert pulse_center(r1) == pytest.approx(20.0)
        assert pulse_center(r2) == pytest.approx(50.0)
        assert r1.duration == pytest.approx(0.4)
        assert pulse_area(r1) == pytest.approx(2 * math.pi)
        assert pulse_area(d) == pytest.approx(2 * math.pi)

    def test_data_pulse_amplitudes(self):
        d = preset_sequence("fig3").sequence.find("D")
        assert to_khz(d.probe.amplitude) == pytest.approx(50.0)
        assert to_khz(generalized_rabi(d.probe.amplitude, d.coupling.amplitude)) == pytest.approx(1000.0)

    def test_readout_starts_at_second_echo(self):
        c2 = preset_sequence("fig4a").sequence.find("C2")
        assert c2.t_start == pytest.approx(60.5)
        assert c2.probe is None
        assert to_khz(c2.coupling.amplitude) == pytest.approx(100.0)

    def test_resonant_presets_use_one_group(self):
        for name in ("fig2c", "fig4c", "fig4d"):
            assert preset_sequence(name).ensemble.n_groups == 1

    def test_broadened_presets_use_100_khz_fwhm(self):
        spec = preset_sequence("fig3").ensemble
        assert spec.n_groups == 201
        assert to_khz(spec.fwhm) == pytest.approx(100.0)
