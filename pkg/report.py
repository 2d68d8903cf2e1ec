"""
Run outputs: averaged and per-group CSV series, the JSON echo report, the
SVG plot and sweep tables. Every file is written atomically.
"""

from __future__ import annotations

import io
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import matplotlib

matplotlib.use("Agg")
from matplotlib.figure import Figure  # noqa: E402

from dynamics import AMPLITUDE_CONVENTION, physical_diagnostics
from echo_analysis import (
    EchoEvent,
    SweepResult,
    detect_optical_readout,
    detect_spin_echoes,
    inversion_at,
    predicted_for_sequence,
    readout_metrics,
)
from ensemble import EnsembleTrajectory
from phase_matching import BeamGeometry, echo_wavevector
from pulses import PulseLabel, Sequence

logger = logging.getLogger(__name__)

UNITS = "times in us; Rabi frequencies and detunings in rad/us internally, kHz in configs"
PULSE_REFERENCE = "T_X is the center of pulse X"
_PLOT_SALT = "raman-echo"


def atomic_write_text(path: Path, text: str) -> None:
    """Write text via temp file + rename so readers never see a partial file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _fmt(value) -> str:
    return format(float(value), ".12g")


def _csv(header: list[str], rows) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def series_csv(traj: EnsembleTrajectory) -> str:
    columns = traj.columns()
    return _csv(list(columns), zip(*columns.values()))


PER_GROUP_HEADER = ["t_us", "delta_krad_per_us", "re_rho12", "im_rho12", "rho22", "rho33"]


def per_group_csv(traj: EnsembleTrajectory) -> str:
    if traj.per_group is None:
        raise ValueError("Per-group states were not recorded for this run")

    def rows():
        for index, group in enumerate(traj.groups):
            states = traj.per_group[index]
            for k, t in enumerate(traj.times):
                rho = states[k]
                yield (t, group.delta / 1e3, rho[0, 1].real, rho[0, 1].imag, rho[1, 1].real, rho[2, 2].real)

    return _csv(PER_GROUP_HEADER, rows())


def sweep_csv(result: SweepResult) -> str:
    header = [result.parameter, "objective", *result.secondary]
    rows = zip(result.values, result.objectives, *result.secondary.values())
    return _csv(header, rows)


@dataclass
class EchoReport:
    name: str
    events: list[EchoEvent] = field(default_factory=list)
    predicted: dict[str, float] | None = None
    inversion: dict[str, bool] | None = None
    readout: dict[str, float] | None = None
    geometry: dict[str, Any] | None = None
    diagnostics: dict[str, float] = field(default_factory=dict)
    sweep: dict[str, Any] | None = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "name": self.name,
            "conventions": {
                "amplitude": AMPLITUDE_CONVENTION,
                "units": UNITS,
                "pulse_reference": PULSE_REFERENCE,
            },
            "events": [e.to_dict() for e in self.events],
            "predicted": self.predicted,
            "inversion": self.inversion,
            "readout": self.readout,
            "geometry": self.geometry,
            "diagnostics": self.diagnostics,
        }
        if self.sweep is not None:
            out["sweep"] = self.sweep
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def build_echo_report(
    name: str,
    traj: EnsembleTrajectory,
    seq: Sequence,
    *,
    reference: EnsembleTrajectory | None = None,
    geometry: BeamGeometry | None = None,
) -> EchoReport:
    """Analyse a finished run: echoes, timing, inversion, readout, geometry."""
    report = EchoReport(name=name)
    try:
        report.events = detect_spin_echoes(traj, seq)
    except ValueError as exc:
        logger.warning("Spin-echo detection skipped: %s", exc)
    report.events += detect_optical_readout(traj, seq)

    timing = predicted_for_sequence(seq) if seq.find(PulseLabel.D) else None
    if timing is not None:
        report.predicted = {"t_e1_us": timing.t_e1, "t_e2_us": timing.t_e2}
        inversion = {}
        for key, t in (("t_e1", timing.t_e1), ("t_e2", timing.t_e2)):
            if traj.times.size and traj.times[0] <= t <= traj.times[-1]:
                inversion[key] = inversion_at(traj, t)
        report.inversion = inversion or None

    c2 = seq.find(PulseLabel.C2)
    if c2 is not None and reference is not None:
        metrics = readout_metrics(traj, reference, (c2.t_start, min(c2.t_end, float(traj.times[-1]))))
        report.readout = {"peak_im_rho13": metrics.peak_im_rho13, "depletion": metrics.depletion}

    if geometry is not None:
        report.geometry = echo_wavevector(geometry).to_dict()

    diag = physical_diagnostics(traj.mean_states)
    report.diagnostics = {
        "max_trace_error": diag.max_trace_error,
        "max_hermiticity_error": diag.max_hermiticity_error,
        "min_eigenvalue": diag.min_eigenvalue,
        "groups": len(traj.groups),
        "samples": int(traj.times.size),
    }
    return report


def plot_svg(traj: EnsembleTrajectory, seq: Sequence, title: str = "") -> str:
    """Populations and averaged coherences with pulse supports shaded."""
    matplotlib.rcParams["svg.hashsalt"] = _PLOT_SALT
    fig = Figure(figsize=(8, 6))
    top, bottom = fig.subplots(2, 1, sharex=True)
    top.plot(traj.times, traj.rho11, label="rho11")
    top.plot(traj.times, traj.rho22, label="rho22")
    top.plot(traj.times, traj.rho33, label="rho33")
    top.set_ylabel("population")
    bottom.plot(traj.times, traj.abs_avg_rho12, label="|<rho12>|")
    bottom.plot(traj.times, traj.avg_rho12.real, label="Re <rho12>", linewidth=0.8)
    bottom.plot(traj.times, traj.im_rho13, label="Im <rho13>", linewidth=0.8)
    bottom.set_ylabel("coherence")
    bottom.set_xlabel("t (us)")
    for axis in (top, bottom):
        for pulse in seq.pulses:
            axis.axvspan(pulse.t_start, pulse.t_end, color="0.85", zorder=0)
        axis.legend(loc="upper right", fontsize="small")
    for pulse in seq.pulses:
        top.annotate(pulse.label.value, (pulse.t_start, 1.02), xycoords=("data", "axes fraction"), fontsize="small")
    if title:
        fig.suptitle(title)
    buffer = io.StringIO()
    fig.savefig(buffer, format="svg", metadata={"Date": None})
    return buffer.getvalue()


def write_run_outputs(
    out_dir: Path,
    traj: EnsembleTrajectory,
    seq: Sequence,
    report: EchoReport,
    *,
    names: dict[str, str],
    per_group: bool = False,
    svg: bool = False,
) -> list[Path]:
    """Write the series CSV, report JSON and optional per-group CSV / SVG."""
    written = []
    targets = [(names["series_csv"], series_csv(traj)), (names["report_json"], report.to_json())]
    if per_group:
        targets.append((names["per_group_csv"], per_group_csv(traj)))
    if svg:
        targets.append((names["plot_svg"], plot_svg(traj, seq, report.name)))
    for filename, text in targets:
        path = out_dir / filename
        atomic_write_text(path, text)
        written.append(path)
    logger.info("Wrote %s", ", ".join(str(p) for p in written))
    return written
