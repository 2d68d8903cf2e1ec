#!/usr/bin/env python3
"""
MCP Server: Raman echo simulator
Runs the figure presets and the echo-timing, pulse-area and phase-matching
calculators as tools. Tools return plain dicts and report bad input as
{"error": ...} instead of raising.
"""

import logging
import math
import os
from dataclasses import replace
from typing import Annotated, Any, Dict

from pydantic import Field

from mcp.server.fastmcp import FastMCP
from mcp.server.transport_security import TransportSecuritySettings

from dynamics import IntegrationError
from echo_analysis import predicted_echo_times
from ensemble import run_ensemble
from phase_matching import classify_geometry, echo_wavevector, planar_geometry
from pulses import (
    PRESET_DESCRIPTIONS,
    PRESET_NAMES,
    PulseLabel,
    SequenceError,
    khz,
    preset_sequence,
    solve_duration_for_area,
)
from report import build_echo_report
from run_config import preset_config

logger = logging.getLogger(__name__)

DEFAULT_PORT = 8091
PORT_ENV = "RAMAN_ECHO_MCP_PORT"


def _resolve_port(port: int | None) -> int:
    if port is not None:
        return int(port)
    return int(os.environ.get(PORT_ENV, DEFAULT_PORT))


def _run_preset(name: str, groups: int | None) -> Dict[str, Any]:
    preset = preset_sequence(name)
    spec = preset.ensemble
    if groups is not None and spec.n_groups > 1:
        spec = replace(spec, n_groups=groups)
    seq = preset.sequence
    traj = run_ensemble(seq, spec, preset.params, preset.sample_interval)
    reference = None
    if seq.find(PulseLabel.C2) is not None:
        reference = run_ensemble(seq.without(PulseLabel.C2), spec, preset.params, preset.sample_interval)
    geometry = preset_config(name).beam_geometry()
    return build_echo_report(name, traj, seq, reference=reference, geometry=geometry).to_dict()


def create_server(port: int | None = None):
    """Create and return the Raman echo simulator MCP server.

    The port comes from ``port``, then RAMAN_ECHO_MCP_PORT, then DEFAULT_PORT,
    and the same value goes into the HTTP allowed-hosts list.
    """
    port = _resolve_port(port)
    mcp = FastMCP(
        name="Raman Echo Simulator",
        instructions=(
            "Simulates inversion-free, doubly rephased Raman echoes in a three-level lambda medium "
            "with Gaussian spin broadening. Call list_presets() to see the built-in protocols and "
            "run_preset(name) to integrate one and get its echo report (events, predicted times, "
            "inversion flags, readout metrics, geometry). predict_echo_times, "
            "pulse_duration_for_area and classify_readout_geometry are instant calculators."
        ),
        host="127.0.0.1",
        port=port,
        json_response=True,
        transport_security=TransportSecuritySettings(
            allowed_hosts=[f"127.0.0.1:{port}", f"localhost:{port}"],
        ),
    )

    @mcp.tool()
    def list_presets() -> dict:
        """List the built-in figure presets with a one-line description of each."""
        return {"presets": [{"name": name, "description": PRESET_DESCRIPTIONS[name]} for name in PRESET_NAMES]}

    @mcp.tool()
    def run_preset(
        name: Annotated[str, Field(description="Preset name, e.g. 'fig3' or 'fig4a'. See list_presets().")],
        groups: Annotated[int | None, Field(description="Odd number of detuning groups; omit for the preset default (201).", default=None)] = None,
    ) -> dict:
        """Integrate a preset protocol and return its echo report. No files are written."""
        if name not in PRESET_NAMES:
            return {"error": f"Unknown preset {name!r}. Available: {', '.join(PRESET_NAMES)}"}
        if groups is not None and (groups < 1 or groups % 2 == 0):
            return {"error": f"groups must be a positive odd integer, got {groups}"}
        try:
            return _run_preset(name, groups)
        except (SequenceError, ValueError) as exc:
            return {"error": str(exc)}
        except IntegrationError as exc:
            logger.error("Preset %s failed at t=%s us (group %s): %s", name, exc.time_us, exc.group_index, exc)
            return {"error": f"Integration failed: {exc}"}

    @mcp.tool()
    def predict_echo_times(
        t_d_us: Annotated[float, Field(description="Center of the data pulse D in microseconds.")],
        t_r1_us: Annotated[float, Field(description="Center of the first rephasing pulse R1 in microseconds.")],
        t_r2_us: Annotated[float, Field(description="Center of the second rephasing pulse R2 in microseconds.")],
    ) -> dict:
        """Predicted times of the inverted echo E1 and the inversion-free echo E2."""
        try:
            timing = predicted_echo_times(t_d_us, t_r1_us, t_r2_us)
        except ValueError as exc:
            return {"error": str(exc)}
        return {"t_e1_us": timing.t_e1, "t_e2_us": timing.t_e2, "degenerate": timing.degenerate}

    @mcp.tool()
    def pulse_duration_for_area(
        omega_r_khz: Annotated[float, Field(description="Generalized Rabi frequency in kHz (ordinary frequency).")],
        n: Annotated[int, Field(description="Order of the transfer maximum; area = 2(2n-1)pi.", default=1)] = 1,
    ) -> dict:
        """Raman pulse duration that reaches area 2(2n-1)pi at the given Rabi frequency."""
        try:
            duration = solve_duration_for_area(khz(omega_r_khz), n)
        except ValueError as exc:
            return {"error": str(exc)}
        return {"duration_us": duration, "area_rad": 2.0 * (2 * n - 1) * math.pi}

    @mcp.tool()
    def classify_readout_geometry(
        angle_c1_deg: Annotated[float, Field(description="Angle of the C1 beam from the probe direction, degrees.", default=0.0)] = 0.0,
        angle_c2_deg: Annotated[float, Field(description="Angle of the readout C2 beam from the probe direction, degrees. 180 = counterpropagating.", default=180.0)] = 180.0,
        wavelength_nm: Annotated[float, Field(description="Common vacuum wavelength of all beams in nm.", default=800.0)] = 800.0,
    ) -> dict:
        """Phase-matching class and mismatch of the echo for beams in one plane."""
        try:
            geometry = echo_wavevector(planar_geometry(angle_c1_deg, angle_c2_deg, wavelength_nm))
        except ValueError as exc:
            return {"error": str(exc)}
        result = geometry.to_dict()
        result["class"] = classify_geometry(geometry).value
        return result

    return mcp


def run_mcp():
    """Entry point for the `raman-echo-mcp` console script."""
    import sys
    logging.basicConfig(level=logging.INFO, format="%(asctime)s [%(name)s] %(message)s")
    srv = create_server()
    if "--http" in sys.argv:
        import uvicorn
        logger.info("Starting Raman echo MCP server (HTTP mode) on %s:%s", srv.settings.host, srv.settings.port)
        config = uvicorn.Config(
            srv.streamable_http_app(),
            host=srv.settings.host,
            port=srv.settings.port,
            log_level="info",
        )
        uvicorn.Server(config).run()
    else:
        logger.info("Starting Raman echo MCP server (stdio mode)")
        srv.run(transport="stdio")


if __name__ == "__main__":
    run_mcp()
