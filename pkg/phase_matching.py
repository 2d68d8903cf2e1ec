"""
Wavevector and frequency bookkeeping for the Raman echo readout.

The spin grating K = k_P - k_C1 written by the data pulse is frozen into the
medium; the readout C2 turns it into an optical echo with
k_E = k_P - k_C1 + k_C2 and omega_E = omega_P - omega_C1 + omega_C2.
Wavevectors are in rad/m, optical angular frequencies in rad/s.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0
DEFAULT_TOL = 1e-6
DEFAULT_WAVELENGTH_NM = 800.0


class EchoClass(str, Enum):
    backward_conjugate = "backward_conjugate"
    forward = "forward"
    noncollinear = "noncollinear"
    mismatched = "mismatched"


@dataclass(frozen=True)
class WaveVector:
    direction: tuple[float, float, float]
    omega: float

    def __post_init__(self):
        direction = tuple(float(c) for c in self.direction)
        if len(direction) != 3:
            raise ValueError(f"direction must have 3 components, got {len(direction)}")
        norm = math.sqrt(sum(c * c for c in direction))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"direction must be a unit vector, |d| = {norm!r}")
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        object.__setattr__(self, "direction", direction)

    @classmethod
    def along(cls, direction, wavelength_nm: float = DEFAULT_WAVELENGTH_NM) -> "WaveVector":
        """Normalize ``direction`` and take omega from a vacuum wavelength."""
        if wavelength_nm <= 0:
            raise ValueError(f"wavelength must be positive, got {wavelength_nm}")
        vec = np.asarray(direction, dtype=float)
        norm = float(np.linalg.norm(vec))
        if norm == 0:
            raise ValueError("direction must be non-zero")
        unit = tuple(float(c) for c in vec / norm)
        return cls(unit, 2.0 * math.pi * SPEED_OF_LIGHT / (wavelength_nm * 1e-9))

    @property
    def magnitude(self) -> float:
        return self.omega / SPEED_OF_LIGHT

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.direction) * self.magnitude


@dataclass(frozen=True)
class BeamGeometry:
    k_p: WaveVector
    k_c1: WaveVector
    k_c2: WaveVector


@dataclass(frozen=True)
class EchoGeometry:
    k_e_vector: tuple[float, float, float]
    omega_e: float
    mismatch: float
    classification: EchoClass
    probe_direction: tuple[float, float, float]

    @property
    def relative_mismatch(self) -> float:
        return self.mismatch / (self.omega_e / SPEED_OF_LIGHT)

    def to_dict(self) -> dict:
        return {
            "class": self.classification.value,
            "mismatch": self.mismatch,
            "relative_mismatch": self.relative_mismatch,
            "k_e_vector": list(self.k_e_vector),
            "omega_e": self.omega_e,
        }


def spin_grating_wavevector(k_p: WaveVector, k_c1: WaveVector) -> np.ndarray:
    """K = k_P - k_C1, fixed once the data pulse has acted."""
    return k_p.vector - k_c1.vector


def _classify(k_e: np.ndarray, omega_e: float, mismatch: float, probe_direction, tol: float) -> EchoClass:
    k_norm = float(np.linalg.norm(k_e))
    if k_norm == 0 or mismatch > tol * (omega_e / SPEED_OF_LIGHT):
        return EchoClass.mismatched
    cosine = float(np.dot(k_e, probe_direction)) / k_norm
    if cosine <= -1.0 + tol:
        return EchoClass.backward_conjugate
    if cosine >= 1.0 - tol:
        return EchoClass.forward
    return EchoClass.noncollinear


def echo_wavevector(g: BeamGeometry, tol: float = DEFAULT_TOL) -> EchoGeometry:
    """Phase-matched echo wavevector and frequency for a readout geometry."""
    # k_P + (k_C2 - k_C1) keeps k_E == k_P exact when C2 reuses the C1 beam
    omega_e = g.k_p.omega + (g.k_c2.omega - g.k_c1.omega)
    if omega_e <= 0:
        raise ValueError(f"Echo frequency must be positive, got {omega_e}")
    k_e = g.k_p.vector + (g.k_c2.vector - g.k_c1.vector)
    mismatch = abs(float(np.linalg.norm(k_e)) - omega_e / SPEED_OF_LIGHT)
    classification = _classify(k_e, omega_e, mismatch, g.k_p.direction, tol)
    logger.debug("Echo geometry: |k_E|=%s, omega_E=%s, mismatch=%s -> %s",
                 np.linalg.norm(k_e), omega_e, mismatch, classification.value)
    return EchoGeometry(
        k_e_vector=tuple(float(c) for c in k_e),
        omega_e=omega_e,
        mismatch=mismatch,
        classification=classification,
        probe_direction=g.k_p.direction,
    )


def phase_mismatch(e: EchoGeometry) -> float:
    """| |k_E| - omega_E/c | in rad/m; zero means exactly phase matched."""
    return e.mismatch


def classify_geometry(e: EchoGeometry, tol: float = DEFAULT_TOL) -> EchoClass:
    return _classify(np.asarray(e.k_e_vector), e.omega_e, e.mismatch, e.probe_direction, tol)


def collinear_backward_geometry(wavelength_nm: float = DEFAULT_WAVELENGTH_NM) -> BeamGeometry:
    """P and C1 along +z, readout C2 along -z, one degenerate wavelength."""
    return BeamGeometry(
        k_p=WaveVector.along((0.0, 0.0, 1.0), wavelength_nm),
        k_c1=WaveVector.along((0.0, 0.0, 1.0), wavelength_nm),
        k_c2=WaveVector.along((0.0, 0.0, -1.0), wavelength_nm),
    )


def planar_geometry(
    angle_c1_deg: float = 0.0,
    angle_c2_deg: float = 180.0,
    wavelength_nm: float = DEFAULT_WAVELENGTH_NM,
) -> BeamGeometry:
    """Beams in the x-z plane; angles measured from the probe direction +z.

    angle_c2_deg is measured from +z as well, so 180 with angle_c1_deg = 0 is
    the collinear counterpropagating readout.
    """

    def unit(angle_deg: float) -> tuple[float, float, float]:
        a = math.radians(angle_deg)
        return (math.sin(a), 0.0, math.cos(a))

    return BeamGeometry(
        k_p=WaveVector.along((0.0, 0.0, 1.0), wavelength_nm),
        k_c1=WaveVector.along(unit(angle_c1_deg), wavelength_nm),
        k_c2=WaveVector.along(unit(angle_c2_deg), wavelength_nm),
    )
