from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .. import hilbert as hs
from ..errors import RegimeWarning

KINDS = ("bichromatic", "standing_wave", "traveling_wave", "raman")

# detunings of the time-averaged schemes, in units of omega_x
DETUNING_FLOOR = 3.0
DETUNING_COMFORT = 10.0


@dataclass(frozen=True)
class LaserDrive:
    """Laser parameters in natural units (omega_x = 1 unless given)."""

    rabi: float
    detuning: float = 0.0
    eta: float = 0.0
    kind: str = "bichromatic"
    omega_x: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown drive kind {self.kind!r}")
        if not self.rabi > 0:
            raise ValueError("rabi frequency must be positive")
        if self.eta < 0:
            raise ValueError("Lamb-Dicke parameter must be non-negative")
        if self.kind in ("bichromatic", "standing_wave"):
            ratio = abs(self.detuning) / self.omega_x
            if ratio <= DETUNING_FLOOR:
                raise ValueError(
                    f"|detuning| = {ratio:.3g} omega_x is inside the sideband resonances; "
                    f"the averaged description needs more than {DETUNING_FLOOR:g} omega_x")
            if ratio < DETUNING_COMFORT:
                warnings.warn(f"|detuning| = {ratio:.3g} omega_x is below "
                              f"{DETUNING_COMFORT:g} omega_x; expect visible corrections",
                              RegimeWarning, stacklevel=3)


@dataclass
class GateReport:
    final: object
    fidelity: float
    duration: float
    sector_fidelities: dict = field(default_factory=dict)
    leakage: float = 0.0
    diagnostics: dict = field(default_factory=dict)


def common_period(omegas, max_den: int = 64) -> float | None:
    """Smallest T with every w T a multiple of 2 pi, or None if incommensurate."""
    w = [abs(float(x)) for x in omegas if x != 0]
    if not w:
        return None
    base = min(w)
    den = 1
    for x in w:
        f = Fraction(x / base).limit_denominator(max_den)
        if abs(float(f) - x / base) > 1e-12 * x / base:
            return None
        den = np.lcm(den, f.denominator)
    return float(2 * np.pi * den / base)


def spectral_bound(H, times) -> float:
    """Largest |eigenvalue| of H(t) over the sample times, with a safety margin."""
    mats = H.matrices(np.asarray(times, dtype=float))
    return 1.1 * float(np.max(np.abs(np.linalg.eigvalsh(mats))))


def gate_overlap(U: np.ndarray, V: np.ndarray) -> float:
    """|tr(V^dag U)|^2 / d^2, insensitive to a global phase."""
    d = U.shape[0]
    return float(abs(np.trace(V.conj().T @ U)) ** 2 / d ** 2)
