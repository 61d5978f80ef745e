"""
Bichromatic (Molmer-Sorensen) entangling gate.

Two ions share one bus mode and are driven at omega_0 +- delta. In the
interaction picture (hbar = 1, time in 1/omega_x when omega_x = 1)

    H(t) = Omega J+ {1 + i eta (a e^{-i w t} + a^dag e^{i w t})} cos(delta t) + h.c.,

whose time average is chi J_y^2 with chi = 2 Omega^2 eta^2 w / ((delta - w)(delta + w)).
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import expm

from .. import dynamics as dy
from .. import effham as eh
from .. import hilbert as hs
from ..hilbert import GROUND
from ._common import GateReport, LaserDrive, common_period, spectral_bound


def ms_space(cutoff: int) -> hs.SpaceDescriptor:
    return hs.space(hs.IonLevels(2), hs.IonLevels(2), hs.PhononMode(cutoff))


def chi(drive: LaserDrive) -> float:
    w, d = drive.omega_x, drive.detuning
    return 2 * drive.rabi ** 2 * drive.eta ** 2 * w / ((d - w) * (d + w))


def ms_drive_for_chi(chi_target: float, delta: float, rabi: float = 0.5,
                     omega_x: float = 1.0) -> LaserDrive:
    """Drive with the given Rabi frequency whose eta yields ``chi_target``."""
    eta2 = chi_target * (delta - omega_x) * (delta + omega_x) / (2 * rabi ** 2 * omega_x)
    if eta2 <= 0:
        raise ValueError("chi and (delta^2 - omega_x^2) must have the same sign")
    return LaserDrive(rabi=rabi, detuning=delta, eta=float(np.sqrt(eta2)),
                      kind="bichromatic", omega_x=omega_x)


def ms_hamiltonian(sp: hs.SpaceDescriptor, drive: LaserDrive, ions=(0, 1), mode: int = 2):
    """Full time-dependent coupling, built term by term from the J+ form."""
    J = hs.collective_spin(sp, list(ions))
    a, ad = hs.ladder(sp, mode)
    W, w, d, eta = drive.rabi, drive.omega_x, drive.detuning, drive.eta

    def c(t):
        return np.cos(d * t)

    def red(t):
        return np.cos(d * t) * np.exp(-1j * w * t)

    def blue(t):
        return np.cos(d * t) * np.exp(1j * w * t)

    return dy.TimeDependentHamiltonian([
        (W * J.plus, c), (W * J.minus, c),
        (1j * W * eta * (J.plus @ a), red), (-1j * W * eta * (J.minus @ ad), blue),
        (1j * W * eta * (J.plus @ ad), blue), (-1j * W * eta * (J.minus @ a), red),
    ])


def ms_effective(sp: hs.SpaceDescriptor, drive: LaserDrive, ions=(0, 1),
                 mode: int = 2) -> eh.EffectiveHamiltonian:
    return eh.reduce(eh.ms_terms(sp, list(ions), mode, drive.rabi, drive.eta,
                                 drive.detuning, drive.omega_x))


def ideal_ms(theta: float) -> np.ndarray:
    """exp(-i theta J_y^2) on two qubits."""
    sy = np.array([[0, -1j], [1j, 0]]) / 2
    Jy = np.kron(sy, np.eye(2)) + np.kron(np.eye(2), sy)
    return expm(-1j * theta * Jy @ Jy)


def ms_gate(drive: LaserDrive, psi0: hs.StateVector | None = None, duration="auto",
            sectors=(0, 1, 2), cutoff: int = 8, exact: bool = True,
            estimate_error: bool = True) -> GateReport:
    """Exact and time-averaged evolution of the two-ion gate.

    The target is exp(-i chi t J_y^2) on the ions and the identity on the bus.
    With ``duration="auto"`` t = (pi/2)/|chi|. Sector n starts in |gg>|n>.
    """
    if drive.kind != "bichromatic":
        raise ValueError("the MS gate needs a bichromatic drive")
    if max(sectors) > cutoff - 2:
        raise ValueError(f"cutoff {cutoff} too small for sector {max(sectors)}")
    sp = ms_space(cutoff)
    x = chi(drive)
    T = np.pi / (2 * abs(x)) if duration == "auto" else float(duration)
    if T <= 0:
        raise ValueError("duration must be positive")
    heff = ms_effective(sp, drive)
    diag = {"chi": x, "coefficient": float(np.real(heff.matrix[0, 0]))}

    U_exact = None
    if exact:
        H = ms_hamiltonian(sp, drive)
        w, d = drive.omega_x, drive.detuning
        period = common_period([d, d + w, d - w])
        span = period or 2 * np.pi / w
        omega_max = abs(d) + w
        grid_omega = max(omega_max, spectral_bound(H, np.linspace(0, span, 257)))
        grid = dy.uniform_grid(T, grid_omega, period=period)
        res = dy.evolve_timedep(H, hs.identity(sp), grid, omega_max=omega_max,
                                period=period, estimate_error=estimate_error)
        U_exact = res.propagator.matrix
        T = float(grid[-1] - grid[0])
        diag.update(steps=res.steps, error_estimate=res.error_estimate, period=period)
    U_eff = dy.static_propagator(heff.op, T).matrix
    target = hs.embed_factors(sp, ideal_ms(x * T), [0, 1]).matrix

    sector_eff, sector_exact, mutual = {}, {}, {}
    leak = 0.0
    for n in sectors:
        psi = hs.basis_state(sp, (GROUND, GROUND, n)).amplitudes
        ideal = target @ psi
        e = U_eff @ psi
        sector_eff[n] = float(min(1.0, abs(np.vdot(ideal, e)) ** 2))
        if U_exact is not None:
            f = U_exact @ psi
            sector_exact[n] = float(min(1.0, abs(np.vdot(ideal, f)) ** 2))
            mutual[n] = float(min(1.0, abs(np.vdot(e, f)) ** 2))
            leak = max(leak, hs.truncation_leakage(hs.StateVector(sp, f)))
    U = U_exact if U_exact is not None else U_eff
    sector = sector_exact if U_exact is not None else sector_eff
    diag.update(effective_sector_fidelities=sector_eff, mutual_fidelity=mutual,
                gap=(1 - min(mutual.values())) if mutual else None)
    if psi0 is not None:
        final = hs.StateVector(sp, U @ psi0.amplitudes)
        diag["final_effective"] = hs.StateVector(sp, U_eff @ psi0.amplitudes)
    else:
        final = hs.Operator(sp, U)
    return GateReport(final=final, fidelity=min(sector.values()), duration=T,
                      sector_fidelities=sector, leakage=leak, diagnostics=diag)


def ms_gap(delta: float, chi_target: float = 1 / 400, rabi: float = 0.5,
           cutoff: int = 8, sectors=(0, 1, 2)) -> float:
    """1 - min over sectors of |<exact|effective>|^2 at fixed chi."""
    drive = ms_drive_for_chi(chi_target, delta, rabi)
    return ms_gate(drive, sectors=sectors, cutoff=cutoff, estimate_error=False).diagnostics["gap"]


def gate_time_readings(omega_x: float = 2 * np.pi * 500e3, ratio: float = 4500.0,
                       quoted: float = 50e-3, factor: float = 3.0) -> dict:
    """Gate durations implied by a population oscillation quoted as ``ratio`` x omega_x.

    A frequency above omega_x cannot give a slow gate, so the number is read
    as a slowness ratio. Each reading maps to a duration (s); ``consistent``
    marks those within ``factor`` of the quoted gate time.
    """
    chi_rad = omega_x / ratio
    chi_cyc = omega_x / (2 * np.pi) / ratio
    readings = {
        "quarter_oscillation": np.pi / (2 * chi_rad),
        "full_oscillation": 2 * np.pi / chi_rad,
        "full_oscillation_cyclic": 2 * np.pi / chi_cyc,
    }
    return {k: {"duration": float(v), "consistent": bool(quoted / factor <= v <= quoted * factor)}
            for k, v in readings.items()}
