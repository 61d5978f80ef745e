"""
Conditional phase from a detuned standing wave plus adiabatic passage on the
control ion.

Target ion at a node of a standing wave detuned by Delta: the time-averaged
coupling is (Omega^2 eta^2 / 2 Delta)(2n + 1) sigma_z. After removing the level
shift, a pulse of length tau = pi Delta / (Omega eta)^2 gives

    S_t = exp(-i pi n (sigma_z + 1/2)),

i.e. a sign (-1)^n on the excited target state. The control ion uses four
levels; adiabatic passage A+ maps |1>|n> to |2>|n+1> through the auxiliary
level |3>.
"""
from __future__ import annotations

import warnings

import numpy as np

from .. import dynamics as dy
from .. import effham as eh
from .. import hilbert as hs
from ..chain import IonChain, normal_modes
from ..errors import RegimeWarning
from ..hilbert import EXCITED, GROUND
from ._common import GateReport, LaserDrive, common_period, gate_overlap, spectral_bound

DEFAULT_PROGRAM = ("S_t", "A+", "S_t", "A-")
SINGLE_S_PROGRAM = ("A+", "S_t", "A-")
STEP_NAMES = {"S_t": "S_t", "A+": "A+", "A-": "A-", "A+_c": "A+", "A-_c": "A-"}

ADIABATIC_THRESHOLD = 20.0
INTEGRATED_MIN_DETUNING = 10.0


# ---------------------------------------------------------------- S_t

def s_gate(sp: hs.SpaceDescriptor, ion: int, mode: int) -> hs.Operator:
    """exp(-i pi n (sigma_z + 1/2)) built from exact signs (-1)^(n [excited])."""
    dims = sp.dims
    labels = np.indices(dims).reshape(len(dims), -1)
    exponent = labels[mode] * (labels[ion] == EXCITED)
    return hs.Operator(sp, np.diag(np.where(exponent % 2 == 1, -1.0, 1.0)))


def dhm_hamiltonian(sp: hs.SpaceDescriptor, drive: LaserDrive, ion: int = 0, mode: int = 1,
                    compensate: bool = True):
    """Node-coupled standing wave, plus the static shift that leaves n (sigma_z + 1/2).

    Returns (H(t), effective Hamiltonian, compensation operator).
    """
    s = hs.spin_ops(sp, ion)
    a, ad = hs.ladder(sp, mode)
    g = drive.rabi * drive.eta / 2
    w, D = drive.omega_x, drive.detuning
    H_terms = [
        (g * (s.plus @ a), lambda t: np.exp(1j * (D - w) * t)),
        (g * (s.plus @ ad), lambda t: np.exp(1j * (D + w) * t)),
        (g * (ad @ s.minus), lambda t: np.exp(-1j * (D - w) * t)),
        (g * (a @ s.minus), lambda t: np.exp(-1j * (D + w) * t)),
    ]
    heff = eh.reduce(eh.standing_wave_terms(sp, ion, mode, drive.rabi, drive.eta, D, w))
    rate = (drive.rabi * drive.eta) ** 2 / D
    generator = rate * (hs.number(sp, mode) @ (s.z + 0.5))
    comp = generator - heff.op
    if compensate:
        H_terms.append(comp)
    return dy.TimeDependentHamiltonian(H_terms), heff, comp


def dhm_duration(drive: LaserDrive) -> float:
    return float(np.pi * drive.detuning / (drive.rabi * drive.eta) ** 2)


def dhm_phase_gate(drive: LaserDrive | None = None, mode: str = "analytic",
                   sectors=range(4), cutoff: int | None = None,
                   estimate_error: bool = False):
    """S_t on (target ion, bus), analytically or by integrating the full coupling.

    Returns (S_t Operator, GateReport). In integrated mode the report compares
    the realized propagator with S_t sector by sector and over the whole span
    of tested sectors.
    """
    sectors = list(sectors)
    # two-phonon (2 omega_x) side processes reach n + 2
    cutoff = cutoff or max(sectors) + 4
    if max(sectors) > cutoff - 2:
        raise ValueError(f"cutoff {cutoff} too small for sector {max(sectors)}")
    sp = hs.space(hs.IonLevels(2), hs.PhononMode(cutoff))
    S = s_gate(sp, 0, 1)
    if mode == "analytic":
        duration = dhm_duration(drive) if drive is not None else float("nan")
        return S, GateReport(final=S, fidelity=1.0, duration=duration,
                             sector_fidelities={n: 1.0 for n in sectors})
    if mode != "integrated":
        raise ValueError(f"mode must be 'analytic' or 'integrated', got {mode!r}")
    if drive is None or drive.kind != "standing_wave":
        raise ValueError("integrated mode needs a standing-wave drive")
    if abs(drive.detuning) < INTEGRATED_MIN_DETUNING * drive.omega_x:
        raise ValueError(f"integrated S_t needs |Delta| >= {INTEGRATED_MIN_DETUNING:g} omega_x; "
                         f"got {abs(drive.detuning) / drive.omega_x:.3g}")
    H, heff, comp = dhm_hamiltonian(sp, drive)
    tau = dhm_duration(drive)
    w, D = drive.omega_x, drive.detuning
    period = common_period([D - w, D + w])
    omega_max = abs(D) + w
    span = period or 2 * np.pi / w
    grid_omega = max(omega_max, spectral_bound(H, np.linspace(0, span, 129)))
    grid = dy.uniform_grid(tau, grid_omega, period=period)
    res = dy.evolve_timedep(H, hs.identity(sp), grid, omega_max=omega_max, period=period,
                            estimate_error=estimate_error)
    U = res.propagator.matrix
    Sm = S.matrix
    sector = {}
    idx_all = []
    for n in sectors:
        idx = [sp.index((EXCITED, n)), sp.index((GROUND, n))]
        idx_all += idx
        sector[n] = gate_overlap(U[np.ix_(idx, idx)], Sm[np.ix_(idx, idx)])
    overall = gate_overlap(U[np.ix_(idx_all, idx_all)], Sm[np.ix_(idx_all, idx_all)])
    leak = max(hs.truncation_leakage(hs.StateVector(sp, U[:, i])) for i in idx_all)
    report = GateReport(final=hs.Operator(sp, U), fidelity=overall,
                        duration=float(grid[-1] - grid[0]), sector_fidelities=sector,
                        leakage=leak,
                        diagnostics={"steps": res.steps, "period": period,
                                     "error_estimate": res.error_estimate,
                                     "compensation": np.real(np.diag(comp.matrix)).tolist()})
    return S, report


# ---------------------------------------------------------------- adiabatic passage

def ideal_passage(sp: hs.SpaceDescriptor, control: int, mode: int,
                  direction: str = "+") -> hs.Operator:
    """A+: |1,n> -> |2,n+1>, |2,n+1> -> -|1,n> for n < cutoff; identity elsewhere.

    A- is the inverse (transpose) of A+.
    """
    if sp.dims[control] != 4:
        raise ValueError("the control ion needs four levels")
    c = sp.dims[mode] - 1
    d = 4 * (c + 1)
    A = np.eye(d)

    def k(level, n):
        return level * (c + 1) + n

    for n in range(c):
        i, j = k(1, n), k(2, n + 1)
        A[i, i] = A[j, j] = 0.0
        A[j, i] = 1.0
        A[i, j] = -1.0
    if direction == "-":
        A = A.T
    elif direction != "+":
        raise ValueError(f"direction must be '+' or '-', got {direction!r}")
    return hs.embed_factors(sp, A, [control, mode])


def stirap_pulses(T: float, peak: float = 1.0, direction: str = "+",
                  stokes_peak: float | None = None, shape: str = "sin2",
                  window: float = 0.75):
    """Counter-intuitive (pump, Stokes) envelopes on [0, T].

    The leading pulse occupies [0, window T], the trailing one
    [(1 - window) T, T]. For A+ the Stokes pulse leads; for A- the roles swap.
    """
    if not 0.5 < window < 1:
        raise ValueError("window must be in (0.5, 1)")
    sp_ = peak if stokes_peak is None else stokes_peak
    lead = (0.0, window * T)
    trail = ((1 - window) * T, T)
    if direction == "+":
        pump = dy.PulseEnvelope(shape, peak, *trail)
        stokes = dy.PulseEnvelope(shape, sp_, *lead)
    elif direction == "-":
        pump = dy.PulseEnvelope(shape, peak, *lead)
        stokes = dy.PulseEnvelope(shape, sp_, *trail)
    else:
        raise ValueError(f"direction must be '+' or '-', got {direction!r}")
    return pump, stokes


def stirap_hamiltonian(sp: hs.SpaceDescriptor, pump, stokes, detuning: float = 0.0,
                       control: int = 0, mode: int = 1):
    """Delta |3><3| + Omega_P/2 (|3><1| + h.c.) + Omega_S/2 (|3><2| a + h.c.)."""
    a, ad = hs.ladder(sp, mode)
    t31 = hs.transition(sp, control, 3, 1)
    t32 = hs.transition(sp, control, 3, 2)
    terms = [(0.5 * (t31 + t31.dag()), pump), (0.5 * (t32 @ a + ad @ t32.dag()), stokes)]
    if detuning:
        terms.append(detuning * hs.projector(sp, control, 3))
    return dy.TimeDependentHamiltonian(terms)


def stirap_transfer(pump: dy.PulseEnvelope, stokes: dy.PulseEnvelope, direction: str = "+",
                    psi0: hs.StateVector | None = None, sectors=(0, 1, 2),
                    cutoff: int | None = None, detuning: float = 0.0,
                    estimate_error: bool = False) -> GateReport:
    """Integrate the passage and report transfer fidelity per bus sector.

    For A+ sector n starts in |1>|n> and the target is |2>|n+1>; for A- it
    starts in |2>|n+1> and the target is |1>|n>.
    """
    if direction not in ("+", "-"):
        raise ValueError(f"direction must be '+' or '-', got {direction!r}")
    sectors = list(sectors)
    cutoff = cutoff or max(sectors) + 3
    if max(sectors) + 1 > cutoff - 1:
        raise ValueError(f"cutoff {cutoff} too small for sector {max(sectors)}")
    t0 = min(pump.start, stokes.start)
    t1 = max(pump.end, stokes.end)
    T = t1 - t0
    adiabaticity = T * min(pump.peak, stokes.peak)
    if adiabaticity < ADIABATIC_THRESHOLD:
        warnings.warn(f"T * Omega_peak = {adiabaticity:.3g} is below {ADIABATIC_THRESHOLD:g}; "
                      "the passage may not be adiabatic", RegimeWarning, stacklevel=2)
    sp = hs.space(hs.IonLevels(4), hs.PhononMode(cutoff))
    H = stirap_hamiltonian(sp, pump, stokes, detuning)
    bound = abs(detuning) + 0.5 * (pump.peak + stokes.peak * np.sqrt(cutoff)) + 1e-12
    grid = dy.uniform_grid(T, 1.1 * bound, t0=t0)
    res = dy.evolve_timedep(H, hs.identity(sp), grid, e_ops={"p3": hs.projector(sp, 0, 3)},
                            estimate_error=estimate_error)
    U = res.propagator.matrix
    p3 = res.expect["p3"].real
    sector, p3max = {}, {}
    leak = 0.0
    for n in sectors:
        src, dst = ((1, n), (2, n + 1)) if direction == "+" else ((2, n + 1), (1, n))
        i, j = sp.index(src), sp.index(dst)
        sector[n] = float(min(1.0, abs(U[j, i]) ** 2))
        p3max[n] = float(np.max(p3[:, i]))
        leak = max(leak, hs.truncation_leakage(hs.StateVector(sp, U[:, i])))
    idle = [sp.index((0, n)) for n in range(cutoff + 1)]
    idle_dev = float(np.max(np.abs(U[np.ix_(idle, idle)] - np.eye(len(idle)))))
    final = hs.StateVector(sp, U @ psi0.amplitudes) if psi0 is not None else hs.Operator(sp, U)
    return GateReport(final=final, fidelity=min(sector.values()), duration=T,
                      sector_fidelities=sector, leakage=leak,
                      diagnostics={"p3_max": p3max, "idle_deviation": idle_dev,
                                   "adiabaticity": adiabaticity, "steps": res.steps,
                                   "error_estimate": res.error_estimate,
                                   "propagator": res.propagator})


# ---------------------------------------------------------------- CROT

def _step_unitary(name, sp, integrated, dhm_drive, stirap_T, stirap_peak):
    if name == "S_t":
        if not integrated:
            return s_gate(sp, 1, 2).matrix
        _, rep = dhm_phase_gate(dhm_drive, "integrated", sectors=[0], cutoff=sp.dims[2] - 1)
        return hs.embed_factors(sp, rep.final.matrix, [1, 2]).matrix
    direction = name[1]
    if not integrated:
        return ideal_passage(sp, 0, 2, direction).matrix
    pump, stokes = stirap_pulses(stirap_T, stirap_peak, direction)
    rep = stirap_transfer(pump, stokes, direction, sectors=[0], cutoff=sp.dims[2] - 1)
    return hs.embed_factors(sp, rep.final.matrix, [0, 2]).matrix


def crot_sequence(program=DEFAULT_PROGRAM, psi0: hs.StateVector | None = None,
                  sectors=range(6), cutoff: int | None = None, integrated=(),
                  dhm_drive: LaserDrive | None = None, stirap_T: float = 100.0,
                  stirap_peak: float = 1.0) -> GateReport:
    """Compose the program (applied left to right) on control(4) x target(2) x bus.

    ``integrated`` lists step positions (ints) or names to simulate instead of
    using the analytic S_t / ideal A+-. Each sector n reports the 4x4 block
    on {0g, 0e, 1g, 1e} x |n>, compared with diag(1, 1, 1, -1).
    """
    steps = []
    for name in program:
        if name not in STEP_NAMES:
            raise ValueError(f"unknown step {name!r}; allowed: {sorted(STEP_NAMES)}")
        steps.append(STEP_NAMES[name])
    sectors = list(sectors)
    cutoff = cutoff or max(sectors) + 2
    if max(sectors) > cutoff - 1:
        raise ValueError(f"cutoff {cutoff} too small for sector {max(sectors)}")
    sp = hs.space(hs.IonLevels(4), hs.IonLevels(2), hs.PhononMode(cutoff))
    integrated = set(integrated)
    U = np.eye(sp.dim, dtype=complex)
    cache = {}
    for k, name in enumerate(steps):
        integ = k in integrated or name in integrated or program[k] in integrated
        key = (name, integ)
        if key not in cache:
            cache[key] = _step_unitary(name, sp, integ, dhm_drive, stirap_T, stirap_peak)
        U = cache[key] @ U
    cz = np.diag([1.0, 1.0, 1.0, -1.0])
    sector, blocks, deviation, returned = {}, {}, {}, {}
    for n in sectors:
        idx = [sp.index((c, t, n)) for c in (0, 1) for t in (GROUND, EXCITED)]
        M = U[np.ix_(idx, idx)]
        blocks[n] = M
        sector[n] = gate_overlap(M, cz)
        deviation[n] = float(np.max(np.abs(M - cz)))
        returned[n] = float(np.sum(np.abs(M) ** 2) / 4)
    final = hs.StateVector(sp, U @ psi0.amplitudes) if psi0 is not None else hs.Operator(sp, U)
    return GateReport(final=final, fidelity=min(sector.values()), duration=float("nan"),
                      sector_fidelities=sector, leakage=0.0,
                      diagnostics={"sector_unitaries": blocks, "sector_deviation": deviation,
                                   "bus_return": returned, "program": tuple(program)})


# ---------------------------------------------------------------- spectators

def spectator_phase_error(chain: IonChain, bus_mode: int = 1, spectator_populations=None,
                          ion: int = 0) -> dict:
    """Extra target phase from occupied spectator modes during S_t.

    With H_eff = (Omega^2 / 2 Delta) sum_p eta_p^2 (2 n_p + 1) sigma_z and
    tau = pi Delta / (Omega eta_bus)^2, the e-g phase relative to empty
    spectators is pi sum_p (eta_p / eta_bus)^2 n_p. The ratio depends only on
    the mode vectors and frequencies.
    """
    pops = dict(spectator_populations or {})
    modes = normal_modes(chain)
    if not 1 <= bus_mode <= chain.N:
        raise ValueError(f"bus mode {bus_mode} out of range")
    bus = modes[bus_mode - 1]
    b_bus = float(bus.b[ion])
    if abs(b_bus) < 1e-12:
        raise ValueError(f"ion {ion} does not couple to the bus mode")
    terms = {}
    for p, n in pops.items():
        if p == bus_mode:
            raise ValueError("spectator populations must exclude the bus mode")
        if not 1 <= p <= chain.N:
            raise ValueError(f"mode index {p} out of range")
        if n < 0:
            raise ValueError("occupations must be non-negative")
        m = modes[p - 1]
        ratio = (float(m.b[ion]) ** 2 / m.omega_p) / (b_bus ** 2 / bus.omega_p)
        terms[p] = float(np.pi * ratio * n)
    dphi = float(sum(terms.values()))
    loss = (1 - np.cos(dphi)) / 3
    return {"delta_phi": dphi, "terms": terms, "fidelity_loss": float(loss),
            "gate_fidelity": float(1 - loss)}
