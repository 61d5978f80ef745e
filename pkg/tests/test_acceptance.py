"""
Acceptance criteria, each at its stated tolerance.

Every test prints one PASS/FAIL line (collected again in the terminal
summary) and then asserts the same condition. Criterion 1 cannot be met by a
correct simulation; it is run as stated and marked as an expected failure.
"""
import json
import warnings

import numpy as np
import pytest

from phonon_bus import chain as ch
from phonon_bus import dynamics as dy
from phonon_bus import effham as eh
from phonon_bus import hilbert as hs
from phonon_bus.cli import main
from phonon_bus.errors import RegimeWarning
from phonon_bus.hilbert import EXCITED, GROUND
from phonon_bus.schemes import (
    LaserDrive, crot_sequence, dhm_phase_gate, ms_drive_for_chi, ms_gate, stirap_pulses,
    stirap_transfer,
)
from phonon_bus.schemes.heating import simulate_heating
from phonon_bus.schemes.kick import kick_gate
from phonon_bus.schemes.ms import ideal_ms, ms_gap
from phonon_bus.schemes.sjm import SINGLE_S_PROGRAM

MASS = 40 * ch.AMU
W = 2 * np.pi * 1e6
PERIOD = 2 * np.pi / W


@pytest.mark.xfail(strict=True, reason=(
    "for a field with exponential correlations the exact COM rate is "
    "1 / (tau_N (1 + omega_x^2 T^2)), which is far below 1 / tau_N once T >> 2 pi / omega_x"))
def test_c01_heating_rate(record):
    T = 20 * PERIOD
    worst, parts = 0.0, []
    for N in (1, 2, 3):
        noise = dy.NoiseField(1e-3, T, seed=100 + N)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RegimeWarning)
            res = simulate_heating(ch.IonChain(N, MASS, W), noise, 40 * T, (1,), 200)
        ratio = res.rate[0] * res.tau
        worst = max(worst, abs(ratio - 1))
        parts.append(f"N={N} rate*tau_N={ratio:.3g} (exact {res.exact_rate[0] * res.tau:.3g})")
    ok = worst <= 0.15
    record(1, ok, "COM heating rate vs 1/tau_N within 15% at T = 20 periods: " + ", ".join(parts))
    assert ok


def test_c02_com_only_coupling(record):
    chain = ch.IonChain(3, MASS, W)
    noise = dy.NoiseField(1e-2, 2 * PERIOD, seed=2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        res = simulate_heating(chain, noise, 10 * PERIOD, (1, 2, 3), 200)
        # independent check with the truncated-Fock integrator
        integ = simulate_heating(chain, noise, 10 * PERIOD, (2, 3), 2, method="integrate",
                                 cutoff=10, n_samples=21)
    stretch = float(max(res.mean[1:].max(), integ.mean.max()))
    com = float(res.mean[0, -1])
    ok = stretch < 1e-8 and com > 1e-3
    record(2, ok, f"N=3 uniform field, 10 periods: max <n_2>, <n_3> = {stretch:.2e} "
                  f"(COM reaches {com:.3g})")
    assert ok


def test_c03_spacing_exponent(record):
    fit = ch.spacing_exponent(range(2, 61))
    ok = abs(fit.exponent + 0.56) <= 0.03
    record(3, ok, f"min spacing exponent over N = 2..60 is {fit.exponent:.4f} (target -0.56 +- 0.03)")
    assert ok


def test_c04_normal_modes(record):
    errs = []
    for N, refs in ((2, [np.sqrt(3)]), (3, [np.sqrt(3), np.sqrt(29 / 5)])):
        modes = ch.normal_modes(ch.IonChain(N, MASS, W))
        for m, ref in zip(modes[1:], refs):
            errs.append(abs(m.omega_p / modes[0].omega_p - ref) / ref)
    worst = max(errs)
    ok = worst < 1e-10
    record(4, ok, f"omega_2/omega_1 = sqrt 3 (N=2,3), omega_3/omega_1 = sqrt(29/5): "
                  f"max relative error {worst:.1e}")
    assert ok


def test_c05_reducer(record):
    Om, eta, d = 0.5, 0.25, 20.0
    sp = hs.space(hs.IonLevels(2), hs.IonLevels(2), hs.PhononMode(8))
    H = eh.reduce(eh.ms_terms(sp, [0, 1], 2, Om, eta, d)).matrix
    J = hs.collective_spin(sp, [0, 1])
    Jy2 = (J.y @ J.y).matrix
    keep = hs.below_edge_mask(sp)
    A, B = H[np.ix_(keep, keep)], Jy2[np.ix_(keep, keep)]
    c = np.vdot(B, A).real / np.vdot(B, B).real
    resid = np.max(np.abs(A - c * B)) / abs(c)
    ref = Om ** 2 * eta ** 2 * 2 / ((d - 1) * (d + 1))
    rel = abs(abs(c) - ref) / ref
    gap20 = ms_gap(20.0, sectors=(0, 1, 2))
    gap40 = ms_gap(40.0, sectors=(0, 1, 2))
    ok = rel < 1e-12 and resid < 1e-12 and gap20 < 1e-2 and gap40 < gap20
    record(5, ok, f"reduced MS terms = c J_y^2 (residual {resid:.1e}), |c| rel. error {rel:.1e}; "
                  f"gap {gap20:.2e} at delta=20, {gap40:.2e} at delta=40")
    assert ok


def test_c06_phase_gate(record):
    S, _ = dhm_phase_gate(mode="analytic", sectors=range(8), cutoff=10)
    sp = S.space
    diag = np.diag(S.matrix)
    exact = all(diag[sp.index((EXCITED, n))] == (-1) ** n and diag[sp.index((GROUND, n))] == 1
                for n in range(11))
    exact = exact and np.count_nonzero(S.matrix - np.diag(diag)) == 0
    drive = LaserDrive(25.0, 50.0, 0.1, kind="standing_wave")
    _, rep = dhm_phase_gate(drive, "integrated", sectors=range(4))
    ok = exact and rep.fidelity > 0.99
    record(6, ok, f"analytic S_t phases exact: {exact}; integrated at Delta = 50 omega_x, "
                  f"n = 0..3: fidelity {rep.fidelity:.4f}")
    assert ok


def test_c07_stirap(record):
    sectors = [0, 1, 2]
    cutoff = 5
    pump, stokes = stirap_pulses(100.0, 1.0, "+")
    plus = stirap_transfer(pump, stokes, "+", sectors=sectors, cutoff=cutoff)
    pump, stokes = stirap_pulses(100.0, 1.0, "-")
    minus = stirap_transfer(pump, stokes, "-", sectors=sectors, cutoff=cutoff)
    U = minus.diagnostics["propagator"].matrix @ plus.diagnostics["propagator"].matrix
    sp = plus.diagnostics["propagator"].space
    rt = [abs(U[sp.index((1, n)), sp.index((1, n))]) ** 2 for n in sectors]
    f = list(plus.sector_fidelities.values())
    spread = max(f) - min(f)
    ok = min(f) >= 0.99 and spread < 0.01 and min(rt) >= 0.98
    record(7, ok, f"A+ at T Omega = 100: fidelities {', '.join(f'{x:.4f}' for x in f)} "
                  f"(spread {spread:.1e}); A- A+ return {', '.join(f'{x:.4f}' for x in rt)}")
    assert ok


def test_c08_crot(record):
    rep = crot_sequence(sectors=range(6))
    dev = max(rep.diagnostics["sector_deviation"].values())
    single = crot_sequence(SINGLE_S_PROGRAM, sectors=range(6))
    blocks = single.diagnostics["sector_unitaries"]
    differ = any(not np.allclose(blocks[0], blocks[n]) for n in range(1, 6))
    ok = dev == 0.0 and differ
    record(8, ok, f"double-S program: max |U_n - diag(1,1,1,-1)| = {dev:.1e} for n = 0..5; "
                  f"single-S sector phases differ: {differ} "
                  f"(overlaps {', '.join(f'{v:.0f}' for v in single.sector_fidelities.values())})")
    assert ok


def test_c09_ms_number_independence(record):
    drive = ms_drive_for_chi(1 / 400, 20.0)
    rep = ms_gate(drive, exact=False, sectors=(0, 1, 2))
    f = rep.diagnostics["effective_sector_fidelities"]
    spread = max(f.values()) - min(f.values())
    # |gg> under the time-averaged generator against the bare 4x4 exponential
    sp = hs.space(hs.IonLevels(2), hs.IonLevels(2), hs.PhononMode(8))
    heff = eh.reduce(eh.ms_terms(sp, [0, 1], 2, drive.rabi, drive.eta, drive.detuning))
    chi = drive.rabi ** 2 * drive.eta ** 2 * 2 / ((drive.detuning - 1) * (drive.detuning + 1))
    psi = hs.basis_state(sp, (GROUND, GROUND, 0))
    out = dy.evolve_static(heff.op, psi, np.pi / 2 / chi).state
    gg = np.zeros(4)
    gg[3] = 1.0
    oracle = ideal_ms(np.pi / 2) @ gg
    ref = hs.StateVector(sp, np.kron(oracle, np.eye(9)[0]))
    fid = hs.fidelity(out, ref)
    rho = hs.reduced_density(out, [0])
    purity = float(np.trace(rho @ rho).real)
    ok = spread < 1e-6 and fid >= 1 - 1e-9
    record(9, ok, f"effective sector fidelities n = 0,1,2 spread {spread:.1e}; |gg> at "
                  f"chi t = pi/2 vs oracle 1 - F = {1 - fid:.1e} (ion purity {purity:.6f})")
    assert ok


def test_c10_kick_gate(record):
    chain = ch.IonChain(2, MASS, W)
    one = kick_gate(chain, 1.4, 1, wait=2 * np.pi)
    two = kick_gate(chain, 1.4, 2, max_periods=20)
    ok = one.fidelity > 0.999 and two.fidelity < 0.999
    record(10, ok, f"single mode at t = 2 pi/omega_x: fidelity {one.fidelity:.12f}, residual "
                   f"excitation {one.diagnostics['residual_excitation']:.1e}; two modes: best "
                   f"{two.fidelity:.5f} at t = {two.duration / (2 * np.pi):.2f} periods")
    assert ok


SCHEMES = {
    "modes": {"params": {"N": 5}},
    "heat": {"params": {"N": 3, "duration": 800.0, "coherence_time": 40.0, "n_samples": 41,
                        "e_rms": 0.003}, "numerics": {"trials": 64}},
    "kick": {"params": {"max_periods": 3}},
    "ms": {"params": {"sectors": [0, 1]}},
    "dhm": {"params": {"sectors": [0, 1]}},
    "stirap": {"params": {"sectors": [0, 1]}},
    "crot": {"params": {"sectors": [0, 1, 2]}},
    "spectator": {"params": {"N": 4, "populations": {"2": 1, "4": 2}}},
}


def test_c11_determinism(tmp_path, record):
    checked, mismatched = 0, []
    for scheme, cfg in SCHEMES.items():
        path = tmp_path / f"{scheme}.json"
        path.write_text(json.dumps(cfg))
        outs = []
        for threads in ("1", "4"):
            out = tmp_path / f"{scheme}_{threads}"
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                code = main([scheme, "--config", str(path), "--seed", "20240611",
                             "--threads", threads, "--out", str(out)])
            assert code == 0, scheme
            outs.append(out)
        for f in sorted(outs[0].iterdir()):
            checked += 1
            if f.read_bytes() != (outs[1] / f.name).read_bytes():
                mismatched.append(f.name)
    ok = checked > 0 and not mismatched
    record(11, ok, f"{checked} CSV files over {len(SCHEMES)} schemes byte-identical with 1 and "
                   f"4 threads" + (f"; differing: {mismatched}" if mismatched else ""))
    assert ok
