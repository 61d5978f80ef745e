"""
Heating of the axial modes by a stochastic, spatially uniform electric field.

Each mode p sees the drive H = i hbar (u_p a_p^dag - u_p^* a_p) with

    u_p(t) = i e E(t) exp(i w_p t) sum_n b_n^(p) / sqrt(2 M hbar w_p),

so every trajectory is an exact displacement: a_p -> a_p + alpha_p(t) with
alpha_p(t) = int_0^t u_p. Only the COM mode has sum_n b_n^(p) != 0
(it equals sqrt(N)).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .. import dynamics as dy
from .. import hilbert as hs
from ..chain import HBAR, IonChain, normal_modes
from ..errors import RegimeWarning

REGIME_RATIO = 10.0


def heating_time(chain: IonChain, noise: dy.NoiseField) -> float:
    """tau_N = M hbar w_x / (N e^2 E_rms^2 T); infinite when the field is off."""
    ratio = noise.coherence_time * chain.omega_x / (2 * np.pi)
    if ratio < REGIME_RATIO:
        warnings.warn(f"coherence time is only {ratio:.3g} trap periods; the heating-time "
                      f"formula assumes T >> 2 pi / omega_x", RegimeWarning, stacklevel=2)
    if noise.e_rms == 0:
        return math.inf
    return chain.mass * HBAR * chain.omega_x / (
        chain.N * chain.charge ** 2 * noise.e_rms ** 2 * noise.coherence_time)


def coupling(chain: IonChain, p: int) -> float:
    """|u_p| / |E|: e sum_n b_n^(p) / sqrt(2 M hbar w_p)."""
    m = normal_modes(chain)[p - 1]
    s = float(np.sum(m.b))
    return chain.charge * s / np.sqrt(2 * chain.mass * HBAR * m.omega_p)


def heating_rate(chain: IonChain, noise: dy.NoiseField, p: int = 1) -> float:
    """Long-time d<n_p>/dt = |u_p / E|^2 S(w_p) for the field's spectral density.

    For the OU field at p = 1 this is 1 / (tau_N (1 + w_x^2 T^2)).
    """
    w = normal_modes(chain)[p - 1].omega_p
    return float(coupling(chain, p) ** 2 * noise.spectral_density(w))


@dataclass
class HeatingResult:
    times: np.ndarray
    modes: tuple
    mean: np.ndarray          # (modes, times)
    stderr: np.ndarray
    rate: np.ndarray          # fitted slope per mode
    rate_stderr: np.ndarray
    trials: int
    tau: float
    exact_rate: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def _initial(spec):
    """('fock', n) or ('coherent', beta) -> (n0, beta)."""
    if spec is None:
        return 0.0, 0j
    kind, value = spec
    if kind == "fock":
        if int(value) != value or value < 0:
            raise ValueError(f"Fock occupation must be a non-negative integer, got {value}")
        return float(value), 0j
    if kind == "coherent":
        return 0.0, complex(value)
    raise ValueError(f"unknown initial state kind {kind!r}")


def simulate_heating(chain: IonChain, noise: dy.NoiseField, duration: float,
                     modes=(1,), trials: int = 200, *, dt: float | None = None,
                     initial: dict | None = None, method: str = "displacement",
                     cutoff: int = 30, n_samples: int = 101,
                     fit_start: float | None = None,
                     master_seed: int | None = None,
                     threads: int | None = None) -> HeatingResult:
    """Monte Carlo average of <n_p>(t) under a uniform stochastic field.

    ``method="displacement"`` uses the exact coherent displacement of each
    trajectory; ``method="integrate"`` evolves a truncated Fock space with
    ``dynamics.evolve_timedep`` (slow, for cross-checks). The growth rate is
    a least-squares slope over t >= ``fit_start`` (default 3 coherence times).
    """
    if method not in ("displacement", "integrate"):
        raise ValueError(f"unknown method {method!r}")
    if duration <= 0:
        raise ValueError("duration must be positive")
    specs = normal_modes(chain)
    modes = tuple(int(p) for p in modes)
    for p in modes:
        if not 1 <= p <= chain.N:
            raise ValueError(f"mode index {p} out of range for N={chain.N}")
    omegas = np.array([specs[p - 1].omega_p for p in modes])
    kappa = np.array([coupling(chain, p) for p in modes])
    inits = [_initial((initial or {}).get(p)) for p in modes]
    if dt is None:
        dt = min(noise.coherence_time / 20, 0.04 / float(omegas.max()))
    n_steps = max(1, int(np.ceil(duration / dt - 1e-9)))
    t_edges = dt * np.arange(n_steps + 1)
    idx = np.unique(np.round(np.linspace(0, n_steps, n_samples)).astype(int))
    times = t_edges[idx]
    fit_start = 3 * noise.coherence_time if fit_start is None else fit_start
    fit = times >= fit_start
    if fit.sum() < 2:
        fit = times >= times[len(times) // 2]
    X = np.column_stack([times[fit], np.ones(fit.sum())])
    slope_weights = np.linalg.pinv(X)[0]

    # exact integral of exp(i w t) over each step
    step_phase = [(np.exp(1j * w * dt) - 1) / (1j * w) for w in omegas]
    seed = noise.seed if master_seed is None else master_seed

    def trajectory_displacement(rng, i):
        E = dy.sample_field(noise, dt, n_steps * dt, rng=rng)[:n_steps]
        out = {}
        for k, (w, kap, (n0, beta)) in enumerate(zip(omegas, kappa, inits)):
            inc = 1j * kap * E * np.exp(1j * w * t_edges[:-1]) * step_phase[k]
            alpha = np.concatenate([[0j], np.cumsum(inc)])[idx]
            n = n0 + np.abs(beta + alpha) ** 2
            out[f"n{modes[k]}"] = n
            out[f"rate{modes[k]}"] = float(slope_weights @ n[fit])
        return out

    def trajectory_integrate(rng, i):
        E = dy.sample_field(noise, dt, n_steps * dt, rng=rng)[:n_steps]
        out = {}
        for k, (w, kap, (n0, beta)) in enumerate(zip(omegas, kappa, inits)):
            sp = hs.space(hs.PhononMode(cutoff))
            a, ad = hs.ladder(sp, 0)
            num = hs.number(sp, 0)
            if beta != 0:
                psi0 = hs.StateVector(sp, hs.coherent_state(cutoff, beta).amplitudes)
            else:
                psi0 = hs.basis_state(sp, (int(n0),))

            def u(t, w=w, kap=kap):
                j = np.minimum((np.asarray(t) / dt).astype(int), n_steps - 1)
                return 1j * kap * E[j] * np.exp(1j * w * t)

            # H / hbar = i (u a^dag - u^* a)
            H = dy.TimeDependentHamiltonian([(1j * ad, u), (-1j * a, lambda t, u=u: np.conj(u(t)))])
            # split field steps so the drive strength is resolved too
            bound = w + 2 * abs(kap) * float(np.max(np.abs(E), initial=0.0)) * np.sqrt(cutoff)
            sub = max(1, int(np.ceil(dt * bound / (0.9 * dy.RESOLUTION))))
            fine = dt / sub * np.arange(n_steps * sub + 1)
            res = dy.evolve_timedep(H, psi0, fine, omega_max=float(w),
                                    e_ops={"n": num}, estimate_error=False)
            hs.check_leakage(res.state)
            n = res.expect["n"].real[idx * sub]
            out[f"n{modes[k]}"] = n
            out[f"rate{modes[k]}"] = float(slope_weights @ n[fit])
        return out

    exp_fn = trajectory_displacement if method == "displacement" else trajectory_integrate
    mc = dy.monte_carlo(exp_fn, trials, seed, threads)
    mean = np.array([mc[f"n{p}"].mean for p in modes])
    stderr = np.array([mc[f"n{p}"].stderr for p in modes])
    rate = np.array([float(mc[f"rate{p}"].mean) for p in modes])
    rate_err = np.array([float(mc[f"rate{p}"].stderr) for p in modes])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        tau = heating_time(chain, noise)
        exact = np.array([heating_rate(chain, noise, p) for p in modes])
    return HeatingResult(times, modes, mean, stderr, rate, rate_err, trials, tau, exact,
                         {"dt": dt, "steps": n_steps, "method": method,
                          "fit_start": float(fit_start)})
