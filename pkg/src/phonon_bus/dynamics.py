"""
Unitary time evolution, classical noise fields and Monte Carlo averaging.

Time-dependent evolution uses midpoint-sampled piecewise-constant
propagators: on every grid step H is frozen at the step midpoint and the step
propagator is the exact exponential of that frozen Hamiltonian (through a
Hermitian eigendecomposition). Each step is unitary to rounding, and the
scheme is second order in the step size.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.signal import lfilter

from . import hilbert as hs
from .errors import NormDriftError, UnderResolvedGridError

NORM_TOL = 1e-8
RESOLUTION = 0.05
CHUNK = 2048


# ---------------------------------------------------------------- Hamiltonians

class TimeDependentHamiltonian:
    """H(t) = sum_k c_k(t) H_k with scalar coefficient functions.

    ``terms`` is a list whose items are either a constant ``Operator`` or a
    pair ``(Operator, coeff)`` where ``coeff(t)`` accepts numpy arrays.
    """

    def __init__(self, terms):
        self._ops = []
        self._coeffs = []
        for item in terms:
            op, coeff = (item, None) if isinstance(item, hs.Operator) else item
            self._ops.append(op)
            self._coeffs.append(coeff)
        if not self._ops:
            raise ValueError("a Hamiltonian needs at least one term")
        self.space = self._ops[0].space
        for op in self._ops:
            if op.space != self.space:
                raise ValueError("all Hamiltonian terms must share one space")
        self._stack = np.stack([op.matrix for op in self._ops])

    def matrices(self, ts) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        c = np.empty((len(ts), len(self._ops)), dtype=complex)
        for k, coeff in enumerate(self._coeffs):
            c[:, k] = 1.0 if coeff is None else np.broadcast_to(coeff(ts), ts.shape)
        return np.einsum("tk,kij->tij", c, self._stack)

    def __call__(self, t) -> hs.Operator:
        return hs.Operator(self.space, self.matrices([t])[0])


def _hamiltonian_batch(H, ts) -> np.ndarray:
    if isinstance(H, TimeDependentHamiltonian):
        return H.matrices(ts)
    out = []
    for t in ts:
        h = H(t)
        out.append(h.matrix if isinstance(h, hs.Operator) else np.asarray(h, dtype=complex))
    return np.array(out)


# ---------------------------------------------------------------- results

@dataclass
class EvolutionResult:
    state: hs.StateVector | None
    times: np.ndarray
    expect: dict = field(default_factory=dict)
    leakage: float = 0.0
    steps: int = 0
    norm_drift: float = 0.0
    omega_max: float = 0.0
    error_estimate: float | None = None
    propagator: hs.Operator | None = None


def _initial_columns(psi0):
    if isinstance(psi0, hs.StateVector):
        return psi0.space, psi0.amplitudes.reshape(-1, 1).astype(complex)
    if isinstance(psi0, hs.Operator):
        return psi0.space, np.array(psi0.matrix, dtype=complex)
    raise TypeError("psi0 must be a StateVector or an Operator")


def _check_norm(y0: np.ndarray, y: np.ndarray, tol: float) -> float:
    drift = float(np.max(np.abs(np.linalg.norm(y, axis=0) - np.linalg.norm(y0, axis=0))))
    if drift > tol:
        raise NormDriftError(f"norm drift {drift:.3e} exceeds tolerance {tol:.1e}")
    return drift


def _finish(sp, y0, y, times, steps, omega_max, tol, expect=None, err=None):
    drift = _check_norm(y0, y, tol)
    if y.shape[1] == 1:
        state = hs.StateVector(sp, y[:, 0])
        return EvolutionResult(state, times, expect or {}, hs.truncation_leakage(state),
                               steps, drift, omega_max, err)
    return EvolutionResult(None, times, expect or {}, 0.0, steps, drift, omega_max, err,
                           propagator=hs.Operator(sp, y))


def evolve_static(H: hs.Operator, psi0, t: float, hbar: float = 1.0,
                  norm_tol: float = NORM_TOL) -> EvolutionResult:
    """psi(t) = exp(-i H t / hbar) psi0 for a Hermitian, time-independent H."""
    if not H.is_hermitian(1e-10 * max(1.0, float(np.max(np.abs(H.matrix), initial=0.0)))):
        raise ValueError("evolve_static requires a Hermitian Hamiltonian")
    sp, y0 = _initial_columns(psi0)
    if sp != H.space:
        raise hs.HilbertSpaceError("Hamiltonian and initial state live on different spaces")
    w, V = np.linalg.eigh(H.matrix)
    U = (V * np.exp(-1j * w * t / hbar)) @ V.conj().T
    y = U @ y0
    wmax = float(np.max(np.abs(w))) / hbar if w.size else 0.0
    return _finish(sp, y0, y, np.array([0.0, t]), 1, wmax, norm_tol)


def static_propagator(H: hs.Operator, t: float, hbar: float = 1.0) -> hs.Operator:
    w, V = np.linalg.eigh(H.matrix)
    return hs.Operator(H.space, (V * np.exp(-1j * w * t / hbar)) @ V.conj().T)


def _step_unitaries(Hs: np.ndarray, dts: np.ndarray, hbar: float):
    w, V = np.linalg.eigh(Hs)
    phase = np.exp(-1j * w * (dts / hbar)[:, None])
    U = (V * phase[:, None, :]) @ np.conj(np.swapaxes(V, 1, 2))
    return U, float(np.max(np.abs(w))) / hbar


def _propagate(H, y, grid: np.ndarray, hbar: float, omega_max: float | None,
               check: bool, sample: Callable | None = None):
    """Apply the midpoint propagators over ``grid`` to the columns of ``y``."""
    mids = 0.5 * (grid[1:] + grid[:-1])
    dts = np.diff(grid)
    seen = float(omega_max or 0.0)
    for start in range(0, len(mids), CHUNK):
        sl = slice(start, start + CHUNK)
        Hs = _hamiltonian_batch(H, mids[sl])
        if check:
            skew = float(np.max(np.abs(Hs - np.conj(np.swapaxes(Hs, 1, 2)))))
            if skew > 1e-10 * max(1.0, float(np.max(np.abs(Hs)))):
                raise ValueError(f"H(t) is not Hermitian (max |H - H^dag| = {skew:.3g})")
        U, wmax = _step_unitaries(Hs, dts[sl], hbar)
        seen = max(seen, wmax)
        if check:
            worst = float(np.max(dts[sl])) * seen
            if worst >= RESOLUTION:
                raise UnderResolvedGridError(
                    f"grid under-resolved: dt * omega_max = {worst:.3g} >= {RESOLUTION} "
                    f"(omega_max = {seen:.6g})", omega_max=seen)
        for k in range(U.shape[0]):
            y = U[k] @ y
            if sample is not None:
                sample(start + k + 1, y)
    return y, seen


def _uniform_step(grid: np.ndarray) -> float:
    d = np.diff(grid)
    if not np.allclose(d, d[0], rtol=1e-9, atol=0):
        raise ValueError("periodic propagation needs a uniform grid")
    return float(d[0])


def evolve_timedep(H, psi0, t_grid, hbar: float = 1.0, *,
                   omega_max: float | None = None,
                   period: float | None = None,
                   e_ops: Mapping[str, hs.Operator] | None = None,
                   estimate_error: bool = True,
                   norm_tol: float = NORM_TOL) -> EvolutionResult:
    """Integrate i hbar d/dt psi = H(t) psi over the points of ``t_grid``.

    ``H`` is a ``TimeDependentHamiltonian`` or any callable returning an
    Operator. ``omega_max`` declares the fastest explicit frequency in H(t);
    the grid must satisfy dt * max(omega_max, ||H||/hbar) < 0.05.

    If ``period`` is given, H(t) must be periodic with that period and the
    uniform grid step must divide it; whole periods are then applied as powers
    of the one-period propagator, which is the same product of step
    propagators evaluated without repetition. Expectation sampling is not
    available in that mode.

    ``psi0`` may be an Operator (e.g. the identity) to obtain the propagator.
    With ``estimate_error`` the same evolution on the grid with doubled steps
    is run and ||psi_fine - psi_coarse|| / 3 is reported.
    """
    grid = np.asarray(t_grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("t_grid must be a strictly increasing 1-D array of length >= 2")
    sp, y0 = _initial_columns(psi0)
    if sp != getattr(H, "space", sp):
        raise hs.HilbertSpaceError("Hamiltonian and initial state live on different spaces")
    expect = None

    if period is not None:
        y, seen = _periodic(H, y0, grid, hbar, omega_max, period, check=True)
        err = None
        if estimate_error:
            coarse = _coarse(grid)
            try:
                yc, _ = _periodic(H, y0, coarse, hbar, omega_max, period, check=False)
                err = float(np.max(np.linalg.norm(y - yc, axis=0))) / 3
            except ValueError:
                err = None
        return _finish(sp, y0, y, grid, len(grid) - 1, seen, norm_tol, None, err)

    sample = None
    if e_ops:
        # one column per initial state; a single state gives 1-D traces
        names = list(e_ops)
        mats = [e_ops[k].matrix for k in names]
        ncol = y0.shape[1]
        expect = {k: np.empty((len(grid), ncol), dtype=complex) for k in names}

        def sample(i, y):
            for k, m in zip(names, mats):
                expect[k][i] = np.einsum("ij,ij->j", y.conj(), m @ y)

        sample(0, y0)
    y, seen = _propagate(H, y0, grid, hbar, omega_max, True, sample)
    if expect is not None and y0.shape[1] == 1:
        expect = {k: v[:, 0] for k, v in expect.items()}
    err = None
    if estimate_error and len(grid) > 2:
        yc, _ = _propagate(H, y0, _coarse(grid), hbar, omega_max, False)
        err = float(np.max(np.linalg.norm(y - yc, axis=0))) / 3
    return _finish(sp, y0, y, grid, len(grid) - 1, seen, norm_tol, expect, err)


def _coarse(grid):
    coarse = grid[::2]
    if coarse[-1] != grid[-1]:
        coarse = np.append(coarse, grid[-1])
    return coarse


def _periodic(H, y0, grid, hbar, omega_max, period, check):
    dt = _uniform_step(grid)
    m_float = period / dt
    m = int(round(m_float))
    if m < 1 or abs(m_float - m) > 1e-6 * m_float:
        raise ValueError(f"grid step {dt:.6g} does not divide the period {period:.6g}")
    steps = len(grid) - 1
    q, r = divmod(steps, m)
    d = y0.shape[0]
    one = grid[0] + dt * np.arange(m + 1)
    U_P, seen = _propagate(H, np.eye(d, dtype=complex), one, hbar, omega_max, check)
    y = np.linalg.matrix_power(U_P, q) @ y0 if q else y0
    if r:
        U_r, _ = _propagate(H, np.eye(d, dtype=complex), one[: r + 1], hbar, omega_max, False)
        y = U_r @ y
    return y, seen


def propagator(H, t_grid, hbar: float = 1.0, **kwargs) -> hs.Operator:
    """Full propagator U(t_end, t_start) on the grid (see ``evolve_timedep``)."""
    res = evolve_timedep(H, hs.identity(H.space), t_grid, hbar, **kwargs)
    return res.propagator


def uniform_grid(duration: float, omega_max: float, resolution: float = 0.9 * RESOLUTION,
                 t0: float = 0.0, period: float | None = None) -> np.ndarray:
    """Uniform grid with dt * omega_max <= resolution.

    With ``period`` the step is chosen to divide the period exactly, and the
    duration is rounded to the nearest whole step.
    """
    if period is not None:
        m = max(2, int(np.ceil(period * omega_max / resolution)))
        m += m % 2  # even, so the doubled-step error grid also divides the period
        dt = period / m
        n = max(1, int(round(duration / dt)))
        return t0 + dt * np.arange(n + 1)
    n = max(1, int(np.ceil(duration * omega_max / resolution)))
    return np.linspace(t0, t0 + duration, n + 1)


# ---------------------------------------------------------------- pulses

@dataclass(frozen=True)
class PulseEnvelope:
    """Non-negative, continuous Rabi-frequency envelope.

    ``sin2``: peak * sin^2(pi (t - start) / (end - start)) inside the window.
    ``gaussian``: a Gaussian of width ``sigma`` centred in the window, shifted
    down by its edge value and clipped at zero so it is continuous.
    ``constant``: peak at all times.
    """

    shape: str
    peak: float
    start: float = 0.0
    end: float = 1.0
    sigma: float | None = None

    def __post_init__(self):
        if self.shape not in ("sin2", "gaussian", "constant"):
            raise ValueError(f"unknown pulse shape {self.shape!r}")
        if self.peak < 0:
            raise ValueError("pulse peak must be non-negative")
        if self.shape != "constant" and not self.end > self.start:
            raise ValueError("pulse window must have end > start")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.shape == "constant":
            return np.full(t.shape, float(self.peak))
        x = np.clip((t - self.start) / (self.end - self.start), 0.0, 1.0)
        if self.shape == "sin2":
            return self.peak * np.sin(np.pi * x) ** 2
        sigma = self.sigma or (self.end - self.start) / 6
        centre = 0.5 * (self.start + self.end)
        edge = np.exp(-((self.end - centre) ** 2) / (2 * sigma ** 2))
        g = np.exp(-((t - centre) ** 2) / (2 * sigma ** 2))
        return self.peak * np.clip((g - edge) / (1 - edge), 0.0, None) * ((x > 0) & (x < 1))


# ---------------------------------------------------------------- noise

def stream_rng(seed: int, stream_id: int) -> np.random.Generator:
    """Independent generator for one stream.

    Stream ``i`` of master seed ``s`` is ``SeedSequence(s, spawn_key=(i,))``,
    identical to ``SeedSequence(s).spawn(i + 1)[i]``.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class NoiseField:
    """Stationary Gaussian field E_x(t) with RMS ``e_rms`` and coherence time.

    ``model="ou"``: Ornstein-Uhlenbeck, autocorrelation e_rms^2 exp(-|tau|/T).
    ``model="piecewise"``: independent Gaussian values held for blocks of
    length T with a random block phase, autocorrelation
    e_rms^2 max(0, 1 - |tau|/T).
    """

    e_rms: float
    coherence_time: float
    model: str = "ou"
    seed: int = 0

    def __post_init__(self):
        if self.e_rms < 0:
            raise ValueError("e_rms must be non-negative")
        if not self.coherence_time > 0:
            raise ValueError("coherence_time must be positive")
        if self.model not in ("ou", "piecewise"):
            raise ValueError(f"unknown noise model {self.model!r}")

    def autocorrelation(self, tau):
        tau = np.abs(np.asarray(tau, dtype=float))
        if self.model == "ou":
            return self.e_rms ** 2 * np.exp(-tau / self.coherence_time)
        return self.e_rms ** 2 * np.clip(1 - tau / self.coherence_time, 0, None)

    def spectral_density(self, omega):
        """Two-sided S(w) = integral of the autocorrelation times exp(i w tau)."""
        w = np.asarray(omega, dtype=float)
        T = self.coherence_time
        if self.model == "ou":
            return self.e_rms ** 2 * 2 * T / (1 + (w * T) ** 2)
        return self.e_rms ** 2 * T * np.sinc(w * T / (2 * np.pi)) ** 2


def sample_field(noise: NoiseField, dt: float, duration: float, stream_id: int = 0,
                 rng: np.random.Generator | None = None) -> np.ndarray:
    """Field values on [k dt, (k+1) dt), k = 0 .. ceil(duration/dt) - 1.

    The OU process uses the exact Gaussian transition kernel and starts from
    its stationary distribution, so the statistics hold for any dt.
    """
    if dt > noise.coherence_time / 20 * (1 + 1e-12):
        raise ValueError(
            f"dt = {dt:.3g} is too coarse; need dt <= coherence_time/20 = "
            f"{noise.coherence_time / 20:.3g}")
    n = max(1, int(np.ceil(duration / dt - 1e-9)))
    if noise.e_rms == 0:
        return np.zeros(n)
    rng = rng or stream_rng(noise.seed, stream_id)
    if noise.model == "ou":
        decay = np.exp(-dt / noise.coherence_time)
        xi = rng.standard_normal(n)
        out = np.empty(n)
        out[0] = xi[0]
        if n > 1:
            # x_k = decay x_{k-1} + sqrt(1 - decay^2) xi_k
            out[1:], _ = lfilter([np.sqrt(1 - decay ** 2)], [1.0, -decay], xi[1:],
                                 zi=[decay * xi[0]])
        return noise.e_rms * out
    T = noise.coherence_time
    offset = rng.uniform(0, T)
    blocks = np.floor((np.arange(n) * dt + offset) / T).astype(int)
    values = rng.standard_normal(blocks[-1] + 1)
    return noise.e_rms * values[blocks]


# ---------------------------------------------------------------- Monte Carlo

@dataclass(frozen=True)
class MonteCarloEstimate:
    mean: np.ndarray
    stderr: np.ndarray
    trials: int
    samples: np.ndarray | None = field(default=None, repr=False)


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("PHONON_BUS_THREADS", "1")))
    except ValueError:
        return 1


def monte_carlo(experiment: Callable[[np.random.Generator, int], Mapping[str, object]],
                trials: int, master_seed: int, threads: int | None = None,
                keep_samples: bool = False) -> dict[str, MonteCarloEstimate]:
    """Average ``experiment(rng, i)`` over ``trials`` independent trajectories.

    Trajectory ``i`` receives ``stream_rng(master_seed, i)`` and nothing else
    random, and results are reduced in trial order, so the output is the same
    bit for bit for any thread count.
    """
    if trials < 2:
        raise ValueError("monte_carlo needs at least 2 trials")
    threads = threads or default_threads()

    def one(i):
        return experiment(stream_rng(master_seed, i), i)

    if threads == 1:
        results = [one(i) for i in range(trials)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(trials)))
    out = {}
    for key in results[0]:
        stack = np.array([np.asarray(r[key], dtype=float) for r in results])
        # trial axis last and contiguous: numpy reduces it pairwise, in fixed order
        flat = np.ascontiguousarray(np.moveaxis(stack, 0, -1))
        mean = np.sum(flat, axis=-1) / trials
        dev = flat - mean[..., None]
        var = np.sum(dev * dev, axis=-1) / (trials - 1)
        out[key] = MonteCarloEstimate(mean, np.sqrt(var / trials), trials,
                                      stack if keep_samples else None)
    return out
