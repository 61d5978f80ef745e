"""
Linear ion crystals in a harmonic trap: equilibrium positions, axial normal
modes and Lamb-Dicke couplings.

Positions are dimensionless, in units of the length scale
``l = (e^2 / (4 pi eps0 M omega_x^2))^(1/3)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import constants

from .errors import ConvergenceError

AMU = constants.atomic_mass
E_CHARGE = constants.e
HBAR = constants.hbar
EPS0 = constants.epsilon_0

FORCE_TOL = 1e-12


@dataclass(frozen=True)
class IonChain:
    """N identical ions sharing an axial trap of angular frequency ``omega_x``."""

    N: int
    mass: float
    omega_x: float
    charge: float = E_CHARGE

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"ion count must be a positive integer, got {self.N}")
        for name in ("mass", "omega_x", "charge"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be strictly positive, got {value}")

    @property
    def length_scale(self) -> float:
        return (self.charge ** 2 / (4 * np.pi * EPS0 * self.mass * self.omega_x ** 2)) ** (1 / 3)

    def positions(self) -> np.ndarray:
        """Equilibrium positions in metres."""
        return self.length_scale * equilibrium_positions(self.N)

    def modes(self) -> list["ModeSpec"]:
        return normal_modes(self)


@dataclass(frozen=True)
class ModeSpec:
    """One axial mode: index p (1 = COM), frequency and eigenvector b^(p)."""

    p: int
    omega_p: float
    b: np.ndarray
    omega_x: float
    eta: np.ndarray | None = None

    @property
    def ratio(self) -> float:
        return self.omega_p / self.omega_x


def force_residual(u: np.ndarray) -> np.ndarray:
    """u_m - sum_{n != m} sgn(m - n) / (u_m - u_n)^2 for sorted positions."""
    u = np.asarray(u, dtype=float)
    diff = u[:, None] - u[None, :]
    np.fill_diagonal(diff, np.inf)
    return u - np.sum(np.sign(diff) / diff ** 2, axis=1)


def coupling_matrix(u: np.ndarray) -> np.ndarray:
    """Hessian of the dimensionless potential at positions ``u``."""
    u = np.asarray(u, dtype=float)
    diff = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(diff, np.inf)
    off = -2.0 / diff ** 3
    A = off.copy()
    np.fill_diagonal(A, 1.0 - off.sum(axis=1))
    return A


@lru_cache(maxsize=256)
def _equilibrium(N: int, max_iter: int) -> tuple[float, ...]:
    if N == 1:
        return (0.0,)
    # uniform start spanning roughly the asymptotic crystal length
    half = 1.2 * N ** 0.44 if N > 2 else 0.63
    u = np.linspace(-half, half, N)
    res = force_residual(u)
    for _ in range(max_iter):
        err = np.max(np.abs(res))
        if err < FORCE_TOL:
            return tuple(u)
        step = np.linalg.solve(coupling_matrix(u), res)
        lam = 1.0
        while True:
            trial = u - lam * step
            # damping keeps the ordering intact and the residual decreasing
            if np.all(np.diff(trial) > 0):
                if np.max(np.abs(force_residual(trial))) < err or lam < 1e-4:
                    break
            lam *= 0.5
            if lam < 1e-12:
                raise ConvergenceError(
                    f"equilibrium for N={N}: line search failed at residual {err:.3e}",
                    residual=float(err))
        # the solution is mirror symmetric about the trap centre
        u = 0.5 * (trial - trial[::-1])
        res = force_residual(u)
    err = float(np.max(np.abs(res)))
    if err < FORCE_TOL:
        return tuple(u)
    raise ConvergenceError(
        f"equilibrium for N={N} did not converge: residual {err:.3e}", residual=err)


def equilibrium_positions(N: int, max_iter: int = 200) -> np.ndarray:
    """Dimensionless equilibrium positions u_1 < ... < u_N (damped Newton)."""
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    return np.array(_equilibrium(int(N), int(max_iter)))


def _fix_sign(v: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    return -v if nz.size and v[nz[0]] < 0 else v


def normal_modes(chain: IonChain) -> list[ModeSpec]:
    """Axial modes sorted by frequency; mode 1 is the centre-of-mass mode."""
    u = equilibrium_positions(chain.N)
    lam, vecs = np.linalg.eigh(coupling_matrix(u))
    order = np.argsort(lam)
    lam, vecs = lam[order], vecs[:, order]
    if lam[0] <= 0:
        raise ConvergenceError(
            f"non-positive coupling eigenvalue {lam[0]:.3e}: equilibrium is not a minimum")
    modes = []
    for p in range(chain.N):
        b = _fix_sign(vecs[:, p])
        if p == 0:
            # the COM eigenvalue is exactly 1 and b = (1, ..., 1)/sqrt(N)
            b = np.full(chain.N, 1.0 / np.sqrt(chain.N))
            omega = chain.omega_x
        else:
            omega = chain.omega_x * np.sqrt(lam[p])
        b.setflags(write=False)
        modes.append(ModeSpec(p=p + 1, omega_p=float(omega), b=b, omega_x=chain.omega_x))
    return modes


def lamb_dicke(chain: IonChain, mode: ModeSpec, k_eff: float) -> np.ndarray:
    """eta_{p,n} = k_eff sqrt(hbar / 2 M omega_p) b^(p)_n for every ion n."""
    if k_eff <= 0:
        raise ValueError("k_eff must be positive")
    return k_eff * np.sqrt(HBAR / (2 * chain.mass * mode.omega_p)) * np.asarray(mode.b)


def scaled_lamb_dicke(modes: list[ModeSpec], eta0: float) -> np.ndarray:
    """Dimensionless couplings eta0 * b^(p)_n * sqrt(omega_x / omega_p), shape (modes, ions).

    ``eta0`` is the single-ion Lamb-Dicke parameter at the trap frequency.
    """
    return np.array([eta0 * np.asarray(m.b) / np.sqrt(m.ratio) for m in modes])


def min_spacing(N: int) -> float:
    return float(np.min(np.diff(equilibrium_positions(N))))


@dataclass(frozen=True)
class SpacingFit:
    exponent: float
    prefactor: float
    residual: float
    N: np.ndarray
    spacing: np.ndarray


def spacing_exponent(N_range=range(2, 61)) -> SpacingFit:
    """Least-squares power law for the minimum adjacent spacing versus N."""
    Ns = np.asarray(list(N_range), dtype=int)
    if Ns.min() > 2 or Ns.max() < 40:
        raise ValueError("N_range must span at least [2, 40]")
    s = np.array([min_spacing(n) for n in Ns])
    X = np.column_stack([np.log(Ns), np.ones(len(Ns))])
    coef, res, *_ = np.linalg.lstsq(X, np.log(s), rcond=None)
    rms = float(np.sqrt(res[0] / len(Ns))) if res.size else 0.0
    return SpacingFit(float(coef[0]), float(np.exp(coef[1])), rms, Ns, s)
