"""
Time-averaged effective Hamiltonians for strongly detuned interactions.

An interaction-picture Hamiltonian written as a sum of harmonic terms

    H_I(t) = sum_m h_m exp(i w_m t) + h.c.

with pairwise distinct frequencies reduces, after dropping terms that
oscillate at |w_m - w_n| or |w_m + w_n|, to

    H_eff = sum_m [h_m, h_m^dagger] / (hbar w_m).

The ordering inside the commutator is the one obtained by carrying the
second-order (Markovian) expansion through term by term; it lowers |g> and
raises |e> for a red-detuned two-level coupling, i.e. it reproduces the
ordinary a.c. Stark shift, and it matches direct integration of the full
time-dependent problem (see ``tests/test_effham.py``).
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import hilbert as hs
from .errors import FrequencyCollisionError, HilbertSpaceError, RegimeWarning

COLLISION_RTOL = 1e-9
FLOOR_RTOL = 1e-6


@dataclass(frozen=True)
class HarmonicTerm:
    h: hs.Operator
    omega: float
    label: str = ""

    def __post_init__(self):
        if not np.isfinite(self.omega) or self.omega == 0:
            raise ValueError(f"harmonic term frequency must be finite and nonzero, got {self.omega}")


@dataclass(frozen=True)
class EffectiveHamiltonian:
    op: hs.Operator
    terms_used: tuple = field(default=())
    min_frequency_gap: float = np.inf

    @property
    def matrix(self) -> np.ndarray:
        return self.op.matrix


def _check_terms(terms: Sequence[HarmonicTerm], floor_rtol: float, collision_rtol: float):
    sp = terms[0].h.space
    for t in terms[1:]:
        if t.h.space != sp:
            raise HilbertSpaceError("all harmonic terms must share one space")
    wmax = max(abs(t.omega) for t in terms)
    for i, t in enumerate(terms):
        if abs(t.omega) < floor_rtol * wmax:
            raise FrequencyCollisionError(
                f"term {i} ({t.label or 'unnamed'}) has |omega| = {abs(t.omega):.3g}, "
                f"below the floor {floor_rtol:g} * {wmax:.3g}", pair=(i, i))
    for (i, a), (j, b) in itertools.combinations(enumerate(terms), 2):
        if abs(a.omega - b.omega) <= collision_rtol * max(abs(a.omega), abs(b.omega)):
            raise FrequencyCollisionError(
                f"terms {i} ({a.label or 'unnamed'}) and {j} ({b.label or 'unnamed'}) share "
                f"frequency {a.omega:.12g}; their cross terms would be secular", pair=(i, j))
    return sp


def frequency_gap(omegas: Sequence[float]) -> float:
    """Smallest |w_m - w_n| (m != n) or |w_m + w_n| (any m, n) in the set."""
    w = np.asarray(omegas, dtype=float)
    if w.size == 0:
        return np.inf
    sums = np.abs(w[:, None] + w[None, :])
    diffs = np.abs(w[:, None] - w[None, :])
    np.fill_diagonal(diffs, np.inf)
    return float(min(sums.min(), diffs.min()))


def reduce(terms: Sequence[HarmonicTerm], hbar: float = 1.0, *,
           space: hs.SpaceDescriptor | None = None,
           floor_rtol: float = FLOOR_RTOL,
           collision_rtol: float = COLLISION_RTOL) -> EffectiveHamiltonian:
    """Effective Hamiltonian sum_m [h_m, h_m^dagger] / (hbar w_m).

    Raises FrequencyCollisionError when two frequencies coincide (relative
    tolerance ``collision_rtol``) or one sits below ``floor_rtol`` times the
    largest. An empty list gives the zero operator on ``space``.
    """
    terms = list(terms)
    if not terms:
        warnings.warn("reduce() called with no terms; returning the zero operator",
                      RegimeWarning, stacklevel=2)
        if space is None:
            raise HilbertSpaceError("an empty term list needs an explicit space")
        return EffectiveHamiltonian(hs.zero(space))
    sp = _check_terms(terms, floor_rtol, collision_rtol)
    acc = np.zeros((sp.dim, sp.dim), dtype=complex)
    for t in terms:
        h = t.h.matrix
        acc += (h @ h.conj().T - h.conj().T @ h) / (hbar * t.omega)
    gap = frequency_gap([t.omega for t in terms])
    if gap == 0:
        warnings.warn("two terms have opposite frequencies; time averaging leaves "
                      "secular cross terms", RegimeWarning, stacklevel=2)
    # the sum is Hermitian analytically; strip rounding asymmetry
    acc = 0.5 * (acc + acc.conj().T)
    return EffectiveHamiltonian(
        hs.Operator(sp, acc),
        terms_used=tuple((t.label, t.omega) for t in terms),
        min_frequency_gap=gap)


# ---------------------------------------------------------------- fixtures

def ms_terms(sp: hs.SpaceDescriptor, ions: Sequence[int], mode: int, rabi: float,
             eta: float, delta: float, omega_x: float = 1.0, hbar: float = 1.0,
             carrier: bool = True) -> list[HarmonicTerm]:
    """Harmonic decomposition of the bichromatic (Molmer-Sorensen) coupling."""
    J = hs.collective_spin(sp, ions)
    a, ad = hs.ladder(sp, mode)
    terms = [
        HarmonicTerm(-hbar * rabi * eta * (ad @ J.y), delta + omega_x, "blue sideband"),
        HarmonicTerm(-hbar * rabi * eta * (J.y @ a), delta - omega_x, "red sideband"),
    ]
    if carrier:
        terms.insert(0, HarmonicTerm(hbar * rabi * J.x, delta, "carrier"))
    return terms


def standing_wave_terms(sp: hs.SpaceDescriptor, ion: int, mode: int, rabi: float,
                        eta: float, detuning: float, omega_x: float = 1.0,
                        hbar: float = 1.0) -> list[HarmonicTerm]:
    """Harmonic decomposition of a detuned standing wave with the ion at a node."""
    s = hs.spin_ops(sp, ion)
    a, ad = hs.ladder(sp, mode)
    g = hbar * rabi * eta / 2
    return [
        HarmonicTerm(g * (s.plus @ a), detuning - omega_x, "red sideband"),
        HarmonicTerm(g * (s.plus @ ad), detuning + omega_x, "blue sideband"),
    ]


@dataclass
class IdentityCheck:
    residuals: dict
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(r < self.tolerance for r in self.residuals.values())


def commutator_identities_check(cutoff: int = 6, tolerance: float = 1e-12) -> IdentityCheck:
    """Verify the commutator identities behind the MS and standing-wave reductions.

    Residuals are max-norms restricted to Fock states below the truncation edge.
    """
    ms_space = hs.space(hs.IonLevels(2), hs.IonLevels(2), hs.PhononMode(cutoff))
    J = hs.collective_spin(ms_space, [0, 1])
    a, ad = hs.ladder(ms_space, 2)
    keep = hs.below_edge_mask(ms_space)
    lhs = hs.commutator(J.y @ a, ad @ J.y).matrix - (J.y @ J.y).matrix
    res = {"[Jy a, a+ Jy] - Jy^2": float(np.max(np.abs(lhs[np.ix_(keep, keep)])))}

    sw_space = hs.space(hs.IonLevels(2), hs.PhononMode(cutoff))
    s = hs.spin_ops(sw_space, 0)
    a, ad = hs.ladder(sw_space, 1)
    n = hs.number(sw_space, 1)
    keep = hs.below_edge_mask(sw_space)
    lhs = hs.commutator(s.minus @ ad, s.plus @ a)
    rhs = (s.minus @ s.plus) @ n - (s.plus @ s.minus) @ (n + 1.0)
    diff = lhs.matrix - rhs.matrix
    res["[s- a+, s+ a] - (s-s+ n - s+s- (n+1))"] = float(np.max(np.abs(diff[np.ix_(keep, keep)])))
    return IdentityCheck(res, tolerance)
