"""
States and operators on composite spaces of few-level ions and truncated
phonon modes.

Basis ordering follows the factor order of the ``SpaceDescriptor`` with the
last factor varying fastest (``numpy.kron`` convention).

Qubit labelling: for a two-level ion, level 0 is the upper state |e> and
level 1 the lower state |g>, so that ``sigma_plus = |0><1|`` raises the ion.
With the default ``convention="half"``, ``sigma_z |e> = +1/2 |e>``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import reduce
from typing import NamedTuple, Sequence

import numpy as np
from scipy.linalg import expm

from .errors import HilbertSpaceError, TruncationLeakageError, TruncationWarning

EXCITED = 0
GROUND = 1

HERMITIAN_ATOL = 1e-12
LEAKAGE_LIMIT = 1e-4


@dataclass(frozen=True)
class IonLevels:
    d: int = 2

    def __post_init__(self):
        if not 2 <= int(self.d) <= 4:
            raise HilbertSpaceError(f"ion level count must be in [2, 4], got {self.d}")

    @property
    def dim(self) -> int:
        return int(self.d)


@dataclass(frozen=True)
class PhononMode:
    cutoff: int

    def __post_init__(self):
        if int(self.cutoff) < 1:
            raise HilbertSpaceError(f"phonon cutoff must be >= 1, got {self.cutoff}")

    @property
    def dim(self) -> int:
        return int(self.cutoff) + 1


@dataclass(frozen=True)
class SpaceDescriptor:
    factors: tuple

    def __post_init__(self):
        factors = tuple(self.factors)
        if not factors:
            raise HilbertSpaceError("a space needs at least one factor")
        for f in factors:
            if not isinstance(f, (IonLevels, PhononMode)):
                raise HilbertSpaceError(f"unknown factor type {f!r}")
        object.__setattr__(self, "factors", factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def __len__(self):
        return len(self.factors)

    def phonon_factors(self) -> list[int]:
        return [i for i, f in enumerate(self.factors) if isinstance(f, PhononMode)]

    def ion_factors(self) -> list[int]:
        return [i for i, f in enumerate(self.factors) if isinstance(f, IonLevels)]

    def index(self, labels: Sequence[int]) -> int:
        """Flat basis index of the product state with the given local labels."""
        if len(labels) != len(self.factors):
            raise HilbertSpaceError(
                f"expected {len(self.factors)} labels, got {len(labels)}")
        for lab, d in zip(labels, self.dims):
            if not 0 <= lab < d:
                raise HilbertSpaceError(f"label {lab} out of range for factor of dim {d}")
        return int(np.ravel_multi_index(tuple(labels), self.dims))

    def labels(self, index: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(index, self.dims))


def space(*factors) -> SpaceDescriptor:
    """Shorthand: ``space(IonLevels(2), PhononMode(10))``."""
    return SpaceDescriptor(tuple(factors))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class StateVector:
    space: SpaceDescriptor
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != self.space.dim:
            raise HilbertSpaceError(
                f"state has {amps.shape[0]} amplitudes, space dimension is {self.space.dim}")
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.space.dims)

    def __add__(self, other):
        _check_same_space(self, other)
        return StateVector(self.space, self.amplitudes + other.amplitudes)

    def __sub__(self, other):
        _check_same_space(self, other)
        return StateVector(self.space, self.amplitudes - other.amplitudes)

    def __mul__(self, c):
        return StateVector(self.space, c * self.amplitudes)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return StateVector(self.space, self.amplitudes / c)

    def normalized(self) -> "StateVector":
        return StateVector(self.space, self.amplitudes / self.norm)


@dataclass(frozen=True, eq=False)
class Operator:
    space: SpaceDescriptor
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        n = self.space.dim
        if m.shape != (n, n):
            raise HilbertSpaceError(f"operator shape {m.shape} does not match space dim {n}")
        object.__setattr__(self, "matrix", _frozen(m))

    def dag(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T)

    def is_hermitian(self, atol: float = HERMITIAN_ATOL) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0) <= atol)

    def __matmul__(self, other):
        _check_same_space(self, other)
        if isinstance(other, StateVector):
            return StateVector(self.space, self.matrix @ other.amplitudes)
        return Operator(self.space, self.matrix @ other.matrix)

    def __add__(self, other):
        if isinstance(other, Operator):
            _check_same_space(self, other)
            return Operator(self.space, self.matrix + other.matrix)
        # scalar: shift by a multiple of the identity
        return Operator(self.space, self.matrix + other * np.eye(self.space.dim))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * other

    def __rsub__(self, other):
        return (-1.0) * self + other

    def __neg__(self):
        return Operator(self.space, -self.matrix)

    def __mul__(self, c):
        if isinstance(c, (Operator, StateVector)):
            return NotImplemented
        return Operator(self.space, c * self.matrix)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return Operator(self.space, self.matrix / c)


def _check_same_space(a, b):
    if not isinstance(b, (Operator, StateVector)):
        raise TypeError(f"expected Operator or StateVector, got {type(b).__name__}")
    if a.space != b.space:
        raise HilbertSpaceError(f"space mismatch: {a.space} vs {b.space}")


# ---------------------------------------------------------------- builders

def identity(sp: SpaceDescriptor) -> Operator:
    return Operator(sp, np.eye(sp.dim))


def zero(sp: SpaceDescriptor) -> Operator:
    return Operator(sp, np.zeros((sp.dim, sp.dim)))


def embed(sp: SpaceDescriptor, local, factor: int) -> Operator:
    """Pad a single-factor matrix with identities on every other factor."""
    local = np.asarray(local.matrix if isinstance(local, Operator) else local, dtype=complex)
    if not 0 <= factor < len(sp):
        raise HilbertSpaceError(f"factor index {factor} out of range for {len(sp)} factors")
    d = sp.dims[factor]
    if local.shape != (d, d):
        raise HilbertSpaceError(f"local operator shape {local.shape} does not match factor dim {d}")
    left = int(np.prod(sp.dims[:factor]))
    right = int(np.prod(sp.dims[factor + 1:]))
    return Operator(sp, np.kron(np.kron(np.eye(left), local), np.eye(right)))


def compose(*items):
    """Tensor product of operators (or of states) defined on separate spaces."""
    if not items:
        raise HilbertSpaceError("compose needs at least one item")
    sp = SpaceDescriptor(tuple(f for it in items for f in it.space.factors))
    if all(isinstance(it, StateVector) for it in items):
        return StateVector(sp, reduce(np.kron, [it.amplitudes for it in items]))
    if all(isinstance(it, Operator) for it in items):
        return Operator(sp, reduce(np.kron, [it.matrix for it in items]))
    raise HilbertSpaceError("compose needs all operators or all states")


def basis_state(sp: SpaceDescriptor, labels: Sequence[int]) -> StateVector:
    amps = np.zeros(sp.dim, dtype=complex)
    amps[sp.index(labels)] = 1.0
    return StateVector(sp, amps)


def _require_phonon(sp: SpaceDescriptor, mode_index: int) -> PhononMode:
    if not 0 <= mode_index < len(sp):
        raise HilbertSpaceError(f"factor index {mode_index} out of range")
    f = sp.factors[mode_index]
    if not isinstance(f, PhononMode):
        raise HilbertSpaceError(
            f"factor {mode_index} is {type(f).__name__}, not a PhononMode")
    return f


def _require_ion(sp: SpaceDescriptor, ion_index: int) -> IonLevels:
    if not 0 <= ion_index < len(sp):
        raise HilbertSpaceError(f"factor index {ion_index} out of range")
    f = sp.factors[ion_index]
    if not isinstance(f, IonLevels):
        raise HilbertSpaceError(
            f"factor {ion_index} is {type(f).__name__}, not IonLevels")
    return f


def annihilation_matrix(cutoff: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, cutoff + 1, dtype=float)), 1).astype(complex)


def ladder(sp: SpaceDescriptor, mode_index: int) -> tuple[Operator, Operator]:
    """Annihilation and creation operators (a, a^dagger) of one phonon factor.

    Truncation is hard: ``a^dagger`` maps the top Fock state to zero.
    """
    mode = _require_phonon(sp, mode_index)
    a = embed(sp, annihilation_matrix(mode.cutoff), mode_index)
    return a, a.dag()


def number(sp: SpaceDescriptor, mode_index: int) -> Operator:
    mode = _require_phonon(sp, mode_index)
    return embed(sp, np.diag(np.arange(mode.dim, dtype=float)), mode_index)


def projector(sp: SpaceDescriptor, factor: int, level: int) -> Operator:
    d = sp.dims[factor]
    local = np.zeros((d, d))
    local[level, level] = 1.0
    return embed(sp, local, factor)


def transition(sp: SpaceDescriptor, factor: int, to_level: int, from_level: int) -> Operator:
    """|to><from| on one factor."""
    d = sp.dims[factor]
    local = np.zeros((d, d))
    local[to_level, from_level] = 1.0
    return embed(sp, local, factor)


class SpinOps(NamedTuple):
    plus: Operator
    minus: Operator
    z: Operator


class CollectiveSpin(NamedTuple):
    plus: Operator
    minus: Operator
    x: Operator
    y: Operator


def spin_ops(sp: SpaceDescriptor, ion_index: int, convention: str = "half",
             levels: tuple[int, int] = (EXCITED, GROUND)) -> SpinOps:
    """Raising, lowering and inversion operators for one ion.

    ``levels = (upper, lower)`` selects the transition; ``sigma_plus`` is
    ``|upper><lower|``. ``convention="half"`` gives sigma_z eigenvalues
    +-1/2, ``"pauli"`` gives +-1.
    """
    ion = _require_ion(sp, ion_index)
    upper, lower = levels
    if not (0 <= upper < ion.dim and 0 <= lower < ion.dim) or upper == lower:
        raise HilbertSpaceError(f"invalid level pair {levels} for a {ion.dim}-level ion")
    scale = {"half": 0.5, "pauli": 1.0}.get(convention)
    if scale is None:
        raise HilbertSpaceError(f"unknown sigma_z convention {convention!r}")
    plus = transition(sp, ion_index, upper, lower)
    minus = plus.dag()
    z = scale * (projector(sp, ion_index, upper) - projector(sp, ion_index, lower))
    return SpinOps(plus, minus, z)


def collective_spin(sp: SpaceDescriptor, ion_indices: Sequence[int]) -> CollectiveSpin:
    """J+ = sum_j sigma+_j, J_x = (J+ + J-)/2, J_y = (J+ - J-)/2i."""
    ion_indices = list(ion_indices)
    if not ion_indices:
        raise HilbertSpaceError("collective_spin needs at least one ion")
    plus = zero(sp)
    for j in ion_indices:
        plus = plus + spin_ops(sp, j).plus
    minus = plus.dag()
    return CollectiveSpin(plus, minus, 0.5 * (plus + minus), (plus - minus) / 2j)


def displacement(sp: SpaceDescriptor, mode_index: int, v: complex) -> Operator:
    """exp(v a^dagger - v* a) on the truncated mode, via the matrix exponential."""
    mode = _require_phonon(sp, mode_index)
    if abs(v) ** 2 > mode.cutoff / 4:
        warnings.warn(
            f"|v|^2 = {abs(v) ** 2:.3g} exceeds cutoff/4 = {mode.cutoff / 4:.3g}; "
            "displacement will be distorted by truncation",
            TruncationWarning, stacklevel=2)
    a = annihilation_matrix(mode.cutoff)
    return embed(sp, expm(v * a.conj().T - np.conj(v) * a), mode_index)


def coherent_state(cutoff: int, alpha: complex) -> StateVector:
    """Truncated coherent state from the Poisson series (renormalized)."""
    n = np.arange(cutoff + 1)
    log_fact = np.concatenate(([0.0], np.cumsum(np.log(np.arange(1, cutoff + 1)))))
    with np.errstate(divide="ignore"):
        mag = np.exp(-abs(alpha) ** 2 / 2 + n * np.log(abs(alpha)) - log_fact / 2) \
            if alpha != 0 else (n == 0).astype(float)
    amps = mag * np.exp(1j * n * np.angle(alpha))
    sp = SpaceDescriptor((PhononMode(cutoff),))
    return StateVector(sp, amps / np.linalg.norm(amps))


# ---------------------------------------------------------------- measures

def fidelity(psi: StateVector, phi: StateVector) -> float:
    """|<psi|phi>|^2, clipped into [0, 1] against rounding."""
    _check_same_space(psi, phi)
    f = abs(np.vdot(psi.amplitudes, phi.amplitudes)) ** 2
    return float(min(max(f, 0.0), 1.0))


def expectation(op: Operator, psi: StateVector) -> complex:
    _check_same_space(op, psi)
    return complex(np.vdot(psi.amplitudes, op.matrix @ psi.amplitudes))


def commutator(a: Operator, b: Operator) -> Operator:
    return a @ b - b @ a


def below_edge_mask(sp: SpaceDescriptor, margin: int = 1) -> np.ndarray:
    """Basis indices whose every phonon label is at most ``cutoff - margin``."""
    grids = np.indices(sp.dims).reshape(len(sp), -1)
    keep = np.ones(sp.dim, dtype=bool)
    for i in sp.phonon_factors():
        keep &= grids[i] <= sp.factors[i].cutoff - margin
    return keep


def truncation_leakage(psi: StateVector) -> float:
    """Largest population held in the top two Fock levels of any phonon factor."""
    probs = np.abs(psi.tensor()) ** 2
    worst = 0.0
    for i in psi.space.phonon_factors():
        cutoff = psi.space.factors[i].cutoff
        other = tuple(j for j in range(len(psi.space)) if j != i)
        marginal = probs.sum(axis=other)
        worst = max(worst, float(marginal[max(cutoff - 1, 0):].sum()))
    return worst


def check_leakage(psi: StateVector, limit: float = LEAKAGE_LIMIT) -> float:
    leak = truncation_leakage(psi)
    if leak > limit:
        raise TruncationLeakageError(
            f"truncation leakage {leak:.3g} exceeds {limit:.1g}; raise the Fock cutoff")
    return leak


def reduced_density(psi: StateVector, keep: Sequence[int]) -> np.ndarray:
    """Partial trace of |psi><psi| onto the listed factors (in their order)."""
    keep = list(keep)
    t = psi.tensor()
    drop = [i for i in range(len(psi.space)) if i not in keep]
    t = np.transpose(t, keep + drop)
    dk = int(np.prod([psi.space.dims[i] for i in keep]))
    m = t.reshape(dk, -1)
    return m @ m.conj().T


def embed_factors(sp: SpaceDescriptor, local, factors: Sequence[int]) -> Operator:
    """Embed an operator acting on several (not necessarily adjacent) factors.

    ``local`` acts on the tensor product of ``factors`` taken in the listed order.
    """
    factors = list(factors)
    local = np.asarray(local.matrix if isinstance(local, Operator) else local, dtype=complex)
    if len(set(factors)) != len(factors) or not all(0 <= f < len(sp) for f in factors):
        raise HilbertSpaceError(f"invalid factor list {factors}")
    sub = [sp.dims[f] for f in factors]
    dsub = int(np.prod(sub))
    if local.shape != (dsub, dsub):
        raise HilbertSpaceError(f"local operator shape {local.shape} does not match {sub}")
    rest = [i for i in range(len(sp)) if i not in factors]
    drest = int(np.prod([sp.dims[i] for i in rest]))
    full = np.kron(local, np.eye(drest)).reshape(sub + [sp.dims[i] for i in rest]
                                                 + sub + [sp.dims[i] for i in rest])
    order = factors + rest
    inv = list(np.argsort(order))
    n = len(sp)
    full = full.transpose(inv + [n + i for i in inv])
    return Operator(sp, full.reshape(sp.dim, sp.dim))
