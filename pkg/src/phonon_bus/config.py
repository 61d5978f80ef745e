"""Experiment configuration schema (JSON files, validated before any computation)."""
from __future__ import annotations

import itertools
import math
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SCHEMES = ("modes", "heat", "kick", "ms", "dhm", "stirap", "crot", "spectator")
SWEEP_CAP = 10_000


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Numerics(_Strict):
    cutoff: Optional[int] = Field(None, ge=1)
    dt: Optional[float] = Field(None, gt=0)
    trials: int = Field(200, ge=2)
    threads: Optional[int] = Field(None, ge=1)


class Output(_Strict):
    dir: str = "out"
    prefix: str = ""
    svg: bool = False


class _ChainParams(_Strict):
    N: int = Field(3, ge=1, le=200)
    mass_amu: float = Field(40.0, gt=0)
    # rad/s in SI mode; ignored (= 1) in natural units
    omega_x: float = Field(2 * math.pi * 1e6, gt=0)


class ModesParams(_ChainParams):
    pass


class InitialState(_Strict):
    fock: Optional[int] = Field(None, ge=0)
    coherent: Optional[tuple[float, float]] = None

    @model_validator(mode="after")
    def _one(self):
        if (self.fock is None) == (self.coherent is None):
            raise ValueError("give exactly one of 'fock' or 'coherent'")
        return self


class HeatParams(_ChainParams):
    N: int = Field(1, ge=1, le=200)
    e_rms: float = Field(1e-3, ge=0)
    coherence_time: float = Field(20 * 2 * math.pi, gt=0)
    duration: float = Field(40 * 20 * 2 * math.pi, gt=0)
    model: Literal["ou", "piecewise"] = "ou"
    modes: Optional[list[int]] = None
    initial: dict[str, InitialState] = Field(default_factory=dict)
    method: Literal["displacement", "integrate"] = "displacement"
    n_samples: int = Field(101, ge=3, le=100_000)

    @model_validator(mode="after")
    def _modes(self):
        for p in self.modes or []:
            if not 1 <= p <= self.N:
                raise ValueError(f"mode {p} out of range for N={self.N}")
        for k in self.initial:
            if not k.isdigit() or not 1 <= int(k) <= self.N:
                raise ValueError(f"initial-state key {k!r} is not a mode index")
        return self


class KickParams(_ChainParams):
    N: int = Field(2, ge=2, le=200)
    eta0: float = Field(1.4, gt=0)
    n_modes: int = Field(1, ge=1, le=3)
    flip_time: float = Field(math.pi / 2, gt=0)
    wait: Optional[float] = Field(None, gt=0)
    max_periods: float = Field(20.0, gt=0, le=200)
    resolution: float = Field(0.0, ge=0)


class _GateParams(_Strict):
    # trap frequency in rad/s for SI mode; natural units fix it to 1
    omega_x: float = Field(1.0, gt=0)


class MSParams(_GateParams):
    delta: float = 20.0
    chi: float = 1 / 400
    rabi: float = Field(0.5, gt=0)
    eta: Optional[float] = Field(None, gt=0)
    duration: Optional[float] = Field(None, gt=0)
    sectors: list[int] = [0, 1, 2]
    exact: bool = True


class DHMParams(_GateParams):
    detuning: float = 50.0
    rabi: float = Field(25.0, gt=0)
    eta: float = Field(0.1, gt=0)
    mode: Literal["analytic", "integrated"] = "integrated"
    sectors: list[int] = [0, 1, 2, 3]


class StirapParams(_GateParams):
    T: float = Field(100.0, gt=0)
    peak: float = Field(1.0, gt=0)
    stokes_peak: Optional[float] = Field(None, gt=0)
    direction: Literal["+", "-"] = "+"
    detuning: float = 0.0
    window: float = Field(0.75, gt=0.5, lt=1.0)
    shape: Literal["sin2", "gaussian"] = "sin2"
    sectors: list[int] = [0, 1, 2]


class CrotParams(_GateParams):
    program: list[str] = ["S_t", "A+", "S_t", "A-"]
    sectors: list[int] = [0, 1, 2, 3, 4, 5]
    integrated: list[str] = []
    stirap_T: float = Field(100.0, gt=0)
    stirap_peak: float = Field(1.0, gt=0)
    dhm_detuning: float = 50.0
    dhm_rabi: float = Field(25.0, gt=0)
    dhm_eta: float = Field(0.1, gt=0)

    @field_validator("program")
    @classmethod
    def _steps(cls, v):
        allowed = {"S_t", "A+", "A-", "A+_c", "A-_c"}
        bad = [s for s in v if s not in allowed]
        if bad:
            raise ValueError(f"undefined step names {bad}; allowed: {sorted(allowed)}")
        if not v:
            raise ValueError("program must not be empty")
        return v


class SpectatorParams(_ChainParams):
    bus_mode: int = Field(1, ge=1)
    populations: dict[str, int] = Field(default_factory=lambda: {"2": 1})
    ion: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check(self):
        if self.bus_mode > self.N or self.ion >= self.N:
            raise ValueError("bus_mode and ion must lie inside the chain")
        for k, n in self.populations.items():
            if not k.isdigit() or not 1 <= int(k) <= self.N or int(k) == self.bus_mode:
                raise ValueError(f"population key {k!r} must name a non-bus mode")
            if n < 0:
                raise ValueError("occupations must be non-negative")
        return self


PARAMS = {
    "modes": ModesParams, "heat": HeatParams, "kick": KickParams, "ms": MSParams,
    "dhm": DHMParams, "stirap": StirapParams, "crot": CrotParams,
    "spectator": SpectatorParams,
}


class ExperimentConfig(_Strict):
    scheme: Literal[SCHEMES]
    units: Literal["natural", "si"] = "natural"
    seed: int = Field(0, ge=0, lt=2 ** 64)
    params: dict = Field(default_factory=dict)
    numerics: Numerics = Field(default_factory=Numerics)
    sweep: Optional[dict[str, list]] = None
    sweep_cap: int = Field(SWEEP_CAP, ge=1)
    output: Output = Field(default_factory=Output)

    @model_validator(mode="after")
    def _validate(self):
        model = PARAMS[self.scheme]
        # raises with field-level messages on unknown keys or bad values
        self.params = model(**self.params).model_dump(mode="json")
        if self.sweep:
            if len(self.sweep) > 3:
                raise ValueError("a sweep may vary at most 3 parameters")
            for k, values in self.sweep.items():
                if k not in model.model_fields:
                    raise ValueError(f"sweep parameter {k!r} is not a {self.scheme} parameter")
                if not values:
                    raise ValueError(f"sweep parameter {k!r} has no values")
            size = int(np.prod([len(v) for v in self.sweep.values()]))
            if size > self.sweep_cap:
                raise ValueError(f"sweep has {size} points, above the cap of {self.sweep_cap}")
            for point in self.grid():
                model(**{**self.params, **point})
        return self

    def grid(self) -> list[dict]:
        """Sweep points in lexicographic order over the sorted parameter names."""
        if not self.sweep:
            return [{}]
        keys = sorted(self.sweep)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(self.sweep[k] for k in keys))]

    def point_params(self, point: dict) -> BaseModel:
        return PARAMS[self.scheme](**{**self.params, **point})


def point_seed(master: int, index: int) -> int:
    """Seed of sweep point ``index``; a plain run is point 0."""
    ss = np.random.SeedSequence(int(master), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])
