"""Gate and transfer schemes built on the phonon bus."""
from ._common import GateReport, LaserDrive
from .heating import HeatingResult, heating_rate, heating_time, simulate_heating
from .kick import branch_separation, kick, kick_gate, kick_operator
from .ms import gate_time_readings, ms_drive_for_chi, ms_effective, ms_gate, ms_hamiltonian
from .sjm import (
    DEFAULT_PROGRAM, SINGLE_S_PROGRAM, crot_sequence, dhm_phase_gate, ideal_passage,
    s_gate, spectator_phase_error, stirap_pulses, stirap_transfer,
)

__all__ = [
    "GateReport", "LaserDrive", "HeatingResult", "heating_rate", "heating_time",
    "simulate_heating", "branch_separation", "kick", "kick_gate", "kick_operator",
    "gate_time_readings", "ms_drive_for_chi", "ms_effective", "ms_gate", "ms_hamiltonian",
    "DEFAULT_PROGRAM", "SINGLE_S_PROGRAM", "crot_sequence", "dhm_phase_gate",
    "ideal_passage", "s_gate", "spectator_phase_error", "stirap_pulses", "stirap_transfer",
]
