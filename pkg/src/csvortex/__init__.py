"""Numerical laboratory for gauged Schroedinger (Chern-Simons) vortex
dynamics on a flat torus: self-dual vortex construction, full-field
evolution, reduced moduli-space dynamics and the adiabatic-limit
experiments tying them together."""

from .grid import TorusGrid, make_grid
from .fields import FieldState, GaugeField, HiggsField, TangentField
from .zeros import VortexConfig, locate_zeros
from .vortex import BradlowViolation, KWSolution, reconstruct, solve_kw, solve_vortex
from .energetics import bogomolny, energy, energy_split, grad_U, grad_V
from .evolution import EvolutionState, evolve
from .snapshot import read_snapshot, write_snapshot

__all__ = [
    "TorusGrid", "make_grid",
    "FieldState", "GaugeField", "HiggsField", "TangentField",
    "VortexConfig", "locate_zeros",
    "BradlowViolation", "KWSolution", "reconstruct", "solve_kw", "solve_vortex",
    "bogomolny", "energy", "energy_split", "grad_U", "grad_V",
    "EvolutionState", "evolve",
    "read_snapshot", "write_snapshot",
]
