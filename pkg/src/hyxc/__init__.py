"""Hybrid Kohn-Sham / VQE exchange-correlation simulator.

A real-space Kohn-Sham solver whose exchange-correlation content is corrected
by reduced density matrices from a simulated variational quantum eigensolver,
working in a density-constrained (Zumbach-Maschke) orbital basis.
"""

from .config import RunConfig, load_config, parse_config
from .driver import LoopReport, run_outer_loop
from .grid import Field, Grid, InteractionKernel
from .integrals import HamiltonianTensors, build_tensors
from .rdm import RdmPair, energy_from_rdms
from .secondq import QubitOperator, build_qubit_hamiltonian, count_configurations, format_count
from .zm import ZmOrbitalSet, build_orbitals

__version__ = "0.1.0"

__all__ = [
    "Field", "Grid", "HamiltonianTensors", "InteractionKernel", "LoopReport", "QubitOperator",
    "RdmPair", "RunConfig", "ZmOrbitalSet", "build_orbitals", "build_qubit_hamiltonian", "build_tensors",
    "count_configurations", "energy_from_rdms", "format_count", "load_config", "parse_config",
    "run_outer_loop",
]
