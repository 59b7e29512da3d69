"""Lattice-skin structures: coupled thin-shell and pin-jointed lattice analysis,
lattice topology optimisation and FFD shape optimisation."""

from .geometry import LatticeModel, generate_grid_lattice, lattice_volume
from .topopt import Structure, TopOptConfig, run_topopt

__version__ = "0.1.0"

__all__ = ["LatticeModel", "Structure", "TopOptConfig", "generate_grid_lattice", "lattice_volume",
           "run_topopt", "__version__"]
