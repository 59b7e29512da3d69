"""Optimise the planar cantilever and write a VTK file of the extracted lattice.

    python demos/cantilever_topopt.py [p] [out.vtk]
"""
import sys

from latticeskin.extraction import extraction_pipeline
from latticeskin.io import export_vtk
from latticeskin.problems import cantilever_2d
from latticeskin.topopt import PowerPenalisation, Structure, TopOptConfig, intermediate_fraction, run_topopt

p = float(sys.argv[1]) if len(sys.argv) > 1 else 4.0
out = sys.argv[2] if len(sys.argv) > 2 else "cantilever.vtk"

lat = cantilever_2d(cell=0.5)
res = run_topopt(Structure(lat), TopOptConfig(volume_fraction=0.4, radius=1.0, penalisation=PowerPenalisation(p)))
rep = extraction_pipeline(res.lattice, res.areas, 1e-3)
print(f"J = {res.J:.4f} after {len(res.J_history) - 1} iterations ({res.status})")
print(f"intermediate struts: {100 * intermediate_fraction(res.areas, lat.reference_areas):.1f}%")
print(*rep.lines(), sep="\n")
export_vtk(out, res.lattice, kept=rep.kept)
