"""Strut-area topology optimisation of lattices and lattice-skin structures.

Design variables are relative densities ``rho_e = A_e / Abar_e``. Stiffness
uses penalised densities ``rho*``; volume uses ``rho``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from math import comb
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .coupling import Coupling, CoupledSolution, SolverCache, solve_coupled
from .geometry import LatticeModel
from .optimizer import NlpProblem, OptimizeOptions, minimize
from .shell import ShellSystem
from .truss import assemble_truss, element_energies

RHO_MIN = 1e-6


class DomainError(ValueError):
    pass


# ---------------------------------------------------------------------------
# penalisation

@dataclass(frozen=True)
class PowerPenalisation:
    p: float = 3.0

    def __call__(self, rho):
        rho = np.asarray(rho, float)
        val = np.where(rho < 1.0, rho ** self.p, rho)
        der = np.where(rho < 1.0, self.p * rho ** (self.p - 1.0), 1.0)
        return val, der


@dataclass(frozen=True)
class BezierPenalisation:
    """Degree-5 Bezier curve on ``[0, 0.5]`` joined C1 to a line through ``(1, 1)``.

    Abscissae of the control points are equally spaced, so the curve is a
    Bernstein polynomial in ``2 rho``. Only the first five ordinates are free;
    the sixth follows from the C1 join.
    """
    ordinates: tuple = (0.0, 0.0, 0.01, 0.03, 0.064, 0.22)

    def __post_init__(self):
        y = np.asarray(self.ordinates, float)
        if y.shape != (6,):
            raise ValueError("six control ordinates required")
        if y[0] != 0.0:
            raise ValueError("curve must start at the origin")
        slope = (1.0 - y[5]) / 0.5
        if not np.isclose(10.0 * (y[5] - y[4]), slope, rtol=1e-9, atol=1e-12):
            raise ValueError("ordinates do not join the line with a continuous slope")
        if np.any(np.diff(y) < 0) or y[5] > 1:
            raise ValueError("ordinates must be non-decreasing and below one")

    @classmethod
    def from_join(cls, y1, y2, y3, y5):
        y4 = y5 - (1.0 - y5) / 5.0
        return cls((0.0, y1, y2, y3, y4, y5))

    def __call__(self, rho):
        rho = np.asarray(rho, float)
        y = np.asarray(self.ordinates)
        t = np.clip(2.0 * rho, 0.0, 1.0)
        k = np.arange(6)
        binom = np.array([comb(5, i) for i in k], float)
        B = binom * t[..., None] ** k * (1 - t[..., None]) ** (5 - k)
        dy = 5.0 * np.diff(y)
        B4 = np.array([comb(4, i) for i in range(5)], float) * t[..., None] ** np.arange(5) * (1 - t[..., None]) ** (4 - np.arange(5))
        curve = B @ y
        dcurve = 2.0 * (B4 @ dy)
        slope = (1.0 - y[5]) / 0.5
        line = y[5] + slope * (rho - 0.5)
        val = np.where(rho <= 0.5, curve, line)
        der = np.where(rho <= 0.5, dcurve, slope)
        return val, der


# presets of increasing steepness; shapes are our own
BEZIER_PRESETS = {
    "I": BezierPenalisation.from_join(0.02, 0.06, 0.12, 0.30),
    "II": BezierPenalisation.from_join(0.0, 0.01, 0.03, 0.22),
    "III": BezierPenalisation.from_join(0.0, 0.0, 0.005, 0.18),
}


def penalise(rho, fn):
    """Penalised density and its derivative."""
    rho = np.asarray(rho, float)
    if np.any(rho < -1e-12) or np.any(rho > 1 + 1e-12):
        raise DomainError("densities must lie in [0, 1]")
    return fn(np.clip(rho, 0.0, 1.0))


def make_penalisation(spec) -> object:
    """``{'kind': 'power', 'p': 3}`` or ``{'kind': 'bezier', 'preset': 'II'}`` or an ordinate list."""
    if isinstance(spec, (PowerPenalisation, BezierPenalisation)):
        return spec
    kind = spec.get("kind", "power")
    if kind == "power":
        return PowerPenalisation(float(spec.get("p", 3.0)))
    if kind == "bezier":
        if "ordinates" in spec:
            return BezierPenalisation(tuple(float(v) for v in spec["ordinates"]))
        return BEZIER_PRESETS[str(spec.get("preset", "II"))]
    raise ValueError(f"unknown penalisation {kind!r}")


def penalty_curvature(rho, fn, h: float = 1e-6) -> np.ndarray:
    """Diagonal curvature factor ``2 r'/r - r''/r'`` of ``1 / rho*``.

    Compliance of a statically determinate strut is proportional to
    ``1 / rho*``, so ``factor * |dJ/drho|`` is its exact second derivative.
    For the power law the factor is ``(p + 1) / rho``.
    """
    r = np.clip(np.asarray(rho, float), RHO_MIN, 1.0)
    v, d = fn(r)
    lo = np.clip(r - h, 0.0, 1.0)
    hi = np.clip(r + h, 0.0, 1.0)
    dd = (fn(hi)[1] - fn(lo)[1]) / np.maximum(hi - lo, 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = 2.0 * d / v - dd / d
    return np.where(np.isfinite(k), np.maximum(k, 1.0 / r), 1.0 / r)


# ---------------------------------------------------------------------------
# analysis at given densities

def stiffness_scale(rho_star):
    """Stiffness floor ``rho_min`` keeps the matrix factorisable at any penalty."""
    return RHO_MIN + (1.0 - RHO_MIN) * np.asarray(rho_star, float)


@dataclass
class Structure:
    """Lattice with optional shell skin and coupling."""
    lattice: LatticeModel
    shell: ShellSystem | None = None
    coupling: Coupling | None = None
    cache: SolverCache | None = None

    def solve(self, rho=None, fn=None) -> tuple[CoupledSolution, object]:
        lat = self.lattice
        if rho is None:
            truss = assemble_truss(lat)
        else:
            rs = penalise(rho, fn)[0] if fn is not None else np.asarray(rho, float)
            truss = assemble_truss(lat, np.maximum(rho, RHO_MIN) * lat.reference_areas,
                                   stiffness_scale=stiffness_scale(rs))
        return solve_coupled(self.shell, truss, self.coupling, joints=lat.joints, cache=self.cache), truss


def compliance_sensitivity(solution: CoupledSolution, truss, lattice: LatticeModel, rho, fn) -> np.ndarray:
    """``dJ/dA_e = -(d rho*/d rho) u_e . (Kbar_e / Abar_e) u_e``."""
    _, drs = penalise(rho, fn)
    ue = element_energies(truss, solution.u_lattice.ravel())
    return -(1.0 - RHO_MIN) * drs * lattice.E * ue


# ---------------------------------------------------------------------------
# filter

def filter_matrix(lattice: LatticeModel, R: float) -> sp.csr_matrix:
    """Sparse operator mapping raw per-strut sensitivities to filtered ones.

    A cell's value is the ``w_e / l_e`` weighted mean over the struts of all
    cells whose centroid lies within ``R``; ``w_e = max(R - |x_e - x_c|, 0)``
    uses strut centroids. A strut takes the mean of its owning cells.
    """
    if R <= 0:
        raise ValueError("filter radius must be positive")
    nc, ns = lattice.n_cells, lattice.n_struts
    cc = lattice.cell_centroids()
    sc = lattice.strut_centroids()
    lengths = lattice.lengths()
    rows = np.concatenate([[c.id] * len(c.strut_ids) for c in lattice.cells])
    cols = np.concatenate([list(c.strut_ids) for c in lattice.cells])
    M = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(nc, ns))
    M.data[:] = 1.0
    pairs = cKDTree(cc).query_pairs(R * (1 + 1e-12), output_type="ndarray")
    nb = sp.coo_matrix((np.ones(2 * len(pairs)), (np.r_[pairs[:, 0], pairs[:, 1]], np.r_[pairs[:, 1], pairs[:, 0]])),
                       shape=(nc, nc)).tocsr() + sp.identity(nc, format="csr")
    S = (nb @ M).tocoo()
    ci, si = S.row, S.col
    w = np.maximum(R - np.linalg.norm(sc[si] - cc[ci], axis=1), 0.0) / lengths[si]
    C = sp.csr_matrix((w, (ci, si)), shape=(nc, ns))
    tot = np.asarray(C.sum(axis=1)).ravel()
    if np.any(tot <= 0):
        bad = int(np.flatnonzero(tot <= 0)[0])
        raise ValueError(f"empty filter support for cell {bad}; increase the radius")
    C = sp.diags(1.0 / tot) @ C
    owners = np.asarray(M.sum(axis=0)).ravel()
    if np.any(owners == 0):
        raise ValueError("strut without owning cell cannot be filtered")
    A = sp.diags(1.0 / owners) @ M.T
    return (A @ C).tocsr()


def filter_sensitivities(lattice: LatticeModel, raw, R: float, F: sp.spmatrix | None = None) -> np.ndarray:
    F = filter_matrix(lattice, R) if F is None else F
    return F @ np.asarray(raw, float)


# ---------------------------------------------------------------------------
# driver

@dataclass
class TopOptConfig:
    volume_fraction: float = 0.4
    radius: float = 1.0
    penalisation: object = field(default_factory=lambda: PowerPenalisation(3.0))
    max_iter: int = 300
    rtol: float = 1e-5
    window: int = 3
    move: float = 0.05
    curvature: float | str = "auto"
    adaptive_move: bool = False
    method: str = "sqp-diag"
    filter: bool = True
    snapshot_every: int = 0

    def __post_init__(self):
        if not 0.0 < self.volume_fraction <= 1.0:
            raise ValueError("volume fraction must lie in (0, 1]")
        if self.radius <= 0:
            raise ValueError("filter radius must be positive")
        self.penalisation = make_penalisation(self.penalisation)


@dataclass
class TopOptResult:
    rho: np.ndarray
    areas: np.ndarray
    J: float
    J_history: list
    volume_history: list
    status: str
    lattice: LatticeModel


def run_topopt(structure: Structure, config: TopOptConfig, *, callback=None) -> TopOptResult:
    if structure.cache is None:
        structure = replace(structure, cache=SolverCache())
    lat = structure.lattice
    fn = config.penalisation
    Abar = lat.reference_areas
    lengths = lat.lengths()
    Vbar = float(Abar @ lengths)
    Vmax = config.volume_fraction * Vbar
    if config.filter:
        cell_size = max(float(np.max(c.size)) for c in lat.cells) if lat.cells else 0.0
        if config.radius < cell_size * (1 - 1e-9):
            raise ValueError("filter radius smaller than the cell size")
        F = filter_matrix(lat, config.radius)
    vol_grad = Abar * lengths
    Js, Vs = [], []
    last = {}

    def objective(rho):
        sol, truss = structure.solve(rho, fn)
        dA = compliance_sensitivity(sol, truss, lat, rho, fn)
        if config.filter:
            dA = F @ dA
        last["J"] = sol.J
        return sol.J, dA * Abar

    def constraint(rho):
        return float(vol_grad @ rho - Vmax) / Vbar, vol_grad / Vbar

    def record(it, x, f):
        Js.append(float(f))
        Vs.append(float(vol_grad @ x / Vbar))
        if callback is not None:
            callback(it, x, f)

    x0 = np.full(lat.n_struts, config.volume_fraction)
    curvature = config.curvature
    if curvature == "auto":
        curvature = lambda x: penalty_curvature(x, fn)
    opts = OptimizeOptions(method=config.method, max_iter=config.max_iter, rtol=config.rtol,
                           window=config.window, move=config.move, curvature=curvature,
                           adaptive_move=config.adaptive_move,
                           line_search=not config.filter, callback=record)
    problem = NlpProblem(objective, x0, np.full(lat.n_struts, RHO_MIN), np.ones(lat.n_struts), [constraint])
    res = minimize(problem, opts)
    rho = np.clip(res.x, RHO_MIN, 1.0)
    return TopOptResult(rho, rho * Abar, float(res.fun), Js, Vs, res.status, lat.with_areas(rho * Abar))


def intermediate_fraction(areas, reference_areas, lo: float = 0.1, hi: float = 0.9) -> float:
    """Share of struts whose relative area lies strictly between ``lo`` and ``hi``."""
    r = np.asarray(areas) / np.asarray(reference_areas)
    return float(np.mean((r > lo) & (r < hi)))


def write_history(path, J, V) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "compliance", "volume_fraction"])
        for k, (j, v) in enumerate(zip(J, V)):
            w.writerow([k, f"{j:.17g}", f"{v:.17g}"])
