"""Trivariate Bernstein free-form deformation over an axis-aligned prism."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import product
from math import comb

import numpy as np

from .geometry import immerse


class FFDDomainError(ValueError):
    pass


def bernstein(mu: int, xi):
    """Bernstein polynomials of degree ``mu`` and their derivatives.

    Returns ``(B, dB)``, both of shape ``(len(xi), mu + 1)`` (a scalar ``xi``
    gives 1-d arrays).
    """
    if mu < 1:
        raise ValueError("Bernstein degree must be at least 1")
    scalar = np.ndim(xi) == 0
    x = np.atleast_1d(np.asarray(xi, float))
    if np.any((x < 0) | (x > 1)) or not np.all(np.isfinite(x)):
        raise FFDDomainError("Bernstein argument outside [0, 1]")
    k = np.arange(mu + 1)
    c = np.array([comb(mu, i) for i in k], float)
    X = x[:, None]
    B = c * X ** k * (1 - X) ** (mu - k)
    # d/dx B_k^mu = mu (B_{k-1}^{mu-1} - B_k^{mu-1})
    lower = np.zeros((len(x), mu + 2))
    kk = np.arange(mu)
    cl = np.array([comb(mu - 1, i) for i in kk], float)
    lower[:, 1:-1] = cl * X ** kk * (1 - X) ** (mu - 1 - kk)
    dB = mu * (lower[:, :-1] - lower[:, 1:])
    if scalar:
        return B[0], dB[0]
    return B, dB


@dataclass
class FFDPrism:
    """Control grid of ``prod(degrees + 1)`` points on a uniform lattice.

    Control point ``(i, j, k)`` has flat index ``i + n1 * (j + n2 * k)``.
    Displacements of fixed points are held at zero.
    """
    box_min: np.ndarray
    box_max: np.ndarray
    degrees: tuple = (2, 2, 2)
    fixed: np.ndarray | None = None
    displacements: np.ndarray | None = None
    shape: tuple = field(init=False)

    def __post_init__(self):
        self.box_min = np.asarray(self.box_min, float).reshape(3)
        self.box_max = np.asarray(self.box_max, float).reshape(3)
        if np.any(self.box_max <= self.box_min):
            raise ValueError("prism box must have positive extent in every direction")
        self.degrees = tuple(int(d) for d in self.degrees)
        if len(self.degrees) != 3 or min(self.degrees) < 1:
            raise ValueError("three degrees >= 1 required")
        self.shape = tuple(d + 1 for d in self.degrees)
        n = self.n_points
        self.fixed = np.zeros(n, bool) if self.fixed is None else np.asarray(self.fixed, bool).reshape(n).copy()
        d = np.zeros((n, 3)) if self.displacements is None else np.asarray(self.displacements, float).reshape(n, 3).copy()
        d[self.fixed] = 0.0
        self.displacements = d

    @classmethod
    def around(cls, points, degrees=(2, 2, 2), inflate: float = 0.01) -> "FFDPrism":
        """Bounding box of ``points`` grown by ``inflate`` of its size on each side.

        Flat directions get a size of ``inflate`` times the largest extent.
        """
        P = np.asarray(points, float).reshape(-1, 3)
        lo, hi = P.min(axis=0), P.max(axis=0)
        ext = hi - lo
        ext = np.where(ext > 0, ext, max(ext.max(), 1.0) * inflate)
        pad = inflate * ext
        mid = 0.5 * (lo + hi)
        return cls(np.minimum(lo - pad, mid - 0.5 * ext - pad), np.maximum(hi + pad, mid + 0.5 * ext + pad), degrees)

    @property
    def n_points(self) -> int:
        return int(np.prod(self.shape))

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.box_max - self.box_min))

    def index(self, i: int, j: int, k: int) -> int:
        n1, n2, _ = self.shape
        return i + n1 * (j + n2 * k)

    def control_points(self) -> np.ndarray:
        """Undisplaced control points ``ybar``."""
        grids = [np.linspace(self.box_min[a], self.box_max[a], self.shape[a]) for a in range(3)]
        out = np.empty((self.n_points, 3))
        for k, j, i in product(range(self.shape[2]), range(self.shape[1]), range(self.shape[0])):
            out[self.index(i, j, k)] = (grids[0][i], grids[1][j], grids[2][k])
        return out

    def basis(self, eta) -> np.ndarray:
        """Tensor-product weights, shape ``(n_pts, n_control)``."""
        eta = np.atleast_2d(np.asarray(eta, float))
        Bs = [bernstein(self.degrees[a], eta[:, a])[0] for a in range(3)]
        W = np.einsum("pk,pj,pi->pkji", Bs[2], Bs[1], Bs[0])
        return W.reshape(len(eta), -1)

    def immerse(self, points) -> np.ndarray:
        return immerse(points, self)

    def with_displacements(self, d) -> "FFDPrism":
        return replace(self, displacements=np.asarray(d, float).reshape(self.n_points, 3))

    def with_fixed(self, ids) -> "FFDPrism":
        mask = self.fixed.copy()
        mask[np.asarray(ids, dtype=np.int64)] = True
        return replace(self, fixed=mask)

    def corner_ids(self) -> list[int]:
        n1, n2, n3 = self.shape
        return [self.index(i, j, k) for k in (0, n3 - 1) for j in (0, n2 - 1) for i in (0, n1 - 1)]


def ffd_map(prism: FFDPrism, eta, displacements=None) -> np.ndarray:
    """Physical positions of parametric points under the (displaced) control grid."""
    d = prism.displacements if displacements is None else np.asarray(displacements, float).reshape(-1, 3)
    W = prism.basis(eta)
    return W @ (prism.control_points() + d)
