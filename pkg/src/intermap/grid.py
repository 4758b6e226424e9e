"""Nonuniform circle grids and cell-average function representations.

The invariant density blows up like |x|^-alpha at the neutral point
0 ~ 1, so grids carry geometrically refined zones at both ends of
[0, 1] and a uniform interior.  Functions are stored as cell averages
(Ulam representation), which keeps mass and positivity exact under the
transfer matrices built on top.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NonuniformGrid",
    "GridDensity",
    "build_grid",
    "project",
    "lebesgue_integral",
    "observable_cell_integrals",
    "cell_derivative",
]

WIDTH_FLOOR = 1e-12
QUAD_ORDER = 5

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(QUAD_ORDER)


@dataclass(frozen=True)
class NonuniformGrid:
    """Partition of the circle with geometric refinement at 0 and 1.

    edges has M+1 strictly increasing entries from 0.0 to 1.0; widths
    never drop below WIDTH_FLOOR.  Instances are immutable; build via
    build_grid.
    """

    edges: np.ndarray
    refinement_ratio: float
    n_geometric: int
    n_uniform: int

    @property
    def size(self) -> int:
        return len(self.edges) - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def quadrature_nodes(self):
        """Gauss-Legendre nodes (M, q) and weights summing to the widths."""
        half = 0.5 * self.widths
        nodes = self.centers[:, None] + half[:, None] * _GL_NODES[None, :]
        weights = half[:, None] * _GL_WEIGHTS[None, :]
        return nodes, weights

    def describe(self) -> str:
        return (f"M={self.size},ratio={self.refinement_ratio:g},"
                f"n_geo={self.n_geometric}")


def build_grid(m_total: int, refinement_ratio: float = 0.7,
               n_geometric: int = 60) -> NonuniformGrid:
    """Build a circle grid with m_total cells.

    n_geometric cells at each end shrink toward 0 and 1 by
    refinement_ratio per cell, starting from the uniform interior
    width; widths are floored at WIDTH_FLOOR with the tiny excess
    absorbed by the interior so the total stays exactly 1.
    """
    if m_total < 16:
        raise ValueError("m_total must be >= 16")
    if not (0.0 < refinement_ratio < 1.0):
        raise ValueError("refinement_ratio must lie in (0, 1)")
    if n_geometric < 0 or m_total - 2 * n_geometric < 1:
        raise ValueError("n_geometric leaves no room for interior cells")
    n_uni = m_total - 2 * n_geometric
    r = refinement_ratio
    if n_geometric:
        geo_sum = r * (1.0 - r ** n_geometric) / (1.0 - r)
        w_uni = 1.0 / (n_uni + 2.0 * geo_sum)
        geo = w_uni * r ** np.arange(n_geometric, 0, -1)
        widths = np.concatenate([geo, np.full(n_uni, w_uni), geo[::-1]])
    else:
        widths = np.full(n_uni, 1.0 / n_uni)
    # Clamp a hair above the floor: edge coordinates near 1 quantize
    # widths to multiples of ulp(1), so an exact-floor width could
    # round below it after the mirror subtraction.
    clamp = WIDTH_FLOOR * 1.001
    under = widths < clamp
    if under.any():
        excess = float(np.sum(clamp - widths[under]))
        widths = widths.copy()
        widths[under] = clamp
        widths[n_geometric:n_geometric + n_uni] -= excess / n_uni
    # Mirror the cumulative sums around 1/2 so the upper geometric zone
    # is the bit-exact reflection of the lower one and the width floor
    # survives rounding.
    low = np.concatenate([[0.0], np.cumsum(widths)])
    mid = m_total // 2
    edges = np.concatenate([low[:mid + 1], 1.0 - low[:m_total - mid][::-1]])
    edges.setflags(write=False)
    return NonuniformGrid(edges=edges, refinement_ratio=refinement_ratio,
                          n_geometric=n_geometric, n_uniform=n_uni)


@dataclass(frozen=True)
class GridDensity:
    """Nonnegative cell-average function on a grid."""

    grid: NonuniformGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.size,):
            raise ValueError("values length must equal the cell count")
        if np.any(vals < 0.0) or not np.all(np.isfinite(vals)):
            raise ValueError("density values must be finite and nonnegative")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def mass(self) -> float:
        return float(np.sum(self.values * self.grid.widths))

    def normalize(self) -> "GridDensity":
        m = self.mass
        if m <= 0.0:
            raise ValueError("cannot normalize a zero-mass density")
        return GridDensity(self.grid, self.values / m)

    def to_csv(self) -> str:
        """Serialize as cell_left,cell_right,value rows (17 significant digits)."""
        buf = io.StringIO()
        buf.write("cell_left,cell_right,value\n")
        e = self.grid.edges
        for j, v in enumerate(self.values):
            buf.write(f"{e[j]:.17g},{e[j + 1]:.17g},{v:.17g}\n")
        return buf.getvalue()

    @staticmethod
    def from_csv(text: str) -> "GridDensity":
        rows = [ln.split(",") for ln in text.strip().splitlines()[1:]]
        left = np.array([float(r[0]) for r in rows])
        right = np.array([float(r[1]) for r in rows])
        vals = np.array([float(r[2]) for r in rows])
        edges = np.concatenate([left, right[-1:]])
        grid = NonuniformGrid(edges=edges, refinement_ratio=float("nan"),
                              n_geometric=0, n_uniform=len(vals))
        return GridDensity(grid, vals)


def project(fn, grid: NonuniformGrid) -> GridDensity:
    """Cell averages of a pointwise function by per-cell quadrature.

    Gauss-Legendre nodes are interior, so fn is never evaluated at the
    neutral point even on cells touching 0 or 1.
    """
    nodes, weights = grid.quadrature_nodes()
    vals = np.sum(np.asarray(fn(nodes), dtype=float) * weights, axis=1) / grid.widths
    return GridDensity(grid, vals)


def observable_cell_integrals(psi, grid: NonuniformGrid) -> np.ndarray:
    """Per-cell integrals of psi, for pairing against cell averages."""
    nodes, weights = grid.quadrature_nodes()
    return np.sum(np.asarray(psi(nodes), dtype=float) * weights, axis=1)


def lebesgue_integral(dens, psi=None, psi_cells: np.ndarray | None = None) -> float:
    """Integral of dens * psi over the circle (psi defaults to 1).

    dens may be a GridDensity or a plain cell-value array paired with
    psi_cells; pass psi_cells to reuse precomputed observable integrals.
    """
    if isinstance(dens, GridDensity):
        values, grid = dens.values, dens.grid
    else:
        raise TypeError("dens must be a GridDensity; use raw arrays with dot()")
    if psi_cells is None:
        if psi is None:
            psi_cells = grid.widths
        else:
            psi_cells = observable_cell_integrals(psi, grid)
    return float(np.dot(values, psi_cells))


def cell_derivative(values: np.ndarray, grid: NonuniformGrid) -> np.ndarray:
    """First derivative of cell averages at cell centers.

    Width-weighted three-point differences in the interior; the cells
    adjacent to the neutral point use one-sided two-point stencils (no
    wrap: grid functions here are generally discontinuous across 0 ~ 1).
    """
    c = grid.centers
    v = np.asarray(values, dtype=float)
    d = np.empty_like(v)
    dc = np.diff(c)
    fwd = (v[2:] - v[1:-1]) / dc[1:]
    bwd = (v[1:-1] - v[:-2]) / dc[:-1]
    wf = dc[:-1] / (dc[:-1] + dc[1:])
    d[1:-1] = wf * fwd + (1.0 - wf) * bwd
    d[0] = (v[1] - v[0]) / dc[0]
    d[-1] = (v[-1] - v[-2]) / dc[-1]
    return d
