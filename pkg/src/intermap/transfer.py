"""Ulam discretization of the transfer operator and its branch parts.

Matrix entries are computed exactly from inverse-branch images of cell
edges (each branch is monotone, so preimages of intervals are
intervals), never by sampling.  Weights follow the source-conditional
convention: entry (j <- k) is |cell_k n f^-1(cell_j)| / |cell_k|, so
every column sums to 1 and Lebesgue mass is preserved exactly.

Also here: the invariant-density power iteration with Cesaro fallback,
the local averaging operator with exact cell-overlap weights, the
randomly perturbed operator L^n A_eps, and the positivity scan for its
kernel.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid import GridDensity, NonuniformGrid
from .maps import MapParams, branch_inverse

__all__ = [
    "UlamMatrix",
    "AveragingOperator",
    "PerturbedOperator",
    "InvariantDensityResult",
    "KernelScan",
    "assemble_transfer",
    "assemble_branch_transfer",
    "invariant_density",
    "averaging_operator",
    "perturbed_operator",
    "kernel_min",
    "l1_norm",
]


def l1_norm(values: np.ndarray, grid: NonuniformGrid) -> float:
    """L1 norm of a cell-average function."""
    return float(np.sum(np.abs(values) * grid.widths))


@dataclass(frozen=True)
class UlamMatrix:
    """Sparse row-indexed discretization of the transfer operator.

    kind is "full" for the complete operator or "branch_i" for the
    operator restricted to branch i.  weights[j, k] is the fraction of
    cell k mapped into cell j.
    """

    grid: NonuniformGrid
    kind: str
    weights: sp.csr_matrix
    _mass_form: sp.csr_matrix

    def apply_values(self, values: np.ndarray) -> np.ndarray:
        """Push forward cell averages (1-D) or stacked columns (2-D)."""
        w = self.grid.widths
        if values.ndim == 1:
            return (self._mass_form @ values) / w
        return (self._mass_form @ values) / w[:, None]

    def apply(self, dens: GridDensity) -> GridDensity:
        if dens.grid is not self.grid and not np.array_equal(
                dens.grid.edges, self.grid.edges):
            raise ValueError("density lives on a different grid")
        return GridDensity(self.grid, np.maximum(self.apply_values(dens.values), 0.0))

    def column_sums(self) -> np.ndarray:
        return np.asarray(self.weights.sum(axis=0)).ravel()

    def to_csv(self) -> str:
        """Triplet serialization: row,col,weight with 17 significant digits."""
        coo = self.weights.tocoo()
        order = np.lexsort((coo.col, coo.row))
        buf = io.StringIO()
        buf.write("row,col,weight\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            buf.write(f"{r},{c},{v:.17g}\n")
        return buf.getvalue()


def _segment_offsets(counts: np.ndarray) -> np.ndarray:
    """[0..c0-1, 0..c1-1, ...] for vectorized ragged expansion."""
    total = int(counts.sum())
    out = np.arange(total)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    return out - np.repeat(starts, counts)


def _merge_ascending(pre: np.ndarray, rows: np.ndarray, src: np.ndarray,
                     cols: np.ndarray):
    """Intersect consecutive [pre[r], pre[r+1]] with source cells.

    pre and src ascend in a common local coordinate; rows and cols map
    local indices back to grid cells.  Returns (row, col, mass)
    triplets with positive mass.
    """
    n_src = len(src) - 1
    klo = np.clip(np.searchsorted(src, pre[:-1], side="right") - 1, 0, n_src - 1)
    khi = np.clip(np.searchsorted(src, pre[1:], side="left") - 1, 0, n_src - 1)
    khi = np.maximum(khi, klo)
    counts = khi - klo + 1
    out_rows = np.repeat(rows, counts)
    local_cols = klo.repeat(counts) + _segment_offsets(counts)
    seg_lo = np.maximum(pre[:-1].repeat(counts), src[local_cols])
    seg_hi = np.minimum(pre[1:].repeat(counts), src[local_cols + 1])
    mass = np.maximum(seg_hi - seg_lo, 0.0)
    keep = mass > 0.0
    return out_rows[keep], cols[local_cols[keep]], mass[keep]


def _branch_triplets(p: MapParams, i: int, grid: NonuniformGrid):
    """Exact (row, col, mass) triplets for one branch.

    All intersections happen in branch-local offset coordinates: the
    preimages of cells near the neutral point land next to 1/2 or 1,
    where absolute positions quantize at ulp(1) but offsets keep full
    relative precision.  The grid edges transform to each local frame
    by subtractions that are exact in the relevant range.
    """
    from .maps import branch_inverse_offsets

    edges = grid.edges
    m = grid.size
    side, offs = branch_inverse_offsets(p, i, edges)
    offs = offs.copy()
    offs[0] = 0.0
    offs[-1] = 0.0
    # edges [0, split) solve on the low side of the branch; split is in
    # [1, m] because edges run from 0 to 1.
    split = int(np.searchsorted(side, True))
    cols_fwd = np.arange(m)
    rows_all, cols_all, mass_all = [], [], []

    # Low block: cells 0 .. split-1.  Its topmost edge lives on the high
    # side; 0.5 - offs converts it into the low frame for both branches.
    pre_low = np.concatenate([offs[:split], [0.5 - offs[split]]]) \
        if split <= m else offs[:split]
    pre_low = np.maximum.accumulate(pre_low)
    src_low = edges if i == 1 else edges - 0.5
    r, c, v = _merge_ascending(pre_low, np.arange(split), src_low, cols_fwd)
    rows_all.append(r); cols_all.append(c); mass_all.append(v)

    # High block: cells split .. m-1, reversed so offsets ascend.
    if split <= m - 1:
        pre_high = np.maximum.accumulate(offs[split:][::-1])
        rows_high = np.arange(split, m)[::-1]
        src_high = ((0.5 - edges) if i == 1 else (1.0 - edges))[::-1]
        r, c, v = _merge_ascending(pre_high, rows_high, src_high,
                                   cols_fwd[::-1])
        rows_all.append(r); cols_all.append(c); mass_all.append(v)
    return (np.concatenate(rows_all), np.concatenate(cols_all),
            np.concatenate(mass_all))


def _build(grid: NonuniformGrid, kind: str, rows, cols, mass) -> UlamMatrix:
    m = grid.size
    w = grid.widths
    weights = sp.coo_matrix((mass / w[cols], (rows, cols)), shape=(m, m)).tocsr()
    mass_form = sp.coo_matrix((mass, (rows, cols)), shape=(m, m)).tocsr()
    return UlamMatrix(grid=grid, kind=kind, weights=weights, _mass_form=mass_form)


def assemble_transfer(p: MapParams, grid: NonuniformGrid) -> UlamMatrix:
    """Ulam matrix of the full transfer operator on the grid."""
    rows, cols, mass = [], [], []
    for i in range(1, p.d + 1):
        r, c, v = _branch_triplets(p, i, grid)
        rows.append(r); cols.append(c); mass.append(v)
    return _build(grid, "full", np.concatenate(rows), np.concatenate(cols),
                  np.concatenate(mass))


def assemble_branch_transfer(p: MapParams, i: int, grid: NonuniformGrid) -> UlamMatrix:
    """Ulam matrix of the branch-i operator; column sums are <= 1."""
    if not (1 <= i <= p.d):
        raise ValueError(f"branch index {i} outside 1..{p.d}")
    rows, cols, mass = _branch_triplets(p, i, grid)
    return _build(grid, f"branch_{i}", rows, cols, mass)


@dataclass(frozen=True)
class InvariantDensityResult:
    """Invariant-density estimate plus convergence diagnostics.

    Callers must check `converged`; for alpha near 1 the iteration is
    polynomially slow and the returned density is the Cesaro average of
    the last half of the iterates.
    """

    density: GridDensity
    converged: bool
    iterations: int
    final_change: float
    used_cesaro: bool

    def fixed_point_residual(self, matrix: UlamMatrix) -> float:
        v = self.density.values
        return l1_norm(matrix.apply_values(v) - v, self.density.grid)


def invariant_density(p: MapParams, grid: NonuniformGrid, tol_fix: float = 1e-10,
                      max_iter: int = 10 ** 6,
                      matrix: UlamMatrix | None = None) -> InvariantDensityResult:
    """Power iteration phi <- normalize(L phi) from phi = 1.

    Stops when the L1 cell-mass change drops to tol_fix.  On hitting
    max_iter the Cesaro average of the second half of the iterates is
    returned with converged=False.
    """
    if tol_fix <= 0.0:
        raise ValueError("tol_fix must be positive")
    if matrix is None:
        matrix = assemble_transfer(p, grid)
    w = grid.widths
    mass_form = matrix._mass_form
    phi = np.ones(grid.size)
    cesaro_start = max_iter // 2
    cesaro_sum = None
    cesaro_count = 0
    change = np.inf
    for it in range(1, max_iter + 1):
        new = (mass_form @ phi) / w
        new /= np.sum(new * w)
        change = float(np.sum(np.abs(new - phi) * w))
        phi = new
        if change <= tol_fix:
            dens = GridDensity(grid, np.maximum(phi, 0.0)).normalize()
            return InvariantDensityResult(dens, True, it, change, False)
        if it >= cesaro_start:
            if cesaro_sum is None:
                cesaro_sum = phi.copy()
            else:
                cesaro_sum += phi
            cesaro_count += 1
    avg = cesaro_sum / cesaro_count if cesaro_count else phi
    dens = GridDensity(grid, np.maximum(avg, 0.0)).normalize()
    return InvariantDensityResult(dens, False, max_iter, change, cesaro_count > 0)


def _overlap_areas(a, b, pq_lo, pq_hi, eps):
    """Exact area of [a,b] x [p,q] intersected with the band |y-z| <= eps.

    Vectorized over the (p, q) interval arrays.  Uses only sums of
    clipped quadratics, so tiny cells suffer no catastrophic
    cancellation.
    """
    h = pq_hi - pq_lo

    def ramp_integral(c):
        # integral over [a,b] of clip(y + c - p, 0, h)
        t1 = np.clip(a + c - pq_lo, 0.0, h)
        t2 = np.clip(b + c - pq_lo, 0.0, h)
        lin1 = np.maximum(a + c - pq_lo - h, 0.0)
        lin2 = np.maximum(b + c - pq_lo - h, 0.0)
        return 0.5 * (t2 ** 2 - t1 ** 2) + h * (lin2 - lin1)

    return np.maximum(ramp_integral(eps) - ramp_integral(-eps), 0.0)


@dataclass(frozen=True)
class AveragingOperator:
    """Local average over the eps-ball, as exact cell-overlap weights.

    Same weight convention as UlamMatrix: columns sum to 1, so mass is
    preserved and positivity kept.
    """

    grid: NonuniformGrid
    eps: float
    weights: sp.csr_matrix
    _mass_form: sp.csr_matrix

    def apply_values(self, values: np.ndarray) -> np.ndarray:
        w = self.grid.widths
        if values.ndim == 1:
            return (self._mass_form @ values) / w
        return (self._mass_form @ values) / w[:, None]

    def apply(self, dens: GridDensity) -> GridDensity:
        return GridDensity(self.grid, np.maximum(self.apply_values(dens.values), 0.0))

    def eval_at(self, dens: GridDensity, x) -> np.ndarray | float:
        """Pointwise (1/2eps) * integral of dens over the ball at x."""
        x = np.asarray(x, dtype=float)
        e = self.grid.edges
        cummass = np.concatenate([[0.0], np.cumsum(dens.values * self.grid.widths)])
        total = cummass[-1]

        def anti(y):
            shift = np.floor(y)
            return np.interp(y - shift, e, cummass) + shift * total

        out = (anti(x + self.eps) - anti(x - self.eps)) / (2.0 * self.eps)
        return out if out.ndim else float(out)


def averaging_operator(eps: float, grid: NonuniformGrid) -> AveragingOperator:
    """Assemble the eps-ball averaging operator on the grid."""
    w = grid.widths
    if eps <= float(w.min()):
        raise ValueError("eps must exceed the smallest cell width")
    if eps >= 0.5:
        raise ValueError("eps must be below 1/2 (ball must not wrap twice)")
    e = grid.edges
    m = grid.size
    rows_all, cols_all, area_all = [], [], []
    for shift in (-1.0, 0.0, 1.0):
        lo, hi = e[:-1] + shift, e[1:] + shift  # shifted source cells
        # target cells j whose [a,b] meets [lo - eps, hi + eps]
        jlo = np.clip(np.searchsorted(e, lo - eps, side="right") - 1, 0, m - 1)
        jhi = np.clip(np.searchsorted(e, hi + eps, side="left") - 1, 0, m - 1)
        valid = (hi + eps > 0.0) & (lo - eps < 1.0)
        jlo, jhi = jlo[valid], jhi[valid]
        src = np.arange(m)[valid]
        counts = jhi - jlo + 1
        cols = np.repeat(src, counts)
        rows = jlo.repeat(counts) + _segment_offsets(counts)
        area = _overlap_areas(e[rows], e[rows + 1], lo[valid].repeat(counts),
                              hi[valid].repeat(counts), eps)
        keep = area > 0.0
        rows_all.append(rows[keep]); cols_all.append(cols[keep])
        area_all.append(area[keep])
    rows = np.concatenate(rows_all)
    cols = np.concatenate(cols_all)
    area = np.concatenate(area_all)
    weights = sp.coo_matrix((area / (2.0 * eps * w[cols]), (rows, cols)),
                            shape=(m, m)).tocsr()
    mass_form = sp.coo_matrix((area / (2.0 * eps), (rows, cols)),
                              shape=(m, m)).tocsr()
    return AveragingOperator(grid=grid, eps=eps, weights=weights,
                             _mass_form=mass_form)


@dataclass(frozen=True)
class PerturbedOperator:
    """L^n_eps composed with the eps-averaging: the perturbed operator."""

    transfer: UlamMatrix
    averaging: AveragingOperator
    n_eps: int

    @property
    def grid(self) -> NonuniformGrid:
        return self.transfer.grid

    def apply_values(self, values: np.ndarray) -> np.ndarray:
        out = self.averaging.apply_values(values)
        for _ in range(self.n_eps):
            out = self.transfer.apply_values(out)
        return out

    def apply(self, dens: GridDensity) -> GridDensity:
        return GridDensity(self.grid, np.maximum(self.apply_values(dens.values), 0.0))

    def kernel_table(self) -> np.ndarray:
        """Dense discretized kernel: entry (j, k) is the cell-averaged
        kernel value for unit point mass in cell k."""
        m = self.grid.size
        cols = np.diag(1.0 / self.grid.widths)
        return self.apply_values(cols)


def perturbed_operator(p: MapParams, eps: float, n_eps: int, grid: NonuniformGrid,
                       matrix: UlamMatrix | None = None) -> PerturbedOperator:
    if n_eps < 1:
        raise ValueError("n_eps must be >= 1")
    if matrix is None:
        matrix = assemble_transfer(p, grid)
    return PerturbedOperator(transfer=matrix, averaging=averaging_operator(eps, grid),
                             n_eps=n_eps)


@dataclass(frozen=True)
class KernelScan:
    """Result of scanning the perturbed-operator kernel for positivity."""

    gamma: float
    n_eps: int | None
    cap: int
    minima: tuple

    @property
    def positive(self) -> bool:
        return self.n_eps is not None and self.gamma > 0.0


def kernel_min(p: MapParams, eps: float, grid: NonuniformGrid,
               cap_constant: float = 8.0, cap: int | None = None,
               matrix: UlamMatrix | None = None) -> KernelScan:
    """Scan n upward until the discretized kernel of L^n A_eps is
    strictly positive; gamma is its minimum over all cell pairs.

    The cap defaults to ceil(cap_constant * eps^-alpha).  Hitting the
    cap with a zero minimum is reported, not raised: the minima history
    is the diagnostic.
    """
    if matrix is None:
        matrix = assemble_transfer(p, grid)
    if cap is None:
        cap = int(np.ceil(cap_constant * eps ** (-p.alpha)))
    avg = averaging_operator(eps, grid)
    w = grid.widths
    kernel = avg.apply_values(np.diag(1.0 / w))
    minima = []
    for n in range(1, cap + 1):
        kernel = matrix.apply_values(kernel)
        gamma = float(kernel.min())
        minima.append(gamma)
        if gamma > 0.0:
            return KernelScan(gamma=gamma, n_eps=n, cap=cap, minima=tuple(minima))
    return KernelScan(gamma=float(kernel.min()), n_eps=None, cap=cap,
                      minima=tuple(minima))
