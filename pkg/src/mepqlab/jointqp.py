"""Joint fuzzy position-momentum registration with an ancilla.

The system and an ancilla share one periodic grid. The commuting pair
``A = q_S - q_A`` (position difference) and ``B = p_S + p_A`` (total
momentum) is registered sharply; cell probabilities ``||E^A E^B Psi||^2``
are computed exactly on the lattice, where both observables take values
on the lattice and commute exactly. They are compared with the
single-system approximation ``S_k / (2 pi hbar)^2 tr[T_S T_A[a_k, b_k]]``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import NumericalError, ValidationError
from .grid import Grid1D, GridWavefunction, boost, shift
from .hilbert import _mat


@dataclass(frozen=True)
class AncillaPacket:
    """Minimum-uncertainty Gaussian ``(pi sigma^2)^(-1/4) exp(-Q^2 / 2 sigma^2)``."""

    sigma: float
    grid: Grid1D

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValidationError("ancilla width must be positive")

    def wavefunction(self) -> GridWavefunction:
        x = self.grid.x
        v = (math.pi * self.sigma ** 2) ** -0.25 * np.exp(-x ** 2 / (2 * self.sigma ** 2))
        return GridWavefunction(self.grid, v)

    def displaced(self, a: float, b: float) -> GridWavefunction:
        """Shifted by ``a``, then boosted by ``-b``."""
        return boost(shift(self.wavefunction(), a), -b)


@dataclass(frozen=True)
class CellGrid:
    """Rectangular cells on the lattice of ``(a, b)`` values.

    ``a_ranges`` and ``b_ranges`` hold integer lattice ranges ``[lo, hi)``
    of centered difference and total-momentum labels; cell edges sit at
    half-lattice points.
    """

    grid: Grid1D
    a_ranges: tuple
    b_ranges: tuple

    @classmethod
    def uniform(cls, grid: Grid1D, width_a: int, width_b: int | None = None) -> "CellGrid":
        """Covering partition with ``width`` lattice points per cell side."""
        width_b = width_a if width_b is None else width_b
        n = grid.n
        if n % width_a or n % width_b:
            raise ValidationError("cell widths must divide the grid size")
        lo = -(n // 2)
        a = tuple((lo + i, lo + i + width_a) for i in range(0, n, width_a))
        b = tuple((lo + i, lo + i + width_b) for i in range(0, n, width_b))
        return cls(grid, a, b)

    @property
    def a_centers(self) -> np.ndarray:
        return np.array([(lo + hi - 1) / 2 for lo, hi in self.a_ranges]) * self.grid.dx

    @property
    def b_centers(self) -> np.ndarray:
        return np.array([(lo + hi - 1) / 2 for lo, hi in self.b_ranges]) * self.grid.dp

    @property
    def areas(self) -> np.ndarray:
        wa = np.array([hi - lo for lo, hi in self.a_ranges]) * self.grid.dx
        wb = np.array([hi - lo for lo, hi in self.b_ranges]) * self.grid.dp
        return wa[:, None] * wb[None, :]


def _components(t_s, grid: Grid1D):
    """Orthonormal-basis amplitude vectors and weights of the system state."""
    if isinstance(t_s, GridWavefunction):
        return [1.0], [t_s.normalized().orthonormal_vector()]
    m = np.asarray(_mat(t_s), dtype=complex)
    if m.shape != (grid.n, grid.n):
        raise ValidationError("system state does not match the grid")
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    keep = w > 1e-14
    return list(w[keep]), [v[:, i] for i in np.nonzero(keep)[0]]


def _centered(labels: np.ndarray, n: int) -> np.ndarray:
    return (labels + n // 2) % n - n // 2


def check_aliasing(vectors, grid: Grid1D, weights=None, tol: float = 1e-10, edge: float = 0.05):
    """Reject states with weight near the position or momentum boundary.

    ``vectors`` are orthonormal-basis amplitudes of the components of a
    state with mixing ``weights`` (default all one); the weighted boundary
    mass is compared with ``tol``.
    """
    n = grid.n
    k = max(1, int(edge * n))
    idx = np.arange(n)
    pos_out = (idx < k) | (idx >= n - k)
    mom_out = np.abs(grid.momentum_index) >= n // 2 - k
    weights = np.ones(len(vectors)) if weights is None else np.asarray(weights, dtype=float)
    pos_edge = mom_edge = 0.0
    for w, v in zip(weights, vectors):
        pos_edge += w * float(np.sum(np.abs(v[pos_out]) ** 2))
        f = np.fft.fft(v, norm="ortho")
        mom_edge += w * float(np.sum(np.abs(f[mom_out]) ** 2))
    if pos_edge > tol or mom_edge > tol:
        raise NumericalError(
            f"grid aliasing: boundary weight {max(pos_edge, mom_edge):.2e} exceeds {tol:.0e}")


def exact_cell_probabilities(t_s, ancilla: AncillaPacket, cells: CellGrid,
                             check: bool = True) -> np.ndarray:
    """``tr[E^A(a-cell) E^B(b-cell) (T_S x T_A)]`` for every cell.

    Returns an array of shape ``(len(a_ranges), len(b_ranges))``.
    """
    g = cells.grid
    n = g.n
    ws, vs = _components(t_s, g)
    anc = ancilla.wavefunction().normalized().orthonormal_vector()
    if check:
        check_aliasing(vs, g, ws)
        check_aliasing([anc], g)
    m = g.momentum_index
    total = _centered(m[:, None] + m[None, :], n)
    out = np.zeros((len(cells.a_ranges), len(cells.b_ranges)))
    for w, v in zip(ws, vs):
        spec = np.fft.fft2(np.outer(v, anc), norm="ortho")
        lab = _centered(np.arange(n), n)
        for j, (blo, bhi) in enumerate(cells.b_ranges):
            mask = (total >= blo) & (total < bhi)
            phi = np.fft.ifft2(np.where(mask, spec, 0.0), norm="ortho")
            diag = _kernels.wrapped_diagonal_sums(np.abs(phi) ** 2)
            for i, (alo, ahi) in enumerate(cells.a_ranges):
                sel = (lab >= alo) & (lab < ahi)
                out[i, j] += w * float(np.sum(diag[sel]))
    return out


def exact_cell_probability(t_s, ancilla: AncillaPacket, cells: CellGrid, i: int, j: int) -> float:
    """Single-cell version of :func:`exact_cell_probabilities`."""
    sub = CellGrid(cells.grid, (cells.a_ranges[i],), (cells.b_ranges[j],))
    return float(exact_cell_probabilities(t_s, ancilla, sub)[0, 0])


def effective_effect(ancilla: AncillaPacket, a: float, b: float, area: float) -> np.ndarray:
    """``S / (2 pi hbar)^2 T_A[a, b]`` in the orthonormal grid basis.

    ``T_A[a, b]`` has kernel ``exp(i b (q - q') / hbar) T_A(q' - a; q - a)``,
    the transpose of the ancilla state shifted by ``a`` and boosted by
    ``-b``.
    """
    g = ancilla.grid
    v = ancilla.displaced(a, b).normalized().orthonormal_vector()
    return area / (2 * math.pi * g.hbar) ** 2 * np.outer(v.conj(), v)


def approx_cell_probabilities(t_s, ancilla: AncillaPacket, cells: CellGrid) -> np.ndarray:
    """Raw single-system approximation for every cell."""
    g = cells.grid
    ws, vs = _components(t_s, g)
    base = ancilla.wavefunction().normalized()
    x = g.x
    shifted = np.array([shift(base, a).orthonormal_vector() for a in cells.a_centers])
    phase = np.exp(-1j * np.outer(x, cells.b_centers) / g.hbar)
    out = np.zeros((len(cells.a_ranges), len(cells.b_ranges)))
    for w, v in zip(ws, vs):
        # <conj(phi_ab)|v> = sum_x phi_ab(x) v(x) for phi_ab = boost(shift(phi, a), -b)
        amp = (shifted * v[None, :]) @ phase
        out += w * np.abs(amp) ** 2
    return cells.areas / (2 * math.pi * g.hbar) ** 2 * out


@dataclass(frozen=True)
class ConvergenceLevel:
    width: int
    cells: CellGrid
    p_exact: np.ndarray
    p_raw: np.ndarray
    ratio: float
    p_calibrated: np.ndarray
    err_raw: float
    err_calibrated: float

    def rows(self) -> list:
        a, b, s = self.cells.a_centers, self.cells.b_centers, self.cells.areas
        out = []
        for i in range(a.size):
            for j in range(b.size):
                out.append((a[i], b[j], s[i, j], self.p_exact[i, j], self.p_raw[i, j],
                            self.p_calibrated[i, j]))
        return out


def fitted_ratio(p_exact: np.ndarray, p_raw: np.ndarray) -> float:
    """Least-squares global factor ``r`` minimizing ``||p_exact - r p_raw||``."""
    den = float(np.sum(p_raw * p_raw))
    if den == 0:
        raise NumericalError("approximation vanishes on every cell")
    return float(np.sum(p_exact * p_raw)) / den


def convergence_study(t_s, ancilla: AncillaPacket, widths=(8, 4, 2, 1)) -> list:
    """Exact and approximate tables for successively halved cells."""
    levels = []
    for w in widths:
        cells = CellGrid.uniform(ancilla.grid, w)
        pe = exact_cell_probabilities(t_s, ancilla, cells)
        pr = approx_cell_probabilities(t_s, ancilla, cells)
        r = fitted_ratio(pe, pr)
        pc = r * pr
        levels.append(ConvergenceLevel(w, cells, pe, pr, r, pc,
                                       float(np.max(np.abs(pe - pr))), float(np.max(np.abs(pe - pc)))))
    return levels


def levels_csv(level: ConvergenceLevel) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["a_k", "b_k", "S_k", "p_exact", "p_approx_raw", "p_approx_calibrated"])
    for row in level.rows():
        wr.writerow([f"{v:.16e}" for v in row])
    return buf.getvalue()


def default_grid(n: int = 128, hbar: float = 1.0) -> Grid1D:
    """Grid with equal position and momentum spacing ``sqrt(2 pi hbar / n)``."""
    dx = math.sqrt(2 * math.pi * hbar / n)
    return Grid1D.centered(n, dx, hbar)
