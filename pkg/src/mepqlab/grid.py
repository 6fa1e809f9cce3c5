"""Uniform periodic position grid.

Wavefunctions are sampled on ``x_j = x0 + j dx`` with inner product
``<phi|psi> = dx sum conj(phi) psi``. An integral kernel ``A(x; x')``
acts as ``(A psi)(x) = dx sum A(x; x') psi(x')``; in the orthonormal basis
``sqrt(dx) delta_j`` its matrix is ``dx * A``. State operators on the grid
are stored in that orthonormal basis.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .hilbert import HilbertSpace, LinOp, StateOperator, _mat, make_state
from .povm import DiscretePOVM, Effect


@dataclass(frozen=True)
class Grid1D:
    """Periodic grid of ``n`` points starting at ``x0`` with spacing ``dx``."""

    x0: float
    dx: float
    n: int
    hbar: float = 1.0

    def __post_init__(self):
        if self.dx <= 0:
            raise ValidationError("grid spacing must be positive")
        if self.n < 8:
            raise ValidationError("grid needs at least 8 points")
        if self.hbar <= 0:
            raise ValidationError("hbar must be positive")

    @classmethod
    def centered(cls, n: int, dx: float, hbar: float = 1.0) -> "Grid1D":
        """Grid whose point ``n // 2`` sits at the origin."""
        return cls(-(n // 2) * dx, dx, n, hbar)

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.n)

    @property
    def length(self) -> float:
        return self.n * self.dx

    @property
    def dp(self) -> float:
        """Momentum lattice spacing ``2 pi hbar / (n dx)``."""
        return 2 * math.pi * self.hbar / (self.n * self.dx)

    @property
    def momentum_index(self) -> np.ndarray:
        """Centered integer momentum labels in FFT order."""
        return np.rint(np.fft.fftfreq(self.n) * self.n).astype(int)

    @property
    def p(self) -> np.ndarray:
        """Momentum lattice in FFT order."""
        return self.dp * self.momentum_index

    def space(self) -> HilbertSpace:
        return HilbertSpace((self.n,), ("x",))

    def dft_matrix(self) -> np.ndarray:
        """Unitary DFT ``F`` mapping position amplitudes to momentum
        amplitudes in FFT order, including the phase of the grid offset."""
        f = np.fft.fft(np.eye(self.n), axis=0, norm="ortho")
        return np.exp(-1j * self.p * self.x0 / self.hbar)[:, None] * f


@dataclass(frozen=True)
class GridWavefunction:
    """Complex samples of a wavefunction on a :class:`Grid1D`."""

    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=complex).reshape(-1)
        if v.size != self.grid.n:
            raise ValidationError("wavefunction length does not match the grid")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def norm(self) -> float:
        return math.sqrt(self.grid.dx * float(np.sum(np.abs(self.values) ** 2)))

    def normalized(self) -> "GridWavefunction":
        nrm = self.norm
        if nrm == 0:
            raise ValidationError("cannot normalize the zero wavefunction")
        return GridWavefunction(self.grid, self.values / nrm)

    def inner(self, other: "GridWavefunction") -> complex:
        """``<self|other>``."""
        _same_grid(self.grid, other.grid)
        return complex(self.grid.dx * np.vdot(self.values, other.values))

    def orthonormal_vector(self) -> np.ndarray:
        """Amplitudes in the orthonormal basis, ``sqrt(dx) psi``."""
        return math.sqrt(self.grid.dx) * self.values

    def state(self) -> StateOperator:
        """Pure state in the orthonormal grid basis."""
        a = self.normalized().orthonormal_vector()
        return make_state(np.outer(a, a.conj()), self.grid.space())

    def momentum_amplitudes(self) -> np.ndarray:
        """Unit-norm momentum amplitudes in FFT order."""
        return np.fft.fft(self.values, norm="ortho") * math.sqrt(self.grid.dx) \
            * np.exp(-1j * self.grid.p * self.grid.x0 / self.grid.hbar)

    def moments(self) -> dict:
        """Means and standard deviations of position and momentum."""
        g = self.grid
        rho = np.abs(self.values) ** 2 * g.dx
        rho = rho / rho.sum()
        mq = float(rho @ g.x)
        dq = math.sqrt(max(float(rho @ (g.x - mq) ** 2), 0.0))
        pk = np.abs(self.momentum_amplitudes()) ** 2
        pk = pk / pk.sum()
        mp = float(pk @ g.p)
        dp = math.sqrt(max(float(pk @ (g.p - mp) ** 2), 0.0))
        return {"Q": mq, "P": mp, "dQ": dq, "dP": dp}


@dataclass(frozen=True)
class RegionMask:
    """Grid sampling of an open region ``D``."""

    grid: Grid1D
    indicator: np.ndarray

    def __post_init__(self):
        ind = np.array(self.indicator, dtype=bool).reshape(-1)
        if ind.size != self.grid.n:
            raise ValidationError("mask length does not match the grid")
        ind.setflags(write=False)
        object.__setattr__(self, "indicator", ind)

    @classmethod
    def interval(cls, grid: Grid1D, lo: float, hi: float) -> "RegionMask":
        x = grid.x
        return cls(grid, (x > lo) & (x < hi))

    @property
    def projector(self) -> np.ndarray:
        return np.diag(self.indicator.astype(complex))

    def overlaps(self, other: "RegionMask") -> bool:
        return bool(np.any(self.indicator & other.indicator))

    def is_empty(self) -> bool:
        return not bool(np.any(self.indicator))


@dataclass(frozen=True)
class KernelOp:
    """Integral kernel ``A(x; x')`` on a grid."""

    grid: Grid1D
    kernel: np.ndarray

    def __post_init__(self):
        k = np.array(self.kernel, dtype=complex)
        if k.shape != (self.grid.n, self.grid.n):
            raise ValidationError("kernel shape does not match the grid")
        k.setflags(write=False)
        object.__setattr__(self, "kernel", k)

    @classmethod
    def from_matrix(cls, grid: Grid1D, m) -> "KernelOp":
        """Kernel of the operator with orthonormal-basis matrix ``m``."""
        return cls(grid, np.asarray(_mat(m)) / grid.dx)

    def matrix(self) -> np.ndarray:
        return self.grid.dx * self.kernel

    def as_linop(self) -> LinOp:
        return LinOp(self.grid.space(), self.matrix())

    def apply(self, psi: GridWavefunction) -> GridWavefunction:
        _same_grid(self.grid, psi.grid)
        return GridWavefunction(self.grid, self.grid.dx * (self.kernel @ psi.values))


def _same_grid(a: Grid1D, b: Grid1D):
    if a != b:
        raise ValidationError("operands live on different grids")


def identity_kernel(grid: Grid1D) -> KernelOp:
    """Kernel of the identity, ``delta(x - x')`` as ``1/dx`` on the diagonal."""
    return KernelOp(grid, np.eye(grid.n) / grid.dx)


def position_kernel(grid: Grid1D) -> KernelOp:
    return KernelOp(grid, np.diag(grid.x) / grid.dx)


def momentum_matrix(grid: Grid1D, power: int = 1) -> np.ndarray:
    """Orthonormal-basis matrix of ``p**power`` through the DFT."""
    f = grid.dft_matrix()
    return f.conj().T @ (grid.p[:, None] ** power * f)


def gaussian(grid: Grid1D, center: float, sigma: float, momentum: float = 0.0) -> GridWavefunction:
    """Normalized Gaussian packet with position spread ``sigma``."""
    x = grid.x
    v = np.exp(-((x - center) ** 2) / (4 * sigma ** 2) + 1j * momentum * x / grid.hbar)
    return GridWavefunction(grid, v).normalized()


# ------------------------------------------------------------ measures ---

def _check_cells(cells) -> list:
    out = []
    for c in cells:
        lo, hi = float(c[0]), float(c[1])
        if not hi > lo:
            raise ValidationError(f"empty cell [{lo}, {hi})")
        out.append((lo, hi))
    return out


def position_pvm(grid: Grid1D, cells: Sequence) -> DiscretePOVM:
    """Sharp position measure for half-open cells ``[lo, hi)``.

    Outcome labels are the cell centers. Every grid point must fall in
    exactly one cell.
    """
    cells = _check_cells(cells)
    x = grid.x
    count = np.zeros(grid.n, dtype=int)
    masks = []
    for lo, hi in cells:
        m = (x >= lo) & (x < hi)
        count += m
        masks.append(m)
    if np.any(count > 1):
        raise ValidationError("position cells overlap")
    if np.any(count == 0):
        raise ValidationError("position cells do not cover the grid")
    outs = [0.5 * (lo + hi) for lo, hi in cells]
    effs = [Effect.of(np.diag(m.astype(complex)), grid.space()) for m in masks]
    return DiscretePOVM(tuple(outs), tuple(effs))


def momentum_cell_indices(grid: Grid1D, lo: float, hi: float) -> np.ndarray:
    """Boolean selection of momentum lattice points for ``[lo, hi)``.

    The left edge snaps down and the right edge snaps up to the lattice,
    so adjacent cells whose shared edge is off the lattice overlap.
    """
    j = grid.momentum_index
    jlo = math.floor(lo / grid.dp + 1e-12)
    jhi = math.ceil(hi / grid.dp - 1e-12)
    return (j >= jlo) & (j < jhi)


def momentum_pvm(grid: Grid1D, cells: Sequence) -> DiscretePOVM:
    """Sharp momentum measure: DFT conjugates of lattice masks.

    Outcome labels are the (unsnapped) cell centers.
    """
    cells = _check_cells(cells)
    f = grid.dft_matrix()
    count = np.zeros(grid.n, dtype=int)
    masks = []
    for lo, hi in cells:
        m = momentum_cell_indices(grid, lo, hi)
        count += m
        masks.append(m)
    if np.any(count > 1):
        raise ValidationError("momentum cells overlap after snapping to the lattice")
    if np.any(count == 0):
        raise ValidationError("momentum cells do not cover the lattice")
    effs = []
    for m in masks:
        e = f.conj().T @ (m[:, None] * f)
        effs.append(Effect.of(0.5 * (e + e.conj().T), grid.space()))
    return DiscretePOVM(tuple(0.5 * (lo + hi) for lo, hi in cells), tuple(effs))


# --------------------------------------------------------- symmetries ---

def shift(psi: GridWavefunction, a: float) -> GridWavefunction:
    """``psi(x - a)`` by a Fourier phase; wraps around the periodic grid."""
    g = psi.grid
    k = g.p / g.hbar
    v = np.fft.ifft(np.fft.fft(psi.values) * np.exp(-1j * k * a))
    return GridWavefunction(g, v)


def boost(psi: GridWavefunction, mu_v: float) -> GridWavefunction:
    """Multiply by ``exp(i mu_v x / hbar)``, shifting momentum by ``mu_v``."""
    g = psi.grid
    return GridWavefunction(g, psi.values * np.exp(1j * mu_v * g.x / g.hbar))


# ---------------------------------------------------------- locality ---

def is_d_local(a, mask: RegionMask, tol: float = 1e-12) -> bool:
    """Rows and columns of the kernel vanish outside ``mask``."""
    k = a.kernel if isinstance(a, KernelOp) else np.asarray(_mat(a))
    out = ~mask.indicator
    scale = max(1.0, float(np.max(np.abs(k), initial=0.0)))
    rows = np.max(np.abs(k[out, :]), initial=0.0)
    cols = np.max(np.abs(k[:, out]), initial=0.0)
    return bool(max(rows, cols) <= tol * scale)


def d_localise(a: KernelOp, mask: RegionMask) -> KernelOp:
    """``P_D A P_D``."""
    _same_grid(a.grid, mask.grid)
    if mask.is_empty():
        raise ValidationError("localisation region is empty")
    ind = mask.indicator.astype(float)
    return KernelOp(a.grid, ind[:, None] * a.kernel * ind[None, :])


def localise_state(psi: GridWavefunction, mask: RegionMask) -> GridWavefunction:
    """Restrict a wavefunction to ``mask`` and renormalize."""
    _same_grid(psi.grid, mask.grid)
    return GridWavefunction(psi.grid, psi.values * mask.indicator).normalized()


# ------------------------------------------------ identical particles ---

@dataclass(frozen=True)
class TwoParticleWavefunction:
    """Samples ``Psi(x1, x2)`` on the product grid, first index is ``x1``."""

    grid: Grid1D
    values: np.ndarray

    @property
    def norm(self) -> float:
        return math.sqrt(self.grid.dx ** 2 * float(np.sum(np.abs(self.values) ** 2)))


def symmetrize_pair(psi: GridWavefunction, phi: GridWavefunction, eps: int):
    """Symmetrized (``eps = +1``) or antisymmetrized (``eps = -1``) product.

    Returns
    -------
    Psi : TwoParticleWavefunction
        ``nu (psi(x1) phi(x2) + eps phi(x1) psi(x2))``.
    nu : float
        ``[2 (1 + eps |c|^2)]^(-1/2)`` with ``c = <psi|phi>``.
    """
    _same_grid(psi.grid, phi.grid)
    if eps not in (1, -1):
        raise ValidationError("eps must be +1 or -1")
    c = psi.inner(phi)
    den = 2.0 * (1.0 + eps * abs(c) ** 2)
    if den <= 1e-12:
        raise ValidationError("antisymmetrized product vanishes (Pauli exclusion)")
    nu = 1.0 / math.sqrt(den)
    a, b = psi.values, phi.values
    vals = nu * (np.outer(a, b) + eps * np.outer(b, a))
    return TwoParticleWavefunction(psi.grid, vals), nu


@dataclass(frozen=True)
class SymmetricObservable:
    """Two-particle kernel ``a(x1;x1') delta(x2-x2') + delta(x1-x1') a(x2;x2')``.

    Stored through its one-particle kernel; :meth:`kernel` forms the dense
    ``n^2 x n^2`` kernel for small grids.
    """

    one: KernelOp

    def apply(self, Psi: TwoParticleWavefunction) -> TwoParticleWavefunction:
        m = self.one.matrix()
        v = Psi.values
        return TwoParticleWavefunction(Psi.grid, m @ v + v @ m.T)

    def expect(self, Psi: TwoParticleWavefunction) -> complex:
        dx = Psi.grid.dx
        return complex(dx * dx * np.vdot(Psi.values, self.apply(Psi).values))

    def kernel(self) -> np.ndarray:
        g = self.one.grid
        n = g.n
        delta = np.eye(n) / g.dx
        return np.kron(self.one.kernel, delta) + np.kron(delta, self.one.kernel)


def symmetric_observable(a: KernelOp) -> SymmetricObservable:
    return SymmetricObservable(a)


def convolution_products(a: KernelOp, b: KernelOp):
    """Kernel compositions ``A B`` and ``B A`` (with the ``dx`` weight)."""
    _same_grid(a.grid, b.grid)
    dx = a.grid.dx
    return dx * a.kernel @ b.kernel, dx * b.kernel @ a.kernel


@dataclass(frozen=True)
class ClusterResult:
    lhs: float
    rhs: float
    normalization: float
    passed: bool


def cluster_separability_check(t1, t2, e, eps: int, mask1: RegionMask, mask2: RegionMask,
                               tol: float = 1e-8, locality_tol: float = 1e-12) -> ClusterResult:
    """Compare the one-slot registration probability in a symmetrized
    two-particle state with the single-particle value.

    Parameters
    ----------
    t1, t2 : StateOperator or ndarray
        Single-particle states in the orthonormal grid basis, local to
        ``mask1`` and ``mask2``.
    e : Effect or ndarray
        Effect local to ``mask1``.
    eps : {+1, -1}
    mask1, mask2 : RegionMask
        Disjoint regions.

    Returns
    -------
    ClusterResult
        ``lhs = tr[(E x 1 + 1 x E) P (T1 x T2) P] / tr[P (T1 x T2) P]`` and
        ``rhs = tr[E T1]``. The two-particle traces reduce to one-particle
        traces through ``tr[S (X x Y)] = tr[X Y]`` for the swap ``S``, so no
        two-particle matrix is formed.
    """
    if eps not in (1, -1):
        raise ValidationError("eps must be +1 or -1")
    if mask1.overlaps(mask2):
        raise ValidationError("localisation regions overlap")
    m1, m2 = np.asarray(_mat(t1)), np.asarray(_mat(t2))
    me = np.asarray(_mat(e.op if isinstance(e, Effect) else e))
    if not is_d_local(m1, mask1, locality_tol):
        raise ValidationError("first state is not local to its region")
    if not is_d_local(m2, mask2, locality_tol):
        raise ValidationError("second state is not local to its region")
    if not is_d_local(me, mask1, locality_tol):
        raise ValidationError("effect is not local to the first region")

    def tr(x):
        return complex(np.trace(x))

    overlap = tr(m1 @ m2)
    norm = 0.5 * (1.0 + eps * overlap)
    num = tr(me @ m1) + tr(me @ m2) + eps * (tr(me @ m2 @ m1) + tr(me @ m1 @ m2))
    # numerator tr[(E x 1 + 1 x E) P (T1 x T2)] = num / 2, denominator = norm
    lhs = float(np.real(0.5 * num / norm))
    rhs = float(np.real(tr(me @ m1)))
    return ClusterResult(lhs, rhs, float(np.real(norm)), abs(lhs - rhs) < tol)


def cluster_check_pure(psi1: GridWavefunction, psi2: GridWavefunction, e_diag: np.ndarray,
                       eps: int) -> float:
    """Direct two-particle evaluation of the left-hand side for pure states
    and a diagonal (multiplication) effect ``e_diag``.

    Builds ``Psi`` on the ``n x n`` product grid and evaluates
    ``<Psi|(E x 1 + 1 x E)|Psi>``; used as an independent cross-check.
    """
    Psi, _ = symmetrize_pair(psi1, psi2, eps)
    dx = psi1.grid.dx
    w = np.abs(Psi.values) ** 2 * dx * dx
    e = np.asarray(e_diag, dtype=float)
    return float(np.sum(w * (e[:, None] + e[None, :])))


# -------------------------------------------------------------- files ---

def wavefunction_to_csv(psi: GridWavefunction) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "re", "im"])
    for x, v in zip(psi.grid.x, psi.values):
        w.writerow([f"{x:.17e}", f"{v.real:.17e}", f"{v.imag:.17e}"])
    return buf.getvalue()


def _grid_from_x(x: np.ndarray, hbar: float) -> Grid1D:
    dx = np.diff(x)
    if x.size < 8 or np.any(dx <= 0) or np.max(np.abs(dx - dx.mean())) > 1e-9 * max(1.0, abs(dx.mean())):
        raise ValidationError("x column must be a uniform increasing grid of >= 8 points")
    return Grid1D(float(x[0]), float(dx.mean()), int(x.size), hbar)


def wavefunction_from_csv(text: str, hbar: float = 1.0) -> GridWavefunction:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows or set(rows[0]) != {"x", "re", "im"}:
        raise ValidationError("wavefunction CSV needs columns x, re, im")
    x = np.array([float(r["x"]) for r in rows])
    v = np.array([complex(float(r["re"]), float(r["im"])) for r in rows])
    return GridWavefunction(_grid_from_x(x, hbar), v)


def mask_to_csv(mask: RegionMask) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "indicator"])
    for x, b in zip(mask.grid.x, mask.indicator):
        w.writerow([f"{x:.17e}", int(b)])
    return buf.getvalue()


def mask_from_csv(text: str, hbar: float = 1.0) -> RegionMask:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows or set(rows[0]) != {"x", "indicator"}:
        raise ValidationError("mask CSV needs columns x, indicator")
    x = np.array([float(r["x"]) for r in rows])
    ind = np.array([int(r["indicator"]) for r in rows])
    if not np.all((ind == 0) | (ind == 1)):
        raise ValidationError("mask indicator must be 0 or 1")
    return RegionMask(_grid_from_x(x, hbar), ind.astype(bool))
