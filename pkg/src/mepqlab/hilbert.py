"""Finite-dimensional Hilbert-space algebra.

Dense complex matrices on labeled tensor-product spaces: kets, operators,
state operators with optional gemenge decompositions, partial traces,
permutation (anti)symmetrizers, entropies, Gibbs states and moments.

All objects are immutable after construction and all functions are pure.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import optimize

from .errors import NumericalError, ValidationError

#: Eigenvalues of a state down to this value are clipped to zero.
POSITIVITY_TOL = 1e-10
#: Allowed deviation of a state trace from one before it is rejected.
TRACE_TOL = 1e-8
HERMITIAN_TOL = 1e-10


@dataclass(frozen=True)
class HilbertSpace:
    """Tensor product of labeled finite-dimensional factors.

    Parameters
    ----------
    dims : tuple of int
        Factor dimensions, each at least one.
    labels : tuple of str, optional
        Unique factor names. Defaults to ``("f0", "f1", ...)``.
    """

    dims: tuple
    labels: tuple = ()

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d < 1 for d in dims):
            raise ValidationError(f"factor dimensions must be >= 1, got {dims}")
        labels = tuple(self.labels) or tuple(f"f{i}" for i in range(len(dims)))
        if len(labels) != len(dims):
            raise ValidationError("one label per factor is required")
        if len(set(labels)) != len(labels):
            raise ValidationError(f"factor labels must be unique, got {labels}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def index(self, factor: Union[int, str]) -> int:
        """Position of a factor given by index or label."""
        if isinstance(factor, str):
            if factor not in self.labels:
                raise ValidationError(f"unknown factor label {factor!r}")
            return self.labels.index(factor)
        i = int(factor)
        if not 0 <= i < len(self.dims):
            raise ValidationError(f"factor index {i} out of range")
        return i

    def __mul__(self, other: "HilbertSpace") -> "HilbertSpace":
        if set(self.labels) & set(other.labels):
            raise ValidationError("tensor factors must carry disjoint labels")
        return HilbertSpace(self.dims + other.dims, self.labels + other.labels)


def space(*dims: int, labels: Sequence[str] = ()) -> HilbertSpace:
    """Shorthand constructor, ``space(2, 2)`` is a two-qubit space."""
    return HilbertSpace(tuple(dims), tuple(labels))


@dataclass(frozen=True)
class Ket:
    """Vector in a :class:`HilbertSpace`."""

    space: HilbertSpace
    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amp.size != self.space.dim:
            raise ValidationError(
                f"ket length {amp.size} does not match dimension {self.space.dim}")
        amp.setflags(write=False)
        object.__setattr__(self, "amplitudes", amp)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "Ket":
        n = self.norm
        if n == 0.0:
            raise ValidationError("cannot normalize the zero vector")
        return Ket(self.space, self.amplitudes / n)

    def projector(self) -> "LinOp":
        """Rank-one operator ``|k><k|``."""
        a = self.amplitudes
        return LinOp(self.space, np.outer(a, a.conj()))

    def inner(self, other: "Ket") -> complex:
        """``<self|other>``."""
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True)
class LinOp:
    """Linear operator on a :class:`HilbertSpace` stored as a dense matrix."""

    space: HilbertSpace
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        n = self.space.dim
        if m.shape != (n, n):
            raise ValidationError(f"operator shape {m.shape} does not match dimension {n}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        m = self.matrix
        return bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= tol * max(1.0, np.max(np.abs(m), initial=0.0)))

    @property
    def dag(self) -> "LinOp":
        return LinOp(self.space, self.matrix.conj().T)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def __matmul__(self, other):
        if isinstance(other, LinOp):
            return LinOp(self.space, self.matrix @ other.matrix)
        if isinstance(other, Ket):
            return Ket(self.space, self.matrix @ other.amplitudes)
        return NotImplemented

    def __add__(self, other: "LinOp") -> "LinOp":
        return LinOp(self.space, self.matrix + other.matrix)

    def __sub__(self, other: "LinOp") -> "LinOp":
        return LinOp(self.space, self.matrix - other.matrix)

    def scaled(self, c: complex) -> "LinOp":
        return LinOp(self.space, c * self.matrix)


@dataclass(frozen=True)
class StateOperator:
    """Positive unit-trace operator, optionally with a gemenge.

    Use :func:`make_state` to build one from a raw matrix; it validates
    positivity and trace and clips tiny negative eigenvalues.

    Attributes
    ----------
    op : LinOp
        The density matrix.
    gemenge : tuple of (float, StateOperator), optional
        Convex decomposition fixed by the preparation. Weights are
        nonnegative, sum to one and recombine to ``op``.
    """

    op: LinOp
    gemenge: tuple = field(default=())

    @property
    def space(self) -> HilbertSpace:
        return self.op.space

    @property
    def matrix(self) -> np.ndarray:
        return self.op.matrix

    def expect(self, a: Union[LinOp, np.ndarray]) -> complex:
        """``tr[T A]``."""
        return complex(np.einsum("ij,ji->", self.matrix, _mat(a)))

    def evolve(self, u: Union[LinOp, np.ndarray]) -> "StateOperator":
        """Unitary evolution ``U T U^dag`` applied to the operator and to each
        gemenge component."""
        um = _mat(u)
        m = um @ self.matrix @ um.conj().T
        gem = tuple((w, c.evolve(um)) for w, c in self.gemenge)
        return StateOperator(LinOp(self.space, m), gem)


Operand = Union[LinOp, StateOperator, np.ndarray]


def _mat(a) -> np.ndarray:
    if isinstance(a, (LinOp, StateOperator)):
        return a.matrix
    if isinstance(a, Ket):
        return a.amplitudes
    return np.asarray(a)


def _space_of(a, default_dims=None) -> HilbertSpace:
    if isinstance(a, (LinOp, StateOperator, Ket)):
        return a.space
    m = np.asarray(a)
    return HilbertSpace((m.shape[0],) if default_dims is None else default_dims)


def make_state(matrix, space_: HilbertSpace | None = None, gemenge=None,
               tol: float = POSITIVITY_TOL, trace_tol: float = TRACE_TOL) -> StateOperator:
    """Validate a density matrix and wrap it as a :class:`StateOperator`.

    Parameters
    ----------
    matrix : array_like or LinOp
        Candidate density matrix. The hermitian part is used.
    space_ : HilbertSpace, optional
        Tensor structure. Defaults to a single factor.
    gemenge : sequence of (weight, StateOperator), optional
        Convex decomposition; checked for consistency with ``matrix``.
    tol : float
        Eigenvalues in ``[-tol, 0)`` are clipped to zero.
    trace_tol : float
        Maximum allowed ``|tr T - 1|`` before renormalization.

    Raises
    ------
    ValidationError
        Non-hermitian input, an eigenvalue below ``-tol``, a trace away from
        one, or an inconsistent gemenge.
    """
    if space_ is None:
        space_ = _space_of(matrix)
    m = np.array(_mat(matrix), dtype=complex)
    if m.shape != (space_.dim, space_.dim):
        raise ValidationError(f"state shape {m.shape} does not match dimension {space_.dim}")
    scale = max(1.0, float(np.max(np.abs(m), initial=0.0)))
    if np.max(np.abs(m - m.conj().T), initial=0.0) > 1e-8 * scale:
        raise ValidationError("state operator must be hermitian")
    m = 0.5 * (m + m.conj().T)
    tr = float(np.real(np.trace(m)))
    if abs(tr - 1.0) > trace_tol:
        raise ValidationError(f"state trace must be 1, got {tr:.3e}")
    w, v = np.linalg.eigh(m)
    if w[0] < -tol:
        raise ValidationError(f"state has negative eigenvalue {w[0]:.3e}")
    if w[0] < 0.0:
        w = np.clip(w, 0.0, None)
        m = (v * w) @ v.conj().T
    m = m / np.real(np.trace(m))
    gem = ()
    if gemenge:
        gem = tuple((float(wk), tk) for wk, tk in gemenge)
        ws = np.array([wk for wk, _ in gem])
        if np.any(ws < -1e-14) or np.any(ws > 1 + 1e-14) or abs(ws.sum() - 1.0) > 1e-10:
            raise ValidationError("gemenge weights must lie in [0,1] and sum to 1")
        recomb = sum(wk * tk.matrix for wk, tk in gem)
        if np.max(np.abs(recomb - m)) > 1e-9:
            raise ValidationError("gemenge does not recombine to the state operator")
    return StateOperator(LinOp(space_, m), gem)


def pure_state(ket: Union[Ket, np.ndarray], space_: HilbertSpace | None = None) -> StateOperator:
    """Projector onto a normalized ket."""
    if not isinstance(ket, Ket):
        a = np.asarray(ket, dtype=complex)
        ket = Ket(space_ or HilbertSpace((a.size,)), a)
    k = ket.normalized()
    return StateOperator(k.projector())


def mixture(weights: Sequence[float], states: Sequence[StateOperator]) -> StateOperator:
    """Convex combination carrying the components as its gemenge."""
    m = sum(w * s.matrix for w, s in zip(weights, states))
    return make_state(m, states[0].space, gemenge=list(zip(weights, states)))


def basis_ket(space_: HilbertSpace, index: int) -> Ket:
    a = np.zeros(space_.dim, dtype=complex)
    a[index] = 1.0
    return Ket(space_, a)


def identity(space_: HilbertSpace) -> LinOp:
    return LinOp(space_, np.eye(space_.dim, dtype=complex))


def tensor(a, b):
    """Tensor product of two kets, two operators or two states.

    The result lives on the concatenated space; factor labels of the two
    operands must be disjoint (they are renamed when both use defaults).
    """
    sa, sb = _space_of(a), _space_of(b)
    if set(sa.labels) & set(sb.labels):
        n = len(sa.dims)
        sb = HilbertSpace(sb.dims, tuple(f"f{n + i}" for i in range(len(sb.dims))))
        if set(sa.labels) & set(sb.labels):
            raise ValidationError("tensor factors must carry disjoint labels")
    sp = sa * sb
    if isinstance(a, Ket) and isinstance(b, Ket):
        return Ket(sp, np.kron(a.amplitudes, b.amplitudes))
    if isinstance(a, Ket) or isinstance(b, Ket):
        raise ValidationError("cannot tensor a ket with an operator")
    ma, mb = _mat(a), _mat(b)
    if ma.ndim != 2 or mb.ndim != 2:
        raise ValidationError("dimension mismatch in tensor product")
    m = np.kron(ma, mb)
    if isinstance(a, StateOperator) and isinstance(b, StateOperator):
        return StateOperator(LinOp(sp, m))
    return LinOp(sp, m)


def partial_trace(w: Operand, keep: Sequence[Union[int, str]],
                  space_: HilbertSpace | None = None, validate: bool = True):
    """Trace out every factor not listed in ``keep``.

    Parameters
    ----------
    w : StateOperator or LinOp or ndarray
        Operator on a product space.
    keep : sequence of int or str
        Factors to keep, by index or label, in the order they should appear.
    space_ : HilbertSpace, optional
        Tensor structure for a raw array input.
    validate : bool
        When true the input must be a state (trace one) and a
        :class:`StateOperator` is returned; otherwise a :class:`LinOp`.
    """
    sp = space_ or _space_of(w)
    m = _mat(w)
    if m.shape != (sp.dim, sp.dim):
        raise ValidationError("operator shape does not match space")
    if validate and abs(np.trace(m) - 1.0) > TRACE_TOL:
        raise ValidationError("partial trace expects a state (trace 1)")
    keep_idx = [sp.index(k) for k in keep]
    if len(set(keep_idx)) != len(keep_idx):
        raise ValidationError("duplicate factors in keep")
    n = len(sp.dims)
    traced = [i for i in range(n) if i not in keep_idx]
    t = m.reshape(sp.dims + sp.dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = list(letters[:n])
    col = list(letters[n:2 * n]) if 2 * n <= 26 else None
    if col is None:
        raise ValidationError("too many factors for partial trace")
    for i in traced:
        col[i] = row[i]
    out = "".join(row[i] for i in keep_idx) + "".join(col[i] for i in keep_idx)
    r = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    dims = tuple(sp.dims[i] for i in keep_idx)
    labels = tuple(sp.labels[i] for i in keep_idx)
    d = int(np.prod(dims)) if dims else 1
    r = r.reshape(d, d)
    sub = HilbertSpace(dims or (1,), labels or ("scalar",))
    if validate:
        return make_state(r, sub)
    return LinOp(sub, r)


def _permutation_axes(n: int):
    for perm in itertools.permutations(range(n)):
        inv = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
        yield perm, (-1) ** inv


def symmetrize_vector(v: np.ndarray, n_factors: int, dim: int, kind: str = "symmetric") -> np.ndarray:
    """Apply the (anti)symmetrizer to a vector of ``n_factors`` equal factors
    without forming the projector matrix."""
    sign = _kind_sign(kind)
    t = np.asarray(v, dtype=complex).reshape((dim,) * n_factors)
    acc = np.zeros_like(t)
    for perm, par in _permutation_axes(n_factors):
        acc += (par if sign < 0 else 1) * np.transpose(t, perm)
    return (acc / math.factorial(n_factors)).reshape(-1)


def symmetrize_rows(m: np.ndarray, n_factors: int, dim: int, kind: str = "symmetric") -> np.ndarray:
    """``P @ m`` for the (anti)symmetrizer ``P`` acting on the row index."""
    sign = _kind_sign(kind)
    cols = m.shape[1]
    t = np.asarray(m, dtype=complex).reshape((dim,) * n_factors + (cols,))
    acc = np.zeros_like(t)
    for perm, par in _permutation_axes(n_factors):
        acc += (par if sign < 0 else 1) * np.transpose(t, tuple(perm) + (n_factors,))
    return (acc / math.factorial(n_factors)).reshape(m.shape)


def sandwich_symmetrizer(m: np.ndarray, n_factors: int, dim: int, kind: str = "symmetric") -> np.ndarray:
    """``P m P`` for the hermitian (anti)symmetrizer ``P``."""
    left = symmetrize_rows(m, n_factors, dim, kind)
    return symmetrize_rows(left.conj().T, n_factors, dim, kind).conj().T


def _kind_sign(kind: str) -> int:
    if kind in ("symmetric", "s", "+", 1):
        return 1
    if kind in ("antisymmetric", "a", "-", -1):
        return -1
    raise ValidationError(f"unknown symmetrizer kind {kind!r}")


def symmetrizer(n_factors: int, dim: Union[int, Sequence[int]], kind: str = "symmetric") -> LinOp:
    """Projector onto the symmetric or antisymmetric subspace.

    Parameters
    ----------
    n_factors : int
        Number of identical factors.
    dim : int or sequence of int
        Factor dimension; a sequence must hold ``n_factors`` equal entries.
    kind : {"symmetric", "antisymmetric"}

    Returns
    -------
    LinOp
        ``(1/n!) sum_pi s(pi) U_pi`` with ``s`` the sign for the
        antisymmetric case and one otherwise.
    """
    if isinstance(dim, (list, tuple)):
        if len(dim) != n_factors or len(set(dim)) != 1:
            raise ValidationError("symmetrizer needs equal factor dimensions")
        dim = dim[0]
    dim = int(dim)
    sp = HilbertSpace((dim,) * n_factors)
    eye = np.eye(sp.dim, dtype=complex)
    return LinOp(sp, symmetrize_rows(eye, n_factors, dim, kind))


def spin_ops(s: float = 0.5, hbar: float = 1.0):
    """Spin matrices ``(s1, s2, s3)`` for spin ``s`` in the basis
    ``m = s, s-1, ..., -s``."""
    twice = round(2 * s)
    if twice < 1 or abs(twice - 2 * s) > 1e-12:
        raise ValidationError("spin must be a positive half-integer")
    d = twice + 1
    m = s - np.arange(d)
    sp_ = np.zeros((d, d), dtype=complex)
    for i in range(1, d):
        sp_[i - 1, i] = np.sqrt(s * (s + 1) - m[i] * (m[i] + 1))
    sx = 0.5 * (sp_ + sp_.T)
    sy = -0.5j * (sp_ - sp_.T)
    sz = np.diag(m).astype(complex)
    sp = HilbertSpace((d,))
    return SpinOps(LinOp(sp, hbar * sx), LinOp(sp, hbar * sy), LinOp(sp, hbar * sz), hbar)


@dataclass(frozen=True)
class SpinOps:
    s1: LinOp
    s2: LinOp
    s3: LinOp
    hbar: float


def commutator(a: Operand, b: Operand) -> np.ndarray:
    ma, mb = _mat(a), _mat(b)
    return ma @ mb - mb @ ma


def trace_norm(a: Operand, tol: float = HERMITIAN_TOL) -> float:
    """Sum of singular values of a hermitian operator.

    Non-hermitian input is rejected.
    """
    m = _mat(a)
    if np.max(np.abs(m - m.conj().T), initial=0.0) > tol * max(1.0, np.max(np.abs(m), initial=0.0)):
        raise ValidationError("trace norm is defined here for hermitian operators only")
    return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (m + m.conj().T)))))


def entropy_of_weights(p: np.ndarray) -> float:
    """``-sum p ln p`` with ``0 ln 0 = 0``."""
    p = np.asarray(p, dtype=float)
    p = p[p > 0.0]
    return float(-np.sum(p * np.log(p)))


def von_neumann_entropy(t: Operand) -> float:
    """Entropy ``-tr[T ln T]`` in nats."""
    m = _mat(t)
    w = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    if w[0] < -POSITIVITY_TOL:
        raise ValidationError("entropy needs a positive operator")
    return max(0.0, entropy_of_weights(np.clip(w, 0.0, None)))


def variance(a: Operand, t: Operand, tol: float = 1e-10) -> float:
    """Standard deviation ``sqrt(tr[T A^2] - tr[T A]^2)``.

    Raises
    ------
    ValidationError
        Non-hermitian ``a`` or a radicand below ``-tol``.
    """
    ma, mt = _mat(a), _mat(t)
    if np.max(np.abs(ma - ma.conj().T), initial=0.0) > HERMITIAN_TOL * max(1.0, np.max(np.abs(ma))):
        raise ValidationError("variance needs a hermitian observable")
    m1 = np.real(np.einsum("ij,ji->", mt, ma))
    m2 = np.real(np.einsum("ij,ji->", mt, ma @ ma))
    rad = m2 - m1 * m1
    if rad < -tol * max(1.0, abs(m2)):
        raise NumericalError(f"negative variance radicand {rad:.3e}")
    return math.sqrt(max(rad, 0.0))


def normalized_correlation(a: Operand, b: Operand, t: Operand, tol: float = 1e-10) -> float:
    """Normalized correlation of two commuting observables.

    ``C = (tr[T A B] - tr[T A] tr[T B]) / (dA dB)``.
    """
    ma, mb, mt = _mat(a), _mat(b), _mat(t)
    if np.max(np.abs(commutator(ma, mb)), initial=0.0) > tol * max(1.0, np.max(np.abs(ma)) * np.max(np.abs(mb))):
        raise ValidationError("correlation is only defined for commuting observables")
    da, db = variance(ma, mt), variance(mb, mt)
    if da <= tol or db <= tol:
        raise ValidationError("correlation undefined for zero variance")
    ea = np.real(np.einsum("ij,ji->", mt, ma))
    eb = np.real(np.einsum("ij,ji->", mt, mb))
    eab = np.real(np.einsum("ij,ji->", mt, ma @ mb))
    return float((eab - ea * eb) / (da * db))


def gibbs_state(h: Operand, e_target: float, xtol: float = 1e-14):
    """Maximum-entropy state at fixed mean energy.

    Parameters
    ----------
    h : LinOp or ndarray
        Hermitian Hamiltonian.
    e_target : float
        Required ``tr[T H]``, strictly inside the spectral range.

    Returns
    -------
    state : StateOperator
        ``exp(-lam H) / tr exp(-lam H)``.
    lam : float
        Lagrange multiplier, found by bisection on the monotone map
        ``lam -> tr[T_lam H]`` with a geometrically expanded bracket.
    """
    mh = _mat(h)
    sp = _space_of(h)
    e, v = np.linalg.eigh(0.5 * (mh + mh.conj().T))
    span = e[-1] - e[0]
    if span <= 0 or not (e[0] < e_target < e[-1]):
        raise ValidationError("target energy must lie strictly inside the spectrum")

    def weights(lam):
        x = -lam * (e - (e[0] if lam >= 0 else e[-1]))
        w = np.exp(x - x.max())
        return w / w.sum()

    def f(lam):
        return float(weights(lam) @ e) - e_target

    lo, hi = -1.0 / span, 1.0 / span
    for _ in range(200):
        if f(lo) > 0:
            break
        lo *= 2.0
    for _ in range(200):
        if f(hi) < 0:
            break
        hi *= 2.0
    if f(lo) * f(hi) > 0:
        raise NumericalError("could not bracket the Lagrange multiplier")
    f0 = f(0.0)
    if f0 == 0.0:
        lam = 0.0
    else:
        lam = optimize.bisect(f, lo, hi, xtol=xtol * max(1.0, abs(hi)), maxiter=400)
    w = weights(lam)
    return make_state((v * w) @ v.conj().T, sp), float(lam)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary from the QR decomposition of a Ginibre matrix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return 0.5 * (z + z.conj().T)


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random density matrix ``G G^dag / tr`` with ``G`` of shape dim x rank."""
    k = dim if rank is None else rank
    g = rng.standard_normal((dim, k)) + 1j * rng.standard_normal((dim, k))
    m = g @ g.conj().T
    return m / np.real(np.trace(m))


def random_ket(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return z / np.linalg.norm(z)
