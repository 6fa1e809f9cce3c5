"""Premeasurement models.

The first part implements the unitary coupling that maps system
eigenvectors tensored with the apparatus ready state onto target vectors
tensored with pointer states, together with its state transformer and
repeatability and objectification diagnostics.

The second part builds the trigger-stage states of a detector array whose
sensitive matter contains particles identical to the measured one. The
single-particle space is split into label-disjoint blocks, one per
detector, and every particle slot carries the full single-particle space:
slot 0 is the measured system and detector ``k`` owns ``M_k`` further
slots. Apparatus operators are written in the orthonormal basis
``(psi_0, psi_1, ..., psi_N)`` of ready and trigger states.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError
from .hilbert import (HilbertSpace, LinOp, StateOperator, partial_trace,
                      random_density, random_hermitian, random_unitary)

ORTH_TOL = 1e-10


def _orthonormal_complement(cols: np.ndarray, dim: int) -> np.ndarray:
    """Orthonormal basis of the complement of the column span of ``cols``."""
    if cols.shape[1] == 0:
        return np.eye(dim, dtype=complex)
    proj = np.eye(dim) - cols @ cols.conj().T
    w, v = np.linalg.eigh(0.5 * (proj + proj.conj().T))
    return v[:, w > 0.5]


def _check_orthonormal(cols: np.ndarray, what: str, tol: float = ORTH_TOL):
    g = cols.conj().T @ cols
    if np.max(np.abs(g - np.eye(cols.shape[1])), initial=0.0) > tol:
        raise ValidationError(f"{what} are not orthonormal")


# ----------------------------------------------------------- BCL model ---

@dataclass(frozen=True)
class BCLSpec:
    """Data of a premeasurement coupling.

    Parameters
    ----------
    eigenvalues : sequence of float
        Distinct outcome values ``o_k``.
    eigvecs : sequence of ndarray
        ``eigvecs[k]`` has the orthonormal eigenvectors ``phi_kl`` of value
        ``o_k`` as columns; together they form a basis of the system space.
    targets : sequence of ndarray
        ``targets[k]`` has the target vectors ``phi~_kl`` as columns,
        orthonormal within each ``k``.
    ready : ndarray
        Apparatus ready state ``psi``.
    pointers : ndarray
        Columns are the pointer states ``psi_k``, orthonormal and
        orthogonal to ``ready``.
    """

    eigenvalues: tuple
    eigvecs: tuple
    targets: tuple
    ready: np.ndarray
    pointers: np.ndarray

    def __post_init__(self):
        ev = tuple(float(o) for o in self.eigenvalues)
        vecs = tuple(np.atleast_2d(np.asarray(v, dtype=complex)) for v in self.eigvecs)
        tars = tuple(np.atleast_2d(np.asarray(v, dtype=complex)) for v in self.targets)
        if not (len(ev) == len(vecs) == len(tars)) or not ev:
            raise ValidationError("need eigenvectors and targets for every eigenvalue")
        if len(set(ev)) != len(ev):
            raise ValidationError("eigenvalues must be distinct")
        ds = vecs[0].shape[0]
        for v, t in zip(vecs, tars):
            if v.shape[0] != ds or t.shape != v.shape:
                raise ValidationError("eigenvector and target blocks must match in shape")
        allv = np.concatenate(vecs, axis=1)
        if allv.shape[1] != ds:
            raise ValidationError("eigenvectors must form a basis of the system space")
        _check_orthonormal(allv, "system eigenvectors")
        for t in tars:
            _check_orthonormal(t, "target vectors within one outcome")
        ready = np.asarray(self.ready, dtype=complex).reshape(-1)
        ptr = np.atleast_2d(np.asarray(self.pointers, dtype=complex))
        if ptr.shape != (ready.size, len(ev)):
            raise ValidationError("one pointer state per outcome is required")
        _check_orthonormal(np.column_stack([ready, ptr]), "ready and pointer states")
        object.__setattr__(self, "eigenvalues", ev)
        object.__setattr__(self, "eigvecs", vecs)
        object.__setattr__(self, "targets", tars)
        object.__setattr__(self, "ready", ready)
        object.__setattr__(self, "pointers", ptr)

    @property
    def system_dim(self) -> int:
        return self.eigvecs[0].shape[0]

    @property
    def apparatus_dim(self) -> int:
        return self.ready.size

    @property
    def n_outcomes(self) -> int:
        return len(self.eigenvalues)

    def space(self) -> HilbertSpace:
        return HilbertSpace((self.system_dim, self.apparatus_dim), ("S", "A"))

    def projector(self, k: int) -> np.ndarray:
        """Eigenprojection of outcome ``k`` on the system."""
        v = self.eigvecs[k]
        return v @ v.conj().T

    def is_von_neumann(self, tol: float = 1e-12) -> bool:
        return all(np.max(np.abs(v - t)) <= tol for v, t in zip(self.eigvecs, self.targets))

    def to_json(self) -> str:
        def enc(a):
            return [[float(z.real), float(z.imag)] for z in np.asarray(a).reshape(-1)]
        doc = {
            "system_dim": self.system_dim,
            "apparatus_dim": self.apparatus_dim,
            "groups": [{"eigenvalue": o, "vectors": [enc(v[:, j]) for j in range(v.shape[1])],
                        "targets": [enc(t[:, j]) for j in range(t.shape[1])]}
                       for o, v, t in zip(self.eigenvalues, self.eigvecs, self.targets)],
            "ready": enc(self.ready),
            "pointers": [enc(self.pointers[:, k]) for k in range(self.n_outcomes)],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "BCLSpec":
        doc = json.loads(text)

        def dec(x):
            return np.array([complex(a, b) for a, b in x])
        try:
            groups = doc["groups"]
            ev = [g["eigenvalue"] for g in groups]
            vecs = [np.column_stack([dec(v) for v in g["vectors"]]) for g in groups]
            tars = [np.column_stack([dec(v) for v in g["targets"]]) for g in groups]
            ready = dec(doc["ready"])
            ptr = np.column_stack([dec(v) for v in doc["pointers"]])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed spec document: {exc}") from exc
        spec = cls(tuple(ev), tuple(vecs), tuple(tars), ready, ptr)
        if "system_dim" in doc and doc["system_dim"] != spec.system_dim:
            raise ValidationError("system_dim does not match the vectors")
        if "apparatus_dim" in doc and doc["apparatus_dim"] != spec.apparatus_dim:
            raise ValidationError("apparatus_dim does not match the vectors")
        return spec


def random_bcl_spec(rng: np.random.Generator, system_dim: int, n_outcomes: int,
                    apparatus_dim: int | None = None, von_neumann: bool = False) -> BCLSpec:
    """Random spec with Haar-random eigenvectors, targets and pointer states.

    Outcome group sizes are a random composition of ``system_dim`` into
    ``n_outcomes`` positive parts.
    """
    if not 1 <= n_outcomes <= system_dim:
        raise ValidationError("need 1 <= n_outcomes <= system_dim")
    cuts = np.sort(rng.choice(np.arange(1, system_dim), size=n_outcomes - 1, replace=False)) \
        if n_outcomes > 1 else np.array([], dtype=int)
    sizes = np.diff(np.concatenate([[0], cuts, [system_dim]])).astype(int)
    u = random_unitary(system_dim, rng)
    vecs, tars, start = [], [], 0
    for n in sizes:
        vecs.append(u[:, start:start + n])
        tars.append(vecs[-1] if von_neumann else random_unitary(system_dim, rng)[:, :n])
        start += n
    da = apparatus_dim or (n_outcomes + 1)
    ua = random_unitary(da, rng)
    ev = tuple(float(k + 1) for k in range(n_outcomes))
    return BCLSpec(ev, tuple(vecs), tuple(tars), ua[:, 0], ua[:, 1:n_outcomes + 1])


def build_unitary(spec: BCLSpec, completion: Optional[np.ndarray] = None,
                  rng: Optional[np.random.Generator] = None) -> LinOp:
    """Unitary extension of ``phi_kl x psi -> phi~_kl x psi_k``.

    The orthonormal complement of the domain vectors is mapped onto the
    orthonormal complement of the image vectors. ``completion`` (a unitary
    on the complement) or ``rng`` (draws a Haar-random one) selects a
    different valid extension.
    """
    dom = np.column_stack([np.kron(v[:, j], spec.ready)
                           for v in spec.eigvecs for j in range(v.shape[1])])
    img = np.column_stack([np.kron(t[:, j], spec.pointers[:, k])
                           for k, t in enumerate(spec.targets) for j in range(t.shape[1])])
    _check_orthonormal(img, "image vectors")
    dim = dom.shape[0]
    cd = _orthonormal_complement(dom, dim)
    ci = _orthonormal_complement(img, dim)
    nc = cd.shape[1]
    if completion is None:
        completion = random_unitary(nc, rng) if (rng is not None and nc > 0) else np.eye(nc)
    u = img @ dom.conj().T + ci @ completion @ cd.conj().T
    return LinOp(spec.space(), u)


def expansion_coefficients(spec: BCLSpec, phi: np.ndarray) -> list:
    """``c_kl = <phi_kl|phi>`` grouped by outcome."""
    return [v.conj().T @ phi for v in spec.eigvecs]


def conditional_states(coeffs: Sequence[np.ndarray], targets: Sequence[np.ndarray]):
    """Outcome probabilities and normalized conditional system states.

    ``p_k = ||sum_l c_kl phi~_kl||^2`` and ``phi1_k`` is that vector
    normalized (zero when ``p_k = 0``).
    """
    p, states = [], []
    for c, t in zip(coeffs, targets):
        v = t @ np.asarray(c, dtype=complex)
        pk = float(np.real(np.vdot(v, v)))
        p.append(pk)
        states.append(v / math.sqrt(pk) if pk > 0 else np.zeros_like(v))
    return np.array(p), states


@dataclass(frozen=True)
class PremeasurementResult:
    """End state of a premeasurement with a pure input.

    Attributes
    ----------
    phi_end : ndarray
        ``U (phi x psi)`` on the system-apparatus space.
    p : ndarray
        Pointer probabilities read off the apparatus state.
    phi1 : list of ndarray
        Conditional system states ``(1 x <psi_k|) phi_end / sqrt(p_k)``.
    apparatus_state : StateOperator
    defect : float
        ``sum_{k != l} |sqrt(p_k p_l) <phi1_k|phi1_l>|``, the distance of
        the apparatus state from the diagonal pointer mixture.
    born : ndarray
        ``tr[T E_k]`` for the system eigenprojections.
    reproducibility_error : float
        ``max_k |born_k - p_k|``.
    composite_purity : float
        ``tr[rho^2]`` of the composite end state, always one here.
    objectified : bool
        True only if the composite state is a mixture of pointer-state
        components, which for a pure end state requires a single outcome.
    """

    phi_end: np.ndarray
    p: np.ndarray
    phi1: list
    apparatus_state: StateOperator
    defect: float
    born: np.ndarray
    reproducibility_error: float
    composite_purity: float
    objectified: bool


def premeasure(spec: BCLSpec, phi, unitary: Optional[LinOp] = None) -> PremeasurementResult:
    """Apply the coupling to ``phi x psi`` and analyze the end state."""
    phi = np.asarray(phi, dtype=complex).reshape(-1)
    if phi.size != spec.system_dim:
        raise ValidationError("input vector has the wrong dimension")
    if abs(np.linalg.norm(phi) - 1.0) > 1e-10:
        raise ValidationError("input vector must be normalized")
    u = unitary if unitary is not None else build_unitary(spec)
    end = u.matrix @ np.kron(phi, spec.ready)
    rho = np.outer(end, end.conj())
    app = partial_trace(rho, ["A"], spec.space())
    t = end.reshape(spec.system_dim, spec.apparatus_dim)
    p, phi1 = [], []
    for k in range(spec.n_outcomes):
        v = t @ spec.pointers[:, k].conj()
        pk = float(np.real(np.vdot(v, v)))
        p.append(pk)
        phi1.append(v / math.sqrt(pk) if pk > 1e-300 else np.zeros_like(v))
    p = np.array(p)
    defect = 0.0
    for k in range(len(p)):
        for l in range(len(p)):
            if k != l:
                defect += abs(math.sqrt(p[k] * p[l]) * np.vdot(phi1[k], phi1[l]))
    tsys = np.outer(phi, phi.conj())
    born = np.array([float(np.real(np.trace(tsys @ spec.projector(k)))) for k in range(len(p))])
    purity = float(np.real(np.vdot(end, end)) ** 2)
    nonzero = int(np.sum(p > 1e-12))
    return PremeasurementResult(end, p, phi1, app, float(defect), born,
                                float(np.max(np.abs(born - p))), purity, nonzero <= 1)


@dataclass(frozen=True)
class StateTransformer:
    """Operators ``K_k = sum_l |phi~_kl><phi_kl|``."""

    ops: tuple
    outcomes: tuple

    def completeness_error(self) -> float:
        d = self.ops[0].shape[0]
        s = sum(k.conj().T @ k for k in self.ops)
        return float(np.max(np.abs(s - np.eye(d))))

    def apply(self, outcome_set, t) -> np.ndarray:
        """Unnormalized ``sum_{o_k in X} K_k T K_k^dag``."""
        t = np.asarray(t.matrix if isinstance(t, StateOperator) else t)
        out = np.zeros_like(t, dtype=complex)
        for k in self._indices(outcome_set):
            out = out + self.ops[k] @ t @ self.ops[k].conj().T
        return out

    def _indices(self, outcome_set) -> list:
        idx = []
        for o in outcome_set:
            if float(o) not in self.outcomes:
                raise ValidationError(f"unknown outcome {o}")
            idx.append(self.outcomes.index(float(o)))
        return sorted(set(idx))


def state_transformer(spec: BCLSpec) -> StateTransformer:
    ops = tuple(t @ v.conj().T for v, t in zip(spec.eigvecs, spec.targets))
    return StateTransformer(ops, spec.eigenvalues)


@dataclass(frozen=True)
class RepeatabilityResult:
    repeatable: bool
    max_violation: float
    sequential_error: float


def repeatability_check(tr: StateTransformer, rng: Optional[np.random.Generator] = None,
                        trials: int = 100, tol: float = 1e-12) -> RepeatabilityResult:
    """Check ``K_l K_k = delta_kl K_k`` entrywise.

    When ``rng`` is given, the sequential-registration identity
    ``tr[I(Y) I(X) T] = tr[I(X & Y) T]`` is also evaluated on random states
    and outcome sets; ``sequential_error`` is its largest deviation.
    """
    n = len(tr.ops)
    viol = 0.0
    for k in range(n):
        for l in range(n):
            target = tr.ops[k] if k == l else 0.0
            viol = max(viol, float(np.max(np.abs(tr.ops[l] @ tr.ops[k] - target))))
    seq = 0.0
    if rng is not None:
        d = tr.ops[0].shape[0]
        outs = list(tr.outcomes)
        for _ in range(trials):
            t = random_density(d, rng)
            x = [o for o in outs if rng.random() < 0.5]
            y = [o for o in outs if rng.random() < 0.5]
            lhs = np.trace(tr.apply(y, tr.apply(x, t)))
            rhs = np.trace(tr.apply([o for o in x if o in y], t))
            seq = max(seq, float(abs(lhs - rhs)))
    return RepeatabilityResult(viol < tol, viol, seq)


# -------------------------------------------------------- trigger model ---

def _signed_perms(slots: Sequence[int]):
    slots = list(slots)
    for perm in itertools.permutations(range(len(slots))):
        inv = sum(1 for i in range(len(perm)) for j in range(i + 1, len(perm)) if perm[i] > perm[j])
        yield [slots[i] for i in perm], (-1) ** inv


def symmetrize_slots(m: np.ndarray, n_slots: int, d: int, slots: Sequence[int], eps: int) -> np.ndarray:
    """Apply the (anti)symmetrizer over ``slots`` to the row index of ``m``.

    ``m`` has ``d ** n_slots`` rows (a vector is treated as one column).
    """
    vec = m.ndim == 1
    mm = m.reshape(-1, 1) if vec else m
    cols = mm.shape[1]
    t = mm.reshape((d,) * n_slots + (cols,))
    acc = np.zeros_like(t, dtype=complex)
    slots = list(slots)
    for image, sign in _signed_perms(slots):
        axes = list(range(n_slots + 1))
        for s, im in zip(slots, image):
            axes[s] = im
        acc += (sign if eps < 0 else 1) * np.transpose(t, axes)
    out = (acc / math.factorial(len(slots))).reshape(mm.shape)
    return out.reshape(-1) if vec else out


@dataclass(frozen=True)
class TriggerModel:
    """Detector array with identical-particle pollution.

    Parameters
    ----------
    d : int
        Single-particle dimension.
    blocks : tuple of tuple of int
        Disjoint single-particle basis labels owned by each detector.
    eps : {+1, -1}
        Exchange sign of the particle type.
    pollution : tuple of ndarray
        ``pollution[k]`` is the state of the ``M_k`` particles of detector
        ``k`` on ``H^{M_k}`` (a 1x1 array ``[[1]]`` when ``M_k = 0``),
        supported in block ``k`` and already (anti)symmetric.
    counts : tuple of int
        ``M_k``.
    targets : tuple of ndarray
        Columns are target vectors of detector ``k``, orthonormal and
        supported in block ``k``.
    outcomes : tuple of float
        Nonzero, distinct trigger values ``o_k``.
    amplitudes : ndarray
        Ionisation amplitudes ``a_n``, ``a_0 = 0`` and unit norm.
    """

    d: int
    blocks: tuple
    eps: int
    pollution: tuple
    counts: tuple
    targets: tuple
    outcomes: tuple
    amplitudes: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0]))

    def __post_init__(self):
        n = len(self.blocks)
        if not (len(self.pollution) == len(self.counts) == len(self.targets) == len(self.outcomes) == n):
            raise ValidationError("one block, pollution state, count, target set and outcome per detector")
        if self.eps not in (1, -1):
            raise ValidationError("eps must be +1 or -1")
        labels = [i for b in self.blocks for i in b]
        if len(set(labels)) != len(labels) or any(not 0 <= i < self.d for i in labels):
            raise ValidationError("detector blocks must be disjoint label sets within the space")
        if any(o == 0 for o in self.outcomes) or len(set(self.outcomes)) != n:
            raise ValidationError("trigger values must be distinct and nonzero")
        total = 1 + sum(self.counts)
        if self.d ** total > 4096:
            raise ValidationError("particle space too large for this desk-scale model")
        for k, (b, tk, mk, tg) in enumerate(zip(self.blocks, self.pollution, self.counts, self.targets)):
            outside = np.setdiff1d(np.arange(self.d), b)
            tg = np.atleast_2d(tg)
            if tg.shape[0] != self.d:
                raise ValidationError("targets must be single-particle vectors")
            _check_orthonormal(tg, f"targets of detector {k}")
            if np.max(np.abs(tg[outside, :]), initial=0.0) > ORTH_TOL:
                raise ValidationError(f"targets of detector {k} leave its block")
            tk = np.asarray(tk, dtype=complex)
            if tk.shape != (self.d ** mk, self.d ** mk):
                raise ValidationError(f"pollution state {k} has the wrong shape")
            if abs(np.trace(tk) - 1) > 1e-10 or np.linalg.eigvalsh(0.5 * (tk + tk.conj().T))[0] < -1e-10:
                raise ValidationError(f"pollution state {k} is not a state")
            if mk > 0:
                sym = symmetrize_slots(symmetrize_slots(tk, mk, self.d, range(mk), self.eps).conj().T,
                                       mk, self.d, range(mk), self.eps).conj().T
                if np.max(np.abs(sym - tk)) > 1e-10:
                    raise ValidationError(f"pollution state {k} is not (anti)symmetric")
                mask = np.zeros(self.d, dtype=bool)
                mask[list(b)] = True
                inside = mask
                for _ in range(mk - 1):
                    inside = np.kron(inside, mask)
                if np.max(np.abs(tk[~inside.astype(bool), :]), initial=0.0) > ORTH_TOL:
                    raise ValidationError(f"pollution state {k} leaves its block")
        a = np.asarray(self.amplitudes, dtype=complex)
        if abs(np.linalg.norm(a) - 1) > 1e-10 or abs(a[0]) > 1e-12:
            raise ValidationError("ionisation amplitudes need unit norm and a_0 = 0")

    @property
    def n_detectors(self) -> int:
        return len(self.blocks)

    @property
    def n_particles(self) -> int:
        return 1 + sum(self.counts)

    def detector_slots(self, k: int) -> list:
        start = 1 + sum(self.counts[:k])
        return list(range(start, start + self.counts[k]))


def random_trigger_model(rng: np.random.Generator, d: int, n_detectors: int, eps: int,
                         count: int = 1, levels: int = 3) -> TriggerModel:
    """Random model with ``M_k = count`` (0 or 1) and blocks of at least two labels."""
    if count not in (0, 1):
        raise ValidationError("random models support M_k in {0, 1}")
    if d < 2 * n_detectors:
        raise ValidationError("need at least two labels per detector")
    perm = rng.permutation(d)
    extra = d - 2 * n_detectors
    sizes = [2] * n_detectors
    for _ in range(extra):
        sizes[int(rng.integers(n_detectors))] += 1
    blocks, start = [], 0
    for s in sizes:
        blocks.append(tuple(sorted(int(i) for i in perm[start:start + s])))
        start += s
    pollution, targets = [], []
    for b in blocks:
        nb = len(b)
        if count == 1:
            tk = np.zeros((d, d), dtype=complex)
            tk[np.ix_(b, b)] = random_density(nb, rng)
        else:
            tk = np.ones((1, 1), dtype=complex)
        pollution.append(tk)
        nt = int(rng.integers(1, nb + 1))
        u = random_unitary(nb, rng)[:, :nt]
        tg = np.zeros((d, nt), dtype=complex)
        tg[list(b), :] = u
        targets.append(tg)
    a = np.zeros(levels, dtype=complex)
    a[1:] = rng.standard_normal(levels - 1) + 1j * rng.standard_normal(levels - 1)
    a /= np.linalg.norm(a)
    return TriggerModel(d, tuple(blocks), eps, tuple(pollution), tuple([count] * n_detectors),
                        tuple(targets), tuple(float(k + 1) for k in range(n_detectors)), a)


def random_coefficients(model: TriggerModel, rng: np.random.Generator) -> list:
    """Random normalized expansion coefficients ``c_kl`` of the input state."""
    cs = [rng.standard_normal(t.shape[1]) + 1j * rng.standard_normal(t.shape[1]) for t in model.targets]
    nrm = math.sqrt(sum(float(np.vdot(c, c).real) for c in cs))
    return [c / nrm for c in cs]


def _pollution_factors(model: TriggerModel, tol: float = 1e-14):
    """Eigen-decomposition of every pollution state, keeping nonzero weights."""
    out = []
    for tk in model.pollution:
        w, v = np.linalg.eigh(0.5 * (tk + tk.conj().T))
        keep = w > tol
        out.append((w[keep], v[:, keep]))
    return out


def w_operator(model: TriggerModel, phi1: Sequence[np.ndarray], k: int, l: int) -> np.ndarray:
    """Dense ``W_kl`` on the particles of system and detectors ``k, l``.

    For ``k != l`` the slots are ordered ``(S'_k..., S, S'_l...)`` and
    ``W_kl = P_{k,S} (T_k x |phi1_k><phi1_l| x T_l) P_{S,l}`` where each
    projector (anti)symmetrizes the system slot with one detector's slots.
    For ``k = l`` the slots are ``(S, S'_k...)`` and
    ``W_kk = P (|phi1_k><phi1_k| x T_k) P``.
    """
    d, eps = model.d, model.eps
    if k == l:
        mk = model.counts[k]
        n = 1 + mk
        x = np.kron(np.outer(phi1[k], phi1[k].conj()), model.pollution[k])
        slots = list(range(n))
        left = symmetrize_slots(x, n, d, slots, eps)
        return symmetrize_slots(left.conj().T, n, d, slots, eps).conj().T
    mk, ml = model.counts[k], model.counts[l]
    n = mk + 1 + ml
    x = np.kron(np.kron(model.pollution[k], np.outer(phi1[k], phi1[l].conj())), model.pollution[l])
    left = symmetrize_slots(x, n, d, list(range(mk + 1)), eps)
    right_slots = list(range(mk, n))
    return symmetrize_slots(left.conj().T, n, d, right_slots, eps).conj().T


@dataclass(frozen=True)
class TriggerStates:
    """Trigger-stage operators in factored form.

    Particle block ``(k, l)`` of the unnormalized operators is
    ``G_k diag(w) G_l^dag`` with the columns of ``G_k`` the vectors
    ``P_{S,k}(phi1_k x t_a)`` for product eigenvectors ``t_a`` of the
    pollution states. Apparatus index 0 is the ready state and carries no
    weight.

    Operators are selected by ``kind``: ``"coherent"`` keeps all
    apparatus coherences, ``"diagonal"`` is the pointer mixture and
    ``"full"`` symmetrizes over every particle slot.

    Attributes
    ----------
    p : ndarray
        Outcome probabilities.
    nu : ndarray
        ``1 / sqrt(tr W_kk)``.
    full_trace : float
        Trace of the fully symmetrized construction with unit
        normalization factor.
    """

    model: TriggerModel
    p: np.ndarray
    phi1: list
    nu: np.ndarray
    G: list
    weights: np.ndarray
    G_full: list
    full_trace: float
    w_traces: np.ndarray

    @property
    def n_app(self) -> int:
        return self.model.n_detectors + 1

    @property
    def particle_dim(self) -> int:
        return self.model.d ** self.model.n_particles

    def coefficient(self, kind: str, k: int, l: int) -> float:
        if kind == "coherent":
            return math.sqrt(self.p[k] * self.p[l]) * self.nu[k] * self.nu[l]
        if kind == "diagonal":
            return self.p[k] * self.nu[k] ** 2 if k == l else 0.0
        if kind == "full":
            return math.sqrt(self.p[k] * self.p[l])
        raise ValidationError(f"unknown trigger state {kind!r}")

    def particle_block(self, kind: str, k: int, l: int) -> np.ndarray:
        """Dense particle operator multiplying ``|psi_k><psi_l|`` (1-based
        detector indices in the apparatus basis are ``k+1, l+1``)."""
        c = self.coefficient(kind, k, l)
        g = self.G_full if kind == "full" else self.G
        return c * (g[k] * self.weights) @ g[l].conj().T

    def dense(self, kind: str) -> np.ndarray:
        """Full operator on particles x apparatus, apparatus index last."""
        n, D = self.n_app, self.particle_dim
        out = np.zeros((D, n, D, n), dtype=complex)
        for k in range(n - 1):
            for l in range(n - 1):
                out[:, k + 1, :, l + 1] = self.particle_block(kind, k, l)
        return out.reshape(D * n, D * n)

    def trace(self, kind: str) -> float:
        return float(np.real(sum(np.trace(self.particle_block(kind, k, k)) for k in range(self.n_app - 1))))

    def apparatus_marginal(self, kind: str) -> np.ndarray:
        """Partial trace over all particles, in the ``(psi_0..psi_N)`` basis."""
        n = self.n_app
        out = np.zeros((n, n), dtype=complex)
        for k in range(n - 1):
            for l in range(n - 1):
                out[k + 1, l + 1] = np.trace(self.particle_block(kind, k, l))
        return out

    def gemenge(self, kind: str = "diagonal") -> list:
        """Components ``(p_k, nu_k^2 W_kk x others x |psi_k><psi_k|)`` as
        ``(weight, k, particle operator)``; the apparatus part of component
        ``k`` is ``|psi_k><psi_k|``."""
        if kind != "diagonal":
            raise ValidationError("only the diagonal constructions carry a gemenge")
        comps = []
        for k in range(self.n_app - 1):
            if self.p[k] > 0:
                blk = self.nu[k] ** 2 * (self.G[k] * self.weights) @ self.G[k].conj().T
                comps.append((float(self.p[k]), k, blk))
        return comps

    def support_basis(self, tol: float = 1e-12) -> np.ndarray:
        """Orthonormal basis of the joint row and column support of all
        particle blocks."""
        cols = np.concatenate([g for g in self.G], axis=1)
        u, s, _ = np.linalg.svd(cols, full_matrices=False)
        return u[:, s > tol * max(1.0, s[0] if s.size else 1.0)]

    def compressed_blocks(self, kind: str, basis: np.ndarray) -> dict:
        g = [basis.conj().T @ gk for gk in self.G]
        n = self.n_app - 1
        return {(k, l): self.coefficient(kind, k, l) * (g[k] * self.weights) @ g[l].conj().T
                for k in range(n) for l in range(n)}


def trigger_states(model: TriggerModel, coeffs: Sequence[np.ndarray], tol: float = 1e-12) -> TriggerStates:
    """Build the trigger-stage operators for an input with expansion
    coefficients ``coeffs[k][l]``.

    Raises
    ------
    ValidationError
        ``tr W_kk <= tol`` for an outcome with nonzero probability (the
        symmetrized configuration vanishes).
    """
    p, phi1 = conditional_states(coeffs, model.targets)
    if abs(p.sum() - 1.0) > 1e-10:
        raise ValidationError("input coefficients must be normalized")
    d, n_part = model.d, model.n_particles
    factors = _pollution_factors(model)
    weights = np.ones(1)
    vec = np.ones((1, 1), dtype=complex)
    for w, v in factors:
        weights = np.kron(weights, w)
        vec = np.einsum("ia,jb->ijab", vec, v).reshape(vec.shape[0] * v.shape[0], -1)
    G, G_full, wtr = [], [], []
    all_slots = list(range(n_part))
    for k in range(model.n_detectors):
        base = np.kron(phi1[k][:, None], vec)
        slots = [0] + model.detector_slots(k)
        G.append(symmetrize_slots(base, n_part, d, slots, model.eps))
        G_full.append(symmetrize_slots(base, n_part, d, all_slots, model.eps))
        wtr.append(float(np.real(np.sum(weights * np.sum(np.abs(G[-1]) ** 2, axis=0)))))
    wtr = np.array(wtr)
    nu = np.zeros(model.n_detectors)
    for k in range(model.n_detectors):
        if p[k] > 0:
            if wtr[k] <= tol:
                raise ValidationError(
                    f"detector {k}: symmetrized configuration vanishes (tr W_kk = {wtr[k]:.2e}); "
                    "the conditional state lies in the span excluded by the pollution state")
            nu[k] = 1.0 / math.sqrt(wtr[k])
    full = float(sum(p[k] * np.real(np.sum(weights * np.sum(np.abs(G_full[k]) ** 2, axis=0)))
                      for k in range(model.n_detectors)))
    return TriggerStates(model, p, phi1, nu, G, weights, G_full, full, wtr)


def max_cross_trace(model: TriggerModel, coeffs) -> float:
    """Largest ``|tr W_kl|`` over ``k != l`` from the dense operators."""
    _, phi1 = conditional_states(coeffs, model.targets)
    best = 0.0
    n = model.n_detectors
    for k in range(n):
        for l in range(n):
            if k != l:
                best = max(best, abs(np.trace(w_operator(model, phi1, k, l))))
    return float(best)


def _gue(n: int, rng: np.random.Generator) -> np.ndarray:
    return random_hermitian(n, rng)


def block_trace(b_blocks: dict, t_blocks: dict, n: int) -> complex:
    """``tr[B T]`` for operators given as apparatus blocks over detector
    indices; B blocks are indexed ``(l, k)`` with the same convention."""
    total = 0j
    for k in range(n):
        for l in range(n):
            blk = b_blocks.get((l, k))
            if blk is not None:
                total += np.sum(blk * t_blocks[(k, l)].T)
    return total


def commuting_deviations(model: TriggerModel, coeffs, trials: int, seed: int,
                 commuting: bool = True) -> np.ndarray:
    """Deviations ``|tr[B T_coherent] - tr[B T_diagonal]|`` for random sharp ``B``.

    Commuting ``B`` are block diagonal in the trigger basis with independent
    GUE blocks; the control draws one GUE matrix over all blocks. ``B`` is
    sampled directly on the joint support of the trigger operators, which
    by unitary invariance of the GUE is the compression of a full-space
    sample.
    """
    st = trigger_states(model, coeffs)
    basis = st.support_basis()
    r = basis.shape[1]
    n = model.n_detectors
    t2 = st.compressed_blocks("coherent", basis)
    t3 = st.compressed_blocks("diagonal", basis)
    rng = np.random.default_rng(seed)
    out = np.empty(trials)
    for i in range(trials):
        if commuting:
            b = {(k, k): _gue(r, rng) for k in range(n)}
        else:
            full = _gue(n * r, rng).reshape(n, r, n, r)
            b = {(l, k): full[l, :, k, :] for k in range(n) for l in range(n)}
        out[i] = abs(block_trace(b, t2, n) - block_trace(b, t3, n))
    return out


def apparatus_isometry(model: TriggerModel) -> np.ndarray:
    """Columns ``psi_0, psi_1, ..., psi_N`` in the ionisation product space
    ``(C^levels)^N`` with basis states ``chi_kn``."""
    a = np.asarray(model.amplitudes, dtype=complex)
    levels = a.size
    n = model.n_detectors
    e0 = np.zeros(levels, dtype=complex)
    e0[0] = 1.0
    cols = []
    for k in range(-1, n):
        v = np.ones(1, dtype=complex)
        for j in range(n):
            v = np.kron(v, a if j == k else e0)
        cols.append(v)
    return np.column_stack(cols)


def trigger_observable(model: TriggerModel) -> np.ndarray:
    """``A = sum_k o_k |psi_k><psi_k|`` on the ionisation product space."""
    v = apparatus_isometry(model)
    return sum(o * np.outer(v[:, k + 1], v[:, k + 1].conj()) for k, o in enumerate(model.outcomes))
