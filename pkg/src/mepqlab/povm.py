"""Discrete POV measures.

Effects, the Born rule, eigenstate tests, sufficient conditions for joint
measurability, compound observables of commuting sharp measures and the
uncertainty relation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ValidationError
from .hilbert import HilbertSpace, LinOp, _mat, commutator, variance

EFFECT_TOL = 1e-10


@dataclass(frozen=True)
class Effect:
    """Operator ``E`` with ``0 <= E <= 1``."""

    op: LinOp

    def __post_init__(self):
        m = self.op.matrix
        if not self.op.is_hermitian(1e-9):
            raise ValidationError("effect must be hermitian")
        w = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
        if w[0] < -EFFECT_TOL or w[-1] > 1 + EFFECT_TOL:
            raise ValidationError(f"effect spectrum [{w[0]:.3e}, {w[-1]:.3e}] outside [0, 1]")

    @classmethod
    def of(cls, m, space_: HilbertSpace | None = None) -> "Effect":
        m = np.asarray(_mat(m), dtype=complex)
        return cls(LinOp(space_ or HilbertSpace((m.shape[0],)), m))

    @property
    def matrix(self) -> np.ndarray:
        return self.op.matrix

    def is_projection(self, tol: float = 1e-9) -> bool:
        m = self.matrix
        return bool(np.max(np.abs(m @ m - m), initial=0.0) <= tol)


def _label(x) -> tuple:
    if isinstance(x, tuple):
        return tuple(float(v) if not isinstance(v, tuple) else v for v in x)
    if isinstance(x, (list, np.ndarray)):
        return tuple(float(v) for v in x)
    return (float(x),)


@dataclass(frozen=True)
class DiscretePOVM:
    """Finite family of effects indexed by real-tuple outcome labels.

    Parameters
    ----------
    outcomes : sequence
        Outcome labels. Scalars are promoted to one-tuples.
    effects : sequence of Effect
        One effect per outcome; together they sum to the identity.
    """

    outcomes: tuple
    effects: tuple

    def __post_init__(self):
        outs = tuple(_label(o) for o in self.outcomes)
        effs = tuple(e if isinstance(e, Effect) else Effect.of(e) for e in self.effects)
        if len(outs) != len(effs) or not effs:
            raise ValidationError("need one effect per outcome")
        if len(set(outs)) != len(outs):
            raise ValidationError("outcome labels must be distinct")
        n = effs[0].matrix.shape[0]
        total = sum(e.matrix for e in effs)
        if np.max(np.abs(total - np.eye(n))) > 1e-9:
            raise ValidationError("effects must sum to the identity")
        object.__setattr__(self, "outcomes", outs)
        object.__setattr__(self, "effects", effs)

    @property
    def dim(self) -> int:
        return self.effects[0].matrix.shape[0]

    def effect(self, outcome_set: Iterable) -> np.ndarray:
        """``E(X)`` for a set of outcome labels."""
        idx = self._indices(outcome_set)
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for i in idx:
            out = out + self.effects[i].matrix
        return out

    def _indices(self, outcome_set) -> list:
        labels = [_label(o) for o in outcome_set]
        lookup = {o: i for i, o in enumerate(self.outcomes)}
        idx = []
        for lab in labels:
            if lab not in lookup:
                raise ValidationError(f"unknown outcome {lab}")
            idx.append(lookup[lab])
        return sorted(set(idx))

    def is_sharp(self, tol: float = 1e-9) -> bool:
        return all(e.is_projection(tol) for e in self.effects)

    def to_json(self) -> str:
        doc = {
            "dim": self.dim,
            "outcomes": [list(o) for o in self.outcomes],
            "effects": [[[float(z.real), float(z.imag)] for z in e.matrix.reshape(-1)]
                        for e in self.effects],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "DiscretePOVM":
        doc = json.loads(text)
        d = int(doc["dim"])
        effs = []
        for flat in doc["effects"]:
            arr = np.array([complex(re, im) for re, im in flat]).reshape(d, d)
            effs.append(Effect.of(arr))
        return cls(tuple(tuple(o) if isinstance(o, list) else o for o in doc["outcomes"]), tuple(effs))


def sharp_from_observable(a, decimals: int = 9) -> DiscretePOVM:
    """Spectral measure of a hermitian matrix, grouping equal eigenvalues."""
    m = np.asarray(_mat(a), dtype=complex)
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    keys = np.round(w, decimals)
    outs, effs = [], []
    for val in np.unique(keys):
        cols = v[:, keys == val]
        outs.append(float(val))
        effs.append(Effect.of(cols @ cols.conj().T))
    return DiscretePOVM(tuple(outs), tuple(effs))


def probability(povm: DiscretePOVM, t, outcome_set: Iterable) -> float:
    """Born-rule probability ``tr[T E(X)]``."""
    e = povm.effect(outcome_set)
    return float(np.real(np.einsum("ij,ji->", _mat(t), e)))


def distribution(povm: DiscretePOVM, t) -> np.ndarray:
    """Probabilities of every single outcome, in outcome order."""
    mt = _mat(t)
    return np.array([float(np.real(np.einsum("ij,ji->", mt, e.matrix))) for e in povm.effects])


def is_eigenstate(e, t, tol: float = 1e-10):
    """Decide whether ``t`` is an eigenstate of the effect ``e``.

    Returns
    -------
    (bool, float or None)
        ``(True, 1.0)`` when ``E T = T``, ``(True, 0.0)`` when ``E T = 0``,
        otherwise ``(False, None)``.
    """
    me = _mat(e.op if isinstance(e, Effect) else e)
    mt = _mat(t)
    et = me @ mt
    if np.max(np.abs(et - mt)) <= tol:
        return True, 1.0
    if np.max(np.abs(et)) <= tol:
        return True, 0.0
    return False, None


@dataclass(frozen=True)
class JointVerdict:
    """Outcome of :func:`jointly_measurable`.

    ``status`` is ``"jointly-measurable"`` with ``witness = (E1', E2', E12')``
    or ``"unknown"`` with ``witness = None``.
    """

    status: str
    witness: Optional[tuple] = None
    reason: str = ""


def jointly_measurable(e1, e2, tol: float = 1e-10) -> JointVerdict:
    """Test two sufficient conditions for joint measurability.

    Commuting projections admit the witness ``E12' = E1 E2``; a pair with
    ``E1 + E2 <= 1`` admits ``E12' = 0``. Any other pair is reported as
    ``"unknown"``, never as incompatible.
    """
    a = _mat(e1.op if isinstance(e1, Effect) else e1)
    b = _mat(e2.op if isinstance(e2, Effect) else e2)
    if a.shape != b.shape:
        raise ValidationError("effects act on different spaces")
    ea = e1 if isinstance(e1, Effect) else Effect.of(a)
    eb = e2 if isinstance(e2, Effect) else Effect.of(b)
    if ea.is_projection() and eb.is_projection() and np.max(np.abs(commutator(a, b))) <= tol:
        ab = a @ b
        return JointVerdict("jointly-measurable", (a - ab, b - ab, ab), "commuting projections")
    s = a + b
    if np.linalg.eigvalsh(0.5 * (s + s.conj().T))[-1] <= 1 + tol:
        return JointVerdict("jointly-measurable", (a, b, np.zeros_like(a)), "sum bounded by identity")
    return JointVerdict("unknown", None, "no sufficient condition applies")


def compound(a: DiscretePOVM, b: DiscretePOVM, tol: float = 1e-10) -> DiscretePOVM:
    """Compound measure of two commuting sharp measures.

    Outcomes are concatenated label pairs and effects are the products
    ``E^A(x) E^B(y)``; vanishing products are dropped.
    """
    if a.dim != b.dim:
        raise ValidationError("measures act on different spaces")
    if not (a.is_sharp() and b.is_sharp()):
        raise ValidationError("compound requires sharp measures")
    for ea in a.effects:
        for eb in b.effects:
            if np.max(np.abs(commutator(ea.matrix, eb.matrix))) > tol:
                raise ValidationError("compound requires commuting effects")
    outs, effs = [], []
    for oa, ea in zip(a.outcomes, a.effects):
        for ob, eb in zip(b.outcomes, b.effects):
            prod = ea.matrix @ eb.matrix
            if np.max(np.abs(prod)) <= tol:
                continue
            outs.append(oa + ob)
            effs.append(Effect.of(0.5 * (prod + prod.conj().T)))
    return DiscretePOVM(tuple(outs), tuple(effs))


def marginal(povm: DiscretePOVM, t, positions: Sequence[int]) -> dict:
    """Distribution of the sub-label at ``positions`` of each outcome."""
    probs = distribution(povm, t)
    out: dict = {}
    for o, p in zip(povm.outcomes, probs):
        key = tuple(o[i] for i in positions)
        out[key] = out.get(key, 0.0) + p
    return out


def uncertainty_check(a, b, t, tol: float = 1e-10):
    """Compare ``dA dB`` with ``|tr[T [A, B]]| / 2``.

    Returns
    -------
    lhs, rhs : float
    holds : bool
        ``lhs >= rhs - tol``.
    """
    ma, mb, mt = _mat(a), _mat(b), _mat(t)
    lhs = variance(ma, mt) * variance(mb, mt)
    rhs = 0.5 * abs(np.einsum("ij,ji->", mt, commutator(ma, mb)))
    return float(lhs), float(rhs), bool(lhs >= rhs - tol)
