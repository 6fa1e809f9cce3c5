"""Maximum-entropy packets.

Classical packets are Gaussian phase-space densities fixed by
``(Q, P, dQ, dP)``. Quantum packets are thermal states of the oscillator
``K = dP/(2 dQ) (q - Q)^2 + dQ/(2 dP) (p - P)^2`` whose occupation weights
are fixed by ``nu = 2 dP dQ / hbar``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ValidationError
from .hilbert import HilbertSpace, StateOperator, make_state

TAIL_TOL = 1e-12


@dataclass(frozen=True)
class MEPacketParams:
    """First and second moments of one degree of freedom.

    Parameters
    ----------
    Q, P : float
        Mean position and momentum.
    dQ, dP : float
        Standard deviations, both positive.
    hbar : float
    v : float, optional
        Classical phase-space volume unit; defaults to ``2 pi hbar``.
    """

    Q: float
    P: float
    dQ: float
    dP: float
    hbar: float = 1.0
    v: float = field(default=float("nan"))

    def __post_init__(self):
        if not (self.dQ > 0 and self.dP > 0):
            raise ValidationError("packet variances must be positive")
        if not self.hbar > 0:
            raise ValidationError("hbar must be positive")
        if math.isnan(self.v):
            object.__setattr__(self, "v", 2 * math.pi * self.hbar)
        if not self.v > 0:
            raise ValidationError("phase-space unit v must be positive")

    @property
    def nu(self) -> float:
        return 2.0 * self.dP * self.dQ / self.hbar

    @property
    def oscillator_mass(self) -> float:
        """Mass of the unit-frequency oscillator whose thermal states are
        the quantum packets, ``dP / dQ``."""
        return self.dP / self.dQ

    def to_text(self) -> str:
        keys = ("Q", "P", "dQ", "dP", "hbar", "v")
        lines = [f"{k} = {getattr(self, k)!r}" for k in keys]
        lines.append(f"# nu = {self.nu!r} (derived)")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MEPacketParams":
        """Parse ``key = value`` lines; ``nu`` may appear but is only
        checked against the derived value."""
        vals: dict = {}
        for ln, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"line {ln}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            if k not in ("Q", "P", "dQ", "dP", "hbar", "v", "nu"):
                raise ValidationError(f"line {ln}: unknown key {k!r}")
            try:
                vals[k] = float(v)
            except ValueError as exc:
                raise ValidationError(f"line {ln}: {k} is not a number") from exc
        missing = {"Q", "P", "dQ", "dP"} - set(vals)
        if missing:
            raise ValidationError(f"missing keys {sorted(missing)}")
        nu = vals.pop("nu", None)
        p = cls(**vals)
        if nu is not None and abs(nu - p.nu) > 1e-9 * max(1.0, p.nu):
            raise ValidationError(f"nu = {nu} inconsistent with derived {p.nu}")
        return p


# ------------------------------------------------------------ classical ---

@dataclass(frozen=True)
class ClassicalMEPacket:
    """Gaussian phase-space density normalized against ``dq dp / v``."""

    params: MEPacketParams

    def density(self, q, p):
        pr = self.params
        z = ((np.asarray(q) - pr.Q) ** 2 / (2 * pr.dQ ** 2)
             + (np.asarray(p) - pr.P) ** 2 / (2 * pr.dP ** 2))
        return pr.v / (2 * math.pi * pr.dQ * pr.dP) * np.exp(-z)

    def moments(self) -> dict:
        pr = self.params
        return {"Q": pr.Q, "P": pr.P, "Q2": pr.Q ** 2 + pr.dQ ** 2, "P2": pr.P ** 2 + pr.dP ** 2}

    def entropy(self) -> float:
        return classical_entropy(self.params)

    def sample(self, n: int, rng: np.random.Generator):
        """Draw ``n`` phase-space points; returns ``(q, p)``."""
        pr = self.params
        z = rng.standard_normal((2, n))
        return pr.Q + pr.dQ * z[0], pr.P + pr.dP * z[1]


def classical_density(params: MEPacketParams) -> ClassicalMEPacket:
    return ClassicalMEPacket(params)


def classical_entropy(params: MEPacketParams) -> float:
    """``1 + ln(2 pi dQ dP / v)``."""
    return 1.0 + math.log(2 * math.pi * params.dQ * params.dP / params.v)


def classical_multipliers(params: MEPacketParams):
    """Multipliers of ``exp(-l1 q - l2 p - l3 q^2 - l4 p^2)``."""
    l3 = 1.0 / (2 * params.dQ ** 2)
    l4 = 1.0 / (2 * params.dP ** 2)
    return -2 * l3 * params.Q, -2 * l4 * params.P, l3, l4


def classical_partition(l1: float, l2: float, l3: float, l4: float, v: float) -> float:
    """Integral of ``exp(-l1 q - l2 p - l3 q^2 - l4 p^2)`` against ``dq dp / v``."""
    if not (l3 > 0 and l4 > 0):
        raise ValidationError("quadratic multipliers must be positive")
    return (math.pi / v) / math.sqrt(l3 * l4) * math.exp(l1 ** 2 / (4 * l3) + l2 ** 2 / (4 * l4))


# -------------------------------------------------------------- quantum ---

def thermal_ratio(nu: float) -> float:
    """Geometric ratio ``(nu - 1)/(nu + 1)`` of the occupation weights."""
    if nu < 1:
        raise ValidationError(f"quantum packets need nu >= 1, got {nu}")
    return (nu - 1.0) / (nu + 1.0)


def occupation_weights(nu: float, count: int) -> np.ndarray:
    """``R_m = 2 (nu-1)^m / (nu+1)^(m+1)`` for ``m < count``."""
    r = thermal_ratio(nu)
    m = np.arange(count)
    if r == 0.0:
        w = np.zeros(count)
        w[0] = 1.0
        return w
    return 2.0 / (nu + 1.0) * r ** m


def fock_cutoff(nu: float, tail_tol: float = TAIL_TOL) -> int:
    """Smallest ``M`` with ``r^(M+1) < tail_tol``; levels ``0..M`` are kept."""
    r = thermal_ratio(nu)
    if r == 0.0:
        return 0
    m = max(0, math.ceil(math.log(tail_tol) / math.log(r)) - 1)
    while r ** (m + 1) >= tail_tol:
        m += 1
    while m > 0 and r ** m < tail_tol:
        m -= 1
    return m


def quantum_multipliers(params: MEPacketParams):
    """Multipliers ``(l1, l2, l3, l4)`` of ``exp(-l1 q - l2 p - l3 q^2 - l4 p^2)``
    reproducing the packet moments."""
    nu = params.nu
    if nu <= 1:
        raise ValidationError("multipliers diverge for nu <= 1")
    beta = math.log((nu + 1) / (nu - 1)) / params.hbar
    l3 = beta * params.dP / (2 * params.dQ)
    l4 = beta * params.dQ / (2 * params.dP)
    return -2 * l3 * params.Q, -2 * l4 * params.P, l3, l4


def quantum_partition(l1: float, l2: float, l3: float, l4: float, hbar: float) -> float:
    """``tr exp(-l1 q - l2 p - l3 q^2 - l4 p^2)``."""
    if not (l3 > 0 and l4 > 0):
        raise ValidationError("quadratic multipliers must be positive")
    x = hbar * math.sqrt(l3 * l4)
    return math.exp(l1 ** 2 / (4 * l3) + l2 ** 2 / (4 * l4)) / (2 * math.sinh(x))


def quantum_entropy(nu: float) -> float:
    """Closed-form entropy of the occupation weights."""
    if nu < 1:
        raise ValidationError("quantum packets need nu >= 1")
    a, b = (nu + 1) / 2, (nu - 1) / 2
    return a * math.log(a) - (b * math.log(b) if b > 0 else 0.0)


def ladder_matrices(params: MEPacketParams, size: int, mass: float | None = None):
    """Position and momentum matrices in a truncated oscillator basis.

    Parameters
    ----------
    size : int
        Number of basis states.
    mass : float, optional
        Oscillator mass of the basis (unit frequency). The packet's own
        value ``dP/dQ`` makes ``K`` diagonal.

    Returns
    -------
    q, p, q2, p2 : ndarray
        ``q2`` and ``p2`` are squares taken before truncation, so they are
        exact matrix elements of ``q^2`` and ``p^2``.
    """
    m = params.oscillator_mass if mass is None else mass
    k = np.arange(size, dtype=float)
    x = np.diag(np.sqrt(k[1:]), 1)
    x = x + x.T  # a + a^dag
    y = np.diag(np.sqrt(k[1:]), -1) - np.diag(np.sqrt(k[1:]), 1)  # a^dag - a
    # (a + a^dag)^2 and (a^dag - a)^2 from their exact matrix elements
    off2 = np.sqrt((k[:-2] + 1) * (k[:-2] + 2))
    x2 = np.diag(2 * k + 1) + np.diag(off2, 2) + np.diag(off2, -2)
    y2 = -np.diag(2 * k + 1) + np.diag(off2, 2) + np.diag(off2, -2)
    sq = math.sqrt(params.hbar / (2 * m))
    sp = math.sqrt(params.hbar * m / 2)
    e = np.eye(size)
    Q, P = params.Q, params.P
    q = Q * e + sq * x
    p = P * e + 1j * sp * y
    q2 = Q * Q * e + 2 * Q * sq * x + sq * sq * x2
    p2 = P * P * e + 2j * P * sp * y - sp * sp * y2
    return q.astype(complex), p, q2.astype(complex), p2


def k_matrix(params: MEPacketParams, size: int, mass: float | None = None) -> np.ndarray:
    """Matrix of ``K`` in a truncated oscillator basis."""
    q, p, q2, p2 = ladder_matrices(params, size, mass)
    e = np.eye(size)
    Q, P = params.Q, params.P
    kq = q2 - 2 * Q * q + Q * Q * e
    kp = p2 - 2 * P * p + P * P * e
    return 0.5 * params.dP / params.dQ * kq + 0.5 * params.dQ / params.dP * kp


@dataclass(frozen=True)
class QuantumMEPacket:
    """Quantum packet in a chosen representation.

    Attributes
    ----------
    params : MEPacketParams
    cutoff : int
        Highest kept occupation level.
    weights : ndarray
        Renormalized ``R_0..R_cutoff``.
    state : StateOperator
        Density matrix in the representation's orthonormal basis.
    representation : str
        ``"fock"`` (eigenbasis of ``K``) or ``"grid"``.
    q, p : ndarray
        Position and momentum matrices in the same basis (Fock only).
    """

    params: MEPacketParams
    cutoff: int
    weights: np.ndarray
    state: StateOperator
    representation: str
    q: np.ndarray | None = None
    p: np.ndarray | None = None
    q2: np.ndarray | None = None
    p2: np.ndarray | None = None


def quantum_state(params: MEPacketParams, representation: str = "fock",
                  cutoff: int | None = None, grid=None, tail_tol: float = TAIL_TOL) -> QuantumMEPacket:
    """Build the quantum packet.

    Parameters
    ----------
    representation : {"fock", "grid"}
        ``"fock"`` gives ``diag(R_m)`` in the eigenbasis of ``K``.
        ``"grid"`` samples ``sum R_m |h_m><h_m|`` on ``grid`` using displaced,
        boosted oscillator eigenfunctions.
    cutoff : int, optional
        Highest kept level; defaults to :func:`fock_cutoff`. A cutoff whose
        discarded tail exceeds ``tail_tol`` is rejected.
    grid : Grid1D
        Required for the grid representation.
    """
    nu = params.nu
    r = thermal_ratio(nu)
    m_auto = fock_cutoff(nu, tail_tol)
    if cutoff is None:
        cutoff = m_auto
    elif r > 0 and r ** (cutoff + 1) >= tail_tol:
        raise ValidationError(f"cutoff {cutoff} leaves a tail above {tail_tol}")
    w = occupation_weights(nu, cutoff + 1)
    w = w / w.sum()
    if representation == "fock":
        size = cutoff + 1
        q, p, q2, p2 = ladder_matrices(params, size)
        st = make_state(np.diag(w).astype(complex), HilbertSpace((size,), ("fock",)))
        return QuantumMEPacket(params, cutoff, w, st, "fock", q, p, q2, p2)
    if representation == "grid":
        if grid is None:
            raise ValidationError("grid representation needs a grid")
        h = oscillator_functions(params, grid, cutoff + 1)
        vecs = math.sqrt(grid.dx) * h
        m = (vecs.T * w) @ vecs.conj()
        tr = float(np.real(np.trace(m)))
        if abs(tr - 1.0) > 1e-8:
            raise ValidationError(f"grid too small for the packet: retained norm {tr:.3e}")
        st = make_state(m / tr, grid.space())
        return QuantumMEPacket(params, cutoff, w, st, "grid")
    raise ValidationError(f"unknown representation {representation!r}")


def oscillator_functions(params: MEPacketParams, grid, count: int) -> np.ndarray:
    """Rows are eigenfunctions of ``K`` sampled on ``grid``."""
    x = grid.x
    h = _kernels.hermite_functions(x - params.Q, count, params.oscillator_mass, params.hbar)
    return h * np.exp(1j * params.P * x / params.hbar)[None, :]


# ------------------------------------------------------- classical limit ---

def limit_argument(nu: float) -> float:
    """``x = (1/2) ln((nu+1)/(nu-1)) = hbar sqrt(l3 l4)``."""
    if nu <= 1:
        raise ValidationError("classical-limit table needs nu > 1")
    return 0.5 * math.log((nu + 1) / (nu - 1))


def partition_ratio(nu: float) -> float:
    """``Z_cl(v = 2 pi hbar) / Z_q = sinh(x) / x``."""
    x = limit_argument(nu)
    return math.sinh(x) / x


def classical_limit_report(nus) -> list:
    """Rows ``(nu, x, ratio, deviation)`` with ``deviation = ratio - 1``."""
    rows = []
    for nu in nus:
        x = limit_argument(float(nu))
        ratio = math.sinh(x) / x
        dev = _sinhc_minus_one(x)
        rows.append((float(nu), x, ratio, dev))
    return rows


def _sinhc_minus_one(x: float) -> float:
    """``sinh(x)/x - 1`` without cancellation: power series below 1."""
    x2 = x * x
    if x2 >= 1.0:
        return math.sinh(x) / x - 1.0
    term, total, k = 1.0, 0.0, 1
    while True:
        term *= x2 / ((2 * k) * (2 * k + 1))
        if term < 1e-18 * total:
            return total + term
        total += term
        k += 1
