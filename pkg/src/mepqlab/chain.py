"""Linear chain of identical particles with nearest-neighbour springs.

``H = sum p_n^2 / (2 mu) + (kappa^2 / 2) sum (x_n - x_{n-1} - xi)^2``.
Normal modes, phonon frequencies and the length statistics of the
per-mode Gibbs state.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, sparse

from .errors import NumericalError, ValidationError


@dataclass(frozen=True)
class ChainParams:
    """Chain of ``N`` particles at Lagrange multiplier ``lam`` (inverse energy)."""

    N: int
    mu: float = 1.0
    kappa: float = 1.0
    xi: float = 1.0
    lam: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValidationError("chain needs N >= 2 particles")
        for name in ("mu", "kappa", "xi", "lam", "hbar"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")


def mode_matrix(N: int) -> np.ndarray:
    """Orthogonal normal-mode matrix ``Y[m, n-1]``.

    Even rows are cosines and odd rows sines of
    ``(pi m / N)(n - (N + 1)/2)``; row 0 is ``1/sqrt(N)``.
    """
    if N < 2:
        raise ValidationError("N must be at least 2")
    m = np.arange(N)[:, None]
    n = np.arange(1, N + 1)[None, :]
    arg = np.pi * m / N * (n - (N + 1) / 2)
    amp = np.where(m == 0, 1.0 / math.sqrt(N), math.sqrt(2.0 / N))
    return amp * np.where(m % 2 == 0, np.cos(arg), np.sin(arg))


def mode_frequencies(N: int, kappa: float = 1.0, mu: float = 1.0) -> np.ndarray:
    """``omega_m = (2 kappa / sqrt(mu)) sin(m pi / (2N))``."""
    m = np.arange(N)
    return 2.0 * kappa / math.sqrt(mu) * np.sin(m * np.pi / (2 * N))


def stiffness_matrix(N: int, kappa: float = 1.0) -> np.ndarray:
    """Quadratic form of the spring energy, ``kappa^2`` times the
    free-end path Laplacian."""
    k = np.zeros((N, N))
    i = np.arange(N - 1)
    k[i, i] += 1
    k[i + 1, i + 1] += 1
    k[i, i + 1] -= 1
    k[i + 1, i] -= 1
    return kappa ** 2 * k


def length_coefficients(N: int) -> np.ndarray:
    """Coefficients ``Y[m, N-1] - Y[m, 0]`` of the mode amplitudes in
    ``L = x_N - x_1``."""
    y = mode_matrix(N)
    return y[:, -1] - y[:, 0]


def _coth(x):
    return 1.0 / np.tanh(x)


@dataclass(frozen=True)
class ChainReport:
    omega: np.ndarray
    L_avg: float
    dL: float
    ratio: float
    asymptote: float


def length_variance(params: ChainParams) -> float:
    """Mode sum for the length variance.

    ``dL^2 = (8/N) sum_{m=1}^{floor(N/2)} cos^2((2m-1) pi / 2N)
    (hbar / (2 mu w)) coth(lam hbar w / 2)`` with ``w = omega_{2m-1}``.
    """
    N = params.N
    w_all = mode_frequencies(N, params.kappa, params.mu)
    m = np.arange(1, N // 2 + 1)
    w = w_all[2 * m - 1]
    c2 = np.cos((2 * m - 1) * np.pi / (2 * N)) ** 2
    terms = c2 * params.hbar / (2 * params.mu * w) * _coth(params.lam * params.hbar * w / 2)
    return float(8.0 / N * np.sum(terms))


def asymptote(params: ChainParams) -> float:
    """Large-N relative width ``2 sqrt(3) / (pi kappa xi sqrt(lam) sqrt(N))``."""
    return 2 * math.sqrt(3) / (math.pi * params.kappa * params.xi * math.sqrt(params.lam)) / math.sqrt(params.N)


def length_statistics(params: ChainParams) -> ChainReport:
    """Average length, its spread and their ratio in the Gibbs state."""
    N = params.N
    L_avg = (N - 1) * params.xi
    dL = math.sqrt(length_variance(params))
    return ChainReport(mode_frequencies(N, params.kappa, params.mu), float(L_avg), dL,
                       dL / L_avg, asymptote(params))


def internal_energy(N: int, lam: float, kappa: float = 1.0, mu: float = 1.0, hbar: float = 1.0) -> float:
    """``sum_{m>=1} hbar w_m / (exp(lam hbar w_m) - 1)``."""
    e = hbar * mode_frequencies(N, kappa, mu)[1:]
    with np.errstate(over="ignore"):
        return float(np.sum(e / np.expm1(lam * e)))


def energy_fluctuation(N: int, lam: float, kappa: float = 1.0, mu: float = 1.0, hbar: float = 1.0) -> float:
    """Standard deviation of the internal energy, ``sum (hbar w)^2 n (n + 1)``."""
    e = hbar * mode_frequencies(N, kappa, mu)[1:]
    with np.errstate(over="ignore"):
        n = 1.0 / np.expm1(lam * e)
    return math.sqrt(float(np.sum(e ** 2 * n * (n + 1))))


def solve_lambda(N: int, e_target: float, kappa: float = 1.0, mu: float = 1.0,
                 hbar: float = 1.0) -> float:
    """Lagrange multiplier reproducing an internal energy.

    Bisection on the decreasing map ``lam -> internal_energy`` after a
    geometric bracket search.
    """
    if not e_target > 0:
        raise ValidationError("internal energy must be positive")

    def f(lam):
        return internal_energy(N, lam, kappa, mu, hbar) - e_target

    lo, hi = 1.0, 1.0
    for _ in range(2000):
        if f(lo) > 0:
            break
        lo /= 2.0
    for _ in range(2000):
        if f(hi) < 0:
            break
        hi *= 2.0
    if not (f(lo) > 0 > f(hi)):
        raise NumericalError("could not bracket the Lagrange multiplier")
    return float(optimize.bisect(f, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=2000))


def brute_force_length_variance(params: ChainParams, levels: int = 40) -> float:
    """Length variance from an explicit Gibbs trace.

    The stiffness matrix is diagonalized numerically, every internal mode
    gets ``levels`` Fock states, and ``tr[T L^2] - tr[T L]^2`` is evaluated
    on the product space with sparse matrices. Independent of the analytic
    mode matrix and of the closed-form thermal factor.
    """
    N = params.N
    k = stiffness_matrix(N, params.kappa)
    ev, vec = np.linalg.eigh(k)
    internal = [i for i in range(N) if ev[i] > 1e-12 * max(1.0, ev[-1])]
    if N > 6:
        raise ValidationError("brute-force oracle is limited to N <= 6")
    eye = sparse.identity(levels, format="csr")
    a = sparse.diags(np.sqrt(np.arange(1, levels)), 1, format="csr")
    lop = None
    weights = np.ones(1)
    for pos, i in enumerate(internal):
        w = math.sqrt(ev[i] / params.mu)
        u = math.sqrt(params.hbar / (2 * params.mu * w)) * (a + a.T)
        coef = vec[-1, i] - vec[0, i]
        factors = [eye] * len(internal)
        factors[pos] = u
        term = factors[0]
        for f in factors[1:]:
            term = sparse.kron(term, f, format="csr")
        term = coef * term
        lop = term if lop is None else lop + term
        pw = np.exp(-params.lam * params.hbar * w * np.arange(levels))
        weights = np.kron(weights, pw / pw.sum())
    mean = float(weights @ lop.diagonal())
    sq = np.asarray(lop.multiply(lop).sum(axis=0)).ravel()
    return float(weights @ sq) - mean ** 2


def off_diagonal_coupling(N: int, kappa: float = 1.0) -> float:
    """Largest off-diagonal entry of ``Y K Y^T`` for the stiffness ``K``."""
    y = mode_matrix(N)
    d = y @ stiffness_matrix(N, kappa) @ y.T
    return float(np.max(np.abs(d - np.diag(np.diag(d)))))


def scaling_table(Ns, **kw) -> list:
    """Rows ``(N, L_avg, dL, ratio, asymptote, rel_err)``."""
    rows = []
    for N in Ns:
        rep = length_statistics(ChainParams(int(N), **kw))
        rows.append((int(N), rep.L_avg, rep.dL, rep.ratio, rep.asymptote,
                     (rep.ratio - rep.asymptote) / rep.asymptote))
    return rows


def scaling_slope(rows) -> float:
    """Least-squares slope of ``ln(ratio)`` against ``ln N``."""
    n = np.log([r[0] for r in rows])
    y = np.log([r[3] for r in rows])
    return float(np.polyfit(n, y, 1)[0])


def scaling_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["N", "L_avg", "dL", "ratio", "asymptote", "rel_err"])
    for r in rows:
        w.writerow([r[0]] + [f"{v:.16e}" for v in r[1:]])
    return buf.getvalue()
