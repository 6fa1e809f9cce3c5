"""Time evolution of maximum-entropy packets.

Closed-form moment trajectories for potentials of at most second degree,
a Monte Carlo classical oracle and a truncated-oscillator quantum oracle.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from . import _kernels
from .errors import NumericalError, ValidationError
from .mepacket import MEPacketParams, k_matrix, ladder_matrices, thermal_ratio

#: Number of independent random substreams used by the Monte Carlo oracle.
#: Fixed so that results do not depend on the worker count.
MC_STREAMS = 16


@dataclass(frozen=True)
class QuadraticPotential:
    """``V(q) = V0 + V1 q + V2 q^2 / 2`` for a particle of mass ``mu``."""

    V0: float = 0.0
    V1: float = 0.0
    V2: float = 0.0
    mu: float = 1.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValidationError("mass must be positive")

    def force_coefficients(self) -> np.ndarray:
        """Coefficients of ``V'(q)`` in increasing powers."""
        return np.array([self.V1, self.V2])


@dataclass(frozen=True)
class PolynomialPotential:
    """``V(q) = sum_k c[k] q^k`` for a particle of mass ``mu``."""

    coeffs: tuple
    mu: float = 1.0

    def force_coefficients(self) -> np.ndarray:
        c = np.asarray(self.coeffs, dtype=float)
        if c.size < 2:
            return np.zeros(1)
        return c[1:] * np.arange(1, c.size)


@dataclass(frozen=True)
class EvolutionCoeffs:
    """Linear flow ``q(t) = f0 + f1 q + f2 p``, ``p(t) = g0 + g1 q + g2 p``."""

    t: np.ndarray
    f0: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    g0: np.ndarray
    g1: np.ndarray
    g2: np.ndarray

    def determinant(self) -> np.ndarray:
        return self.f1 * self.g2 - self.f2 * self.g1


def evolution_coeffs(pot: QuadraticPotential, t) -> EvolutionCoeffs:
    """Coefficients of the exact linear phase-space flow.

    ``V2 > 0`` gives trigonometric functions of ``omega = sqrt(V2/mu)``,
    ``V2 < 0`` their hyperbolic continuation and ``V2 = 0`` polynomials.
    """
    t = np.asarray(t, dtype=float)
    mu, V1, V2 = pot.mu, pot.V1, pot.V2
    if V2 > 0:
        w = math.sqrt(V2 / mu)
        xi = math.sqrt(mu * V2)
        c, s = np.cos(w * t), np.sin(w * t)
        f0 = -V1 / V2 * (1 - c)
        f1, f2 = c, s / xi
        g0 = -xi * V1 / V2 * s
        g1, g2 = -xi * s, c
    elif V2 < 0:
        w = math.sqrt(-V2 / mu)
        xi = mu * w
        c, s = np.cosh(w * t), np.sinh(w * t)
        f0 = -V1 / V2 * (1 - c)
        f1, f2 = c, s / xi
        g0 = V1 / V2 * xi * s
        g1, g2 = xi * s, c
    else:
        f0 = -V1 * t ** 2 / (2 * mu)
        f1 = np.ones_like(t)
        f2 = t / mu
        g0 = -V1 * t
        g1 = np.zeros_like(t)
        g2 = np.ones_like(t)
    return EvolutionCoeffs(t, f0, f1, f2, g0, g1, g2)


@dataclass(frozen=True)
class MomentTrajectory:
    """Means and standard deviations along a time grid.

    ``se`` holds standard errors ``(seQ, seP, sedQ, sedP)`` for Monte Carlo
    trajectories and is ``None`` otherwise.
    """

    times: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    dQ: np.ndarray
    dP: np.ndarray
    se: Optional[tuple] = None
    info: Optional[dict] = None

    def as_array(self) -> np.ndarray:
        return np.stack([self.Q, self.P, self.dQ, self.dP], axis=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["t", "Q", "P", "dQ", "dP"]
        if self.se is not None:
            head += ["seQ", "seP", "sedQ", "sedP"]
        w.writerow(head)
        for i, t in enumerate(self.times):
            row = [t, self.Q[i], self.P[i], self.dQ[i], self.dP[i]]
            if self.se is not None:
                row += [s[i] for s in self.se]
            w.writerow([f"{float(v):.16e}" for v in row])
        return buf.getvalue()


def closed_form_trajectory(params: MEPacketParams, pot: QuadraticPotential, times) -> MomentTrajectory:
    """Exact moments of a packet in a quadratic potential."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0):
        raise ValidationError("times must be sorted")
    c = evolution_coeffs(pot, times)
    Q, P, dQ, dP = params.Q, params.P, params.dQ, params.dP
    return MomentTrajectory(
        times,
        c.f0 + Q * c.f1 + P * c.f2,
        c.g0 + Q * c.g1 + P * c.g2,
        np.sqrt(c.f1 ** 2 * dQ ** 2 + c.f2 ** 2 * dP ** 2),
        np.sqrt(c.g1 ** 2 * dQ ** 2 + c.g2 ** 2 * dP ** 2),
    )


def worker_count() -> int:
    """Worker cap from ``MEPQLAB_THREADS`` (default: CPU count)."""
    raw = os.environ.get("MEPQLAB_THREADS", "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError as exc:
            raise ValidationError("MEPQLAB_THREADS must be an integer") from exc
        return max(1, n)
    return max(1, os.cpu_count() or 1)


Potential = Union[QuadraticPotential, PolynomialPotential, Callable]


def mc_classical_oracle(params: MEPacketParams, pot: Potential, times, n_samples: int,
                        seed: int, mu: float | None = None, method: str = "auto",
                        rtol: float = 1e-10, atol: float = 1e-12) -> MomentTrajectory:
    """Monte Carlo estimate of classical moment trajectories.

    Parameters
    ----------
    pot : QuadraticPotential, PolynomialPotential or callable
        A callable is a vectorized force ``F(q)``; ``mu`` must then be given.
    n_samples : int
        At least 1000.
    seed : int
        Root seed. Samples come from ``MC_STREAMS`` fixed substreams so the
        output is identical for any worker count.
    method : {"auto", "exact", "integrate"}
        ``"auto"`` propagates quadratic potentials with the exact linear flow
        and everything else with the adaptive integrator.

    Returns
    -------
    MomentTrajectory
        Sample means and standard deviations with standard errors
        ``sd / sqrt(n)`` for means and ``sd / sqrt(2 (n - 1))`` for
        standard deviations.
    """
    if n_samples < 1000:
        raise ValidationError("Monte Carlo oracle needs at least 1000 samples")
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0):
        raise ValidationError("times must be sorted")
    if callable(pot) and not isinstance(pot, (QuadraticPotential, PolynomialPotential)):
        if mu is None:
            raise ValidationError("a force callback needs an explicit mass")
        force, mass = pot, float(mu)
    else:
        force, mass = pot.force_coefficients(), pot.mu
    exact = isinstance(pot, QuadraticPotential) and method in ("auto", "exact")
    if method == "exact" and not isinstance(pot, QuadraticPotential):
        raise ValidationError("exact propagation needs a quadratic potential")
    coeffs = evolution_coeffs(pot, times - times[0]) if exact else None

    sizes = [n_samples // MC_STREAMS + (1 if i < n_samples % MC_STREAMS else 0)
             for i in range(MC_STREAMS)]
    streams = np.random.SeedSequence(int(seed)).spawn(MC_STREAMS)

    def run(i):
        rng = np.random.default_rng(streams[i])
        z = rng.standard_normal((2, sizes[i]))
        q0 = params.Q + params.dQ * z[0]
        p0 = params.P + params.dP * z[1]
        if exact:
            c = coeffs
            qs = c.f0[:, None] + c.f1[:, None] * q0[None, :] + c.f2[:, None] * p0[None, :]
            ps = c.g0[:, None] + c.g1[:, None] * q0[None, :] + c.g2[:, None] * p0[None, :]
            return qs, ps
        try:
            qs, ps, _ = _kernels.ensemble_dopri(q0, p0, mass, force, times, rtol, atol)
        except ArithmeticError as exc:
            raise NumericalError(str(exc)) from exc
        if not (np.all(np.isfinite(qs)) and np.all(np.isfinite(ps))):
            raise NumericalError("integrator produced non-finite values")
        return qs, ps

    workers = min(worker_count(), MC_STREAMS)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(run, range(MC_STREAMS)))
    else:
        parts = [run(i) for i in range(MC_STREAMS)]
    qs = np.concatenate([a for a, _ in parts], axis=1)
    ps = np.concatenate([b for _, b in parts], axis=1)
    n = qs.shape[1]
    mq, mp = qs.mean(axis=1), ps.mean(axis=1)
    sq, sp = qs.std(axis=1, ddof=1), ps.std(axis=1, ddof=1)
    se = (sq / math.sqrt(n), sp / math.sqrt(n),
          sq / math.sqrt(2 * (n - 1)), sp / math.sqrt(2 * (n - 1)))
    return MomentTrajectory(times, mq, mp, sq, sp, se, {"n_samples": n, "seed": int(seed)})


def fock_quantum_oracle(params: MEPacketParams, pot: QuadraticPotential, times,
                        cutoff: int | None = None, basis_mass: float | None = None,
                        tol: float = 1e-6, max_size: int = 4096,
                        return_state: bool = False) -> MomentTrajectory:
    """Quantum moment trajectories in a truncated oscillator basis.

    The basis is that of a unit-frequency oscillator of mass
    ``basis_mass``. The packet is the Gibbs state of the truncated ``K``
    with the packet's thermal ratio, ``H = p^2/(2 mu) + V(q)`` is
    diagonalized once and moments are traces against the evolved state.
    The basis size is doubled until all four moment curves move by less
    than ``tol``; the larger basis is returned.

    Parameters
    ----------
    cutoff : int, optional
        Initial basis size. By default it is sized from the closed-form
        spread of the trajectory.
    basis_mass : float, optional
        Default balances the position and momentum extents of the
        trajectory.

    Raises
    ------
    ValidationError
        ``V2 < 0`` or ``nu < 1``.
    NumericalError
        No convergence below ``max_size``.
    """
    if pot.V2 < 0:
        raise ValidationError("Fock oracle needs V2 >= 0 (spectrum bounded below)")
    thermal_ratio(params.nu)
    times = np.asarray(times, dtype=float)
    ref = closed_form_trajectory(params, pot, times - times[0])
    rq = float(np.max(np.abs(ref.Q - params.Q) + 10.0 * ref.dQ))
    rp = float(np.max(np.abs(ref.P - params.P) + 10.0 * ref.dP))
    mb = rp / rq if basis_mass is None else float(basis_mass)
    size = max(32, int(math.ceil(rq * rp / (2 * params.hbar)))) if cutoff is None else int(cutoff)
    if 2 * size > max_size:
        raise NumericalError(f"Fock oracle needs a basis above {max_size} states")
    prev = _fock_run(params, pot, times, size, mb)
    while True:
        size2 = 2 * size
        if size2 > max_size:
            raise NumericalError(f"Fock oracle did not converge below basis size {max_size}")
        cur = _fock_run(params, pot, times, size2, mb)
        shift = float(np.max(np.abs(cur[0] - prev[0])))
        if shift < tol:
            arr, state_info = cur
            info = {"basis_size": size2, "basis_mass": mb, "doubling_shift": shift}
            if return_state:
                info.update(state_info)
            return MomentTrajectory(times, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], None, info)
        size, prev = size2, cur


def _fock_run(params, pot, times, size, mb):
    q, p, q2, p2 = ladder_matrices(params, size, mb)
    kmat = k_matrix(params, size, mb)
    # the basis is centered on the packet, so K is real symmetric
    w, vecs = np.linalg.eigh(np.real(kmat) if not np.any(np.imag(kmat)) else kmat)
    if params.nu > 1:
        beta = math.log((params.nu + 1) / (params.nu - 1)) / params.hbar
        r = np.exp(-beta * (w - w[0]))
        r /= r.sum()
    else:
        r = np.zeros(size)
        r[0] = 1.0
    t0 = (vecs * r) @ vecs.conj().T
    h = p2 / (2 * pot.mu) + pot.V0 * np.eye(size) + pot.V1 * q + 0.5 * pot.V2 * q2
    h = 0.5 * (h + h.conj().T)
    e, ev = np.linalg.eigh(np.real(h) if not np.any(np.imag(h)) else h)
    evh = ev.conj().T
    t0e = evh @ t0 @ ev
    ops = [evh @ o @ ev for o in (q, p, q2, p2)]
    # tr[T(t) O] = sum_ij t0e_ij ph_i conj(ph_j) O_ji with ph = exp(-i e t / hbar)
    ph = np.exp(-1j * np.outer(times - times[0], e) / params.hbar)
    m = [np.real(np.sum((ph @ (t0e * o.T)) * ph.conj(), axis=1)) for o in ops]
    out = np.column_stack([m[0], m[1], np.sqrt(np.maximum(m[2] - m[0] ** 2, 0.0)),
                           np.sqrt(np.maximum(m[3] - m[1] ** 2, 0.0))])
    return out, {"energies": e, "state_h_basis": t0e, "ops_h_basis": ops}
