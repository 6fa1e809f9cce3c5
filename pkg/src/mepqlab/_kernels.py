"""Hot numerical kernels with a numba backend and a pure-numpy fallback.

The numba versions are used when numba imports cleanly and the environment
variable ``MEPQLAB_DISABLE_JIT`` is not set to a true value. Both backends
run the same algorithm; results agree to rounding.

Kernels
-------
hermite_functions
    Normalized oscillator eigenfunctions on a grid by the three-term
    recurrence.
wrapped_diagonal_sums
    Sums of a square array along wrapped diagonals ``j = i - d mod n``.
ensemble_dopri
    Dormand-Prince 5(4) integration of an ensemble of one-dimensional
    particles in a polynomial potential with a shared adaptive step.
"""

from __future__ import annotations

import math
import os

import numpy as np

_FALSY = ("", "0", "false", "no", "off")


def jit_disabled() -> bool:
    return os.environ.get("MEPQLAB_DISABLE_JIT", "").strip().lower() not in _FALSY


try:
    import numba as _numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _numba = None
    HAVE_NUMBA = False


def backend() -> str:
    """Name of the backend the dispatchers will use right now."""
    return "numba" if HAVE_NUMBA and not jit_disabled() else "numpy"


# Dormand-Prince 5(4) tableau.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.array([
    [0, 0, 0, 0, 0, 0],
    [1 / 5, 0, 0, 0, 0, 0],
    [3 / 40, 9 / 40, 0, 0, 0, 0],
    [44 / 45, -56 / 15, 32 / 9, 0, 0, 0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
])
_B5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


# ---------------------------------------------------------------- numpy ---

def hermite_functions_numpy(x: np.ndarray, n: int, mass: float, hbar: float) -> np.ndarray:
    """Rows ``0..n-1`` hold oscillator eigenfunctions ``h_m(x)`` for an
    oscillator of the given mass and unit frequency."""
    x = np.asarray(x, dtype=float)
    s = math.sqrt(hbar / mass)
    y = x / s
    out = np.empty((n, x.size))
    out[0] = np.exp(-0.5 * y * y) / (math.pi ** 0.25 * math.sqrt(s))
    if n > 1:
        out[1] = math.sqrt(2.0) * y * out[0]
    for m in range(2, n):
        out[m] = math.sqrt(2.0 / m) * y * out[m - 1] - math.sqrt((m - 1) / m) * out[m - 2]
    return out


def wrapped_diagonal_sums_numpy(a: np.ndarray) -> np.ndarray:
    """``s[d] = sum_i a[i, (i - d) mod n]``."""
    n = a.shape[0]
    i = np.arange(n)
    j = (i[:, None] - i[None, :]) % n
    return a[i[:, None], j].sum(axis=0)


def _poly_force_numpy(q, dcoef):
    f = np.zeros_like(q)
    for c in dcoef[::-1]:
        f = f * q + c
    return -f


def ensemble_dopri_numpy(q0, p0, mass, force, t_out, rtol=1e-10, atol=1e-12,
                         h0=1e-3, max_steps=10_000_000):
    """Integrate ``dq/dt = p/m, dp/dt = force(q)`` for a whole ensemble.

    Parameters
    ----------
    q0, p0 : ndarray
        Initial positions and momenta.
    mass : float
    force : callable or ndarray
        Vectorized force ``F(q)``, or coefficients ``c`` of the potential
        derivative ``V'(q) = sum_k c[k] q^k``.
    t_out : ndarray
        Increasing output times, the first one is the start time.

    Returns
    -------
    qs, ps : ndarray, shape (len(t_out), n)
    nsteps : int
    """
    if callable(force):
        fcall = force
    else:
        dcoef = np.asarray(force, dtype=float)
        def fcall(q):
            return _poly_force_numpy(q, dcoef)
    t_out = np.asarray(t_out, dtype=float)
    q = np.array(q0, dtype=float)
    p = np.array(p0, dtype=float)
    qs = np.empty((t_out.size, q.size))
    ps = np.empty((t_out.size, q.size))
    qs[0], ps[0] = q, p
    t = t_out[0]
    h = h0
    steps = 0
    kq = np.empty((7, q.size))
    kp = np.empty((7, q.size))
    for k in range(1, t_out.size):
        target = t_out[k]
        while t < target:
            if steps >= max_steps:
                raise ArithmeticError("integrator exceeded the step budget")
            hs = min(h, target - t)
            for s in range(7):
                qq = q.copy()
                pp = p.copy()
                for r in range(s):
                    if _A[s, r] != 0.0:
                        qq += hs * _A[s, r] * kq[r]
                        pp += hs * _A[s, r] * kp[r]
                kq[s] = pp / mass
                kp[s] = fcall(qq)
            qn = q + hs * (_B5[:6] @ kq[:6])
            pn = p + hs * (_B5[:6] @ kp[:6])
            eq = hs * (_E @ kq)
            ep = hs * (_E @ kp)
            sq = atol + rtol * np.maximum(np.abs(q), np.abs(qn))
            sp = atol + rtol * np.maximum(np.abs(p), np.abs(pn))
            err = max(np.max(np.abs(eq) / sq), np.max(np.abs(ep) / sp))
            steps += 1
            if err <= 1.0 or hs < 1e-14:
                t = target if hs == target - t else t + hs
                q, p = qn, pn
            fac = 0.9 * err ** -0.2 if err > 0 else 5.0
            h = hs * min(5.0, max(0.2, fac))
        qs[k], ps[k] = q, p
    return qs, ps, steps


# ---------------------------------------------------------------- numba ---

if HAVE_NUMBA:
    njit = _numba.njit(cache=True)

    @njit
    def _hermite_nb(x, n, mass, hbar):
        s = math.sqrt(hbar / mass)
        norm0 = 1.0 / (math.pi ** 0.25 * math.sqrt(s))
        out = np.empty((n, x.size))
        for j in range(x.size):
            y = x[j] / s
            h0 = math.exp(-0.5 * y * y) * norm0
            out[0, j] = h0
            if n > 1:
                h1 = math.sqrt(2.0) * y * h0
                out[1, j] = h1
                for m in range(2, n):
                    h2 = math.sqrt(2.0 / m) * y * h1 - math.sqrt((m - 1) / m) * h0
                    out[m, j] = h2
                    h0 = h1
                    h1 = h2
        return out

    @njit
    def _wrapped_nb(a):
        n = a.shape[0]
        out = np.zeros(n, dtype=a.dtype)
        for i in range(n):
            for d in range(n):
                j = i - d
                if j < 0:
                    j += n
                out[d] += a[i, j]
        return out

    @njit
    def _force_nb(q, dcoef):
        out = np.empty_like(q)
        nc = dcoef.size
        for i in range(q.size):
            f = 0.0
            for c in range(nc - 1, -1, -1):
                f = f * q[i] + dcoef[c]
            out[i] = -f
        return out

    @njit
    def _dopri_nb(q0, p0, mass, dcoef, t_out, rtol, atol, h0, max_steps, A, B5, E):
        n = q0.size
        q = q0.copy()
        p = p0.copy()
        qs = np.empty((t_out.size, n))
        ps = np.empty((t_out.size, n))
        qs[0] = q
        ps[0] = p
        t = t_out[0]
        h = h0
        steps = 0
        kq = np.empty((7, n))
        kp = np.empty((7, n))
        qq = np.empty(n)
        pp = np.empty(n)
        qn = np.empty(n)
        pn = np.empty(n)
        for k in range(1, t_out.size):
            target = t_out[k]
            while t < target:
                if steps >= max_steps:
                    return qs, ps, -1
                hs = min(h, target - t)
                for s in range(7):
                    for i in range(n):
                        qq[i] = q[i]
                        pp[i] = p[i]
                    for r in range(s):
                        if A[s, r] != 0.0:
                            for i in range(n):
                                qq[i] += hs * A[s, r] * kq[r, i]
                                pp[i] += hs * A[s, r] * kp[r, i]
                    fq = _force_nb(qq, dcoef)
                    for i in range(n):
                        kq[s, i] = pp[i] / mass
                        kp[s, i] = fq[i]
                err = 0.0
                for i in range(n):
                    aq = 0.0
                    ap = 0.0
                    for s in range(6):
                        aq += B5[s] * kq[s, i]
                        ap += B5[s] * kp[s, i]
                    qn[i] = q[i] + hs * aq
                    pn[i] = p[i] + hs * ap
                    eq = 0.0
                    ep = 0.0
                    for s in range(7):
                        eq += E[s] * kq[s, i]
                        ep += E[s] * kp[s, i]
                    sq = atol + rtol * max(abs(q[i]), abs(qn[i]))
                    sp = atol + rtol * max(abs(p[i]), abs(pn[i]))
                    err = max(err, abs(hs * eq) / sq, abs(hs * ep) / sp)
                steps += 1
                if err <= 1.0 or hs < 1e-14:
                    if hs == target - t:
                        t = target
                    else:
                        t = t + hs
                    for i in range(n):
                        q[i] = qn[i]
                        p[i] = pn[i]
                if err > 0:
                    fac = 0.9 * err ** -0.2
                else:
                    fac = 5.0
                h = hs * min(5.0, max(0.2, fac))
            qs[k] = q
            ps[k] = p
        return qs, ps, steps


# ----------------------------------------------------------- dispatchers ---

def hermite_functions(x, n: int, mass: float, hbar: float = 1.0) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=float)
    if backend() == "numba":
        return _hermite_nb(x, int(n), float(mass), float(hbar))
    return hermite_functions_numpy(x, n, mass, hbar)


def wrapped_diagonal_sums(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    if backend() == "numba" and a.dtype in (np.float64, np.complex128):
        return _wrapped_nb(a)
    return wrapped_diagonal_sums_numpy(a)


def ensemble_dopri(q0, p0, mass, force, t_out, rtol=1e-10, atol=1e-12, h0=1e-3,
                   max_steps=10_000_000):
    """Dispatch to the numba integrator for polynomial forces, numpy otherwise.

    See :func:`ensemble_dopri_numpy` for the parameters.
    """
    if callable(force) or backend() != "numba":
        return ensemble_dopri_numpy(q0, p0, mass, force, t_out, rtol, atol, h0, max_steps)
    qs, ps, steps = _dopri_nb(np.ascontiguousarray(q0, dtype=float),
                              np.ascontiguousarray(p0, dtype=float), float(mass),
                              np.ascontiguousarray(force, dtype=float),
                              np.ascontiguousarray(t_out, dtype=float), float(rtol),
                              float(atol), float(h0), int(max_steps), _A, _B5, _E)
    if steps < 0:
        raise ArithmeticError("integrator exceeded the step budget")
    return qs, ps, steps
