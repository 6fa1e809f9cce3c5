"""Acceptance criteria AC1-AC11, one test per criterion.

Each test prints one ``ACn PASS|FAIL`` line (visible with ``-s`` and
repeated in the terminal summary) before asserting.
"""

import math
import time

import numpy as np

from conftest import ACCEPTANCE_LINES
from mepqlab import chain, grid, hilbert, jointqp, measurement, mepacket, povm
from mepqlab.dynamics import (QuadraticPotential, closed_form_trajectory, fock_quantum_oracle,
                              mc_classical_oracle)

SEED = 12345


def report(cid: str, checks: dict, **values):
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    extra = " ".join(f"{k}={v:.3g}" if isinstance(v, float) else f"{k}={v}" for k, v in values.items())
    line = f"{cid} {'PASS' if ok else 'FAIL'} {extra}" + (f" failed: {', '.join(failed)}" if failed else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def _packet_run(pot, times):
    p = mepacket.MEPacketParams(1.0, 0.5, 1.0, 1.0)
    cf = closed_form_trajectory(p, pot, times)
    fo = fock_quantum_oracle(p, pot, times, tol=1e-6)
    mc = mc_classical_oracle(p, pot, times, 100_000, SEED)
    z = np.abs(mc.as_array() - cf.as_array()) / np.stack(mc.se, axis=1)
    return cf, fo, mc, z


def test_ac1_quantum_classical_packet_match():
    t0 = time.perf_counter()
    times = np.linspace(0, 4 * math.pi, 41)
    errs, zs = {}, {}
    for name, pot in (("harmonic", QuadraticPotential(V2=1.0, mu=1.0)), ("free", QuadraticPotential())):
        cf, fo, _, z = _packet_run(pot, times)
        errs[name] = float(np.max(np.abs(fo.as_array() - cf.as_array())))
        zs[name] = float(np.max(z))
    elapsed = time.perf_counter() - t0
    report("AC1", {"fock harmonic": errs["harmonic"] < 1e-6, "fock free": errs["free"] < 1e-6,
                   "mc harmonic": zs["harmonic"] < 3, "mc free": zs["free"] < 3,
                   "runtime": elapsed < 30},
           fock_err=max(errs.values()), max_z=max(zs.values()), seconds=elapsed)


def test_ac2_free_spreading():
    p = mepacket.MEPacketParams(1.0, 0.5, 1.0, 1.0)
    pot = QuadraticPotential()
    times = np.array([0.0, 2.0])
    cf = closed_form_trajectory(p, pot, times)
    mc = mc_classical_oracle(p, pot, times, 100_000, SEED)
    err = abs(cf.dQ[1] - math.sqrt(5.0))
    z = abs(mc.dQ[1] - cf.dQ[1]) / mc.se[2][1]
    report("AC2", {"closed form": err < 1e-12, "monte carlo": z < 3}, error=err, z=float(z))


def test_ac3_chain_scaling():
    t0 = time.perf_counter()
    rows = chain.scaling_table([64, 128, 256, 512, 1024, 2048, 4096])
    lerr = max(abs(r[1] - (r[0] - 1)) for r in rows)
    slope = chain.scaling_slope(rows)
    rel = rows[-1][5]
    p4 = chain.ChainParams(4)
    bf = abs(chain.brute_force_length_variance(p4, 40) - chain.length_variance(p4))
    elapsed = time.perf_counter() - t0
    report("AC3", {"average length": lerr < 1e-12, "slope": abs(slope + 0.5) <= 0.02,
                   "prefactor": abs(rel) < 0.05, "brute force": bf < 1e-8, "runtime": elapsed < 60},
           slope=slope, prefactor_rel_err=float(rel), brute_force_err=bf)


def test_ac4_entanglement_demo():
    A = np.diag([-1.0, 1.0]).astype(complex)
    one = np.eye(2)
    u = (np.kron([1, 0], [0, 1]) + np.kron([0, 1], [1, 0])).astype(complex)
    t = hilbert.make_state(0.5 * np.outer(u, u.conj()), hilbert.space(2, 2))
    c = hilbert.normalized_correlation(np.kron(A, one), np.kron(one, A), t)
    joint = povm.compound(povm.sharp_from_observable(np.kron(A, one)),
                          povm.sharp_from_observable(np.kron(one, A)))
    probs = [povm.probability(joint, t, [(x, y)]) for x in (-1.0, 1.0) for y in (-1.0, 1.0)]
    report("AC4", {"correlation": abs(c + 1) < 1e-12, "probabilities": probs == [0.0, 0.5, 0.5, 0.0]},
           C=c, probabilities=probs)


def test_ac5_bcl_suite():
    rng = np.random.default_rng(SEED)
    repro = completion = vn_viol = 0.0
    generic_fail = 0
    for _ in range(100):
        d = int(rng.integers(2, 6))
        n = int(rng.integers(2, d + 1))
        spec = measurement.random_bcl_spec(rng, d, n)
        vn = measurement.random_bcl_spec(rng, d, n, von_neumann=True)
        phi = hilbert.random_ket(d, rng)
        base = measurement.premeasure(spec, phi)
        repro = max(repro, base.reproducibility_error,
                    measurement.premeasure(vn, phi).reproducibility_error)
        for _ in range(3):
            alt = measurement.premeasure(spec, phi, measurement.build_unitary(spec, rng=rng))
            completion = max(completion, float(np.max(np.abs(alt.p - base.p))),
                             float(np.max(np.abs(alt.phi_end - base.phi_end))))
        vn_viol = max(vn_viol, measurement.repeatability_check(measurement.state_transformer(vn)).max_violation)
        generic_fail += measurement.repeatability_check(measurement.state_transformer(spec)).max_violation > 0.1
    report("AC5", {"reproducibility": repro < 1e-12, "von Neumann repeatable": vn_viol < 1e-12,
                   "generic not repeatable": generic_fail >= 95, "completion": completion < 1e-12},
           repro=repro, vn_violation=vn_viol, generic_failing=int(generic_fail), completion=completion)


def _trigger_models(count=50):
    for i, ss in enumerate(np.random.SeedSequence(SEED).spawn(count)):
        rng = np.random.default_rng(ss)
        eps = 1 if i % 2 == 0 else -1
        n_det = int(rng.integers(1, 4))
        d = int(rng.integers(2 * n_det, 7))
        model = measurement.random_trigger_model(rng, d, n_det, eps, count=1)
        yield model, measurement.random_coefficients(model, rng), rng


def test_ac6_cross_traces_vanish():
    worst = 0.0
    signs = set()
    for model, coeffs, _ in _trigger_models():
        signs.add(model.eps)
        assert model.d <= 6 and model.n_detectors <= 3 and set(model.counts) == {1}
        worst = max(worst, measurement.max_cross_trace(model, coeffs))
    report("AC6", {"max trace": worst < 1e-12, "both signs": signs == {1, -1}}, max_trace=worst)


def test_ac7_commuting_observables():
    worst = 0.0
    hits = total = 0
    for model, coeffs, rng in _trigger_models():
        dev = measurement.commuting_deviations(model, coeffs, 100, int(rng.integers(2 ** 63)))
        worst = max(worst, float(dev.max()))
        if model.n_detectors > 1:
            ctrl = measurement.commuting_deviations(model, coeffs, 100, int(rng.integers(2 ** 63)), commuting=False)
            hits += int(np.sum(ctrl > 1e-3))
            total += ctrl.size
    frac = hits / total
    report("AC7", {"commuting": worst < 1e-10, "control": frac >= 0.9},
           max_deviation=worst, control_fraction=frac, control_trials=total)


def test_ac8_cluster_separability():
    g = grid.Grid1D.centered(256, 0.1)
    m1 = grid.RegionMask.interval(g, -12.0, -0.5)
    m2 = grid.RegionMask.interval(g, 0.5, 12.0)
    psi1 = grid.localise_state(grid.gaussian(g, -6.0, 0.8, 0.5), m1)
    psi2 = grid.localise_state(grid.gaussian(g, 6.0, 0.8, -1.0), m2)
    e = np.diag((m1.indicator & (g.x > -7) & (g.x < -5)).astype(complex))
    dev = norm = 0.0
    for eps in (1, -1):
        r = grid.cluster_separability_check(psi1.state(), psi2.state(), e, eps, m1, m2)
        dev = max(dev, abs(r.lhs - r.rhs))
        norm = max(norm, abs(r.normalization - 0.5))
    c = abs(psi1.inner(psi2))
    report("AC8", {"separability": dev < 1e-8, "normalization": norm < 1e-10, "disjoint": c == 0.0},
           max_deviation=dev, normalization_error=norm)


def test_ac9_joint_qp_measurement():
    g = jointqp.default_grid(128)
    anc = jointqp.AncillaPacket(1.0, g)
    ts = mepacket.quantum_state(mepacket.MEPacketParams(2.0, 1.0, 0.8, 1.0), "grid", grid=g).state
    levels = jointqp.convergence_study(ts, anc, widths=(8, 4, 2, 1))
    sums = max(abs(lv.p_exact.sum() - 1) for lv in levels)
    raw = [lv.err_raw for lv in levels]
    worst = 0.0
    for a, b in [(0.0, 0.0), (1.3, -0.7), (-2.5, 1.9)]:
        m = anc.displaced(a, b).moments()
        want = {"Q": a, "P": -b, "dQ": 1 / math.sqrt(2), "dP": 1 / math.sqrt(2)}
        worst = max(worst, max(abs(m[k] - want[k]) for k in want))
    report("AC9", {"normalization": sums < 1e-8,
                   "monotone": all(x > y for x, y in zip(raw, raw[1:])),
                   "ancilla moments": worst < 1e-6},
           sum_error=sums, errors=[f"{x:.2e}" for x in raw], moment_error=worst)


def test_ac10_classical_limit():
    rows = {r[0]: r for r in mepacket.classical_limit_report([3.0, 10.0, 100.0, 1e4, 1e8])}
    devs = [rows[k][3] for k in sorted(rows)]
    report("AC10", {"nu=100": rows[100.0][3] < 2e-5, "nu=3": rows[3.0][3] < 0.021,
                    "monotone": all(x > y for x, y in zip(devs, devs[1:])),
                    "limit": abs(rows[1e8][2] - 1) < 1e-12},
           dev_100=rows[100.0][3], dev_3=rows[3.0][3])


def test_ac11_property_suites():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    n = 100
    sub = unc = add = sym = gem = 0
    for _ in range(n):
        d1, d2 = int(rng.integers(2, 4)), int(rng.integers(2, 4))
        w = hilbert.make_state(hilbert.random_density(d1 * d2, rng), hilbert.space(d1, d2))
        s = hilbert.von_neumann_entropy(w)
        s1 = hilbert.von_neumann_entropy(hilbert.partial_trace(w, [0]))
        s2 = hilbert.von_neumann_entropy(hilbert.partial_trace(w, [1]))
        sub += s <= s1 + s2 + 1e-12

        d = int(rng.integers(2, 6))
        t = hilbert.random_density(d, rng)
        unc += povm.uncertainty_check(hilbert.random_hermitian(d, rng), hilbert.random_hermitian(d, rng), t)[2]

        meas = povm.sharp_from_observable(hilbert.random_hermitian(d, rng))
        outs = list(meas.outcomes)
        pick = [o for o in outs if rng.random() < 0.5]
        rest = [o for o in outs if o not in pick]
        p_union = povm.probability(meas, t, outs)
        p_sum = povm.probability(meas, t, pick) + povm.probability(meas, t, rest)
        add += abs(p_union - p_sum) < 1e-12 and abs(p_union - 1) < 1e-12

        k, dd = int(rng.integers(2, 4)), int(rng.integers(2, 4))
        kind = "symmetric" if rng.random() < 0.5 else "antisymmetric"
        p = hilbert.symmetrizer(k, dd, kind).matrix
        sym += np.max(np.abs(p @ p - p)) < 1e-12

        comps = [hilbert.make_state(hilbert.random_density(d, rng)) for _ in range(3)]
        mix = hilbert.mixture(list(rng.dirichlet(np.ones(3))), comps)
        ev = mix.evolve(hilbert.random_unitary(d, rng))
        rec = sum(wk * c.matrix for wk, c in ev.gemenge)
        gem += np.max(np.abs(rec - ev.matrix)) < 1e-12
    elapsed = time.perf_counter() - t0
    report("AC11", {"subadditivity": sub == n, "uncertainty": unc == n, "additivity": add == n,
                    "symmetrizer": sym == n, "gemenge": gem == n, "runtime": elapsed < 60},
           instances=n, seconds=elapsed)
