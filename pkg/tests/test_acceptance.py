"""Acceptance checks.  Each test prints one PASS/FAIL line, then asserts.

Run directly (``python3 tests/test_acceptance.py``) for just the summary lines.
"""

import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from mflab.dilation import commuting_pair, halmos_dilate, random_dilation_input, sqrt_poly_approx
from mflab.groups import BUILTIN_COSETS, coset_decompose, cyclic_group, freeness_witness, fuzz_freeness, \
    perm_identity, random_perm, reconstruct, symmetric_group
from mflab.matcore import MatTuple, haar_unitary, op_norm, unitarity_residual
from mflab.mfcheck import ball_bounds
from mflab.ncpoly import adjoint, evaluate, format_poly, parse, random_poly
from mflab.pvcrossed import (build_crossed_model, finite_group_crossed, gauge_action, orbit_model,
                             phase_conjugators, pv_frame, standard_conjugators)

PV_FROZEN = {4: 0.3826834323650899, 8: 0.19509032201612836, 16: 0.09801714032956073,
             32: 0.04906767432741812, 64: 0.024541228522912416, 128: 0.012271538285720284,
             256: 0.006135884649154782}
BALL_F2_R10 = 3.3617818792328826
# gauge demo, theta = 0.3, base dim 8: (intertwining defect, circle deviation) per n_j
GAUGE_FROZEN = {16: (1.1699098112892676, 0.009630546655606365),
                32: (1.8998218541398408, 0.002409087589655412),
                64: (1.175216444727668, 0.0006023626075915001)}
KESTEN_F2 = 2 * math.sqrt(3)


def announce(num, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {num:>3} {title}: {detail}"
    with _capture_off():
        print(line, flush=True)
    return ok


class _capture_off:
    """Temporarily bypass pytest's output capture so the summary line always shows."""

    manager = None

    def __enter__(self):
        if self.manager is not None:
            self.manager.suspend_global_capture(in_=False)

    def __exit__(self, *exc):
        if self.manager is not None:
            self.manager.resume_global_capture()


@pytest.fixture(autouse=True)
def _capture_manager(request):
    _capture_off.manager = request.config.pluginmanager.getplugin("capturemanager")
    yield
    _capture_off.manager = None


def test_01_halmos_unitarity():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst, count = 0.0, 0
    for d in range(1, 65):
        for _ in range(4):
            big = haar_unitary(d + int(rng.integers(1, d + 2)), rng)
            a = big[:d, :d]
            worst = max(worst, unitarity_residual(halmos_dilate(a)))
            count += 1
    elapsed = time.perf_counter() - t0
    ok = count >= 200 and worst <= 1e-8 and elapsed < 10
    announce(1, "Halmos dilation unitarity", ok, f"{count} contractions, max residual {worst:.2e}, {elapsed:.2f}s")
    assert ok


def test_02_commuting_pair_bound():
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    trials, violations, worst_ratio = 0, 0, 0.0
    for i in range(120):
        dim = int(rng.choice([4, 8, 12, 16, 24, 32]))
        delta = float(rng.choice([0.1, 0.01]))
        inp = random_dilation_input(dim, int(rng.integers(1, 4)), int(rng.integers(1, 4)), seed=int(rng.integers(2**31)),
                                    perturb=float(rng.choice([0.0, 1e-3, 1e-2, 3e-2])))
        res = commuting_pair(inp, delta)
        expected = 4 * res.t_measured + 2 * res.t_measured * sqrt_poly_approx(delta / 4).D_delta + delta
        assert res.bound == pytest.approx(expected, rel=1e-12)
        violations += int(np.sum(res.commutators > res.bound))
        worst_ratio = max(worst_ratio, res.max_commutator / res.bound)
        trials += 1
    elapsed = time.perf_counter() - t0
    ok = trials >= 100 and violations == 0 and elapsed < 30
    announce(2, "commuting_pair bound", ok,
             f"{trials} trials, {violations} violations, max measured/bound {worst_ratio:.3g}, {elapsed:.2f}s")
    assert ok


def test_03_pv_decay():
    t0 = time.perf_counter()
    ns = sorted(PV_FROZEN)
    vals = [pv_frame(n).commutator_norm for n in ns]
    elapsed = time.perf_counter() - t0
    decreasing = all(b < a for a, b in zip(vals, vals[1:]))
    below = all(v <= math.pi / n for v, n in zip(vals, ns))
    frozen = all(abs(v - PV_FROZEN[n]) <= 1e-12 for v, n in zip(vals, ns))
    ok = decreasing and below and frozen and elapsed < 60
    announce(3, "PV frame decay", ok, f"n_j=4..256 decreasing={decreasing}, <=pi/n={below}, "
             f"frozen match={frozen}, value(256)={vals[-1]:.6g}, {elapsed:.2f}s")
    assert ok


def test_04_truncated_shift():
    from mflab.pvcrossed import truncated_shift
    t0 = time.perf_counter()
    p = parse("X1 + X1'", 1)
    errs, devs = [], {}
    for N in (8, 32, 64):
        dev = abs(op_norm(evaluate(p, [truncated_shift(N)])) - 2)
        devs[N] = dev
        errs.append(abs(dev - (2 - 2 * math.cos(math.pi / (N + 1)))))
    elapsed = time.perf_counter() - t0
    ok = max(errs) <= 1e-9 and devs[64] <= 0.01 and elapsed < 5
    announce(4, "shift truncation convergence", ok,
             f"max closed-form error {max(errs):.1e}, deviation(64)={devs[64]:.6f}, {elapsed:.2f}s")
    assert ok


def test_05_ball_bounds():
    t0 = time.perf_counter()
    bounds = ball_bounds(parse("X1 + X1' + X2 + X2'", 2), range(1, 11))
    elapsed = time.perf_counter() - t0
    vals = [b.lower for b in bounds]
    mono = all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
    capped = max(vals) <= KESTEN_F2 + 1e-6
    r10 = vals[-1]
    ok = mono and capped and r10 >= 3.3 and abs(r10 - BALL_F2_R10) <= 1e-9 and elapsed < 120
    announce(5, "Cayley-ball lower bounds", ok, f"monotone={mono}, max {max(vals):.6f} <= 2sqrt3={capped}, "
             f"r=10 value {r10:.10f} (frozen {BALL_F2_R10:.10f}), {elapsed:.2f}s")
    assert ok


def test_06_covariance():
    t0 = time.perf_counter()
    rng = np.random.default_rng(606)
    cases = [("Z2, Ad diag(1,-1)", finite_group_crossed(2, cyclic_group(2), phase_conjugators(2, [1, -1]))),
             ("S3, permutation conjugators", finite_group_crossed(2, symmetric_group(3), standard_conjugators(3)))]
    worst = {}
    for name, rep in cases:
        w = 0.0
        for _ in range(100):
            a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
            w = max(w, rep.covariance_residual(a))
        worst[name] = w
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-12 and elapsed < 5
    announce(6, "covariance identity", ok,
             ", ".join(f"{k}: {v:.1e}" for k, v in worst.items()) + f", {elapsed:.2f}s")
    assert ok


def test_07_coset_reconstruction():
    t0 = time.perf_counter()
    rng = np.random.default_rng(707)
    bad, checks = 0, 0
    for name in ("z-2z", "f2-s2"):
        sys_ = BUILTIN_COSETS[name]()
        G = sys_.group
        for _ in range(1000):
            g = G.random(rng)
            dec = coset_decompose(sys_, g)
            for i in range(1, sys_.index + 1):
                checks += 1
                bad += not (G.eq(reconstruct(sys_, dec, i), g) and sys_.member(dec.hs[i - 1]))
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and elapsed < 5
    announce(7, "coset reconstruction", ok, f"{checks} reconstructions, {bad} mismatches, {elapsed:.2f}s")
    assert ok


def _literal_instance(rng):
    # betas sampled directly: every beta nonidentity, neighbours distinct
    while True:
        n = int(rng.integers(2, 5))
        m = int(rng.integers(1, 5))
        if n == 2 and m > 2:
            continue  # S_2 has one nonidentity element
        ident = perm_identity(n)
        betas = []
        while len(betas) < m - 1:
            b = random_perm(rng, n)
            if b != ident and (not betas or b != betas[-1]):
                betas.append(b)
        exps = [int(x) for x in rng.integers(1, 4, size=m) * rng.choice([-1, 1], size=m)]
        return n, exps, betas


def test_08_freeness_fuzz():
    t0 = time.perf_counter()
    rep = fuzz_freeness(1000, seed=808, n=(2, 3, 4), m=(1, 2, 3, 4), exp_max=3)
    rng = np.random.default_rng(809)
    literal_fail = 0
    for _ in range(1000):
        n, exps, betas = _literal_instance(rng)
        w = freeness_witness(n, exps, betas)
        literal_fail += not (w.nonidentity and w.suffix_ok)
    elapsed = time.perf_counter() - t0
    ok = not rep.failures and literal_fail == 0 and elapsed < 10
    announce(8, "freeness fuzz", ok, f"1000 prefix-product instances: {len(rep.failures)} failures "
             f"({rep.suffix_matched}/{rep.suffix_checked} suffixes); 1000 direct-beta instances: "
             f"{literal_fail} failures, {elapsed:.2f}s")
    assert ok


def _gauge_demo(theta, ns, dim=8, seed=909):
    rng = np.random.default_rng(seed)
    base = MatTuple((haar_unitary(dim, rng),))
    orbit = orbit_model(base, gauge_action(theta, base), max(ns))
    G = [parse("X1 + X1'", 1)]
    out = {}
    for n in ns:
        rep = build_crossed_model(orbit, pv_frame(n), polys_G=G).epsilon_report
        out[n] = (rep["intertwine"], rep["circle"][0]["deviation"])
    return out


def test_09_gauge_demo():
    t0 = time.perf_counter()
    ns = (16, 32, 64)
    vals = _gauge_demo(0.3, ns)
    elapsed = time.perf_counter() - t0
    d1 = [vals[n][0] for n in ns]
    d2 = [vals[n][1] for n in ns]
    frozen = all(abs(vals[n][k] - GAUGE_FROZEN[n][k]) <= 1e-9 for n in ns for k in (0, 1))
    dec1 = all(b < a for a, b in zip(d1, d1[1:]))
    dec2 = all(b < a for a, b in zip(d2, d2[1:]))
    ok = dec1 and dec2 and frozen and elapsed < 60
    announce(9, "gauge demo theta=0.3", ok,
             f"(i) intertwine {', '.join(f'{v:.4f}' for v in d1)} decreasing={dec1}; "
             f"(ii) circle deviation {', '.join(f'{v:.2e}' for v in d2)} decreasing={dec2}; "
             f"frozen match={frozen}, {elapsed:.2f}s")
    assert ok


def test_09s_gauge_demo_convergents():
    # supplementary: an irrational angle sampled along its convergent denominators
    theta = (math.sqrt(5) - 1) / 2
    ns = (13, 21, 34, 55, 89)
    vals = _gauge_demo(theta, ns)
    d1 = [vals[n][0] for n in ns]
    d2 = [vals[n][1] for n in ns]
    ok = all(b < a for a, b in zip(d1, d1[1:])) and all(b < a for a, b in zip(d2, d2[1:]))
    announce("9s", "gauge demo golden angle, Fibonacci n_j", ok,
             f"(i) {', '.join(f'{v:.4f}' for v in d1)}; (ii) {', '.join(f'{v:.2e}' for v in d2)}")
    assert ok


def test_10_polynomial_properties():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1010)
    model = [haar_unitary(3, rng), rng.standard_normal((3, 3)) / 2, haar_unitary(3, rng)]
    failures = 0
    for _ in range(10_000):
        p = random_poly(rng, 3, 3, 4)
        q = random_poly(rng, 3, 2, 3)
        failures += parse(format_poly(p), 3) != p
        ep, eq = evaluate(p, model), evaluate(q, model)
        scale = 1 + np.abs(ep).max() + np.abs(eq).max()
        failures += not np.allclose(evaluate(p + q, model), ep + eq, rtol=0, atol=1e-10 * scale)
        failures += not np.allclose(evaluate(p * q, model), ep @ eq, rtol=0, atol=1e-10 * scale ** 2)
        failures += not np.allclose(evaluate(adjoint(p), model), ep.conj().T, rtol=0, atol=1e-10 * scale)
    elapsed = time.perf_counter() - t0
    ok = failures == 0 and elapsed < 10
    announce(10, "polynomial round-trip and homomorphism", ok,
             f"10000 polynomials, {failures} failures, {elapsed:.2f}s")
    assert ok


CLI_SCENARIOS = [
    ["dilate", "--random", "dim=16,n=2,m=2,seed=5", "--delta", "0.1", "--include-matrices"],
    ["pv", "--nj", "4,8,16,32,64,128,256"],
    ["crossed", "--theta", "0.3", "--nj", "16,32,64", "--dim", "8", "--seed", "5"],
    ["finite-crossed", "--group", "S3", "--seed", "3"],
    ["finite-crossed", "--group", "Z2", "--seed", "3"],
    ["freeness", "--n", "2", "--m", "3", "--trials", "1000", "--seed", "7"],
    ["coset", "--example", "z-2z", "--g", "t^5"],
    ["coset", "--example", "f2-s2", "--g", "g1^2*g2^-1;21"],
    ["norm", "--oracle", "circle", "--poly", "X1+X1'"],
    ["norm", "--oracle", "torus", "--m", "2", "--poly", "X1+X2+X1*X2"],
    ["ball", "--n", "2", "--poly", "X1+X1'+X2+X2'", "--radius", "8"],
]


def test_11_cli_determinism(tmp_path):
    env = dict(os.environ)
    mismatched, codes = [], []
    for k, argv in enumerate(CLI_SCENARIOS):
        outs = []
        for run in range(2):
            target = tmp_path / f"s{k}_{run}.json"
            proc = subprocess.run([sys.executable, "-m", "mflab.cli", *argv, "-o", str(target)],
                                  env=env, capture_output=True, text=True)
            codes.append(proc.returncode)
            outs.append(target.read_bytes() if target.exists() else None)
        if outs[0] is None or outs[0] != outs[1]:
            mismatched.append(argv[0])
    ok = not mismatched and all(c == 0 for c in codes)
    announce(11, "CLI byte determinism", ok,
             f"{len(CLI_SCENARIOS)} scenarios x 2 runs, mismatches: {mismatched or 'none'}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
