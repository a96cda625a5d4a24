"""End-to-end acceptance checks, one test per criterion, at the stated tolerances."""

import io
import json
import math
import time

import numpy as np

from sixstate import cli
from sixstate.collective import (
    bb84_ie,
    bb84_pe,
    helstrom_mc,
    ie_closed_form,
    ie_curve,
    make_params,
    pe_curve,
    probe_conditionals,
    symmetry_table,
    verify_bruss,
)
from sixstate.e91 import (
    PAULI,
    attacked_singlet_via_isometry,
    canned_distributions,
    collective_e91_s,
    hv_full_simulation,
    hv_sbar,
    singlet_correlation_mc,
    singlet_correlation_quantum,
)
from sixstate.intercept_resend import P_OPT, bb84_breidbart_constants, symmetric_betas
from sixstate.protocol import attack_registry, run_session, scheme_config
from sixstate.quantum import make_rng

ROUNDS = 1_000_000


def _cli(argv):
    out = io.StringIO()
    code = cli.main(argv, out=out)
    return code, out.getvalue()


def _nsigma(est, ref, n):
    se = math.sqrt(ref * (1 - ref) / n)
    return abs(est - ref) / se if se > 0 else (0.0 if est == ref else math.inf)


def test_1_intercept_resend_optimum(criterion):
    t0 = time.perf_counter()
    code, text = _cli(["ir", "solve"])
    elapsed = time.perf_counter() - t0
    sols = json.loads(text)["solutions"]
    beta_opt = 2 * math.acos(math.sqrt((3 + math.sqrt(3)) / 6))
    targets = [(math.pi / 4, beta_opt), (5 * math.pi / 4, symmetric_betas()[3][1])]
    worst = 0.0
    found = 0
    for alpha, beta in targets:
        for s in sols:
            if abs(s["alpha"] - alpha) < 1e-10 and abs(s["beta"] - beta) < 1e-10 and s["optimal"]:
                found += 1
                worst = max(worst, abs(s["p"] - (3 + math.sqrt(3)) / 6), abs(s["q"] - 2 / 3))
    ok = code == 0 and found == 2 and worst < 1e-12 and elapsed < 1.0
    criterion(1, "intercept/resend optimum", ok,
              f"found {found}/2 optimal roots, max |err| {worst:.1e}, {elapsed:.3f} s")


def test_2_intercept_resend_mc(criterion):
    t0 = time.perf_counter()
    alpha, beta = symmetric_betas()[1]
    s = run_session(scheme_config("six-state"), attack_registry("intercept-resend", alpha=alpha, beta=beta),
                    ROUNDS, seed=2024)
    elapsed = time.perf_counter() - t0
    z_eve = _nsigma(s.eve_accuracy, P_OPT, s.sifted)
    z_q = _nsigma(s.q_ab, 2 / 3, s.sifted)
    ok = z_eve <= 4 and z_q <= 4 and elapsed < 30
    criterion(2, "intercept/resend Monte Carlo", ok,
              f"eve {s.eve_accuracy:.5f} ({z_eve:.2f} sigma), q_ab {s.q_ab:.5f} ({z_q:.2f} sigma), "
              f"{s.sifted} sifted, {elapsed:.1f} s")


def test_3_bb84_comparison(criterion):
    p, q = bb84_breidbart_constants()
    exact = p == (2 + math.sqrt(2)) / 4 and q == 3 / 4
    grid = np.linspace(0, 0.5, 1001)
    bad = [d for d in grid if pe_curve(d) > bb84_pe(d) or ie_curve(d) > bb84_ie(d)]
    ok = exact and not bad
    criterion(3, "BB84 constants and dominance", ok,
              f"constants exact={exact}, dominance violations {len(bad)}/1001")


def test_4_collective_constraints(criterion):
    t0 = time.perf_counter()
    worst = 0.0
    for theta in np.linspace(0, math.pi / 2, 50):
        p = make_params(theta=theta)
        worst = max(worst, verify_bruss(p).max_residual)
        table = symmetry_table(p)
        worst = max(worst, float(np.abs(table - table[2]).max()))
        for t in "xyz":
            c = probe_conditionals(p, t)
            worst = max(worst, abs(np.vdot(c.e[0, 0], c.e[1, 1]) - p.fidelity * math.cos(theta)))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-12 and elapsed < 5
    criterion(4, "collective constraint suite", ok, f"max residual {worst:.1e}, {elapsed:.2f} s")


def test_5_helstrom_attainment(criterion):
    t0 = time.perf_counter()
    parts, ok = [], True
    for k, d in enumerate((0.05, 1 / 6, 0.3, 0.5)):
        correct, n = helstrom_mc(make_params(disturbance=d), ROUNDS, make_rng(500 + k))
        z = _nsigma(correct / n, pe_curve(d), n)
        ok &= z <= 4
        parts.append(f"D={d:.3g}: {correct / n:.5f} ({z:.2f} sigma)")
    exact = abs(pe_curve(1 / 6) - 5 / 6) < 1e-15
    elapsed = time.perf_counter() - t0
    ok = ok and exact and elapsed < 120
    criterion(5, "Helstrom attainment", ok, "; ".join(parts) + f"; pe(1/6)=5/6: {exact}; {elapsed:.1f} s")


def test_6_shannon_dual_formula(criterion):
    grid = np.linspace(0, 0.5, 1001)[1:-1]
    gap = max(abs(ie_curve(d) - ie_closed_form(d)) for d in grid)
    ends = (ie_curve(0.0), ie_curve(0.5))
    ok = len(grid) == 999 and gap < 1e-9 and abs(ends[0]) < 1e-12 and abs(ends[1] - 1) < 1e-12
    criterion(6, "Shannon information dual formulas", ok,
              f"max gap {gap:.1e} on {len(grid)} points, endpoints ({ends[0]:.3g}, {ends[1]:.3g})")


def test_7_e91_quantum_value(criterion):
    exact = singlet_correlation_quantum()
    mc = singlet_correlation_mc(ROUNDS, seed=77)
    tol = 4 * mc.s_error if mc.s_error > 0 else 1e-12
    ok = abs(exact.s - 3) < 1e-12 and abs(mc.s - 3) <= tol
    criterion(7, "E91 quantum value", ok, f"exact S={exact.s:.15g}, MC S={mc.s:.6f} +/- {mc.s_error:.1e}")


def test_8_hidden_variable_ceiling(criterion):
    parts, ok = [], True
    for k, (name, (dist, expected)) in enumerate(sorted(canned_distributions().items())):
        formula = hv_sbar(dist, "mc", rounds=ROUNDS, seed=800 + k)
        rep = hv_full_simulation(dist, ROUNDS, seed=800 + k)
        # Point-mass laws have zero variance; allow float rounding on the sum.
        ok &= formula.s <= 1 + 4 * formula.s_error + 1e-12 and rep.s <= 1 + 4 * rep.s_error + 1e-12
        parts.append(f"{name} {formula.s:.4f}/{rep.s:.4f}")
    one_sided = hv_sbar(canned_distributions()["one-sided-uniform"][0], "exact")
    ok = ok and one_sided.s == 1.0
    criterion(8, "hidden-variable ceiling", ok,
              "integrand/operational S: " + "; ".join(parts) + f"; one-sided exact {one_sided.s}")


def test_9_collective_non_classicality(criterion):
    grid = np.linspace(0, 0.5, 1001)
    gap = max(abs(collective_e91_s(d) - 3 * (1 - 2 * d)) for d in grid)
    # Second path: isometry applied to Bob's half, probe traced out.
    iso_gap = 0.0
    for d in grid[::50]:
        rho = attacked_singlet_via_isometry(d)
        s = sum(abs(np.trace(rho @ np.kron(PAULI[t], PAULI[t])).real) for t in "xyz")
        iso_gap = max(iso_gap, abs(s - 3 * (1 - 2 * d)))
    crossing = abs(collective_e91_s(1 / 3) - 1)
    threshold = all((collective_e91_s(d) > 1) == (d < 1 / 3) for d in grid)
    ok = gap < 1e-12 and iso_gap < 1e-12 and crossing < 1e-12 and threshold
    criterion(9, "collective non-classicality", ok,
              f"max gap {gap:.1e}, isometry path {iso_gap:.1e}, |S(1/3)-1|={crossing:.1e}")


def test_10_sift_rates(criterion):
    six = run_session(scheme_config("six-state"), None, ROUNDS, seed=10)
    bb = run_session(scheme_config("bb84"), None, ROUNDS, seed=11)
    z6 = _nsigma(six.sift_rate, 1 / 3, ROUNDS)
    zb = _nsigma(bb.sift_rate, 1 / 2, ROUNDS)
    ok = z6 <= 4 and zb <= 4
    criterion(10, "sift rates", ok,
              f"six-state {six.sift_rate:.5f} ({z6:.2f} sigma), BB84 {bb.sift_rate:.5f} ({zb:.2f} sigma)")


def test_11_reproducibility(criterion):
    commands = [
        ["curves", "--steps", "1001"],
        ["ir", "solve"],
        ["ir", "scan"],
        ["verify", "--theta", "1.0471975"],
        ["simulate", "--attack", "collective", "--disturbance", "0.1666667", "--rounds", "300000", "--seed", "3"],
        ["simulate", "--scheme", "bb84", "--attack", "intercept-resend", "--alpha", "0",
         "--beta", "0.7853981633974483", "--rounds", "300000", "--seed", "3"],
        ["e91", "--rounds", "300000", "--seed", "3"],
        ["e91", "--attack", "ir-both", "--rounds", "300000", "--seed", "3"],
        ["e91", "--attack", "ir-bob", "--rounds", "300000", "--seed", "3"],
        ["e91", "--attack", "collective", "--disturbance", "0.1", "--rounds", "300000", "--seed", "3"],
    ]
    mismatched = []
    for argv in commands:
        first = _cli(argv)
        runs = [_cli(argv)]
        if argv[0] in ("simulate", "e91"):
            runs.append(_cli([*argv, "--workers", "4"]))
        if first[0] != 0 or any(r != first for r in runs):
            mismatched.append(" ".join(argv[:3]))
    ok = not mismatched
    criterion(11, "reproducibility", ok,
              f"{len(commands)} commands rerun, parallel variants for simulate/e91, mismatches: {mismatched or 'none'}")
