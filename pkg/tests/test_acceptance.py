"""Acceptance criteria, one test per criterion, each recording a pass/fail line.

The lines are collected in ``conftest.ACCEPTANCE_LINES`` and printed in the
terminal summary, so ``pytest tests/test_acceptance.py`` ends with a table.
"""
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from qkdlab import qstate
from qkdlab.adversary import CARRIER, Strategy, infer_key, new_eve
from qkdlab.analysis import (
    AppendixObjective,
    appendix_search,
    d1_formula,
    d2_formula,
    exact_round_error,
    exact_round_errors,
    regression_states,
    solve_theta0,
)
from qkdlab.protocol import (
    CARRIER_POSITION,
    ProtocolConfig,
    execute_steps,
    initial_state,
    random_key,
    round_steps,
    run_session,
)

PI4 = math.pi / 4
PI8 = math.pi / 8


def report(tag, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {tag:<4} {detail}")
    assert ok, detail


def test_c1_state_regression():
    rep = regression_states(PI4)
    ok = rep.ok and rep.stages_checked >= 672 and rep.worst_fidelity >= 1 - 1e-12
    report("1", ok, f"state regression: {rep.stages_checked} stage checks, "
                    f"worst fidelity {rep.worst_fidelity:.16f}")


def test_c2_undetectable_attack():
    failures = []
    for seed in range(20):
        key = random_key(101, 1000 + seed)
        res = run_session(ProtocolConfig(theta=PI4, rounds=101, seed=seed, strategy=Strategy.S2), key)
        want = [(r, key[r - 1] ^ key[0]) for r in range(3, 102, 2)]
        if res.qber != 0 or res.eve_records != want:
            failures.append(seed)
    report("2", not failures, f"S2 at pi/4: 20 keys x 101 rounds, QBER 0 and 50 exact records "
                              f"(failing seeds: {failures or 'none'})")


def test_c3_half_key_inference():
    acc = []
    for seed in range(200):
        key = random_key(101, seed)
        res = run_session(ProtocolConfig(theta=PI4, rounds=101, seed=seed, check_fraction=0.1,
                                         strategy=Strategy.S2), key)
        acc.append(infer_key(res.eve_records, res.detection.leaked_bits, key).accuracy)
    mean = float(np.mean(acc))
    report("3", 0.45 <= mean <= 0.55, f"half-key inference: mean accuracy {mean:.4f} "
                                      f"over 200 sessions (band [0.45, 0.55])")


def test_c4_d1_exact():
    grid = np.linspace(0, math.pi, 32)
    worst = 0.0
    for theta in grid:
        for bits in ((0, 0), (0, 1), (1, 0), (1, 1)):
            worst = max(worst, abs(exact_round_error(Strategy.S1, theta, 2, bits) - d1_formula(theta)))
    at_pi4 = exact_round_error(Strategy.S1, PI4, 2, (0, 1))
    ok = worst <= 1e-12 and abs(at_pi4 - 0.5) <= 1e-12
    report("4", ok, f"S1 round-2 error vs 2c^2s^2: max deviation {worst:.2e} on 32 angles, "
                    f"at pi/4 {at_pi4!r}")


def test_c5_tradeoff_identity():
    thetas = np.random.default_rng(5).uniform(-2 * math.pi, 2 * math.pi, 1000)
    worst = max(abs(d1_formula(t) + d2_formula(t) - 0.5) for t in thetas)
    t0 = solve_theta0()
    ok = (worst <= 1e-15 and abs(t0 - PI8) <= 1e-12
          and abs(d1_formula(t0) - 0.25) <= 1e-12 and abs(d2_formula(t0) - 0.25) <= 1e-12)
    report("5", ok, f"d1+d2=1/2: max deviation {worst:.2e}; theta0 - pi/8 = {t0 - PI8:.2e}")


def test_c6_s2_endpoints():
    key = (1, 0, 1, 1, 0, 1, 0, 0, 1)
    at_pi4 = max(max(exact_round_errors(Strategy.S2, PI4, key)),
                 max(exact_round_errors(Strategy.S2, PI4, (0,) * 9)))
    at_pi8 = [exact_round_error(Strategy.S2, PI8, r, key[:r]) for r in range(2, 6)]
    ok = at_pi4 <= 1e-12 and max(at_pi8) >= 1e-3
    report("6", ok, f"S2 disturbance: max {at_pi4:.1e} at pi/4 (rounds 1-9); "
                    f"rounds 2-5 at pi/8 {[round(x, 5) for x in at_pi8]}")


@pytest.fixture(scope="module")
def searches():
    return {name: appendix_search(theta, restarts=20, max_iters=2000, seed=0)
            for name, theta in (("pi/4", PI4), ("pi/8", PI8), ("0", 0.0))}


def test_c7a_appendix_quarter_pi(searches):
    best = searches["pi/4"].best_disturbance
    report("7a", best <= 1e-6, f"appendix search at pi/4: best disturbance {best:.2e} (need <= 1e-6)")


def test_c7b_appendix_eighth_pi(searches):
    best = searches["pi/8"].best_disturbance
    report("7b", best >= 1e-3, f"appendix search at pi/8: best disturbance {best:.6f} (need >= 1e-3)")


def test_c7c_appendix_zero(searches):
    # U = I already gives zero misreads at theta = 0, so the bound cannot hold
    best = searches["0"].best_disturbance
    report("7c", best >= 1e-3, f"appendix search at 0: best disturbance {best:.2e} (need >= 1e-3)")


def test_c7d_identity_objective():
    worst = max(abs(AppendixObjective(t)(np.zeros(16)) - d1_formula(t))
                for t in np.linspace(0, math.pi, 17))
    report("7d", worst <= 1e-12, f"objective at U=I vs d1: max deviation {worst:.2e}")


def _carrier_in_flight(theta, bit):
    eve = new_eve(Strategy.NONE)
    eve.begin_round()
    steps = round_steps(theta, eve, bit)
    _, snaps, _ = execute_steps(initial_state(Strategy.NONE), steps, np.random.default_rng(0))
    stages = [st for tag, st in snaps if tag == "stage"]
    # second marked stage: carrier encoded by Alice, not yet touched by Bob
    return stages[1]


def test_c8_channel_indistinguishable():
    worst = 0.0
    for theta in np.linspace(0, 7 * math.pi / 8, 8):
        for bit in (0, 1):
            st = _carrier_in_flight(theta, bit)
            assert st.labels[CARRIER_POSITION] == CARRIER
            rho = qstate.reduced_density(st, [CARRIER])
            worst = max(worst, float(np.max(np.abs(rho - np.eye(2) / 2))))
    report("8", worst <= 1e-12, f"carrier density vs I/2: max entry deviation {worst:.1e} "
                                f"(8 angles x 2 bits)")


def _cli(args, threads):
    env = dict(os.environ, OPENBLAS_NUM_THREADS=str(threads), OMP_NUM_THREADS=str(threads),
               MKL_NUM_THREADS=str(threads))
    env.pop("QKDLAB_SEED", None)
    out = subprocess.run([sys.executable, "-m", "qkdlab.cli", *args], env=env,
                         capture_output=True, check=True)
    return out.stdout


def test_c9_determinism():
    run = ["run", "--strategy", "s2", "--theta-deg", "30", "--rounds", "101",
           "--check-fraction", "0.1", "--seed", "42"]
    search = ["appendix-search", "--theta-deg", "22.5", "--restarts", "8",
              "--max-iters", "500", "--seed", "42"]
    outputs = {
        "run": [_cli(run, 1), _cli(run, 1), _cli(run, 4)],
        "appendix-search": [_cli(search + ["--workers", "1"], 1),
                            _cli(search + ["--workers", "1"], 1),
                            _cli(search + ["--workers", "4"], 4)],
    }
    same = {k: len(set(v)) == 1 and v[0] for k, v in outputs.items()}
    report("9", all(same.values()), "byte-identical output, repeated and 1 vs 4 threads: "
                                    + ", ".join(f"{k} {'ok' if v else 'differs'}" for k, v in same.items()))
