"""Error-rate formulas, exact disturbance, reference states and the
zero-disturbance feasibility search.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import bisect, minimize

from . import qstate
from .adversary import (
    ALICE,
    BOB,
    CARRIER,
    EVE,
    Strategy,
    StrategyKind,
    UnitaryParams,
    new_eve,
    unitary_from_params,
)
from .errors import ConfigurationError
from .protocol import (
    Branch,
    CARRIER_POSITION,
    branch_steps,
    execute_steps,
    initial_state,
    round_steps,
    stream,
)

MAX_EXACT_ROUNDS = 9
QUARTER_PI = math.pi / 4


# -- closed forms ------------------------------------------------------------

def d1_formula(theta: float) -> float:
    """Disturbance of the uncompensated attack: 2 cos^2 sin^2."""
    c, s = math.cos(theta), math.sin(theta)
    return 2.0 * c * c * s * s


def d2_formula(theta: float) -> float:
    """Disturbance quoted for the compensated attack: (sin^2 - cos^2)^2 / 2."""
    c, s = math.cos(theta), math.sin(theta)
    return 0.5 * (s * s - c * c) ** 2


def solve_theta0(xtol: float = 1e-13) -> float:
    """Angle in (0, pi/4) where both disturbances equal 1/4, by bisection."""
    return bisect(lambda t: d1_formula(t) - 0.25, 0.0, QUARTER_PI, xtol=xtol, rtol=4 * np.finfo(float).eps)


# -- exact per-round disturbance ----------------------------------------------

def _merge(branches: list[Branch]) -> list[Branch]:
    """Collapse branches holding the same pure state (up to phase)."""
    merged: list[Branch] = []
    for br in branches:
        for m in merged:
            if m.state.labels == br.state.labels and \
                    qstate.phase_invariant_fidelity(m.state, br.state) > 1 - 1e-13:
                m.probability += br.probability
                break
        else:
            merged.append(Branch(br.probability, br.state, {}))
    return merged


def exact_round_errors(strategy: StrategyKind, theta: float,
                       psi_bits: Sequence[int]) -> list[float]:
    """Exact Bob error probability of every round 1..len(psi_bits).

    All measurement histories (Eve's and Bob's) are enumerated and weighted
    by their Born probabilities.
    """
    if len(psi_bits) > MAX_EXACT_ROUNDS:
        raise ConfigurationError(
            f"exact analysis supports at most {MAX_EXACT_ROUNDS} rounds, got {len(psi_bits)}")
    eve = new_eve(strategy)
    branches = [Branch(1.0, initial_state(strategy))]
    errors = []
    for bit in psi_bits:
        eve.begin_round()
        branches = branch_steps(branches, round_steps(theta, eve, int(bit)))
        errors.append(float(sum(b.probability for b in branches
                                if b.outcomes["bob"] != bit)))
        branches = _merge(branches)
    return errors


def exact_round_error(strategy: StrategyKind, theta: float, target_round: int,
                      psi_bits: Sequence[int]) -> float:
    """Exact probability that Bob misreads the key bit of ``target_round``."""
    if not 1 <= target_round <= MAX_EXACT_ROUNDS:
        raise ConfigurationError(
            f"target round must be in 1..{MAX_EXACT_ROUNDS}, got {target_round}")
    if len(psi_bits) < target_round:
        raise ConfigurationError(
            f"need {target_round} key bits, got {len(psi_bits)}")
    return exact_round_errors(strategy, theta, psi_bits[:target_round])[-1]


def mean_round_error(strategy: StrategyKind, theta: float, target_round: int) -> float:
    """``exact_round_error`` averaged uniformly over all key prefixes."""
    vals = [exact_round_error(strategy, theta, target_round, bits)
            for bits in itertools.product((0, 1), repeat=target_round)]
    return float(np.mean(vals))


def disturbance_profile(strategy: StrategyKind, theta: float, rounds: int) -> list[float]:
    """Per-round exact disturbance averaged over keys, rounds 1..``rounds``."""
    rows = np.array([exact_round_errors(strategy, theta, bits)
                     for bits in itertools.product((0, 1), repeat=rounds)])
    return [float(v) for v in rows.mean(axis=0)]


# -- sweeps ------------------------------------------------------------------

SWEEP_COLUMNS = ("theta", "d1_formula", "d2_formula", "s1_exact_round2",
                 "s2_exact_first_extraction", "sum_check")


@dataclass
class SweepRow:
    theta: float
    d1_formula: float
    d2_formula: float
    s1_exact_round2: float
    s2_exact_first_extraction: float
    sum_check: float

    def as_tuple(self):
        return tuple(getattr(self, c) for c in SWEEP_COLUMNS)


@dataclass
class SweepResult:
    rows: list[SweepRow]
    s1_round: int = 2
    s2_round: int = 3


def sweep(theta_grid: Sequence[float], rounds_to_probe: tuple[int, int] = (2, 3)) -> SweepResult:
    """Formula values next to exact disturbances, one row per angle.

    ``rounds_to_probe`` is ``(s1_round, s2_round)``; the exact columns are
    averaged uniformly over key prefixes.
    """
    grid = list(theta_grid)
    if not grid:
        raise ConfigurationError("theta grid is empty")
    s1_round, s2_round = rounds_to_probe
    rows = []
    for theta in grid:
        d1, d2 = d1_formula(theta), d2_formula(theta)
        rows.append(SweepRow(
            theta=float(theta),
            d1_formula=d1,
            d2_formula=d2,
            s1_exact_round2=mean_round_error(Strategy.S1, theta, s1_round),
            s2_exact_first_extraction=mean_round_error(Strategy.S2, theta, s2_round),
            sum_check=d1 + d2,
        ))
    return SweepResult(rows, s1_round, s2_round)


# -- reference states at pi/4 ------------------------------------------------

ROUND_STAGES = {
    1: ("Phi", 4),
    2: ("Psi", 4),
    3: ("Omega", 5),
    4: ("Theta", 4),
    5: ("Upsilon", 5),
}


def stage_tags(round_: int) -> list[str]:
    """Every displayed state of a round in causal order."""
    letter, count = ROUND_STAGES[round_]
    return [f"phi{round_}0"] + [f"{letter}{k}" for k in range(count)] + [f"phi{round_}1"]


@dataclass(frozen=True)
class OracleStateId:
    round: int
    stage: str
    psi_bits: tuple[int, ...]

    def validate(self):
        if self.round not in ROUND_STAGES:
            raise ConfigurationError(f"round must be 1..5, got {self.round}")
        if self.stage not in stage_tags(self.round):
            raise ConfigurationError(f"stage {self.stage!r} does not occur in round {self.round}")
        if len(self.psi_bits) < self.round or any(b not in (0, 1) for b in self.psi_bits):
            raise ConfigurationError(
                f"round {self.round} needs key bits psi_1..psi_{self.round}, got {self.psi_bits}")
        return self


ABE = (ALICE, BOB, EVE)
ABCE = (ALICE, BOB, CARRIER, EVE)


def _ket(labels, scale, terms) -> qstate.StateVector:
    amps = np.zeros(2 ** len(labels), dtype=complex)
    for coef, bits in terms:
        amps[int("".join(map(str, bits)), 2)] += coef
    return qstate.StateVector(labels, scale * amps)


def paper_state_oracle(oid: OracleStateId, theta: float = QUARTER_PI) -> qstate.StateVector:
    """Closed-form joint state at a stage of the attack at theta = pi/4.

    Transcribed term by term; three-qubit states are on (A, B, E), four-qubit
    states on (A, B, C, E). Overbars are written ``1 - bit``.
    """
    if not math.isclose(theta, QUARTER_PI, rel_tol=0, abs_tol=1e-15):
        raise ConfigurationError("closed-form reference states exist only at theta = pi/4")
    oid.validate()
    p = list(oid.psi_bits) + [0] * (5 - len(oid.psi_bits))
    p1, p2, p3, p4, p5 = p
    n1, n2, n3, n4, n5 = (1 - b for b in p)
    s = (-1) ** p1
    al, be = 1 + s, 1 - s
    r2, h, k = 1 / math.sqrt(2), 0.5, 1 / (2 * math.sqrt(2))

    table = {
        "phi10": (ABE, r2, [(1, (0, 0, 0)), (1, (1, 1, 0))]),
        "Phi0": (ABCE, r2, [(1, (0, 0, p1, 0)), (1, (1, 1, p1, 0))]),
        "Phi1": (ABCE, r2, [(1, (0, 0, p1, 0)), (1, (1, 1, n1, 0))]),
        "Phi2": (ABCE, r2, [(1, (0, 0, p1, p1)), (1, (1, 1, n1, n1))]),
        "Phi3": (ABCE, r2, [(1, (0, 0, p1, p1)), (1, (1, 1, p1, n1))]),
        "phi11": (ABE, r2, [(1, (0, 0, p1)), (1, (1, 1, n1))]),

        "phi20": (ABE, h, [(1, (0, 0, 0)), (s, (0, 1, 1)), (s, (1, 0, 1)), (1, (1, 1, 0))]),
        "Psi0": (ABCE, h, [(1, (0, 0, p2, 0)), (s, (0, 1, p2, 1)),
                           (s, (1, 0, p2, 1)), (1, (1, 1, p2, 0))]),
        "Psi1": (ABCE, h, [(1, (0, 0, p2, 0)), (s, (0, 1, p2, 1)),
                           (s, (1, 0, n2, 1)), (1, (1, 1, n2, 0))]),
        "Psi2": (ABCE, h, [(1, (0, 0, p2, 0)), (s, (0, 1, n2, 1)),
                           (s, (1, 0, p2, 1)), (1, (1, 1, n2, 0))]),
        "Psi3": (ABCE, h, [(1, (0, 0, p2, 0)), (s, (0, 1, p2, 1)),
                           (s, (1, 0, p2, 1)), (1, (1, 1, p2, 0))]),
        "phi21": (ABE, h, [(1, (0, 0, 0)), (s, (0, 1, 1)), (s, (1, 0, 1)), (1, (1, 1, 0))]),

        "phi30": (ABE, k, [(al, (0, 0, 0)), (-al, (1, 1, 1)), (-be, (0, 0, 1)), (be, (1, 1, 0))]),
        "Omega0": (ABCE, k, [(al, (0, 0, p3, 0)), (-al, (1, 1, p3, 1)),
                             (-be, (0, 0, p3, 1)), (be, (1, 1, p3, 0))]),
        "Omega1": (ABCE, k, [(al, (0, 0, p3, 0)), (-al, (1, 1, n3, 1)),
                             (-be, (0, 0, p3, 1)), (be, (1, 1, n3, 0))]),
        "Omega2": (ABCE, k, [(al, (0, 0, p3, 0)), (-al, (1, 1, p3, 1)),
                             (-be, (0, 0, n3, 1)), (be, (1, 1, n3, 0))]),
        "Omega3": (ABCE, k, [(al, (0, 0, p3, 0)), (-al, (1, 1, n3, 1)),
                             (-be, (0, 0, p3, 1)), (be, (1, 1, n3, 0))]),
        "Omega4": (ABCE, k, [(al, (0, 0, p3, 0)), (-al, (1, 1, p3, 1)),
                             (-be, (0, 0, p3, 1)), (be, (1, 1, p3, 0))]),
        "phi31": (ABE, k, [(al, (0, 0, 0)), (-al, (1, 1, 1)), (-be, (0, 0, 1)), (be, (1, 1, 0))]),

        "phi40": (ABE, -h, [(1, (0, 0, 1)), (s, (0, 1, 0)), (s, (1, 0, 0)), (1, (1, 1, 1))]),
        "Theta0": (ABCE, -h, [(1, (0, 0, p4, 1)), (s, (0, 1, p4, 0)),
                              (s, (1, 0, p4, 0)), (1, (1, 1, p4, 1))]),
        "Theta1": (ABCE, -h, [(1, (0, 0, p4, 1)), (s, (0, 1, p4, 0)),
                              (s, (1, 0, n4, 0)), (1, (1, 1, n4, 1))]),
        "Theta2": (ABCE, -h, [(1, (0, 0, p4, 1)), (s, (0, 1, n4, 0)),
                              (s, (1, 0, p4, 0)), (1, (1, 1, n4, 1))]),
        "Theta3": (ABCE, -h, [(1, (0, 0, p4, 1)), (s, (0, 1, p4, 0)),
                              (s, (1, 0, p4, 0)), (1, (1, 1, p4, 1))]),
        "phi41": (ABE, -h, [(1, (0, 0, 1)), (s, (0, 1, 0)), (s, (1, 0, 0)), (1, (1, 1, 1))]),

        "phi50": (ABE, -k, [(al, (0, 0, 0)), (al, (1, 1, 1)), (be, (0, 0, 1)), (be, (1, 1, 0))]),
        "Upsilon0": (ABCE, -k, [(al, (0, 0, p5, 0)), (al, (1, 1, p5, 1)),
                                (be, (0, 0, p5, 1)), (be, (1, 1, p5, 0))]),
        "Upsilon1": (ABCE, -k, [(al, (0, 0, p5, 0)), (al, (1, 1, n5, 1)),
                                (be, (0, 0, p5, 1)), (be, (1, 1, n5, 0))]),
        "Upsilon2": (ABCE, -k, [(al, (0, 0, p5, 0)), (al, (1, 1, p5, 1)),
                                (be, (0, 0, n5, 1)), (be, (1, 1, n5, 0))]),
        "Upsilon3": (ABCE, -k, [(al, (0, 0, p5, 0)), (al, (1, 1, n5, 1)),
                                (be, (0, 0, p5, 1)), (be, (1, 1, n5, 0))]),
        "Upsilon4": (ABCE, -k, [(al, (0, 0, p5, 0)), (al, (1, 1, p5, 1)),
                                (be, (0, 0, p5, 1)), (be, (1, 1, p5, 0))]),
        "phi51": (ABE, -k, [(al, (0, 0, 0)), (al, (1, 1, 1)), (be, (0, 0, 1)), (be, (1, 1, 0))]),
    }
    labels, scale, terms = table[oid.stage]
    return _ket(labels, scale, terms)


@dataclass
class RegressionReport:
    stages_checked: int
    worst_fidelity: float
    first_mismatch: Optional[dict]
    not_applicable: int = 0
    mismatches: int = 0

    @property
    def ok(self) -> bool:
        return self.first_mismatch is None and self.stages_checked > 0


MUTATIONS = ("skip-eve-rotation",)


def simulate_stages(psi_bits: Sequence[int], theta: float = QUARTER_PI,
                    strategy: StrategyKind = Strategy.S2,
                    mutate: Optional[str] = None, seed: int = 0):
    """Run the attack round by round, yielding ``(round, tag, state)`` for
    every displayed stage."""
    if mutate is not None and mutate not in MUTATIONS:
        raise ConfigurationError(f"unknown mutation {mutate!r}; choose from {MUTATIONS}")
    eve = new_eve(strategy)
    state = initial_state(strategy)
    rng = stream(seed, 0)
    for r, bit in enumerate(psi_bits, start=1):
        eve.begin_round()
        skip = mutate == "skip-eve-rotation" and r == 2
        steps = round_steps(theta, eve, int(bit), eve_rotation=not skip)
        state, snaps, _ = execute_steps(state, steps, rng)
        letter, _ = ROUND_STAGES[r]
        k = 0
        for tag, st in snaps:
            if tag == "stage":
                yield r, f"{letter}{k}", st
                k += 1
            else:
                yield r, f"phi{r}{0 if tag == 'start' else 1}", st


def regression_states(theta: float = QUARTER_PI, mutate: Optional[str] = None,
                      strategy: StrategyKind = Strategy.S2,
                      tol: float = 1e-12) -> RegressionReport:
    """Compare every simulated stage of rounds 1-5 with the closed forms,
    for all 32 key prefixes."""
    worst = 1.0
    checked = skipped = bad = 0
    first = None
    per_prefix = sum(len(stage_tags(r)) for r in ROUND_STAGES)
    for bits in itertools.product((0, 1), repeat=5):
        seen = 0
        for r, tag, st in simulate_stages(bits, theta, strategy, mutate):
            ref = paper_state_oracle(OracleStateId(r, tag, bits), theta)
            if st.labels != ref.labels:
                continue
            seen += 1
            f = qstate.phase_invariant_fidelity(st, ref)
            checked += 1
            worst = min(worst, f)
            if f < 1 - tol:
                bad += 1
                if first is None:
                    first = {"round": r, "stage": tag, "psi_bits": list(bits), "fidelity": f}
        # stages the pipeline never produced, or produced without Eve's qubit
        skipped += per_prefix - seen
    return RegressionReport(checked, worst, first, skipped, bad)


# -- entanglement ------------------------------------------------------------

def eve_entropy(state: qstate.StateVector, eve_labels: Sequence[str] = (EVE,)) -> float:
    """Von Neumann entropy of Eve's reduced state, in bits."""
    return qstate.von_neumann_entropy(qstate.reduced_density(state, eve_labels))


# -- zero-disturbance feasibility search -------------------------------------

def entangled_prestate() -> qstate.StateVector:
    """(|00>|0> + |11>|1>)/sqrt(2) on (A, B, E)."""
    amps = np.zeros(8, dtype=complex)
    amps[0b000] = amps[0b111] = 1 / math.sqrt(2)
    return qstate.StateVector(ABE, amps)


def _encoded_states(theta: float) -> list[qstate.StateVector]:
    """Joint state right after Alice's CNOT, for carrier bit 0 and 1."""
    out = []
    for bit in (0, 1):
        st = entangled_prestate()
        st = qstate.apply_rotation(st, ALICE, theta)
        st = qstate.apply_rotation(st, BOB, theta)
        st = qstate.attach_qubit(st, CARRIER, bit, CARRIER_POSITION)
        out.append(qstate.apply_cnot(st, ALICE, CARRIER))
    return out


_IDX = np.arange(16).reshape(4, 4)
_BOB_BIT = (_IDX >> 2) & 1
_CARRIER_BIT = (_IDX >> 1) & 1
# after Bob's CNOT the carrier reads c XOR b
_MISREAD = [((_CARRIER_BIT ^ _BOB_BIT) != bit).astype(float) for bit in (0, 1)]


class AppendixObjective:
    """Worst-case (over the sent bit) probability that Bob misreads the carrier
    after Eve applies ``U`` to (carrier, ancilla)."""

    def __init__(self, theta: float):
        self.theta = theta
        self.encoded = [s.amps.reshape(4, 4) for s in _encoded_states(theta)]

    def errors_for_unitary(self, u: np.ndarray) -> list[float]:
        return [float(np.sum(np.abs(psi @ u.T) ** 2 * _MISREAD[bit]))
                for bit, psi in enumerate(self.encoded)]

    def __call__(self, values) -> float:
        return max(self.errors_for_unitary(unitary_from_params(values)))


def appendix_round(theta: float, u: np.ndarray, bit: int) -> qstate.StateVector:
    """Full-engine version of one attacked round, up to Bob's CNOT."""
    st = _encoded_states(theta)[bit]
    st = qstate.apply_two_qubit(st, CARRIER, EVE, u)
    return qstate.apply_cnot(st, BOB, CARRIER)


def appendix_error_full(theta: float, u: np.ndarray) -> float:
    """Objective recomputed through the statevector engine (cross-check)."""
    errs = []
    for bit in (0, 1):
        st = appendix_round(theta, u, bit)
        errs.append(sum(p for b, p, _ in qstate.branch_measure_z(st, CARRIER) if b != bit))
    return max(errs)


@dataclass
class FeasibilityReport:
    theta: float
    best_disturbance: float
    best_params: UnitaryParams
    restarts: int
    iterations_used: int
    eve_entropy_after: float
    restart_values: list[float] = field(default_factory=list)


def _one_restart(theta: float, max_iters: int, seed: int, index: int):
    obj = AppendixObjective(theta)
    x0 = stream(seed, index).uniform(-math.pi, math.pi, 16)
    res = minimize(obj, x0, method="Nelder-Mead",
                   options={"maxiter": max_iters, "fatol": 1e-10, "xatol": np.inf,
                            "adaptive": True})
    return float(res.fun), [float(v) for v in res.x], int(res.nit)


def appendix_search(theta: float, restarts: int = 20, max_iters: int = 2000,
                    seed: int = 0, workers: int = 1) -> FeasibilityReport:
    """Search for an Eve unitary that leaves Bob's decoding intact.

    Restart ``i`` starts from a point drawn from stream ``(seed, i)``, so the
    result does not depend on ``workers``.
    """
    if restarts < 1:
        raise ConfigurationError(f"restarts must be >= 1, got {restarts}")
    if max_iters < 1:
        raise ConfigurationError(f"max_iters must be >= 1, got {max_iters}")
    args = [(theta, max_iters, seed, i) for i in range(restarts)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_restart, *zip(*args)))
    else:
        results = [_one_restart(*a) for a in args]

    values = [r[0] for r in results]
    best = int(np.argmin(values))
    params = UnitaryParams(results[best][1])
    u = params.matrix()
    entropy = float(np.mean([eve_entropy(appendix_round(theta, u, b)) for b in (0, 1)]))
    return FeasibilityReport(
        theta=float(theta),
        best_disturbance=values[best],
        best_params=params,
        restarts=restarts,
        iterations_used=sum(r[2] for r in results),
        eve_entropy_after=entropy,
        restart_values=values,
    )
