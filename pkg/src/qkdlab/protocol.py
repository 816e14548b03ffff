"""Quantum-encryption key distribution over one reused Bell pair.

Each round: Alice and Bob rotate their halves of the shared pair by the same
angle, Alice encodes a key bit on a fresh carrier with a CNOT from her half,
the carrier crosses the channel (where Eve may act), Bob decodes with a CNOT
from his half and measures. The pair is kept for the next round.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import qstate
from .adversary import (
    ALICE,
    BOB,
    CARRIER,
    EVE,
    EveState,
    Parametrized,
    Step,
    Strategy,
    StrategyKind,
    channel_program,
    is_attacking,
    new_eve,
    rotation_steps,
)
from .errors import ConfigurationError, InternalConsistencyError

CARRIER_POSITION = 2


class Mode(enum.Enum):
    SAMPLED = "sampled"
    EXACT = "exact"


@dataclass(frozen=True)
class ProtocolConfig:
    theta: float = math.pi / 4
    rounds: int = 1
    check_fraction: float = 0.0
    seed: int = 0
    mode: Mode = Mode.SAMPLED
    strategy: StrategyKind = Strategy.NONE

    def validate(self):
        if not isinstance(self.rounds, (int, np.integer)) or self.rounds < 1:
            raise ConfigurationError(f"rounds must be a positive integer, got {self.rounds!r}")
        if not 0.0 <= self.check_fraction < 1.0:
            raise ConfigurationError(f"check_fraction must be in [0, 1), got {self.check_fraction}")
        if not math.isfinite(self.theta):
            raise ConfigurationError(f"theta must be finite, got {self.theta}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigurationError(f"seed must fit in 64 bits, got {self.seed}")
        if not isinstance(self.strategy, (Strategy, Parametrized)):
            raise ConfigurationError(f"unknown strategy {self.strategy!r}")
        return self


@dataclass
class RoundTranscript:
    index: int
    sent: int
    received: int
    error: bool
    eve_record: Optional[tuple[int, int]] = None
    error_probability: Optional[float] = None


@dataclass
class DetectionReport:
    check_indices: list[int]
    mismatches: int
    leaked_bits: list[tuple[int, int]]


@dataclass
class SessionResult:
    config: ProtocolConfig
    key: list[int]
    transcripts: list[RoundTranscript]
    qber: float
    eve_records: list[tuple[int, int]]
    detection: Optional[DetectionReport] = None


def stream(seed: int, index: int) -> np.random.Generator:
    """Deterministic random stream ``index`` of master ``seed``."""
    return np.random.default_rng([int(seed), int(index)])


# -- step interpreters -------------------------------------------------------

def apply_step(state: qstate.StateVector, step: Step) -> qstate.StateVector:
    op, args = step.op, step.args
    if op == "rot":
        return qstate.apply_rotation(state, *args)
    if op == "x":
        return qstate.apply_x(state, *args)
    if op == "cnot":
        return qstate.apply_cnot(state, *args)
    if op == "unitary":
        return qstate.apply_two_qubit(state, *args)
    if op == "attach":
        return qstate.attach_qubit(state, *args)
    if op == "discard":
        return qstate.discard_qubit(state, *args)
    if op == "snapshot":
        return state
    raise ConfigurationError(f"unknown step {op!r}")


def execute_steps(state, steps: Iterable[Step], rng: Optional[np.random.Generator]):
    """Run ``steps`` along a single measurement history.

    With ``rng`` measurements are sampled; without it every measurement must
    be deterministic. Returns ``(state, snapshots, outcomes)`` where
    ``snapshots`` lists ``(tag, state)`` for marked steps (tag ``"stage"``)
    and snapshot steps (their own tag), and ``outcomes`` maps measurement
    tags to bits.
    """
    snapshots = []
    outcomes = {}
    for step in steps:
        if step.op == "measure":
            label, tag = step.args
            if rng is None:
                branches = qstate.branch_measure_z(state, label)
                if len(branches) != 1:
                    raise InternalConsistencyError(
                        f"measurement of {label!r} is not deterministic; pass an rng")
                bit, _, state = branches[0]
            else:
                bit, state = qstate.measure_z(state, label, rng)
            outcomes[tag] = bit
        else:
            state = apply_step(state, step)
        if step.op == "snapshot":
            snapshots.append((step.args[0], state))
        elif step.mark:
            snapshots.append(("stage", state))
    return state, snapshots, outcomes


@dataclass
class Branch:
    probability: float
    state: qstate.StateVector
    outcomes: dict = field(default_factory=dict)


def branch_steps(branches: Sequence[Branch], steps: Iterable[Step]) -> list[Branch]:
    """Run ``steps`` along every measurement history, keeping the weights."""
    out = list(branches)
    for step in steps:
        if step.op == "measure":
            label, tag = step.args
            nxt = []
            for br in out:
                for bit, p, post in qstate.branch_measure_z(br.state, label):
                    nxt.append(Branch(br.probability * p, post, {**br.outcomes, tag: bit}))
            out = nxt
        else:
            out = [Branch(br.probability, apply_step(br.state, step), br.outcomes)
                   for br in out]
    return out


# -- one round ---------------------------------------------------------------

def round_steps(theta: float, eve: EveState, key_bit: int, *,
                eve_rotation: bool = True) -> list[Step]:
    """The full step list of the current round (``eve.round`` already advanced).

    ``eve_rotation=False`` suppresses Eve's compensating rotation; it exists
    for mutation testing of the state regression.
    """
    steps = [Step("rot", (ALICE, theta)), Step("rot", (BOB, theta))]
    if eve_rotation:
        steps += rotation_steps(eve, theta)
    steps += [
        Step("snapshot", ("start",)),
        Step("attach", (CARRIER, key_bit, CARRIER_POSITION), mark=True),
        Step("cnot", (ALICE, CARRIER), mark=True),
    ]
    steps += channel_program(eve)
    steps += [
        Step("cnot", (BOB, CARRIER), mark=True),
        Step("measure", (CARRIER, "bob")),
        Step("discard", (CARRIER,)),
        Step("snapshot", ("end",)),
    ]
    return steps


def initial_state(strategy: StrategyKind) -> qstate.StateVector:
    state = qstate.make_bell_pair(ALICE, BOB)
    if is_attacking(strategy):
        state = qstate.attach_qubit(state, EVE, 0)
    return state


class Session:
    """One reused Bell pair, driven round by round."""

    def __init__(self, config: ProtocolConfig):
        self.config = config.validate()
        self.state = initial_state(config.strategy)
        self.eve = new_eve(config.strategy)
        self.rng = stream(config.seed, 0)
        self.round = 0
        self.first_bit: Optional[int] = None
        self.transcripts: list[RoundTranscript] = []

    def run_round(self, key_bit: int) -> RoundTranscript:
        if key_bit not in (0, 1):
            raise ConfigurationError(f"key bit must be 0 or 1, got {key_bit!r}")
        self.round += 1
        self.eve.begin_round()
        if self.round == 1:
            self.first_bit = key_bit
        steps = round_steps(self.config.theta, self.eve, key_bit)

        error_probability = None
        if self.config.mode is Mode.EXACT:
            branches = branch_steps([Branch(1.0, self.state)], steps)
            error_probability = sum(b.probability for b in branches
                                    if b.outcomes["bob"] != key_bit)

        self.state, _, outcomes = execute_steps(self.state, steps, self.rng)
        received = outcomes["bob"]
        eve_record = None
        if "eve" in outcomes:
            eve_record = (self.round, outcomes["eve"])
            self.eve.records.append(eve_record)
        t = RoundTranscript(self.round, key_bit, received, key_bit != received,
                            eve_record, error_probability)
        self.transcripts.append(t)
        return t


def init_session(config: ProtocolConfig) -> Session:
    return Session(config)


def run_round(session: Session, key_bit: int) -> RoundTranscript:
    return session.run_round(key_bit)


def run_session(config: ProtocolConfig, key_bits: Sequence[int]) -> SessionResult:
    if len(key_bits) != config.rounds:
        raise ConfigurationError(
            f"{len(key_bits)} key bits for a {config.rounds}-round session")
    session = Session(config)
    for bit in key_bits:
        session.run_round(int(bit))
    errors = sum(t.error for t in session.transcripts)
    result = SessionResult(
        config=config,
        key=[int(b) for b in key_bits],
        transcripts=session.transcripts,
        qber=errors / config.rounds,
        eve_records=list(session.eve.records),
    )
    result.detection = detection_phase(result, stream(config.seed, 1))
    return result


def detection_phase(result: SessionResult, rng: np.random.Generator,
                    check_fraction: Optional[float] = None) -> DetectionReport:
    """Publicly compare a random subset of rounds."""
    frac = result.config.check_fraction if check_fraction is None else check_fraction
    n = len(result.transcripts)
    k = math.ceil(frac * n)
    if k == 0:
        return DetectionReport([], 0, [])
    idx = sorted(int(i) + 1 for i in rng.choice(n, size=k, replace=False))
    checked = [result.transcripts[i - 1] for i in idx]
    return DetectionReport(
        check_indices=idx,
        mismatches=sum(t.sent != t.received for t in checked),
        leaked_bits=[(t.index, t.sent) for t in checked],
    )


def random_key(n: int, seed: int) -> list[int]:
    return [int(b) for b in stream(seed, 2).integers(0, 2, size=n)]
