"""Eve's channel programs and key inference.

An attack is expressed as short lists of :class:`Step` records rather than
as direct state manipulation. The same lists drive sampled sessions (one
random measurement outcome) and the exact analysis (every outcome, with its
weight), so both paths run literally the same program.

Strategies:

* ``Strategy.NONE``: no eavesdropper.
* ``Strategy.S1``: entangle the ancilla in round 1, then run the extraction
  program (CNOT, measure, CNOT) in every later round and never touch the
  rotations.
* ``Strategy.S2``: entangle in round 1, rotate the ancilla together with
  Alice and Bob from round 2 on, and cycle through pass-through, extraction,
  flipped pass-through, extraction.
* :class:`Parametrized`: an arbitrary two-qubit unitary on (carrier, ancilla)
  every round.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from .errors import ConfigurationError, InternalConsistencyError, ProtocolSequencingError

ALICE = "A"
BOB = "B"
CARRIER = "C"
EVE = "E"

UNITARITY_TOL = 1e-10


class Strategy(enum.Enum):
    NONE = "none"
    S1 = "s1"
    S2 = "s2"


class Step(NamedTuple):
    """One primitive action of a round.

    ``op`` is one of ``rot``, ``x``, ``cnot``, ``unitary``, ``attach``,
    ``measure``, ``discard``. ``mark`` flags a visible stage: the state right
    after this step is one of the intermediate states of the round.
    """

    op: str
    args: tuple
    mark: bool = False


@dataclass(frozen=True)
class UnitaryParams:
    """16 reals -> 4x4 unitary ``exp(iH)`` with ``H`` Hermitian.

    ``values[0:4]`` is the diagonal of ``H``; ``values[4:10]`` and
    ``values[10:16]`` are the real and imaginary parts of its upper triangle,
    row-major. The matrix acts on (carrier, ancilla), carrier as the high bit.
    """

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in np.asarray(self.values, dtype=float).reshape(-1))
        if len(vals) != 16:
            raise ConfigurationError(f"UnitaryParams needs 16 values, got {len(vals)}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls) -> "UnitaryParams":
        return cls((0.0,) * 16)

    def hermitian(self) -> np.ndarray:
        return hermitian_from_params(self.values)

    def matrix(self) -> np.ndarray:
        return unitary_from_params(self.values)


_IU = np.triu_indices(4, k=1)


def hermitian_from_params(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    h = np.diag(v[:4]).astype(complex)
    h[_IU] = v[4:10] + 1j * v[10:16]
    h[(_IU[1], _IU[0])] = v[4:10] - 1j * v[10:16]
    return h


def unitary_from_params(values) -> np.ndarray:
    """``exp(iH)`` through the eigendecomposition of ``H``."""
    w, v = np.linalg.eigh(hermitian_from_params(values))
    u = (v * np.exp(1j * w)) @ v.conj().T
    err = np.max(np.abs(u.conj().T @ u - np.eye(4)))
    if err > UNITARITY_TOL:
        raise InternalConsistencyError(f"reconstructed unitary is off by {err:.3e}")
    return u


@dataclass(frozen=True)
class Parametrized:
    """General unitary attack.

    With ``entangle_first`` the round-1 CNOT entangler runs before any
    unitary; by default the unitary is applied in every round, round 1
    included, so that ``U = I`` is exactly the honest channel.
    """

    params: UnitaryParams
    entangle_first: bool = False


StrategyKind = Union[Strategy, Parametrized]


def parse_strategy(name: str) -> Strategy:
    try:
        return Strategy(name.lower())
    except ValueError:
        raise ConfigurationError(f"unknown strategy {name!r}") from None


def is_attacking(strategy: StrategyKind) -> bool:
    return strategy is not Strategy.NONE


@dataclass
class EveState:
    strategy: StrategyKind
    round: int = 0
    ancilla_label: str = EVE
    records: list[tuple[int, int]] = field(default_factory=list)

    def begin_round(self):
        self.round += 1

    def s2_phase(self) -> int:
        """Position in the four-round S2 cycle; round 2 is phase 0."""
        return (self.round - 2) % 4

    def is_extraction_round(self, r: Optional[int] = None) -> bool:
        r = self.round if r is None else r
        if self.strategy is Strategy.S1:
            return r >= 2
        if self.strategy is Strategy.S2:
            return r >= 3 and (r - 2) % 4 in (1, 3)
        return False


def new_eve(strategy: StrategyKind) -> EveState:
    return EveState(strategy=strategy)


def rotation_steps(eve: EveState, theta: float) -> list[Step]:
    """Eve's reaction to the bilateral rotation at the start of a round."""
    if eve.round < 1:
        raise ProtocolSequencingError("rotation hook called before the first round")
    if eve.round == 1:
        return []
    if eve.strategy is Strategy.S2 or isinstance(eve.strategy, Parametrized):
        return [Step("rot", (eve.ancilla_label, theta))]
    return []


_ENTANGLE = "entangle"
_PASS = "pass"
_EXTRACT = "extract"
_FLIP_PASS = "flip-pass"
_UNITARY = "unitary"


def program_kind(eve: EveState) -> Optional[str]:
    s = eve.strategy
    if s is Strategy.NONE:
        return None
    if isinstance(s, Parametrized):
        if s.entangle_first and eve.round == 1:
            return _ENTANGLE
        return _UNITARY
    if eve.round == 1:
        return _ENTANGLE
    if s is Strategy.S1:
        return _EXTRACT
    return (_PASS, _EXTRACT, _FLIP_PASS, _EXTRACT)[eve.s2_phase()]


def channel_program(eve: EveState, carrier: str = CARRIER) -> list[Step]:
    """Steps Eve applies to the carrier in flight during the current round."""
    e = eve.ancilla_label
    kind = program_kind(eve)
    if kind is None:
        return []
    if kind == _ENTANGLE:
        return [Step("cnot", (carrier, e), mark=True)]
    if kind == _PASS:
        return [Step("cnot", (e, carrier), mark=True)]
    if kind == _EXTRACT:
        return [Step("cnot", (e, carrier), mark=True),
                Step("measure", (carrier, "eve")),
                Step("cnot", (e, carrier), mark=True)]
    if kind == _FLIP_PASS:
        return [Step("x", (carrier,)),
                Step("cnot", (e, carrier), mark=True)]
    return [Step("unitary", (carrier, e, eve.strategy.params.matrix()), mark=True)]


def on_rotation(eve: EveState, state, theta: float):
    """Apply Eve's rotation hook to ``state`` (sampled path)."""
    from .protocol import execute_steps

    out, _, _ = execute_steps(state, rotation_steps(eve, theta), rng=None)
    return out


def on_channel(eve: EveState, state, rng: Optional[np.random.Generator] = None):
    """Run Eve's program for the current round on ``state``.

    Returns ``(state, measured_bit_or_None)``; a measured bit is appended to
    ``eve.records``.
    """
    from .protocol import execute_steps

    if CARRIER not in state.labels:
        raise ProtocolSequencingError("no carrier in flight")
    steps = channel_program(eve)
    if any(s.op == "measure" for s in steps) and rng is None:
        raise ConfigurationError("extraction round needs a random stream")
    out, _, outcomes = execute_steps(state, steps, rng=rng)
    bit = outcomes.get("eve")
    if bit is not None:
        eve.records.append((eve.round, bit))
    return out, bit


@dataclass
class KeyInference:
    """What Eve can say about the key.

    ``candidates[h]`` decodes the XOR records assuming the first key bit is
    ``h`` (None where nothing is known); publicly compared bits are filled in
    both. ``resolved`` is the surviving candidate once a public bit pins the
    first key bit down.
    """

    candidates: tuple[list[Optional[int]], list[Optional[int]]]
    resolved: Optional[list[Optional[int]]]
    first_bit: Optional[int]
    accuracy: Optional[float]


def infer_key(records: Sequence[tuple[int, int]] | EveState,
              leaked_bits: Sequence[tuple[int, int]],
              key: Sequence[int]) -> KeyInference:
    """Decode Eve's XOR records with help from publicly compared key bits.

    ``key`` is the true key; its length is the number of rounds and it is
    used only for scoring ``accuracy``, the fraction of key bits that Eve
    knows and gets right.
    """
    if isinstance(records, EveState):
        records = records.records
    n = len(key)
    leaked = {int(r): int(b) for r, b in leaked_bits}
    recs = {int(r): int(b) for r, b in records}

    candidates = ([None] * n, [None] * n)
    for h in (0, 1):
        for r, b in recs.items():
            candidates[h][r - 1] = b ^ h
        for r, b in leaked.items():
            candidates[h][r - 1] = b

    votes = [recs[r] ^ b for r, b in leaked.items() if r in recs]
    if 1 in leaked:
        votes.append(leaked[1])
    first_bit = None
    if votes:
        ones = sum(votes)
        if 2 * ones != len(votes):
            first_bit = int(2 * ones > len(votes))
    resolved = list(candidates[first_bit]) if first_bit is not None else None

    known = resolved if resolved is not None else [
        leaked.get(i + 1) for i in range(n)]
    correct = sum(1 for i, b in enumerate(known) if b is not None and b == key[i])
    return KeyInference(candidates, resolved, first_bit, correct / n if n else 0.0)
