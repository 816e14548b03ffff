"""Dense statevector engine for a handful of labeled qubits.

Qubits are addressed by label, never by position. The label order of a
state's layout fixes the tensor layout: position 0 is the most significant
bit of the basis index, so for a layout ``("A", "B", "g", "E")`` the basis
state ``|a, b, g, e>`` sits at index ``8a + 4b + 2g + e``.

Every public operation returns a new :class:`StateVector`; inputs are never
modified.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    AddressingError,
    ConfigurationError,
    InternalConsistencyError,
    InvariantViolation,
)

MAX_QUBITS = 6
NORM_TOL = 1e-12
PURITY_TOL = 1e-10
BRANCH_CUTOFF = 1e-15

X_GATE = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)


def rotation_matrix(theta: float) -> np.ndarray:
    """The real rotation ``[[cos, sin], [-sin, cos]]``."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s, c]], dtype=complex)


@dataclass(frozen=True, eq=False)
class StateVector:
    """A normalized pure state over an ordered tuple of qubit labels."""

    labels: tuple[str, ...]
    amps: np.ndarray

    def __post_init__(self):
        labels = tuple(self.labels)
        if len(set(labels)) != len(labels):
            raise ConfigurationError(f"duplicate qubit labels in {labels}")
        if len(labels) > MAX_QUBITS:
            raise ConfigurationError(
                f"{len(labels)} qubits requested, at most {MAX_QUBITS} supported")
        amps = np.array(self.amps, dtype=complex).reshape(-1)
        if amps.size != 2 ** len(labels):
            raise ConfigurationError(
                f"{amps.size} amplitudes do not fit {len(labels)} qubits")
        if not np.all(np.isfinite(amps)):
            raise InternalConsistencyError("non-finite amplitude")
        amps.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "amps", amps)

    @property
    def n(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise AddressingError(f"no qubit labelled {label!r} in {self.labels}") from None

    def tensor(self) -> np.ndarray:
        return self.amps.reshape((2,) * self.n)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amps) ** 2

    def ket_string(self, tol: float = 1e-12) -> str:
        """Human-readable expansion, e.g. ``0.7071|00> + 0.7071|11>``."""
        terms = []
        for i, a in enumerate(self.amps):
            if abs(a) > tol:
                bits = format(i, f"0{self.n}b") if self.n else ""
                terms.append(f"({a.real:+.4f}{a.imag:+.4f}j)|{bits}>")
        return " + ".join(terms) if terms else "0"

    def __repr__(self):
        return f"StateVector({self.labels}, {self.ket_string()})"


def _from_tensor(labels, psi) -> StateVector:
    state = StateVector(tuple(labels), psi.reshape(-1))
    if abs(state.norm() - 1.0) > NORM_TOL:
        raise InternalConsistencyError(f"norm drifted to {state.norm():.16g}")
    return state


def new_basis_state(labels: Sequence[str], bits: Sequence[int]) -> StateVector:
    """Computational basis state with ``bits[k]`` on ``labels[k]``."""
    labels = tuple(labels)
    if len(bits) != len(labels):
        raise ConfigurationError(
            f"{len(bits)} bits given for {len(labels)} qubits")
    if any(b not in (0, 1) for b in bits):
        raise ConfigurationError(f"bits must be 0/1, got {list(bits)}")
    amps = np.zeros(2 ** len(labels), dtype=complex)
    amps[int("".join(str(int(b)) for b in bits) or "0", 2)] = 1.0
    return StateVector(labels, amps)


def make_bell_pair(label_a: str = "A", label_b: str = "B") -> StateVector:
    """(|00> + |11>)/sqrt(2) on the two labels."""
    if label_a == label_b:
        raise ConfigurationError("Bell pair needs two distinct labels")
    amps = np.array([1.0, 0.0, 0.0, 1.0], dtype=complex) / np.sqrt(2.0)
    return StateVector((label_a, label_b), amps)


def apply_gate(state: StateVector, label: str, gate: np.ndarray) -> StateVector:
    """Apply a 2x2 matrix to one qubit."""
    k = state.index(label)
    psi = np.tensordot(np.asarray(gate, dtype=complex), state.tensor(), axes=([1], [k]))
    return _from_tensor(state.labels, np.moveaxis(psi, 0, k))


def apply_rotation(state: StateVector, label: str, theta: float) -> StateVector:
    if not np.isfinite(theta):
        raise ConfigurationError(f"rotation angle must be finite, got {theta}")
    return apply_gate(state, label, rotation_matrix(theta))


def apply_x(state: StateVector, label: str) -> StateVector:
    return apply_gate(state, label, X_GATE)


def apply_cnot(state: StateVector, control: str, target: str) -> StateVector:
    if control == target:
        raise AddressingError(f"CNOT control and target are both {control!r}")
    c, t = state.index(control), state.index(target)
    psi = state.tensor().copy()
    sel = [slice(None)] * state.n
    sel[c] = 1
    # with the control axis fixed, the target axis shifts down by one if it came after it
    psi[tuple(sel)] = np.flip(psi[tuple(sel)], axis=t if t < c else t - 1)
    return _from_tensor(state.labels, psi)


def apply_two_qubit(state: StateVector, first: str, second: str,
                    unitary: np.ndarray) -> StateVector:
    """Apply a 4x4 matrix to ``(first, second)``; ``first`` is the high bit."""
    if first == second:
        raise AddressingError(f"two-qubit gate on a single label {first!r}")
    i, j = state.index(first), state.index(second)
    u = np.asarray(unitary, dtype=complex).reshape(2, 2, 2, 2)
    psi = np.tensordot(u, state.tensor(), axes=([2, 3], [i, j]))
    return _from_tensor(state.labels, np.moveaxis(psi, [0, 1], [i, j]))


def attach_qubit(state: StateVector, label: str, bit: int,
                 position: int | None = None) -> StateVector:
    """Tensor a fresh ``|bit>`` onto the register.

    ``position`` is the slot of the new label in the layout (default: last).
    """
    if label in state.labels:
        raise ConfigurationError(f"qubit {label!r} already present")
    if bit not in (0, 1):
        raise ConfigurationError(f"bit must be 0 or 1, got {bit}")
    pos = state.n if position is None else position
    if not 0 <= pos <= state.n:
        raise ConfigurationError(f"position {pos} outside 0..{state.n}")
    ket = np.zeros(2, dtype=complex)
    ket[bit] = 1.0
    psi = np.multiply.outer(state.tensor(), ket)
    psi = np.moveaxis(psi, -1, pos)
    labels = state.labels[:pos] + (label,) + state.labels[pos:]
    return StateVector(labels, psi.reshape(-1))


def reorder(state: StateVector, labels: Sequence[str]) -> StateVector:
    """Same state, expressed in a permuted layout."""
    labels = tuple(labels)
    if sorted(labels) != sorted(state.labels):
        raise ConfigurationError(f"cannot reorder {state.labels} into {labels}")
    axes = [state.index(lab) for lab in labels]
    return StateVector(labels, np.transpose(state.tensor(), axes).reshape(-1))


def _project(state: StateVector, k: int, bit: int) -> tuple[float, np.ndarray]:
    psi = state.tensor().copy()
    sel = [slice(None)] * state.n
    sel[k] = 1 - bit
    psi[tuple(sel)] = 0.0
    p = float(np.sum(np.abs(psi) ** 2))
    return p, psi


def branch_measure_z(state: StateVector, label: str) -> list[tuple[int, float, StateVector]]:
    """Both Z outcomes of ``label`` with exact probabilities and post-states.

    Outcomes with probability below 1e-15 are dropped.
    """
    k = state.index(label)
    branches = []
    total = 0.0
    for bit in (0, 1):
        p, psi = _project(state, k, bit)
        total += p
        if p >= BRANCH_CUTOFF:
            branches.append((bit, p, _from_tensor(state.labels, psi / np.sqrt(p))))
    if abs(total - 1.0) > NORM_TOL:
        raise InternalConsistencyError(f"outcome probabilities sum to {total!r}")
    return branches


def measure_z(state: StateVector, label: str,
              rng: np.random.Generator) -> tuple[int, StateVector]:
    """Sample a Z measurement of ``label``; the qubit stays in the register."""
    k = state.index(label)
    p0, psi0 = _project(state, k, 0)
    p1, psi1 = _project(state, k, 1)
    if abs(p0 + p1 - 1.0) > 1e-9:
        raise InternalConsistencyError(f"outcome probabilities sum to {p0 + p1!r}")
    bit = int(rng.random() < p1 / (p0 + p1))
    psi, p = (psi1, p1) if bit else (psi0, p0)
    return bit, _from_tensor(state.labels, psi / np.sqrt(p))


def reduced_density(state: StateVector, labels: Sequence[str]) -> np.ndarray:
    """Partial trace onto ``labels`` (kept in the given order)."""
    labels = list(labels)
    if not labels:
        raise ConfigurationError("reduced density needs at least one label")
    if len(set(labels)) != len(labels):
        raise ConfigurationError(f"duplicate labels {labels}")
    keep = [state.index(lab) for lab in labels]
    rest = [k for k in range(state.n) if k not in keep]
    m = np.transpose(state.tensor(), keep + rest).reshape(2 ** len(keep), -1)
    rho = m @ m.conj().T
    return (rho + rho.conj().T) / 2


def purity(rho: np.ndarray) -> float:
    return float(np.real(np.trace(rho @ rho)))


def discard_qubit(state: StateVector, label: str) -> StateVector:
    """Drop a qubit that is in a product state with the rest of the register.

    Raises :class:`InvariantViolation` if the qubit is still entangled.
    """
    k = state.index(label)
    rho = reduced_density(state, [label])
    if purity(rho) < 1.0 - PURITY_TOL:
        raise InvariantViolation(
            f"qubit {label!r} is entangled (purity {purity(rho):.12f}); cannot discard")
    _, vecs = np.linalg.eigh(rho)
    u = vecs[:, -1]
    psi = np.tensordot(u.conj(), state.tensor(), axes=([0], [k]))
    psi = psi / np.linalg.norm(psi)
    labels = state.labels[:k] + state.labels[k + 1:]
    return _from_tensor(labels, psi)


def phase_invariant_fidelity(a: StateVector, b: StateVector) -> float:
    """|<a|b>|^2, blind to global phase. Layouts must match exactly."""
    if a.labels != b.labels:
        raise ConfigurationError(f"layout mismatch: {a.labels} vs {b.labels}")
    f = abs(np.vdot(a.amps, b.amps)) ** 2
    return float(min(max(f, 0.0), 1.0))


def von_neumann_entropy(rho: np.ndarray) -> float:
    """Entropy in bits."""
    w = np.linalg.eigvalsh(rho)
    w = w[w > 1e-14]
    return float(max(0.0, -np.sum(w * np.log2(w))))
