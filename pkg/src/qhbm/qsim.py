"""Dense statevector simulation for small qubit registers.

Bit convention is big-endian throughout: qubit 0 is the most significant
bit of the basis index, so for a 4-qubit register the bits (0, 1, 0, 1)
address amplitude index 5.  Registers are capped at 10 qubits; everything
is a dense complex128 vector of length 2**n.

The variational circuit is a staircase of two-qubit blocks.  Within one
layer, blocks act on qubit pairs (0,1), (1,2), ..., (n-2, n-1) in order;
each block applies RY(a) to the lower-index qubit, RY(b) to the
higher-index qubit, then a CNOT with the lower-index qubit as control.
Every angle parametrises exactly one RY gate, which makes the two-point
parameter-shift rule exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterator, Sequence

import numpy as np

if TYPE_CHECKING:
    from .ebm import ModularHamiltonian

MAX_QUBITS = 10


def _check_n_qubits(n_qubits: int) -> None:
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ValueError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")


@dataclass(frozen=True)
class SpinConfig:
    """An ordered bit sequence addressing one computational basis state."""

    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        _check_n_qubits(len(self.bits))
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError(f"bits must be 0 or 1, got {self.bits}")

    @property
    def n_qubits(self) -> int:
        return len(self.bits)

    @property
    def index(self) -> int:
        """Basis index with qubit 0 as the most significant bit."""
        idx = 0
        for b in self.bits:
            idx = (idx << 1) | b
        return idx

    @classmethod
    def from_index(cls, index: int, n_qubits: int) -> "SpinConfig":
        _check_n_qubits(n_qubits)
        if not 0 <= index < 2**n_qubits:
            raise ValueError(f"index {index} out of range for {n_qubits} qubits")
        bits = tuple((index >> (n_qubits - 1 - k)) & 1 for k in range(n_qubits))
        return cls(bits)

    def as_array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.float64)


@dataclass
class CircuitAnsatz:
    """Staircase circuit: ``n_layers`` layers of RY/RY/CNOT blocks.

    ``angles`` holds 2*(n_qubits-1)*n_layers values.  Block b of layer l
    uses angles[2*((n_qubits-1)*l + b)] on qubit b and the following
    entry on qubit b+1.
    """

    n_qubits: int
    n_layers: int
    angles: np.ndarray

    def __post_init__(self) -> None:
        _check_n_qubits(self.n_qubits)
        if self.n_layers < 0:
            raise ValueError(f"n_layers must be >= 0, got {self.n_layers}")
        self.angles = np.asarray(self.angles, dtype=np.float64)
        if self.angles.ndim != 1 or self.angles.size != self.n_parameters:
            raise ValueError(
                f"expected {self.n_parameters} angles for "
                f"{self.n_qubits} qubits x {self.n_layers} layers, "
                f"got shape {self.angles.shape}"
            )
        if not np.all(np.isfinite(self.angles)):
            raise ValueError("angles must be finite")

    @property
    def n_parameters(self) -> int:
        return 2 * (self.n_qubits - 1) * self.n_layers

    def with_angles(self, angles: Sequence[float]) -> "CircuitAnsatz":
        return CircuitAnsatz(self.n_qubits, self.n_layers, np.asarray(angles))

    def shifted(self, k: int, delta: float) -> "CircuitAnsatz":
        """Copy with angle ``k`` shifted by ``delta``."""
        angles = self.angles.copy()
        angles[k] += delta
        return self.with_angles(angles)

    def blocks(self) -> Iterator[tuple[int, int, int]]:
        """Yield (lower_qubit, angle_index_lower, angle_index_upper) in order."""
        per_layer = self.n_qubits - 1
        for layer in range(self.n_layers):
            for b in range(per_layer):
                base = 2 * (per_layer * layer + b)
                yield b, base, base + 1


@dataclass
class StateVector:
    """Normalised amplitudes over the computational basis."""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        _check_n_qubits(self.n_qubits)
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (2**self.n_qubits,):
            raise ValueError(
                f"expected {2**self.n_qubits} amplitudes, got shape "
                f"{self.amplitudes.shape}"
            )

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def prepare_basis_state(config: SpinConfig) -> StateVector:
    """State with amplitude 1 at the index addressed by ``config``."""
    amps = np.zeros(2**config.n_qubits, dtype=np.complex128)
    amps[config.index] = 1.0
    return StateVector(config.n_qubits, amps)


def _ry(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


def _apply_single(arr: np.ndarray, n_qubits: int, qubit: int, gate: np.ndarray) -> np.ndarray:
    """Apply a 2x2 gate to ``qubit`` of ``arr`` shaped (2**n,) or (2**n, m)."""
    batched = arr.ndim == 2
    m = arr.shape[1] if batched else 1
    work = arr.reshape([2] * n_qubits + [m])
    work = np.moveaxis(work, qubit, 0)
    shape = work.shape
    work = gate @ work.reshape(2, -1)
    work = np.moveaxis(work.reshape(shape), 0, qubit)
    out = work.reshape(2**n_qubits, m)
    return out if batched else out.reshape(-1)


def _apply_cnot(arr: np.ndarray, n_qubits: int, control: int, target: int) -> np.ndarray:
    """Apply CNOT(control -> target); operates on a fresh copy."""
    batched = arr.ndim == 2
    m = arr.shape[1] if batched else 1
    work = arr.reshape([2] * n_qubits + [m]).copy()
    sel: list = [slice(None)] * work.ndim
    sel[control] = 1
    sel_t = tuple(sel)
    # Dropping the control axis shifts later axes down by one.
    flip_axis = target if target < control else target - 1
    work[sel_t] = np.flip(work[sel_t], axis=flip_axis)
    out = work.reshape(2**n_qubits, m)
    return out if batched else out.reshape(-1)


def _apply_circuit(arr: np.ndarray, ansatz: CircuitAnsatz, adjoint: bool = False) -> np.ndarray:
    n = ansatz.n_qubits
    block_list = list(ansatz.blocks())
    if not adjoint:
        for q, ia, ib in block_list:
            arr = _apply_single(arr, n, q, _ry(ansatz.angles[ia]))
            arr = _apply_single(arr, n, q + 1, _ry(ansatz.angles[ib]))
            arr = _apply_cnot(arr, n, q, q + 1)
    else:
        for q, ia, ib in reversed(block_list):
            arr = _apply_cnot(arr, n, q, q + 1)
            arr = _apply_single(arr, n, q, _ry(-ansatz.angles[ia]))
            arr = _apply_single(arr, n, q + 1, _ry(-ansatz.angles[ib]))
    return arr


def _check_match(state: StateVector, ansatz: CircuitAnsatz) -> None:
    if state.n_qubits != ansatz.n_qubits:
        raise ValueError(
            f"state has {state.n_qubits} qubits but ansatz expects {ansatz.n_qubits}"
        )


def apply_ansatz(state: StateVector, ansatz: CircuitAnsatz) -> StateVector:
    """Return U(angles) |state>; the input state is left untouched."""
    _check_match(state, ansatz)
    return StateVector(state.n_qubits, _apply_circuit(state.amplitudes, ansatz))


def apply_adjoint_ansatz(state: StateVector, ansatz: CircuitAnsatz) -> StateVector:
    """Return U(angles)^dagger |state>; exact inverse of ``apply_ansatz``."""
    _check_match(state, ansatz)
    return StateVector(state.n_qubits, _apply_circuit(state.amplitudes, ansatz, adjoint=True))


def ansatz_unitary(ansatz: CircuitAnsatz) -> np.ndarray:
    """Dense 2**n x 2**n matrix of the circuit (column x = U |x>)."""
    dim = 2**ansatz.n_qubits
    return _apply_circuit(np.eye(dim, dtype=np.complex128), ansatz)


def diagonal_expectation(state: StateVector, ham: "ModularHamiltonian") -> float:
    """<state| K |state> for a diagonal operator given on its support.

    Basis states absent from the support contribute zero.
    """
    if ham.n_qubits != state.n_qubits:
        raise ValueError(
            f"state has {state.n_qubits} qubits but operator has {ham.n_qubits}"
        )
    if ham.basis_indices.size == 0:
        return 0.0
    probs = state.probabilities()
    return float(ham.energies @ probs[ham.basis_indices])


def circuit_expectation(
    config: SpinConfig,
    ansatz: CircuitAnsatz,
    ham: "ModularHamiltonian",
    adjoint: bool = False,
) -> float:
    """Diagonal expectation after routing a basis state through the circuit.

    Default orientation embeds |config>, applies the forward circuit and
    measures, i.e. <p| U^dag K U |p>.  With ``adjoint=True`` the inverse
    circuit is applied instead, giving <p| U K U^dag |p>.
    """
    state = prepare_basis_state(config)
    rotated = apply_adjoint_ansatz(state, ansatz) if adjoint else apply_ansatz(state, ansatz)
    return diagonal_expectation(rotated, ham)


def parameter_shift_gradient(
    config: SpinConfig,
    ansatz: CircuitAnsatz,
    ham: "ModularHamiltonian",
    adjoint: bool = False,
) -> np.ndarray:
    """Exact gradient of ``circuit_expectation`` w.r.t. every angle.

    Component k is (f(angle_k + pi/2) - f(angle_k - pi/2)) / 2, which is
    exact for RY rotations.
    """
    grad = np.zeros(ansatz.n_parameters)
    if ham.basis_indices.size == 0:
        return grad
    half_pi = np.pi / 2.0
    for k in range(ansatz.n_parameters):
        up = circuit_expectation(config, ansatz.shifted(k, +half_pi), ham, adjoint)
        down = circuit_expectation(config, ansatz.shifted(k, -half_pi), ham, adjoint)
        grad[k] = 0.5 * (up - down)
    return grad


def evolve_diagonal(
    state: StateVector,
    ham: "ModularHamiltonian",
    total_time: float,
    dt: float,
) -> tuple[StateVector, float]:
    """Evolve under exp(-i K t) for a diagonal K given on its support.

    The requested time is quantised to N = round(total_time / dt) steps
    and the actual evolved time N * dt is returned alongside the state.
    Because K is diagonal, applying N steps of dt equals the one-shot
    exponential at N * dt to machine precision, so the phases are applied
    in one shot.  Amplitudes outside the support are untouched (their
    energy is zero).
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if ham.n_qubits != state.n_qubits:
        raise ValueError(
            f"state has {state.n_qubits} qubits but operator has {ham.n_qubits}"
        )
    n_steps = int(round(total_time / dt))
    actual_time = n_steps * dt
    amps = state.amplitudes.copy()
    if ham.basis_indices.size:
        amps[ham.basis_indices] *= np.exp(-1j * actual_time * ham.energies)
    return StateVector(state.n_qubits, amps), actual_time
