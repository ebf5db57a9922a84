"""Classical energy-based model over visible spin configurations.

A restricted Boltzmann machine with binary visible and hidden units
defines, after summing out the hidden layer, the free energy

    F(v) = -b_vis . v - sum_j log(1 + exp((v W + b_hid)_j)).

Configurations are sampled from p(v) ~ exp(-F(v)) with a Metropolis
chain, and the sampled support together with its energies forms a
diagonal modular Hamiltonian K = sum_z F(z) |z><z|.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit, logsumexp, softmax

from .embed import DensityMatrix
from .qsim import MAX_QUBITS, SpinConfig


@dataclass
class EnergyModel:
    """RBM parameters: couplings (n_visible x n_hidden) and two bias vectors."""

    weights: np.ndarray
    visible_bias: np.ndarray
    hidden_bias: np.ndarray

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.visible_bias = np.asarray(self.visible_bias, dtype=np.float64)
        self.hidden_bias = np.asarray(self.hidden_bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError(f"weights must be 2-d, got shape {self.weights.shape}")
        nv, nh = self.weights.shape
        if not 1 <= nv <= MAX_QUBITS:
            raise ValueError(f"n_visible must be in [1, {MAX_QUBITS}], got {nv}")
        if self.visible_bias.shape != (nv,) or self.hidden_bias.shape != (nh,):
            raise ValueError(
                f"bias shapes {self.visible_bias.shape}/{self.hidden_bias.shape} "
                f"do not match weights {self.weights.shape}"
            )
        for arr in (self.weights, self.visible_bias, self.hidden_bias):
            if not np.all(np.isfinite(arr)):
                raise ValueError("model parameters must be finite")

    @property
    def n_visible(self) -> int:
        return self.weights.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def initialize(
        cls,
        n_visible: int,
        n_hidden: int | None = None,
        rng: np.random.Generator | None = None,
        weight_scale: float = 0.01,
    ) -> "EnergyModel":
        """Small random couplings, zero biases; n_hidden defaults to 2*n_visible."""
        if n_hidden is None:
            n_hidden = 2 * n_visible
        if rng is None:
            rng = np.random.default_rng()
        weights = weight_scale * rng.standard_normal((n_visible, n_hidden))
        return cls(weights, np.zeros(n_visible), np.zeros(n_hidden))


def _as_bit_matrix(v: np.ndarray | Sequence[float]) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    return arr


def free_energy(model: EnergyModel, config: SpinConfig | np.ndarray) -> float:
    """F(v) with the hidden layer summed out analytically."""
    v = config.as_array() if isinstance(config, SpinConfig) else _as_bit_matrix(config)
    activation = v @ model.weights + model.hidden_bias
    return float(-model.visible_bias @ v - np.sum(np.logaddexp(0.0, activation)))


def free_energy_table(model: EnergyModel) -> np.ndarray:
    """F(v) for all 2**n_visible configurations, indexed big-endian."""
    n = model.n_visible
    idx = np.arange(2**n)
    shifts = np.arange(n - 1, -1, -1)
    bits = ((idx[:, None] >> shifts[None, :]) & 1).astype(np.float64)
    activation = bits @ model.weights + model.hidden_bias
    return -(bits @ model.visible_bias) - np.sum(np.logaddexp(0.0, activation), axis=1)


def conditional_hidden_prob(model: EnergyModel, config: SpinConfig | np.ndarray) -> np.ndarray:
    """p(h_j = 1 | v) = sigmoid((v W + b_hid)_j)."""
    v = config.as_array() if isinstance(config, SpinConfig) else _as_bit_matrix(config)
    return expit(v @ model.weights + model.hidden_bias)


def conditional_visible_prob(model: EnergyModel, hidden: np.ndarray) -> np.ndarray:
    """p(v_i = 1 | h) = sigmoid((h W^T + b_vis)_i)."""
    h = _as_bit_matrix(hidden)
    return expit(h @ model.weights.T + model.visible_bias)


@dataclass
class MarkovChainState:
    """Position of a persistent Metropolis chain, including its RNG."""

    current: SpinConfig
    current_energy: float
    rng: np.random.Generator


def initial_chain(
    model: EnergyModel,
    rng: np.random.Generator,
    start: SpinConfig | None = None,
) -> MarkovChainState:
    """Fresh chain; by default it starts from the all-ones configuration."""
    if start is None:
        start = SpinConfig((1,) * model.n_visible)
    if start.n_qubits != model.n_visible:
        raise ValueError(
            f"start has {start.n_qubits} bits but model has {model.n_visible} visible units"
        )
    return MarkovChainState(start, free_energy(model, start), rng)


def metropolis_sample(
    model: EnergyModel,
    chain: MarkovChainState,
    burn_in: int,
    n_collect: int,
    proposal: str = "uniform",
) -> tuple[list[SpinConfig], MarkovChainState]:
    """Run the chain and record one state per post-burn-in step.

    Proposals are fresh configurations drawn uniformly over all 2**n
    states ("uniform", default) or single uniformly chosen bit flips
    ("single_flip"); both are symmetric, so a move from v to v' is
    accepted with probability min(exp(F(v) - F(v')), 1).  Proposing the
    current state is possible and always accepted.  Exactly ``n_collect``
    configurations are returned, duplicates included, and the returned
    chain state continues from the final accepted state.
    """
    if burn_in < 0 or n_collect < 0:
        raise ValueError("burn_in and n_collect must be non-negative")
    if proposal not in ("uniform", "single_flip"):
        raise ValueError(f"unknown proposal kind {proposal!r}")
    n = model.n_visible
    table = free_energy_table(model)
    rng = chain.rng
    steps = burn_in + n_collect
    current = chain.current.index
    current_energy = table[current]

    if proposal == "uniform":
        proposals = rng.integers(0, 2**n, size=steps)
    else:
        flips = rng.integers(0, n, size=steps)
        proposals = None
    uniforms = rng.random(steps)

    collected = np.empty(n_collect, dtype=np.int64)
    for i in range(steps):
        if proposals is not None:
            cand = int(proposals[i])
        else:
            cand = current ^ (1 << (n - 1 - int(flips[i])))
        delta = current_energy - table[cand]
        if delta >= 0.0 or uniforms[i] < np.exp(delta):
            current = cand
            current_energy = table[cand]
        if i >= burn_in:
            collected[i - burn_in] = current

    samples = [SpinConfig.from_index(int(c), n) for c in collected]
    new_chain = MarkovChainState(
        SpinConfig.from_index(current, n), float(current_energy), rng
    )
    return samples, new_chain


@dataclass(eq=False)
class ModularHamiltonian:
    """Diagonal operator K = sum_z E(z) |z><z| over a sampled support.

    ``log_partition`` is log sum_z exp(-E(z)).  With the default
    support-only convention the sum runs over the stored support;
    ``build_hamiltonian`` can instead include every absent basis state
    at energy zero ("full" partition mode).
    """

    n_qubits: int
    support: tuple[SpinConfig, ...]
    energies: np.ndarray
    log_partition: float
    basis_indices: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.energies = np.asarray(self.energies, dtype=np.float64)
        if self.energies.shape != (len(self.support),):
            raise ValueError(
                f"{len(self.support)} support states but energy shape "
                f"{self.energies.shape}"
            )
        if self.energies.size and not np.all(np.isfinite(self.energies)):
            raise ValueError("energies must be finite")
        idx = np.array([c.index for c in self.support], dtype=np.int64)
        if idx.size and (len(set(idx.tolist())) != idx.size):
            raise ValueError("support states must be unique")
        if any(c.n_qubits != self.n_qubits for c in self.support):
            raise ValueError("support states must match n_qubits")
        self.basis_indices = idx

    @classmethod
    def empty(cls, n_qubits: int) -> "ModularHamiltonian":
        return cls(n_qubits, (), np.zeros(0), -np.inf)

    @classmethod
    def from_energies(
        cls,
        configs: Sequence[SpinConfig],
        energies: Sequence[float],
        partition: str = "support",
    ) -> "ModularHamiltonian":
        """Build directly from (state, energy) pairs, computing log Z."""
        if not configs:
            raise ValueError("need at least one support state")
        n = configs[0].n_qubits
        energies = np.asarray(energies, dtype=np.float64)
        log_z = _log_partition(energies, n, partition)
        return cls(n, tuple(configs), energies, log_z)

    def energy_vector(self) -> np.ndarray:
        """Dense length-2**n energy diagonal (zero off support)."""
        vec = np.zeros(2**self.n_qubits)
        vec[self.basis_indices] = self.energies
        return vec


def _log_partition(energies: np.ndarray, n_qubits: int, partition: str) -> float:
    if partition == "support":
        return float(logsumexp(-energies))
    if partition == "full":
        # Absent basis states sit at energy zero, each contributing exp(0).
        n_absent = 2**n_qubits - energies.size
        terms = np.concatenate([-energies, np.zeros(n_absent)])
        return float(logsumexp(terms))
    raise ValueError(f"unknown partition mode {partition!r}")


def build_hamiltonian(
    model: EnergyModel,
    samples: Sequence[SpinConfig],
    duplicates: str = "dedupe",
    partition: str = "support",
) -> ModularHamiltonian:
    """Modular Hamiltonian from Monte Carlo samples of ``model``.

    The support keeps unique configurations in first-appearance order.
    With ``duplicates="dedupe"`` (default) each state enters at its free
    energy once; ``duplicates="multiplicity"`` scales each energy by the
    state's sample count instead.
    """
    if not samples:
        raise ValueError("need at least one sample")
    if duplicates not in ("dedupe", "multiplicity"):
        raise ValueError(f"unknown duplicate mode {duplicates!r}")
    counts: dict[int, int] = {}
    order: dict[int, SpinConfig] = {}
    for s in samples:
        if s.n_qubits != model.n_visible:
            raise ValueError(
                f"sample has {s.n_qubits} bits but model has {model.n_visible}"
            )
        counts[s.index] = counts.get(s.index, 0) + 1
        order.setdefault(s.index, s)
    support = tuple(order.values())
    bits = np.array([c.bits for c in support], dtype=np.float64)
    activation = bits @ model.weights + model.hidden_bias
    energies = -(bits @ model.visible_bias) - np.sum(np.logaddexp(0.0, activation), axis=1)
    if duplicates == "multiplicity":
        mult = np.array([counts[c.index] for c in support], dtype=np.float64)
        energies = energies * mult
    log_z = _log_partition(energies, model.n_visible, partition)
    return ModularHamiltonian(model.n_visible, support, energies, log_z)


@dataclass
class ThetaGradient:
    """Gradient w.r.t. the model parameters, mirroring EnergyModel's shapes."""

    weights: np.ndarray
    visible_bias: np.ndarray
    hidden_bias: np.ndarray


def theta_gradient(
    model: EnergyModel,
    ham: ModularHamiltonian,
    support_weights: Mapping[SpinConfig, float],
    beta: float = 1.0,
    k_beta: float = 1.0,
) -> ThetaGradient:
    """Analytic gradient of beta * sum_z w_z F(z) + k_beta * log Z.

    The support is treated as fixed.  ``support_weights`` maps support
    states to their data weights w_z; missing states count as zero.  The
    partition term contributes through the Boltzmann distribution over
    the support, so the gradient vanishes when the weights equal
    softmax(-E) and beta == k_beta.
    """
    if not ham.support:
        raise ValueError("hamiltonian support is empty")
    bits = np.array([c.bits for c in ham.support], dtype=np.float64)
    w = np.array([support_weights.get(c, 0.0) for c in ham.support])
    boltzmann = softmax(-ham.energies)
    coef = beta * w - k_beta * boltzmann
    hidden = expit(bits @ model.weights + model.hidden_bias)
    # dF/db_vis = -v, dF/db_hid = -sigmoid(vW + b_hid), dF/dW = outer of the two.
    d_visible = -(bits.T @ coef)
    d_hidden = -(hidden.T @ coef)
    d_weights = -(bits.T @ (coef[:, None] * hidden))
    return ThetaGradient(d_weights, d_visible, d_hidden)


def thermal_state(ham: ModularHamiltonian, n_qubits: int) -> DensityMatrix:
    """Diagonal density matrix exp(-K) / Z over the support.

    If ``ham`` carries a full-trace partition (log Z larger than the
    support-only sum), absent basis states enter at energy zero so the
    trace stays one under either convention.
    """
    if not ham.support:
        raise ValueError("hamiltonian support is empty")
    if n_qubits != ham.n_qubits:
        raise ValueError(
            f"requested {n_qubits} qubits but hamiltonian has {ham.n_qubits}"
        )
    diag = np.zeros(2**n_qubits)
    diag[ham.basis_indices] = np.exp(-ham.energies - ham.log_partition)
    support_log_z = float(logsumexp(-ham.energies))
    if ham.log_partition - support_log_z > 1e-12:
        absent = np.setdiff1d(np.arange(2**n_qubits), ham.basis_indices)
        diag[absent] = np.exp(-ham.log_partition)
    return DensityMatrix(np.diag(diag.astype(np.complex128)))
