"""Tests for time-evolution scoring, spectra, and site-entropy profiles."""

import numpy as np
import pytest

from qhbm import ebm, qsim
from qhbm.anomaly import (
    SCENARIOS,
    FidelitySeries,
    _two_site_reduced,
    discrimination_report,
    expectation_score,
    score_events,
    series_spectrum,
    site_entropy_profile,
    spectral_score,
    time_evolution_series,
)
from qhbm.embed import PixelProbabilities, bernoulli_index_samples
from qhbm.metrics import RocCurve
from qhbm.rng import substream
from qhbm.train import AdamState, TrainState

from oracles import pair_reduced_matrix, staircase_unitary


def make_state(ansatz, ham, rng_seed=0):
    model = ebm.EnergyModel.initialize(
        ansatz.n_qubits, rng=np.random.default_rng(rng_seed)
    )
    chain = ebm.initial_chain(model, np.random.default_rng(rng_seed))
    return TrainState(
        energy_model=model,
        ansatz=ansatz,
        hamiltonian=ham,
        chain=chain,
        adam_theta=AdamState.zeros_like({"w": model.weights}),
        adam_phi=AdamState.zeros_like({"angles": ansatz.angles}),
    )


def identity_ansatz(n):
    return qsim.CircuitAnsatz(n, 0, np.zeros(0))


def sharp_event(bits):
    return PixelProbabilities(
        np.array([1.0 - 1e-6 if b else 1e-6 for b in bits])
    )


def ham_from(indices, energies, n):
    return ebm.ModularHamiltonian.from_energies(
        [qsim.SpinConfig.from_index(i, n) for i in indices], energies
    )


class TestFidelitySeries:
    def test_times_grid(self):
        series = FidelitySeries(0.25, np.ones(5))
        assert np.allclose(series.times, [0.0, 0.25, 0.5, 0.75, 1.0])


class TestTimeEvolutionSeries:
    def test_starts_at_one_and_stays_bounded(self, rng):
        n = 3
        angles = rng.uniform(-np.pi, np.pi, size=2 * (n - 1))
        state = make_state(
            qsim.CircuitAnsatz(n, 1, angles), ham_from([1, 4, 6], rng.standard_normal(3), n)
        )
        event = PixelProbabilities(rng.uniform(0.2, 0.8, size=n))
        series = time_evolution_series(state, event, 20.0, 0.1, np.random.default_rng(0), n_draws=4)
        assert series.values[0] == pytest.approx(1.0, abs=1e-12)
        assert np.all(series.values >= -1e-9)
        assert np.all(series.values <= 1.0 + 1e-9)
        assert series.std is not None and series.std.shape == series.values.shape

    def test_eigenstate_is_flat(self):
        state = make_state(identity_ansatz(2), ham_from([2], [1.7], 2))
        series = time_evolution_series(
            state, sharp_event((1, 0)), 50.0, 0.1, np.random.default_rng(1)
        )
        assert np.allclose(series.values, 1.0, atol=1e-9)
        assert series.std is None

    def test_empty_support_is_flat(self):
        state = make_state(identity_ansatz(2), ebm.ModularHamiltonian.empty(2))
        series = time_evolution_series(
            state, sharp_event((0, 1)), 10.0, 0.1, np.random.default_rng(2)
        )
        assert np.allclose(series.values, 1.0, atol=1e-12)

    def test_two_level_beat(self):
        # Angles (pi/2, 0) rotate |00> into (|00> + |11>)/sqrt(2), so the
        # series oscillates as cos^2(dE t / 2).
        e0, e1 = 0.4, 2.9
        ansatz = qsim.CircuitAnsatz(2, 1, np.array([np.pi / 2.0, 0.0]))
        state = make_state(ansatz, ham_from([0, 3], [e0, e1], 2))
        series = time_evolution_series(
            state, sharp_event((0, 0)), 30.0, 0.1, np.random.default_rng(3)
        )
        expected = np.cos((e1 - e0) * series.times / 2.0) ** 2
        assert np.allclose(series.values, expected, atol=1e-9)

    def test_matches_step_by_step_propagation(self, rng):
        n = 2
        angles = rng.uniform(-np.pi, np.pi, size=2)
        ansatz = qsim.CircuitAnsatz(n, 1, angles)
        ham = ham_from([0, 2, 3], rng.standard_normal(3), n)
        state = make_state(ansatz, ham)
        event = PixelProbabilities(rng.uniform(0.3, 0.7, size=n))
        dt, steps = 0.1, 20
        series = time_evolution_series(
            state, event, steps * dt, dt, substream(11, "generation")
        )
        draw = bernoulli_index_samples(event, 1, substream(11, "generation"))[0]
        psi0 = qsim.apply_ansatz(
            qsim.prepare_basis_state(qsim.SpinConfig.from_index(int(draw), n)), ansatz
        )
        for k in range(steps + 1):
            if k == 0:
                psi_t = psi0
            else:
                psi_t, actual = qsim.evolve_diagonal(psi0, ham, k * dt, dt)
                assert actual == pytest.approx(k * dt, abs=1e-12)
            overlap = np.vdot(psi0.amplitudes, psi_t.amplitudes)
            assert series.values[k] == pytest.approx(abs(overlap) ** 2, abs=1e-9)

    def test_grid_sizes(self):
        state = make_state(identity_ansatz(2), ham_from([0], [0.5], 2))
        event = sharp_event((0, 0))
        series = time_evolution_series(state, event, 1.04, 0.1, np.random.default_rng(0))
        assert series.values.size == 11

    def test_error_paths(self):
        state = make_state(identity_ansatz(2), ham_from([0], [0.5], 2))
        event = sharp_event((0, 0))
        with pytest.raises(ValueError):
            time_evolution_series(state, event, 10.0, 0.0, np.random.default_rng(0))
        with pytest.raises(ValueError):
            time_evolution_series(state, event, 0.04, 0.1, np.random.default_rng(0))
        with pytest.raises(ValueError):
            time_evolution_series(
                state, sharp_event((0, 0, 1)), 10.0, 0.1, np.random.default_rng(0)
            )
        with pytest.raises(ValueError):
            time_evolution_series(
                state, event, 10.0, 0.1, np.random.default_rng(0), n_draws=0
            )


class TestSpectralScore:
    @staticmethod
    def beat_series(f0, dt=0.1, n_values=251):
        t = dt * np.arange(n_values)
        return FidelitySeries(dt, np.cos(np.pi * f0 * t) ** 2)

    def test_flat_series_scores_zero(self):
        series = FidelitySeries(0.1, np.ones(101))
        assert spectral_score(series, 0.5) == pytest.approx(0.0, abs=1e-15)

    def test_oscillation_lands_in_one_bin(self):
        dt, n_values = 0.1, 251
        k = 40
        f0 = k / (n_values * dt)
        series = self.beat_series(f0, dt, n_values)
        spec = series_spectrum(series)
        assert int(np.argmax(spec.power)) == k
        # The cos^2 series carries variance 1/8 at frequency f0.
        assert spectral_score(series, f0 - 0.01) == pytest.approx(0.125, rel=1e-9)
        assert spectral_score(series, f0 + 0.01) == pytest.approx(0.0, abs=1e-12)

    def test_f_min_zero_recovers_variance(self):
        series = self.beat_series(0.8)
        got = spectral_score(series, 0.0)
        assert got == pytest.approx(float(np.var(series.values)), rel=1e-10)

    def test_two_level_state_peak_frequency(self):
        # Peak shows up at dE / (2 pi) for a two-level superposition.
        dt, n_values = 0.1, 251
        k = 40
        delta_e = 2 * np.pi * k / (n_values * dt)
        ansatz = qsim.CircuitAnsatz(2, 1, np.array([np.pi / 2.0, 0.0]))
        state = make_state(ansatz, ham_from([0, 3], [0.0, delta_e], 2))
        series = time_evolution_series(
            state, sharp_event((0, 0)), (n_values - 1) * dt, dt, np.random.default_rng(0)
        )
        spec = series_spectrum(series)
        assert int(np.argmax(spec.power)) == k
        assert spec.frequencies[k] == pytest.approx(delta_e / (2 * np.pi), abs=1e-12)

    def test_range_validation(self):
        series = FidelitySeries(0.1, np.ones(10))
        with pytest.raises(ValueError):
            spectral_score(series, -0.1)
        with pytest.raises(ValueError):
            spectral_score(series, 5.0 + 0.1)


class TestExpectationScore:
    def test_eigenstate_energy(self):
        state = make_state(identity_ansatz(2), ham_from([2], [2.4], 2))
        got = expectation_score(state, sharp_event((1, 0)), np.random.default_rng(0))
        assert got == pytest.approx(2.4, abs=1e-9)

    def test_empty_support_scores_zero(self):
        state = make_state(identity_ansatz(2), ebm.ModularHamiltonian.empty(2))
        got = expectation_score(state, sharp_event((0, 1)), np.random.default_rng(0))
        assert got == 0.0

    def test_matches_dense_oracle(self, rng):
        n = 3
        angles = rng.uniform(-np.pi, np.pi, size=4 * (n - 1))
        ansatz = qsim.CircuitAnsatz(n, 2, angles)
        support_idx = [1, 3, 4]
        energies = rng.standard_normal(3)
        state = make_state(ansatz, ham_from(support_idx, energies, n))
        event = PixelProbabilities(rng.uniform(0.2, 0.8, size=n))
        got = expectation_score(state, event, substream(4, "generation"), n_draws=16)

        draws = bernoulli_index_samples(event, 16, substream(4, "generation"))
        u = staircase_unitary(n, 2, angles)
        probs = np.abs(u) ** 2
        expected = np.mean(
            [sum(e * probs[z, x] for z, e in zip(support_idx, energies)) for x in draws]
        )
        assert got == pytest.approx(expected, abs=1e-10)


class TestScoreEvents:
    def setup_state(self, rng):
        n = 2
        angles = rng.uniform(-np.pi, np.pi, size=2)
        return make_state(
            qsim.CircuitAnsatz(n, 1, angles), ham_from([0, 3], [0.2, 1.4], n)
        )

    def test_t_zero_matches_manual_loop(self, rng):
        state = self.setup_state(rng)
        events = [PixelProbabilities(rng.uniform(0.2, 0.8, size=2)) for _ in range(4)]
        got = score_events(state, events, "t_zero", substream(6, "generation"), n_draws=3)
        manual_rng = substream(6, "generation")
        manual = [expectation_score(state, e, manual_rng, 3) for e in events]
        assert np.allclose(got, manual, atol=1e-12)

    def test_spectral_matches_manual_loop(self, rng):
        state = self.setup_state(rng)
        events = [PixelProbabilities(rng.uniform(0.2, 0.8, size=2)) for _ in range(3)]
        got = score_events(
            state, events, "spectral", substream(7, "generation"),
            f_min=0.05, total_time=20.0, dt=0.1,
        )
        manual_rng = substream(7, "generation")
        manual = []
        for e in events:
            series = time_evolution_series(state, e, 20.0, 0.1, manual_rng)
            manual.append(spectral_score(series, 0.05))
        assert np.allclose(got, manual, atol=1e-12)

    def test_error_paths(self, rng):
        state = self.setup_state(rng)
        events = [PixelProbabilities(np.array([0.5, 0.5]))]
        with pytest.raises(ValueError):
            score_events(state, events, "spectral", np.random.default_rng(0))
        with pytest.raises(ValueError):
            score_events(state, events, "entropy", np.random.default_rng(0))


class TestDiscriminationReport:
    def test_returns_roc_curve(self, rng):
        n = 2
        state = make_state(
            qsim.CircuitAnsatz(n, 1, rng.uniform(-1, 1, size=2)),
            ham_from([0, 3], [0.1, 2.0], n),
        )
        signal = [PixelProbabilities(rng.uniform(0.6, 0.9, size=n)) for _ in range(8)]
        background = [PixelProbabilities(rng.uniform(0.1, 0.4, size=n)) for _ in range(8)]
        curve = discrimination_report(
            state, signal, background, "t_zero", np.random.default_rng(0), n_draws=8
        )
        assert isinstance(curve, RocCurve)
        assert 0.5 <= curve.auc <= 1.0


class TestTwoSiteReduced:
    def test_matches_index_oracle(self, rng):
        for n in (3, 4):
            dim = 2**n
            g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
            rho = g @ g.conj().T
            rho /= np.trace(rho).real
            for i in range(n):
                for j in range(i + 1, n):
                    got = _two_site_reduced(rho, i, j, n)
                    expected = pair_reduced_matrix(rho, i, j, n)
                    assert np.allclose(got, expected, atol=1e-12)
                    assert np.trace(got) == pytest.approx(1.0, abs=1e-10)


class TestSiteEntropyProfile:
    def test_unique_ground_state_is_product(self):
        ham = ham_from([5, 2, 7], [0.0, 1.0, 2.0], 3)
        profile = site_entropy_profile(ham, 3)
        assert np.allclose(profile, 0.0, atol=1e-12)

    def test_pair_of_ground_states_differing_in_first_qubit(self):
        # 000 and 100 mix only qubit 0, entangling nothing else.
        ham = ham_from([0, 4], [0.0, 0.0], 3)
        profile = site_entropy_profile(ham, 3)
        assert profile[0] == pytest.approx(np.log(2), abs=1e-12)
        assert profile[1] == pytest.approx(0.0, abs=1e-12)

    def test_jointly_flipped_pair_localises_mixing(self):
        # 0000 and 1100 share the flip across qubits 0 and 1: both pairs
        # touching those qubits mix, the remaining pair stays pure.
        ham = ham_from([0, 12], [0.5, 0.5], 4)
        profile = site_entropy_profile(ham, 4)
        assert np.allclose(profile, [np.log(2), np.log(2), 0.0], atol=1e-12)

    def test_full_degenerate_support_is_maximally_mixed(self):
        ham = ham_from(list(range(16)), np.zeros(16), 4)
        profile = site_entropy_profile(ham, 4)
        assert np.allclose(profile, np.log(4), atol=1e-12)

    def test_dressed_profile_matches_dense_oracle(self, rng):
        n = 3
        angles = rng.uniform(-np.pi, np.pi, size=2 * (n - 1))
        ansatz = qsim.CircuitAnsatz(n, 1, angles)
        ham = ham_from([1, 6], [0.0, 0.0], n)
        profile = site_entropy_profile(ham, n, ansatz=ansatz, mode="dressed")

        rho = np.zeros((8, 8), dtype=complex)
        rho[1, 1] = rho[6, 6] = 0.5
        u = staircase_unitary(n, 1, angles)
        rho = u @ rho @ u.conj().T
        for pair in range(n - 1):
            reduced = pair_reduced_matrix(rho, pair, pair + 1, n)
            vals = np.clip(np.linalg.eigvalsh(reduced), 0.0, None)
            vals = vals[vals > 1e-12]
            expected = -np.sum(vals * np.log(vals))
            assert profile[pair] == pytest.approx(expected, abs=1e-10)

    def test_tie_tolerance_selects_ground_set(self):
        ham = ham_from([0, 3, 2], [0.0, 5e-10, 1.0], 2)
        profile = site_entropy_profile(ham, 2, tie_tol=1e-9)
        # Ground set {00, 11}: a perfectly correlated pair.
        assert profile[0] == pytest.approx(np.log(2), abs=1e-12)
        tight = site_entropy_profile(ham, 2, tie_tol=1e-12)
        assert tight[0] == pytest.approx(0.0, abs=1e-12)

    def test_mode_selection(self, rng):
        n = 2
        angles = rng.uniform(-1, 1, size=2)
        ansatz = qsim.CircuitAnsatz(n, 1, angles)
        ham = ham_from([0, 3], [0.0, 0.0], n)
        auto_with = site_entropy_profile(ham, n, ansatz=ansatz)
        dressed = site_entropy_profile(ham, n, ansatz=ansatz, mode="dressed")
        assert np.allclose(auto_with, dressed, atol=1e-12)
        auto_without = site_entropy_profile(ham, n)
        diagonal = site_entropy_profile(ham, n, ansatz=ansatz, mode="diagonal")
        assert np.allclose(auto_without, diagonal, atol=1e-12)

    def test_error_paths(self):
        ham = ham_from([0], [0.0], 2)
        with pytest.raises(ValueError):
            site_entropy_profile(ham, 3)
        with pytest.raises(ValueError):
            site_entropy_profile(ebm.ModularHamiltonian.empty(2), 2)
        with pytest.raises(ValueError):
            site_entropy_profile(ham, 2, mode="dressed")
        with pytest.raises(ValueError):
            site_entropy_profile(ham, 2, mode="fancy")


class TestScenarios:
    def test_reference_shapes(self):
        assert set(SCENARIOS) == {"six_qubit", "eight_qubit"}
        assert SCENARIOS["six_qubit"]["n_qubits"] == 6
        assert SCENARIOS["eight_qubit"]["n_qubits"] == 8
        for params in SCENARIOS.values():
            assert params["n_embed_samples"] == 5000
