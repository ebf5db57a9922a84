"""Distance and spectral measures for states, distributions and signals.

Density-matrix measures go through Hermitian eigendecompositions with
small negative eigenvalues clipped at zero; inputs whose spectrum dips
below -1e-8 are rejected as numerically invalid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embed import DensityMatrix
from .errors import NumericError

PSD_TOL = 1e-8
EIG_FLOOR = 1e-12


def _checked_matrix(state: DensityMatrix) -> np.ndarray:
    m = state.entries
    if not np.allclose(m, m.conj().T, atol=PSD_TOL):
        raise NumericError("density matrix is not Hermitian")
    return (m + m.conj().T) / 2.0


def _clipped_eigh(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(m)
    if vals.min() < -PSD_TOL:
        raise NumericError(f"matrix has negative eigenvalue {vals.min()}")
    return np.clip(vals, 0.0, None), vecs


def _same_dim(a: DensityMatrix, b: DensityMatrix) -> None:
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")


def fidelity(a: DensityMatrix, b: DensityMatrix) -> float:
    """Uhlmann fidelity (tr sqrt(sqrt(a) b sqrt(a)))**2.

    Computed from Hermitian eigendecompositions; equals 1 iff the states
    coincide and 0 iff their supports are orthogonal.
    """
    _same_dim(a, b)
    ma, mb = _checked_matrix(a), _checked_matrix(b)
    vals, vecs = _clipped_eigh(ma)
    sqrt_a = (vecs * np.sqrt(vals)) @ vecs.conj().T
    inner = sqrt_a @ mb @ sqrt_a
    inner_vals, _ = _clipped_eigh((inner + inner.conj().T) / 2.0)
    return float(np.sum(np.sqrt(inner_vals)) ** 2)


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    """Half the sum of absolute eigenvalues of a - b."""
    _same_dim(a, b)
    diff = _checked_matrix(a) - _checked_matrix(b)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))


def von_neumann_entropy(state: DensityMatrix) -> float:
    """-sum_i p_i log p_i over the spectrum, in nats.

    Eigenvalues at or below 1e-12 are treated as exact zeros.
    """
    vals, _ = _clipped_eigh(_checked_matrix(state))
    probs = vals[vals > EIG_FLOOR]
    return max(float(-np.sum(probs * np.log(probs))), 0.0)


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """Classical KL divergence sum_i p_i log(p_i / q_i) in nats.

    Both arguments must sum to one within 1e-8.  Zero-probability q bins
    are floored at 1e-12, so the divergence stays finite.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {q.shape}")
    if np.any(p < 0.0) or np.any(q < 0.0):
        raise NumericError("probabilities must be non-negative")
    if abs(p.sum() - 1.0) > 1e-8 or abs(q.sum() - 1.0) > 1e-8:
        raise NumericError(
            f"distributions must be normalised, got sums {p.sum()} and {q.sum()}"
        )
    mask = p > 0.0
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(np.maximum(q[mask], EIG_FLOOR)))))


def bernoulli_marginal_kl(p: np.ndarray, q: np.ndarray) -> float:
    """Sum over pixels of KL between the per-pixel Bernoulli marginals."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError(f"need matching 1-d marginals, got {p.shape} and {q.shape}")
    total = 0.0
    for pk, qk in zip(p, q):
        total += kl_divergence(np.array([1.0 - pk, pk]), np.array([1.0 - qk, qk]))
    return total


def quantum_relative_entropy(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """tr rho (log rho - log sigma), with sigma's spectrum floored at 1e-12."""
    _same_dim(rho, sigma)
    m_rho, m_sigma = _checked_matrix(rho), _checked_matrix(sigma)
    rho_vals, _ = _clipped_eigh(m_rho)
    probs = rho_vals[rho_vals > EIG_FLOOR]
    tr_rho_log_rho = float(np.sum(probs * np.log(probs)))
    sigma_vals, sigma_vecs = _clipped_eigh(m_sigma)
    log_sigma = (sigma_vecs * np.log(np.maximum(sigma_vals, EIG_FLOOR))) @ sigma_vecs.conj().T
    tr_rho_log_sigma = float(np.real(np.trace(m_rho @ log_sigma)))
    return tr_rho_log_rho - tr_rho_log_sigma


@dataclass
class PowerSpectrum:
    """One-sided power spectrum: frequencies in cycles per time unit."""

    frequencies: np.ndarray
    power: np.ndarray

    @property
    def resolution(self) -> float:
        return float(self.frequencies[1] - self.frequencies[0])


def power_spectrum(values: np.ndarray, dt: float) -> PowerSpectrum:
    """Mean-subtracted one-sided power: 2 * dt**2 / T * |FFT|**2.

    T = N * dt is the record length; the spectrum has floor(N/2) + 1
    bins at frequencies k / T up to the Nyquist frequency 1 / (2 dt).
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size < 2:
        raise ValueError(f"need a 1-d signal of length >= 2, got shape {values.shape}")
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    n = values.size
    total_time = n * dt
    spectrum = np.fft.rfft(values - values.mean())
    power = np.real(2.0 * dt**2 / total_time * np.abs(spectrum) ** 2)
    freqs = np.fft.rfftfreq(n, d=dt)
    return PowerSpectrum(freqs, power)


@dataclass
class RocCurve:
    """ROC sweep over linearly spaced thresholds.

    ``direction`` records whether large ("high") or small ("low") scores
    were treated as signal-like; it is chosen so that auc >= 0.5.  The
    thresholds are ordered from most to least exclusive, so tpr and fpr
    are non-decreasing along the sweep.  The trapezoidal ``auc``
    includes the implicit (0, 0) anchor point.
    """

    thresholds: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray
    auc: float
    direction: str


def _sweep(signal: np.ndarray, background: np.ndarray, thresholds: np.ndarray):
    tpr = np.array([(signal >= t).mean() for t in thresholds])
    fpr = np.array([(background >= t).mean() for t in thresholds])
    return tpr, fpr


def _anchored_auc(tpr: np.ndarray, fpr: np.ndarray) -> float:
    xs = np.concatenate([[0.0], fpr])
    ys = np.concatenate([[0.0], tpr])
    return float(np.trapezoid(ys, xs))


def roc_from_scores(
    signal_scores: np.ndarray,
    background_scores: np.ndarray,
    n_thresholds: int = 200,
) -> RocCurve:
    """ROC curve from per-event scores of the two classes.

    Thresholds are linearly spaced over the pooled score range and swept
    from high to low, counting events at or above each threshold.  The
    score direction is flipped automatically if needed so the curve sits
    above the diagonal.
    """
    signal = np.asarray(signal_scores, dtype=np.float64)
    background = np.asarray(background_scores, dtype=np.float64)
    if signal.size == 0 or background.size == 0:
        raise ValueError("both score sets must be non-empty")
    if not (np.all(np.isfinite(signal)) and np.all(np.isfinite(background))):
        raise ValueError("scores must be finite")
    if n_thresholds < 2:
        raise ValueError(f"n_thresholds must be >= 2, got {n_thresholds}")

    pooled_min = min(signal.min(), background.min())
    pooled_max = max(signal.max(), background.max())
    if pooled_max == pooled_min:
        # Degenerate constant scores: undiscriminating diagonal curve.
        pooled_max = pooled_min + 1.0

    thresholds = np.linspace(pooled_max, pooled_min, n_thresholds)
    tpr, fpr = _sweep(signal, background, thresholds)
    auc = _anchored_auc(tpr, fpr)
    direction = "high"
    if auc < 0.5:
        tpr, fpr = _sweep(-signal, -background, -thresholds[::-1])
        thresholds = thresholds[::-1]
        auc = _anchored_auc(tpr, fpr)
        direction = "low"
    return RocCurve(thresholds, tpr, fpr, auc, direction)
