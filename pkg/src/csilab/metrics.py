"""Reconstruction metrics and the AWGN perturbation used in robustness runs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["nmse", "nmse_db", "cosine_similarity", "NoiseSpec", "NOISE_PRESETS", "add_awgn"]


def _batched(H: np.ndarray) -> np.ndarray:
    H = np.asarray(H)
    return H[None, ...] if H.ndim == 2 else H


def nmse(H: np.ndarray, H_hat: np.ndarray) -> tuple[float, float]:
    """Mean over samples of ||H_hat - H||_F^2 / ||H||_F^2, linear and dB.

    A perfect reconstruction reports dB = -inf.
    """
    H, H_hat = _batched(H), _batched(H_hat)
    if H.shape != H_hat.shape:
        raise ValueError(f"nmse shape mismatch: {H.shape} vs {H_hat.shape}")
    num = np.sum(np.abs(H_hat - H) ** 2, axis=(1, 2))
    den = np.sum(np.abs(H) ** 2, axis=(1, 2))
    if np.any(den == 0):
        raise ValueError("nmse: zero-norm reference sample")
    linear = float(np.mean(num / den))
    return linear, nmse_db(linear)


def nmse_db(linear: float) -> float:
    return float("-inf") if linear == 0 else 10.0 * np.log10(linear)


def cosine_similarity(H: np.ndarray, H_hat: np.ndarray) -> float:
    """Mean per-column |<h_hat, h>| / (||h_hat|| ||h||) over columns and samples."""
    H, H_hat = _batched(H), _batched(H_hat)
    if H.shape != H_hat.shape:
        raise ValueError(f"cosine_similarity shape mismatch: {H.shape} vs {H_hat.shape}")
    num = np.abs(np.sum(H_hat.conj() * H, axis=1))  # (B, K)
    den = np.linalg.norm(H, axis=1) * np.linalg.norm(H_hat, axis=1)
    if np.any(den == 0):
        raise ValueError("cosine_similarity: zero column")
    return float(np.mean(num / den))


@dataclass(frozen=True)
class NoiseSpec:
    """Per-sample SNR drawn uniformly in [snr_low_db, snr_high_db]."""

    snr_low_db: float
    snr_high_db: float

    def __post_init__(self):
        if self.snr_low_db > self.snr_high_db:
            raise ValueError("snr_low_db must not exceed snr_high_db")


NOISE_PRESETS = {
    "0-5": NoiseSpec(0.0, 5.0),
    "5-10": NoiseSpec(5.0, 10.0),
    "10-15": NoiseSpec(10.0, 15.0),
}


def add_awgn(H: np.ndarray, spec: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    """Add i.i.d. complex Gaussian noise at a per-sample random SNR.

    SNR is mean per-element signal power over per-element noise variance,
    computed per sample.
    """
    H = _batched(np.asarray(H, dtype=complex))
    b, n, k = H.shape
    snr_db = rng.uniform(spec.snr_low_db, spec.snr_high_db, size=b)
    snr = 10.0 ** (snr_db / 10.0)
    sig_power = np.mean(np.abs(H) ** 2, axis=(1, 2))
    var = sig_power / snr
    scale = np.sqrt(var / 2.0)[:, None, None]
    noise = scale * (rng.standard_normal((b, n, k)) + 1j * rng.standard_normal((b, n, k)))
    return H + noise
