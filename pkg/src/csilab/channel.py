"""Synthetic clustered-multipath MIMO-OFDM channel and precoder extraction.

The generator is a documented stand-in for a full system-level simulator:
each sample draws a small number of propagation paths (complex gain, delay,
departure/arrival angles, per-path polarization phase offset) around a random
cluster center.  Per-RB channels are rank-1 sums of steering-vector outer
products with frequency-dependent delay phases; the transmit array is
dual-polarized, realized as two stacked copies of the positional steering
vector with the second copy rotated by the path's polarization phase.

Per subband, the dominant eigenvector of the RB-averaged transmit covariance
becomes one column of the precoder channel matrix.  Columns are unit-norm and
phase-canonical (first element real, non-negative).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AntennaConfig",
    "OfdmConfig",
    "ChannelParams",
    "MultipathRealization",
    "synthesize_rb_channels",
    "canonical_phase",
    "canonical_columns",
    "dominant_eigenvector",
    "build_precoder_matrix",
    "generate_samples",
]


@dataclass(frozen=True)
class AntennaConfig:
    """Dual-polarized transmit array: N = 2 * n1 * n2 ports."""

    n1: int = 16
    n2: int = 1
    n_rx: int = 4

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1 or self.n_rx < 1:
            raise ValueError("antenna extents must be positive")

    @property
    def n(self) -> int:
        return 2 * self.n1 * self.n2


@dataclass(frozen=True)
class OfdmConfig:
    rbs: int = 52
    subband_rb: int = 4
    subcarrier_spacing: float = 15e3

    def __post_init__(self):
        if self.rbs < 1 or self.subband_rb < 1:
            raise ValueError("OFDM extents must be positive")

    @property
    def subcarriers(self) -> int:
        return self.rbs * 12

    @property
    def k(self) -> int:
        return math.ceil(self.rbs / self.subband_rb)


@dataclass(frozen=True)
class ChannelParams:
    """Knobs of the clustered-multipath generator."""

    paths: int = 8
    delay_spread: float = 300e-9  # exponential delay scale, seconds
    angle_spread_deg: float = 15.0  # Gaussian spread around the cluster center
    sector_deg: float = 60.0  # cluster centers drawn uniformly in +-sector


@dataclass
class MultipathRealization:
    """One drawn set of paths; gain powers are normalized to sum to 1."""

    gains: np.ndarray  # complex (P,)
    delays: np.ndarray  # seconds (P,)
    aod: np.ndarray  # departure azimuth, radians (P,)
    aoa: np.ndarray  # arrival azimuth, radians (P,)
    zod: np.ndarray  # departure zenith offset from broadside, radians (P,)
    pol_phase: np.ndarray  # per-path polarization phase offset, radians (P,)


def draw_multipath(rng: np.random.Generator, params: ChannelParams) -> MultipathRealization:
    p = params.paths
    gains = (rng.standard_normal(p) + 1j * rng.standard_normal(p)) / np.sqrt(2)
    # Exponentially decaying power-delay profile, then exact normalization.
    gains *= np.exp(-0.5 * np.arange(p) / max(p - 1, 1) * 3)
    gains /= np.linalg.norm(gains)
    delays = rng.exponential(params.delay_spread, size=p)
    delays[0] = 0.0  # first path is the reference
    center = rng.uniform(-params.sector_deg, params.sector_deg)
    spread = params.angle_spread_deg
    aod = np.deg2rad(center + rng.normal(0, spread, size=p))
    aoa = rng.uniform(-np.pi / 3, np.pi / 3, size=p)
    zod = np.deg2rad(rng.normal(0, spread / 2, size=p))
    pol_phase = rng.uniform(0, 2 * np.pi, size=p)
    return MultipathRealization(gains, delays, aod, aoa, zod, pol_phase)


def _ula_steering(n: int, angle: np.ndarray) -> np.ndarray:
    """Half-wavelength ULA steering vectors, shape (n, P); unit-modulus entries."""
    m = np.arange(n)[:, None]
    return np.exp(1j * np.pi * m * np.sin(np.atleast_1d(angle))[None, :])


def _tx_steering(cfg: AntennaConfig, mp: MultipathRealization) -> np.ndarray:
    """Positional steering per path for the n1 x n2 panel, shape (n1*n2, P)."""
    ah = _ula_steering(cfg.n1, mp.aod)
    av = _ula_steering(cfg.n2, mp.zod)
    # Panel layout: vertical index varies slowest.
    return (av[:, None, :] * ah[None, :, :]).reshape(cfg.n1 * cfg.n2, -1)


def synthesize_rb_channels(
    ant: AntennaConfig, ofdm: OfdmConfig, mp: MultipathRealization
) -> np.ndarray:
    """Per-RB channel matrices, complex array of shape (rbs, N, n_rx).

    Each RB is evaluated at its center subcarrier frequency.  With unit-power
    path gains the expected squared Frobenius norm per RB is N * n_rx.
    """
    a_pos = _tx_steering(ant, mp)  # (n1*n2, P)
    a_tx = np.concatenate([a_pos, a_pos * np.exp(1j * mp.pol_phase)[None, :]], axis=0)
    a_rx = _ula_steering(ant.n_rx, mp.aoa)  # (n_rx, P)
    rb_center = 12 * np.arange(ofdm.rbs) + 5.5
    freqs = rb_center * ofdm.subcarrier_spacing  # (rbs,)
    phases = np.exp(-2j * np.pi * freqs[:, None] * mp.delays[None, :])  # (rbs, P)
    weighted = mp.gains[None, :] * phases  # (rbs, P)
    # h_rb = sum_p w[rb,p] * a_tx[:,p] a_rx[:,p]^H
    return np.einsum("rp,np,mp->rnm", weighted, a_tx, a_rx.conj(), optimize=True)


def canonical_phase(v: np.ndarray) -> np.ndarray:
    """Rotate so the first nonzero element is real and non-negative."""
    idx = np.flatnonzero(np.abs(v) > 0)
    if idx.size == 0:
        return v
    return v * np.exp(-1j * np.angle(v[idx[0]]))


def canonical_columns(H: np.ndarray) -> np.ndarray:
    """Vectorized per-column unit norm + canonical phase for (B, N, K).

    Matches applying ``canonical_phase`` to each normalized column; zero
    columns pass through untouched.
    """
    H = np.array(H)
    norms = np.linalg.norm(H, axis=1, keepdims=True)
    np.divide(H, norms, out=H, where=norms > 0)
    mask = np.abs(H) > 0
    first = np.argmax(mask, axis=1)  # (B, K) index of first nonzero row
    any_nz = mask.any(axis=1)
    b_idx = np.arange(H.shape[0])[:, None]
    k_idx = np.arange(H.shape[2])[None, :]
    ref = H[b_idx, first, k_idx]
    phase = np.where(any_nz, np.exp(-1j * np.angle(ref)), 1.0)
    return H * phase[:, None, :]


def dominant_eigenvector(
    R: np.ndarray, tol: float = 1e-10, max_iter: int = 20000
) -> tuple[np.ndarray, float]:
    """Dominant eigenpair of a Hermitian PSD matrix by power iteration.

    The input is symmetrized first.  Returns a unit-norm, phase-canonical
    eigenvector and its (real) eigenvalue; the residual satisfies
    ``||R v - lam v|| <= 1e-8 * lam`` on exit for any nonzero spectrum.
    """
    if not np.all(np.isfinite(R.real)) or not np.all(np.isfinite(R.imag)):
        raise ValueError("dominant_eigenvector: non-finite entries")
    R = 0.5 * (R + R.conj().T)
    n = R.shape[0]
    col_norms = np.linalg.norm(R, axis=0)
    lam = 0.0
    if col_norms.max() == 0.0:
        v = np.zeros(n, dtype=complex)
        v[0] = 1.0
        return v, 0.0
    v = R[:, int(np.argmax(col_norms))].astype(complex)
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        w = R @ v
        lam = float(np.real(np.vdot(v, w)))
        resid = np.linalg.norm(w - lam * v)
        if resid <= max(tol, 1e-9 * abs(lam)):
            break
        nw = np.linalg.norm(w)
        if nw == 0.0:
            break
        v = w / nw
    return canonical_phase(v), lam


def build_precoder_matrix(
    rb_channels: np.ndarray, ofdm: OfdmConfig
) -> np.ndarray:
    """Stack per-subband dominant eigenvectors into an N x K matrix.

    Per subband the transmit covariance is averaged over its RBs:
    R_k = (1/M) sum_{rb in k} h h^H with h the (N, n_rx) RB channel.
    """
    rbs, n, _ = rb_channels.shape
    if rbs != ofdm.rbs:
        raise ValueError(f"expected {ofdm.rbs} RB channels, got {rbs}")
    cols = []
    for k in range(ofdm.k):
        lo = k * ofdm.subband_rb
        hi = min(lo + ofdm.subband_rb, rbs)
        if hi <= lo:
            raise ValueError(f"subband {k} is empty")
        block = rb_channels[lo:hi]  # (M, N, n_rx)
        R = np.einsum("mnr,mpr->np", block, block.conj()) / (hi - lo)
        v, _ = dominant_eigenvector(R)
        cols.append(v)
    return np.stack(cols, axis=1)


def generate_samples(
    count: int,
    seed: int,
    ant: AntennaConfig | None = None,
    ofdm: OfdmConfig | None = None,
    params: ChannelParams | None = None,
) -> np.ndarray:
    """Generate ``count`` precoder channel matrices, shape (count, N, K)."""
    ant = ant or AntennaConfig()
    ofdm = ofdm or OfdmConfig()
    params = params or ChannelParams()
    rng = np.random.default_rng(seed)
    out = np.empty((count, ant.n, ofdm.k), dtype=complex)
    for i in range(count):
        mp = draw_multipath(rng, params)
        rb = synthesize_rb_channels(ant, ofdm, mp)
        out[i] = build_precoder_matrix(rb, ofdm)
    return out
