"""Dual-polarization convolutional autoencoder for precoder compression.

Encoder: the 2 x N x K real/imaginary input is split along the antenna axis
into its two polarization halves.  Each half runs through its own pair of
convolutions (8x1 then 1x8 kernels, batch norm + LReLU after each); the two
feature stacks are concatenated channel-wise so later kernels see both
polarizations at co-located positions, pass through one densely connected
encoder block, and a final dense layer with sigmoid squashing produces the
latent vector in [0, 1].

The latent is uniformly quantized (default 2 bits per value); training uses
a straight-through gradient.  The decoder mirrors the encoder: dense layer,
two densely connected blocks, and a final convolution whose four output
channels are the real/imaginary planes of the two polarization halves.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .channel import canonical_columns
from .layers import BatchNorm2d, Conv2d, Dense, Module, conv2d, lrelu, mse_loss, sigmoid
from .tensor import Tensor, concat

__all__ = [
    "ModelConfig",
    "LatentCode",
    "PolarDenseNet",
    "quantize_latent",
    "dequantize_latent",
    "ste_quantize",
    "save_checkpoint",
    "load_checkpoint",
    "preset_latent_dim",
]

CKPT_MAGIC = b"PDNCKPT1"
_CKPT_HEADER = struct.Struct("<8s8sffHHHHHHHI")

# Presets reproducing the reported feedback-bit budgets at N=32, K=13, beta=2.
# The 1/20 entry pins 40 latent values (80 bits); plain rounding would give 42.
_PRESET_LATENTS = {(32, 13, 8): 104, (32, 13, 16): 52, (32, 13, 20): 40}


def preset_latent_dim(n: int, k: int, gamma: float) -> int:
    denom = round(1.0 / gamma)
    if abs(1.0 / denom - gamma) < 1e-12 and (n, k, denom) in _PRESET_LATENTS:
        return _PRESET_LATENTS[(n, k, denom)]
    return max(1, round(2 * n * k * gamma))


@dataclass(frozen=True)
class ModelConfig:
    n: int = 32
    k: int = 13
    gamma: float = 1 / 8
    beta: int = 2
    latent_dim: int | None = None  # default: preset_latent_dim(n, k, gamma)
    path_channels: int = 8
    dense_block_layers: int = 3
    growth_channels: int = 8
    alpha: float = 0.3
    shared_paths: bool = False  # ablation: one conv path reused for both halves

    def __post_init__(self):
        if self.n % 2:
            raise ValueError("antenna count must be even (polarization split)")
        if self.latent_dim is not None and self.latent_dim < 1:
            raise ValueError("latent_dim must be positive")

    @property
    def latent(self) -> int:
        if self.latent_dim is not None:
            return self.latent_dim
        return preset_latent_dim(self.n, self.k, self.gamma)

    @property
    def arch_descriptor(self) -> str:
        return (
            f"pdn:n={self.n},k={self.k},latent={self.latent},"
            f"pc={self.path_channels},layers={self.dense_block_layers},"
            f"growth={self.growth_channels},shared={int(self.shared_paths)}"
        )


@dataclass
class LatentCode:
    """Quantized latent: integer levels in [0, 2^beta - 1]."""

    levels: np.ndarray
    gamma: float
    beta: int

    @property
    def bit_length(self) -> int:
        return self.levels.shape[-1] * self.beta


def quantize_latent(latent: np.ndarray, gamma: float, beta: int) -> LatentCode:
    """Uniform quantization of values in [0, 1]; round-half-up to the grid."""
    levels_max = (1 << beta) - 1
    x = np.clip(latent, 0.0, 1.0)
    levels = np.floor(x * levels_max + 0.5).astype(np.int64)
    return LatentCode(levels=levels, gamma=gamma, beta=beta)


def dequantize_latent(code: LatentCode) -> np.ndarray:
    return code.levels.astype(np.float64) / ((1 << code.beta) - 1)


def ste_quantize(x: Tensor, beta: int) -> Tensor:
    """In-graph uniform quantizer with a straight-through backward."""
    levels_max = (1 << beta) - 1
    q = np.floor(np.clip(x.data, 0.0, 1.0) * levels_max + 0.5) / levels_max

    def backward(grad):
        if x.requires_grad:
            x._accumulate(grad)

    return Tensor._from_op(q.astype(x.dtype), (x,), backward)


class _ConvBNAct(Module):
    def __init__(self, cin, cout, kernel, alpha, rng, dtype):
        self.conv = Conv2d(cin, cout, kernel, rng, dtype)
        self.bn = BatchNorm2d(cout, dtype=dtype)
        self.alpha = alpha

    def forward(self, x):
        return lrelu(self.bn(self.conv(x)), self.alpha)


class DenseBlock(Module):
    """Densely connected conv block: each 3x3 layer consumes the running
    concatenation of the block input and all previous layer outputs."""

    def __init__(self, cin, layers, growth, alpha, rng, dtype):
        self.layers = [
            _ConvBNAct(cin + i * growth, growth, (3, 3), alpha, rng, dtype)
            for i in range(layers)
        ]
        self.out_channels = cin + layers * growth

    def forward(self, x):
        feats = [x]
        for layer in self.layers:
            current = feats[0] if len(feats) == 1 else concat(feats, axis=1)
            feats.append(layer(current))
        return concat(feats, axis=1)


class _EncoderPath(Module):
    """Per-polarization feature extractor: 8x1 then 1x8 convolutions."""

    def __init__(self, pc, alpha, rng, dtype):
        self.spatial = _ConvBNAct(2, pc, (8, 1), alpha, rng, dtype)
        self.frequency = _ConvBNAct(pc, pc, (1, 8), alpha, rng, dtype)

    def forward(self, x):
        return self.frequency(self.spatial(x))


class PolarDenseNet(Module):
    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=np.float64):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        pc = cfg.path_channels
        half = cfg.n // 2
        flat = 2 * pc * half * cfg.k

        self.path_a = _EncoderPath(pc, cfg.alpha, rng, dtype)
        self.path_b = self.path_a if cfg.shared_paths else _EncoderPath(
            pc, cfg.alpha, rng, dtype
        )
        self.enc_block = DenseBlock(
            2 * pc, cfg.dense_block_layers, cfg.growth_channels, cfg.alpha, rng, dtype
        )
        self.enc_dense = Dense(self.enc_block.out_channels * half * cfg.k,
                               cfg.latent, rng, dtype)

        self.dec_dense = Dense(cfg.latent, flat, rng, dtype)
        self.dec_block1 = DenseBlock(
            2 * pc, cfg.dense_block_layers, cfg.growth_channels, cfg.alpha, rng, dtype
        )
        self.dec_block2 = DenseBlock(
            self.dec_block1.out_channels, cfg.dense_block_layers,
            cfg.growth_channels, cfg.alpha, rng, dtype,
        )
        self.dec_conv = Conv2d(self.dec_block2.out_channels, 4, (3, 3), rng, dtype)

    # -- encoder ------------------------------------------------------------

    def path_features(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """Pre-concatenation activations of the two polarization paths."""
        half = self.cfg.n // 2
        upper = x[:, :, :half, :]
        lower = x[:, :, half:, :]
        return self.path_a(upper), self.path_b(lower)

    def encode_tensor(self, x: Tensor) -> Tensor:
        """(B, 2, N, K) planes -> (B, latent) values in [0, 1]."""
        if x.shape[1:] != (2, self.cfg.n, self.cfg.k):
            raise ValueError(
                f"expected (B, 2, {self.cfg.n}, {self.cfg.k}) input, got {x.shape}"
            )
        fa, fb = self.path_features(x)
        features = self.enc_block(concat([fa, fb], axis=1))
        flat = features.reshape(features.shape[0], -1)
        return sigmoid(self.enc_dense(flat))

    def decode_tensor(self, latent: Tensor) -> Tensor:
        """(B, latent) -> (B, 2, N, K) reconstruction planes."""
        pc = self.cfg.path_channels
        half = self.cfg.n // 2
        z = self.dec_dense(latent)
        z = z.reshape(z.shape[0], 2 * pc, half, self.cfg.k)
        z = self.dec_block2(self.dec_block1(z))
        planes4 = conv2d(z, self.dec_conv.weight, self.dec_conv.bias)
        upper = planes4[:, 0:2, :, :]
        lower = planes4[:, 2:4, :, :]
        return concat([upper, lower], axis=2)

    def forward(self, x: Tensor, quantize: bool = True) -> Tensor:
        """End-to-end reconstruction of input planes (training path)."""
        latent = self.encode_tensor(x)
        if quantize:
            latent = ste_quantize(latent, self.cfg.beta)
        return self.decode_tensor(latent)

    # -- inference API on complex matrices ----------------------------------

    def encode(self, H: np.ndarray) -> np.ndarray:
        """Complex (N, K) or (B, N, K) -> latent values in [0, 1]."""
        planes, squeeze = self._to_planes(H)
        out = self.encode_tensor(Tensor(planes.astype(self.dtype)))
        return out.data[0] if squeeze else out.data

    def compress(self, H: np.ndarray) -> LatentCode:
        return quantize_latent(self.encode(H), self.cfg.gamma, self.cfg.beta)

    def decode(self, code: LatentCode) -> np.ndarray:
        """Latent code -> complex matrix with unit-norm canonical columns."""
        latent = dequantize_latent(code)
        squeeze = latent.ndim == 1
        if squeeze:
            latent = latent[None, :]
        if latent.shape[1] != self.cfg.latent:
            raise ValueError(
                f"latent length {latent.shape[1]} != model's {self.cfg.latent}"
            )
        planes = self.decode_tensor(Tensor(latent.astype(self.dtype))).data
        H = canonical_columns(planes[:, 0] + 1j * planes[:, 1])
        return H[0] if squeeze else H

    def reconstruct(self, H: np.ndarray) -> np.ndarray:
        """encode -> quantize -> decode round trip."""
        return self.decode(self.compress(H))

    def _to_planes(self, H: np.ndarray) -> tuple[np.ndarray, bool]:
        H = np.asarray(H)
        squeeze = H.ndim == 2
        if squeeze:
            H = H[None, ...]
        if H.shape[1:] != (self.cfg.n, self.cfg.k):
            raise ValueError(
                f"expected ({self.cfg.n}, {self.cfg.k}) matrices, got {H.shape[1:]}"
            )
        return np.stack([H.real, H.imag], axis=1), squeeze

    # -- persistence --------------------------------------------------------

    def state_blocks(self) -> list[tuple[str, np.ndarray]]:
        blocks = list((n, p.data) for n, p in self.named_parameters())
        for i, mod in enumerate(self.modules()):
            if isinstance(mod, BatchNorm2d):
                blocks.append((f"bn{i}.running_mean", mod.running_mean))
                blocks.append((f"bn{i}.running_var", mod.running_var))
        return blocks

    def load_state_blocks(self, blocks: dict[str, np.ndarray]) -> None:
        for name, param in self.named_parameters():
            if name not in blocks:
                raise ValueError(f"checkpoint missing parameter {name!r}")
            if blocks[name].shape != param.data.shape:
                raise ValueError(f"shape mismatch for {name!r}")
            param.data = blocks[name].astype(self.dtype)
        for i, mod in enumerate(self.modules()):
            if isinstance(mod, BatchNorm2d):
                mod.running_mean = blocks[f"bn{i}.running_mean"].astype(self.dtype)
                mod.running_var = blocks[f"bn{i}.running_var"].astype(self.dtype)


def _arch_hash(cfg: ModelConfig) -> bytes:
    return hashlib.sha256(cfg.arch_descriptor.encode()).digest()[:8]


def save_checkpoint(path, model: PolarDenseNet) -> None:
    """Versioned binary checkpoint; see docs/formats.md for the exact layout."""
    cfg = model.cfg
    blocks = model.state_blocks()
    with open(path, "wb") as fh:
        fh.write(
            _CKPT_HEADER.pack(
                CKPT_MAGIC, _arch_hash(cfg), cfg.gamma, cfg.alpha, cfg.beta,
                cfg.n, cfg.k, cfg.path_channels, cfg.dense_block_layers,
                cfg.growth_channels, int(cfg.shared_paths), len(blocks),
            )
        )
        for name, arr in blocks:
            encoded = name.encode()
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path, dtype=np.float64) -> PolarDenseNet:
    with open(path, "rb") as fh:
        header = fh.read(_CKPT_HEADER.size)
        if len(header) < _CKPT_HEADER.size:
            raise ValueError(f"{path}: truncated checkpoint header")
        (magic, arch, gamma, alpha, beta, n, k, pc, layers, growth,
         shared, nblocks) = _CKPT_HEADER.unpack(header)
        if magic != CKPT_MAGIC:
            raise ValueError(f"{path}: bad checkpoint magic {magic!r}")
        blocks: dict[str, np.ndarray] = {}
        for _ in range(nblocks):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode()
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(4 * count), dtype="<f4").reshape(shape)
            blocks[name] = data.astype(np.float64)
    # Latent size is recoverable from the dense layer shapes.
    latent = blocks["enc_dense.bias"].shape[0]
    cfg = ModelConfig(
        n=n, k=k, gamma=float(gamma), beta=beta, latent_dim=latent,
        path_channels=pc, dense_block_layers=layers, growth_channels=growth,
        alpha=float(alpha), shared_paths=bool(shared),
    )
    if _arch_hash(cfg) != arch:
        raise ValueError(f"{path}: architecture hash mismatch")
    model = PolarDenseNet(cfg, dtype=dtype)
    model.load_state_blocks(blocks)
    return model
