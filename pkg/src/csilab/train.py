"""Training loop for the autoencoder: Adam + warm-up cosine schedule."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .channel import canonical_columns
from .layers import mse_loss
from .metrics import NoiseSpec, add_awgn, cosine_similarity, nmse
from .model import PolarDenseNet
from .optim import Adam, CosineWarmupSchedule
from .tensor import Tensor

__all__ = [
    "TrainConfig",
    "DivergenceError",
    "train",
    "write_history",
    "evaluate_model",
    "projection_loss",
    "augment_batch",
]


class DivergenceError(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 400
    batch_size: int = 200
    lr_max: float = 1e-2
    lr_min: float = 1e-4
    warmup: int = 30
    quantize: bool = True
    seed: int = 0
    noise: NoiseSpec | None = None  # applied to inputs; targets stay clean
    eval_every: int = 1  # validation cadence in epochs (last epoch always runs)
    proj_weight: float = 0.0  # weight of the projection (1 - rho^2) loss term
    dither: bool = False  # train through additive uniform dither instead of STE
    augment: bool = False  # symmetry augmentation: conjugate / pol swap / shift


def _planes(model: PolarDenseNet, H: np.ndarray) -> np.ndarray:
    return np.stack([H.real, H.imag], axis=1).astype(model.dtype)


def projection_loss(out: Tensor, target_planes: np.ndarray) -> Tensor:
    """Mean per-column ``1 - rho^2`` between the output and the target.

    The target's columns are unit norm, so the squared inner product over the
    output's column energy is the squared cosine similarity.  Unlike MSE this
    term is invariant to per-column gain, which is also how the reconstruction
    is scored.
    """
    hr, hi = target_planes[:, 0], target_planes[:, 1]
    xr, xi = out[:, 0, :, :], out[:, 1, :, :]
    re = (xr * hr + xi * hi).sum(axis=1)
    im = (xi * hr - xr * hi).sum(axis=1)
    den = (xr * xr + xi * xi).sum(axis=1) + 1e-12
    return (1.0 - (re * re + im * im) / den).mean()


def augment_batch(H: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random symmetries of the precoder distribution, applied per sample.

    Conjugation mirrors the angular spectrum, swapping the polarization halves
    relabels two independent fading blocks, and a circular subband shift moves
    the frequency reference.  All three keep the marginal distribution of the
    corpus; the result is re-canonicalized so the phase convention holds.
    """
    out = H.copy()
    half = out.shape[1] // 2
    conj = rng.random(len(out)) < 0.5
    out[conj] = out[conj].conj()
    swap = rng.random(len(out)) < 0.5
    out[swap] = np.concatenate([out[swap][:, half:], out[swap][:, :half]], axis=1)
    shifts = rng.integers(0, out.shape[2], len(out))
    for i, s in enumerate(shifts):
        if s:
            out[i] = np.roll(out[i], s, axis=1)
    return canonical_columns(out)


def evaluate_model(
    model: PolarDenseNet, H: np.ndarray, batch_size: int = 200,
    noise: NoiseSpec | None = None, rng: np.random.Generator | None = None,
) -> dict:
    """Eval-mode metrics against clean targets; inputs optionally noisy."""
    from .tensor import no_grad

    model.eval()
    if noise is not None and rng is None:
        raise ValueError("noisy evaluation needs an rng")
    inputs = H if noise is None else add_awgn(H, noise, rng)
    mse_total = 0.0
    recon = np.empty_like(np.asarray(H, dtype=complex))
    target = _planes(model, H)
    for lo in range(0, H.shape[0], batch_size):
        hi = min(lo + batch_size, H.shape[0])
        with no_grad():
            out = model.forward(Tensor(_planes(model, inputs[lo:hi])), quantize=True)
        mse_total += float(np.sum((out.data - target[lo:hi]) ** 2))
        block = out.data[:, 0].astype(np.float64) + 1j * out.data[:, 1]
        recon[lo:hi] = canonical_columns(block)
    linear, db = nmse(H, recon)
    return {
        "mse": mse_total / H.shape[0],
        "nmse": linear,
        "nmse_db": db,
        "rho": cosine_similarity(H, recon),
    }


def train(
    model: PolarDenseNet,
    train_H: np.ndarray,
    val_H: np.ndarray,
    cfg: TrainConfig | None = None,
) -> list[dict]:
    """Minimize reconstruction MSE (optionally plus a weighted projection
    term); returns the per-epoch history.

    The model is left holding the parameters that scored the best validation
    MSE.  Aborts with :class:`DivergenceError` on a non-finite loss.
    """
    cfg = cfg or TrainConfig()
    rng = np.random.default_rng(cfg.seed)
    optimizer = Adam(model.parameters())
    schedule = CosineWarmupSchedule(cfg.lr_min, cfg.lr_max, cfg.warmup, cfg.epochs)
    targets = _planes(model, train_H)
    n = targets.shape[0]
    history: list[dict] = []
    best = (np.inf, None)
    dither_step = 1.0 / ((1 << model.cfg.beta) - 1)

    for epoch in range(cfg.epochs):
        lr = schedule.lr(epoch)
        model.train()
        order = rng.permutation(n)
        if cfg.noise is not None and not cfg.augment:
            inputs = _planes(model, add_awgn(train_H, cfg.noise, rng))
        else:
            inputs = targets
        epoch_loss = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            if cfg.augment:
                Hb = augment_batch(train_H[idx], rng)
                if cfg.noise is not None:
                    Hb_in = add_awgn(Hb, cfg.noise, rng)
                else:
                    Hb_in = Hb
                batch_targets = _planes(model, Hb)
                x = Tensor(_planes(model, Hb_in))
            else:
                batch_targets = targets[idx]
                x = Tensor(inputs[idx])
            if cfg.dither and cfg.quantize:
                latent = model.encode_tensor(x)
                noise = rng.uniform(
                    -dither_step / 2, dither_step / 2, latent.shape
                ).astype(model.dtype)
                out = model.decode_tensor(latent + Tensor(noise))
            else:
                out = model.forward(x, quantize=cfg.quantize)
            loss = mse_loss(out, Tensor(batch_targets))
            if cfg.proj_weight > 0:
                loss = loss + projection_loss(out, batch_targets).scale(cfg.proj_weight)
            value = loss.item()
            if not np.isfinite(value):
                raise DivergenceError(
                    f"non-finite loss {value} at epoch {epoch}, lr {lr:.2e}"
                )
            epoch_loss += value * len(idx)
            model.zero_grad()
            loss.backward()
            optimizer.step(lr)
        row = {"epoch": epoch, "lr": lr, "train_mse": epoch_loss / n,
               "val_mse": float("nan"), "val_nmse_db": float("nan")}
        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs - 1:
            val = evaluate_model(model, val_H, cfg.batch_size)
            row["val_mse"] = val["mse"]
            row["val_nmse_db"] = val["nmse_db"]
            if val["mse"] < best[0]:
                best = (val["mse"], [(k, v.copy()) for k, v in model.state_blocks()])
        history.append(row)

    if best[1] is not None:
        model.load_state_blocks(dict(best[1]))
    return history


def write_history(path, history: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "lr", "train_mse", "val_mse", "val_nmse_db"])
        for row in history:
            writer.writerow(
                [
                    row["epoch"],
                    f"{row['lr']:.6e}",
                    f"{row['train_mse']:.10e}",
                    f"{row['val_mse']:.10e}",
                    f"{row['val_nmse_db']:.6f}",
                ]
            )
