"""Command-line front door: generate / train / eval / inspect.

Exit codes: 0 success, 2 configuration error, 3 missing artifact.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .channel import AntennaConfig, ChannelParams, OfdmConfig, generate_samples
from .dataset import DatasetFormatError, load_config, read_dataset, write_dataset
from .experiment import ConfigError, MissingArtifactError, run_experiment, write_heatmap
from .metrics import NOISE_PRESETS
from .model import ModelConfig, PolarDenseNet, save_checkpoint
from .train import TrainConfig, train, write_history

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3


def _flat(config: dict[str, dict[str, str]], *sections: str) -> dict[str, str]:
    merged: dict[str, str] = {}
    for section in ("",) + sections:
        merged.update(config.get(section, {}))
    return merged


def _cmd_generate(args) -> int:
    cfg = _flat(load_config(args.config), "dataset", "channel")
    ant = AntennaConfig(
        n1=int(cfg.get("n1", 16)),
        n2=int(cfg.get("n2", 1)),
        n_rx=int(cfg.get("n_rx", 4)),
    )
    ofdm = OfdmConfig(
        rbs=int(cfg.get("rbs", 52)), subband_rb=int(cfg.get("subband_rb", 4))
    )
    params = ChannelParams(
        paths=int(cfg.get("paths", 8)),
        delay_spread=float(cfg.get("delay_spread_ns", 300)) * 1e-9,
        angle_spread_deg=float(cfg.get("angle_spread_deg", 15.0)),
    )
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    count = int(cfg.get("samples", 1000))
    samples = generate_samples(count, seed, ant, ofdm, params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    target = out / cfg.get("out", "dataset.dset")
    write_dataset(target, samples)
    print(f"wrote {count} samples ({ant.n}x{ofdm.k}) to {target}")
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = _flat(load_config(args.config), "train", "model")
    data_path = cfg.get("dataset")
    if not data_path:
        raise ConfigError("train config must name a dataset")
    if not Path(data_path).exists():
        raise MissingArtifactError(f"dataset not found: {data_path}")
    H = read_dataset(data_path)
    n, k = H.shape[1], H.shape[2]
    gamma = _parse_ratio(cfg.get("gamma", "1/8"))
    latent = int(cfg["latent_dim"]) if "latent_dim" in cfg else None
    model_cfg = ModelConfig(
        n=n, k=k, gamma=gamma, beta=int(cfg.get("beta", 2)), latent_dim=latent
    )
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    noise = None
    if "noise" in cfg:
        if cfg["noise"] not in NOISE_PRESETS:
            raise ConfigError(f"unknown noise preset {cfg['noise']!r}")
        noise = NOISE_PRESETS[cfg["noise"]]
    tcfg = TrainConfig(
        epochs=int(cfg.get("epochs", 400)),
        batch_size=int(cfg.get("batch_size", 200)),
        lr_max=float(cfg.get("lr_max", 1e-2)),
        lr_min=float(cfg.get("lr_min", 1e-4)),
        warmup=int(cfg.get("warmup", 30)),
        quantize=cfg.get("quantize", "true").lower() != "false",
        seed=seed,
        noise=noise,
        eval_every=int(cfg.get("eval_every", 1)),
        proj_weight=float(cfg.get("proj_weight", 0.0)),
        dither=cfg.get("dither", "false").lower() == "true",
        augment=cfg.get("augment", "false").lower() == "true",
    )
    val_fraction = float(cfg.get("val_fraction", 0.1))
    split = max(1, int(H.shape[0] * (1 - val_fraction)))
    dtype = np.float32 if cfg.get("dtype", "float32") == "float32" else np.float64
    model = PolarDenseNet(model_cfg, seed=seed, dtype=dtype)
    history = train(model, H[:split], H[split:], tcfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.pdn", model)
    write_history(out / "history.csv", history)
    best = min(h["val_nmse_db"] for h in history if np.isfinite(h["val_nmse_db"]))
    print(f"trained {tcfg.epochs} epochs; best val NMSE {best:.2f} dB")
    return EXIT_OK


def _parse_ratio(text: str) -> float:
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def _cmd_eval(args) -> int:
    records = run_experiment(args.config, args.seed or 0, args.out)
    for record in records:
        print(",".join(record.row()))
    return EXIT_OK


def _cmd_inspect(args) -> int:
    cfg = _flat(load_config(args.config), "inspect", "dataset")
    data_path = cfg.get("path") or cfg.get("dataset")
    if not data_path:
        raise ConfigError("inspect config must name a dataset path")
    if not Path(data_path).exists():
        raise MissingArtifactError(f"dataset not found: {data_path}")
    H = read_dataset(data_path)
    sample = int(cfg.get("sample", 0))
    if not 0 <= sample < H.shape[0]:
        raise ConfigError(f"sample {sample} outside dataset of {H.shape[0]}")
    recon = H[sample]
    ckpt = cfg.get("checkpoint")
    if ckpt:
        if not Path(ckpt).exists():
            raise MissingArtifactError(f"checkpoint not found: {ckpt}")
        from .model import load_checkpoint

        model = load_checkpoint(ckpt)
        model.eval()
        recon = model.decode(model.compress(H[sample]))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_heatmap(out / "heatmap.csv", H[sample], recon)
    print(f"wrote heatmap for sample {sample} to {out / 'heatmap.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csilab",
        description="CSI feedback compression lab: datasets, codebooks, autoencoder.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, doc in (
        ("generate", _cmd_generate, "synthesize a precoder-matrix dataset"),
        ("train", _cmd_train, "train the autoencoder"),
        ("eval", _cmd_eval, "run an experiment config and emit CSVs"),
        ("inspect", _cmd_inspect, "dump the magnitude heatmap for one sample"),
    ):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", required=True, help="plain-text config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=".", help="output directory")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ConfigError, DatasetFormatError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
