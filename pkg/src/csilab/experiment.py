"""Experiment orchestration: evaluate arms on a shared test set, emit CSVs.

An experiment config is an INI-style file with one ``[arm <name>]`` section
per evaluated scheme, a ``[dataset]`` section naming the test set, and
optional ``[noise]`` / ``[heatmap]`` sections.  Outputs are data-only CSVs:
a metrics table, a magnitude heatmap for one sample, and per-noise-range
cosine similarities for bar plots.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import AntennaConfig
from .codebook import REL16_QUANT, build_sd_basis, rel15_compress, rel16_compress
from .dataset import load_config, read_dataset
from .metrics import NOISE_PRESETS, add_awgn, cosine_similarity, nmse
from .model import load_checkpoint

__all__ = ["ConfigError", "MissingArtifactError", "MetricsRecord", "run_experiment"]


class ConfigError(ValueError):
    """Malformed or incomplete experiment configuration."""


class MissingArtifactError(FileNotFoundError):
    """A dataset or checkpoint named by the config does not exist."""


@dataclass
class MetricsRecord:
    scheme: str
    params: str
    bits: int
    nmse_linear: float
    nmse_db: float
    rho: float
    n_samples: int

    def row(self) -> list[str]:
        db = "-inf" if self.nmse_db == float("-inf") else f"{self.nmse_db:.6f}"
        return [
            self.scheme,
            self.params,
            str(self.bits),
            db,
            f"{self.rho:.6f}",
            str(self.n_samples),
        ]


@dataclass
class _Arm:
    name: str
    scheme: str
    options: dict[str, str]

    def reconstruct(self, H: np.ndarray, ant: AntennaConfig) -> tuple[np.ndarray, int]:
        """Reconstruct every sample; returns (H_hat, feedback bits)."""
        if self.scheme in ("rel15", "rel16"):
            l = int(self.options.get("l", 4))
            m = int(self.options.get("m", 3))
            k0 = int(self.options["k0"]) if "k0" in self.options else None
            quantized = self.options.get("quantized", "true").lower() != "false"
            out = np.empty_like(H)
            bits = 0
            for i in range(H.shape[0]):
                basis = build_sd_basis(H[i], ant, l)
                if self.scheme == "rel15":
                    rep = (
                        rel15_compress(H[i], basis)
                        if quantized
                        else rel15_compress(H[i], basis, None)
                    )
                else:
                    rep = rel16_compress(
                        H[i], basis, m, REL16_QUANT if quantized else None, k0
                    )
                out[i] = rep.reconstruction
                bits = rep.bit_count
            return out, bits
        if self.scheme == "ae":
            path = self.options.get("checkpoint")
            if path is None:
                raise ConfigError(f"arm {self.name}: ae arm needs a checkpoint")
            if not Path(path).exists():
                raise MissingArtifactError(f"checkpoint not found: {path}")
            model = load_checkpoint(path)
            model.eval()
            recon = np.empty_like(H)
            for lo in range(0, H.shape[0], 200):
                hi = min(lo + 200, H.shape[0])
                recon[lo:hi] = model.decode(model.compress(H[lo:hi]))
            bits = model.cfg.latent * model.cfg.beta
            return recon, bits
        raise ConfigError(f"arm {self.name}: unknown scheme {self.scheme!r}")

    @property
    def params_label(self) -> str:
        if self.scheme == "rel15":
            return f"L={int(self.options.get('l', 4))}"
        if self.scheme == "rel16":
            label = f"L={int(self.options.get('l', 4))},M={int(self.options.get('m', 3))}"
            if "k0" in self.options:
                label += f",K0={int(self.options['k0'])}"
            return label
        gamma = self.options.get("gamma", "")
        return f"gamma={gamma}" if gamma else "ae"


def _parse_arms(config: dict[str, dict[str, str]]) -> list[_Arm]:
    arms = []
    for section, options in config.items():
        if section.startswith("arm"):
            name = section[3:].strip() or f"arm{len(arms)}"
            scheme = options.get("scheme")
            if scheme is None:
                raise ConfigError(f"[{section}] is missing the scheme key")
            arms.append(_Arm(name=name, scheme=scheme, options=options))
    return arms


def run_experiment(config_path, seed: int, outdir) -> list[MetricsRecord]:
    """Evaluate every configured arm on the shared test set.

    Writes metrics.csv always, heatmap.csv and noise_rho.csv when configured.
    Deterministic for a fixed seed: same inputs produce byte-identical files.
    """
    try:
        config = load_config(config_path)
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from exc
    dataset_section = config.get("dataset", config.get("", {}))
    path = dataset_section.get("path") or dataset_section.get("dataset")
    if not path:
        raise ConfigError("config must name a dataset path")
    if not Path(path).exists():
        raise MissingArtifactError(f"dataset not found: {path}")
    H = read_dataset(path)
    n = H.shape[1]
    ant = AntennaConfig(n1=n // 2, n2=1)
    arms = _parse_arms(config)

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    records: list[MetricsRecord] = []
    reconstructions: dict[str, np.ndarray] = {}
    for arm in arms:
        recon, bits = arm.reconstruct(H, ant)
        reconstructions[arm.name] = recon
        linear, db = nmse(H, recon)
        records.append(
            MetricsRecord(
                scheme=arm.scheme,
                params=arm.params_label,
                bits=bits,
                nmse_linear=linear,
                nmse_db=db,
                rho=cosine_similarity(H, recon),
                n_samples=H.shape[0],
            )
        )

    with open(outdir / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scheme", "params", "bits", "nmse_db", "rho", "n_samples"])
        for record in records:
            writer.writerow(record.row())

    heatmap_cfg = config.get("heatmap")
    if heatmap_cfg is not None and arms:
        arm_name = heatmap_cfg.get("arm", arms[0].name)
        if arm_name not in reconstructions:
            raise ConfigError(f"[heatmap] names unknown arm {arm_name!r}")
        sample = int(heatmap_cfg.get("sample", 0))
        write_heatmap(
            outdir / "heatmap.csv", H[sample], reconstructions[arm_name][sample]
        )

    noise_cfg = config.get("noise")
    if noise_cfg is not None and arms:
        presets = [p.strip() for p in noise_cfg.get("presets", "0-5,5-10,10-15").split(",")]
        rows = []
        for pi, preset in enumerate(presets):
            if preset not in NOISE_PRESETS:
                raise ConfigError(f"unknown noise preset {preset!r}")
            for ai, arm in enumerate(arms):
                rng = np.random.default_rng([seed, pi, ai])
                noisy = add_awgn(H, NOISE_PRESETS[preset], rng)
                recon, _ = arm.reconstruct(noisy, ant)
                rows.append([arm.name, preset, f"{cosine_similarity(H, recon):.6f}"])
        with open(outdir / "noise_rho.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["arm", "snr_range_db", "rho"])
            writer.writerows(rows)

    return records


def write_heatmap(path, H: np.ndarray, H_hat: np.ndarray) -> None:
    """Magnitude grids of the original and reconstructed sample, row per line."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["matrix", "row"] + [f"k{j}" for j in range(H.shape[1])])
        for label, mat in (("original", H), ("reconstruction", H_hat)):
            mags = np.abs(mat)
            for i in range(mat.shape[0]):
                writer.writerow([label, i] + [f"{v:.6e}" for v in mags[i]])
