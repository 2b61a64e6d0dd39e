"""Experiment runner: CSV outputs, determinism, error handling."""

import numpy as np
import pytest

from csilab.channel import AntennaConfig, OfdmConfig, generate_samples
from csilab.dataset import write_dataset
from csilab.experiment import ConfigError, MissingArtifactError, run_experiment
from csilab.model import ModelConfig, PolarDenseNet, save_checkpoint


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("exp")
    H = generate_samples(6, seed=21, ant=AntennaConfig(n1=4),
                         ofdm=OfdmConfig(rbs=20))
    path = root / "test.dset"
    write_dataset(path, H)
    return path


@pytest.fixture(scope="module")
def small_checkpoint(tmp_path_factory):
    root = tmp_path_factory.mktemp("ckpt")
    cfg = ModelConfig(n=8, k=5, latent_dim=10, path_channels=4,
                      dense_block_layers=1, growth_channels=4)
    model = PolarDenseNet(cfg, seed=0)
    path = root / "model.pdn"
    save_checkpoint(path, model)
    return path


def write_cfg(path, text):
    path.write_text(text)
    return path


class TestMetricsCsv:
    def test_codebook_arms_schema(self, small_dataset, tmp_path):
        cfg = write_cfg(tmp_path / "e.cfg", f"""\
[dataset]
path = {small_dataset}
[arm r15]
scheme = rel15
l = 2
[arm r16]
scheme = rel16
l = 2
m = 3
""")
        records = run_experiment(cfg, 0, tmp_path / "out")
        lines = (tmp_path / "out" / "metrics.csv").read_text().splitlines()
        assert lines[0] == "scheme,params,bits,nmse_db,rho,n_samples"
        assert len(lines) == 3
        assert lines[1].startswith("rel15,L=2,")
        assert lines[2].startswith("rel16,\"L=2,M=3\",") or lines[2].startswith(
            "rel16,L=2"
        )
        assert [r.scheme for r in records] == ["rel15", "rel16"]
        assert all(r.n_samples == 6 for r in records)
        assert all(0 <= r.rho <= 1 for r in records)

    def test_no_arms_header_only(self, small_dataset, tmp_path):
        cfg = write_cfg(tmp_path / "e.cfg", f"[dataset]\npath = {small_dataset}\n")
        records = run_experiment(cfg, 0, tmp_path / "out")
        assert records == []
        lines = (tmp_path / "out" / "metrics.csv").read_text().splitlines()
        assert lines == ["scheme,params,bits,nmse_db,rho,n_samples"]

    def test_ae_arm(self, small_dataset, small_checkpoint, tmp_path):
        cfg = write_cfg(tmp_path / "e.cfg", f"""\
[dataset]
path = {small_dataset}
[arm ae]
scheme = ae
checkpoint = {small_checkpoint}
gamma = 1/8
""")
        records = run_experiment(cfg, 0, tmp_path / "out")
        assert records[0].scheme == "ae"
        assert records[0].bits == 10 * 2  # latent * beta

    def test_deterministic_byte_identical(self, small_dataset, tmp_path):
        cfg = write_cfg(tmp_path / "e.cfg", f"""\
[dataset]
path = {small_dataset}
[arm r15]
scheme = rel15
l = 2
[noise]
presets = 0-5,10-15
""")
        run_experiment(cfg, 7, tmp_path / "a")
        run_experiment(cfg, 7, tmp_path / "b")
        for name in ("metrics.csv", "noise_rho.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes()

    def test_seed_changes_noise_rows(self, small_dataset, tmp_path):
        cfg = write_cfg(tmp_path / "e.cfg", f"""\
[dataset]
path = {small_dataset}
[arm r15]
scheme = rel15
l = 2
[noise]
presets = 0-5
""")
        run_experiment(cfg, 1, tmp_path / "a")
        run_experiment(cfg, 2, tmp_path / "b")
        assert (tmp_path / "a" / "noise_rho.csv").read_text() != (
            tmp_path / "b" / "noise_rho.csv"
        ).read_text()


class TestSideOutputs:
    def test_heatmap(self, small_dataset, tmp_path):
        cfg = write_cfg(tmp_path / "e.cfg", f"""\
[dataset]
path = {small_dataset}
[arm r15]
scheme = rel15
l = 2
[heatmap]
arm = r15
sample = 1
""")
        run_experiment(cfg, 0, tmp_path / "out")
        lines = (tmp_path / "out" / "heatmap.csv").read_text().splitlines()
        assert lines[0] == "matrix,row," + ",".join(f"k{j}" for j in range(5))
        # 8 original + 8 reconstruction rows for an 8x5 matrix.
        assert len(lines) == 1 + 16

    def test_noise_rho_rows(self, small_dataset, tmp_path):
        cfg = write_cfg(tmp_path / "e.cfg", f"""\
[dataset]
path = {small_dataset}
[arm r15]
scheme = rel15
l = 2
[noise]
presets = 0-5,5-10,10-15
""")
        run_experiment(cfg, 0, tmp_path / "out")
        lines = (tmp_path / "out" / "noise_rho.csv").read_text().splitlines()
        assert lines[0] == "arm,snr_range_db,rho"
        assert len(lines) == 4
        assert [ln.split(",")[1] for ln in lines[1:]] == ["0-5", "5-10", "10-15"]


class TestErrors:
    def test_missing_dataset(self, tmp_path):
        cfg = write_cfg(tmp_path / "e.cfg", "[dataset]\npath = nowhere.dset\n")
        with pytest.raises(MissingArtifactError):
            run_experiment(cfg, 0, tmp_path / "out")

    def test_missing_checkpoint(self, small_dataset, tmp_path):
        cfg = write_cfg(tmp_path / "e.cfg", f"""\
[dataset]
path = {small_dataset}
[arm ae]
scheme = ae
checkpoint = nowhere.pdn
""")
        with pytest.raises(MissingArtifactError):
            run_experiment(cfg, 0, tmp_path / "out")

    def test_unknown_scheme(self, small_dataset, tmp_path):
        cfg = write_cfg(tmp_path / "e.cfg", f"""\
[dataset]
path = {small_dataset}
[arm bad]
scheme = rel99
""")
        with pytest.raises(ConfigError):
            run_experiment(cfg, 0, tmp_path / "out")

    def test_missing_scheme_key(self, small_dataset, tmp_path):
        cfg = write_cfg(tmp_path / "e.cfg", f"""\
[dataset]
path = {small_dataset}
[arm bad]
l = 2
""")
        with pytest.raises(ConfigError):
            run_experiment(cfg, 0, tmp_path / "out")

    def test_no_dataset_key(self, tmp_path):
        cfg = write_cfg(tmp_path / "e.cfg", "[arm a]\nscheme = rel15\n")
        with pytest.raises(ConfigError):
            run_experiment(cfg, 0, tmp_path / "out")

    def test_unknown_heatmap_arm(self, small_dataset, tmp_path):
        cfg = write_cfg(tmp_path / "e.cfg", f"""\
[dataset]
path = {small_dataset}
[arm r15]
scheme = rel15
[heatmap]
arm = ghost
""")
        with pytest.raises(ConfigError):
            run_experiment(cfg, 0, tmp_path / "out")

    def test_unknown_noise_preset(self, small_dataset, tmp_path):
        cfg = write_cfg(tmp_path / "e.cfg", f"""\
[dataset]
path = {small_dataset}
[arm r15]
scheme = rel15
[noise]
presets = 99-100
""")
        with pytest.raises(ConfigError):
            run_experiment(cfg, 0, tmp_path / "out")
