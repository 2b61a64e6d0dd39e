"""Acceptance gate: one test per criterion, one printed verdict line each.

Run with ``pytest tests/test_acceptance.py -s`` to watch the verdict lines.
Criteria 5 and 9 share three trained models (150 epochs each on a
5000-sample corpus), so the full gate takes tens of CPU-minutes.
"""

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from csilab.channel import AntennaConfig, generate_samples
from csilab.codebook import (
    REL16_QUANT,
    build_sd_basis,
    rel15_compress,
    rel16_compress,
)
from csilab.convolution import conv2d_forward
from csilab.layers import BatchNorm2d, Conv2d, Dense, conv2d, lrelu, mse_loss, sigmoid
from csilab.metrics import NOISE_PRESETS, cosine_similarity, nmse
from csilab.model import (
    LatentCode,
    ModelConfig,
    PolarDenseNet,
    preset_latent_dim,
)
from csilab.optim import CosineWarmupSchedule
from csilab.tensor import Tensor
from csilab.train import TrainConfig, evaluate_model, train

from test_layers import naive_conv2d
from test_tensor import check_grad

ANT = AntennaConfig(n1=16, n2=1)


def report(num: int, ok: bool, detail: str) -> None:
    print(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num}: {detail}"


# -- shared training fixtures -------------------------------------------------


@pytest.fixture(scope="session")
def corpus():
    return generate_samples(5000, seed=42)


@pytest.fixture(scope="session")
def trained_seeds(corpus):
    """Three gamma=1/8 models trained 150 epochs each, with CPU minutes."""
    train_H, val_H = corpus[:4500], corpus[4500:]
    runs = []
    for seed in range(3):
        model = PolarDenseNet(ModelConfig(gamma=1 / 8), seed=seed, dtype=np.float32)
        cfg = TrainConfig(epochs=150, batch_size=200, warmup=30, seed=seed)
        t0 = time.process_time()
        train(model, train_H, val_H, cfg)
        cpu_min = (time.process_time() - t0) / 60.0
        metrics = evaluate_model(model, val_H)
        runs.append({"model": model, "metrics": metrics, "cpu_min": cpu_min})
    return runs


# -- criteria -----------------------------------------------------------------


def test_criterion_1_gradient_correctness():
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    coords = 0

    conv = Conv2d(2, 3, (3, 3), rng)
    x0 = rng.standard_normal((2, 2, 5, 4))
    check_grad(lambda t: conv2d(t, conv.weight, conv.bias), x0, tol=1e-4)
    coords += x0.size

    bn = BatchNorm2d(3)
    gout = rng.standard_normal((4, 3, 3, 2))
    x0 = rng.standard_normal((4, 3, 3, 2))
    check_grad(lambda t: bn(t) * Tensor(gout), x0, tol=1e-4)
    coords += x0.size

    dense = Dense(6, 4, rng)
    x0 = rng.standard_normal((3, 6))
    check_grad(lambda t: dense(t), x0, tol=1e-4)
    coords += x0.size

    x0 = rng.standard_normal((4, 4)) + np.sign(rng.standard_normal((4, 4))) * 0.5
    check_grad(lambda t: lrelu(t, 0.3), x0, tol=1e-4)
    check_grad(lambda t: sigmoid(t), x0, tol=1e-4)
    coords += 2 * x0.size

    x0 = rng.standard_normal((2, 3, 4))
    check_grad(lambda t: mse_loss(t, Tensor(np.zeros((2, 3, 4)))), x0, tol=1e-4)
    coords += x0.size

    # Full graph, quantizer bypassed, BN frozen so FD sees a fixed function.
    cfg = ModelConfig(n=4, k=3, latent_dim=4, path_channels=2,
                      dense_block_layers=1, growth_channels=2)
    model = PolarDenseNet(cfg, seed=5)
    model.eval()
    gout = rng.standard_normal((2, 2, 4, 3))
    x0 = rng.standard_normal((2, 2, 4, 3)) * 0.5
    check_grad(lambda t: model.forward(t, quantize=False) * Tensor(gout),
               x0, tol=1e-4)
    coords += x0.size

    elapsed = time.perf_counter() - t0
    report(1, coords >= 100 and elapsed < 120,
           f"{coords} coordinates FD-checked at 64-bit in {elapsed:.1f}s")


def test_criterion_2_convolution_oracle():
    rng = np.random.default_rng(123)
    pinned = [(8, 1), (1, 8), (3, 3), (1, 1)]
    worst = 0.0
    for trial in range(50):
        kh, kw = pinned[trial] if trial < len(pinned) else (
            rng.integers(1, 5), rng.integers(1, 5))
        B, C, O = rng.integers(1, 4), rng.integers(1, 5), rng.integers(1, 5)
        H = rng.integers(max(kh, 2), 10)
        W = rng.integers(max(kw, 2), 10)
        x = rng.standard_normal((B, C, H, W))
        w = rng.standard_normal((O, C, kh, kw))
        bias = rng.standard_normal(O)
        err = np.abs(conv2d_forward(x, w, bias) - naive_conv2d(x, w, bias)).max()
        worst = max(worst, err)
    report(2, worst < 1e-10, f"50 configs vs quadruple-loop oracle, max |err| {worst:.2e}")


def test_criterion_3_codebook_exactness(corpus):
    H1k = corpus[:1000]
    # Complete basis reconstructs exactly.
    worst_db = -np.inf
    for H in H1k[:4]:
        _, db = nmse(H, rel15_compress(H, build_sd_basis(H, ANT, 16), None).reconstruction)
        worst_db = max(worst_db, db)
    # Rel-16 with M=K matches Rel-15.
    mk_err = 0.0
    for H in H1k[:4]:
        basis = build_sd_basis(H, ANT, 4)
        a = rel15_compress(H, basis, None).reconstruction
        b = rel16_compress(H, basis, 13, None).reconstruction
        mk_err = max(mk_err, np.abs(a - b).max())
    # Aggregate NMSE monotonicity over 1000 samples (reconstructions are
    # re-normalized per column, so the guarantee is aggregate, not per sample).
    r2 = np.empty_like(H1k)
    r4 = np.empty_like(H1k)
    for i in range(1000):
        r2[i] = rel15_compress(H1k[i], build_sd_basis(H1k[i], ANT, 2), None).reconstruction
        r4[i] = rel15_compress(H1k[i], build_sd_basis(H1k[i], ANT, 4), None).reconstruction
    _, db2 = nmse(H1k, r2)
    _, db4 = nmse(H1k, r4)
    ok = worst_db <= -250 and mk_err < 1e-10 and db4 <= db2
    report(3, ok,
           f"complete basis {worst_db:.0f} dB, M=K err {mk_err:.1e}, "
           f"1000-sample NMSE L=4 {db4:.2f} <= L=2 {db2:.2f} dB")


def test_criterion_4_bit_accounting():
    budgets = {g: preset_latent_dim(32, 13, g) * 2 for g in (1 / 8, 1 / 16, 1 / 20)}
    got = (budgets[1 / 8], budgets[1 / 16], budgets[1 / 20])
    code = LatentCode(np.zeros(104, dtype=np.int64), 1 / 8, 2)
    ok = got == (208, 104, 80) and code.bit_length == 208
    report(4, ok, f"feedback bits at beta=2: {got[0]}/{got[1]}/{got[2]}")


def test_criterion_5_desk_scale_training(corpus, trained_seeds):
    val_H = corpus[4500:]
    nmses = sorted(r["metrics"]["nmse_db"] for r in trained_seeds)
    rhos = sorted(r["metrics"]["rho"] for r in trained_seeds)
    med_nmse, med_rho = nmses[1], rhos[1]
    worst_cpu = max(r["cpu_min"] for r in trained_seeds)

    # Rel-16 (L=2, M=3) arm on the same validation set, with the standard's
    # beta=1/4 coefficient subset restriction: K0 = ceil(2LM / 4) = 3.
    recon = np.empty_like(val_H)
    bits16 = 0
    for i in range(val_H.shape[0]):
        rep = rel16_compress(val_H[i], build_sd_basis(val_H[i], ANT, 2), 3,
                             REL16_QUANT, k0=3)
        recon[i] = rep.reconstruction
        bits16 = rep.bit_count
    rho16 = cosine_similarity(val_H, recon)
    bits_ae = trained_seeds[0]["model"].cfg.latent * 2

    ok = (med_nmse <= -4.0 and med_rho >= 0.85 and med_rho > rho16
          and worst_cpu <= 30.0)
    report(5, ok,
           f"3-seed median val NMSE {med_nmse:.2f} dB, rho {med_rho:.3f} "
           f"(rel16 L=2,M=3 rho {rho16:.3f}); bits {bits_ae} vs {bits16}; "
           f"worst seed {worst_cpu:.1f} CPU-min")


def test_criterion_6_overfit_capacity():
    H = generate_samples(32, seed=5)
    model = PolarDenseNet(ModelConfig(gamma=1 / 4), seed=0, dtype=np.float32)
    # Small batches: 300 epochs at batch 2 is enough optimizer steps to
    # memorize; a single full batch per epoch is not.
    cfg = TrainConfig(epochs=300, batch_size=2, warmup=30, lr_max=3e-3, seed=0)
    train(model, H, H, cfg)
    m = evaluate_model(model, H, batch_size=32)
    report(6, m["nmse_db"] <= -20.0,
           f"32-sample memorization: train NMSE {m['nmse_db']:.2f} dB in 300 epochs")


def test_criterion_7_scheduler_pins():
    s = CosineWarmupSchedule(1e-4, 1e-2, 30, 400)
    values = [s.lr(t) for t in range(30, 401)]
    ok = (
        abs(s.lr(30) - 1e-2) < 1e-15
        and abs(s.lr(400) - 1e-4) < 1e-15
        and abs(s.lr(29) - s.lr(30)) < (1e-2 - 1e-4) / 30 + 1e-12
        and all(b <= a + 1e-15 for a, b in zip(values, values[1:]))
    )
    report(7, ok, f"lr(30)={s.lr(30):.0e}, lr(400)={s.lr(400):.0e}, "
                  "continuous at warmup, non-increasing after")


def test_criterion_8_metric_identities():
    rng = np.random.default_rng(3)
    H = rng.standard_normal((4, 8, 6)) + 1j * rng.standard_normal((4, 8, 6))
    lin, db = nmse(H, H.copy())
    rho_same = cosine_similarity(H, H)
    _, db_scaled = nmse(H, 1.1 * H)
    # Phase invariance over 1000 draws.
    G = rng.standard_normal((4, 8, 6)) + 1j * rng.standard_normal((4, 8, 6))
    base = cosine_similarity(H, G)
    max_dev = 0.0
    for _ in range(1000):
        phases = np.exp(1j * rng.uniform(0, 2 * np.pi, size=(1, 1, 6)))
        max_dev = max(max_dev, abs(cosine_similarity(H, G * phases) - base))
    ok = (lin == 0.0 and db == float("-inf") and abs(rho_same - 1) < 1e-12
          and abs(db_scaled + 20.0) < 1e-9 and max_dev < 1e-12)
    report(8, ok, f"identity/-inf/rho=1/-20dB pins hold, phase dev {max_dev:.1e}")


def test_criterion_9_awgn_robustness(corpus, trained_seeds):
    val_H = corpus[4500:]
    order = ["0-5", "5-10", "10-15"]
    means = []
    for pi, preset in enumerate(order):
        rhos = []
        for si, run in enumerate(trained_seeds):
            rng = np.random.default_rng([13, pi, si])
            m = evaluate_model(run["model"], val_H,
                               noise=NOISE_PRESETS[preset], rng=rng)
            rhos.append(m["rho"])
        means.append(float(np.mean(rhos)))
    ok = all(b >= a - 0.01 for a, b in zip(means, means[1:]))
    report(9, ok, "3-seed mean rho by SNR range: "
                  + ", ".join(f"{p}dB {v:.3f}" for p, v in zip(order, means)))


def test_criterion_10_determinism(tmp_path):
    gen_cfg = tmp_path / "gen.cfg"
    gen_cfg.write_text(
        "samples = 8\nseed = 3\nn1 = 4\nn_rx = 2\nrbs = 20\nout = d.dset\n"
    )
    eval_cfg = tmp_path / "eval.cfg"
    outputs = []
    for run in ("a", "b"):
        outdir = tmp_path / run
        r = subprocess.run(
            [sys.executable, "-m", "csilab.cli", "generate",
             "--config", str(gen_cfg), "--out", str(outdir)],
            capture_output=True,
        )
        assert r.returncode == 0, r.stderr.decode()
        eval_cfg.write_text(f"""\
[dataset]
path = {outdir / 'd.dset'}
[arm r15]
scheme = rel15
l = 2
[noise]
presets = 0-5,10-15
""")
        r = subprocess.run(
            [sys.executable, "-m", "csilab.cli", "eval",
             "--config", str(eval_cfg), "--seed", "7", "--out", str(outdir)],
            capture_output=True,
        )
        assert r.returncode == 0, r.stderr.decode()
        outputs.append({
            name: (outdir / name).read_bytes()
            for name in ("d.dset", "metrics.csv", "noise_rho.csv")
        })
    ok = outputs[0] == outputs[1]
    report(10, ok, "generate + eval byte-identical across two seeded runs")
