"""End-to-end acceptance runs; each test records one PASS/FAIL line in the terminal summary."""

import math

import numpy as np
import pytest

from conftest import record_acceptance
from gradcheck import max_relative_error
from memory_bias.bias_oracle import bias_ratio_test
from memory_bias.config import ExperimentConfig
from memory_bias.kernels import PolynomialKernel
from memory_bias.losses import analytic_bias, make_weights, power_scheme
from memory_bias.memory_probe import probe_memory
from memory_bias.models import RNN, TCN
from memory_bias.training import sensitivity_scan

SCHEME_POWERS = [-1.0, 0.0, 1.0, 2.0, math.inf]


def direction_changes(values):
    """Number of sign changes in the successive differences, ignoring exact ties."""
    signs = [np.sign(b - a) for a, b in zip(values, values[1:])]
    signs = [s for s in signs if s != 0]
    return sum(1 for a, b in zip(signs, signs[1:]) if a != b)


def test_criterion_1_bias_curve():
    n = 1000
    curve = analytic_bias(make_weights("poly", n, 1.0 / n, p=0.0))
    uniform_err = float(np.max(np.abs(curve.values - 2 * (1 - curve.s))))
    tail_err = 0.0
    for p in SCHEME_POWERS:
        for length, dt in ((64, 0.1), (1000, 1e-3)):
            scheme = power_scheme(p, length, dt)
            b = np.append(analytic_bias(scheme).values, 0.0)
            tail_err = max(tail_err, float(np.max(np.abs(b[:-1] - b[1:] - scheme.weights * dt)) / b[0]))
    passed = uniform_err <= 1e-12 and tail_err <= 1e-12
    record_acceptance(1, "bias curve: uniform gives 2(1-s); tail-sum identity",
                      passed, f"uniform max err {uniform_err:.1e}, tail-sum max rel err {tail_err:.1e}")
    assert passed


def test_criterion_2_bias_oracle():
    length, dt = 64, 0.1
    kernel = PolynomialKernel(length * dt, dt, power=1.1)
    lags = [0, length // 4, length // 2, 3 * length // 4]
    pairs = [(k, 0) for k in lags[1:]]
    worst = {}
    passed = True
    for p in (0.0, 1.0, 2.0, math.inf):
        report = bias_ratio_test(kernel, power_scheme(p, length, dt), pairs, n_samples=100_000, seed=0,
                                 tolerance=0.02)
        worst[p] = max(r.ratio_error for r in report.rows)
        if math.isinf(p):
            # lag independence: every analytic ratio is exactly one
            assert all(r.analytic == 1.0 for r in report.rows)
        passed = passed and report.passed
    detail = ", ".join(f"p={p}: {e:.2%}" for p, e in worst.items())
    record_acceptance(2, "Monte-Carlo bias ratios within 2%", passed, detail)
    assert passed


def _grad_instances(kind, loss, rng):
    d = int(rng.integers(1, 9))
    length = int(rng.integers(2, 33))
    batch = int(rng.integers(1, 4))
    n_out = int(rng.integers(2, 5)) if loss == "cross_entropy" else 1
    if kind == "tcn":
        model = TCN.init(rng, 1, n_out, channels=(d,), width=int(rng.integers(2, 4)),
                         dilations=[1, int(rng.integers(1, 4))], activation="tanh", bias=True)
        for name in model.params:
            if name.startswith("b"):
                model.params[name] += rng.normal(size=model.params[name].shape) * 0.1
    else:
        activation = "tanh" if kind == "tanh_rnn" else "identity"
        model = RNN.init(d, rng, 1, n_out, activation, dt=0.1, shift=float(rng.uniform(0.0, 1.0)))
    x = rng.uniform(-1, 1, (batch, length, 1))
    if loss == "cross_entropy":
        target = rng.integers(0, n_out, (batch, length))
    else:
        target = rng.normal(size=(batch, length))
    return model, x, target, length


def test_criterion_3_gradient_checks():
    rng = np.random.default_rng(2024)
    worst = 0.0
    count = 0
    for kind in ("linear_rnn", "tanh_rnn", "tcn"):
        for loss in ("absolute", "squared", "cross_entropy"):
            for p in (0.0, 2.0, math.inf):
                for _ in range(20):
                    model, x, target, length = _grad_instances(kind, loss, rng)
                    normalization = "weight_sum" if loss == "cross_entropy" else "bias_integral"
                    scheme = power_scheme(p, length, 0.1, normalization)
                    worst = max(worst, max_relative_error(model, x, target, scheme, loss))
                    count += 1
    passed = worst < 1e-5
    record_acceptance(3, "analytic gradients match central differences", passed,
                      f"{count} instances, max rel err {worst:.1e}")
    assert passed


def test_criterion_4_linear_memory_equivalence():
    rng = np.random.default_rng(4)
    probe_err = 0.0
    for seed in range(5):
        rnn = RNN.init(6, np.random.default_rng(seed), dt=0.1)
        probed = probe_memory(rnn, 64, probe_set=[1.0]) / rnn.dt
        probe_err = max(probe_err, float(np.max(np.abs(probed - np.abs(rnn.closed_form_memory(64)))) * rnn.dt))

    rnn = RNN.init(4, rng, dt=0.1)
    horizon = 6.4
    gaps = []
    for dt in (0.1, 0.05, 0.025, 0.0125):
        n = round(horizon / dt)
        model = RNN(rnn.params["W"], rnn.params["U"], rnn.params["C"], dt=dt)
        discrete = model.closed_form_memory(n + 1)
        continuous = model.continuous_memory(np.arange(n + 1) * dt)
        gaps.append(float(np.max(np.abs(discrete - continuous))))
    ratios = [a / b for a, b in zip(gaps, gaps[1:])]
    halving_ok = all(2 / 1.5 <= r <= 2 * 1.5 for r in ratios)
    passed = probe_err <= 1e-12 and halving_ok
    record_acceptance(4, "probed memory equals closed form; Euler gap is O(dt)", passed,
                      f"probe err {probe_err:.1e}, halving ratios {', '.join(f'{r:.3f}' for r in ratios)}")
    assert passed


def sensitivity_rows(seed):
    return sensitivity_scan(ExperimentConfig(seed=seed))


def test_criterion_7_sensitivity():
    seeds = (0, 1, 2)
    shape_ok = True
    smaller_wins = 0
    notes = []
    for seed in seeds:
        rows = sensitivity_rows(seed)
        one = [r for r in rows if r.n_steps == 1]
        grad = [r.grad_norm_init for r in one]
        dec = [r.loss_decrease for r in one]
        shape_ok = shape_ok and direction_changes(grad) <= 1 and direction_changes(dec) <= 1
        if dec[0] > dec[-1]:
            smaller_wins += 1
        notes.append(f"seed {seed}: changes grad={direction_changes(grad)} dec={direction_changes(dec)}")
    passed = shape_ok and smaller_wins * 2 > len(seeds)
    record_acceptance(7, "sensitivity: unimodal in p, smaller p decreases loss more", passed,
                      f"{'; '.join(notes)}; p=0 beats p=5.5 on {smaller_wins}/{len(seeds)} seeds")
    assert passed


def monotone_with_one_small_inversion(values, slack=0.05):
    inversions = [(a, b) for a, b in zip(values, values[1:]) if b > a]
    return len(inversions) <= 1 and all(b <= a * (1 + slack) for a, b in inversions)


def synthetic_config(seed, hidden, p):
    from memory_bias.config import LossConfig, ModelConfig

    family = "last" if math.isinf(p) else "poly"
    return ExperimentConfig(seed=seed, model=ModelConfig(hidden=hidden),
                            loss=LossConfig(family=family, p=0.0 if math.isinf(p) else p, error="absolute"))


@pytest.mark.slow
def test_criterion_5_monotonicity_in_p():
    from memory_bias.training import train

    seeds = (0, 1, 2)
    ok = True
    notes = []
    for hidden in (4, 16):
        means = []
        for p in SCHEME_POWERS:
            finals = [train(synthetic_config(seed, hidden, p))[0].memory_difference[-1] for seed in seeds]
            means.append(float(np.mean(finals)))
            notes.append(f"d={hidden} p={p}: " + "/".join(f"{v:.4f}" for v in finals))
        trend = monotone_with_one_small_inversion(means)
        gap = means[-1] <= 0.8 * means[0]
        ok = ok and trend and gap
        print(f"d={hidden} seed-mean memory difference over p={SCHEME_POWERS}: {[round(m, 4) for m in means]}")
    print("\n".join(notes))
    record_acceptance(5, "memory difference non-increasing in p, p=inf 20% below p=-1", ok,
                      "; ".join(n for n in notes))
    assert ok


def copying_config(seed, delay, p):
    from memory_bias.config import CopyingConfig, LossConfig, ModelConfig, OptimizerConfig

    return ExperimentConfig(
        task="copying", seed=seed, train_size=4096, test_size=1024, train_batch=128, test_batch=1024, epochs=10,
        model=ModelConfig(kind="tcn", activation="tanh", channels=[16, 16, 16, 16], width=3,
                          dilations=[1, 2, 4, 8, 16], bias=True),
        loss=LossConfig(p=p, normalization="weight_sum"), optimizer=OptimizerConfig(lr=1e-2),
        copying=CopyingConfig(n_symbols=10, payload_len=10, delay=delay))


def accuracy_at_level(report, level):
    """Recall accuracy at the first epoch whose training loss is at or below ``level``."""
    for loss, acc in zip(report.train_loss, report.accuracy):
        if loss <= level:
            return acc
    return None


@pytest.mark.slow
def test_criterion_6_copying_accuracy_at_matched_loss():
    from memory_bias.training import train

    seeds = (0, 1, 2)
    ok = True
    notes = []
    for delay in (20, 40):
        runs = {p: [train(copying_config(seed, delay, p))[0] for seed in seeds] for p in (0.0, 2.0)}
        everything = runs[0.0] + runs[2.0]
        lo = max(min(r.train_loss) for r in everything)
        hi = min(r.train_loss[0] for r in everything)
        levels = np.geomspace(hi, lo, 6)[1:]
        for level in levels:
            acc = {p: float(np.mean([accuracy_at_level(r, level) for r in runs[p]])) for p in runs}
            ok = ok and acc[2.0] >= acc[0.0]
            notes.append(f"D={delay} loss<={level:.3f}: acc p=0 {acc[0.0]:.3f}, p=2 {acc[2.0]:.3f}")
    print("\n".join(notes))
    record_acceptance(6, "copying: p=2 recall >= p=0 at matched training loss", ok, "; ".join(notes))
    assert ok


def test_criterion_8_determinism(tmp_path):
    from memory_bias.cli import main

    small = tmp_path / "small.toml"
    small.write_text(
        "train_size = 4096\ntest_size = 1024\ntrain_batch = 512\ntest_batch = 1024\nepochs = 3\n"
        "[loss]\nfamily = \"last\"\n[bias_oracle]\nn_samples = 20000\n[sensitivity]\nn_steps = [1, 4]\n")
    copy = tmp_path / "copy.toml"
    copy.write_text(
        "train_size = 512\ntest_size = 256\ntrain_batch = 128\ntest_batch = 256\nepochs = 2\n"
        "[model]\nkind = \"tcn\"\nactivation = \"tanh\"\nchannels = [8, 8]\nwidth = 3\n"
        "[loss]\np = 2.0\nnormalization = \"weight_sum\"\n[copying]\npayload_len = 4\ndelay = 6\n")
    commands = [("bias-curve", small), ("bias-oracle", small), ("train-synthetic", small),
                ("train-copy", copy), ("sensitivity", small)]
    identical = True
    compared = 0
    for command, config in commands:
        dirs = [tmp_path / f"{command}-{i}" for i in range(2)]
        for d in dirs:
            assert main([command, "--config", str(config), "--seed", "11", "--out", str(d)]) == 0
        ckpt = dirs[0] / "model.json"
        if command == "train-synthetic":
            for d in dirs:
                assert main(["extract-memory", "--config", str(config), "--checkpoint", str(ckpt),
                             "--out", str(d / "extract")]) == 0
        for first in sorted(dirs[0].rglob("*")):
            if first.is_file():
                second = dirs[1] / first.relative_to(dirs[0])
                identical = identical and first.read_bytes() == second.read_bytes()
                compared += 1
    record_acceptance(8, "repeated runs emit byte-identical files", identical, f"{compared} files compared")
    assert identical
