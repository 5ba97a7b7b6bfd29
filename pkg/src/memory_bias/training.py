"""Training loops for the synthetic and copying tasks, and the p-sensitivity scan."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .errors import ConfigError, NumericalError
from .kernels import kernel_from_dict
from .losses import power_scheme, weighted_cross_entropy, weighted_error
from .memory_probe import memory_report
from .models import RNN, TCN, GradBundle, global_norm
from .optim import SGD, make_optimizer
from .tasks import gen_copying, gen_synthetic, one_hot, recall_accuracy

SYNTHETIC_COLUMNS = ("epoch", "train_loss", "test_loss", "memory_difference", "gradient_norm")
COPYING_COLUMNS = ("epoch", "train_loss", "test_loss", "accuracy", "gradient_norm")


def _streams(seed):
    """Independent generators for train data, test data, init and shuffling."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]


def target_kernel(config: ExperimentConfig):
    return kernel_from_dict(config.kernel.to_spec(), config.horizon, config.dt)


def build_model(config: ExperimentConfig, rng):
    m = config.model
    if config.task == "copying":
        n_in = n_out = config.copying.n_symbols
        dt = 1.0
    else:
        n_in = n_out = 1
        dt = config.dt
    if m.kind == "rnn":
        return RNN.init(m.hidden, rng, n_in, n_out, m.activation, dt, m.shift)
    return TCN.init(rng, n_in, n_out, tuple(m.channels), m.width, m.dilations, m.activation, m.bias)


def build_scheme(config: ExperimentConfig, p=None):
    p = config.loss.power if p is None else p
    if config.task == "copying":
        return power_scheme(p, config.length, 1.0, config.loss.normalization)
    return power_scheme(p, config.seq_len, config.dt, config.loss.normalization)


def build_data(config: ExperimentConfig, rngs=None):
    rngs = rngs or _streams(config.seed)
    if config.task == "copying":
        c = config.copying
        train = gen_copying(c.n_symbols, c.payload_len, c.delay, config.train_size, rngs[0])
        test = gen_copying(c.n_symbols, c.payload_len, c.delay, config.test_size, rngs[1])
    else:
        kernel = target_kernel(config)
        train = gen_synthetic(kernel, config.train_size, config.seq_len, config.dt, rngs[0])
        test = gen_synthetic(kernel, config.test_size, config.seq_len, config.dt, rngs[1])
    return train, test


class Objective:
    """Weighted loss of a model on a batch, with gradients."""

    def __init__(self, config: ExperimentConfig, scheme):
        self.scheme = scheme
        self.copying = config.task == "copying"
        self.n_symbols = config.copying.n_symbols
        self.payload_len = config.copying.payload_len
        self.error = config.loss.error

    def inputs(self, batch):
        if self.copying:
            return one_hot(batch.inputs, self.n_symbols)
        return batch.inputs[:, :, None]

    def loss(self, outputs, batch):
        if self.copying:
            return weighted_cross_entropy(outputs, batch.targets, self.scheme)
        value, grad = weighted_error(outputs[:, :, 0], batch.targets, self.scheme, self.error)
        return value, grad[:, :, None]

    def value_and_grad(self, model, batch) -> GradBundle:
        y, cache = model.forward(self.inputs(batch))
        value, dy = self.loss(y, batch)
        if not math.isfinite(value):
            raise NumericalError("non-finite loss")
        bundle = model.backward(cache, dy)
        bundle.loss = value
        return bundle

    def evaluate(self, model, data, batch_size, with_grad=True):
        """Dataset-mean loss, gradient norm and (copying) recall accuracy."""
        n = len(data)
        total = 0.0
        correct = 0.0
        grads = None
        for batch in data.batches(batch_size):
            frac = len(batch) / n
            y, cache = model.forward(self.inputs(batch))
            value, dy = self.loss(y, batch)
            total += value * frac
            if with_grad:
                g = model.backward(cache, dy).params
                if grads is None:
                    grads = {k: v * frac for k, v in g.items()}
                else:
                    for k in grads:
                        grads[k] += g[k] * frac
            if self.copying:
                correct += recall_accuracy(y, batch.targets, self.payload_len) * frac
        return total, (global_norm(grads) if grads else math.nan), correct


@dataclass
class TrainReport:
    task: str
    epoch: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    test_loss: list = field(default_factory=list)
    memory_difference: list = field(default_factory=list)
    accuracy: list = field(default_factory=list)
    gradient_norm: list = field(default_factory=list)
    final_memory: object = None
    checkpoint: str | None = None

    @property
    def columns(self):
        return COPYING_COLUMNS if self.task == "copying" else SYNTHETIC_COLUMNS

    def rows(self):
        for i in range(len(self.epoch)):
            yield [getattr(self, col)[i] for col in self.columns]

    def write_csv(self, path):
        write_csv(path, self.columns, self.rows())

    def summary(self):
        if not self.epoch:
            return {}
        out = {"epochs": self.epoch[-1], "final_train_loss": self.train_loss[-1],
               "final_test_loss": self.test_loss[-1], "final_gradient_norm": self.gradient_norm[-1]}
        if self.task == "copying":
            out["final_accuracy"] = self.accuracy[-1]
        else:
            out["final_memory_difference"] = self.memory_difference[-1]
        return out


def format_value(v):
    """Shortest text that round-trips a float64 exactly."""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def train(config: ExperimentConfig, model=None, callback=None):
    """Minibatch training; returns ``(TrainReport, model)``.

    Row 0 of the report is the initialization snapshot. Each later row is
    recorded after one pass over the training set: the mean minibatch loss,
    then test loss, gradient norm (of the test objective) and either the
    probed memory difference (synthetic) or recall accuracy (copying).
    """
    config.validate()
    rng_train, rng_test, rng_init, rng_shuffle = _streams(config.seed)
    train_set, test_set = build_data(config, (rng_train, rng_test))
    if model is None:
        model = build_model(config, rng_init)
    scheme = build_scheme(config)
    objective = Objective(config, scheme)
    opt = config.optimizer
    optimizer = make_optimizer(opt.name, opt.lr, **(
        {"beta1": opt.beta1, "beta2": opt.beta2, "eps": opt.eps} if opt.name == "adam" else {}))
    kernel = target_kernel(config) if config.task == "synthetic" else None
    report = TrainReport(config.task)

    def record(epoch, train_loss):
        test_loss, gnorm, acc = objective.evaluate(model, test_set, config.test_batch)
        report.epoch.append(epoch)
        report.train_loss.append(train_loss)
        report.test_loss.append(test_loss)
        report.gradient_norm.append(gnorm)
        if kernel is not None:
            mem = memory_report(kernel, model, config.seq_len, config.dt)
            report.memory_difference.append(mem.memory_difference)
            report.final_memory = mem
        else:
            report.accuracy.append(acc)
        if callback is not None:
            callback(epoch, report)

    try:
        init_loss, _, _ = objective.evaluate(model, train_set, config.test_batch, with_grad=False)
        record(0, init_loss)
    except NumericalError as exc:
        raise NumericalError(f"diverged at initialization: {exc}", epoch=0) from exc

    for epoch in range(1, config.epochs + 1):
        order = rng_shuffle.permutation(len(train_set))
        running = 0.0
        for step, batch in enumerate(train_set.batches(config.train_batch, order)):
            try:
                bundle = objective.value_and_grad(model, batch)
            except NumericalError as exc:
                raise NumericalError(str(exc), epoch=epoch, step=step) from exc
            running += bundle.loss * len(batch)
            optimizer.step(model.params, bundle.params)
        try:
            record(epoch, running / len(train_set))
        except NumericalError as exc:
            raise NumericalError(str(exc), epoch=epoch) from exc
    return report, model


@dataclass(frozen=True)
class SensitivityRow:
    p: float
    n_steps: int
    loss_init: float
    loss_after: float
    grad_norm_init: float

    @property
    def loss_decrease(self):
        return self.loss_init - self.loss_after


SENSITIVITY_COLUMNS = ("p", "n_steps", "loss_init", "loss_after", "loss_decrease", "grad_norm_init")


def sensitivity_scan(config: ExperimentConfig, p_grid=None, n_steps=None, lr=None):
    """Loss decrease after a few SGD steps and gradient norm at init, per power ``p``.

    All rows start from the same initial parameters and consume the same
    minibatches, so differences come from the weighting alone. Losses and
    gradient norms are measured on the test set with each row's own scheme.
    """
    config.validate()
    p_grid = config.sensitivity.p_grid if p_grid is None else list(p_grid)
    n_steps = config.sensitivity.n_steps if n_steps is None else list(n_steps)
    lr = config.sensitivity.lr if lr is None else lr
    rng_train, rng_test, rng_init, rng_shuffle = _streams(config.seed)
    train_set, test_set = build_data(config, (rng_train, rng_test))
    init_model = build_model(config, rng_init)
    order = rng_shuffle.permutation(len(train_set))
    batches = []
    for i, batch in enumerate(train_set.batches(config.train_batch, order)):
        if i >= max(n_steps, default=0):
            break
        batches.append(batch)
    if len(batches) < max(n_steps, default=0):
        raise ConfigError(f"sensitivity.n_steps: training set provides only {len(batches)} minibatches")

    rows = []
    for p in p_grid:
        model = init_model.copy()
        objective = Objective(config, build_scheme(config, p))
        loss0, gnorm0, _ = objective.evaluate(model, test_set, config.test_batch)
        after = {0: loss0}
        sgd = SGD(lr)
        for step, batch in enumerate(batches, start=1):
            try:
                bundle = objective.value_and_grad(model, batch)
            except NumericalError as exc:
                raise NumericalError(f"{exc} at p={p}", step=step) from exc
            sgd.step(model.params, bundle.params)
            if step in n_steps:
                after[step], _, _ = objective.evaluate(model, test_set, config.test_batch, with_grad=False)
        for n in n_steps:
            rows.append(SensitivityRow(float(p), int(n), loss0, after[n], gnorm0))
    return rows


def write_sensitivity_csv(path, rows):
    write_csv(path, SENSITIVITY_COLUMNS,
              ([r.p, r.n_steps, r.loss_init, r.loss_after, r.loss_decrease, r.grad_norm_init] for r in rows))
