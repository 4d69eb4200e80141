"""Loss, Adam optimizer, and the mini-batch training loop.

The loss is mean cross-entropy plus an L2 penalty over weight tensors
(biases and batch-norm scale/shift excluded). Training logs train/test
accuracy and loss every evaluation interval, keeps the parameters of
the best test accuracy seen, and aborts on divergence with the last
good checkpoint retained.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor


@dataclass
class LossConfig:
    l2_lambda: float = 0.001
    class_count: int = 4

    def __post_init__(self):
        if self.l2_lambda < 0:
            raise ValueError(f"l2_lambda must be >= 0, got {self.l2_lambda}")


def cross_entropy_l2(logits: Tensor, labels: np.ndarray, params,
                     cfg: LossConfig = LossConfig()) -> Tensor:
    """Mean -log softmax(logits)[label] + l2_lambda * sum ||W||^2."""
    if logits.shape[1] != cfg.class_count:
        raise ad.ShapeError(
            f"logits have {logits.shape[1]} classes, config says {cfg.class_count}"
        )
    loss = ad.cross_entropy_logits(logits, labels)
    if cfg.l2_lambda > 0 and params is not None:
        reg = None
        for w in params.weights():
            term = ad.sum_(ad.mul(w, w))
            reg = term if reg is None else ad.add(reg, term)
        if reg is not None:
            loss = ad.add(loss, ad.smul(reg, cfg.l2_lambda))
    return loss


class AdamState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self, named_params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.named_params = list(named_params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(t.data) for name, t in self.named_params}
        self.v = {name: np.zeros_like(t.data) for name, t in self.named_params}


def adam_step(state: AdamState):
    """One bias-corrected Adam update over every registered parameter.

    A non-finite gradient aborts before any state mutates and names the
    offending parameter.
    """
    grads = {}
    for name, tensor in state.named_params:
        g = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        if not np.isfinite(g).all():
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        grads[name] = g
    state.t += 1
    correct1 = 1.0 - state.beta1 ** state.t
    correct2 = 1.0 - state.beta2 ** state.t
    for name, tensor in state.named_params:
        g = grads[name]
        m = state.m[name] = state.beta1 * state.m[name] + (1 - state.beta1) * g
        v = state.v[name] = state.beta2 * state.v[name] + (1 - state.beta2) * (g * g)
        tensor.data -= state.lr * (m / correct1) / (np.sqrt(v / correct2) + state.eps)


LEVEL_LEARNING_RATES = {"group": 0.001, "subject": 0.0001}


@dataclass
class TrainConfig:
    """Training-loop knobs; lr defaults by analysis level when unset."""

    lr: float | None = None
    level: str = "group"  # 'group' or 'subject'
    batch_size: int = 1024
    epochs: int = 100
    eval_interval: int = 100  # optimizer steps between metric evaluations
    early_stop_evals: int = 20
    l2_lambda: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    CONFIG_KEYS = ("lr", "level", "batch_size", "epochs", "eval_interval",
                   "early_stop_evals", "l2_lambda", "beta1", "beta2", "eps")

    def resolved_lr(self) -> float:
        if self.lr is not None:
            return self.lr
        if self.level not in LEVEL_LEARNING_RATES:
            raise ValueError(f"unknown training level {self.level!r}; "
                             f"expected one of {sorted(LEVEL_LEARNING_RATES)}")
        return LEVEL_LEARNING_RATES[self.level]

    @classmethod
    def from_mapping(cls, mapping: dict) -> "TrainConfig":
        return cls(**{k: mapping[k] for k in cls.CONFIG_KEYS if k in mapping})


@dataclass
class TrainResult:
    metrics: list = field(default_factory=list)  # (iter, tr_loss, tr_acc, te_loss, te_acc)
    best_test_acc: float = 0.0
    best_snapshot: dict | None = None
    diverged: bool = False
    steps: int = 0


def _eval_loss_acc(model, features, labels, batch_size):
    total_loss = 0.0
    correct = 0
    n = features.shape[0]
    for lo in range(0, n, batch_size):
        xb = features[lo: lo + batch_size]
        yb = labels[lo: lo + batch_size]
        logits = model.forward(xb, training=False)
        loss = ad.cross_entropy_logits(logits, yb)
        total_loss += float(loss.data) * xb.shape[0]
        correct += int((np.argmax(logits.data, axis=1) == yb).sum())
    return total_loss / n, correct / n


def train(model, train_features, train_labels, test_features, test_labels,
          cfg: TrainConfig, seed: int = 0, log_path=None) -> TrainResult:
    """Shuffled mini-batch training with periodic evaluation.

    Returns the metrics log and the best-test-accuracy snapshot; the
    model is left holding the best parameters. ``log_path`` appends CSV
    rows ``iteration,train_loss,train_acc,test_loss,test_acc``.
    """
    rng = np.random.default_rng(seed)
    loss_cfg = LossConfig(l2_lambda=cfg.l2_lambda, class_count=model.config.n_classes)
    adam = AdamState(model.params.trainable(), lr=cfg.resolved_lr(),
                     beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    result = TrainResult()
    result.best_snapshot = model.params.snapshot()

    writer = None
    log_file = None
    if log_path is not None:
        log_file = open(log_path, "a", newline="")
        if log_file.tell() == 0:
            log_file.write("iteration,train_loss,train_acc,test_loss,test_acc\n")
        writer = csv.writer(log_file)

    def evaluate(step):
        tr_loss, tr_acc = _eval_loss_acc(model, train_features, train_labels,
                                         cfg.batch_size)
        te_loss, te_acc = _eval_loss_acc(model, test_features, test_labels,
                                         cfg.batch_size)
        row = (step, tr_loss, tr_acc, te_loss, te_acc)
        result.metrics.append(row)
        if writer is not None:
            writer.writerow(row)
            log_file.flush()
        if te_acc > result.best_test_acc:
            result.best_test_acc = te_acc
            result.best_snapshot = model.params.snapshot()
            return True
        return False

    n = train_features.shape[0]
    evals_since_best = 0
    step = 0
    last_eval_step = -1
    try:
        for _ in range(cfg.epochs):
            order = rng.permutation(n)
            stop = False
            for lo in range(0, n, cfg.batch_size):
                batch = order[lo: lo + cfg.batch_size]
                xb = train_features[batch]
                yb = train_labels[batch]
                for _, tensor in adam.named_params:
                    tensor.grad = None
                with Tape() as tape:
                    logits = model.forward(xb, training=True)
                    loss = cross_entropy_l2(logits, yb, model.params, loss_cfg)
                    if not np.isfinite(loss.data):
                        result.diverged = True
                        stop = True
                        break
                    tape.backward(loss)
                adam_step(state=adam)
                step += 1
                if cfg.eval_interval > 0 and step % cfg.eval_interval == 0:
                    improved = evaluate(step)
                    last_eval_step = step
                    evals_since_best = 0 if improved else evals_since_best + 1
                    if evals_since_best >= cfg.early_stop_evals:
                        stop = True
                        break
            if stop:
                break
        if step > 0 and step != last_eval_step and not result.diverged:
            evaluate(step)
    finally:
        if log_file is not None:
            log_file.close()

    result.steps = step
    if result.best_snapshot is not None:
        model.params.load_arrays(result.best_snapshot)
    return result


def save_checkpoint(path, model):
    ad.save_tensors(path, model.params.named_arrays())


def load_checkpoint(path, model):
    model.params.load_arrays(ad.load_tensors(path))
