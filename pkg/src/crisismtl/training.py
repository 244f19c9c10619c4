"""Joint loss, reverse-mode gradients, Adam with warmup/decay, and the training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields, replace
from typing import Sequence

import numpy as np

from .corpus import GoldRecord
from .errors import TrainingError, ValidationError
from .model import (
    Checkpoint,
    ModelConfig,
    Vocab,
    build_vocab,
    forward,
    gelu_grad,
    init_params,
    predict_run,
    tokenize_batch,
)
from .ontology import Ontology, priority_to_score

log = logging.getLogger(__name__)

PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 0.5
    lr: float = 5e-5
    batch_size: int = 32
    epochs: int = 12
    warmup_ratio: float = 0.10
    eval_every_steps: int = 400
    seed: int = 42
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValidationError(f"lambda must lie in [0, 1], got {self.lam}")
        if not self.lr > 0:
            raise ValidationError("lr must be positive")
        if self.batch_size < 1 or self.epochs < 1 or self.eval_every_steps < 1:
            raise ValidationError("batch_size, epochs and eval_every_steps must be >= 1")
        if not 0.0 <= self.warmup_ratio < 1.0:
            raise ValidationError("warmup_ratio must lie in [0, 1)")


# ---------------------------------------------------------------- losses

def info_type_loss(type_probs, gold_bits) -> float:
    """Per-example sum of binary cross-entropies, averaged over the batch."""
    p = np.clip(np.atleast_2d(type_probs), PROB_CLAMP, 1.0 - PROB_CLAMP)
    b = np.atleast_2d(gold_bits).astype(np.float64)
    per_example = -(b * np.log(p) + (1.0 - b) * np.log1p(-p)).sum(axis=1)
    return float(per_example.mean())


def priority_loss(priority_score, gold_targets) -> float:
    """Mean squared error against mapped gold levels (targets already in [0, 1])."""
    s = np.atleast_1d(np.asarray(priority_score, dtype=np.float64))
    t = np.atleast_1d(np.asarray(gold_targets, dtype=np.float64))
    return float(((t - s) ** 2).mean())


def total_loss(lam: float, l_it: float, l_pri: float) -> float:
    if lam == 1.0:
        return l_it
    if lam == 0.0:
        return l_pri
    return lam * l_it + (1.0 - lam) * l_pri


# ---------------------------------------------------------------- batches

@dataclass
class Batch:
    ids: np.ndarray
    mask: np.ndarray
    gold_bits: np.ndarray  # (batch, n_types)
    targets: np.ndarray  # (batch,) mapped priority scores


def make_batch(records: Sequence[GoldRecord], vocab: Vocab, ontology: Ontology, max_len: int) -> Batch:
    ids, mask = tokenize_batch([r.text for r in records], vocab, max_len)
    bits = np.zeros((len(records), len(ontology)))
    for i, r in enumerate(records):
        for name in r.info_types:
            bits[i, ontology.lookup(name).index] = 1.0
    targets = np.array([priority_to_score(r.priority) for r in records], dtype=np.float64)
    return Batch(ids, mask, bits, targets)


@dataclass
class LossValues:
    total: float
    it: float
    pri: float


def compute_loss(params, cfg: ModelConfig, batch: Batch, lam: float) -> LossValues:
    out = forward(params, cfg, batch.ids, batch.mask)
    l_it = info_type_loss(out.type_probs, batch.gold_bits)
    l_pri = priority_loss(out.priority_score, batch.targets)
    return LossValues(total_loss(lam, l_it, l_pri), l_it, l_pri)


# ---------------------------------------------------------------- backward

def _layer_norm_backward(dy, gain, cache):
    xhat, inv_std = cache
    dgain = (dy * xhat).sum(axis=(0, 1))
    dshift = dy.sum(axis=(0, 1))
    dxhat = dy * gain
    dx = inv_std * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dgain, dshift


def _flat(x):
    return x.reshape(-1, x.shape[-1])


def _layer_backward(params, prefix, dout, c, grads):
    p = lambda name: params[prefix + name]  # noqa: E731
    g = lambda name: grads[prefix + name]  # noqa: E731

    dr2, g("ln2_g")[...], g("ln2_b")[...] = _layer_norm_backward(dout, p("ln2_g"), c["ln2"])
    g("w2")[...] = _flat(c["g"]).T @ _flat(dr2)
    g("b2")[...] = dr2.sum(axis=(0, 1))
    du = (dr2 @ p("w2").T) * gelu_grad(c["u"])
    g("w1")[...] = _flat(c["h1"]).T @ _flat(du)
    g("b1")[...] = du.sum(axis=(0, 1))
    dh1 = dr2 + du @ p("w1").T

    dr1, g("ln1_g")[...], g("ln1_b")[...] = _layer_norm_backward(dh1, p("ln1_g"), c["ln1"])
    g("wo")[...] = _flat(c["ctx"]).T @ _flat(dr1)
    g("bo")[...] = dr1.sum(axis=(0, 1))
    b, l, d = dr1.shape
    h = c["q"].shape[1]
    dctx = (dr1 @ p("wo").T).reshape(b, l, h, d // h).transpose(0, 2, 1, 3)

    attn = c["attn"]
    dattn = dctx @ c["v"].transpose(0, 1, 3, 2)
    dv = attn.transpose(0, 1, 3, 2) @ dctx
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True)) * c["scale"]
    dq = dscores @ c["k"]
    dk = dscores.transpose(0, 1, 3, 2) @ c["q"]

    x = _flat(c["x"])
    dx = dr1
    for name, dproj in (("q", dq), ("k", dk), ("v", dv)):
        dproj = dproj.transpose(0, 2, 1, 3).reshape(b, l, d)
        g("w" + name)[...] = x.T @ _flat(dproj)
        g("b" + name)[...] = dproj.sum(axis=(0, 1))
        dx = dx + dproj @ p("w" + name).T
    return dx


def backward(params, cfg: ModelConfig, batch: Batch, lam: float):
    """Loss values and gradients of the batch-mean joint loss for every tensor.

    A task whose weight is exactly zero is skipped entirely, so at lam=1 the
    priority head receives an exactly-zero gradient and the encoder sees only
    the classification signal (and symmetrically at lam=0).
    """
    out = forward(params, cfg, batch.ids, batch.mask, keep_cache=True)
    n = batch.ids.shape[0]
    probs, score = out.type_probs, out.priority_score
    l_it = info_type_loss(probs, batch.gold_bits)
    l_pri = priority_loss(score, batch.targets)
    losses = LossValues(total_loss(lam, l_it, l_pri), l_it, l_pri)

    grads = {name: np.zeros_like(arr) for name, arr in params.items()}
    cls = out.cls
    dcls = np.zeros_like(cls)
    if lam != 0.0:
        # d/dz of BCE(sigmoid(z)) is p - b; zero where the clamp is active
        live = (probs > PROB_CLAMP) & (probs < 1.0 - PROB_CLAMP)
        dlogit_t = np.where(live, probs - batch.gold_bits, 0.0) * (lam / n)
        grads["w_t"][...] = cls.T @ dlogit_t
        dcls = dcls + dlogit_t @ params["w_t"].T
    if lam != 1.0:
        dlogit_p = (-2.0 * (batch.targets - score) * score * (1.0 - score)) * ((1.0 - lam) / n)
        grads["w_p"][...] = cls.T @ dlogit_p[:, None]
        dcls = dcls + dlogit_p[:, None] @ params["w_p"].T

    dx = np.zeros_like(out.token_outputs)
    dx[:, 0, :] = dcls
    for i in reversed(range(cfg.n_layers)):
        dx = _layer_backward(params, f"layer{i}.", dx, out.caches[i], grads)

    np.add.at(grads["tok_emb"], batch.ids, dx)
    grads["pos_emb"][: dx.shape[1]] = dx.sum(axis=0)

    for name, gval in grads.items():
        if not np.all(np.isfinite(gval)):
            raise TrainingError(f"non-finite gradient in tensor {name!r}")
    return losses, grads


# ---------------------------------------------------------------- optimizer

@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls({k: np.zeros_like(a) for k, a in params.items()},
                   {k: np.zeros_like(a) for k, a in params.items()})


def adam_step(params, grads, state: AdamState, lr_t: float, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam; updates ``params`` and ``state`` in place."""
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for name, theta in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        theta -= lr_t * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


def warmup_steps(total_steps: int, warmup_ratio: float) -> int:
    return int(round(warmup_ratio * total_steps))


def lr_at_step(step: int, total_steps: int, base_lr: float, warmup_ratio: float) -> float:
    """Linear ramp 0 -> base_lr over the warmup, then linear decay to 0."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    w = warmup_steps(total_steps, warmup_ratio)
    if step < w:
        return base_lr * step / w
    if step == w:
        return base_lr
    return base_lr * (total_steps - step) / (total_steps - w)


# ---------------------------------------------------------------- loop

HISTORY_COLUMNS = ("step", "L_total", "L_it", "L_pri", "ndcg", "aw_hc", "aw_a",
                   "cf1_h", "cf1_a", "cacc", "perr_h", "perr_a", "harm")


@dataclass
class EvalPoint:
    step: int
    l_total: float
    l_it: float
    l_pri: float
    dev: object = None  # MetricReport or None when there is no dev set


@dataclass
class TrainHistory:
    points: list = field(default_factory=list)
    epoch_losses: list = field(default_factory=list)
    best_step: int | None = None
    total_steps: int = 0

    def to_csv(self) -> str:
        lines = [",".join(HISTORY_COLUMNS)]
        for pt in self.points:
            row = [str(pt.step), repr(pt.l_total), repr(pt.l_it), repr(pt.l_pri)]
            if pt.dev is None:
                row += [""] * 9
            else:
                row += [repr(float(x)) for x in pt.dev.as_tuple()]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def _copy(params):
    return {k: a.copy() for k, a in params.items()}


def train(model_config: ModelConfig, train_config: TrainConfig, train_set: Sequence[GoldRecord],
          dev_set: Sequence[GoldRecord], ontology: Ontology, k: int = 100) -> tuple[Checkpoint, TrainHistory]:
    """Train from scratch and return the best-dev-HarM checkpoint.

    The vocabulary is built from ``train_set`` with ``model_config.vocab_size``
    as the upper limit; the returned checkpoint's config records the actual
    vocabulary size and ``len(ontology)`` as ``n_types``.
    """
    from .metrics import evaluate_all

    if not train_set:
        raise ValidationError("training set is empty")
    tc = train_config
    vocab = build_vocab([r.text for r in train_set], model_config.vocab_size)
    cfg = replace(model_config, vocab_size=len(vocab), n_types=len(ontology))
    params = init_params(cfg, tc.seed)
    state = AdamState.zeros_like(params)

    n = len(train_set)
    steps_per_epoch = math.ceil(n / tc.batch_size)
    total = tc.epochs * steps_per_epoch
    log.info("training %d examples for %d steps (%d per epoch)", n, total, steps_per_epoch)
    history = TrainHistory(total_steps=total)
    best = (None, -math.inf, None)  # (step, harm, params)

    window = []
    step = 0
    for epoch in range(tc.epochs):
        order = np.random.default_rng([tc.seed, epoch]).permutation(n)
        epoch_losses = []
        for start in range(0, n, tc.batch_size):
            step += 1
            batch = make_batch([train_set[i] for i in order[start : start + tc.batch_size]],
                               vocab, ontology, cfg.max_len)
            losses, grads = backward(params, cfg, batch, tc.lam)
            if not math.isfinite(losses.total):
                raise TrainingError(f"non-finite loss at step {step}")
            adam_step(params, grads, state, lr_at_step(step, total, tc.lr, tc.warmup_ratio),
                      tc.beta1, tc.beta2, tc.eps)
            window.append(losses)
            epoch_losses.append(losses.total)

            if step % tc.eval_every_steps == 0 or step == total:
                point = EvalPoint(step, *(float(np.mean([getattr(w, a) for w in window]))
                                          for a in ("total", "it", "pri")))
                window = []
                if dev_set:
                    ckpt = Checkpoint(cfg, params, vocab, ontology)
                    point.dev = evaluate_all(predict_run(ckpt, dev_set), dev_set, ontology, k=k)
                    if point.dev.harm > best[1]:
                        best = (step, point.dev.harm, _copy(params))
                history.points.append(point)
                log.info("step %d loss %.5f%s", step, point.l_total,
                         f" dev HarM {point.dev.harm:.4f}" if point.dev else "")
        history.epoch_losses.append(float(np.mean(epoch_losses)))

    if best[2] is None:
        history.best_step = step
        final = params
    else:
        history.best_step = best[0]
        final = best[2]
    return Checkpoint(cfg, final, vocab, ontology), history


@dataclass(frozen=True)
class GridResult:
    lr: float
    batch_size: int
    harm: float
    best_step: int


DEFAULT_LR_GRID = (5e-4, 2e-4, 1e-4, 5e-5, 2e-5, 1e-5)
DEFAULT_BS_GRID = (8, 16, 32, 64)


def grid_search(model_config: ModelConfig, train_config: TrainConfig, train_set, dev_set, ontology: Ontology,
                lr_grid=DEFAULT_LR_GRID, bs_grid=DEFAULT_BS_GRID) -> list[GridResult]:
    if not lr_grid or not bs_grid:
        raise ValidationError("grids must be non-empty")
    if not dev_set:
        raise ValidationError("grid search needs a non-empty dev set")
    results = []
    for lr in lr_grid:
        for bs in bs_grid:
            _, hist = train(model_config, replace(train_config, lr=lr, batch_size=bs), train_set, dev_set, ontology)
            harm = max(p.dev.harm for p in hist.points)
            results.append(GridResult(lr, bs, harm, hist.best_step))
    # stable sort keeps grid order among ties
    return sorted(results, key=lambda r: -r.harm)


# ---------------------------------------------------------------- config files

CONFIG_KEYS = ("lambda", "lr", "batch_size", "epochs", "warmup_ratio", "eval_every_steps", "seed",
               "d_model", "n_layers", "n_heads", "d_ff", "vocab_size", "max_len")
_FLOAT_KEYS = {"lambda", "lr", "warmup_ratio"}


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not value:
            raise ValidationError(f"config line {lineno}: expected 'key = value'")
        if key not in CONFIG_KEYS:
            raise ValidationError(f"config line {lineno}: unknown key {key!r}")
        values[key] = coerce_config_value(key, value)
    return values


def coerce_config_value(key: str, value):
    try:
        return float(value) if key in _FLOAT_KEYS else int(value)
    except ValueError:
        raise ValidationError(f"config key {key!r}: bad value {value!r}") from None


def configs_from_values(values: dict) -> tuple[ModelConfig, TrainConfig]:
    model_keys = {f.name for f in fields(ModelConfig)}
    mc = ModelConfig(**{k: v for k, v in values.items() if k in model_keys})
    tkw = {k: v for k, v in values.items() if k not in model_keys}
    if "lambda" in tkw:
        tkw["lam"] = tkw.pop("lambda")
    return mc, TrainConfig(**tkw)


def format_config(mc: ModelConfig, tc: TrainConfig) -> str:
    values = {"lambda": tc.lam, "lr": tc.lr, "batch_size": tc.batch_size, "epochs": tc.epochs,
              "warmup_ratio": tc.warmup_ratio, "eval_every_steps": tc.eval_every_steps, "seed": tc.seed,
              "d_model": mc.d_model, "n_layers": mc.n_layers, "n_heads": mc.n_heads, "d_ff": mc.d_ff,
              "vocab_size": mc.vocab_size, "max_len": mc.max_len}
    return "".join(f"{k} = {values[k]!r}\n" for k in CONFIG_KEYS)
