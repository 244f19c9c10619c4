"""Whole-word tokenizer, a post-norm transformer encoder and the two [CLS] heads.

Everything is float64 numpy. Forward passes keep the intermediates that
``training.backward`` needs, so the same code path serves inference and
gradient computation.
"""

from __future__ import annotations

import io
import json
import re
import zipfile
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np
from scipy.special import erf

from .corpus import GoldRecord, RunRecord
from .errors import ValidationError
from .ontology import Ontology, parse_ontology

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
RESERVED = (PAD, UNK, CLS, SEP)
PAD_ID, UNK_ID, CLS_ID, SEP_ID = range(4)
LN_EPS = 1e-12

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def split_words(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class Vocab:
    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tuple(tokens[:4]) != RESERVED:
            raise ValidationError("vocabulary must start with [PAD], [UNK], [CLS], [SEP]")
        if len(set(tokens)) != len(tokens):
            raise ValidationError("vocabulary tokens must be unique")
        self.tokens = tokens
        self.index = {t: i for i, t in enumerate(tokens)}

    def __len__(self):
        return len(self.tokens)

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.tokens == other.tokens

    def lookup(self, token: str) -> int:
        return self.index.get(token, UNK_ID)


def build_vocab(texts: Sequence[str], size_limit: int) -> Vocab:
    """Reserved tokens plus the most frequent words, ties broken alphabetically."""
    if size_limit < 5:
        raise ValidationError("vocabulary size limit must be at least 5")
    counts = Counter()
    for text in texts:
        counts.update(split_words(text))
    for tok in RESERVED:
        counts.pop(tok, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocab(list(RESERVED) + [w for w, _ in ranked[: size_limit - len(RESERVED)]])


def tokenize(text: str, vocab: Vocab, max_len: int) -> tuple[np.ndarray, np.ndarray]:
    if max_len < 3:
        raise ValidationError("max_len must be at least 3")
    body = [vocab.lookup(w) for w in split_words(text)][: max_len - 2]
    ids = [CLS_ID] + body + [SEP_ID]
    mask = np.zeros(max_len, dtype=np.int64)
    mask[: len(ids)] = 1
    out = np.full(max_len, PAD_ID, dtype=np.int64)
    out[: len(ids)] = ids
    return out, mask


def tokenize_batch(texts: Sequence[str], vocab: Vocab, max_len: int) -> tuple[np.ndarray, np.ndarray]:
    pairs = [tokenize(t, vocab, max_len) for t in texts]
    if not pairs:
        return np.zeros((0, max_len), np.int64), np.zeros((0, max_len), np.int64)
    return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    vocab_size: int = 5000
    max_len: int = 128
    n_types: int = 25

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, int) or value < 1:
                raise ValidationError(f"{f.name} must be a positive integer, got {value!r}")
        if self.d_model % self.n_heads:
            raise ValidationError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if self.max_len < 3:
            raise ValidationError("max_len must be at least 3")


def param_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    """Name -> shape for every tensor, in canonical order."""
    d, f = cfg.d_model, cfg.d_ff
    shapes = {"tok_emb": (cfg.vocab_size, d), "pos_emb": (cfg.max_len, d)}
    for i in range(cfg.n_layers):
        p = f"layer{i}."
        for name in ("wq", "wk", "wv", "wo"):
            shapes[p + name] = (d, d)
            shapes[p + "b" + name[1]] = (d,)
        shapes[p + "ln1_g"] = (d,)
        shapes[p + "ln1_b"] = (d,)
        shapes[p + "w1"] = (d, f)
        shapes[p + "b1"] = (f,)
        shapes[p + "w2"] = (f, d)
        shapes[p + "b2"] = (d,)
        shapes[p + "ln2_g"] = (d,)
        shapes[p + "ln2_b"] = (d,)
    shapes["w_t"] = (d, cfg.n_types)
    shapes["w_p"] = (d, 1)
    return shapes


def check_params(params: dict, cfg: ModelConfig) -> None:
    shapes = param_shapes(cfg)
    if list(params) != list(shapes):
        raise ValidationError("parameter names do not match the model configuration")
    for name, shape in shapes.items():
        if params[name].shape != shape:
            raise ValidationError(f"{name}: shape {params[name].shape} != expected {shape}")


def init_params(cfg: ModelConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Glorot-uniform matrices, unit layer-norm gains, zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(cfg).items():
        if len(shape) == 2:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-limit, limit, size=shape)
        elif name.endswith("_g"):
            params[name] = np.ones(shape)
        else:
            params[name] = np.zeros(shape)
    return params


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def gelu_grad(x):
    cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
    return cdf + x * np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


def sigmoid(x):
    # split by sign so neither branch overflows
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ez = np.exp(x[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def layer_norm(x, gain, shift):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv_std = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * inv_std
    return xhat * gain + shift, (xhat, inv_std)


def _split_heads(x, n_heads):
    b, l, d = x.shape
    return x.reshape(b, l, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, l, dk = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, l, h * dk)


def attention_layer(params, prefix, x, mask, n_heads):
    """One post-norm encoder block. Returns (output, cache)."""
    p = lambda name: params[prefix + name]  # noqa: E731
    q = _split_heads(x @ p("wq") + p("bq"), n_heads)
    k = _split_heads(x @ p("wk") + p("bk"), n_heads)
    v = _split_heads(x @ p("wv") + p("bv"), n_heads)
    scale = 1.0 / np.sqrt(q.shape[-1])
    scores = (q @ k.transpose(0, 1, 3, 2)) * scale
    scores = np.where(mask[:, None, None, :] > 0, scores, -np.inf)
    scores = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    attn = e / e.sum(axis=-1, keepdims=True)
    ctx = _merge_heads(attn @ v)
    h1, ln1 = layer_norm(x + ctx @ p("wo") + p("bo"), p("ln1_g"), p("ln1_b"))
    u = h1 @ p("w1") + p("b1")
    g = gelu(u)
    out, ln2 = layer_norm(h1 + g @ p("w2") + p("b2"), p("ln2_g"), p("ln2_b"))
    cache = dict(x=x, q=q, k=k, v=v, attn=attn, ctx=ctx, h1=h1, ln1=ln1, u=u, g=g, ln2=ln2, scale=scale)
    return out, cache


@dataclass
class ForwardOutput:
    token_outputs: np.ndarray  # (batch, max_len, d_model)
    type_probs: np.ndarray  # (batch, n_types)
    priority_score: np.ndarray  # (batch,)
    type_logits: np.ndarray
    priority_logit: np.ndarray
    caches: list = field(default_factory=list, repr=False)

    @property
    def cls(self):
        return self.token_outputs[:, 0, :]


def encoder_forward(params, cfg: ModelConfig, ids, mask, caches: list | None = None):
    ids = np.asarray(ids)
    mask = np.asarray(mask)
    if ids.ndim == 1:
        ids, mask = ids[None], mask[None]
    if ids.shape[1] > cfg.max_len:
        raise ValidationError("sequence longer than max_len")
    if ids.size and (ids.min() < 0 or ids.max() >= cfg.vocab_size):
        raise IndexError("token index out of vocabulary range")
    x = params["tok_emb"][ids] + params["pos_emb"][: ids.shape[1]]
    for i in range(cfg.n_layers):
        x, cache = attention_layer(params, f"layer{i}.", x, mask, cfg.n_heads)
        if caches is not None:
            caches.append(cache)
    return x


def mtl_forward(params, token_outputs) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    cls = token_outputs[:, 0, :]
    type_logits = cls @ params["w_t"]
    priority_logit = (cls @ params["w_p"])[:, 0]
    return sigmoid(type_logits), sigmoid(priority_logit), type_logits, priority_logit


def forward(params, cfg: ModelConfig, ids, mask, keep_cache: bool = False) -> ForwardOutput:
    caches = [] if keep_cache else None
    out = encoder_forward(params, cfg, ids, mask, caches)
    probs, score, tl, pl = mtl_forward(params, out)
    return ForwardOutput(out, probs, score, tl, pl, caches or [])


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict
    vocab: Vocab
    ontology: Ontology

    def validate(self):
        check_params(self.params, self.config)
        if len(self.vocab) != self.config.vocab_size:
            raise ValidationError("vocabulary size does not match the model configuration")
        if len(self.ontology) != self.config.n_types:
            raise ValidationError("ontology size does not match the model configuration")


def predict_run(ckpt: Checkpoint, tweets: Sequence[GoldRecord], batch_size: int = 64) -> list[RunRecord]:
    """Assign every type with probability strictly above 0.5."""
    names = ckpt.ontology.names
    records = []
    for start in range(0, len(tweets), batch_size):
        chunk = tweets[start : start + batch_size]
        ids, mask = tokenize_batch([t.text for t in chunk], ckpt.vocab, ckpt.config.max_len)
        out = forward(ckpt.params, ckpt.config, ids, mask)
        for tweet, probs, score in zip(chunk, out.type_probs, out.priority_score):
            types = frozenset(names[j] for j in np.flatnonzero(probs > 0.5))
            records.append(RunRecord(tweet.tweet_id, tweet.event_id, types, float(score)))
    return records


# Checkpoints are zip archives of .npy members (np.load reads them as npz) plus
# config.json, vocab.txt and ontology.txt. Timestamps are pinned so identical
# parameters give identical bytes.
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


def _zip_write(zf, name: str, data: bytes):
    info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    ckpt.validate()
    with zipfile.ZipFile(path, "w") as zf:
        _zip_write(zf, "config.json", json.dumps(asdict(ckpt.config), indent=1).encode())
        _zip_write(zf, "vocab.txt", "".join(t + "\n" for t in ckpt.vocab.tokens).encode())
        _zip_write(zf, "ontology.txt", "".join(l + "\n" for l in ckpt.ontology.to_lines()).encode())
        _zip_write(zf, "order.txt", "".join(n + "\n" for n in ckpt.params).encode())
        for name, arr in ckpt.params.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arr, dtype="<f8"), allow_pickle=False)
            _zip_write(zf, name + ".npy", buf.getvalue())


def load_checkpoint(path) -> Checkpoint:
    try:
        with zipfile.ZipFile(path) as zf:
            config = json.loads(zf.read("config.json"))
            tokens = zf.read("vocab.txt").decode().split("\n")[:-1]
            ontology = parse_ontology(zf.read("ontology.txt").decode().splitlines())
            order = zf.read("order.txt").decode().split()
            params = {}
            for name in order:
                arr = np.lib.format.read_array(io.BytesIO(zf.read(name + ".npy")), allow_pickle=False)
                params[name] = arr.astype(np.float64, copy=False)
    except (KeyError, zipfile.BadZipFile, json.JSONDecodeError) as exc:
        raise ValidationError(f"{path}: not a valid checkpoint ({exc})") from None
    try:
        cfg = ModelConfig(**config)
    except TypeError as exc:
        raise ValidationError(f"{path}: bad model configuration ({exc})") from None
    ckpt = Checkpoint(cfg, params, Vocab(tokens), ontology)
    ckpt.validate()
    return ckpt
