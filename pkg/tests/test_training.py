import math

import numpy as np
import pytest

from crisismtl.errors import TrainingError, ValidationError
from crisismtl.model import ModelConfig, build_vocab, init_params
from crisismtl.ontology import PriorityLevel
from crisismtl.synthetic import make_corpus, synthetic_ontology
from crisismtl.training import (
    AdamState,
    DEFAULT_BS_GRID,
    DEFAULT_LR_GRID,
    HISTORY_COLUMNS,
    TrainConfig,
    adam_step,
    backward,
    configs_from_values,
    format_config,
    grid_search,
    info_type_loss,
    lr_at_step,
    make_batch,
    parse_config_text,
    priority_loss,
    total_loss,
    train,
)

from gradcheck import grads_agree, numeric_grads

LN2 = math.log(2.0)


def test_info_type_loss_at_half():
    gold = np.zeros((1, 25))
    gold[0, [1, 4]] = 1
    assert info_type_loss(np.full((1, 25), 0.5), gold) == pytest.approx(25 * LN2, abs=1e-12)
    assert info_type_loss(np.full((1, 25), 0.5), np.zeros((1, 25))) == pytest.approx(17.328679513998633, abs=1e-12)


def test_info_type_loss_perfect_and_clamped():
    gold = np.array([[1.0, 0.0, 1.0]])
    assert info_type_loss(gold, gold) < 1e-10
    assert info_type_loss(np.array([[0.0, 1.0, 0.0]]), gold) == pytest.approx(-3 * math.log(1e-12), rel=1e-5)


def test_info_type_loss_batch_mean():
    p = np.array([[0.9, 0.2], [0.3, 0.6]])
    b = np.array([[1, 0], [0, 0]])
    rows = [-(math.log(0.9) + math.log(0.8)), -(math.log(0.7) + math.log(0.4))]
    assert info_type_loss(p, b) == pytest.approx(sum(rows) / 2, abs=1e-12)


@pytest.mark.parametrize("score,target,expected", [(1.0, 1.0, 0.0), (0.5, 1.0, 0.25), (0.25, 0.25, 0.0)])
def test_priority_loss(score, target, expected):
    assert priority_loss(score, target) == expected


def test_total_loss_weights():
    assert total_loss(0.5, 3.0, 1.0) == 2.0
    assert total_loss(0.0, 3.0, 1.0) == 1.0
    assert total_loss(1.0, 3.0, 1.0) == 3.0


def test_train_config_validation():
    with pytest.raises(ValidationError):
        TrainConfig(lam=1.5)
    with pytest.raises(ValidationError):
        TrainConfig(warmup_ratio=1.0)
    with pytest.raises(ValidationError):
        TrainConfig(lr=0)


GRAD_CFG = ModelConfig(d_model=8, n_layers=2, n_heads=2, d_ff=12, vocab_size=20, max_len=7, n_types=4)


def _grad_setup(seed=0):
    corpus = make_corpus(3, seed=seed)
    vocab = build_vocab([r.text for r in corpus], GRAD_CFG.vocab_size)
    cfg = ModelConfig(**{**GRAD_CFG.__dict__, "vocab_size": len(vocab)})
    params = init_params(cfg, seed)
    rng = np.random.default_rng(seed)
    for name in params:
        if name.endswith(("_g", "_b")) or name[-2:] in ("bq", "bk", "bv", "bo", "b1", "b2"):
            params[name] = params[name] + 0.1 * rng.standard_normal(params[name].shape)
    return params, cfg, make_batch(corpus, vocab, synthetic_ontology(), cfg.max_len)


@pytest.mark.parametrize("lam", [0.0, 0.3, 1.0])
def test_gradients_match_finite_differences(lam):
    params, cfg, batch = _grad_setup()
    _, grads = backward(params, cfg, batch, lam)
    num = numeric_grads(params, cfg, batch, lam)
    for name in params:
        assert grads_agree(grads[name], num[name], 1e-5), name


def test_key_bias_gradient_vanishes():
    params, cfg, batch = _grad_setup()
    _, grads = backward(params, cfg, batch, 0.5)
    assert np.abs(grads["layer0.bk"]).max() < 1e-15


def test_gradients_per_component():
    params, cfg, batch = _grad_setup(1)
    _, grads = backward(params, cfg, batch, 0.5)
    num = numeric_grads(params, cfg, batch, 0.5)
    for name in params:
        np.testing.assert_allclose(grads[name], num[name], rtol=1e-4, atol=1e-8, err_msg=name)


def test_head_gradients_vanish_at_extreme_lambda():
    params, cfg, batch = _grad_setup()
    _, g1 = backward(params, cfg, batch, 1.0)
    _, g0 = backward(params, cfg, batch, 0.0)
    assert not np.any(g1["w_p"]) and np.any(g1["w_t"])
    assert not np.any(g0["w_t"]) and np.any(g0["w_p"])


def test_single_task_gradient_ignores_other_head():
    """At lam=1 nothing about the priority task may reach the encoder, and vice versa."""
    params, cfg, batch = _grad_setup()
    _, ref_it = backward(params, cfg, batch, 1.0)
    _, ref_pri = backward(params, cfg, batch, 0.0)
    other = {k: v.copy() for k, v in params.items()}
    other["w_p"] = other["w_p"] * -7.0
    flipped = type(batch)(batch.ids, batch.mask, batch.gold_bits, 1.0 - batch.targets)
    _, g = backward(other, cfg, flipped, 1.0)
    for name in params:
        if name != "w_p":
            assert np.array_equal(g[name], ref_it[name]), name
    other = {k: v.copy() for k, v in params.items()}
    other["w_t"] = other["w_t"] * 3.0
    flipped = type(batch)(batch.ids, batch.mask, 1.0 - batch.gold_bits, batch.targets)
    _, g = backward(other, cfg, flipped, 0.0)
    for name in params:
        if name != "w_t":
            assert np.array_equal(g[name], ref_pri[name]), name


def test_backward_rejects_non_finite():
    params, cfg, batch = _grad_setup()
    params["layer1.w2"][0, 0] = np.nan
    with pytest.raises(TrainingError, match="non-finite gradient in tensor"):
        backward(params, cfg, batch, 0.5)


def test_adam_zero_gradient_is_noop():
    params = {"w": np.array([1.0, -2.0])}
    state = AdamState.zeros_like(params)
    for _ in range(5):
        adam_step(params, {"w": np.zeros(2)}, state, 0.1)
    assert params["w"].tolist() == [1.0, -2.0]


@pytest.mark.parametrize("g", [1e-3, 0.5, -3.0, 250.0])
def test_adam_first_step_magnitude(g):
    params = {"w": np.zeros(3)}
    state = AdamState.zeros_like(params)
    adam_step(params, {"w": np.full(3, g)}, state, 0.01)
    expected = 0.01 * abs(g) / (abs(g) + 1e-8)
    np.testing.assert_allclose(np.abs(params["w"]), expected, rtol=1e-12)
    assert np.all(np.sign(params["w"]) == -np.sign(g))


def test_adam_first_step_scale_invariant():
    g = np.array([0.3, -1.2, 2.0])
    a, b = {"w": np.zeros(3)}, {"w": np.zeros(3)}
    adam_step(a, {"w": g}, AdamState.zeros_like(a), 1e-3)
    adam_step(b, {"w": 10 * g}, AdamState.zeros_like(b), 1e-3)
    np.testing.assert_allclose(a["w"], b["w"], rtol=1e-7)


def test_lr_schedule_examples():
    total, base = 100, 5e-5
    w = 10
    assert lr_at_step(w, total, base, 0.1) == base
    assert lr_at_step(total, total, base, 0.1) == 0.0
    assert lr_at_step((w + total) // 2, total, base, 0.1) == pytest.approx(base / 2, rel=1e-12)
    assert lr_at_step(0, total, base, 0.1) == 0.0
    assert lr_at_step(5, total, base, 0.1) == pytest.approx(base / 2, rel=1e-12)


@pytest.mark.parametrize("total,ratio", [(100, 0.1), (37, 0.25), (1000, 0.05)])
def test_lr_schedule_shape(total, ratio):
    lrs = np.array([lr_at_step(s, total, 1.0, ratio) for s in range(total + 1)])
    peak = int(np.argmax(lrs))
    assert np.count_nonzero(lrs == lrs.max()) == 1
    assert np.all(np.diff(lrs[: peak + 1]) > 0) and np.all(np.diff(lrs[peak:]) < 0)
    # piecewise linear: constant slope on each side
    assert np.ptp(np.diff(lrs[: peak + 1])) < 1e-12 and np.ptp(np.diff(lrs[peak:])) < 1e-12


def test_lr_schedule_domain():
    with pytest.raises(ValueError):
        lr_at_step(101, 100, 1.0, 0.1)


SMALL = ModelConfig(d_model=8, n_layers=1, n_heads=2, d_ff=16, vocab_size=60, max_len=12)


def test_train_without_dev_returns_last_step():
    corpus = make_corpus(40, seed=3)
    ckpt, hist = train(SMALL, TrainConfig(lr=1e-2, epochs=3, batch_size=8, eval_every_steps=4), corpus, [],
                       synthetic_ontology())
    assert hist.total_steps == 15 and hist.best_step == 15
    assert [p.step for p in hist.points] == [4, 8, 12, 15]
    assert all(p.dev is None for p in hist.points)
    assert ckpt.config.n_types == 4 and ckpt.config.vocab_size == len(ckpt.vocab)
    assert hist.to_csv().splitlines()[0] == ",".join(HISTORY_COLUMNS)


def test_train_selects_best_dev_harm():
    corpus = make_corpus(60, seed=4)
    ckpt, hist = train(SMALL, TrainConfig(lr=1e-2, epochs=4, batch_size=8, eval_every_steps=5), corpus[:45],
                       corpus[45:], synthetic_ontology())
    harms = [p.dev.harm for p in hist.points]
    assert hist.best_step == hist.points[harms.index(max(harms))].step
    steps = [p.step for p in hist.points]
    assert steps == sorted(set(steps))


def test_train_is_deterministic():
    corpus = make_corpus(30, seed=5)
    tc = TrainConfig(lr=1e-2, epochs=2, batch_size=8)
    a, _ = train(SMALL, tc, corpus, [], synthetic_ontology())
    b, _ = train(SMALL, tc, corpus, [], synthetic_ontology())
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


def test_train_requires_data():
    with pytest.raises(ValidationError):
        train(SMALL, TrainConfig(), [], [], synthetic_ontology())


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_aborts_on_divergence():
    corpus = make_corpus(16, seed=6)
    with pytest.raises(TrainingError):
        train(SMALL, TrainConfig(lr=1e300, epochs=3, batch_size=4, warmup_ratio=0.0), corpus, [],
              synthetic_ontology())


def test_grid_search_defaults_and_order():
    assert len(DEFAULT_LR_GRID) * len(DEFAULT_BS_GRID) == 24
    corpus = make_corpus(30, seed=7)
    tc = TrainConfig(epochs=1, eval_every_steps=100)
    rows = grid_search(SMALL, tc, corpus[:24], corpus[24:], synthetic_ontology())
    assert len(rows) == 24
    assert [r.harm for r in rows] == sorted((r.harm for r in rows), reverse=True)
    again = grid_search(SMALL, tc, corpus[:24], corpus[24:], synthetic_ontology())
    assert rows == again


def test_grid_search_single_cell():
    corpus = make_corpus(20, seed=8)
    rows = grid_search(SMALL, TrainConfig(epochs=1), corpus[:15], corpus[15:], synthetic_ontology(),
                       lr_grid=[1e-3], bs_grid=[4])
    assert len(rows) == 1 and rows[0].lr == 1e-3 and rows[0].batch_size == 4


def test_config_file_round_trip():
    text = "# comment\nlambda = 0.25\nlr = 0.001\nepochs = 3 # inline\nd_model = 16\nn_heads = 2\n"
    values = parse_config_text(text)
    mc, tc = configs_from_values(values)
    assert tc.lam == 0.25 and tc.lr == 0.001 and tc.epochs == 3 and mc.d_model == 16
    mc2, tc2 = configs_from_values(parse_config_text(format_config(mc, tc)))
    assert (mc2, tc2) == (mc, tc)


@pytest.mark.parametrize("text", ["bogus = 1\n", "lr 0.1\n", "epochs = many\n"])
def test_config_file_errors(text):
    with pytest.raises(ValidationError):
        parse_config_text(text)


def test_make_batch_targets():
    corpus = make_corpus(5, seed=0)
    vocab = build_vocab([r.text for r in corpus], 50)
    batch = make_batch(corpus, vocab, synthetic_ontology(), 12)
    mapping = {PriorityLevel.LOW: 0.25, PriorityLevel.MEDIUM: 0.5, PriorityLevel.HIGH: 0.75, PriorityLevel.CRITICAL: 1.0}
    assert batch.targets.tolist() == [mapping[r.priority] for r in corpus]
    assert batch.gold_bits.sum() == sum(len(r.info_types) for r in corpus)
