import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entangler import MaskedBatch, MatchingScale, Pretrainer, collate, mask_tokens, matching_loss, mlm_loss, tokenize_pair
from entangler import tensor as T
from entangler.batch import IGNORE_INDEX
from entangler.errors import ConfigurationError
from entangler.nn import Linear
from entangler.tokenize import MASK_ID

import oracles
from conftest import tiny_model

CLOSED_FORM = math.log(1 + math.exp(-1))


def _hand_case():
    hs = np.eye(2)
    hc = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    return hs, hc, np.array([0, 0, 1]), np.ones(3, bool)


# -- masking ---------------------------------------------------------------
def test_mask_rate_on_ten_thousand_tokens():
    ids = np.random.default_rng(0).integers(5, 60, size=10_000)
    m = mask_tokens(ids, 0.15, np.random.default_rng(1))
    assert 0.13 <= m.mask_positions.mean() <= 0.17
    assert np.all(m.input_ids[m.mask_positions] == MASK_ID)
    assert np.array_equal(m.targets[m.mask_positions], ids[m.mask_positions])
    assert np.all(m.targets[~m.mask_positions] == IGNORE_INDEX)


def test_specials_never_masked():
    ids = np.array([[2, 7, 8, 3, 0, 0]] * 500)
    m = mask_tokens(ids, 0.9, np.random.default_rng(0))
    assert not m.mask_positions[:, [0, 3, 4, 5]].any()


def test_masking_deterministic_for_seed():
    ids = np.arange(5, 105)
    a = mask_tokens(ids, 0.15, np.random.default_rng(42))
    b = mask_tokens(ids, 0.15, np.random.default_rng(42))
    assert np.array_equal(a.input_ids, b.input_ids)


def test_tiny_rate_masks_nothing_and_costs_nothing():
    ids = np.arange(5, 25)[None]
    m = mask_tokens(ids, 1e-12, np.random.default_rng(0))
    assert not m.mask_positions.any()
    proj = Linear(4, 30, np.random.default_rng(0))
    assert mlm_loss(T.Tensor(np.ones((1, 20, 4))), m, proj).item() == 0.0


def test_mask_rate_validated():
    with pytest.raises(ConfigurationError):
        mask_tokens([5, 6], 1.5, np.random.default_rng(0))


# -- MLM -------------------------------------------------------------------
def _masked(ids, positions):
    ids = np.asarray(ids)
    pos = np.asarray(positions, bool)
    return MaskedBatch(np.where(pos, MASK_ID, ids), np.where(pos, ids, IGNORE_INDEX), pos)


def test_mlm_uniform_is_ln_v():
    proj = Linear(4, 11, np.random.default_rng(0))
    proj.weight.data[...] = 0
    m = _masked([[5, 6, 7, 8]], [[True, False, True, False]])
    assert math.isclose(mlm_loss(T.Tensor(np.ones((1, 4, 4))), m, proj).item(), math.log(11), rel_tol=1e-6)


def test_mlm_one_hot_correct_is_zero(f64):
    proj = Linear(3, 8, np.random.default_rng(0))
    proj.weight.data[...] = 0
    proj.bias.data[...] = 0
    proj.weight.data[0, 5] = proj.weight.data[1, 6] = 1000.0
    states = T.Tensor([[[1.0, 0, 0], [0, 1.0, 0]]])
    m = _masked([[5, 6]], [[True, True]])
    assert mlm_loss(states, m, proj).item() < 1e-12


def test_mlm_matches_loop_oracle(f64):
    rng = np.random.default_rng(3)
    proj = Linear(4, 9, rng)
    h = rng.normal(size=(2, 5, 4))
    ids = rng.integers(5, 9, size=(2, 5))
    pos = rng.random((2, 5)) < 0.5
    pos[0, 0] = True
    total, count = 0.0, 0
    for b in range(2):
        for i in range(5):
            if pos[b, i]:
                logits = oracles.linear(h[b, i], proj)
                total -= math.log(oracles.softmax_list(list(logits))[ids[b, i]])
                count += 1
    got = mlm_loss(T.Tensor(h), _masked(ids, pos), proj).item()
    assert math.isclose(got, total / count, rel_tol=1e-12)


def test_mlm_gradient_zero_at_unmasked_positions():
    rng = np.random.default_rng(4)
    proj = Linear(4, 9, rng)
    states = T.Tensor(rng.normal(size=(2, 6, 4)), requires_grad=True)
    pos = rng.random((2, 6)) < 0.5
    pos[0, 1] = True
    pos[1, 2] = False
    mlm_loss(states, _masked(rng.integers(5, 9, size=(2, 6)), pos), proj).backward()
    assert np.all(states.grad[~pos] == 0.0)
    assert np.any(states.grad[pos] != 0.0)


# -- matching --------------------------------------------------------------
def test_matching_closed_form(f64):
    hs, hc, labels, valid = _hand_case()
    got = matching_loss(T.Tensor(hs), T.Tensor(hc), labels, valid, MatchingScale(1.0)).item()
    assert abs(got - CLOSED_FORM) <= 1e-6
    assert abs(got - 0.3133) < 5e-5


def test_matching_identical_subwords_is_ln_ns(f64):
    rng = np.random.default_rng(0)
    hs = np.tile(rng.normal(size=(1, 4)), (5, 1))
    hc = rng.normal(size=(7, 4))
    labels = rng.integers(0, 5, size=7)
    got = matching_loss(T.Tensor(hs), T.Tensor(hc), labels, np.ones(7, bool), MatchingScale(2.0)).item()
    assert math.isclose(got, math.log(5), rel_tol=1e-12)


def test_matching_scale_monotone(f64):
    hs, hc, labels, valid = _hand_case()
    values = [matching_loss(T.Tensor(hs), T.Tensor(hc), labels, valid, MatchingScale(a)).item() for a in (1, 2, 4, 8)]
    assert all(x < y for x, y in zip(values, values[1:]))
    assert values[-1] < math.log(2)


def test_matching_invalid_subwords_leave_support(f64):
    hs, hc, labels, valid = _hand_case()
    hs3 = np.vstack([hs, [[5.0, 5.0]]])
    got = matching_loss(T.Tensor(hs3), T.Tensor(hc), labels, valid, MatchingScale(1.0),
                        subword_valid=np.array([True, True, False])).item()
    assert abs(got - CLOSED_FORM) <= 1e-12


def test_matching_no_valid_chars_is_zero():
    hs, hc, labels, _ = _hand_case()
    assert matching_loss(T.Tensor(hs), T.Tensor(hc), labels, np.zeros(3, bool), MatchingScale(1.0)).item() == 0.0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), ns=st.integers(2, 6), nc=st.integers(1, 9))
def test_matching_permutation_invariance(seed, ns, nc):
    rng = np.random.default_rng(seed)
    with T.precision(np.float64):
        hs = rng.normal(size=(ns, 4))
        hc = rng.normal(size=(nc, 4))
        labels = rng.integers(0, ns, size=nc)
        valid = np.ones(nc, bool)
        perm = rng.permutation(ns)
        inverse = np.argsort(perm)
        a = matching_loss(T.Tensor(hs), T.Tensor(hc), labels, valid, MatchingScale(1.5)).item()
        b = matching_loss(T.Tensor(hs[perm]), T.Tensor(hc), inverse[labels], valid, MatchingScale(1.5)).item()
    assert math.isclose(a, b, rel_tol=1e-12)


def test_scale_stays_positive_and_trains():
    scale = MatchingScale(4.0)
    assert math.isclose(scale.value.item(), 4.0, rel_tol=1e-6)
    scale.log_a.data[...] = -50.0
    assert scale.value.item() > 0.0
    with pytest.raises(ConfigurationError):
        MatchingScale(0.0)


# -- combined --------------------------------------------------------------
def test_total_is_exact_sum(toy_vocabs):
    sv, cv = toy_vocabs
    model = tiny_model(sv, cv)
    trainer = Pretrainer(model, np.random.default_rng(0))
    batch = collate([tokenize_pair(s.split(), sv, cv) for s in ["the dog sat on the mat", "a cat ran"]])
    parts = trainer.losses(batch, np.random.default_rng(1))
    assert set(parts) == {"matching", "mlm_subword", "mlm_char", "total"}
    assert parts["total"].data == parts["matching"].data + parts["mlm_subword"].data + parts["mlm_char"].data
    assert math.isclose(trainer.scale.value.item(), 4.0, rel_tol=1e-6)


def test_fixed_masks_reproducible(toy_vocabs):
    sv, cv = toy_vocabs
    model = tiny_model(sv, cv)
    trainer = Pretrainer(model, np.random.default_rng(0))
    batch = collate([tokenize_pair(s.split(), sv, cv) for s in ["the dog sat", "a cat ran"]])
    a = trainer.losses(batch, np.random.default_rng(5))["total"].item()
    b = trainer.losses(batch, np.random.default_rng(5))["total"].item()
    assert a == b
