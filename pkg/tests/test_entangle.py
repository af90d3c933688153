from fractions import Fraction

import numpy as np
import pytest

from entangler import CoAttentionConfig, Entangler, Vocab, build_vocabs, collate, pe_indices, sinusoidal_pe, tokenize_pair
from entangler import tensor as T
from entangler.entangle import CoTRM
from entangler.errors import ConfigurationError

import oracles
from conftest import tiny_model

D = 8


def _entangler(m=1, pe="none", seed=0):
    cfg = CoAttentionConfig(num_modules=m, hidden_size=D, num_heads=2, feed_forward_size=16, dropout=0.0, pe_strategy=pe)
    return Entangler(cfg, np.random.default_rng(seed))


def _inputs(seed=1, b=2, ls=4, lc=7):
    rng = np.random.default_rng(seed)
    hs0 = rng.normal(size=(b, ls, D))
    hc0 = rng.normal(size=(b, lc, D))
    s_mask = np.ones((b, ls), bool)
    c_mask = np.ones((b, lc), bool)
    s_mask[1, -1] = False
    c_mask[1, -2:] = False
    return hs0, hc0, s_mask, c_mask


def test_matches_loop_oracle(f64):
    ent = _entangler(m=2)
    hs0, hc0, sm, cm = _inputs()
    out = ent(T.Tensor(hs0), T.Tensor(hc0), sm, cm)
    for b in range(2):
        ws, wc = oracles.entangle(hs0[b], hc0[b], sm[b], cm[b], ent)
        assert np.allclose(out.subword.data[b][sm[b]], ws[sm[b]], atol=1e-9)
        assert np.allclose(out.char.data[b][cm[b]], wc[cm[b]], atol=1e-9)


def test_cross_attention_weights_match_oracle(f64):
    rng = np.random.default_rng(4)
    block = CoTRM(D, 2, 16, rng)
    xq, xkv = rng.normal(size=(3, D)), rng.normal(size=(5, D))
    mask = np.array([True, True, False, True, True])
    block(T.Tensor(xq[None]), T.Tensor(xkv[None]), mask[None])
    got = block.attention.last_weights[0]
    _, want = oracles.multi_head(list(xq), list(xkv), mask, block.attention, return_weights=True)
    assert np.allclose(got, np.array(want), atol=1e-6)
    assert np.all(got[:, :, 2] == 0.0)


def test_single_key_gives_its_value_projection(f64):
    rng = np.random.default_rng(5)
    block = CoTRM(D, 2, 16, rng)
    xq, xkv = rng.normal(size=(1, 4, D)), rng.normal(size=(1, 3, D))
    mask = np.array([[False, True, False]])
    out = block.attention(T.Tensor(xq), T.Tensor(xkv), mask).data[0]
    v = oracles.linear(oracles.linear(xkv[0, 1], block.attention.value), block.attention.output)
    assert np.allclose(out, np.tile(v, (4, 1)), atol=1e-12)


def test_one_query_row():
    rng = np.random.default_rng(6)
    block = CoTRM(D, 2, 16, rng)
    out = block(T.Tensor(rng.normal(size=(1, 1, D))), T.Tensor(rng.normal(size=(1, 5, D))))
    assert out.shape == (1, 1, D)


def test_width_mismatch_rejected():
    block = CoTRM(D, 2, 16, np.random.default_rng(0))
    with pytest.raises(ConfigurationError):
        block(T.Tensor(np.zeros((1, 2, D))), T.Tensor(np.zeros((1, 2, 4))))


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_shapes_preserved(m):
    hs0, hc0, sm, cm = _inputs()
    out = _entangler(m)(T.Tensor(hs0), T.Tensor(hc0), sm, cm)
    assert out.subword.shape == hs0.shape and out.char.shape == hc0.shape
    assert len(out.subword_layers) == len(out.char_layers) == m


def test_zeroed_second_module_passes_through(f64):
    one, two = _entangler(1), _entangler(2)
    two.load_state_dict({**two.state_dict(), **one.state_dict()})
    for mod in (two.subword_modules[1], two.char_modules[1]):
        for blk in (mod.cotrm, mod.trm):
            for lin in (blk.attention.output, blk.ffn.down):
                lin.weight.data[...] = 0.0
                lin.bias.data[...] = 0.0
    hs0, hc0, sm, cm = _inputs()
    a = one(T.Tensor(hs0), T.Tensor(hc0), sm, cm)
    b = two(T.Tensor(hs0), T.Tensor(hc0), sm, cm)
    # post-norm re-normalises an already normalised row: equal up to the
    # layer-norm epsilon, not bit for bit
    assert np.allclose(a.subword.data, b.subword.data, atol=1e-4)
    assert np.allclose(a.char.data, b.char.data, atol=1e-4)


def test_sides_share_no_parameters():
    ent = _entangler(3)
    sub = {id(p) for m in ent.subword_modules for p in m.parameters()}
    char = {id(p) for m in ent.char_modules for p in m.parameters()}
    assert sub and char and not sub & char
    assert len(ent.parameters()) == len(sub) + len(char)


def test_mirrored_model_gives_mirrored_outputs(f64):
    ent, mirror = _entangler(2, seed=0), _entangler(2, seed=9)
    swapped = {}
    for key, value in ent.state_dict().items():
        head, rest = key.split(".", 1)
        other = "char_modules" if head == "subword_modules" else "subword_modules"
        swapped[f"{other}.{rest}"] = value
    mirror.load_state_dict(swapped)
    hs0, hc0, sm, cm = _inputs()
    a = ent(T.Tensor(hs0), T.Tensor(hc0), sm, cm)
    b = mirror(T.Tensor(hc0), T.Tensor(hs0), cm, sm)
    assert np.array_equal(a.subword.data, b.char.data)
    assert np.array_equal(a.char.data, b.subword.data)


def test_parallel_update_order(f64):
    """Module 1 on the char side must read the subword states before module 1 ran."""
    ent = _entangler(1)
    hs0, hc0, sm, cm = _inputs()
    out = ent(T.Tensor(hs0), T.Tensor(hc0), sm, cm)
    char_mod = ent.char_modules[0]
    want = char_mod(T.Tensor(hc0), cm, T.Tensor(hs0), sm).data
    assert np.array_equal(out.char.data, want)


# -- positional strategies -------------------------------------------------
@pytest.fixture
def a_dog_sat():
    sv = Vocab.from_tokens(["A", "d", "o", "g", "s", "a", "t", "do", "dog", "sa", "sat"],
                           merges=[("d", "o"), ("do", "g"), ("s", "a"), ("sa", "t")])
    cv = Vocab.from_tokens("Adogsat")
    return tokenize_pair(["A", "dog", "sat"], sv, cv)


def test_pe_indices_table(a_dog_sat):
    sub, char = pe_indices(a_dog_sat, "a")
    assert char[1:-1] == [1, 2, 2, 2, 3, 3, 3]
    assert sub[1:-1] == [1, 2, 3]
    sub, char = pe_indices(a_dog_sat, "b")
    assert sub[1:-1] == [1, 2, 5] and char[1:-1] == list(range(1, 8))
    sub, char = pe_indices(a_dog_sat, "c")
    assert sub[1:-1] == [1, Fraction(2 + 3 + 4, 3), Fraction(5 + 6 + 7, 3)]
    for strategy in "abc":
        sub, char = pe_indices(a_dog_sat, strategy)
        assert sub[0] == char[0] == 0


def test_single_char_words_b_equals_c():
    sv, cv = build_vocabs(["x y z"], 3)
    pair = tokenize_pair(["x", "y", "z"], sv, cv)
    assert pe_indices(pair, "b")[0] == pe_indices(pair, "c")[0]


def test_strategy_needs_alignments():
    ent = _entangler(1, pe="a")
    hs0, hc0, sm, cm = _inputs()
    with pytest.raises(ConfigurationError):
        ent(T.Tensor(hs0), T.Tensor(hc0), sm, cm)


def test_unknown_strategy_rejected():
    with pytest.raises(ConfigurationError):
        CoAttentionConfig(pe_strategy="z")


@pytest.mark.parametrize("strategy", ["a", "b", "c"])
def test_positions_injected_exactly_once(f64, strategy):
    sv, cv = build_vocabs(["the dog sat", "a cat ran off"], 6)
    pairs = [tokenize_pair(s.split(), sv, cv) for s in ["the dog sat", "a cat ran off"]]
    batch = collate(pairs)
    with_pe, plain = _entangler(2, pe=strategy), _entangler(2)
    plain.load_state_dict(with_pe.state_dict())
    for ent in (with_pe, plain):
        ent.subword_modules[0].cotrm.attention.value.weight.data[...] = 0.0
        ent.char_modules[0].cotrm.attention.value.weight.data[...] = 0.0
    rng = np.random.default_rng(3)
    hs0 = rng.normal(size=batch.subword_ids.shape + (D,))
    hc0 = rng.normal(size=batch.char_ids.shape + (D,))
    a = with_pe(T.Tensor(hs0), T.Tensor(hc0), batch.subword_mask, batch.char_mask, pairs)

    sub_pos = np.zeros(batch.subword_ids.shape)
    char_pos = np.zeros(batch.char_ids.shape)
    for i, p in enumerate(pairs):
        sp, cp = pe_indices(p, strategy)
        sub_pos[i, : len(sp)] = [float(x) for x in sp]
        char_pos[i, : len(cp)] = [float(x) for x in cp]
    b = plain(T.Tensor(hs0 + sinusoidal_pe(sub_pos, D)), T.Tensor(hc0 + sinusoidal_pe(char_pos, D)),
              batch.subword_mask, batch.char_mask)
    assert np.array_equal(a.subword.data, b.subword.data)
    assert np.array_equal(a.char.data, b.char.data)
    c = plain(T.Tensor(hs0), T.Tensor(hc0), batch.subword_mask, batch.char_mask)
    assert not np.allclose(a.subword.data, c.subword.data)


def test_padding_invariance_end_to_end(toy_vocabs):
    sv, cv = toy_vocabs
    model = tiny_model(sv, cv, num_coattention=2, pe_strategy="c")
    model.eval()
    short = tokenize_pair(["a", "cat"], sv, cv)
    long = tokenize_pair("the dog sat on the mat".split(), sv, cv)
    alone = model(collate([short]))
    both = model(collate([short, long]))
    assert np.max(np.abs(both.subword.data[0, : short.num_subwords] - alone.subword.data[0])) <= 1e-6
    assert np.max(np.abs(both.char.data[0, : short.num_chars] - alone.char.data[0])) <= 1e-6
