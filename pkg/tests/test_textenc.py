"""Lyrics/caption encoder: vocabulary, embeddings, BiGRU, attention."""

import numpy as np
import pytest

from jtav import autodiff as ad
from jtav import textenc as te
from jtav.config import Config
from jtav.errors import EmptyInputError, FormatError
from jtav.params import ParamSet


def toy_encoder(seed=0, vocab=("sun", "rain", "moon", "dust"), **over):
    cfg = Config(text_len=6, cap_len=3, emb_dim=5, gru_hidden=3, **over)
    pset = ParamSet()
    rng = np.random.default_rng(seed)
    enc = te.TextEncoder(pset, rng, cfg, te.Vocabulary(vocab))
    return enc, pset, cfg


def test_vocab_reserves_pad_and_unk():
    v = te.Vocabulary(["b", "a"])
    assert v.lookup("b") == 2
    assert v.lookup("a") == 3
    assert v.lookup("never-seen") == te.UNK
    assert len(v) == 4


def test_vocab_build_sorted_and_deduplicated():
    v = te.Vocabulary.build([["z", "a"], ["a", "m"]])
    assert v.tokens_in_order() == ["a", "m", "z"]


def test_vocab_encode_pads_and_truncates():
    v = te.Vocabulary(["x", "y"])
    ids, n = v.encode(["x", "y"], 4)
    assert list(ids) == [2, 3, 0, 0]
    assert n == 2
    ids, n = v.encode(["x"] * 9, 4)
    assert list(ids) == [2, 2, 2, 2]
    assert n == 4


def test_tokenize_lowercases_and_splits():
    assert te.tokenize("Bright  SUN\trises") == ["bright", "sun", "rises"]


def test_text_pair_rejects_empty():
    with pytest.raises(EmptyInputError):
        te.TextPair([])


def test_embedding_padding_row_zero():
    rng = np.random.default_rng(1)
    w = te.init_embeddings(rng, te.Vocabulary(["a", "b"]), 4)
    assert np.all(w[te.PAD] == 0.0)
    assert np.any(w[2] != 0.0)


def test_embedding_file_loader(tmp_path):
    p = tmp_path / "emb.txt"
    p.write_text("2 3\nsun 1.0 2.0 3.0\nrain -1.0 0.5 0.25\n")
    table = te.load_embedding_file(p, 3)
    assert set(table) == {"sun", "rain"}
    assert np.allclose(table["rain"], [-1.0, 0.5, 0.25])


def test_embedding_file_no_header(tmp_path):
    p = tmp_path / "emb.txt"
    p.write_text("sun 1.0 2.0\n")
    assert np.allclose(te.load_embedding_file(p, 2)["sun"], [1.0, 2.0])


def test_embedding_file_short_line(tmp_path):
    p = tmp_path / "emb.txt"
    p.write_text("sun 1.0 2.0 3.0\nrain 1.0\n")
    with pytest.raises(FormatError) as ei:
        te.load_embedding_file(p, 3)
    assert "line 2" in str(ei.value)


def test_pretrained_rows_injected():
    rng = np.random.default_rng(2)
    vocab = te.Vocabulary(["sun", "rain"])
    w = te.init_embeddings(rng, vocab, 3,
                           pretrained={"sun": np.array([9.0, 9.0, 9.0])})
    assert np.allclose(w[vocab.lookup("sun")], 9.0)
    assert not np.allclose(w[vocab.lookup("rain")], 9.0)


def test_supporting_mask_is_caption_mean():
    enc, _, cfg = toy_encoder()
    mask = enc.supporting_mask(["sun", "rain"])
    table = enc.we.data
    v = enc.vocab
    want = 0.5 * (table[v.lookup("sun")] + table[v.lookup("rain")])
    assert np.allclose(mask.data, want)
    assert enc.supporting_mask(None) is None


def test_apply_supporting_multiplies_rows():
    enc, _, _ = toy_encoder()
    rows = ad.Tensor(np.ones((4, 5)))
    mask = ad.Tensor(np.arange(5.0))
    out = enc.apply_supporting(rows, mask)
    assert np.allclose(out.data, np.tile(np.arange(5.0), (4, 1)))


def test_bigru_output_layout():
    enc, _, cfg = toy_encoder()
    emb, n = enc.embed(["sun", "rain", "moon"], cfg.text_len)
    cols = enc.bigru_forward(emb)
    assert cols.shape == (2 * cfg.gru_hidden, cfg.text_len)


def test_bigru_backward_direction_is_reversed_forward():
    # running the bw cell manually on the reversed sequence must equal the
    # encoder's backward half
    enc, _, cfg = toy_encoder()
    emb, _ = enc.embed(["sun", "rain", "moon", "dust"], 4)
    rows = enc.bigru_rows(emb)
    manual = ad.gru_sequence(
        ad.reverse_rows(emb), enc.p["text.bw.wx"], enc.p["text.bw.b"],
        enc.p["text.bw.uzr"], enc.p["text.bw.uc"])
    assert np.allclose(rows.data[:, cfg.gru_hidden:],
                       manual.data[::-1])


def test_attention_weights_valid_prefix_only():
    enc, _, cfg = toy_encoder()
    t, alpha = enc.encode(te.TextPair(["sun", "rain"]), with_alpha=True)
    assert t.shape == (2 * cfg.gru_hidden,)
    assert alpha.shape == (cfg.text_len,)
    assert abs(alpha[:2].sum() - 1.0) < 1e-12
    assert np.all(alpha[2:] == 0.0)  # padding gets zero attention
    assert np.all(alpha[:2] > 0.0)


def test_attention_readout_is_convex_combination():
    enc, _, cfg = toy_encoder()
    emb, n = enc.embed(["sun", "rain", "moon"], cfg.text_len)
    rows = enc.bigru_rows(emb)
    t, alpha = enc.context_attention_rows(rows, n)
    want = alpha[:n] @ rows.data[:n]
    assert np.allclose(t.data, want)


def test_context_attention_accepts_column_layout():
    enc, _, cfg = toy_encoder()
    emb, n = enc.embed(["sun", "rain"], cfg.text_len)
    cols = enc.bigru_forward(emb)
    t_cols, a_cols = enc.context_attention(cols, n)
    t_rows, a_rows = enc.context_attention_rows(ad.transpose(cols), n)
    assert np.allclose(t_cols.data, t_rows.data)
    assert np.allclose(a_cols, a_rows)


def test_encode_deterministic_per_seed():
    a = toy_encoder(seed=3)[0].encode(te.TextPair(["sun", "rain"])).data
    b = toy_encoder(seed=3)[0].encode(te.TextPair(["sun", "rain"])).data
    c = toy_encoder(seed=4)[0].encode(te.TextPair(["sun", "rain"])).data
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_unknown_tokens_fall_back_to_unk_row():
    enc, _, _ = toy_encoder()
    a = enc.encode(te.TextPair(["qqq"])).data
    b = enc.encode(te.TextPair(["zzz"])).data
    assert np.array_equal(a, b)  # both map to the UNK embedding
