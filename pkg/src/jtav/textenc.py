"""Text encoder: attention-masked bidirectional GRU.

The longest textual part of a post (the lyrics) is the protagonist; the
short caption, when present, acts as a multiplicative attention mask
built by average-pooling its word embeddings. A BiGRU then encodes the
masked sequence and a learned context vector pools the hidden states
into a single 100-dim feature. Right-padding never attracts attention
mass: padded positions are cut out of the softmax entirely.
"""

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import EmptyInputError, FormatError
from .params import ParamSet, context_vector, glorot_uniform

PAD = 0
UNK = 1


class Vocabulary:
    """token -> index map; 0 is padding, 1 is the unknown token."""

    def __init__(self, tokens):
        self.index = {}
        for tok in tokens:
            if tok not in self.index:
                self.index[tok] = len(self.index) + 2

    @classmethod
    def build(cls, token_iterables):
        seen = set()
        for toks in token_iterables:
            seen.update(toks)
        return cls(sorted(seen))

    def __len__(self):
        return len(self.index) + 2

    def lookup(self, token) -> int:
        return self.index.get(token, UNK)

    def encode(self, tokens, length: int):
        """Truncate/right-pad to a fixed length; returns (ids, n_valid)."""
        toks = list(tokens)[:length]
        ids = np.full(length, PAD, dtype=np.int64)
        for i, tok in enumerate(toks):
            ids[i] = self.lookup(tok)
        return ids, len(toks)

    def tokens_in_order(self):
        return [t for t, _ in sorted(self.index.items(), key=lambda kv: kv[1])]


def tokenize(text: str):
    return text.lower().split()


class TextPair:
    """Protagonist tokens plus optional supporting tokens."""

    def __init__(self, protagonist, supporting=None):
        protagonist = list(protagonist)
        if not protagonist:
            raise EmptyInputError("protagonist text is empty")
        self.protagonist = protagonist
        self.supporting = list(supporting) if supporting else None


def load_embedding_file(path, dim: int):
    """Plain-text vectors: one token plus `dim` decimals per line.

    A leading "count dim" header line is skipped when present.
    """
    table = {}
    with open(path, "r", encoding="utf-8") as fh:
        first = True
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            if first and len(parts) == 2:
                try:
                    int(parts[0]), int(parts[1])
                    first = False
                    continue
                except ValueError:
                    pass
            first = False
            if len(parts) < dim + 1:
                raise FormatError(
                    "line %d has %d fields, expected %d"
                    % (lineno, len(parts), dim + 1), field="line %d" % lineno)
            table[parts[0]] = np.array(parts[1:dim + 1], dtype=np.float64)
    return table


def init_embeddings(rng, vocab: Vocabulary, dim: int, pretrained=None):
    """Seeded embedding matrix; row 0 (padding) is zero and stays zero."""
    n = len(vocab)
    w = glorot_uniform(rng, (n, dim), n, dim)
    w[PAD] = 0.0
    if pretrained:
        for tok, idx in vocab.index.items():
            if tok in pretrained:
                w[idx] = pretrained[tok]
    return w


class TextEncoder:
    """Builds parameters once; encodes token pairs into 100-vectors."""

    def __init__(self, pset: ParamSet, rng, cfg, vocab: Vocabulary,
                 pretrained=None):
        self.cfg = cfg
        self.vocab = vocab
        m = cfg.gru_hidden
        d = cfg.emb_dim
        self.m = m
        self.we = pset.add("text.embed", init_embeddings(rng, vocab, d, pretrained))
        for direction in ("fw", "bw"):
            pset.add("text.%s.wx" % direction,
                     glorot_uniform(rng, (3 * m, d), d, m))
            pset.add("text.%s.b" % direction, np.zeros(3 * m))
            pset.add("text.%s.uzr" % direction,
                     glorot_uniform(rng, (2 * m, m), m, m))
            pset.add("text.%s.uc" % direction,
                     glorot_uniform(rng, (m, m), m, m))
        two_m = 2 * m
        # attention projection applied as rows @ w, so w holds W_u transposed
        pset.add("text.att.w", glorot_uniform(rng, (two_m, two_m), two_m, two_m))
        pset.add("text.att.b", np.zeros(two_m))
        pset.add("text.att.ctx", context_vector(rng, two_m))
        self.p = pset

    # -- building blocks ---------------------------------------------------

    def embed(self, tokens, length: int):
        ids, n_valid = self.vocab.encode(tokens, length)
        return ad.embedding_lookup(self.we, ids), n_valid

    def supporting_mask(self, supporting):
        """Average-pooled caption embedding, or None when absent."""
        if not supporting:
            return None
        emb, n_valid = self.embed(supporting, self.cfg.cap_len)
        return ad.mean_pool(ad.slice_rows(emb, 0, n_valid))

    def apply_supporting(self, emb_rows, mask):
        if mask is None:
            return emb_rows
        return ad.mul(emb_rows, mask)

    def _gru_dir(self, rows, direction):
        p = self.p
        return ad.gru_sequence(
            rows,
            p["text.%s.wx" % direction], p["text.%s.b" % direction],
            p["text.%s.uzr" % direction], p["text.%s.uc" % direction])

    def bigru_rows(self, emb_rows):
        """N x 2M hidden matrix: forward states beside backward states."""
        h_fw = self._gru_dir(emb_rows, "fw")
        h_bw = ad.reverse_rows(self._gru_dir(ad.reverse_rows(emb_rows), "bw"))
        return ad.concat([h_fw, h_bw], axis=1)

    def bigru_forward(self, emb_rows) -> Tensor:
        """Public 2M x N layout, one column per sequence position."""
        return ad.transpose(self.bigru_rows(emb_rows))

    def context_attention_rows(self, h_rows, n_valid: int):
        p = self.p
        h_valid = ad.slice_rows(h_rows, 0, n_valid) \
            if n_valid < h_rows.shape[0] else h_rows
        hh = ad.tanh(ad.add(ad.matmul(h_valid, p["text.att.w"]),
                            p["text.att.b"]))
        alpha = ad.softmax(ad.matmul(hh, p["text.att.ctx"]))
        t = ad.matmul(alpha, h_valid)
        alpha_full = np.zeros(h_rows.shape[0])
        alpha_full[:n_valid] = alpha.data
        return t, alpha_full

    def context_attention(self, h_cols: Tensor, n_valid=None):
        """Attention readout of a 2M x N hidden matrix -> (t, alpha)."""
        rows = ad.transpose(h_cols)
        if n_valid is None:
            n_valid = rows.shape[0]
        return self.context_attention_rows(rows, n_valid)

    # -- end to end --------------------------------------------------------

    def encode(self, pair: TextPair, with_alpha=False):
        emb, n_valid = self.embed(pair.protagonist, self.cfg.text_len)
        mask = self.supporting_mask(pair.supporting)
        masked = self.apply_supporting(emb, mask)
        h_rows = self.bigru_rows(masked)
        t, alpha = self.context_attention_rows(h_rows, n_valid)
        if with_alpha:
            return t, alpha
        return t
