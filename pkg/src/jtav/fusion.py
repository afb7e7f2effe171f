"""Cross-modal fusion with attentive pooling.

For each modality pair the outer product of the two feature vectors
forms a cross-modal aware matrix. Each side projects that matrix
through a tanh layer, scores its columns against a learned context
vector, softmax-pools the columns, and reconstructs an enhanced
modality vector through a relu dense layer. The three pair outputs
concatenate (tv, ta, av) into the 384-dim unified representation.
"""

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError
from .params import ParamSet, context_vector, glorot_uniform

PAIRS = ("tv", "ta", "av")


def cross_modal_matrix(m: Tensor, n: Tensor) -> Tensor:
    """Outer product m n^T of two feature vectors."""
    if m.data.ndim != 1 or n.data.ndim != 1:
        raise DimensionError(
            "cross_modal_matrix expects vectors, got %s and %s"
            % (m.shape, n.shape))
    if m.size == 0 or n.size == 0:
        raise DimensionError("cross_modal_matrix on an empty vector")
    col = ad.reshape(m, (m.shape[0], 1))
    row = ad.reshape(n, (1, n.shape[0]))
    return ad.matmul(col, row)


class CrossModalFusion:
    def __init__(self, pset: ParamSet, rng, cfg):
        self.cfg = cfg
        self.p = pset
        d = cfg.modal_dim
        k = cfg.fusion_k
        dp = cfg.fusion_dim
        for pair in PAIRS:
            for side in pair:
                base = "fusion.%s.%s" % (pair, side)
                # projection applied as C^T @ w, so w holds W transposed
                pset.add(base + ".w", glorot_uniform(rng, (d, k), d, k))
                pset.add(base + ".b", np.zeros(k))
                pset.add(base + ".ctx", context_vector(rng, k))
                pset.add(base + ".what", glorot_uniform(rng, (dp, d), d, dp))
                pset.add(base + ".bhat", np.zeros(dp))

    def attentive_pool_side(self, c: Tensor, pair: str, side: str):
        """One side's pooling of a d x e aware matrix -> (d'-vector, alpha)."""
        p = self.p
        base = "fusion.%s.%s" % (pair, side)
        ct = ad.transpose(c)
        hh = ad.tanh(ad.add(ad.matmul(ct, p[base + ".w"]), p[base + ".b"]))
        alpha = ad.softmax(ad.matmul(hh, p[base + ".ctx"]))
        pooled = ad.matmul(c, alpha)
        recon = ad.relu(ad.add(ad.matmul(p[base + ".what"], pooled),
                               p[base + ".bhat"]))
        return recon, alpha

    def fuse_pair(self, m: Tensor, n: Tensor, pair: str):
        """Both-side pooling of one pair -> (2d' vector, m-alpha, n-alpha)."""
        if pair not in PAIRS:
            raise DimensionError("unknown modality pair %r" % pair)
        c = cross_modal_matrix(m, n)
        m_hat, alpha_m = self.attentive_pool_side(c, pair, pair[0])
        n_hat, alpha_n = self.attentive_pool_side(ad.transpose(c), pair, pair[1])
        return ad.concat([m_hat, n_hat]), m_hat, n_hat, alpha_m, alpha_n


class FusionOutput:
    """Unified vector u plus per-pair constituents and attentions."""

    def __init__(self, u, constituents, attentions):
        self.u = u
        self.constituents = constituents
        self.attentions = attentions


def fuse_all(t: Tensor, a: Tensor, v: Tensor,
             fusion: CrossModalFusion) -> FusionOutput:
    d = fusion.cfg.modal_dim
    for name, vec in (("t", t), ("a", a), ("v", v)):
        if vec.shape != (d,):
            raise DimensionError(
                "modality %s has shape %s, expected (%d,)"
                % (name, vec.shape, d))
    inputs = {"tv": (t, v), "ta": (t, a), "av": (a, v)}
    blocks = []
    constituents = {}
    attentions = {}
    for pair in PAIRS:
        m, n = inputs[pair]
        u_pair, m_hat, n_hat, alpha_m, alpha_n = fusion.fuse_pair(m, n, pair)
        blocks.append(u_pair)
        constituents[pair[0] + "_hat_" + pair[1]] = m_hat
        constituents[pair[1] + "_hat_" + pair[0]] = n_hat
        attentions[pair + "." + pair[0]] = np.array(alpha_m.data)
        attentions[pair + "." + pair[1]] = np.array(alpha_n.data)
    return FusionOutput(ad.concat(blocks), constituents, attentions)
