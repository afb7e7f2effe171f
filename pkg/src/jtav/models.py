"""Model assembly: encoders, fusion variant, and a logistic head.

Variants share the same encoder code. The full model fuses t, a, v
through cross-modal attentive pooling (384-dim unified vector); the
early-fusion baseline concatenates the raw features instead; single
modality models put the head straight on one 100-dim feature. The same
assembly serves sentiment classification and retrieval matching, the
latter by scoring mixed query/candidate inputs.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .audioenc import AudioEncoder
from .checkpoint import load_arrays, pack_meta, save_arrays, unpack_meta
from .config import Config
from .errors import ContractError
from .fusion import CrossModalFusion, fuse_all
from .imageenc import ImageEncoder, ImageInput
from .params import ParamSet, glorot_uniform
from .textenc import TextEncoder, TextPair, Vocabulary

FUSION_KINDS = ("cmf", "early", "single")


@dataclass
class ModelInput:
    """One scoring instance; unused modalities may stay None."""
    id: str
    text: Optional[TextPair] = None
    spec: Optional[np.ndarray] = None
    image: Optional[ImageInput] = None
    label: Optional[int] = None


class JtavModel:
    def __init__(self, cfg: Config, vocab: Vocabulary, modalities="tav",
                 fusion_kind="cmf", seed=0, pretrained_emb=None):
        modalities = "".join(m for m in "tav" if m in modalities)
        if not modalities:
            raise ContractError("model needs at least one modality")
        if len(modalities) == 1:
            fusion_kind = "single"
        if fusion_kind not in FUSION_KINDS:
            raise ContractError("unknown fusion kind %r" % fusion_kind)
        if fusion_kind == "cmf" and modalities != "tav":
            raise ContractError(
                "cross-modal fusion needs all three modalities, got %r"
                % modalities)
        self.cfg = cfg
        self.vocab = vocab
        self.modalities = modalities
        self.fusion_kind = fusion_kind
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.pset = ParamSet()
        self.text = self.audio = self.image = self.fusion = None
        if "t" in modalities:
            self.text = TextEncoder(self.pset, rng, cfg, vocab, pretrained_emb)
        if "a" in modalities:
            self.audio = AudioEncoder(self.pset, rng, cfg)
        if "v" in modalities:
            self.image = ImageEncoder(self.pset, rng, cfg)
        if fusion_kind == "cmf":
            self.fusion = CrossModalFusion(self.pset, rng, cfg)
            head_dim = 6 * cfg.fusion_dim
        elif fusion_kind == "early":
            head_dim = cfg.modal_dim * len(modalities)
        else:
            head_dim = cfg.modal_dim
        self.pset.add("head.w", glorot_uniform(rng, (head_dim,), head_dim, 1))
        self.pset.add("head.b", np.zeros(()))
        # eval on an untrained model is legitimate (chance-band checks),
        # so batch-norm sites start from the neutral (0, 1) statistics
        for enc in (self.audio, self.image):
            if enc is not None:
                for st in enc.bn_states.values():
                    st.initialized = True

    # -- forward -----------------------------------------------------------

    def features(self, inp: ModelInput, mode: str):
        feats = {}
        if "t" in self.modalities:
            if inp.text is None:
                raise ContractError("item %s lacks text" % inp.id)
            feats["t"] = self.text.encode(inp.text)
        if "a" in self.modalities:
            if inp.spec is None:
                raise ContractError("item %s lacks a spectrogram" % inp.id)
            feats["a"] = self.audio.encode(inp.spec, mode)
        if "v" in self.modalities:
            if inp.image is None:
                raise ContractError("item %s lacks an image" % inp.id)
            feats["v"] = self.image.encode(inp.image, mode)
        return feats

    def forward_from_features(self, feats, with_detail=False):
        fused = None
        if self.fusion_kind == "cmf":
            fused = fuse_all(feats["t"], feats["a"], feats["v"], self.fusion)
            rep = fused.u
        elif self.fusion_kind == "early":
            rep = ad.concat([feats[m] for m in self.modalities])
        else:
            rep = feats[self.modalities]
        logit = ad.add(ad.matmul(self.pset["head.w"], rep),
                       self.pset["head.b"])
        prob = ad.sigmoid(logit)
        if with_detail:
            return prob, fused
        return prob

    def forward(self, inp: ModelInput, mode: str, with_detail=False):
        feats = self.features(inp, mode)
        if with_detail:
            prob, fused = self.forward_from_features(feats, with_detail=True)
            return prob, feats, fused
        return self.forward_from_features(feats)

    def score(self, inp: ModelInput, mode="eval") -> float:
        return float(self.forward(inp, mode).data)

    # -- persistence -------------------------------------------------------

    def _extra_meta(self):
        mask = sum({"t": 1, "a": 2, "v": 4}[m] for m in self.modalities)
        return {
            "modalities_mask": float(mask),
            "fusion_code": float(FUSION_KINDS.index(self.fusion_kind)),
        }

    def save(self, path):
        arrays = dict(self.pset.arrays())
        for enc in (self.audio, self.image):
            if enc is not None:
                arrays.update(enc.bn_arrays())
        cfg_scalars = self.cfg.to_scalars()
        cfg_scalars.update(self._extra_meta())
        arrays.update(pack_meta(cfg_scalars, self.vocab.tokens_in_order()))
        save_arrays(path, arrays)

    @classmethod
    def load(cls, path) -> "JtavModel":
        params, cfg_scalars, tokens = unpack_meta(load_arrays(path))
        if tokens is None:
            raise ContractError("checkpoint lacks a vocabulary record")
        mask = int(cfg_scalars.pop("modalities_mask", 7))
        fusion_kind = FUSION_KINDS[int(cfg_scalars.pop("fusion_code", 0))]
        cfg = Config.from_scalars(cfg_scalars)
        modalities = "".join(
            m for m, bit in (("t", 1), ("a", 2), ("v", 4)) if mask & bit)
        model = cls(cfg, Vocabulary(tokens), modalities=modalities,
                    fusion_kind=fusion_kind, seed=cfg.seed)
        model.pset.load_arrays(params)
        for enc in (model.audio, model.image):
            if enc is not None:
                enc.load_bn_arrays(params)
        return model

    def snapshot(self):
        """Deep copy of all trainable state, for best-epoch tracking."""
        arrays = {name: arr.copy() for name, arr in self.pset.arrays().items()}
        bn = {}
        for enc in (self.audio, self.image):
            if enc is not None:
                bn.update({k: v.copy() if hasattr(v, "copy") else v
                           for k, v in enc.bn_arrays().items()})
        return arrays, bn

    def restore(self, snap):
        arrays, bn = snap
        self.pset.load_arrays(arrays)
        for enc in (self.audio, self.image):
            if enc is not None:
                enc.load_bn_arrays(bn)
