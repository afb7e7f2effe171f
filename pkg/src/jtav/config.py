"""Model and training configuration with the published defaults.

Values chosen here (rather than derived) are: 100-word lyric cap with
5-word captions, 300-dim embeddings, BiGRU hidden 50, two dense CNN
sub-blocks with 32-channel 3x3 convs, recurrent hidden 32, dense stack
128 -> 100, fusion attention size 50 with 64-dim reconstructions, and
Adam at 1e-3.
"""

from dataclasses import dataclass, asdict


@dataclass
class Config:
    # text
    text_len: int = 100
    cap_len: int = 5
    emb_dim: int = 300
    gru_hidden: int = 50
    # audio
    spec_kind: str = "mels"  # mels | cqt
    spec_bins: int = 96
    cnn_channels: int = 32
    n_sub_blocks: int = 2
    rnn_hidden: int = 32
    fcd_hidden: int = 128
    # image
    image_mode: str = "pixels"  # pixels | features
    image_channels: tuple = (16, 32, 64)
    image_pools: tuple = (4, 4, 2)
    feature_dim: int = 100
    # fusion
    fusion_k: int = 50
    fusion_dim: int = 64
    # shared
    modal_dim: int = 100
    # training
    lr: float = 1e-3
    lr_decay: float = 1.0  # per-epoch multiplier
    batch: int = 64
    epochs: int = 30
    patience: int = 3
    seed: int = 0

    def to_scalars(self):
        """Numeric dict for checkpoint meta records."""
        d = asdict(self)
        d["spec_kind"] = 0.0 if self.spec_kind == "mels" else 1.0
        d["image_mode"] = 0.0 if self.image_mode == "pixels" else 1.0
        out = {}
        for key, val in d.items():
            if isinstance(val, tuple):
                for i, v in enumerate(val):
                    out["%s_%d" % (key, i)] = float(v)
            else:
                out[key] = float(val)
        return out

    @classmethod
    def from_scalars(cls, scalars):
        cfg = cls()
        ints = {"text_len", "cap_len", "emb_dim", "gru_hidden", "spec_bins",
                "cnn_channels", "n_sub_blocks", "rnn_hidden", "fcd_hidden",
                "feature_dim", "fusion_k", "fusion_dim", "modal_dim",
                "batch", "epochs", "patience", "seed"}
        tuples = {}
        for key, val in scalars.items():
            if key == "spec_kind":
                cfg.spec_kind = "mels" if val == 0.0 else "cqt"
            elif key == "image_mode":
                cfg.image_mode = "pixels" if val == 0.0 else "features"
            elif "_" in key and key.rsplit("_", 1)[1].isdigit():
                base, idx = key.rsplit("_", 1)
                tuples.setdefault(base, {})[int(idx)] = int(val)
            elif key in ints:
                setattr(cfg, key, int(val))
            elif hasattr(cfg, key):
                setattr(cfg, key, float(val))
        # tuples are rebuilt whole so a saved length different from the
        # default's does not leave stale trailing entries
        for base, by_idx in tuples.items():
            if hasattr(cfg, base):
                setattr(cfg, base,
                        tuple(by_idx[i] for i in sorted(by_idx)))
        return cfg
