"""Audio encoder: densely connected CNN block, then a stacked
bidirectional GRU over the time axis, then dense layers down to the
100-dim acoustic feature.

Each sub-block runs four conv/batch-norm/relu/max-pool stages where the
fourth consumes the channel concatenation of the first and third stage
outputs; the first output is max-pooled down to match the third's
spatial size before concatenating. Pools are 2x2, clamped to 1 on any
axis that has already collapsed, with ceil-mode edges, so every
intermediate dimension stays >= 1 for any input width >= 4.
"""

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNormState, Tensor
from .errors import DimensionError
from .params import ParamSet, glorot_uniform


class AudioEncoder:
    def __init__(self, pset: ParamSet, rng, cfg):
        self.cfg = cfg
        self.p = pset
        self.bn_states = {}
        ch = cfg.cnn_channels
        for b in range(cfg.n_sub_blocks):
            in_ch = 1 if b == 0 else ch
            stage_in = [in_ch, ch, ch, 2 * ch]
            for s in range(4):
                self._add_stage("audio.block%d.s%d" % (b, s + 1),
                                rng, stage_in[s], ch)
        h = cfg.rnn_hidden
        rnn_in = [ch, 2 * h]
        for layer in range(2):
            d = rnn_in[layer]
            for direction in ("fw", "bw"):
                base = "audio.rnn%d.%s" % (layer, direction)
                pset.add(base + ".wx", glorot_uniform(rng, (3 * h, d), d, h))
                pset.add(base + ".b", np.zeros(3 * h))
                pset.add(base + ".uzr", glorot_uniform(rng, (2 * h, h), h, h))
                pset.add(base + ".uc", glorot_uniform(rng, (h, h), h, h))
        fcd = cfg.fcd_hidden
        out = cfg.modal_dim
        pset.add("audio.fcd1.w", glorot_uniform(rng, (fcd, 2 * h), 2 * h, fcd))
        pset.add("audio.fcd1.b", np.zeros(fcd))
        pset.add("audio.fcd2.w", glorot_uniform(rng, (out, fcd), fcd, out))
        pset.add("audio.fcd2.b", np.zeros(out))

    def _add_stage(self, name, rng, in_ch, out_ch):
        k = 3
        fan_in = in_ch * k * k
        self.p.add(name + ".k",
                   glorot_uniform(rng, (out_ch, in_ch, k, k), fan_in, out_ch))
        self.p.add(name + ".b", np.zeros(out_ch))
        self.p.add(name + ".bn_gamma", np.ones(out_ch))
        self.p.add(name + ".bn_beta", np.zeros(out_ch))
        self.bn_states[name] = BatchNormState(out_ch)

    # -- stages ------------------------------------------------------------

    @staticmethod
    def _clamped_pool(shape):
        return (2 if shape[1] > 1 else 1, 2 if shape[2] > 1 else 1)

    def cnn_bn_mp(self, x: Tensor, stage: str, mode: str):
        """conv -> batch norm -> relu -> clamped 2x2 max pool."""
        p = self.p
        y = ad.conv2d(x, p[stage + ".k"], p[stage + ".b"])
        y = ad.batch_norm(y, p[stage + ".bn_gamma"], p[stage + ".bn_beta"],
                          self.bn_states[stage], mode)
        y = ad.relu(y)
        pool = self._clamped_pool(y.shape)
        return ad.max_pool2d(y, pool), pool

    def dense_cnn_sub_block(self, a_prev: Tensor, block: int, mode: str):
        base = "audio.block%d" % block
        a_h1, _ = self.cnn_bn_mp(a_prev, base + ".s1", mode)
        a_h2, p2 = self.cnn_bn_mp(a_h1, base + ".s2", mode)
        a_h3, p3 = self.cnn_bn_mp(a_h2, base + ".s3", mode)
        skip_pool = (p2[0] * p3[0], p2[1] * p3[1])
        skip = a_h1
        if skip_pool != (1, 1):
            skip = ad.max_pool2d(a_h1, skip_pool)
        if skip.shape[1:] != a_h3.shape[1:]:  # nested-ceil pooling identity
            raise DimensionError(
                "skip path %s does not match stage-3 output %s"
                % (skip.shape, a_h3.shape))
        merged = ad.concat([skip, a_h3], axis=0)
        a_t, _ = self.cnn_bn_mp(merged, base + ".s4", mode)
        return a_t

    @staticmethod
    def permute_time_major(a: Tensor) -> Tensor:
        """c x h x w -> w x (c*h): one flattened feature row per frame."""
        c, h, w = a.shape
        return ad.reshape(ad.transpose_axes(a, (2, 0, 1)), (w, c * h))

    def _gru_layer(self, rows, layer: int):
        p = self.p
        outs = []
        for direction in ("fw", "bw"):
            base = "audio.rnn%d.%s" % (layer, direction)
            seq = rows if direction == "fw" else ad.reverse_rows(rows)
            h = ad.gru_sequence(seq, p[base + ".wx"], p[base + ".b"],
                                p[base + ".uzr"], p[base + ".uc"])
            outs.append(h if direction == "fw" else ad.reverse_rows(h))
        return outs

    def birnn_block(self, seq: Tensor) -> Tensor:
        """Two stacked BiGRU layers; [last forward ; first backward]."""
        t_len = seq.shape[0]
        h_fw, h_bw = self._gru_layer(seq, 0)
        rows = ad.concat([h_fw, h_bw], axis=1)
        h_fw, h_bw = self._gru_layer(rows, 1)
        last_fw = ad.reshape(ad.slice_rows(h_fw, t_len - 1, t_len),
                             (self.cfg.rnn_hidden,))
        first_bw = ad.reshape(ad.slice_rows(h_bw, 0, 1),
                              (self.cfg.rnn_hidden,))
        return ad.concat([last_fw, first_bw])

    # -- end to end --------------------------------------------------------

    def encode(self, spec_values: np.ndarray, mode: str) -> Tensor:
        """96 x T spectrogram (dB) -> 100-dim acoustic feature."""
        vals = np.asarray(spec_values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[0] != self.cfg.spec_bins:
            raise DimensionError(
                "expected %d x T spectrogram, got %s"
                % (self.cfg.spec_bins, vals.shape))
        if vals.shape[1] < 4:
            raise DimensionError(
                "input stage needs at least 4 frames for the pooling "
                "cascade, got %d" % vals.shape[1])
        x = Tensor(vals[None, :, :])
        for b in range(self.cfg.n_sub_blocks):
            x = self.dense_cnn_sub_block(x, b, mode)
        seq = self.permute_time_major(x)
        feat = self.birnn_block(seq)
        p = self.p
        hidden = ad.relu(ad.add(ad.matmul(p["audio.fcd1.w"], feat),
                                p["audio.fcd1.b"]))
        return ad.add(ad.matmul(p["audio.fcd2.w"], hidden), p["audio.fcd2.b"])

    # -- running statistics ------------------------------------------------

    def bn_arrays(self):
        out = {}
        for name, st in self.bn_states.items():
            out[name + ".bn_mean"] = st.running_mean
            out[name + ".bn_var"] = st.running_var
            out[name + ".bn_init"] = np.array(1.0 if st.initialized else 0.0)
        return out

    def load_bn_arrays(self, arrays):
        for name, st in self.bn_states.items():
            st.running_mean = arrays[name + ".bn_mean"].copy()
            st.running_var = arrays[name + ".bn_var"].copy()
            st.initialized = bool(float(arrays[name + ".bn_init"]))
