"""Bundled finite-difference verification across ops and encoders.

Runs every differentiable op, each composed encoder, and the full model
at deliberately tiny dimensions, comparing reverse-mode gradients
against central differences. Shared by the command line entry point and
the acceptance tests.
"""

import numpy as np

from . import autodiff as ad
from .audioenc import AudioEncoder
from .config import Config
from .fusion import CrossModalFusion, cross_modal_matrix, fuse_all
from .gradcheck import check_gradients
from .imageenc import ImageEncoder, ImageInput
from .models import JtavModel, ModelInput
from .params import ParamSet
from .textenc import TextEncoder, TextPair, Vocabulary

TOY_TOKENS = ("amber", "briar", "cinder", "dove", "ember")
TOY_FRAMES = 24


def toy_config() -> Config:
    """Every stage a few units wide; text output 2*gru_hidden = modal_dim."""
    return Config(text_len=6, cap_len=3, emb_dim=5, gru_hidden=3,
                  spec_bins=8, cnn_channels=3, n_sub_blocks=1, rnn_hidden=3,
                  fcd_hidden=6, image_mode="features", feature_dim=6,
                  fusion_k=4, fusion_dim=5, modal_dim=6)


def _t(rng, *shape):
    return ad.Tensor(rng.standard_normal(shape), requires_grad=True)


def _proj(rng, dim):
    # fixed projection to a scalar; not under test itself
    return ad.Tensor(rng.standard_normal(dim))


def _op_cases(rng):
    cases = []

    a, b = _t(rng, 3, 4), _t(rng, 4, 2)
    cases.append(("matmul_mat_mat", lambda: ad.sum_all(ad.matmul(a, b)),
                  [a, b]))
    v4, v3 = _t(rng, 4), _t(rng, 3)
    cases.append(("matmul_mat_vec", lambda: ad.sum_all(ad.matmul(a, v4)),
                  [a, v4]))
    cases.append(("matmul_vec_mat", lambda: ad.sum_all(ad.matmul(v3, a)),
                  [v3, a]))
    w4 = _t(rng, 4)
    cases.append(("matmul_vec_vec", lambda: ad.matmul(v4, w4), [v4, w4]))

    for kind in ("tanh", "sigmoid", "exp"):
        x = _t(rng, 3, 4)
        cases.append(("unary_" + kind,
                      (lambda k, xx: lambda: ad.sum_all(
                          ad.apply_unary(k, xx)))(kind, x), [x]))
    xr = ad.Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    xr.data += np.sign(xr.data) * 0.2  # keep clear of the relu kink
    cases.append(("unary_relu", lambda: ad.sum_all(ad.relu(xr)), [xr]))
    xl = ad.Tensor(rng.uniform(0.5, 2.0, (3, 4)), requires_grad=True)
    cases.append(("unary_log",
                  lambda: ad.sum_all(ad.apply_unary("log", xl)), [xl]))

    for kind in ("add", "sub", "mul_elementwise"):
        x, y = _t(rng, 3, 4), _t(rng, 3, 4)
        cases.append(("binary_%s_same" % kind,
                      (lambda k, xx, yy: lambda: ad.sum_all(
                          ad.apply_binary(k, xx, yy)))(kind, x, y), [x, y]))
        x2, row = _t(rng, 3, 4), _t(rng, 4)
        cases.append(("binary_%s_rows" % kind,
                      (lambda k, xx, yy: lambda: ad.sum_all(
                          ad.apply_binary(k, xx, yy)))(kind, x2, row),
                      [x2, row]))

    xs, ps = _t(rng, 6), _proj(rng, 6)
    cases.append(("softmax", lambda: ad.matmul(ps, ad.softmax(xs)), [xs]))

    c1, c2 = _t(rng, 2, 3), _t(rng, 4, 3)
    cases.append(("concat_rows",
                  lambda: ad.sum_all(ad.concat([c1, c2], axis=0)), [c1, c2]))
    c3, c4 = _t(rng, 3, 2), _t(rng, 3, 4)
    cases.append(("concat_cols",
                  lambda: ad.sum_all(ad.concat([c3, c4], axis=1)), [c3, c4]))
    cv1, cv2 = _t(rng, 3), _t(rng, 4)
    cases.append(("concat_vec",
                  lambda: ad.sum_all(ad.concat([cv1, cv2])), [cv1, cv2]))

    xm = _t(rng, 4, 6)
    sq = _t(rng, 4, 4)
    cases.append(("shape_chain", lambda: ad.sum_all(ad.matmul(
        sq, ad.reverse_rows(ad.slice_rows(ad.transpose(xm), 1, 5)))),
        [xm, sq]))
    xmp = _t(rng, 5, 3)
    pmp = _proj(rng, 3)
    cases.append(("mean_pool", lambda: ad.matmul(pmp, ad.mean_pool(xmp)),
                  [xmp]))
    xsc = _t(rng, 3, 3)
    cases.append(("scale", lambda: ad.sum_all(ad.scale(xsc, 1.7)), [xsc]))
    xrs = _t(rng, 2, 6)
    cases.append(("reshape", lambda: ad.sum_all(
        ad.mul(ad.reshape(xrs, (3, 4)), ad.reshape(xrs, (3, 4)))), [xrs]))
    xtr = _t(rng, 2, 3, 4)
    cases.append(("transpose_axes", lambda: ad.sum_all(
        ad.reshape(ad.transpose_axes(xtr, (2, 0, 1)), (4, 6))), [xtr]))

    cx, ck, cb = _t(rng, 2, 5, 6), _t(rng, 3, 2, 3, 3), _t(rng, 3)
    cases.append(("conv2d", lambda: ad.sum_all(ad.conv2d(cx, ck, cb)),
                  [cx, ck, cb]))
    cases.append(("conv_maxpool", lambda: ad.sum_all(
        ad.max_pool2d(ad.conv2d(cx, ck, cb), (2, 2))), [cx, ck, cb]))

    bnx = _t(rng, 3, 4, 5)
    gamma = ad.Tensor(rng.uniform(0.5, 1.5, 3), requires_grad=True)
    beta = _t(rng, 3)
    st_train = ad.BatchNormState(3)
    cases.append(("batch_norm_train", lambda: ad.sum_all(
        ad.batch_norm(bnx, gamma, beta, st_train, "train")),
        [bnx, gamma, beta]))
    st_eval = ad.BatchNormState(3)
    st_eval.running_mean = rng.standard_normal(3)
    st_eval.running_var = rng.uniform(0.5, 2.0, 3)
    st_eval.initialized = True
    cases.append(("batch_norm_eval", lambda: ad.sum_all(
        ad.batch_norm(bnx, gamma, beta, st_eval, "eval")),
        [bnx, gamma, beta]))

    m = 3
    gx = _t(rng, 4, 2)
    gwx = _t(rng, 3 * m, 2)
    gb = _t(rng, 3 * m)
    guzr = _t(rng, 2 * m, m)
    guc = _t(rng, m, m)
    pg = _proj(rng, m)
    cases.append(("gru_sequence", lambda: ad.matmul(pg, ad.mean_pool(
        ad.gru_sequence(gx, gwx, gb, guzr, guc))),
        [gx, gwx, gb, guzr, guc]))

    table = _t(rng, 5, 3)
    ids = np.array([1, 3, 2, 4, 1])
    cases.append(("embedding_lookup", lambda: ad.sum_all(
        ad.embedding_lookup(table, ids)), [table]))

    om, on = _t(rng, 3), _t(rng, 4)
    cases.append(("cross_modal_matrix", lambda: ad.sum_all(
        cross_modal_matrix(om, on)), [om, on]))

    ly = np.array([1.0, 0.0, 1.0])
    lz = _t(rng, 4, 3)
    lw = _proj(rng, 4)
    onehots = [ad.Tensor(np.eye(3)[i]) for i in range(3)]
    cases.append(("stack_bce", lambda: ad.bce_loss(ly, ad.stack_scalars(
        [ad.sigmoid(ad.matmul(lw, ad.matmul(lz, oh))) for oh in onehots])),
        [lz]))
    return cases


def _toy_pair(k=0):
    toks = list(TOY_TOKENS)
    cfg = toy_config()
    protagonist = [(toks * 3)[i + k] for i in range(cfg.text_len)]
    supporting = [(toks * 2)[i + 1 + k] for i in range(cfg.cap_len)]
    return TextPair(protagonist, supporting)


def _encoder_cases(seed):
    cfg = toy_config()
    vocab = Vocabulary(list(TOY_TOKENS))
    cases = []

    rng = np.random.default_rng(seed)
    pset = ParamSet()
    text = TextEncoder(pset, rng, cfg, vocab)
    pair = _toy_pair()
    pt = _proj(rng, cfg.modal_dim)
    cases.append(("enc_text", lambda: ad.matmul(pt, text.encode(pair)),
                  pset.tensors()))

    rng = np.random.default_rng(seed + 17)
    pset_a = ParamSet()
    audio = AudioEncoder(pset_a, rng, cfg)
    spec = rng.uniform(-40.0, 0.0, (cfg.spec_bins, TOY_FRAMES))
    pa = _proj(rng, cfg.modal_dim)
    cases.append(("enc_audio",
                  lambda: ad.matmul(pa, audio.encode(spec, "train")),
                  pset_a.tensors()))

    rng = np.random.default_rng(seed + 29)
    cfg_px = toy_config()
    cfg_px.image_mode = "pixels"
    cfg_px.image_channels = (2, 3, 4)
    cfg_px.image_pools = (2, 2, 2)
    pset_v = ParamSet()
    image = ImageEncoder(pset_v, rng, cfg_px)
    pixels = ad.Tensor(rng.uniform(0.0, 1.0, (3, 8, 8)))
    pv = _proj(rng, cfg.modal_dim)

    def image_forward():
        feat = image._cnn(pixels, "train")
        out = ad.add(ad.matmul(pset_v["image.out.w"], feat),
                     pset_v["image.out.b"])
        return ad.matmul(pv, out)

    cases.append(("enc_image_cnn", image_forward, pset_v.tensors()))

    rng = np.random.default_rng(seed + 43)
    pset_f = ParamSet()
    fusion = CrossModalFusion(pset_f, rng, cfg)
    ft = _t(rng, cfg.modal_dim)
    fa = _t(rng, cfg.modal_dim)
    fv = _t(rng, cfg.modal_dim)
    pf = _proj(rng, 6 * cfg.fusion_dim)
    cases.append(("enc_fusion",
                  lambda: ad.matmul(pf, fuse_all(ft, fa, fv, fusion).u),
                  pset_f.tensors() + [ft, fa, fv]))
    return cases


def _model_case(seed):
    cfg = toy_config()
    vocab = Vocabulary(list(TOY_TOKENS))
    model = JtavModel(cfg, vocab, seed=seed)
    rng = np.random.default_rng(seed + 71)
    items = []
    for k, label in ((0, 1.0), (1, 0.0)):
        items.append((ModelInput(
            id="toy%d" % k, text=_toy_pair(k),
            spec=rng.uniform(-40.0, 0.0, (cfg.spec_bins, TOY_FRAMES)),
            image=ImageInput(features=rng.standard_normal(cfg.feature_dim))),
            label))
    targets = np.array([label for _, label in items])

    def forward():
        probs = [model.forward(inp, "train") for inp, _ in items]
        return ad.bce_loss(targets, ad.stack_scalars(probs))

    return "full_model_batch2", forward, model.pset.tensors()


def run_suite(seeds=(0, 1, 2, 3, 4), h=1e-5, include_model=True):
    """Returns (max error, {case name: worst error over seeds})."""
    worst = {}
    for seed in seeds:
        rng = np.random.default_rng(1000 + seed)
        cases = _op_cases(rng)
        cases.extend(_encoder_cases(seed))
        if include_model:
            cases.append(_model_case(seed))
        for name, f, tensors in cases:
            err, _ = check_gradients(f, tensors, h=h)
            worst[name] = max(worst.get(name, 0.0), float(err))
    return max(worst.values()), worst
