"""Image encoder: either a small trainable CNN over 224x224 RGB pixels
or a trainable dense projection of precomputed feature vectors. Both
pathways produce a 100-dim visual feature.

Image files are binary PPM (P6); anything else should be converted
first. Precomputed features load from a flat f32 container with an id
sidecar.
"""

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNormState, Tensor
from .errors import DimensionError, FormatError, IoError
from .params import ParamSet, glorot_uniform

IMAGE_SIZE = 224


@dataclass
class ImageInput:
    pixels: Optional[np.ndarray] = None  # 3 x 224 x 224 in [0, 1]
    features: Optional[np.ndarray] = None

    def __post_init__(self):
        if (self.pixels is None) == (self.features is None):
            raise DimensionError(
                "image input needs exactly one of pixels or features")
        if self.pixels is not None:
            self.pixels = np.asarray(self.pixels, dtype=np.float64)
            if self.pixels.shape != (3, IMAGE_SIZE, IMAGE_SIZE):
                raise DimensionError(
                    "pixel input must be (3, %d, %d), got %s"
                    % (IMAGE_SIZE, IMAGE_SIZE, self.pixels.shape))
        else:
            self.features = np.asarray(self.features, dtype=np.float64)
            if self.features.ndim != 1:
                raise DimensionError("feature input must be a vector")


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bilinear resize of a (c, h, w) array.

    Destination index d samples source position d * (src/dst), clamped;
    an exact integer mapping (identity, or integer downscale of a
    constant image) therefore reproduces source values exactly.
    """
    c, h, w = img.shape

    def axis_positions(src_n, dst_n):
        pos = np.arange(dst_n) * (src_n / dst_n)
        i0 = np.minimum(np.floor(pos).astype(np.int64), src_n - 1)
        i1 = np.minimum(i0 + 1, src_n - 1)
        frac = pos - i0
        return i0, i1, frac

    r0, r1, rf = axis_positions(h, out_h)
    rows = img[:, r0, :] * (1.0 - rf)[None, :, None] \
        + img[:, r1, :] * rf[None, :, None]
    c0, c1, cf = axis_positions(w, out_w)
    return rows[:, :, c0] * (1.0 - cf)[None, None, :] \
        + rows[:, :, c1] * cf[None, None, :]


def load_ppm(path) -> np.ndarray:
    """Binary PPM (P6, maxval 255) -> (3, h, w) float in [0, 1]."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError("cannot read %s: %s" % (path, exc))
    if not blob.startswith(b"P6"):
        raise FormatError("not a P6 PPM: %s" % path, field="magic")

    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PPM header in %s" % path,
                              field="header")
        fields.append(blob[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError:
        raise FormatError("non-numeric PPM header in %s" % path, field="header")
    if maxval != 255:
        raise FormatError("PPM maxval %d unsupported" % maxval, field="maxval")
    need = width * height * 3
    raw = blob[pos:pos + need]
    if len(raw) < need:
        raise FormatError("truncated PPM pixel data in %s" % path,
                          field="pixels")
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)
    return arr.transpose(2, 0, 1).astype(np.float64) / 255.0


def load_image(path) -> ImageInput:
    img = load_ppm(path)
    if img.shape[1:] != (IMAGE_SIZE, IMAGE_SIZE):
        img = bilinear_resize(img, IMAGE_SIZE, IMAGE_SIZE)
    return ImageInput(pixels=img)


def save_ppm(path, img: np.ndarray):
    """(3, h, w) floats in [0, 1] -> binary PPM."""
    arr = np.clip(np.asarray(img) * 255.0, 0, 255).round().astype(np.uint8)
    body = arr.transpose(1, 2, 0).tobytes()
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (arr.shape[2], arr.shape[1]))
        fh.write(body)


# ---------------------------------------------------------------------------
# precomputed feature container

_VEC_MAGIC = b"JVEC"
_VEC_VERSION = 1


def save_features(path, ids, matrix):
    mat = np.ascontiguousarray(matrix, dtype="<f4")
    if mat.ndim != 2 or mat.shape[0] != len(ids):
        raise DimensionError(
            "feature matrix %s does not match %d ids" % (mat.shape, len(ids)))
    with open(path, "wb") as fh:
        fh.write(_VEC_MAGIC)
        fh.write(struct.pack("<I", _VEC_VERSION))
        fh.write(struct.pack("<Q", mat.shape[0]))
        fh.write(struct.pack("<I", mat.shape[1]))
        fh.write(mat.tobytes())
    with open(str(path) + ".ids", "w", encoding="utf-8") as fh:
        for one in ids:
            fh.write("%s\n" % one)


def load_features(path):
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
        with open(str(path) + ".ids", "r", encoding="utf-8") as fh:
            ids = [line.rstrip("\n") for line in fh if line.strip()]
    except OSError as exc:
        raise IoError("cannot read features %s: %s" % (path, exc))
    if blob[:4] != _VEC_MAGIC:
        raise FormatError("bad feature magic in %s" % path, field="magic")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != _VEC_VERSION:
        raise FormatError("unsupported feature version %d" % version,
                          field="version")
    (count,) = struct.unpack_from("<Q", blob, 8)
    (dim,) = struct.unpack_from("<I", blob, 16)
    if len(ids) != count:
        raise FormatError(
            "id list has %d entries, container holds %d" % (len(ids), count),
            field="ids")
    mat = np.frombuffer(blob, dtype="<f4", count=count * dim, offset=20)
    return ids, mat.reshape(count, dim).astype(np.float64)


# ---------------------------------------------------------------------------
# encoder


class ImageEncoder:
    def __init__(self, pset: ParamSet, rng, cfg):
        self.cfg = cfg
        self.p = pset
        self.bn_states = {}
        if cfg.image_mode == "pixels":
            chans = (3,) + tuple(cfg.image_channels)
            for s in range(len(cfg.image_channels)):
                name = "image.s%d" % (s + 1)
                fan_in = chans[s] * 9
                pset.add(name + ".k", glorot_uniform(
                    rng, (chans[s + 1], chans[s], 3, 3), fan_in, chans[s + 1]))
                pset.add(name + ".b", np.zeros(chans[s + 1]))
                pset.add(name + ".bn_gamma", np.ones(chans[s + 1]))
                pset.add(name + ".bn_beta", np.zeros(chans[s + 1]))
                self.bn_states[name] = BatchNormState(chans[s + 1])
            top = cfg.image_channels[-1]
        else:
            top = cfg.feature_dim
        pset.add("image.out.w", glorot_uniform(
            rng, (cfg.modal_dim, top), top, cfg.modal_dim))
        pset.add("image.out.b", np.zeros(cfg.modal_dim))

    def encode(self, inp: ImageInput, mode: str) -> Tensor:
        if inp.pixels is not None:
            if self.cfg.image_mode != "pixels":
                raise DimensionError(
                    "model was built for precomputed features, got pixels")
            feat = self._cnn(Tensor(inp.pixels), mode)
        else:
            if self.cfg.image_mode != "features":
                raise DimensionError(
                    "model was built for pixels, got a feature vector")
            if inp.features.shape != (self.cfg.feature_dim,):
                raise DimensionError(
                    "feature dim %d, model expects %d"
                    % (inp.features.shape[0], self.cfg.feature_dim))
            feat = Tensor(inp.features)
        p = self.p
        return ad.add(ad.matmul(p["image.out.w"], feat), p["image.out.b"])

    def _cnn(self, x: Tensor, mode: str) -> Tensor:
        p = self.p
        for s in range(len(self.cfg.image_channels)):
            name = "image.s%d" % (s + 1)
            x = ad.conv2d(x, p[name + ".k"], p[name + ".b"])
            x = ad.batch_norm(x, p[name + ".bn_gamma"], p[name + ".bn_beta"],
                              self.bn_states[name], mode)
            x = ad.relu(x)
            pool = self.cfg.image_pools[s]
            x = ad.max_pool2d(x, (pool, pool))
        c = x.shape[0]
        flat = ad.reshape(x, (c, x.shape[1] * x.shape[2]))
        return ad.mean_pool(ad.transpose(flat))

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


class FrozenBackbone:
    """Seed-fixed random CNN used as a frozen feature extractor.

    Stands in for a pretrained visual backbone: the conv stack is
    initialized from the seed and never trained, and its pooled output
    becomes the precomputed feature vector for the dense pathway.
    """

    def __init__(self, seed=0):
        from .config import Config
        cfg = Config(image_mode="pixels")
        self.dim = cfg.image_channels[-1]
        self.pset = ParamSet()
        self.enc = ImageEncoder(self.pset, np.random.default_rng(seed), cfg)
        for st in self.enc.bn_states.values():
            st.initialized = True

    def transform(self, pixels) -> np.ndarray:
        return self.enc._cnn(Tensor(np.asarray(pixels, dtype=np.float64)),
                             "eval").data
