"""Flat binary checkpoint files.

Layout: magic ``JTAV``, version u32, then one record per array —
name length u32, UTF-8 name, rank u32, dims as u64, payload as
little-endian f64. Everything little-endian. Writes are byte-identical
for identical inputs since record order follows the given mapping
order.

Model configuration and the vocabulary ride along as ``meta.*`` records
(scalars as rank-0 arrays, the vocab JSON as a byte-per-f64 array) so a
checkpoint restores without any side files.
"""

import json
import struct

import numpy as np

from .errors import FormatError, IoError

MAGIC = b"JTAV"
VERSION = 1


def save_arrays(path, arrays):
    """arrays: ordered name -> ndarray (coerced to f64)."""
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", VERSION))
            for name, arr in arrays.items():
                a = np.asarray(arr, dtype="<f8")
                if a.ndim and not a.flags["C_CONTIGUOUS"]:
                    a = a.copy()  # keep rank-0 as rank-0
                nb = name.encode("utf-8")
                fh.write(struct.pack("<I", len(nb)))
                fh.write(nb)
                fh.write(struct.pack("<I", a.ndim))
                for d in a.shape:
                    fh.write(struct.pack("<Q", d))
                fh.write(a.tobytes())
    except OSError as exc:
        raise IoError("cannot write checkpoint %s: %s" % (path, exc))


def load_arrays(path):
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError("cannot read checkpoint %s: %s" % (path, exc))
    if blob[:4] != MAGIC:
        raise FormatError("bad checkpoint magic %r" % blob[:4], field="magic")
    if len(blob) < 8:
        raise FormatError("truncated version field", field="version")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise FormatError("unsupported checkpoint version %d" % version,
                          field="version")
    out = {}
    pos = 8
    total = len(blob)
    while pos < total:
        if pos + 4 > total:
            raise FormatError("truncated record header", field="name_length")
        (nlen,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        if pos + nlen > total:
            raise FormatError("truncated record name", field="name")
        name = blob[pos:pos + nlen].decode("utf-8")
        pos += nlen
        if pos + 4 > total:
            raise FormatError("truncated rank field", field="rank")
        (rank,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        dims = []
        for _ in range(rank):
            if pos + 8 > total:
                raise FormatError("truncated dims", field="dims")
            (d,) = struct.unpack_from("<Q", blob, pos)
            dims.append(d)
            pos += 8
        count = 1
        for d in dims:
            count *= d
        nbytes = count * 8
        if pos + nbytes > total:
            raise FormatError("truncated payload for %r" % name, field="data")
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=pos)
        pos += nbytes
        out[name] = arr.reshape(dims).astype(np.float64)
    return out


def pack_meta(config: dict, vocab_tokens=None):
    """Encode config scalars and an optional token list as records."""
    recs = {}
    for key in sorted(config):
        recs["meta.cfg." + key] = np.array(float(config[key]))
    if vocab_tokens is not None:
        raw = json.dumps(list(vocab_tokens)).encode("utf-8")
        recs["meta.vocab_utf8"] = np.frombuffer(raw, dtype=np.uint8).astype(
            np.float64)
    return recs


def unpack_meta(arrays):
    """Split loaded records into (params, config, vocab_tokens)."""
    params = {}
    config = {}
    vocab = None
    for name, arr in arrays.items():
        if name.startswith("meta.cfg."):
            config[name[len("meta.cfg."):]] = float(arr)
        elif name == "meta.vocab_utf8":
            raw = arr.astype(np.uint8).tobytes()
            try:
                vocab = json.loads(raw.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise FormatError("corrupt vocab record: %s" % exc,
                                  field="meta.vocab_utf8")
        else:
            params[name] = arr
    return params, config, vocab
