"""Audio DSP: PCM loading, STFT, mel spectrograms and a constant-Q
transform, all at 22050 Hz with 96 frequency bins.

dB conversion uses an absolute power reference of 1.0 with a -80 dB
floor, so doubling the input amplitude lifts every unfloored cell by
exactly 20*log10(2) dB.
"""

import struct
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import kernels
from .errors import EmptyInputError, FormatError, IoError

SAMPLE_RATE = 22050
N_BINS = 96
N_FFT = 2048
HOP = 1024
DB_FLOOR = -80.0
CQT_FMIN = 32.703  # note C1
BINS_PER_OCTAVE = 12

MELS_KIND = 0
CQT_KIND = 1
_KIND_NAMES = {MELS_KIND: "MelS", CQT_KIND: "CQT"}


@dataclass
class PcmClip:
    samples: np.ndarray  # float64 in [-1, 1]
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise FormatError("sample rate must be positive", field="sample_rate")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise FormatError("non-finite samples", field="samples")


@dataclass
class Spectrogram:
    kind: int  # MELS_KIND or CQT_KIND
    values: np.ndarray  # bins x frames, dB

    @property
    def bins(self):
        return self.values.shape[0]

    @property
    def frames(self):
        return self.values.shape[1]

    @property
    def kind_name(self):
        return _KIND_NAMES[self.kind]


def segment_audio(clip: PcmClip, seconds: int = 10):
    """Split into consecutive fixed-length segments, zero-padding the tail."""
    if clip.samples.size == 0:
        raise EmptyInputError("cannot segment an empty clip")
    n = seconds * clip.sample_rate
    total = clip.samples.size
    count = -(-total // n)
    out = []
    for i in range(count):
        seg = clip.samples[i * n:(i + 1) * n]
        if seg.size < n:
            seg = np.concatenate([seg, np.zeros(n - seg.size)])
        out.append(PcmClip(seg.copy(), clip.sample_rate))
    return out


def _hann(n):
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft(clip: PcmClip, n_fft: int = N_FFT, hop: int = HOP):
    """Center-padded Hann STFT; returns (n_fft//2+1) x T complex matrix."""
    x = clip.samples
    if x.size == 0:
        raise EmptyInputError("stft of an empty clip")
    pad = n_fft // 2
    mode = "reflect" if x.size > 1 else "constant"
    xp = np.pad(x, pad, mode=mode)
    frames = sliding_window_view(xp, n_fft)[::hop]
    n_frames = 1 + x.size // hop
    frames = frames[:n_frames]
    spec = np.fft.rfft(frames * _hann(n_fft), axis=1)
    return spec.T


def _power_to_db(power):
    db = 10.0 * np.log10(np.maximum(power, 1e-300))
    return np.maximum(db, DB_FLOOR)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int = N_BINS, n_fft: int = N_FFT,
                   sample_rate: int = SAMPLE_RATE):
    """Triangular peak-1 filters on the HTK mel scale, 0 to Nyquist."""
    nyquist = sample_rate / 2.0
    pts = mel_to_hz(np.linspace(hz_to_mel(0.0), hz_to_mel(nyquist), n_mels + 2))
    fft_freqs = np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)
    fb = np.zeros((n_mels, fft_freqs.size))
    for m in range(n_mels):
        lo, mid, hi = pts[m], pts[m + 1], pts[m + 2]
        up = (fft_freqs - lo) / (mid - lo)
        down = (hi - fft_freqs) / (hi - mid)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def mel_spectrogram(clip: PcmClip) -> Spectrogram:
    spec = stft(clip)
    power = spec.real ** 2 + spec.imag ** 2
    mel_power = mel_filterbank() @ power
    return Spectrogram(MELS_KIND, _power_to_db(mel_power))


def cqt_center_frequencies(n_bins: int = N_BINS):
    return CQT_FMIN * 2.0 ** (np.arange(n_bins) / BINS_PER_OCTAVE)


_CQT_CACHE = {}


def _cqt_kernels(max_len: int, sample_rate: int):
    """Complex windowed-DFT kernel bank, one row per bin, center-aligned."""
    key = (max_len, sample_rate)
    if key in _CQT_CACHE:
        return _CQT_CACHE[key]
    q = 1.0 / (2.0 ** (1.0 / BINS_PER_OCTAVE) - 1.0)
    freqs = cqt_center_frequencies()
    lengths = np.minimum(
        np.ceil(q * sample_rate / freqs).astype(np.int64), max_len)
    half = int(lengths.max()) // 2 + 1
    width = 2 * half
    kre = np.zeros((N_BINS, width))
    kim = np.zeros((N_BINS, width))
    offsets = np.zeros(N_BINS, dtype=np.int64)
    for b in range(N_BINS):
        ln = int(lengths[b])
        win = _hann(ln)
        win /= win.sum()
        t = np.arange(ln) - ln // 2
        phase = -2.0 * np.pi * freqs[b] * t / sample_rate
        off = half - ln // 2
        kre[b, off:off + ln] = win * np.cos(phase)
        kim[b, off:off + ln] = win * np.sin(phase)
        offsets[b] = off
    result = (kre, kim, offsets, lengths.copy(), half)
    _CQT_CACHE[key] = result
    return result


def cqt(clip: PcmClip) -> Spectrogram:
    """96-bin constant-Q spectrum, 12 bins/octave up from C1, hop 1024."""
    x = clip.samples
    if x.size == 0:
        raise EmptyInputError("cqt of an empty clip")
    kre, kim, offsets, lengths, half = _cqt_kernels(x.size, clip.sample_rate)
    padded = np.zeros(x.size + 2 * half)
    padded[half:half + x.size] = x
    n_frames = 1 + x.size // HOP
    power = kernels.cqt_power(
        padded, kre, kim, offsets, lengths, HOP, half, n_frames)
    return Spectrogram(CQT_KIND, _power_to_db(power))


def compute_spectrogram(clip: PcmClip, kind: str) -> Spectrogram:
    if kind == "mels":
        return mel_spectrogram(clip)
    if kind == "cqt":
        return cqt(clip)
    raise FormatError("unknown spectrogram kind %r" % kind, field="kind")


# ---------------------------------------------------------------------------
# WAV input

def load_pcm(path) -> PcmClip:
    """Read a RIFF/WAVE PCM-16 file; stereo is averaged, output 22050 Hz."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError("cannot read %s: %s" % (path, exc))
    if len(blob) < 12 or blob[:4] != b"RIFF":
        raise FormatError("missing RIFF header in %s" % path, field="riff")
    if blob[8:12] != b"WAVE":
        raise FormatError("not a WAVE file: %s" % path, field="wave")
    pos = 12
    fmt = None
    data = None
    while pos + 8 <= len(blob):
        cid = blob[pos:pos + 4]
        (csize,) = struct.unpack_from("<I", blob, pos + 4)
        body = blob[pos + 8:pos + 8 + csize]
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            data = body
        pos += 8 + csize + (csize & 1)
    if fmt is None or len(fmt) < 16:
        raise FormatError("missing fmt chunk in %s" % path, field="fmt")
    audio_format, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if audio_format != 1:
        raise FormatError(
            "unsupported codec %d (PCM required)" % audio_format,
            field="audio_format")
    if channels not in (1, 2):
        raise FormatError("unsupported channel count %d" % channels,
                          field="channels")
    if bits != 16:
        raise FormatError("unsupported bit depth %d" % bits,
                          field="bits_per_sample")
    if data is None:
        raise FormatError("missing data chunk in %s" % path, field="data")
    raw = np.frombuffer(data[:len(data) - len(data) % (2 * channels)],
                        dtype="<i2").astype(np.float64) / 32768.0
    if channels == 2:
        raw = raw.reshape(-1, 2).mean(axis=1)
    if rate != SAMPLE_RATE:
        n_out = int(round(raw.size * SAMPLE_RATE / rate))
        pos_in = np.arange(n_out) * (rate / SAMPLE_RATE)
        raw = np.interp(pos_in, np.arange(raw.size), raw)
    return PcmClip(raw, SAMPLE_RATE)


# ---------------------------------------------------------------------------
# spectrogram cache files

_SPC_MAGIC = b"JSPC"
_SPC_VERSION = 1


def save_spectrogram(path, spec: Spectrogram):
    vals = np.ascontiguousarray(spec.values, dtype="<f4")
    try:
        with open(path, "wb") as fh:
            fh.write(_SPC_MAGIC)
            fh.write(struct.pack("<I", _SPC_VERSION))
            fh.write(struct.pack("<B", spec.kind))
            fh.write(struct.pack("<II", vals.shape[0], vals.shape[1]))
            fh.write(vals.tobytes())
    except OSError as exc:
        raise IoError("cannot write cache %s: %s" % (path, exc))


def load_spectrogram(path) -> Spectrogram:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError("cannot read cache %s: %s" % (path, exc))
    if blob[:4] != _SPC_MAGIC:
        raise FormatError("bad cache magic in %s" % path, field="magic")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != _SPC_VERSION:
        raise FormatError("unsupported cache version %d" % version,
                          field="version")
    (kind,) = struct.unpack_from("<B", blob, 8)
    if kind not in _KIND_NAMES:
        raise FormatError("unknown spectrogram kind %d" % kind, field="kind")
    bins, frames = struct.unpack_from("<II", blob, 9)
    need = 17 + bins * frames * 4
    if len(blob) < need:
        raise FormatError("truncated cache %s" % path, field="data")
    vals = np.frombuffer(blob, dtype="<f4", count=bins * frames, offset=17)
    return Spectrogram(kind, vals.reshape(bins, frames).astype(np.float64))
