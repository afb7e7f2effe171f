"""Synthetic corpus generator with planted cross-modal structure.

Each item carries one latent sign per modality. The binary label is 1
exactly when all three signs agree, so no single modality predicts the
label better than chance while the joint triple determines it fully.
Sign carriers: a marker token in the lyrics, a sine in a high or low
frequency band, and red-vs-blue channel dominance in the image.

Retrieval corpora additionally plant a per-item key: a key token shared
between lyrics and caption, a per-item key tone, and a per-item hue
tint, so matched (lyrics+audio, caption+image) pairs are identifiable.

Generation is fully deterministic in the seed; rerunning with the same
settings reproduces every output byte for byte.
"""

import os
import wave
from dataclasses import dataclass

import numpy as np

from .data import ManifestRecord, write_manifest
from .dsp import SAMPLE_RATE
from .errors import ValidationError
from .imageenc import save_ppm

CLIP_SECONDS = 10.0
IMAGE_SIDE = 32
TOKEN_POSITIVE = "bright"
TOKEN_NEGATIVE = "gloom"
BAND_HIGH = (2500.0, 5000.0)
BAND_LOW = (80.0, 220.0)
BAND_FILLER = (300.0, 2000.0)
CAPTION_LEN = 5


@dataclass
class SyntheticSpec:
    count: int
    vocab_size: int = 60
    signal: float = 1.0
    seed: int = 0
    task: str = "sentiment"
    lyrics_len: int = 12

    def validate(self):
        if self.count < 20:
            raise ValidationError("item count must be at least 20, got %d"
                                  % self.count)
        if self.vocab_size < 8:
            raise ValidationError("vocabulary size must be at least 8")
        if not (0.0 < self.signal <= 4.0):
            raise ValidationError("signal strength must be in (0, 4]")
        if self.task not in ("sentiment", "retrieval"):
            raise ValidationError("task must be sentiment or retrieval, got %r"
                                  % self.task)
        if self.lyrics_len < 8:
            raise ValidationError("lyrics length must be at least 8")


def _filler(rng, vocab_size):
    return "w%03d" % rng.integers(0, vocab_size)


def _make_lyrics(rng, spec, sign_t, key):
    tokens = [_filler(rng, spec.vocab_size) for _ in range(spec.lyrics_len)]
    n_marks = max(1, int(round(0.25 * spec.lyrics_len * spec.signal)))
    slots = rng.choice(spec.lyrics_len, size=min(spec.lyrics_len, n_marks + 3),
                       replace=False)
    marker = TOKEN_POSITIVE if sign_t > 0 else TOKEN_NEGATIVE
    for pos in slots[:n_marks]:
        tokens[pos] = marker
    if key is not None:
        for pos in slots[n_marks:]:
            tokens[pos] = key
    return tokens


def _make_caption(rng, spec, key):
    # captions carry signal only for retrieval; sentiment items skip them
    # so the multiplicative supporting mask does not split feature scales
    if key is None:
        return None
    words = [key, key, key] + [_filler(rng, spec.vocab_size)
                               for _ in range(CAPTION_LEN - 3)]
    rng.shuffle(words)
    return " ".join(words)


def _make_audio(rng, spec, sign_a, key_freq):
    n = int(CLIP_SECONDS * SAMPLE_RATE)
    t = np.arange(n, dtype=np.float64) / SAMPLE_RATE
    band = BAND_HIGH if sign_a > 0 else BAND_LOW
    freqs = [rng.uniform(*band)]
    if key_freq is not None:
        freqs.append(key_freq)
    else:
        freqs.append(rng.uniform(*BAND_FILLER))
    freqs.append(rng.uniform(*BAND_FILLER))
    amps = [0.4 * min(spec.signal, 1.5), 0.2, 0.12]
    wave_sum = np.zeros(n)
    for freq, amp in zip(freqs, amps):
        phase = rng.uniform(0.0, 2.0 * np.pi)
        wave_sum += amp * np.sin(2.0 * np.pi * freq * t + phase)
    peak = np.max(np.abs(wave_sum))
    if peak > 0.9:
        wave_sum *= 0.9 / peak
    return wave_sum


def _write_wav(path, samples):
    pcm = np.clip(np.round(samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(path, "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(SAMPLE_RATE)
        fh.writeframes(pcm.tobytes())


def _make_image(rng, spec, sign_v, hue):
    img = rng.uniform(0.15, 0.85, size=(3, IMAGE_SIDE, IMAGE_SIDE))
    shift = 0.3 * min(spec.signal, 1.5)
    if sign_v > 0:
        img[0] += shift
    else:
        img[2] += shift
    if hue is not None:
        for ch in range(3):
            img[ch] += 0.2 * np.cos(hue - 2.0 * np.pi * ch / 3.0)
    return np.clip(img, 0.0, 1.0)


def _key_tone(index, count):
    # log-spaced per-item tones inside the filler band, distinct by item
    lo, hi = 420.0, 1900.0
    frac = index / max(count - 1, 1)
    return lo * (hi / lo) ** frac


def _split_tags(count, rng):
    order = rng.permutation(count)
    n_train = int(count * 0.8)
    n_val = int(count * 0.1)
    tags = np.empty(count, dtype=object)
    tags[order[:n_train]] = "train"
    tags[order[n_train:n_train + n_val]] = "val"
    tags[order[n_train + n_val:]] = "test"
    return tags


def generate_synthetic(spec: SyntheticSpec, out_dir: str) -> str:
    """Write a full corpus under out_dir and return the manifest path."""
    spec.validate()
    for sub in ("lyrics", "audio", "images"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    master = np.random.SeedSequence([spec.seed, spec.count,
                                     0 if spec.task == "sentiment" else 1])
    child_seqs = master.spawn(spec.count + 1)
    tags = _split_tags(spec.count, np.random.default_rng(child_seqs[-1]))
    retrieval = spec.task == "retrieval"
    records = []
    for i in range(spec.count):
        rng = np.random.default_rng(child_seqs[i])
        item_id = "item%04d" % i
        signs = rng.integers(0, 2, size=3) * 2 - 1
        key = "key%04d" % i if retrieval else None
        key_freq = _key_tone(i, spec.count) if retrieval else None
        hue = 2.0 * np.pi * i / spec.count if retrieval else None

        lyrics = _make_lyrics(rng, spec, signs[0], key)
        lyrics_rel = os.path.join("lyrics", item_id + ".txt")
        with open(os.path.join(out_dir, lyrics_rel), "w",
                  encoding="utf-8") as fh:
            fh.write(" ".join(lyrics) + "\n")

        audio_rel = os.path.join("audio", item_id + ".wav")
        _write_wav(os.path.join(out_dir, audio_rel),
                   _make_audio(rng, spec, signs[1], key_freq))

        image_rel = os.path.join("images", item_id + ".ppm")
        save_ppm(os.path.join(out_dir, image_rel),
                 _make_image(rng, spec, signs[2], hue))

        rec = ManifestRecord(id=item_id, lyrics_path=lyrics_rel,
                             split=str(tags[i]),
                             caption=_make_caption(rng, spec, key),
                             audio_path=audio_rel, image_path=image_rel)
        if not retrieval:
            rec.label = int(signs[0] == signs[1] == signs[2])
        records.append(rec)
    manifest_path = os.path.join(out_dir, "manifest.jsonl")
    write_manifest(manifest_path, records)
    return manifest_path
