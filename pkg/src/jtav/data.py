"""Manifest loading and dataset assembly.

A manifest is UTF-8 JSON-lines, one record per item: id, lyrics_path,
optional caption, audio_path or spectrogram_cache, image_path or
feature_id, optional 0/1 label, and a split tag. Paths are resolved
relative to the manifest file. Validation failures always cite the
offending line number.
"""

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dsp import compute_spectrogram, load_pcm, load_spectrogram, segment_audio
from .errors import ValidationError
from .imageenc import (IMAGE_SIZE, ImageInput, bilinear_resize, load_features,
                       load_ppm)
from .models import ModelInput
from .textenc import TextPair, Vocabulary, tokenize

SPLITS = ("train", "val", "test")


@dataclass
class ManifestRecord:
    id: str
    lyrics_path: str
    split: str
    caption: Optional[str] = None
    audio_path: Optional[str] = None
    spectrogram_cache: Optional[str] = None
    image_path: Optional[str] = None
    feature_id: Optional[str] = None
    label: Optional[int] = None

    def to_json(self):
        out = {"id": self.id, "lyrics_path": self.lyrics_path,
               "split": self.split}
        for key in ("caption", "audio_path", "spectrogram_cache",
                    "image_path", "feature_id", "label"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        return out


@dataclass
class Manifest:
    records: list
    base_dir: str
    split_counts: dict = field(default_factory=dict)

    def __post_init__(self):
        self.by_id = {r.id: r for r in self.records}
        counts = {s: 0 for s in SPLITS}
        for r in self.records:
            counts[r.split] += 1
        self.split_counts = counts

    def ids(self, split=None):
        if split is None or split == "all":
            return [r.id for r in self.records]
        return [r.id for r in self.records if r.split == split]

    def resolve(self, rel_path):
        return os.path.join(self.base_dir, rel_path)


_KNOWN_KEYS = {"id", "lyrics_path", "split", "caption", "audio_path",
               "spectrogram_cache", "image_path", "feature_id", "label"}


def load_manifest(path, require_labels=False) -> Manifest:
    base_dir = os.path.dirname(os.path.abspath(path))
    records = []
    seen = set()
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ValidationError("cannot open manifest %s: %s" % (path, exc))
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError("line %d: invalid JSON (%s)"
                                      % (lineno, exc))
            unknown = set(obj) - _KNOWN_KEYS
            if unknown:
                raise ValidationError("line %d: unknown fields %s"
                                      % (lineno, sorted(unknown)))
            for key in ("id", "lyrics_path", "split"):
                if key not in obj:
                    raise ValidationError("line %d: missing %r" % (lineno, key))
            if obj["split"] not in SPLITS:
                raise ValidationError("line %d: bad split %r"
                                      % (lineno, obj["split"]))
            rec = ManifestRecord(**obj)
            if rec.id in seen:
                raise ValidationError("line %d: duplicate id %r"
                                      % (lineno, rec.id))
            seen.add(rec.id)
            if rec.audio_path is None and rec.spectrogram_cache is None:
                raise ValidationError(
                    "line %d: need audio_path or spectrogram_cache" % lineno)
            if rec.image_path is None and rec.feature_id is None:
                raise ValidationError(
                    "line %d: need image_path or feature_id" % lineno)
            if require_labels and rec.label is None:
                raise ValidationError("line %d: missing label" % lineno)
            if rec.label is not None and rec.label not in (0, 1):
                raise ValidationError("line %d: label must be 0 or 1" % lineno)
            for key in ("lyrics_path", "audio_path", "spectrogram_cache",
                        "image_path"):
                rel = getattr(rec, key)
                if rel is not None and not os.path.exists(
                        os.path.join(base_dir, rel)):
                    raise ValidationError(
                        "line %d: %s %r does not exist" % (lineno, key, rel))
            records.append(rec)
    if not records:
        raise ValidationError("manifest %s is empty" % path)
    return Manifest(records, base_dir)


def write_manifest(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")


class Dataset:
    """In-memory corpus view over a manifest.

    Text, spectrograms and images are cached small (images at their
    stored resolution, upsampled per access) so hundreds of items fit
    comfortably in memory.
    """

    def __init__(self, manifest: Manifest, cfg):
        self.manifest = manifest
        self.cfg = cfg
        self._text = {}
        self._spec = {}
        self._img = {}
        self._features = None
        feature_files = {r.feature_id for r in manifest.records
                         if r.feature_id is not None}
        if feature_files:
            fpath = manifest.resolve("features.jvec")
            ids, mat = load_features(fpath)
            self._features = {one: mat[i] for i, one in enumerate(ids)}
        for rec in manifest.records:
            with open(manifest.resolve(rec.lyrics_path), encoding="utf-8") as fh:
                lyrics = tokenize(fh.read())
            caption = tokenize(rec.caption) if rec.caption else None
            self._text[rec.id] = (lyrics, caption)

    def feature_dim(self):
        if not self._features:
            raise ValidationError("corpus has no precomputed image features")
        return next(iter(self._features.values())).shape[0]

    def build_vocab(self) -> Vocabulary:
        pools = []
        for lyrics, caption in self._text.values():
            pools.append(lyrics)
            if caption:
                pools.append(caption)
        return Vocabulary.build(pools)

    def ids(self, split=None):
        return self.manifest.ids(split)

    def record(self, item_id):
        return self.manifest.by_id[item_id]

    def label(self, item_id):
        return self.manifest.by_id[item_id].label

    def text_pair(self, item_id) -> TextPair:
        lyrics, caption = self._text[item_id]
        return TextPair(lyrics, caption)

    def spectrogram(self, item_id) -> np.ndarray:
        if item_id not in self._spec:
            rec = self.manifest.by_id[item_id]
            if rec.spectrogram_cache is not None:
                spec = load_spectrogram(
                    self.manifest.resolve(rec.spectrogram_cache))
            else:
                clip = load_pcm(self.manifest.resolve(rec.audio_path))
                first = segment_audio(clip)[0]
                spec = compute_spectrogram(first, self.cfg.spec_kind)
            self._spec[item_id] = spec.values.astype(np.float32)
        return self._spec[item_id].astype(np.float64)

    def image(self, item_id) -> ImageInput:
        rec = self.manifest.by_id[item_id]
        if rec.feature_id is not None:
            if self._features is None or rec.feature_id not in self._features:
                raise ValidationError(
                    "feature id %r not found for item %s"
                    % (rec.feature_id, item_id))
            return ImageInput(features=self._features[rec.feature_id])
        if item_id not in self._img:
            self._img[item_id] = load_ppm(
                self.manifest.resolve(rec.image_path)).astype(np.float32)
        img = self._img[item_id].astype(np.float64)
        if img.shape[1:] != (IMAGE_SIZE, IMAGE_SIZE):
            img = bilinear_resize(img, IMAGE_SIZE, IMAGE_SIZE)
        return ImageInput(pixels=img)

    def model_input(self, item_id) -> ModelInput:
        rec = self.manifest.by_id[item_id]
        return ModelInput(id=item_id, text=self.text_pair(item_id),
                          spec=self.spectrogram(item_id),
                          image=self.image(item_id), label=rec.label)

    def mixed_text(self, query_id, candidate_id) -> TextPair:
        cand_lyrics, _ = self._text[candidate_id]
        _, query_caption = self._text[query_id]
        return TextPair(cand_lyrics, query_caption)

    def retrieval_input(self, query_id, candidate_id) -> ModelInput:
        """Mixed pair: candidate lyrics+audio under the query's caption+image."""
        cand_lyrics, _ = self._text[candidate_id]
        _, query_caption = self._text[query_id]
        return ModelInput(
            id="%s|%s" % (query_id, candidate_id),
            text=TextPair(cand_lyrics, query_caption),
            spec=self.spectrogram(candidate_id),
            image=self.image(query_id),
            label=1 if query_id == candidate_id else 0)
