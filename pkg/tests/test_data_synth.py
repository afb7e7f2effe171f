"""Manifest io and the planted-signal corpus generator."""

import hashlib
import json
import os
import wave

import numpy as np
import pytest

from jtav.data import (Dataset, Manifest, ManifestRecord, load_manifest,
                       write_manifest)
from jtav.errors import ValidationError
from jtav.synth import (CLIP_SECONDS, SyntheticSpec, TOKEN_NEGATIVE,
                        TOKEN_POSITIVE, generate_synthetic)
from jtav.dsp import SAMPLE_RATE


# -- manifest ---------------------------------------------------------------

def make_corpus_files(tmp_path, n):
    for sub in ("lyrics", "audio", "images"):
        (tmp_path / sub).mkdir(exist_ok=True)
    recs = []
    for i in range(n):
        lid = "it%02d" % i
        (tmp_path / "lyrics" / (lid + ".txt")).write_text("la la\n")
        (tmp_path / "audio" / (lid + ".wav")).write_bytes(b"")
        (tmp_path / "images" / (lid + ".ppm")).write_bytes(b"")
        recs.append(ManifestRecord(
            id=lid, lyrics_path="lyrics/%s.txt" % lid, split="train",
            audio_path="audio/%s.wav" % lid, image_path="images/%s.ppm" % lid,
            label=i % 2))
    return recs


def test_manifest_round_trip(tmp_path):
    recs = make_corpus_files(tmp_path, 10)
    path = tmp_path / "manifest.jsonl"
    write_manifest(path, recs)
    man = load_manifest(path)
    assert [r.id for r in man.records] == [r.id for r in recs]
    assert man.records[3].audio_path == recs[3].audio_path
    assert man.records[3].label == 1


def test_manifest_empty_file(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text("")
    with pytest.raises(ValidationError, match="empty"):
        load_manifest(path)


def test_manifest_duplicate_id_cites_line(tmp_path):
    recs = make_corpus_files(tmp_path, 3)
    recs[2].id = recs[0].id
    path = tmp_path / "m.jsonl"
    write_manifest(path, recs)
    with pytest.raises(ValidationError, match="line 3"):
        load_manifest(path)


def test_manifest_missing_file_cites_line(tmp_path):
    recs = make_corpus_files(tmp_path, 3)
    os.remove(tmp_path / "audio" / "it01.wav")
    path = tmp_path / "m.jsonl"
    write_manifest(path, recs)
    with pytest.raises(ValidationError, match="line 2.*audio_path"):
        load_manifest(path)


def test_manifest_missing_label_under_require(tmp_path):
    recs = make_corpus_files(tmp_path, 3)
    recs[1].label = None
    path = tmp_path / "m.jsonl"
    write_manifest(path, recs)
    load_manifest(path)  # fine without the flag
    with pytest.raises(ValidationError, match="line 2.*label"):
        load_manifest(path, require_labels=True)


def test_manifest_bad_rows(tmp_path):
    recs = make_corpus_files(tmp_path, 1)
    path = tmp_path / "m.jsonl"

    write_manifest(path, recs)
    with open(path, "a") as fh:
        fh.write("{not json\n")
    with pytest.raises(ValidationError, match="line 2"):
        load_manifest(path)

    row = recs[0].to_json()
    row["split"] = "holdout"
    path.write_text(json.dumps(row) + "\n")
    with pytest.raises(ValidationError, match="bad split"):
        load_manifest(path)

    row = recs[0].to_json()
    row["surprise"] = 1
    path.write_text(json.dumps(row) + "\n")
    with pytest.raises(ValidationError, match="unknown fields"):
        load_manifest(path)

    row = recs[0].to_json()
    row["label"] = 2
    path.write_text(json.dumps(row) + "\n")
    with pytest.raises(ValidationError, match="label must be 0 or 1"):
        load_manifest(path)

    row = recs[0].to_json()
    del row["audio_path"]
    path.write_text(json.dumps(row) + "\n")
    with pytest.raises(ValidationError, match="audio_path or spectrogram"):
        load_manifest(path)


def test_manifest_split_counts(tmp_path):
    recs = make_corpus_files(tmp_path, 6)
    recs[4].split = "val"
    recs[5].split = "test"
    path = tmp_path / "m.jsonl"
    write_manifest(path, recs)
    man = load_manifest(path)
    assert man.split_counts == {"train": 4, "val": 1, "test": 1}
    assert man.ids("val") == ["it04"]
    assert len(man.ids("all")) == 6


# -- synthetic generator ----------------------------------------------------

def tree_hash(root):
    digest = hashlib.sha256()
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            full = os.path.join(dirpath, name)
            digest.update(os.path.relpath(full, root).encode())
            with open(full, "rb") as fh:
                digest.update(fh.read())
    return digest.hexdigest()


def test_generation_is_deterministic(tmp_path):
    spec = SyntheticSpec(count=20, seed=9)
    generate_synthetic(spec, str(tmp_path / "a"))
    generate_synthetic(SyntheticSpec(count=20, seed=9), str(tmp_path / "b"))
    generate_synthetic(SyntheticSpec(count=20, seed=10), str(tmp_path / "c"))
    assert tree_hash(tmp_path / "a") == tree_hash(tmp_path / "b")
    assert tree_hash(tmp_path / "a") != tree_hash(tmp_path / "c")


def test_split_ratios_at_100(tmp_path):
    man_path = generate_synthetic(SyntheticSpec(count=100, seed=1),
                                  str(tmp_path))
    man = load_manifest(man_path, require_labels=True)
    assert man.split_counts == {"train": 80, "val": 10, "test": 10}


def planted_signs(spec):
    """Recompute every item's latent signs from the seeding scheme."""
    master = np.random.SeedSequence(
        [spec.seed, spec.count, 0 if spec.task == "sentiment" else 1])
    children = master.spawn(spec.count + 1)
    out = []
    for i in range(spec.count):
        rng = np.random.default_rng(children[i])
        out.append(rng.integers(0, 2, size=3) * 2 - 1)
    return out


def test_labels_match_planted_rule_exactly(tmp_path):
    spec = SyntheticSpec(count=40, seed=3)
    man = load_manifest(generate_synthetic(spec, str(tmp_path)),
                        require_labels=True)
    signs = planted_signs(spec)
    for i, rec in enumerate(man.records):
        expect = int(signs[i][0] == signs[i][1] == signs[i][2])
        assert rec.label == expect, rec.id


def test_each_modality_carries_its_sign(tmp_path):
    spec = SyntheticSpec(count=24, seed=5)
    root = tmp_path
    man = load_manifest(generate_synthetic(spec, str(root)))
    signs = planted_signs(spec)
    from jtav.imageenc import load_ppm
    for i, rec in enumerate(man.records[:12]):
        s_t, s_a, s_v = signs[i]

        text = (root / rec.lyrics_path).read_text()
        assert (TOKEN_POSITIVE in text) == (s_t > 0)
        assert (TOKEN_NEGATIVE in text) == (s_t < 0)

        with wave.open(str(root / rec.audio_path), "rb") as fh:
            pcm = np.frombuffer(fh.readframes(fh.getnframes()), dtype="<i2")
        power = np.abs(np.fft.rfft(pcm / 32767.0)) ** 2
        freqs = np.fft.rfftfreq(len(pcm), 1.0 / SAMPLE_RATE)
        high = power[(freqs >= 2500) & (freqs <= 5000)].sum()
        low = power[(freqs >= 80) & (freqs <= 220)].sum()
        assert (high > low) == (s_a > 0)

        img = load_ppm(root / rec.image_path)
        assert (img[0].mean() > img[2].mean()) == (s_v > 0)


def test_single_sign_is_uninformative_joint_is_decisive(tmp_path):
    spec = SyntheticSpec(count=200, seed=7)
    signs = np.array(planted_signs(spec))
    labels = (signs[:, 0] == signs[:, 1]) & (signs[:, 1] == signs[:, 2])
    labels = labels.astype(float)
    from jtav.metrics import binary_auc
    for m in range(3):
        single = binary_auc(labels, signs[:, m].astype(float))
        assert abs(single - 0.5) < 0.12  # chance band
    joint = binary_auc(labels, labels)
    assert joint == 1.0


def test_audio_duration_and_format(tmp_path):
    man = load_manifest(generate_synthetic(SyntheticSpec(count=20, seed=2),
                                           str(tmp_path)))
    with wave.open(str(tmp_path / man.records[0].audio_path), "rb") as fh:
        assert fh.getframerate() == SAMPLE_RATE
        assert fh.getnchannels() == 1
        assert fh.getnframes() == int(CLIP_SECONDS * SAMPLE_RATE)


def test_sentiment_items_have_no_captions(tmp_path):
    man = load_manifest(generate_synthetic(SyntheticSpec(count=20, seed=4),
                                           str(tmp_path)))
    assert all(r.caption is None for r in man.records)


def test_retrieval_items_link_key_across_modalities(tmp_path):
    spec = SyntheticSpec(count=20, seed=6, task="retrieval")
    man = load_manifest(generate_synthetic(spec, str(tmp_path)))
    assert all(r.label is None for r in man.records)
    for rec in man.records[:8]:
        key = "key" + rec.id[4:]
        lyrics = (tmp_path / rec.lyrics_path).read_text()
        assert key in lyrics
        assert key in rec.caption
        assert len(rec.caption.split()) == 5


def test_spec_validation_errors():
    for bad in (SyntheticSpec(count=5),
                SyntheticSpec(count=20, vocab_size=2),
                SyntheticSpec(count=20, signal=0.0),
                SyntheticSpec(count=20, signal=9.0),
                SyntheticSpec(count=20, task="ranking"),
                SyntheticSpec(count=20, lyrics_len=3)):
        with pytest.raises(ValidationError):
            bad.validate()


# -- dataset assembly -------------------------------------------------------

def test_dataset_over_synthetic_corpus(tmp_path):
    from jtav.config import Config
    man = load_manifest(generate_synthetic(SyntheticSpec(count=20, seed=8),
                                           str(tmp_path)),
                        require_labels=True)
    cfg = Config()
    ds = Dataset(man, cfg)
    vocab = ds.build_vocab()
    assert len(vocab) > 4
    item = ds.ids("train")[0]
    inp = ds.model_input(item)
    assert inp.spec.shape == (96, 216)
    assert inp.image.pixels.shape == (3, 224, 224)
    assert inp.label in (0, 1)
    pair = ds.retrieval_input(ds.ids()[0], ds.ids()[1])
    assert pair.label == 0
    same = ds.retrieval_input(item, item)
    assert same.label == 1
