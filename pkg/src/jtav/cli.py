"""Command line surface.

Subcommands cover corpus synthesis, spectrogram preprocessing, training,
evaluation, encoding inspection, and the gradient verification suite.
Every flag can also be supplied through an environment variable named
JTAV_<FLAG> (the explicit flag wins). Failures exit nonzero and print a
machine-readable error object.
"""

import argparse
import json
import os
import sys

import numpy as np

from .config import Config
from .data import Dataset, load_manifest, write_manifest
from .dsp import (compute_spectrogram, load_pcm, save_spectrogram,
                  segment_audio)
from .errors import IoError, JtavError
from .gradsuite import run_suite
from .imageenc import FrozenBackbone, load_ppm, save_features
from .models import JtavModel
from .synth import SyntheticSpec, generate_synthetic
from .textenc import load_embedding_file
from .training import eval_retrieval, eval_sentiment, train


def _env_name(flag):
    return "JTAV_" + flag.lstrip("-").upper().replace("-", "_")


def _add(parser, flag, *, kind=str, default=None, required=False,
         choices=None, help=""):
    """add_argument with a JTAV_* environment fallback; flags win."""
    env = os.environ.get(_env_name(flag))
    if env is not None:
        default = kind(env)
        required = False
    parser.add_argument(flag, type=kind, default=default, required=required,
                        choices=choices,
                        help=(help + " [env %s]" % _env_name(flag)).strip())


def _emit(obj):
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _common_train_flags(sub):
    _add(sub, "--manifest", required=True, help="corpus manifest path")
    _add(sub, "--out", required=True, help="checkpoint output path")
    _add(sub, "--log", help="JSON-lines training log path")
    _add(sub, "--epochs", kind=int, default=30)
    _add(sub, "--batch", kind=int, default=64)
    _add(sub, "--lr", kind=float, default=1e-3)
    _add(sub, "--lr-decay", kind=float, default=1.0,
         help="per-epoch learning rate multiplier")
    _add(sub, "--patience", kind=int, default=3)
    _add(sub, "--seed", kind=int, default=0)
    _add(sub, "--spec-kind", default="mels", choices=("mels", "cqt"))
    _add(sub, "--embeddings", help="optional pretrained embedding text file")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="jtav",
        description="joint text/audio/image sentiment and retrieval models")
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("synth", help="generate a synthetic corpus")
    _add(sub, "--out", required=True, help="output corpus directory")
    _add(sub, "--count", kind=int, required=True)
    _add(sub, "--seed", kind=int, default=0)
    _add(sub, "--vocab-size", kind=int, default=120)
    _add(sub, "--signal", kind=float, default=1.0)
    _add(sub, "--task", default="sentiment",
         choices=("sentiment", "retrieval"))
    _add(sub, "--lyrics-len", kind=int, default=24)

    sub = subs.add_parser("preprocess", help="cache spectrograms for a corpus")
    _add(sub, "--manifest", required=True)
    _add(sub, "--spec-kind", default="mels", choices=("mels", "cqt"))
    _add(sub, "--out-dir", help="cache directory (default: beside manifest)")
    _add(sub, "--out-manifest", help="rewritten manifest path")
    _add(sub, "--image-features", kind=int, default=0,
         help="1 also extracts frozen-backbone image features")
    _add(sub, "--feature-seed", kind=int, default=0)

    sub = subs.add_parser("train-sentiment")
    _common_train_flags(sub)
    _add(sub, "--modalities", default="tav",
         help="any non-empty subset of 'tav'")
    _add(sub, "--fusion", default="cmf", choices=("cmf", "early", "single"))

    sub = subs.add_parser("train-retrieval")
    _common_train_flags(sub)

    sub = subs.add_parser("eval-sentiment")
    _add(sub, "--checkpoint", required=True)
    _add(sub, "--manifest", required=True)
    _add(sub, "--split", default="test",
         choices=("train", "val", "test", "all"))

    sub = subs.add_parser("eval-retrieval")
    _add(sub, "--checkpoint", required=True)
    _add(sub, "--manifest", required=True)
    _add(sub, "--query-split", default="all",
         choices=("train", "val", "test", "all"))

    sub = subs.add_parser("encode", help="print one item's feature vectors")
    _add(sub, "--checkpoint", required=True)
    _add(sub, "--manifest", required=True)
    _add(sub, "--id", required=True, help="manifest record id")

    sub = subs.add_parser("gradcheck", help="finite-difference verification")
    _add(sub, "--seeds", kind=int, default=5, help="number of seeds to run")
    _add(sub, "--tolerance", kind=float, default=1e-4)
    _add(sub, "--skip-model", kind=int, default=0,
         help="1 skips the slow full-model case")
    return parser


def _cmd_synth(args):
    spec = SyntheticSpec(count=args.count, vocab_size=args.vocab_size,
                         signal=args.signal, seed=args.seed, task=args.task,
                         lyrics_len=args.lyrics_len)
    manifest = generate_synthetic(spec, args.out)
    _emit({"manifest": manifest, "count": args.count, "task": args.task})
    return 0


def _cmd_preprocess(args):
    manifest = load_manifest(args.manifest)
    base = os.path.dirname(os.path.abspath(args.manifest))
    out_dir = args.out_dir or os.path.join(base, "spectrograms")
    out_manifest = args.out_manifest or os.path.join(
        base, "manifest.preprocessed.jsonl")
    os.makedirs(out_dir, exist_ok=True)
    cached = 0
    for rec in manifest.records:
        if rec.audio_path is None:
            continue
        clip = load_pcm(manifest.resolve(rec.audio_path))
        spec = compute_spectrogram(segment_audio(clip)[0], args.spec_kind)
        cache_name = "%s.%s.jspc" % (rec.id, args.spec_kind)
        save_spectrogram(os.path.join(out_dir, cache_name), spec)
        rec.spectrogram_cache = os.path.relpath(
            os.path.join(out_dir, cache_name), base)
        cached += 1
    featured = 0
    if args.image_features:
        backbone = FrozenBackbone(args.feature_seed)
        ids, rows = [], []
        for rec in manifest.records:
            if rec.image_path is None:
                continue
            # stored resolution, not the 224x224 encoder size: the frozen
            # extractor pools globally, and skipping the upscale is ~50x
            # cheaper on small procedural images
            img = load_ppm(manifest.resolve(rec.image_path))
            ids.append(rec.id)
            rows.append(backbone.transform(img))
            rec.feature_id = rec.id
            featured += 1
        if rows:
            save_features(os.path.join(base, "features.jvec"), ids,
                          np.asarray(rows, dtype=np.float64))
    write_manifest(out_manifest, manifest.records)
    _emit({"manifest": out_manifest, "cached": cached, "featured": featured,
           "spec_kind": args.spec_kind})
    return 0


def _build_training(args, task, modalities="tav", fusion="cmf"):
    manifest = load_manifest(args.manifest,
                             require_labels=(task == "sentiment"))
    use_features = any(r.feature_id is not None for r in manifest.records)
    cfg = Config(spec_kind=args.spec_kind, epochs=max(args.epochs, 1),
                 batch=args.batch, lr=args.lr, lr_decay=args.lr_decay,
                 patience=args.patience, seed=args.seed,
                 image_mode="features" if use_features else "pixels")
    dataset = Dataset(manifest, cfg)
    if use_features:
        cfg.feature_dim = dataset.feature_dim()
    vocab = dataset.build_vocab()
    pretrained = None
    if args.embeddings:
        pretrained = load_embedding_file(args.embeddings, cfg.emb_dim)
    model = JtavModel(cfg, vocab, modalities=modalities, fusion_kind=fusion,
                      seed=args.seed, pretrained_emb=pretrained)
    return dataset, model


def _cmd_train(args, task):
    modalities = getattr(args, "modalities", "tav")
    fusion = getattr(args, "fusion", "cmf")
    dataset, model = _build_training(args, task, modalities, fusion)
    summary = {"checkpoint": args.out, "task": task, "seed": args.seed,
               "trained": args.epochs > 0}
    if args.epochs > 0:
        result = train(model, dataset, task=task, epochs=args.epochs,
                       batch=args.batch, lr=args.lr, lr_decay=args.lr_decay,
                       patience=args.patience, seed=args.seed,
                       log_path=args.log)
        summary.update({"best_epoch": result.best_epoch,
                        "best_val_loss": round(result.best_val, 6),
                        "epochs_run": result.epochs_run})
    elif args.log:
        open(args.log, "w").close()
    model.save(args.out)
    _emit(summary)
    return 0


def _cmd_eval_sentiment(args):
    model = JtavModel.load(args.checkpoint)
    manifest = load_manifest(args.manifest, require_labels=True)
    dataset = Dataset(manifest, model.cfg)
    _emit(eval_sentiment(model, dataset, split=args.split))
    return 0


def _cmd_eval_retrieval(args):
    model = JtavModel.load(args.checkpoint)
    manifest = load_manifest(args.manifest)
    dataset = Dataset(manifest, model.cfg)
    report, _ = eval_retrieval(model, dataset, query_split=args.query_split)
    _emit(report)
    return 0


def _cmd_encode(args):
    model = JtavModel.load(args.checkpoint)
    manifest = load_manifest(args.manifest)
    dataset = Dataset(manifest, model.cfg)
    if args.id not in manifest.by_id:
        raise JtavError("unknown record id %r" % args.id)
    prob, feats, fused = model.forward(dataset.model_input(args.id), "eval",
                                       with_detail=True)
    out = {"id": args.id, "probability": float(prob.data)}
    for name in ("t", "a", "v"):
        if name in feats:
            vec = feats[name].data
            out[name] = {"dim": int(vec.size), "values": vec.tolist()}
    if fused is not None:
        out["u"] = {"dim": int(fused.u.data.size),
                    "values": fused.u.data.tolist()}
    _emit(out)
    return 0


def _cmd_gradcheck(args):
    seeds = tuple(range(max(args.seeds, 1)))
    max_err, worst = run_suite(seeds=seeds,
                               include_model=not args.skip_model)
    ok = max_err < args.tolerance
    _emit({"max_relative_error": max_err, "tolerance": args.tolerance,
           "passed": ok, "seeds": len(seeds),
           "worst_case": max(worst, key=worst.get)})
    return 0 if ok else 1


_COMMANDS = {
    "synth": _cmd_synth,
    "preprocess": _cmd_preprocess,
    "train-sentiment": lambda a: _cmd_train(a, "sentiment"),
    "train-retrieval": lambda a: _cmd_train(a, "retrieval"),
    "eval-sentiment": _cmd_eval_sentiment,
    "eval-retrieval": _cmd_eval_retrieval,
    "encode": _cmd_encode,
    "gradcheck": _cmd_gradcheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except JtavError as exc:
        payload = {"error": type(exc).__name__, "message": str(exc),
                   "exit_code": exc.exit_code}
        for extra in ("epoch", "step", "field"):
            if getattr(exc, extra, None) is not None:
                payload[extra] = getattr(exc, extra)
        sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
        return exc.exit_code
    except OSError as exc:
        err = IoError(str(exc))
        sys.stderr.write(json.dumps(
            {"error": "IoError", "message": str(exc),
             "exit_code": err.exit_code}, sort_keys=True) + "\n")
        return err.exit_code


if __name__ == "__main__":
    sys.exit(main())
