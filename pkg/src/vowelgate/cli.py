"""Command-line driver.

    vowelgate [--config PATH] [--seed N] [--out DIR] <command> ...

Commands read and write under ``--out`` (default ``./run``):

    gen-corpus   synthetic corpus -> corpus/*.wav, *.lab, manifest.tsv, train.tsv, test.tsv
    extract      features of WAV files or manifests -> features/<name>.csv
    train        model bundle from a manifest (default corpus/train.tsv) -> model/
    detect       vowel segments of a WAV -> detect/<name>.segments.csv, <name>.curve.csv
    classify     label detected (or given) segments of a WAV -> classify/<name>.csv
    evaluate     confusion matrix and detection scores on a manifest (default corpus/test.tsv)

Every output is written under a temporary name and renamed when complete.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import shutil
import sys
import tempfile
from pathlib import Path

from .config import PipelineConfig
from .corpus import generate_corpus, load_manifest, read_manifest, save_labeled_wav, split, write_manifest
from .dsp import extract_features, read_wav, write_feature_csv
from .fusion import read_segments_csv, write_curve_csv, write_segments_csv
from .pipeline import evaluate, load_bundle, save_bundle, train

log = logging.getLogger("vowelgate")


class CliError(Exception):
    pass


@contextlib.contextmanager
def atomic_file(path):
    """Yield a temporary sibling of ``path``; rename it into place on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _require(path, what, hint):
    if not Path(path).exists():
        raise CliError(f"{what} not found: {path}; {hint}")


def _load_config(args) -> PipelineConfig:
    config = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        config.seed = args.seed
    return config.validate()


def _model_dir(args):
    return Path(args.model) if args.model else Path(args.out) / "model"


def _bundle(args, config):
    directory = _model_dir(args)
    if not (directory / "manifest.json").is_file():
        raise CliError(f"no trained model at {directory}; run 'vowelgate train' first "
                       "or pass --model DIR")
    return load_bundle(directory, expect_config=config)


def cmd_gen_corpus(args, config):
    out = Path(args.out) / "corpus"
    utts = generate_corpus(config.corpus, config.seed, config.dsp.sample_rate)
    train_set, test_set = split(utts, config.train_fraction, config.seed)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".corpus.", dir=out.parent))
    try:
        paths = {}
        for u in utts:
            paths[u.name] = (tmp / f"{u.name}.wav", tmp / f"{u.name}.lab")
            save_labeled_wav(u, *paths[u.name])
        write_manifest(tmp / "manifest.tsv", [paths[u.name] for u in utts])
        write_manifest(tmp / "train.tsv", [paths[u.name] for u in train_set])
        write_manifest(tmp / "test.tsv", [paths[u.name] for u in test_set])
        if out.exists():
            shutil.rmtree(out)
        os.replace(tmp, out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    print(f"wrote {len(utts)} utterances ({len(train_set)} train, {len(test_set)} test) to {out}")


def _wav_inputs(inputs):
    for item in inputs:
        _require(item, "input", "check the path")
        if str(item).endswith(".tsv"):
            yield from (w for w, _ in read_manifest(item))
        else:
            yield Path(item)


def cmd_extract(args, config):
    out = Path(args.out) / "features"
    count = 0
    for wav in _wav_inputs(args.inputs):
        feats = extract_features(read_wav(wav), config.dsp)
        with atomic_file(out / f"{Path(wav).stem}.csv") as tmp:
            write_feature_csv(tmp, feats)
        count += 1
    print(f"wrote features for {count} file(s) to {out}")


def cmd_train(args, config):
    manifest = args.manifest or Path(args.out) / "corpus" / "train.tsv"
    _require(manifest, "training manifest", "run 'vowelgate gen-corpus' or pass --manifest")
    utts = load_manifest(manifest)
    bundle = train(utts, config, progress=log.info)
    directory = save_bundle(bundle, _model_dir(args))
    r = bundle.report
    print(f"trained on {r.n_train_frames} frames; epsilon={r.epsilon:.4f}; "
          f"SVM C={r.C:g} sigma={r.sigma:g}; support vectors gated={r.sv_gated}"
          + (f" ungated={r.sv_ungated}" if r.sv_ungated is not None else ""))
    print(f"model bundle written to {directory}")


def cmd_detect(args, config):
    _require(args.wav, "audio file", "check the path")
    bundle = _bundle(args, config)
    segs, scores, _ = bundle.detect(read_wav(args.wav))
    out = Path(args.out) / "detect"
    stem = Path(args.wav).stem
    with atomic_file(out / f"{stem}.segments.csv") as tmp:
        write_segments_csv(tmp, segs)
    with atomic_file(out / f"{stem}.curve.csv") as tmp:
        write_curve_csv(tmp, scores, bundle.config.fusion)
    print(f"{len(segs)} vowel segment(s) written to {out / (stem + '.segments.csv')}")


def cmd_classify(args, config):
    _require(args.wav, "audio file", "check the path")
    bundle = _bundle(args, config)
    audio = read_wav(args.wav)
    if args.segments:
        _require(args.segments, "segments file", "run 'vowelgate detect' first")
        _, _, rows = bundle.detect(audio)
        segs = read_segments_csv(args.segments, bundle.config.dsp)
        segs = bundle.classify(rows, [s for s in segs if s.end_frame <= len(rows)])
    else:
        segs = bundle.recognize(audio)
    out = Path(args.out) / "classify" / f"{Path(args.wav).stem}.csv"
    with atomic_file(out) as tmp:
        write_segments_csv(tmp, segs)
    for s in segs:
        print(f"{s.start_time:8.3f} {s.end_time:8.3f}  /{s.label}/  cm={s.cm:.3f}")


def cmd_evaluate(args, config):
    manifest = args.manifest or Path(args.out) / "corpus" / "test.tsv"
    bundle = _bundle(args, config)
    _require(manifest, "test manifest", "run 'vowelgate gen-corpus' or pass --manifest")
    result = evaluate(bundle, load_manifest(manifest))
    out = Path(args.out) / "eval"
    text = result.matrix.to_text()
    with atomic_file(out / "confusion.txt") as tmp:
        tmp.write_text(text + "\n")
    with atomic_file(out / "confusion.csv") as tmp:
        result.matrix.write_csv(tmp)
    with atomic_file(out / "summary.json") as tmp:
        tmp.write_text(json.dumps(result.summary(), indent=2, sort_keys=True) + "\n")
    d = result.detection
    print(text)
    print(f"detection: {d.n_hits}/{d.n_true} segments within tolerance, "
          f"{d.n_false_alarms} false alarm(s)")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vowelgate", description="GMM-gated SVM vowel detection and recognition")
    p.add_argument("--config", help="JSON pipeline config (defaults are used when omitted)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", default="run", help="output directory (default: ./run)")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-corpus", help="generate the synthetic corpus").set_defaults(func=cmd_gen_corpus)

    s = sub.add_parser("extract", help="write per-frame feature CSVs")
    s.add_argument("inputs", nargs="+", help="WAV files or .tsv manifests")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("train", help="train the model bundle")
    s.add_argument("--manifest", help="training manifest (default: OUT/corpus/train.tsv)")
    s.add_argument("--model", help="bundle directory (default: OUT/model)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("detect", help="detect vowel segments in a WAV file")
    s.add_argument("wav")
    s.add_argument("--model", help="bundle directory (default: OUT/model)")
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("classify", help="label the vowel segments of a WAV file")
    s.add_argument("wav")
    s.add_argument("--segments", help="segments CSV from 'detect' (detects afresh when omitted)")
    s.add_argument("--model", help="bundle directory (default: OUT/model)")
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("evaluate", help="confusion matrix and detection scores on a test set")
    s.add_argument("--manifest", help="test manifest (default: OUT/corpus/test.tsv)")
    s.add_argument("--model", help="bundle directory (default: OUT/model)")
    s.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        config = _load_config(args)
        args.func(args, config)
    except (CliError, ValueError, RuntimeError, OSError) as exc:
        print(f"vowelgate {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
