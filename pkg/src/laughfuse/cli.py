"""Command-line entry point.

Exit codes: 0 ok, 2 usage, 3 I/O, 4 pipeline, 5 empty split, 6 dimension
mismatch, 7 cascade parse failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_PIPELINE, EXIT_SPLIT, EXIT_DIM, EXIT_PARSE = 0, 2, 3, 4, 5, 6, 7


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


def _load_cfg(path):
    from .config import ConfigError, load_config

    try:
        return load_config(path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read config: {exc}") from None
    except ConfigError as exc:
        raise CliError(EXIT_USAGE, str(exc)) from None


def _parse_roi(text):
    try:
        x, y, w, h = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"--roi expects x,y,w,h integers, got {text!r}") from None
    return (x, y, w, h)


def _apply_roi(cfg, roi):
    from .config import with_overrides

    return with_overrides(cfg, roi=roi)


def _load_cascade(cfg):
    from .vision.cascade import CascadeParseError, parse_cascade_xml

    try:
        return parse_cascade_xml(cfg.resolved_cascade_path())
    except CascadeParseError as exc:
        raise CliError(EXIT_PARSE, f"cascade: {exc}") from None


def _load_model(path):
    from .laughnet import ModelError, load_model

    try:
        return load_model(path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read model: {exc}") from None
    except (ModelError, KeyError, TypeError) as exc:
        raise CliError(EXIT_PIPELINE, f"invalid model file {path}: {exc}") from None


def _load_dataset(path):
    from .fusion import read_fused_jsonl

    try:
        return read_fused_jsonl(path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read dataset: {exc}") from None
    except (ValueError, KeyError) as exc:
        raise CliError(EXIT_PIPELINE, f"invalid dataset {path}: {exc}") from None


# ---------------------------------------------------------------- commands


def cmd_synth(args):
    from .corpus import CorpusError, generate_synthetic_corpus

    if args.clips < 4 or args.clips % 2:
        raise CliError(EXIT_USAGE, f"--clips must be an even number >= 4, got {args.clips}")
    try:
        generate_synthetic_corpus(args.out, args.clips, args.seed)
    except (CorpusError, OSError) as exc:
        raise CliError(EXIT_IO, str(exc)) from None
    print(Path(args.out) / "manifest.json")
    return EXIT_OK


def cmd_extract(args):
    from .corpus import CorpusError, parse_manifest
    from .fusion import write_fused_jsonl

    cfg = _apply_roi(_load_cfg(args.config), args.roi)
    cascade = _load_cascade(cfg)
    try:
        manifest = parse_manifest(args.manifest)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read manifest: {exc}") from None
    except CorpusError as exc:
        raise CliError(EXIT_PIPELINE, f"invalid manifest: {exc}") from None

    from .pipeline import extract_clip

    out = Path(args.out)
    try:
        (out / "detections").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot create {out}: {exc}") from None

    items = []
    for n, e in enumerate(manifest, 1):
        try:
            seq, smiles = extract_clip(e.audio_path, e.frames_dir, e.frame_rate_hz, cfg, cascade, e.label, e.id)
        except (CorpusError, ValueError, OSError) as exc:
            raise CliError(EXIT_PIPELINE, f"clip {e.id}: {exc}") from None
        items.append((seq, e.split))
        (out / "detections" / f"{e.id}.json").write_text(json.dumps(smiles.to_json()) + "\n", encoding="utf-8")
        _log(f"[{n}/{len(manifest)}] {e.id}: {seq.n_steps}x{seq.d}, smile_ratio={smiles.smile_ratio:.2f}")
    dataset = out / "fused.jsonl"
    write_fused_jsonl(dataset, items)
    print(dataset)
    return EXIT_OK


def _split_pairs(records, split):
    return [(s.steps, s.label) for s, sp in records if sp == split]


def cmd_train(args):
    from .laughnet import ModelError, holdout_split, save_model, train

    cfg = _load_cfg(args.config)
    records = _load_dataset(args.dataset)
    # validation is held out of the train split; the test split stays unseen until eval
    train_set, val_set = holdout_split(_split_pairs(records, "train"), cfg.train.val_fraction)
    if not train_set or not val_set:
        raise CliError(EXIT_SPLIT, f"train split too small for a validation holdout (got {len(train_set)}/{len(val_set)})")
    n_protected = 2 if cfg.fusion.channels == "fused" else 0

    def report(e):
        _log(f"epoch {e.epoch:3d} loss={e.train_loss:.4f} train_acc={e.train_accuracy:.4f} val_acc={e.val_accuracy:.4f}")

    try:
        params, log = train(cfg.model, cfg.train, train_set, val_set, n_protected=n_protected, log_fn=report)
    except ModelError as exc:
        raise CliError(EXIT_PIPELINE, str(exc)) from None
    out = Path(args.out)
    try:
        save_model(params, out)
        log_path = out.with_name(out.stem + ".trainlog.json")
        log_path.write_text(json.dumps([asdict(e) for e in log], indent=1) + "\n", encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write model: {exc}") from None
    last = log[-1]
    print(
        f"epochs={len(log)} train_loss={last.train_loss:.6f} train_acc={last.train_accuracy:.6f} "
        f"val_acc={max(e.val_accuracy for e in log):.6f}"
    )
    return EXIT_OK


def cmd_eval(args):
    from .laughnet import predict_scores
    from .metrics import build_report, write_report

    params = _load_model(args.model)
    records = [(s, sp) for s, sp in _load_dataset(args.dataset) if sp == "test"]
    if not records:
        raise CliError(EXIT_SPLIT, "dataset has no test split")
    for s, _ in records:
        if s.d != params.input_d:
            raise CliError(EXIT_DIM, f"clip {s.clip_id}: {s.d} channels, model expects {params.input_d}")
    scores = predict_scores(params, np.stack([s.steps for s, _ in records]))
    report = build_report([s.clip_id for s, _ in records], scores, [s.label for s, _ in records], args.threshold)
    try:
        write_report(report, args.out)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write report: {exc}") from None
    print(f"acc={report.accuracy:.6f} prec={report.precision:.6f} rec={report.recall:.6f} f1={report.f1:.6f}")
    return EXIT_OK


def cmd_predict(args):
    from .corpus import CorpusError
    from .laughnet import predict_score
    from .pipeline import extract_clip

    cfg = _apply_roi(_load_cfg(args.config), args.roi)
    cascade = _load_cascade(cfg)
    params = _load_model(args.model)
    try:
        seq, _ = extract_clip(args.audio, args.frames, args.fps, cfg, cascade, None, Path(args.audio).stem)
    except (CorpusError, ValueError, OSError) as exc:
        raise CliError(EXIT_PIPELINE, f"pipeline failed: {exc}") from None
    if seq.d != params.input_d:
        raise CliError(EXIT_DIM, f"{seq.d} channels, model expects {params.input_d}")
    score = predict_score(params, seq)
    print(json.dumps({"score": score, "pred": int(score >= cfg.threshold)}))
    return EXIT_OK


def _plural(n, word):
    return f"{n} {word}" + ("" if n == 1 else "s")


def cmd_inspect_cascade(args):
    from .vision.cascade import CascadeParseError, parse_cascade_xml

    try:
        m = parse_cascade_xml(args.cascade)
    except CascadeParseError as exc:
        raise CliError(EXIT_PARSE, str(exc)) from None
    print(
        f"window {m.window_w}x{m.window_h}, {_plural(len(m.stages), 'stage')}, "
        f"{_plural(len(m.features), 'feature')}, {_plural(m.n_tilted, 'tilted feature')}"
    )
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="laughfuse", description="Audio-visual laughter detection pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic paired audio/frame corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--clips", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("extract", help="build the fused JSONL dataset from a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--roi", type=_parse_roi, help="restrict smile detection to x,y,w,h")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("train", help="train on split=train with a stratified validation holdout")
    s.add_argument("--dataset", required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a model on split=test and write the JSON report")
    s.add_argument("--dataset", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("predict", help="score one recording")
    s.add_argument("--audio", required=True)
    s.add_argument("--frames", required=True)
    s.add_argument("--fps", type=float, required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--config")
    s.add_argument("--roi", type=_parse_roi, help="restrict smile detection to x,y,w,h")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("inspect-cascade", help="summarize a Haar cascade XML file")
    s.add_argument("--cascade", required=True)
    s.set_defaults(func=cmd_inspect_cascade)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        code = args.func(args)
    except CliError as exc:
        _log(f"error: {exc}")
        return exc.code
    _log(f"done in {time.perf_counter() - t0:.1f}s")
    return code


if __name__ == "__main__":
    sys.exit(main())
