"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 pipeline error. Results go to
stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import audio, data, eval as evaluation, stream, vision
from .config import load_config
from .core import PipelineError, config_error
from .fusion import FusionState, MultimodalClassifier, predict_multimodal, train_multimodal
from .models import ARCHITECTURES, TrainedModel, modality_of, train_unimodal
from .nn import checkpoint

EXIT_OK, EXIT_USAGE, EXIT_PIPELINE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _positive_int(flag):
    def parse(text):
        try:
            value = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{flag} must be an integer, got {text!r}") from None
        if value < 1:
            raise argparse.ArgumentTypeError(f"{flag} must be >= 1, got {value}")
        return value
    return parse


def _positive_float(flag):
    def parse(text):
        try:
            value = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{flag} must be a number, got {text!r}") from None
        if not value > 0:
            raise argparse.ArgumentTypeError(f"{flag} must be > 0, got {value}")
        return value
    return parse


def _severity(text):
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"severity must be in [0, 1], got {value}")
    return value


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


def _emit(obj, out=None):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n" if not isinstance(obj, str) else obj
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _sha256_file(path) -> str:
    return hashlib.sha256(checkpoint.read(path)).hexdigest()


def _write_run_record(target: Path, command: str, argv, cfg, inputs: dict, outputs: dict):
    record = {
        "command": command,
        "argv": list(argv),
        "config": cfg.materialized(),
        "config_hash": cfg.digest(),
        "inputs": inputs,
        "outputs": outputs,
    }
    Path(target).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def _load_unimodal(path) -> TrainedModel:
    return TrainedModel.from_bytes(checkpoint.read(path))


def _load_multimodal(path) -> MultimodalClassifier:
    return MultimodalClassifier.from_bytes(checkpoint.read(path))


# --- subcommands ----------------------------------------------------------


def cmd_gen_data(args, argv):
    cfg = load_config(args.config)
    gen = data.GeneratorConfig(per_class=args.per_class, seed=args.seed, image_size=args.image_size)
    manifest = data.generate_synthetic_corpus(gen, args.out, tuple(args.fractions))
    digest = manifest.digest()
    out = Path(args.out)
    _write_run_record(out / "run.json", "gen-data", argv, cfg, {"seed": args.seed, "per_class": args.per_class},
                      {"manifest": str(out / data.MANIFEST_NAME), "corpus_hash": digest})
    _emit({"manifest": str(out / data.MANIFEST_NAME), "records": len(manifest.records),
           "class_counts": manifest.class_counts(), "corpus_hash": digest})


def _arrays(manifest, split, modality, cfg, cache=None, corruption=None, seed=0):
    records = manifest.split(split)
    if not records:
        raise config_error(f"manifest has no {split!r} records")
    return data.load_arrays(manifest, records, modality, cfg.spectrogram_config(), cfg.image_config(),
                            cache, corruption, seed)


def _cache(cfg, manifest):
    return data.SpectrogramCache(cfg.cache_dir(manifest.root), cfg.spectrogram_config())


def cmd_train(args, argv):
    cfg = load_config(args.config, {"train": {
        "epochs": args.epochs, "batch_size": args.batch_size, "learning_rate": args.lr,
        "optimizer": args.optimizer, "seed": args.seed}})
    if modality_of(args.arch) != args.modality:
        raise UsageError(f"--arch {args.arch} is not an {args.modality} architecture\n"
                         f"usage: train --modality {{image|audio}} --arch ID --manifest F --out CKPT")
    manifest = data.load_manifest(args.manifest)
    cache = _cache(cfg, manifest) if args.modality == "audio" else None
    x, y = _arrays(manifest, "train", args.modality, cfg, cache)
    if cache is not None:
        cache.save_index()
    model = train_unimodal(args.arch, x, y, cfg.train_config(), log=_log)
    blob = model.to_bytes()
    checkpoint.write(args.out, blob)
    _write_run_record(Path(str(args.out) + ".run.json"), "train", argv, cfg,
                      {"manifest": str(args.manifest), "corpus_hash": manifest.digest()},
                      {"checkpoint": str(args.out), "sha256": hashlib.sha256(blob).hexdigest()})
    _emit({"checkpoint": str(args.out), "arch": args.arch, "history": model.history})


def cmd_fuse_train(args, argv):
    overrides = {"fusion": {"epochs": args.epochs, "eta": args.eta}}
    if args.w_image is not None:
        overrides["fusion"].update(w_image=args.w_image, w_audio=1.0 - args.w_image)
    cfg = load_config(args.config, overrides)
    image_model = _load_unimodal(args.image_ckpt)
    audio_model = _load_unimodal(args.audio_ckpt)
    if image_model.modality != "image" or audio_model.modality != "audio":
        raise config_error("--image-ckpt must hold an image model and --audio-ckpt an audio model")
    manifest = data.load_manifest(args.manifest)
    cache = _cache(cfg, manifest)
    vx_img, vy = _arrays(manifest, "val", "image", cfg)
    vx_aud, _ = _arrays(manifest, "val", "audio", cfg, cache)
    cache.save_index()
    state = FusionState(cfg.fusion.w_image, 1.0 - cfg.fusion.w_image, cfg.fusion.eta)
    clf = train_multimodal(image_model, audio_model, vx_img, vx_aud, vy, cfg.fusion.epochs, state, log=_log)
    blob = clf.to_bytes()
    checkpoint.write(args.out, blob)
    _write_run_record(Path(str(args.out) + ".run.json"), "fuse-train", argv, cfg,
                      {"manifest": str(args.manifest), "corpus_hash": manifest.digest(),
                       "image_ckpt": _sha256_file(args.image_ckpt), "audio_ckpt": _sha256_file(args.audio_ckpt)},
                      {"checkpoint": str(args.out), "sha256": hashlib.sha256(blob).hexdigest()})
    _emit({"checkpoint": str(args.out), "model": clf.name, "fusion": clf.fusion.to_json()})


def cmd_eval(args, argv):
    cfg = load_config(args.config)
    manifest = data.load_manifest(args.manifest)
    cache = _cache(cfg, manifest)
    x_img, y = _arrays(manifest, args.split, "image", cfg)
    x_aud, _ = _arrays(manifest, args.split, "audio", cfg, cache)
    cache.save_index()
    classifiers = [_load_multimodal(p) for p in args.ckpt]
    result: dict = {"split": args.split, "averaging": evaluation.AVERAGING}
    text = []
    if args.ablation:
        if len(classifiers) != 4:
            raise UsageError("--ablation needs exactly four --ckpt multimodal checkpoints\n"
                             "usage: eval --ckpt F --ckpt F --ckpt F --ckpt F --manifest F --ablation")
        fused = {}
        for clf in classifiers:
            key = (clf.image_model.arch, clf.audio_model.arch)
            fused[key] = evaluation.evaluate_classifier(clf, x_img, x_aud, y)["fused"]
        _, table_json, table_text = evaluation.ablation_report(fused)
        result["ablation"] = table_json
        text.append(table_text)
    else:
        if len(classifiers) != 1:
            raise UsageError("eval takes one --ckpt unless --ablation is given\n"
                             "usage: eval --ckpt F --manifest F [--ablation] [--corruption] [--json]")
        reports = evaluation.evaluate_classifier(classifiers[0], x_img, x_aud, y)
        result["metrics"] = {k: r.to_json() for k, r in reports.items()}
        text.append(evaluation.render_table(list(reports.values()), f"Test metrics ({args.split})"))
    if args.corruption:
        clf = classifiers[-1]
        records = manifest.split(args.split)
        images = [vision.read_ppm(manifest.resolve(r.image_path)) for r in records]
        frames = [audio.preprocess_clip(audio.read_wav(manifest.resolve(r.audio_path)))[0].samples
                  for r in records]
        bench = evaluation.corruption_benchmark(
            clf, images, frames, y, cfg.image_config(), cfg.spectrogram_config(),
            kinds=tuple(args.kinds), severities=tuple(args.severities),
            audio_noise=tuple(args.audio_noise), seed=args.corruption_seed)
        result["corruption"] = bench
        text.append(evaluation.render_corruption(bench))
    if args.json:
        _emit(result, args.out)
    else:
        _emit("\n".join(text), args.out)
    if args.out:
        _write_run_record(Path(str(args.out) + ".run.json"), "eval", argv, cfg,
                          {"manifest": str(args.manifest), "corpus_hash": manifest.digest(),
                           "checkpoints": {str(p): _sha256_file(p) for p in args.ckpt}},
                          {"report": str(args.out)})


def cmd_predict(args, argv):
    cfg = load_config(args.config)
    clf = _load_multimodal(args.ckpt)
    img = vision.image_to_tensor(vision.read_ppm(args.image), cfg.image_config())
    frame = audio.preprocess_clip(audio.read_wav(args.audio))[0]
    spec = audio.mel_spectrogram(frame, cfg.spectrogram_config()).values[None].astype(np.float32)
    pred = predict_multimodal(clf, img, spec, Path(args.image).stem)
    _emit({"label": pred.label.label, "probs": list(pred.distribution.probs),
           "w_image": clf.fusion.w_image, "w_audio": clf.fusion.w_audio})


def cmd_stream(args, argv):
    cfg = load_config(args.config)
    clf = _load_multimodal(args.ckpt)
    manifest = data.load_manifest(args.manifest)
    records = manifest.split(args.split)
    if args.limit:
        records = records[: args.limit]
    if not records:
        raise config_error(f"manifest has no {args.split!r} records to stream")
    segments = stream.segments_from_manifest(manifest, records)
    events = stream.build_events(segments, args.rate)
    sink = open(args.out, "w") if args.out else sys.stdout

    def write(rec):
        sink.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")
        sink.flush()

    try:
        decisions = stream.replay_stream(events, clf, args.speed, cfg.image_config(),
                                         cfg.spectrogram_config(), on_decision=write)
    finally:
        if args.out:
            sink.close()
    stats = stream.latency_stats(decisions)
    _log("latency_ms " + json.dumps(stats, sort_keys=True))


def cmd_inspect(args, argv):
    path = Path(args.path)
    blob = checkpoint.read(path)
    if blob[:4] == checkpoint.MAGIC:
        header, tensors = checkpoint.decode(blob)
        header["sha256"] = hashlib.sha256(blob).hexdigest()
        _emit(header)
    elif blob[:4] == audio.SRSM_MAGIC:
        m = audio.decode_matrix(blob)
        _emit({"kind": "srsm", "rows": m.shape[0], "cols": m.shape[1],
               "min": float(m.min()), "max": float(m.max())})
    elif path.suffix == ".jsonl":
        manifest = data.load_manifest(path, check_paths=False)
        _emit({"kind": "manifest", "records": len(manifest.records), "class_counts": manifest.class_counts()})
    else:
        raise config_error(f"{path} is not a checkpoint, SRSM matrix or manifest")


# --- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="roadfusion", description="Audio-visual road surface classification.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    g = sub.add_parser("gen-data", help="write a synthetic paired corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--per-class", type=_positive_int("--per-class"), default=100)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--image-size", type=_positive_int("--image-size"), default=96)
    g.add_argument("--fractions", type=float, nargs=3, default=list(data.DEFAULT_FRACTIONS),
                   metavar=("TRAIN", "VAL", "TEST"))
    g.add_argument("--config")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train one unimodal classifier on the train split")
    t.add_argument("--modality", choices=("image", "audio"), required=True)
    t.add_argument("--arch", choices=ARCHITECTURES, required=True)
    t.add_argument("--manifest", required=True)
    t.add_argument("--config")
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=_positive_int("--epochs"))
    t.add_argument("--batch-size", type=_positive_int("--batch-size"))
    t.add_argument("--lr", type=_positive_float("--lr"))
    t.add_argument("--optimizer", choices=("sgd", "adam"))
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    f = sub.add_parser("fuse-train", help="fit fusion weights on the val split")
    f.add_argument("--image-ckpt", required=True)
    f.add_argument("--audio-ckpt", required=True)
    f.add_argument("--manifest", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--config")
    f.add_argument("--epochs", type=_positive_int("--epochs"))
    f.add_argument("--eta", type=_positive_float("--eta"))
    f.add_argument("--w-image", type=_severity)
    f.set_defaults(func=cmd_fuse_train)

    e = sub.add_parser("eval", help="metrics, ablation table and corruption benchmark")
    e.add_argument("--ckpt", action="append", required=True)
    e.add_argument("--manifest", required=True)
    e.add_argument("--split", choices=data.SPLITS, default="test")
    e.add_argument("--ablation", action="store_true")
    e.add_argument("--corruption", action="store_true")
    e.add_argument("--kinds", nargs="+", choices=vision.CORRUPTIONS, default=list(vision.CORRUPTIONS))
    e.add_argument("--severities", nargs="+", type=_severity, default=list(evaluation.DEFAULT_SEVERITIES))
    e.add_argument("--audio-noise", nargs="+", type=float, default=list(evaluation.DEFAULT_AUDIO_NOISE))
    e.add_argument("--corruption-seed", type=int, default=0)
    e.add_argument("--json", action="store_true")
    e.add_argument("--out")
    e.add_argument("--config")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("predict", help="classify one image + audio pair")
    r.add_argument("--ckpt", required=True)
    r.add_argument("--image", required=True)
    r.add_argument("--audio", required=True)
    r.add_argument("--config")
    r.set_defaults(func=cmd_predict)

    s = sub.add_parser("stream", help="replay a split as a timed sensor stream")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--rate", type=_positive_float("--rate"), default=10.0)
    s.add_argument("--speed", type=_positive_float("--speed"), default=1.0)
    s.add_argument("--split", choices=data.SPLITS, default="test")
    s.add_argument("--limit", type=_positive_int("--limit"))
    s.add_argument("--out")
    s.add_argument("--config")
    s.set_defaults(func=cmd_stream)

    i = sub.add_parser("inspect", help="describe a checkpoint, SRSM matrix or manifest")
    i.add_argument("path")
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args, argv)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return EXIT_USAGE
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
