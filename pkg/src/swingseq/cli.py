"""Command-line entry point: ``swingseq <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data or validation error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from dataclasses import asdict
from pathlib import Path

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

log = logging.getLogger("swingseq")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def read_flat_config(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in {"1", "true", "yes", "on"}:
        return True
    if s in {"0", "false", "no", "off"}:
        return False
    raise UsageError(f"not a boolean: {v!r}")


def _opt_int(v):
    return None if v in (None, "", "none", "None") else int(v)


TRAIN_DEFAULTS = {
    "corpus": None, "frames": None, "split_file": None, "folds": "4", "split_seed": "0",
    "d": "160", "T": "64", "lstm_layers": "1", "lstm_hidden": "256", "bidirectional": "true",
    "freeze_k": "10", "pretrained": "false", "backbone_weights": None,
    "batch_size": "24", "iterations": "7000", "lr_initial": "0.001", "lr_drop_iteration": "5000",
    "lr_drop_factor": "10", "no_event_weight": "0.1", "augment": "true", "seed": "0", "loss_csv": None,
}


def _merged(args, defaults: dict, keys) -> dict:
    """CLI flag > config file > built-in default."""
    cfg = dict(defaults)
    if getattr(args, "config", None):
        file_cfg = read_flat_config(args.config)
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    return cfg


# -- subcommands ---------------------------------------------------------------

def cmd_validate(args) -> int:
    from .dataset import load_corpus, validate_annotation

    bad = 0
    for ann in load_corpus(args.corpus):
        for v in validate_annotation(ann):
            print(f"{ann.sample_id}: {v.field}: {v.reason}")
            bad += 1
    print(f"{bad} violation(s)", file=sys.stderr)
    return EXIT_OK if bad == 0 else EXIT_DATA


def cmd_split(args) -> int:
    from .dataset import atomic_write_text, generate_splits, load_corpus

    split = generate_splits(load_corpus(args.corpus), n_folds=args.folds, seed=args.seed)
    text = json.dumps(split.fold_of_sample, indent=2, sort_keys=True)
    if args.out:
        atomic_write_text(args.out, text)
    else:
        print(text)
    return EXIT_OK


def cmd_stats(args) -> int:
    from .dataset import corpus_stats, load_corpus

    print(json.dumps(asdict(corpus_stats(load_corpus(args.corpus))), indent=2))
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synthetic import generate_corpus

    anns, _ = generate_corpus(args.n, seed=args.seed, n_sources=args.sources, out_dir=args.out)
    print(f"wrote {len(anns)} clips to {args.out}")
    return EXIT_OK


def _model_config(cfg: dict):
    from .model import ModelConfig

    return ModelConfig(d=int(cfg["d"]), T=int(cfg["T"]), lstm_layers=int(cfg["lstm_layers"]),
                       lstm_hidden=int(cfg["lstm_hidden"]), bidirectional=_bool(cfg["bidirectional"]),
                       freeze_k=int(cfg["freeze_k"]), pretrained=_bool(cfg["pretrained"]))


def _load_split(cfg, anns):
    from .dataset import SplitAssignment, generate_splits

    if cfg.get("split_file"):
        with open(cfg["split_file"], encoding="utf-8") as f:
            mapping = {k: int(v) for k, v in json.load(f).items()}
        return SplitAssignment(n_folds=max(mapping.values()) + 1, fold_of_sample=mapping, seed=-1)
    return generate_splits(anns, n_folds=int(cfg["folds"]), seed=int(cfg["split_seed"]))


def cmd_train(args) -> int:
    import torch

    from .dataset import atomic_write_text, load_corpus
    from .model import build_model, load_pretrained_backbone, save_checkpoint
    from .preprocess import AugmentParams, DirectoryFrameSource
    from .training import TrainConfig, train

    cfg = _merged(args, TRAIN_DEFAULTS, ["corpus", "frames", "split_file", "seed", "iterations", "batch_size"])
    if not cfg["corpus"] or not cfg["frames"]:
        raise UsageError("train needs corpus and frames (flags or config file)")
    mcfg = _model_config(cfg)
    tcfg = TrainConfig(
        batch_size=int(cfg["batch_size"]), iterations=int(cfg["iterations"]),
        lr_initial=float(cfg["lr_initial"]), lr_drop_iteration=_opt_int(cfg["lr_drop_iteration"]),
        lr_drop_factor=float(cfg["lr_drop_factor"]),
        class_weights=(1.0,) * 8 + (float(cfg["no_event_weight"]),),
        augment=AugmentParams(enabled=_bool(cfg["augment"])), seed=int(cfg["seed"]))
    anns = load_corpus(cfg["corpus"])
    split = _load_split(cfg, anns)
    if not 0 <= args.split < split.n_folds:
        raise UsageError(f"--split must lie in [0, {split.n_folds})")
    torch.manual_seed(tcfg.seed)
    model = build_model(mcfg)
    if mcfg.pretrained:
        if not cfg["backbone_weights"]:
            raise UsageError("pretrained = true requires backbone_weights")
        load_pretrained_backbone(model, torch.load(cfg["backbone_weights"], map_location="cpu", weights_only=True))
    report = train(model, anns, DirectoryFrameSource(cfg["frames"]), tcfg,
                   sample_ids=split.training_ids(args.split))
    save_checkpoint(args.out, model, iteration=tcfg.iterations)
    if cfg["loss_csv"]:
        atomic_write_text(cfg["loss_csv"], report.curve_csv())
    print(f"trained {tcfg.iterations} iterations in {report.wall_time_s:.1f}s -> {args.out}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .complexity import ABLATION_GRID, grid_model_config
    from .dataset import atomic_write_text, load_corpus
    from .preprocess import AugmentParams, DirectoryFrameSource
    from .training import TrainConfig, ablation_csv, run_ablation

    grid = [(grid_model_config(row),
             TrainConfig(batch_size=row["batch"], iterations=args.iterations, seed=args.seed,
                         augment=AugmentParams(enabled=False)))
            for row in ABLATION_GRID]
    anns, frames, split = [], None, None
    if not args.dry_run:
        if not args.corpus or not args.frames:
            raise UsageError("ablate needs --corpus and --frames unless --dry-run")
        anns = load_corpus(args.corpus)
        frames = DirectoryFrameSource(args.frames)
        split = _load_split({"split_file": args.split_file, "folds": 4, "split_seed": args.seed}, anns)
    weights = None
    if args.backbone_weights:
        import torch
        weights = torch.load(args.backbone_weights, map_location="cpu", weights_only=True)
    rows = run_ablation(grid, anns, frames, split, fold=args.fold, backbone_weights=weights,
                        train_models=not args.dry_run)
    text = ablation_csv(rows)
    if args.out:
        atomic_write_text(args.out, text)
    else:
        print(text, end="")
    return EXIT_OK


def _parse_bbox(s):
    try:
        vals = tuple(float(v) for v in s.split(","))
    except ValueError:
        raise UsageError(f"--bbox expects x,y,w,h, got {s!r}") from None
    if len(vals) != 4:
        raise UsageError("--bbox expects four comma-separated values")
    return vals


def cmd_infer(args) -> int:
    from .inference import detect_events, infer_timeline, write_detections, write_timeline
    from .model import load_checkpoint
    from .preprocess import read_frame_dir

    if sum(bool(v) for v in (args.bbox, args.no_bbox, args.corpus)) > 1:
        raise UsageError("--bbox, --no-bbox and --corpus are mutually exclusive")
    sample_id = args.sample_id or Path(args.clip).name
    bbox = _parse_bbox(args.bbox) if args.bbox else None
    if args.corpus:
        from .dataset import load_corpus

        by_id = {a.sample_id: a for a in load_corpus(args.corpus)}
        if sample_id not in by_id:
            raise UsageError(f"sample {sample_id!r} is not in {args.corpus}")
        bbox = by_id[sample_id].bbox
    model, _ = load_checkpoint(args.ckpt)
    frames = read_frame_dir(args.clip)
    T = args.seq_len or model.cfg.T
    timeline = infer_timeline(model, frames, bbox, T)
    det = detect_events(timeline, sample_id=sample_id)
    if args.timeline:
        write_timeline(args.timeline, timeline)
    if args.events:
        write_detections(args.events, [det])
    print(json.dumps(det.to_record()))
    return EXIT_OK


def cmd_eval(args) -> int:
    from .dataset import atomic_write_text, load_corpus
    from .evaluation import pce, report_csv
    from .inference import read_detections

    report = pce(read_detections(args.detections), load_corpus(args.truth), args.fps)
    if args.out:
        atomic_write_text(args.out, report.to_json())
    if args.csv:
        atomic_write_text(args.csv, report_csv(report))
    print(f"PCE {report.overall_pce:.1f} over {report.n_samples} samples")
    return EXIT_OK


def _complexity_row(args):
    from .model import ModelConfig

    return ModelConfig(d=args.d, T=args.seq_len, lstm_layers=args.layers, lstm_hidden=args.hidden,
                       bidirectional=args.bidirectional)


def cmd_params(args) -> int:
    from .complexity import count_params

    cfg = _complexity_row(args)
    print("d,N,H,bidirectional,params")
    print(f"{cfg.d},{cfg.lstm_layers},{cfg.lstm_hidden},{cfg.bidirectional},{count_params(cfg)}")
    return EXIT_OK


def cmd_flops(args) -> int:
    from .complexity import count_flops

    cfg = _complexity_row(args)
    print("d,T,N,H,bidirectional,flops")
    print(f"{cfg.d},{cfg.T},{cfg.lstm_layers},{cfg.lstm_hidden},{cfg.bidirectional},"
          f"{count_flops(cfg, include_elementwise=args.elementwise):.4e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="swingseq", description="Golf swing event sequencing toolkit")
    p.add_argument("--log-level", default="INFO")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("validate", help="check a corpus JSON against the annotation schema")
    s.add_argument("corpus")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("split", help="source-grouped cross-validation folds")
    s.add_argument("corpus")
    s.add_argument("--folds", type=int, default=4)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("stats", help="corpus counts, event density and tempo")
    s.add_argument("corpus")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("synth", help="render a synthetic swing corpus")
    s.add_argument("--n", type=int, default=40)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sources", type=int)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train on all folds but one")
    s.add_argument("--config")
    s.add_argument("--split", type=int, default=0, help="held-out fold")
    s.add_argument("--out", required=True)
    s.add_argument("--corpus")
    s.add_argument("--frames")
    s.add_argument("--split-file", dest="split_file")
    s.add_argument("--iterations", type=int)
    s.add_argument("--batch-size", dest="batch_size", type=int)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("ablate", help="hyper-parameter grid with params/FLOPs/PCE columns")
    s.add_argument("--corpus")
    s.add_argument("--frames")
    s.add_argument("--split-file", dest="split_file")
    s.add_argument("--fold", type=int, default=0)
    s.add_argument("--iterations", type=int, default=10000)
    s.add_argument("--backbone-weights", dest="backbone_weights")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--dry-run", action="store_true", help="only the analytic columns")
    s.add_argument("--out")
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("infer", help="event probabilities and detections for one clip")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--clip", required=True, help="directory of numbered frames")
    s.add_argument("--seq-len", dest="seq_len", type=int)
    s.add_argument("--timeline")
    s.add_argument("--events")
    s.add_argument("--bbox", help="normalized x,y,w,h")
    s.add_argument("--no-bbox", dest="no_bbox", action="store_true", help="center square crop")
    s.add_argument("--corpus", help="take the bbox from this corpus JSON, matched by sample id")
    s.add_argument("--sample-id", dest="sample_id")
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("eval", help="PCE of detections against ground truth")
    s.add_argument("--detections", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--fps", type=float)
    s.add_argument("--out")
    s.add_argument("--csv")
    s.set_defaults(func=cmd_eval)

    for name, func, help_ in (("params", cmd_params, "analytic parameter count"),
                              ("flops", cmd_flops, "analytic FLOPs (1 MAC = 1 FLOP)")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--d", type=int, default=160)
        s.add_argument("--hidden", type=int, default=256)
        s.add_argument("--layers", type=int, default=1)
        s.add_argument("--bidirectional", action="store_true")
        s.add_argument("--seq-len", dest="seq_len", type=int, default=64)
        if name == "flops":
            s.add_argument("--elementwise", action="store_true",
                           help="also count batch-norm, activation, residual and pooling ops")
        s.set_defaults(func=func)
    return p


def run(argv: list[str] | None = None) -> int:
    from .dataset import ConfigurationError
    from .evaluation import PairingError

    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    warnings.simplefilter("ignore", UserWarning)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"swingseq {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PairingError as exc:
        print(f"swingseq {args.command}: pairing error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigurationError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"swingseq {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
