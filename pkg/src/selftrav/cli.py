"""Command-line entry point: synth -> labels -> train -> eval -> viz.

Every subcommand resolves its configuration as CLI overrides over a JSON
config file over built-in defaults, writes the resolved result plus a
content digest of its inputs to <out>/run.json, then runs the stage.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import dataset as ds
from .errors import DataError, NumericError, UsageError
from .evaluation import evaluate, render_overlays, write_report
from .geometry.labels import LabelParams, generate_dataset_labels, labeled_frame_ids
from .pipeline import TrainConfig, predict_scores, train
from .synthworld import WorldSpec, generate_world


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with code 2
        raise UsageError(message)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file for this stage")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--workers", type=int, default=1, help="producer parallelism")
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a single config field (repeatable)",
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="selftrav", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    _add_common(p)
    p.add_argument("--trajectory-key", type=int, default=0,
                   help="alternate trajectory through the same world")

    p = sub.add_parser("labels", help="project driven footprints into label masks")
    _add_common(p)
    p.add_argument("--data", required=True, help="dataset root")
    p.add_argument("--horizon", type=float, help="lookahead seconds")
    p.add_argument("--stride", type=float, help="footprint sampling step, seconds")

    p = sub.add_parser("train", help="train the traversability model")
    _add_common(p)
    p.add_argument("--data", help="dataset root (sets dataset_root)")
    p.add_argument("--resume", help="checkpoint to continue from")

    p = sub.add_parser("eval", help="score predictions against ground truth")
    _add_common(p)
    p.add_argument("--pred", help="directory of prediction maps")
    p.add_argument("--gt", help="directory of ground-truth masks")
    p.add_argument("--checkpoint", help="render predictions from this checkpoint")
    p.add_argument("--data", help="dataset root (images/ for rendering, gt/ fallback)")
    p.add_argument("--macro", action="store_true", help="also report per-frame auroc")

    p = sub.add_parser("viz", help="blend score maps over the RGB frames")
    _add_common(p)
    p.add_argument("--pred", required=True, help="directory of prediction maps")
    p.add_argument("--images", required=True, help="directory of RGB frames")
    return parser


def _coerce(field_name: str, raw: str, template) -> object:
    kind = type(getattr(template, field_name))
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes"):
            return True
        if low in ("0", "false", "no"):
            return False
        raise UsageError(f"{field_name} expects a boolean, got {raw!r}")
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is tuple:
            return tuple(int(v) for v in raw.split(","))
    except ValueError as e:
        raise UsageError(f"bad value for {field_name}: {e}") from e
    return raw


def _resolve(cls, args, named_overrides: dict) -> dict:
    """config file < --set pairs < dedicated flags; unknown keys fatal."""
    template = cls()
    known = {f.name for f in dataclasses.fields(cls)}
    raw = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise DataError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise DataError(f"config file {path} is not valid JSON: {e}") from e
        if not isinstance(loaded, dict):
            raise DataError(f"config file {path} must hold a JSON object")
        raw.update(loaded)
    for pair in args.overrides:
        key, sep, value = pair.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {pair!r}")
        if key not in known:
            raise UsageError(f"unknown config key: {key}")
        raw[key] = _coerce(key, value, template)
    for key, value in named_overrides.items():
        if value is not None:
            raw[key] = value
    unknown = sorted(set(raw) - known)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    return raw


def _construct(cls, raw: dict):
    try:
        return cls(**raw)
    except (TypeError, ValueError) as e:
        raise UsageError(f"bad config: {e}") from e


def _write_run_echo(out_dir, command: str, config: dict, input_paths) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "command": command,
        "config": config,
        "inputs_digest": ds.content_digest(input_paths),
    }
    (out / "run.json").write_text(json.dumps(payload, indent=2) + "\n")


def _require_out(args) -> Path:
    if not args.out:
        raise UsageError(f"{args.command} requires --out")
    return Path(args.out)


def _cmd_synth(args) -> int:
    out = _require_out(args)
    raw = _resolve(WorldSpec, args, {"seed": args.seed})
    spec = _construct(WorldSpec, raw)
    config = dataclasses.asdict(spec)
    config["trajectory_key"] = args.trajectory_key
    _write_run_echo(out, "synth", config, [args.config] if args.config else [])
    summary = generate_world(spec, out, trajectory_key=args.trajectory_key)
    print(f"wrote {summary['frames']} frames to {out}")
    return 0


def _cmd_labels(args) -> int:
    root = Path(args.data)
    raw = _resolve(
        LabelParams, args, {"horizon": args.horizon, "stride": args.stride}
    )
    params = _construct(LabelParams, raw)
    out = Path(args.out) if args.out else root / "labels"
    _write_run_echo(
        out,
        "labels",
        dataclasses.asdict(params),
        [root / "calib.json", root / "poses.csv"],
    )
    manifest = generate_dataset_labels(
        root, params, out_dir=out, workers=args.workers
    )
    done = len(labeled_frame_ids(manifest))
    print(f"labeled {done} of {len(manifest['frames'])} frames into {out}")
    return 0


def _cmd_train(args) -> int:
    raw = _resolve(
        TrainConfig,
        args,
        {"dataset_root": args.data, "out_dir": args.out, "seed": args.seed},
    )
    config = TrainConfig.from_dict(raw)
    if not config.dataset_root:
        raise UsageError("train requires --data or dataset_root in the config")
    if not config.out_dir:
        raise UsageError("train requires --out or out_dir in the config")
    root = Path(config.dataset_root)
    _write_run_echo(
        config.out_dir,
        "train",
        config.to_dict(),
        [root / "calib.json", root / "labels" / "manifest.json"]
        + ([args.resume] if args.resume else []),
    )
    state = train(config, resume_from=args.resume)
    final = Path(config.out_dir) / "checkpoint_final.pkl"
    last = state.history[-1]["loss"] if state.history else float("nan")
    print(f"finished step {state.step} (loss {last:.6f}); checkpoint {final}")
    return 0


def _reject_config_flags(args) -> None:
    if args.config or args.overrides:
        raise UsageError(f"{args.command} takes no --config or --set settings")


def _cmd_eval(args) -> int:
    out = _require_out(args)
    _reject_config_flags(args)
    gt_dir = Path(args.gt) if args.gt else None
    if gt_dir is None and args.data:
        gt_dir = Path(args.data) / "gt"
    if gt_dir is None:
        raise UsageError("eval requires --gt (or --data with a gt/ directory)")

    if args.pred:
        pred_dir = Path(args.pred)
        inputs = [pred_dir, gt_dir]
    elif args.checkpoint and args.data:
        pred_dir = out / "pred"
        inputs = [Path(args.checkpoint), gt_dir]
    else:
        raise UsageError("eval requires --pred, or --checkpoint with --data")

    _write_run_echo(
        out,
        "eval",
        {
            "pred": str(args.pred) if args.pred else str(out / "pred"),
            "gt": str(gt_dir),
            "checkpoint": args.checkpoint,
            "data": args.data,
            "macro": bool(args.macro),
        },
        inputs,
    )
    if not args.pred:
        predict_scores(args.checkpoint, args.data, pred_dir)
    report = evaluate(pred_dir, gt_dir, macro=args.macro)
    write_report(report, out)
    images_dir = Path(args.data) / "images" if args.data else None
    if images_dir is not None and images_dir.is_dir():
        render_overlays(pred_dir, images_dir, out / "overlays")
    print(
        f"auroc={report.auroc:.6f} auprc={report.auprc:.6f} "
        f"best_f1={report.best_f1:.6f} -> {out / 'report.json'}"
    )
    return 0


def _cmd_viz(args) -> int:
    out = _require_out(args)
    _reject_config_flags(args)
    _write_run_echo(
        out,
        "viz",
        {"pred": args.pred, "images": args.images},
        [Path(args.pred), Path(args.images)],
    )
    written = render_overlays(args.pred, args.images, out / "overlays")
    print(f"rendered {len(written)} overlays into {out / 'overlays'}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "labels": _cmd_labels,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "viz": _cmd_viz,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except SystemExit as e:  # argparse --help
        return 0 if e.code in (0, None) else 1
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
