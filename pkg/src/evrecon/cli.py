"""Command-line entry point: simulate, degrade, train, reconstruct, evaluate.

Every command first writes ``run-<command>.json`` into ``--out`` holding the
argument vector, the resolved configuration, the seed and hashes of all
inputs. Re-running that argument vector reproduces the outputs bit for bit
when ``--deterministic`` is on (the default).

Exit codes: 0 success, 2 invalid input or configuration, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import contextlib
import datetime as dt
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from . import config as cfgio
from .degrade import RecipeRanges
from .events import EventFormatError, read_stream, write_stream
from .imageio import read_manifest, read_pnm, write_manifest, write_pnm
from .metrics import CSV_COLUMNS, evaluate_sequence
from .model import EvDiff, reconstruct
from .simulator import FrameSequence, SimConfig, simulate
from .training import build_surrogate_corpus, parse_training_config, run_stage

log = logging.getLogger("evrecon")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3
FRAME_MANIFEST = "frames.txt"
PNM_SUFFIXES = (".ppm", ".pgm")


class UsageError(ValueError):
    """Bad arguments or inputs detected before or during a command."""


# ------------------------------------------------------------------ manifests

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def hash_inputs(paths) -> dict[str, str]:
    """sha256 of every input file; directories contribute their files recursively."""
    out = {}
    for p in map(Path, paths):
        files = sorted(q for q in p.rglob("*") if q.is_file()) if p.is_dir() else [p]
        for f in files:
            if f.is_file():
                out[str(f)] = sha256_file(f)
    return out


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="milliseconds")


class RunManifest:
    """JSON record of one invocation, written before the command does any work."""

    def __init__(self, path: Path, command: str, argv: list[str], config: dict,
                 seed: int, deterministic: bool, inputs: dict[str, str]):
        self.path = path
        self.data = {
            "command": command,
            "argv": argv,
            "config": config,
            "seeds": {"seed": seed},
            "deterministic": deterministic,
            "inputs": inputs,
            "version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "started": _now(),
        }
        self._write()

    def finish(self, status: int, outputs: dict | None = None) -> None:
        self.data.update(finished=_now(), exit_code=status, outputs=outputs or {})
        self._write()

    def _write(self) -> None:
        self.path.write_text(json.dumps(self.data, indent=1, sort_keys=True, default=str) + "\n")


def load_run_manifest(path) -> dict:
    return json.loads(Path(path).read_text())


# ------------------------------------------------------------------ helpers

def _config_kv(args) -> dict[str, str]:
    if not args.config:
        return {}
    path = Path(args.config)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    return cfgio.parse_kv(path.read_text())


def _require(path, what: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"{what} not found: {path}")
    return path


def read_frames(src) -> list[np.ndarray]:
    """Frames from a ``timestamp path`` manifest, a directory holding one, or a
    directory of .ppm/.pgm files taken in name order."""
    src = _require(src, "frame source")
    if src.is_dir():
        if (src / FRAME_MANIFEST).exists():
            src = src / FRAME_MANIFEST
        else:
            return [read_pnm(p) for p in sorted(src.iterdir()) if p.suffix.lower() in PNM_SUFFIXES]
    return [read_pnm(p) for _, p in read_manifest(src)]


# ------------------------------------------------------------------ commands

def cmd_simulate(args, out: Path):
    kv = _config_kv(args)
    sim_cfg = cfgio.from_mapping(SimConfig, kv)
    sim_cfg.validate()
    manifest = _require(args.manifest, "video manifest")
    entries = read_manifest(manifest)

    def work():
        seq = FrameSequence.from_manifest(manifest)
        stream = simulate(seq, sim_cfg, np.random.default_rng(args.seed))
        dest = out / args.name
        write_stream(dest, stream)
        log.info("%d events -> %s", len(stream), dest)
        return {"events": str(dest), "count": len(stream)}

    return cfgio.to_mapping(sim_cfg), [manifest] + [p for _, p in entries], work


def cmd_degrade(args, out: Path):
    kv = _config_kv(args)
    size = int(kv.pop("size", args.size))
    unknown = set(kv) - set(cfgio.to_mapping(RecipeRanges()))
    if unknown:
        raise UsageError(f"unknown degrade config keys: {sorted(unknown)}")
    ranges = RecipeRanges.from_dict(kv)
    hq = _require(args.hq_dir, "image directory")

    def work():
        res = build_surrogate_corpus(hq, ranges, args.seed, out, size=size)
        log.info("%d pairs (%d reused, %d skipped) -> %s",
                 len(res.pairs), res.reused, len(res.skipped), res.manifest)
        return {"manifest": str(res.manifest), "pairs": len(res.pairs),
                "reused": res.reused, "skipped": [str(p) for p, _ in res.skipped]}

    return {"size": size, **cfgio.to_mapping(ranges)}, [hq], work


def cmd_train(args, out: Path):
    text = _require(args.config, "config file").read_text() if args.config else ""
    overrides = dict(stage=args.stage, seed=args.seed, out_dir=str(out),
                     deterministic=args.deterministic)
    cfg, model_cfg = parse_training_config(text, **overrides)
    inputs = [p for p in (args.config, cfg.corpus, cfg.init) if p]
    prev = cfg.checkpoint_path(cfg.stage - 1)
    if cfg.stage > 0 and not cfg.init and prev.exists():
        inputs.append(str(prev))
    if cfg.videos != "toy":
        inputs.append(cfg.videos)

    def work():
        res = run_stage(cfg, model_cfg)
        last = res.rows[-1]
        log.info("stage %d done: %s", cfg.stage, {k: v for k, v in last.items() if k.startswith("val")})
        return {"checkpoint": str(res.checkpoint), "metrics": str(res.metrics),
                "final": {k: v for k, v in last.items() if isinstance(v, float)}}

    resolved = cfgio.parse_kv(cfg.to_text(model_cfg))
    return resolved, inputs, work


def cmd_reconstruct(args, out: Path):
    events = _require(args.events, "event file")
    ckpt = _require(args.checkpoint, "checkpoint")
    if args.window_us is None and args.frames is None:
        raise UsageError("give --window-us, --frames or both")
    if args.window_us is not None and args.window_us <= 0:
        raise UsageError("--window-us must be positive")
    if args.frames is not None and args.frames <= 0:
        raise UsageError("--frames must be positive")
    inputs = [events, ckpt]
    if EvDiff.config_path(ckpt).exists():
        inputs.append(EvDiff.config_path(ckpt))
    config = {"window_us": args.window_us, "frames": args.frames, "t0": args.t0}

    def work():
        stream = read_stream(events)
        model = EvDiff.load(ckpt)
        if stream.height % 4 or stream.width % 4:
            raise UsageError(f"sensor size {stream.width}x{stream.height} must be a multiple of 4")
        window, count = args.window_us, args.frames
        if window is None:
            if len(stream) == 0:
                window = 1
            else:
                t0 = stream.t[0] if args.t0 is None else args.t0
                span = int(stream.t[-1]) - int(t0) + 1
                window, count = max(1, -(-span // args.frames)), args.frames
        frames = reconstruct(stream, window, model, t0=args.t0, count=count)
        start = int(stream.t[0]) if args.t0 is None and len(stream) else (args.t0 or 0)
        entries = []
        for i, f in enumerate(frames):
            name = f"{i:05d}.ppm"
            write_pnm(out / name, f)
            entries.append((start + (i + 1) * window - 1, name))
        write_manifest(out / FRAME_MANIFEST, entries)
        log.info("%d frames (window %d us) -> %s", len(frames), window, out)
        return {"frames": len(frames), "window_us": window, "manifest": str(out / FRAME_MANIFEST)}

    return config, inputs, work


def cmd_evaluate(args, out: Path):
    pred, gt = _require(args.pred, "prediction frames"), _require(args.gt, "reference frames")

    def work():
        p, g = read_frames(pred), read_frames(gt)
        if not p or not g:
            raise UsageError("no frames found to evaluate")
        try:
            report = evaluate_sequence(p, g)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        dest = out / "report.csv"
        dest.write_text(report.to_csv())
        print(report.summary())
        return {"report": str(dest), "columns": list(CSV_COLUMNS),
                "mean_mse": report.mean_mse, "mean_ssim": report.mean_ssim}

    return {}, [pred, gt], work


COMMANDS = {
    "simulate": cmd_simulate,
    "degrade": cmd_degrade,
    "train": cmd_train,
    "reconstruct": cmd_reconstruct,
    "evaluate": cmd_evaluate,
}


# ------------------------------------------------------------------ parser

def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # Subcommands repeat the global flags with suppressed defaults so a flag
    # given before the subcommand is not reset by the subparser.
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=d(0), help="unsigned 64-bit seed")
    common.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=d(True),
                        help="single-threaded BLAS for bit-exact replays"
                        + (" (default on)" if suppress else ""))
    common.add_argument("--config", default=d(None), help="key = value config file")
    common.add_argument("--out", default=d("out"), help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(suppress=True)
    parser = argparse.ArgumentParser(prog="evrecon", description=__doc__.splitlines()[0],
                                     parents=[_global_flags(suppress=False)])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="frames -> EVS1 event file")
    p.add_argument("manifest", help="'timestamp_us path' frame manifest")
    p.add_argument("--name", default="events.evs", help="event file name inside --out")

    p = sub.add_parser("degrade", parents=[common], help="clean images -> LQ/HQ training pairs")
    p.add_argument("hq_dir", help="directory of .ppm/.pgm images")
    p.add_argument("--size", type=int, default=64, help="square crop size")

    p = sub.add_parser("train", parents=[common], help="run one training stage")
    p.add_argument("--stage", type=int, required=True, choices=(0, 1, 2, 3))

    p = sub.add_parser("reconstruct", parents=[common], help="events + checkpoint -> PPM frames")
    p.add_argument("events", help="EVS1 or CSV event file")
    p.add_argument("checkpoint", help="model checkpoint (.evdw)")
    p.add_argument("--window-us", type=int, help="window length in microseconds")
    p.add_argument("--frames", type=int,
                   help="number of windows; alone, the stream is split evenly")
    p.add_argument("--t0", type=int, help="first window start (default: first event)")

    p = sub.add_parser("evaluate", parents=[common], help="grayscale MSE/SSIM report")
    p.add_argument("pred", help="predicted frames (directory or manifest)")
    p.add_argument("gt", help="reference frames (directory or manifest)")
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not 0 <= args.seed < 2 ** 64:
        print("evrecon: error: --seed must fit in an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_INVALID
    out = Path(args.out)
    manifest = None
    try:
        config, inputs, work = COMMANDS[args.command](args, out)
        out.mkdir(parents=True, exist_ok=True)
        name = f"run-{args.command}" + (f"-stage{args.stage}" if args.command == "train" else "")
        manifest = RunManifest(out / f"{name}.json", args.command, argv, config, args.seed,
                               args.deterministic, hash_inputs(inputs))
        limits = threadpool_limits(limits=1) if args.deterministic else contextlib.nullcontext()
        with limits:
            outputs = work()
    except (UsageError, EventFormatError, ValueError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"evrecon {args.command}: error: {exc}", file=sys.stderr)
        status, outputs = EXIT_INVALID, {"error": str(exc)}
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        log.debug("runtime failure", exc_info=True)
        print(f"evrecon {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        status, outputs = EXIT_RUNTIME, {"error": f"{type(exc).__name__}: {exc}"}
    else:
        status = EXIT_OK
    if manifest is not None:
        manifest.finish(status, outputs)
    return status


if __name__ == "__main__":
    sys.exit(main())
