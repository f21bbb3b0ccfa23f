"""Command-line entry point: ``pseudosign <command> [options]``.

Commands: ``gen-corpus``, ``build-dataset``, ``train``, ``mesh``, ``eval``.
Any command accepts ``--config file.json``; keys are option names with
dashes replaced by underscores, and explicit flags override them. Every run
that writes files also writes ``<out>.config.json`` with the fully resolved
options. Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from pathlib import Path
from typing import Sequence

from threadpoolctl import threadpool_limits

log = logging.getLogger("pseudosign")

THREADS_ENV = "PSEUDOSIGN_THREADS"


class UsageError(Exception):
    pass


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of option defaults (flags win)")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pseudosign", description="Iterative pseudo-sign meshing of UDFs")
    parser.add_argument("--threads", type=int, default=None,
                        help=f"BLAS threads (default: ${THREADS_ENV} or all cores; 1 = reproducibility mode)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="write a seeded procedural shape corpus")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=80)

    p = sub.add_parser("build-dataset", help="sample and label a corpus into a UDFD file")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--res", type=int, default=128)
    p.add_argument("--clamp", type=float, default=0.1)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train the cell classifier")
    _add_common(p)
    p.add_argument("--corpus", help="corpus JSON (or use --dataset)")
    p.add_argument("--dataset", help="prebuilt UDFD dataset file")
    p.add_argument("--res", type=int, default=128)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--max-extra-iters", type=int, default=5)
    p.add_argument("--noise-sigma", type=float, default=1.0)
    p.add_argument("--clamp", type=float, default=0.1)
    p.add_argument("--precision", choices=["float32", "float64"], default="float32",
                   help="arithmetic used for forward/backward passes")
    p.add_argument("--log", help="CSV loss log (default: <out>.log.csv)")
    p.add_argument("--out", required=True, help="weight file to write")

    p = sub.add_parser("mesh", help="mesh one shape")
    _add_common(p)
    p.add_argument("--weights")
    p.add_argument("--shape", required=True, help="shape JSON file or inline JSON")
    p.add_argument("--index", type=int, default=0, help="shape index when --shape holds a list")
    p.add_argument("--res", type=int, default=128)
    p.add_argument("--iters", type=int, default=6)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--clamp", type=float, default=0.1)
    p.add_argument("--freeze", type=float, default=0.999, help="confidence freeze threshold")
    p.add_argument("--no-freeze", action="store_true", help="re-evaluate every active cell each iteration")
    p.add_argument("--frozen-feedback", choices=["beliefs", "zeros"], default="beliefs")
    p.add_argument("--precision", choices=["float32", "float64"], default="float32")
    p.add_argument("--snapshots", action="store_true", help="also write <out>_iter{i}.obj per iteration")
    p.add_argument("--snapshot-dump", help="write per-iteration categories (UDFD layout)")
    p.add_argument("--oracle", action="store_true", help="mesh true signs, bypassing the network")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="Chamfer / F1 of predicted against ground-truth meshes")
    _add_common(p)
    p.add_argument("--pred", required=True, help="OBJ file or directory")
    p.add_argument("--gt", required=True, help="OBJ file or directory")
    p.add_argument("--samples", type=int, default=200_000)
    p.add_argument("--tau", type=float, default=0.003)
    return parser


def parse_args(argv: Sequence[str] | None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read --config: {exc}")
        sub = parser._subparsers._group_actions[0].choices[args.command]  # type: ignore[union-attr]
        known = {a.dest for a in sub._actions}
        unknown = set(cfg) - known
        if unknown:
            parser.error(f"unknown keys in --config: {sorted(unknown)}")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def _write_config(args: argparse.Namespace, out: str) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items())}
    Path(str(out) + ".config.json").write_text(json.dumps(resolved, indent=1, sort_keys=True) + "\n")
    log.info("resolved config: %s", json.dumps(resolved, sort_keys=True))


def _load_shape(text: str, index: int):
    from .field import from_dict

    path = Path(text)
    try:
        data = json.loads(path.read_text()) if path.exists() else json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"--shape is neither a JSON file nor inline JSON: {exc}") from exc
    if isinstance(data, list):
        if not 0 <= index < len(data):
            raise UsageError(f"--index {index} out of range for {len(data)} shapes")
        data = data[index]
    return from_dict(data)


def cmd_gen_corpus(args) -> int:
    from .corpus import generate_corpus, save_corpus

    if args.count < 0:
        raise UsageError("--count must be >= 0")
    if args.count == 0:
        log.warning("writing an empty corpus")
    save_corpus(generate_corpus(args.count, args.seed), args.out)
    _write_config(args, args.out)
    return 0


def cmd_build_dataset(args) -> int:
    from .corpus import load_corpus
    from .field import GridSpec
    from .trainer import build_dataset, save_dataset

    if not Path(args.corpus).is_file():
        raise UsageError(f"corpus not found: {args.corpus}")
    ds = build_dataset(load_corpus(args.corpus), GridSpec(args.res), args.clamp)
    save_dataset(ds, args.out)
    _write_config(args, args.out)
    return 0


def cmd_train(args) -> int:
    from . import nnet
    from .corpus import load_corpus
    from .field import GridSpec
    from .trainer import TrainConfig, build_dataset, load_dataset, train, write_history

    if args.dataset:
        if not Path(args.dataset).is_file():
            raise UsageError(f"dataset not found: {args.dataset}")
        ds = load_dataset(args.dataset)
    else:
        if not args.corpus or not Path(args.corpus).is_file():
            raise UsageError(f"corpus not found: {args.corpus}")
        ds = build_dataset(load_corpus(args.corpus), GridSpec(args.res), args.clamp)
    cfg = TrainConfig(epochs=args.epochs, lr=args.lr, max_extra_iters=args.max_extra_iters,
                      noise_sigma=args.noise_sigma, seed=args.seed, clamp=args.clamp,
                      resolution=args.res, compute_dtype=args.precision)
    result = train(cfg, ds, progress=lambda e, s, r, l: log.info("epoch %d shape %d iters %d loss %.5f", e, s, r, l))
    nnet.save_weights(result.model, args.out)
    write_history(result.history, args.log or f"{args.out}.log.csv")
    _write_config(args, args.out)
    return 0


def _iter_path(out: str, i: int) -> Path:
    p = Path(out)
    return p.with_name(f"{p.stem}_iter{i}{p.suffix or '.obj'}")


def cmd_mesh(args) -> int:
    from . import nnet
    from .field import GridSpec
    from .mesher import mesh_oracle, write_obj
    from .pipeline import dump_snapshots, mesh_source
    from .refiner import RefineConfig

    source = _load_shape(args.shape, args.index)
    spec = GridSpec(args.res)
    if args.oracle:
        write_obj(mesh_oracle(source, spec), args.out)
        _write_config(args, args.out)
        return 0
    if not args.weights:
        raise UsageError("--weights is required unless --oracle is given")
    if not Path(args.weights).is_file():
        raise UsageError(f"weights not found: {args.weights}")
    model = nnet.load_weights(args.weights)
    cfg = RefineConfig(iterations=args.iters, clamp=args.clamp, freeze_threshold=args.freeze,
                       freeze=not args.no_freeze, frozen_feedback=args.frozen_feedback,
                       noise_sigma=args.noise_sigma, seed=args.seed, compute_dtype=args.precision)
    result = mesh_source(model, source, spec, cfg, snapshots=args.snapshots)
    write_obj(result.mesh, args.out)
    if args.snapshots:
        for i, m in enumerate(result.meshes, 1):
            write_obj(m, _iter_path(args.out, i))
    if args.snapshot_dump:
        dump_snapshots(result, args.snapshot_dump)
    log.info("active cells %d, forward passes per iteration %s, open edges %d",
             len(result.state.cells), result.state.forward_passes, result.mesh.boundary_edge_count())
    _write_config(args, args.out)
    return 0


_ITER_RE = re.compile(r"^(?P<name>.*)_iter(?P<it>\d+)$")


def cmd_eval(args) -> int:
    from .mesher import read_obj
    from .metrics import csv_rows, evaluate, summarize

    pred, gt = Path(args.pred), Path(args.gt)
    for p in (pred, gt):
        if not p.exists():
            raise UsageError(f"not found: {p}")
    if pred.is_dir():
        if not gt.is_dir():
            raise UsageError("--gt must be a directory when --pred is")
        rows = []
        for f in sorted(pred.glob("*.obj")):
            m = _ITER_RE.match(f.stem)
            name, it = (m["name"], int(m["it"])) if m else (f.stem, "final")
            g = gt / f"{name}.obj"
            if not g.is_file():
                log.warning("no ground truth for %s", f.name)
                continue
            rows.append((f.stem, it, evaluate(read_obj(f), read_obj(g), args.samples, args.seed, args.tau)))
        if not rows:
            raise UsageError("no matching prediction / ground-truth pairs")
        summary = summarize([r for _, _, r in rows])
        rows += [("median", "all", summary["median"]), ("mean", "all", summary["mean"])]
    else:
        rows = [(pred.stem, "final", evaluate(read_obj(pred), read_obj(gt), args.samples, args.seed, args.tau))]
    sys.stdout.write(csv_rows(rows))
    return 0


COMMANDS = {"gen-corpus": cmd_gen_corpus, "build-dataset": cmd_build_dataset, "train": cmd_train,
            "mesh": cmd_mesh, "eval": cmd_eval}


def main(argv: Sequence[str] | None = None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    threads = args.threads
    if threads is None and os.environ.get(THREADS_ENV):
        threads = int(os.environ[THREADS_ENV])
    try:
        with threadpool_limits(limits=threads):
            return COMMANDS[args.command](args)
    except UsageError as exc:
        build_parser().print_usage(sys.stderr)
        print(f"pseudosign: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report and fail with exit 1
        log.debug("failure", exc_info=True)
        print(f"pseudosign: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
