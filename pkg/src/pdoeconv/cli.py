"""Command-line entry point: ``pdoeconv <subcommand> ...``.

Every subcommand accepts ``--json`` to emit a single JSON object on stdout.
The PDEQ_THREADS environment variable caps BLAS worker threads.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .data_io import DataFormatError, read_amat, read_idx, rotate_dataset, synth_rotated_shapes
from .equiv_harness import convergence_study, exact_grid_check
from .group2d import is_grid_symmetry, parse_group
from .kernels import GroupConvBank, LiftingBank, init_beta, synthesize_kernel
from .pdo import canonical_poly, transform_poly
from .stencils import all_stencils

log = logging.getLogger("pdoeconv")

ORDER_FLOOR = 1.7
EXACT_TOL = 1e-10
SYNTH_TRAIN_SEED, SYNTH_TEST_SEED = 1, 2


class CliError(Exception):
    pass


def _emit(args, payload: dict, text: str):
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        print(text)


# data loading

def load_split(spec: str, split: str, args) -> "LabeledDataset":
    """``synth`` | directory of MNIST IDX files | ``.amat`` file."""
    if spec == "synth":
        count = args.train_size if split == "train" else args.test_size
        seed = SYNTH_TRAIN_SEED if split == "train" else SYNTH_TEST_SEED
        return synth_rotated_shapes(count, args.classes, seed=seed, split=split)
    path = Path(spec)
    if path.is_file() and path.suffix == ".amat":
        return read_amat(path, split)
    if path.is_dir():
        if split == "train":
            names = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
        else:
            names = ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
        images, labels = path / names[0], path / names[1]
        if not images.exists():
            raise CliError(f"{images} not found")
        return read_idx(images, labels, split)
    raise CliError(f"cannot read data from {spec!r} (expected 'synth', an IDX directory or an .amat file)")


# subcommands

def cmd_stencils(args) -> int:
    bank = all_stencils()
    payload = {"stencils": [{"name": s.name, "deriv": list(s.deriv), "scale_power": s.mesh_power,
                             "mask": [[str(x) for x in row] for row in s.exact]} for s in bank]}
    if args.dump:
        text = "\n\n".join(s.format() for s in bank)
    else:
        text = " ".join(s.name for s in bank)
    _emit(args, payload, text)
    return 0


def cmd_kernels(args) -> int:
    group = parse_group(args.group)
    beta = init_beta(1, 1, 1, args.seed)[0, 0, 0]
    poly = canonical_poly(beta)
    entries, lines = [], [f"group {group.spec}, seed {args.seed}", f"beta = {np.array2string(beta, precision=6)}"]
    for A in group:
        k = synthesize_kernel(beta, A, args.h)
        entry = {"element": A.label, "mask": k.mask.tolist()}
        if args.dump_polys:
            entry["operator"] = str(transform_poly(poly, A))
        entries.append(entry)
        if args.dump or args.dump_polys:
            lines.append(f"[{A.label}]")
            if args.dump_polys:
                lines.append("  " + entry["operator"])
            if args.dump:
                lines += ["  " + " ".join(f"{v:10.4f}" for v in row) for row in k.mask]
    if not (args.dump or args.dump_polys):
        lines.append(f"{len(group)} kernels of size 5x5 (use --dump to print them)")
    _emit(args, {"group": group.spec, "seed": args.seed, "h": args.h, "beta": beta.tolist(), "kernels": entries},
          "\n".join(lines))
    return 0


def cmd_check(args) -> int:
    group = parse_group(args.group)
    try:
        element = group.element(args.element)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    if is_grid_symmetry(element):
        rng = np.random.default_rng(args.seed)
        g = len(group)
        lift = exact_grid_check(LiftingBank(group, rng.normal(size=(2, 2, 9))), element, seed=args.seed)
        conv = exact_grid_check(GroupConvBank(group, rng.normal(size=(2, 2, g, 9))), element, seed=args.seed)
        err = max(lift, conv)
        ok = err < EXACT_TOL
        payload = {"group": group.spec, "element": element.label, "mode": "exact",
                   "lifting_error": lift, "groupconv_error": conv, "error": err, "tolerance": EXACT_TOL, "pass": ok}
        text = (f"exact grid check, group {group.spec}, element {element.label}\n"
                f"lifting error {lift:.3e}, group conv error {conv:.3e} (tolerance {EXACT_TOL:g}): "
                f"{'PASS' if ok else 'FAIL'}")
        _emit(args, payload, text)
        return 0 if ok else 1
    resolutions = [int(r) for r in args.resolutions.split(",")]
    kinds = ["lifting", "groupconv"] if args.kind == "both" else [args.kind]
    reports = [convergence_study(group, element, resolutions, args.seed, args.draws, kind) for kind in kinds]
    worst = min(r.min_order for r in reports)
    ok = worst >= ORDER_FLOOR
    payload = {"group": group.spec, "element": element.label, "mode": "convergence",
               "reports": [r.to_json() for r in reports], "min_order": worst, "order_floor": ORDER_FLOOR, "pass": ok}
    text = "\n\n".join(r.table() for r in reports)
    text += f"\n\nminimum fitted order {worst:.3f} (floor {ORDER_FLOOR}): {'PASS' if ok else 'FAIL'}"
    _emit(args, payload, text)
    return 0 if ok else 1


def _model_config(args):
    from .tensor_ops import ModelConfig

    return ModelConfig(
        group=args.group,
        widths=tuple(int(w) for w in args.widths.split(",")),
        pool_after=tuple(int(i) for i in args.pool_after.split(",")) if args.pool_after else (),
        num_classes=args.classes if args.data == "synth" else 10,
        kernel_size=args.kernel_size,
        epochs=args.epochs,
        lr=args.lr,
        optimizer=args.optimizer,
        weight_decay=args.weight_decay,
        batch_size=args.batch_size,
        seed=args.seed,
        dtype=args.dtype,
    )


def cmd_train(args) -> int:
    from .tensor_ops import save_checkpoint, train

    cfg = _model_config(args)
    train_ds = load_split(args.data, "train", args)
    try:
        val_ds = load_split(args.data, "test", args)
    except CliError:
        val_ds = None
    cfg.num_classes = max(cfg.num_classes, train_ds.num_classes)
    start = time.perf_counter()
    progress = None if args.json else (
        lambda row: print(f"epoch {row[0]:3d}  train {row[1]:.4f}  val {row[2]:.4f}  loss {row[3]:.4f}", flush=True))
    result = train(cfg, train_ds, val_ds, progress)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out, result, extra={"data": args.data})
    csv_path = Path(args.csv) if args.csv else out.with_suffix(".csv")
    csv_path.write_text(result.metrics_csv())
    payload = {"checkpoint": str(out), "csv": str(csv_path), "config": cfg.to_json(),
               "parameters": result.model.num_parameters(), "log": [list(r) for r in result.log],
               "seconds": round(time.perf_counter() - start, 3)}
    _emit(args, payload, f"wrote {out} and {csv_path} ({result.model.num_parameters()} parameters)")
    return 0


def cmd_eval(args) -> int:
    from .tensor_ops import accuracy, load_checkpoint

    res = load_checkpoint(args.ckpt)
    cfg = res.config
    args.classes = cfg.num_classes
    test = load_split(args.data, "test", args)
    acc = accuracy(res.model, test.images, test.labels, res.normalizer, dtype=cfg.dtype)
    payload = {"checkpoint": args.ckpt, "group": cfg.group, "count": len(test), "accuracy": acc}
    text = f"{cfg.group} model on {len(test)} test images: accuracy {acc:.4f}"
    if args.rotate_test:
        rotated = rotate_dataset(test, args.seed)
        racc = accuracy(res.model, rotated.images, rotated.labels, res.normalizer, dtype=cfg.dtype)
        payload["rotated_accuracy"] = racc
        text += f", rotated accuracy {racc:.4f}"
    _emit(args, payload, text)
    return 0


# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdoeconv", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--json", action="store_true", help="emit one JSON object")
        p.set_defaults(func=func)
        return p

    p = add("stencils", cmd_stencils, "list or print the 15 finite-difference stencils")
    p.add_argument("--dump", action="store_true", help="print every mask with its scale")

    p = add("kernels", cmd_kernels, "synthesize one kernel per group element from a random beta")
    p.add_argument("--group", default="p4")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", type=float, default=1.0, help="mesh size")
    p.add_argument("--dump", action="store_true", help="print the 5x5 masks")
    p.add_argument("--dump-polys", action="store_true", help="print the transformed operators")

    p = add("check-equivariance", cmd_check, "equivariance error study for one group element")
    p.add_argument("--group", default="p8")
    p.add_argument("--element", default="r1")
    p.add_argument("--resolutions", default="32,64,128,256")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--draws", type=int, default=5)
    p.add_argument("--kind", choices=["lifting", "groupconv", "both"], default="both")

    for name, func, help_text in [("train", cmd_train, "train a classifier and write a checkpoint"),
                                  ("eval", cmd_eval, "evaluate a checkpoint")]:
        p = add(name, func, help_text)
        p.add_argument("--data", required=True, help="'synth', an IDX directory or an .amat file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--classes", type=int, default=3, help="synthetic glyph classes")
        p.add_argument("--train-size", type=int, default=2000)
        p.add_argument("--test-size", type=int, default=1000)
        if name == "train":
            p.add_argument("--group", default="p4", help="pN / pNm, or 'cnn' for the plain baseline")
            p.add_argument("--epochs", type=int, default=10)
            p.add_argument("--out", required=True, help="checkpoint path")
            p.add_argument("--csv", help="metrics log (default: checkpoint path with .csv)")
            p.add_argument("--widths", default="8,12,16,16")
            p.add_argument("--pool-after", default="0,1")
            p.add_argument("--kernel-size", type=int, default=3, help="plain baseline only")
            p.add_argument("--lr", type=float, default=1e-2)
            p.add_argument("--optimizer", choices=["adam", "sgd"], default="adam")
            p.add_argument("--weight-decay", type=float, default=0.0)
            p.add_argument("--batch-size", type=int, default=32)
            p.add_argument("--dtype", choices=["float32", "float64"], default="float32")
        else:
            p.add_argument("--ckpt", required=True)
            p.add_argument("--rotate-test", action="store_true", help="also score randomly rotated test images")
    return parser


def _thread_limit():
    value = os.environ.get("PDEQ_THREADS")
    if not value:
        return None
    try:
        n = int(value)
    except ValueError:
        raise CliError(f"PDEQ_THREADS must be a positive integer, got {value!r}") from None
    if n < 1:
        raise CliError(f"PDEQ_THREADS must be a positive integer, got {value!r}")
    return n


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        threads = _thread_limit()
        if threads is None:
            return args.func(args)
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=threads):
            return args.func(args)
    except (CliError, DataFormatError, ValueError, OSError) as exc:
        print(f"pdoeconv {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
