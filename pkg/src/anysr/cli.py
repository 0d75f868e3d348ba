"""Command-line entry points: train, build-tables, infer, eval, flops."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import dispatch, imgio, metrics, pipeline, supernet, train
from .edge import EdgeOperator

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class UsageError(ValueError):
    pass


def _parse_widths(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(w) for w in text.split(","))
    except ValueError as e:
        raise UsageError(f"bad --widths value {text!r}") from e


def _parse_etas(text: str) -> list[float]:
    try:
        return [float(e) for e in text.split(",")]
    except ValueError as e:
        raise UsageError(f"bad --etas value {text!r}") from e


def _edge_op(name: str) -> EdgeOperator:
    try:
        return EdgeOperator(name)
    except ValueError as e:
        raise UsageError(f"unknown edge operator {name!r}") from e


def read_config_file(path) -> dict[str, str]:
    """key = value lines; '#' comments and blank lines ignored."""
    out = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"bad config line: {raw!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


# Flags that a config file may provide defaults for, per command.
_FILE_KEYS = {
    "train": {"data", "out", "widths", "epochs", "batch", "lr", "seed",
              "patch", "stride", "sampling-exp", "no-augment", "threads"},
    "build-tables": {"ckpt", "val", "out", "bins", "edge-op", "patch",
                     "stride", "threads"},
    "infer": {"ckpt", "tables", "data", "out", "eta", "edge-op", "patch",
              "stride", "routing-csv", "threads"},
    "eval": {"ckpt", "tables", "val", "out", "etas", "edge-op", "patch",
             "stride", "threads"},
    "flops": {"widths", "patch"},
}


def _merge_config(args: argparse.Namespace, command: str) -> None:
    """Apply config-file values where the flag was not given on the CLI."""
    if not getattr(args, "config", None):
        return
    cfg = read_config_file(args.config)
    allowed = _FILE_KEYS[command]
    for key, value in cfg.items():
        if key not in allowed:
            raise UsageError(f"unknown config key {key!r} for {command}")
        attr = key.replace("-", "_")
        if getattr(args, attr, None) is None:
            setattr(args, attr, value)


def _require(args, name: str):
    value = getattr(args, name.replace("-", "_"), None)
    if value is None:
        raise UsageError(f"--{name} is required")
    return value


def _load_hr_dataset(directory, patch: int, scale: int, stride: int):
    files = imgio.scan_dataset(directory)
    if not files:
        raise UsageError(f"no images found in {directory}")
    images = [imgio.read_image(p) for p in files]
    ds = train.prepare_patches(images, patch=patch, scale=scale, stride=stride)
    if len(ds) == 0:
        raise UsageError(f"no usable patches in {directory} (images too small?)")
    return ds


def cmd_train(args) -> int:
    data = _require(args, "data")
    out = Path(_require(args, "out"))
    widths = _parse_widths(args.widths or "0.29,0.46,1.0")
    patch = int(args.patch or 32)
    config = supernet.SupernetConfig(widths=widths)
    dataset = _load_hr_dataset(data, patch, config.scale,
                               int(args.stride or train.DEFAULT_HR_STRIDE))
    store = supernet.build(config, seed=int(args.seed or 0))
    tcfg = train.TrainConfig(
        epochs=int(args.epochs or 20), batch=int(args.batch or 16),
        lr=float(args.lr or 1e-3), seed=int(args.seed or 0),
        augment=not bool(args.no_augment))
    scfg = train.SamplerConfig(exponent=float(args.sampling_exp or 2.0))
    loss_log = out.with_suffix(out.suffix + ".loss.log")

    def checkpoint_each_epoch(epoch, last_loss):
        supernet.save_checkpoint(store, out)
        print(f"epoch {epoch + 1}/{tcfg.epochs} loss {last_loss:.5f}")

    losses = train.train(store, dataset, tcfg, scfg, patch=patch,
                         progress=checkpoint_each_epoch)
    supernet.save_checkpoint(store, out)
    loss_log.write_text("".join(f"{x:.8f}\n" for x in losses), encoding="utf-8")
    print(f"trained on {len(dataset)} patches; checkpoint -> {out}")
    return EXIT_OK


def cmd_build_tables(args) -> int:
    ckpt = _require(args, "ckpt")
    val = _require(args, "val")
    out = _require(args, "out")
    store = supernet.load_checkpoint(ckpt)
    patch = int(args.patch or 32)
    dataset = _load_hr_dataset(val, patch, store.config.scale,
                               int(args.stride or train.DEFAULT_HR_STRIDE))
    bins = int(args.bins or dispatch.DEFAULT_BINS)
    op = _edge_op(args.edge_op or "laplacian")
    tables = dispatch.build_tables(
        store, store.config.widths, dataset.pairs, edge_op=op, bins=bins,
        checkpoint_hash=supernet.checkpoint_hash(ckpt))
    costs = dispatch.branch_costs(store.config, (patch, patch))
    dispatch.save_tables(tables, costs, out)
    occupied = int((tables.counts > 0).sum())
    print(f"{len(dataset)} validation patches; edge scores "
          f"[{tables.e_min:.3f}, {tables.e_max:.3f}]; "
          f"{occupied}/{bins} bins occupied; tables -> {out}")
    return EXIT_OK


def _load_tables_for(args, ckpt_path):
    tables, costs = dispatch.load_tables(
        _require(args, "tables"),
        checkpoint_hash=supernet.checkpoint_hash(ckpt_path))
    return tables, costs


def cmd_infer(args) -> int:
    ckpt = _require(args, "ckpt")
    data = _require(args, "data")
    out = _require(args, "out")
    eta = float(args.eta if args.eta is not None else 0.0)
    store = supernet.load_checkpoint(ckpt)
    tables, costs = _load_tables_for(args, ckpt)
    image = imgio.read_image(data)
    op = _edge_op(args.edge_op or tables.edge_op)
    patch = int(args.patch or 32)
    stride = int(args.stride) if args.stride is not None else None
    sr, report = pipeline.sr_image(image, store, tables, costs, eta, op,
                                   patch=patch, stride=stride)
    imgio.write_image(out, sr)
    if args.routing_csv:
        lines = ["y,x,branch"] + [f"{y},{x},{b}" for y, x, b in report.routing]
        Path(args.routing_csv).write_text("\n".join(lines) + "\n",
                                          encoding="utf-8")
    counts = " ".join(f"branch{j}={n}"
                      for j, n in enumerate(report.branch_counts))
    print(f"eta={eta:g} patches={report.total_patches} {counts} "
          f"avg_flops={report.avg_flops:.0f}")
    return EXIT_OK


def _paired_eval_set(directory, scale: int):
    """HR images cropped to a multiple of scale; LR by bicubic downscale."""
    from .resample import resize_bicubic
    files = imgio.scan_dataset(directory)
    if not files:
        raise UsageError(f"no images found in {directory}")
    pairs = []
    for f in files:
        hr = imgio.read_image(f)
        _, h, w = hr.shape
        hr = hr[:, :h - h % scale, :w - w % scale]
        lr = resize_bicubic(hr, hr.shape[1] // scale, hr.shape[2] // scale)
        pairs.append((lr, hr))
    return pairs


def cmd_eval(args) -> int:
    ckpt = _require(args, "ckpt")
    val = _require(args, "val")
    etas = _parse_etas(_require(args, "etas"))
    store = supernet.load_checkpoint(ckpt)
    tables, costs = _load_tables_for(args, ckpt)
    pairs = _paired_eval_set(val, store.config.scale)
    op = _edge_op(args.edge_op or tables.edge_op)
    patch = int(args.patch or 32)
    stride = int(args.stride) if args.stride is not None else None
    rows = metrics.evaluate(pairs, store, tables, costs, etas, op,
                            patch=patch, stride=stride)
    csv = metrics.rows_to_csv(rows)
    if args.out:
        Path(args.out).write_text(csv, encoding="utf-8")
        print(f"wrote {len(rows)} rows -> {args.out}")
    else:
        sys.stdout.write(csv)
    return EXIT_OK


def cmd_flops(args) -> int:
    widths = _parse_widths(args.widths or "0.29,0.46,1.0")
    patch = int(args.patch or 32)
    config = supernet.SupernetConfig(widths=widths)
    full = supernet.flops(config, 1.0, (patch, patch))
    costs = dispatch.branch_costs(config, (patch, patch))
    print(f"interp    flops={costs.values[0] * full:14.0f} "
          f"({100 * costs.values[0]:6.2f}%)")
    for alpha, c in zip(widths, costs.values[1:]):
        f = supernet.flops(config, alpha, (patch, patch))
        print(f"alpha={alpha:<4g} flops={f:14d} ({100 * c:6.2f}%)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anysr",
        description="Any-time super-resolution: width-slicable supernet with "
                    "per-patch computation-performance routing.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value defaults file")
        p.add_argument("--patch", help="LR patch size (default 32)")
        p.add_argument("--stride", help="tiling / extraction stride")
        p.add_argument("--threads", help="worker cap (reserved; single-process)")

    p = sub.add_parser("train", help="train the supernet")
    common(p)
    p.add_argument("--data", help="directory of HR training images")
    p.add_argument("--out", help="output checkpoint path")
    p.add_argument("--widths", help="comma list, e.g. 0.29,0.46,1.0")
    p.add_argument("--epochs")
    p.add_argument("--batch")
    p.add_argument("--lr")
    p.add_argument("--seed")
    p.add_argument("--sampling-exp", help="exponent n of the FLOPs^n sampler")
    p.add_argument("--no-augment", action="store_const", const="1")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("build-tables", help="build edge-to-PSNR lookup tables")
    common(p)
    p.add_argument("--ckpt", help="trained checkpoint")
    p.add_argument("--val", help="directory of HR validation images")
    p.add_argument("--out", help="output tables file (json)")
    p.add_argument("--bins", help="number of edge-score bins (default 30)")
    p.add_argument("--edge-op", choices=[o.value for o in EdgeOperator])
    p.set_defaults(func=cmd_build_tables)

    p = sub.add_parser("infer", help="super-resolve one LR image")
    common(p)
    p.add_argument("--ckpt")
    p.add_argument("--tables")
    p.add_argument("--data", help="input LR image")
    p.add_argument("--out", help="output SR image")
    p.add_argument("--eta", help="budget knob (default 0)")
    p.add_argument("--edge-op", choices=[o.value for o in EdgeOperator])
    p.add_argument("--routing-csv", help="write per-patch routing map here")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="FLOPs-vs-PSNR sweep over a directory")
    common(p)
    p.add_argument("--ckpt")
    p.add_argument("--tables")
    p.add_argument("--val", help="directory of HR images")
    p.add_argument("--etas", help="comma list of eta values")
    p.add_argument("--out", help="CSV output path (default stdout)")
    p.add_argument("--edge-op", choices=[o.value for o in EdgeOperator])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("flops", help="print the FLOPs model per width")
    common(p)
    p.add_argument("--widths", help="comma list, e.g. 0.29,0.46,1.0")
    p.set_defaults(func=cmd_flops)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _merge_config(args, args.command)
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # runtime failure, not a usage problem
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
