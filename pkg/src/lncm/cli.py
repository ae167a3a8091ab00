"""Command-line surface tying the pipeline together.

Subcommands: train-intra, train-interp, train-chroma, collapse, verify,
derive-filters, contrib-map, predict, bdrate, report.  Training commands
take a ``key = value`` config file (see :mod:`lncm.config`); everything is
deterministic given the config and its seed.

Exit codes: 0 success, 1 usage error, 2 data/parse error, 3 equivalence
verification failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from . import chroma as chroma_mod
from . import interp as interp_mod
from .collapse import (AffineMap, ConvStack, LinearFcn, collapse_affine,
                       collapse_conv, count_params, verify_equivalence)
from .chroma import ChromaHybridModel, ChromaHybridRegressor, harvest_chroma
from .config import Field, boolean, read_config
from .errors import DataError, IoError, LncmError, ParseError
from .interp import (QUARTER_POSITIONS, QuarterPelFilterSet, SrcnnLinearRegressor,
                     default_filter_bank, derive_filters, evaluate_filter_set,
                     gen_training_pairs)
from .intra import (IntraFcnRegressor, contribution_map, extract_references,
                    harvest_blocks, predict_block)
from .metrics import bd_rate, psnr, read_rd_csv
from .model_io import (read_filter_set, read_model, write_filter_set, write_model)
from .pgm import read_pgm, write_pgm
from .tensor_core import Kernel, Plane, clip_plane

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFY = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _read_manifest(path, columns: int = 1) -> list:
    """Paths from a manifest file, one record per line, resolved relative
    to the manifest's directory.  '#' comments and blank lines allowed."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoError(f"cannot read manifest {path}: {exc}") from exc
    base = path.parent
    records = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != columns:
            raise ParseError(f"{path}: expected {columns} path(s) per line",
                             line=lineno)
        resolved = tuple(base / p for p in parts)
        records.append(resolved[0] if columns == 1 else resolved)
    if not records:
        raise DataError(f"manifest {path} lists no files")
    return records


def _write_log_csv(path, rows, header) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def cmd_train_intra(args) -> int:
    cfg = read_config(args.config, {
        "manifest": Field(str),
        "block_size": Field(int),
        "hidden": Field(int, 96),
        "epochs": Field(int, 1500),
        "learning_rate": Field(float, 0.02),
        "batch_size": Field(int, 0),
        "seed": Field(int, 0),
        "stride": Field(int, 0),
        "out_model": Field(str),
        "log_csv": Field(str, ""),
    })
    base = Path(args.config).parent
    n = cfg["block_size"]
    frames = [read_pgm(p) for p in _read_manifest(base / cfg["manifest"])]
    stride = cfg["stride"] or n
    (x_tr, y_tr), (x_ho, y_ho) = harvest_blocks(frames, n, stride)
    reg = IntraFcnRegressor(
        hidden=cfg["hidden"], epochs=cfg["epochs"],
        learning_rate=cfg["learning_rate"],
        batch_size=cfg["batch_size"] or None,
        random_state=cfg["seed"],
    ).fit(x_tr, y_tr)
    write_model(base / cfg["out_model"], reg.net_)
    if cfg["log_csv"]:
        _write_log_csv(base / cfg["log_csv"],
                       [(i, f"{v:.17g}") for i, v in enumerate(reg.loss_curve_)],
                       ["epoch", "mse"])
    train_mse = float(np.mean((reg.predict(x_tr) - y_tr) ** 2))
    print(f"trained intra FCN n={n} on {x_tr.shape[0]} blocks "
          f"({x_ho.shape[0]} held out), train_mse={train_mse:.6g}")
    print(f"wrote {base / cfg['out_model']}")
    return EXIT_OK


def cmd_train_interp(args) -> int:
    cfg = read_config(args.config, {
        "manifest": Field(str),
        "epochs": Field(int, 400),
        "learning_rate": Field(float, 0.01),
        "seed": Field(int, 0),
        "scale": Field(int, 4),
        "patch": Field(int, 0),
        "out_dir": Field(str),
        "log_csv": Field(str, ""),
    })
    base = Path(args.config).parent
    frames = [read_pgm(p) for p in _read_manifest(base / cfg["manifest"])]
    out_dir = base / cfg["out_dir"]
    out_dir.mkdir(parents=True, exist_ok=True)
    log_rows = []
    for pos in QUARTER_POSITIONS:
        pairs = []
        for hr in frames:
            pairs.extend(gen_training_pairs(hr, pos, cfg["scale"],
                                            cfg["patch"] or None))
        reg = SrcnnLinearRegressor(
            position=pos, epochs=cfg["epochs"],
            learning_rate=cfg["learning_rate"], random_state=cfg["seed"],
        ).fit([p for p, _ in pairs], [t for _, t in pairs])
        write_model(out_dir / f"interp_{pos.tag}.lncm", reg.stack_)
        log_rows.extend((pos.tag, i, f"{v:.17g}")
                        for i, v in enumerate(reg.loss_curve_))
        print(f"{pos.tag}: final_mse={reg.loss_curve_[-1]:.6g}")
    if cfg["log_csv"]:
        _write_log_csv(base / cfg["log_csv"], log_rows, ["position", "epoch", "mse"])
    print(f"wrote 15 models to {out_dir}")
    return EXIT_OK


def cmd_train_chroma(args) -> int:
    cfg = read_config(args.config, {
        "manifest": Field(str),
        "epochs": Field(int, 400),
        "learning_rate": Field(float, 0.02),
        "ae_epochs": Field(int, 300),
        "ae_learning_rate": Field(float, 0.01),
        "temperature": Field(float, math.sqrt(3.0)),
        "seed": Field(int, 0),
        "stride": Field(int, 8),
        "out_model": Field(str),
        "log_csv": Field(str, ""),
    })
    base = Path(args.config).parent
    samples = []
    for y_path, u_path, v_path in _read_manifest(base / cfg["manifest"], columns=3):
        samples.extend(harvest_chroma(read_pgm(y_path), read_pgm(u_path),
                                      read_pgm(v_path), stride=cfg["stride"]))
    reg = ChromaHybridRegressor(
        epochs=cfg["epochs"], learning_rate=cfg["learning_rate"],
        ae_epochs=cfg["ae_epochs"], ae_learning_rate=cfg["ae_learning_rate"],
        temperature=cfg["temperature"], random_state=cfg["seed"],
    ).fit([s for s, _ in samples], [t for _, t in samples])
    write_model(base / cfg["out_model"], reg.model_)
    if cfg["log_csv"]:
        _write_log_csv(base / cfg["log_csv"],
                       [(i, f"{v:.17g}") for i, v in enumerate(reg.loss_curve_)],
                       ["epoch", "mse"])
    rep = count_params(reg.model_)
    print(f"trained joint chroma model on {len(samples)} blocks, "
          f"final_mse={reg.loss_curve_[-1]:.6g}, params={rep.param_count}, "
          f"ae_reconstruction_mse={reg.ae_reconstruction_mse_:.6g}")
    print(f"wrote {base / cfg['out_model']}")
    return EXIT_OK


def cmd_collapse(args) -> int:
    model = read_model(args.model_in)
    if isinstance(model, (AffineMap, LinearFcn)):
        collapsed = collapse_affine(model)
    elif isinstance(model, (Kernel, ConvStack)):
        collapsed = collapse_conv(model)
    else:
        raise DataError("chroma hybrid models are already in simplified form; "
                        "nothing to collapse")
    before = count_params(model)
    after = count_params(collapsed)
    write_model(args.model_out, collapsed)
    print(f"kind: {type(model).__name__} -> {type(collapsed).__name__}")
    print(f"param_count: {before.param_count} -> {after.param_count}")
    print(f"mac_per_output_sample: {before.mac_count_per_output_sample} "
          f"-> {after.mac_count_per_output_sample}")
    print(f"wrote {args.model_out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    a = read_model(args.model_a)
    b = read_model(args.model_b)
    report = verify_equivalence(a, b, n_trials=args.trials, tol=args.tol,
                                seed=args.seed)
    print(f"max_rel_error={report.max_rel_error:.6e} tol={report.tol:g} "
          f"trials={report.n_trials} pass={report.passed}")
    return EXIT_OK if report.passed else EXIT_VERIFY


def cmd_derive_filters(args) -> int:
    models_dir = Path(args.models_dir)
    models = {}
    for pos in QUARTER_POSITIONS:
        path = models_dir / f"interp_{pos.tag}.lncm"
        if not path.exists():
            raise IoError(f"missing model file {path}")
        model = read_model(path)
        if isinstance(model, Kernel):
            model = ConvStack((model,))
        if not isinstance(model, ConvStack):
            raise DataError(f"{path} does not contain a conv stack")
        models[pos] = model
    fset, report = derive_filters(models, normalize_dc=args.normalize_dc)
    write_filter_set(args.out_file, fset)
    if args.taps_csv:
        rows = []
        for pos in QUARTER_POSITIONS:
            taps = fset[pos].taps[0, 0]
            rows.extend((pos.tag, ky, kx, f"{taps[ky, kx]:.17g}")
                        for ky in range(taps.shape[0])
                        for kx in range(taps.shape[1]))
        _write_log_csv(args.taps_csv, rows, ["position", "ky", "kx", "tap"])
    max_bias = max(abs(v) for v in report.dropped_bias.values())
    print(f"derived 15 filters (169 taps each), max dropped |bias|={max_bias:.6g}, "
          f"dc_normalized={report.normalized_dc}")
    print(f"wrote {args.out_file}")
    return EXIT_OK


def cmd_contrib_map(args) -> int:
    model = read_model(args.model)
    if isinstance(model, LinearFcn):
        model = collapse_affine(model)
    if not isinstance(model, AffineMap):
        raise DataError("contribution maps need an affine (intra) model")
    n = math.isqrt(model.output_dim)
    if args.block_size != n:
        raise DataError(f"model predicts {n}x{n} blocks, not "
                        f"{args.block_size}x{args.block_size}")
    cm = contribution_map(model, args.pixel)
    grid = cm.to_grid()
    with open(args.out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in grid:
            writer.writerow([f"{v:.17g}" if np.isfinite(v) else "nan" for v in row])
    print(f"pixel={cm.pixel} bias={cm.bias:.17g}")
    print(f"wrote {args.out_csv}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = read_model(args.model)
    if not isinstance(model, (AffineMap, LinearFcn)):
        raise DataError("predict needs an intra model (affine layers)")
    frame = read_pgm(args.frame)
    n = math.isqrt(model.output_dim)
    refs = extract_references(frame, args.x, args.y, n)
    block = clip_plane(predict_block(model, refs, frame.bit_depth))
    write_pgm(args.out_pgm, block)
    orig = Plane(frame.samples[args.y:args.y + n, args.x:args.x + n],
                 frame.bit_depth)
    value = psnr(block, orig, frame.bit_depth)
    print(f"psnr_db={'inf' if math.isinf(value) else f'{value:.4f}'}")
    print(f"wrote {args.out_pgm}")
    return EXIT_OK


def cmd_bdrate(args) -> int:
    anchor = read_rd_csv(args.anchor)
    test = read_rd_csv(args.test)
    res = bd_rate(anchor, test)
    lo, hi = res.overlap_interval
    print(f"BD-rate: {res.bd_rate_percent:+.3f} %")
    print(f"overlap: {lo:.4f}..{hi:.4f} dB")
    if args.out:
        _write_log_csv(args.out,
                       [(f"{res.bd_rate_percent:.17g}", f"{lo:.17g}", f"{hi:.17g}")],
                       ["bd_rate_percent", "psnr_low", "psnr_high"])
    return EXIT_OK


def _report_eval(ws: Path, md: list, csv_dir: Path) -> None:
    cfg_path = ws / "report.cfg"
    if not cfg_path.exists():
        return
    cfg = read_config(cfg_path, {
        "eval_image": Field(str),
        "filters": Field(str),
        "scale": Field(int, 4),
        "block_size": Field(int, 16),
    })
    hr = read_pgm(ws / cfg["eval_image"])
    fset = read_filter_set(ws / cfg["filters"])
    rows, stats = evaluate_filter_set(hr, fset, default_filter_bank(),
                                      scale=cfg["scale"], block=cfg["block_size"])
    md.append("\n## Interpolation quality (desk-scale, rate proxy not used)\n")
    md.append("| position | mse learned | mse bilinear | mse 4-tap |")
    md.append("|---|---|---|---|")
    for r in rows:
        md.append(f"| {r.position.tag} | {r.mse_learned:.4f} | "
                  f"{r.mse_bilinear:.4f} | {r.mse_four_tap:.4f} |")
    md.append(f"\nSwitchable selection: learned chosen on "
              f"{stats.learned_chosen}/{stats.blocks} blocks "
              f"({100 * stats.learned_fraction:.1f}%); total SAD "
              f"{stats.sad_fixed_only:.1f} (fixed only) -> "
              f"{stats.sad_switchable:.1f} (switchable).")
    _write_log_csv(csv_dir / "selection.csv",
                   [(r.position.tag, f"{r.mse_learned:.17g}",
                     f"{r.mse_bilinear:.17g}", f"{r.mse_four_tap:.17g}")
                    for r in rows],
                   ["position", "mse_learned", "mse_bilinear", "mse_four_tap"])


def cmd_report(args) -> int:
    ws = Path(args.workspace)
    if not ws.is_dir():
        raise IoError(f"workspace {ws} is not a directory")
    out_md = Path(args.out) if args.out else ws / "report.md"
    md = ["# lncm workspace report", ""]
    model_files = sorted(ws.glob("*.lncm"))
    params_rows = []
    if model_files:
        md.append("## Model complexity\n")
        md.append("| file | kind | params | MACs/output sample |")
        md.append("|---|---|---|---|")
        for f in model_files:
            model = read_model(f)
            rep = count_params(model)
            kind = type(model).__name__
            md.append(f"| {f.name} | {kind} | {rep.param_count} "
                      f"| {rep.mac_count_per_output_sample} |")
            params_rows.append((f.name, kind, rep.param_count,
                                rep.mac_count_per_output_sample))
            if isinstance(model, ChromaHybridModel):
                ref = chroma_mod.reference_baseline_report()
                ratio = 100.0 * rep.param_count / ref.param_count
                md.append(f"\nChroma hybrid vs in-repo reference baseline: "
                          f"{rep.param_count} / {ref.param_count} params "
                          f"= {ratio:.2f}%.\n")
        _write_log_csv(ws / "params.csv", params_rows,
                       ["file", "kind", "params", "macs_per_output_sample"])
    pairs = [(f, ws / (f.name[:-len(".lncm")] + ".collapsed.lncm"))
             for f in model_files if not f.name.endswith(".collapsed.lncm")]
    pairs = [(a, b) for a, b in pairs if b.exists()]
    if pairs:
        md.append("\n## Collapse equivalence\n")
        md.append("| original | collapsed | max rel error | pass |")
        md.append("|---|---|---|---|")
        for a, b in pairs:
            rep = verify_equivalence(read_model(a), read_model(b), n_trials=20)
            md.append(f"| {a.name} | {b.name} | {rep.max_rel_error:.3e} "
                      f"| {rep.passed} |")
    filter_files = sorted(ws.glob("*.filters"))
    for f in filter_files:
        fset = read_filter_set(f)
        md.append(f"\n## Filter set {f.name}\n")
        md.append("| position | tap sum (DC) | max \\|tap\\| |")
        md.append("|---|---|---|")
        for pos in QUARTER_POSITIONS:
            taps = fset[pos].taps
            md.append(f"| {pos.tag} | {taps.sum():.6f} | {np.abs(taps).max():.6f} |")
    _report_eval(ws, md, ws)
    out_md.write_text("\n".join(md) + "\n")
    print(f"wrote {out_md}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lncm",
                     description="Train, collapse and evaluate activation-free "
                                 "video-coding prediction models.")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("train-intra", help="train a 4-layer intra FCN")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_train_intra)

    p = sub.add_parser("train-interp", help="train 15 per-position SRCNN stacks")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_train_interp)

    p = sub.add_parser("train-chroma", help="train the joint chroma hybrid")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_train_chroma)

    p = sub.add_parser("collapse", help="collapse a model into one layer")
    p.add_argument("model_in")
    p.add_argument("model_out")
    p.set_defaults(func=cmd_collapse)

    p = sub.add_parser("verify", help="check two models agree on random inputs")
    p.add_argument("model_a")
    p.add_argument("model_b")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("derive-filters", help="fuse trained stacks into the "
                                              "15-filter quarter-pel set")
    p.add_argument("models_dir")
    p.add_argument("out_file")
    p.add_argument("--normalize-dc", action="store_true")
    p.add_argument("--taps-csv")
    p.set_defaults(func=cmd_derive_filters)

    p = sub.add_parser("contrib-map", help="CSV heat-map of reference "
                                           "contributions for one pixel")
    p.add_argument("model")
    p.add_argument("block_size", type=int)
    p.add_argument("pixel", type=int)
    p.add_argument("out_csv")
    p.set_defaults(func=cmd_contrib_map)

    p = sub.add_parser("predict", help="predict one block of a frame")
    p.add_argument("model")
    p.add_argument("frame")
    p.add_argument("x", type=int)
    p.add_argument("y", type=int)
    p.add_argument("out_pgm")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("bdrate", help="Bjontegaard delta-rate of test vs anchor")
    p.add_argument("anchor")
    p.add_argument("test")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bdrate)

    p = sub.add_parser("report", help="consolidated workspace report")
    p.add_argument("workspace")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not getattr(args, "func", None):
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (LncmError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
