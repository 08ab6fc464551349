"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Every subcommand accepts ``--config FILE`` with ``key = value`` lines keyed
by the long option name (``weight_decay = 0``); explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from .baseline import BaselineError, LinearBaseline
from .evaluation import (
    COLUMNS,
    ModelPredictor,
    ablation_run,
    ablation_table,
    evaluate,
    format_table,
    neighborhood_study,
    study_csv,
)
from .formats import ParseError, load_dataset, load_grid, write_dataset, write_grid
from .geometry import GeometryError, make_geographical_grid, make_quasi_uniform_grid
from .network import VARIANTS, CheckpointError, ShapeError, load_checkpoint, save_checkpoint
from .plotting import (
    EmptySelection,
    db_range,
    heatmap_png,
    loss_png,
    magnitude_png,
    matrix_csv,
    pgm_bytes,
    plane_matrix,
    report_png,
)
from .spectra import SpectraError, make_synthetic_dataset
from .training import NumericError, TrainConfig, TrainingError, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
DATA_ERRORS = (ParseError, SpectraError, GeometryError, CheckpointError, ShapeError, BaselineError,
               EmptySelection, TrainingError, OSError, KeyError, ValueError)
DEFAULT_RADIUS = 1.47

log = logging.getLogger("hrtfinterp")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# config files


def read_config(path) -> dict[str, str]:
    out = {}
    for no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}:{no}: expected 'key = value'")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _apply_config(sub: argparse.ArgumentParser, cfg: dict[str, str], path) -> None:
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, value in cfg.items():
        if key not in actions:
            raise UsageError(f"{path}: unknown key {key!r}")
        a = actions[key]
        if isinstance(a, argparse._StoreTrueAction):
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"{path}: {key} expects true or false")
            defaults[key] = value.lower() in ("true", "1", "yes")
        elif a.nargs in ("+", "*") or isinstance(a, argparse._AppendAction):
            conv = a.type or str
            defaults[key] = [conv(v) for v in value.replace(",", " ").split()]
        else:
            defaults[key] = value  # argparse converts string defaults with the action's type
    sub.set_defaults(**defaults)


def config_text(values: dict) -> str:
    lines = []
    for k, v in values.items():
        if v is None:
            continue
        if isinstance(v, (list, tuple)):
            v = " ".join(str(x) for x in v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# argument groups


def _grid_args(p):
    p.add_argument("--grid", choices=("quasi", "geo", "file"), default="quasi")
    p.add_argument("--points", type=int, default=60, help="quasi-uniform point count")
    p.add_argument("--step-el", type=float, default=10.0, help="geographical elevation step (deg)")
    p.add_argument("--step-az", type=float, default=10.0, help="geographical great-circle azimuth step (deg)")
    p.add_argument("--radius", type=float, default=DEFAULT_RADIUS)
    p.add_argument("--grid-file")


def _train_args(p, variant=True):
    p.add_argument("--data", required=True)
    if variant:
        p.add_argument("--variant", choices=VARIANTS, default="c2")
    p.add_argument("--n", type=int, default=8, help="neighbors per target")
    p.add_argument("--delta", type=float, default=0.3, help="neighborhood radius (m)")
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fold", type=int, action="append", help="run only this fold (repeatable)")


def _train_config(args) -> TrainConfig:
    return TrainConfig(batch_size=args.batch, lr0=args.lr, patience_epochs=args.patience,
                       max_epochs=args.epochs, weight_decay=args.weight_decay, delta=args.delta,
                       n_neighbors=args.n, seed=args.seed, folds=args.folds)


def build_parser() -> _Parser:
    parser = _Parser(prog="hrtfinterp", description="HRTF interpolation from neighboring measurements")
    parser.add_argument("-v", "--verbose", action="store_true")
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def sub(name, help_):
        p = subs.add_parser(name, help=help_)
        p.add_argument("--config", help="key = value file; flags override it")
        return p

    p = sub("gen-grid", "write a grid file")
    _grid_args(p)
    p.add_argument("-o", "--output", required=True)

    p = sub("gen-data", "write a synthetic dataset file")
    _grid_args(p)
    p.add_argument("--subjects", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)

    p = sub("train", "k-fold training; writes checkpoints and logs to a run directory")
    _train_args(p)
    p.add_argument("--run-dir", default="runs")
    p.add_argument("--name", help="run name (default: the variant)")

    p = sub("eval", "plane-wise LSD report of a checkpoint or the linear baseline")
    p.add_argument("--data", required=True)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--checkpoint")
    src.add_argument("--baseline", action="store_true")
    p.add_argument("--variant", choices=VARIANTS, help="expected checkpoint variant")
    p.add_argument("--n", type=int, help="expected checkpoint neighbor count")
    p.add_argument("--delta", type=float, default=0.3)
    p.add_argument("--downsample", type=int, default=1)
    p.add_argument("--subjects", help="comma-separated subject ids (default: all)")
    p.add_argument("--leave-one-out", action="store_true")
    p.add_argument("--label")
    p.add_argument("--out", default=".")

    p = sub("plot", "frequency/angle magnitude maps as CSV, PGM and PNG")
    p.add_argument("--data", required=True)
    p.add_argument("--subject", help="subject id (default: first)")
    p.add_argument("--plane", choices=("median", "horizontal", "frontal"), default="median")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--checkpoint")
    src.add_argument("--baseline", action="store_true")
    p.add_argument("--delta", type=float, default=0.3)
    p.add_argument("--downsample", type=int, default=1)
    p.add_argument("--out", default="plot", help="output path prefix")

    p = sub("ablate", "train all variants with one config and compare")
    _train_args(p, variant=False)
    p.add_argument("--downsample", type=int, default=1)
    p.add_argument("--out", default=".")

    p = sub("study", "LSD over a grid of (N, delta) settings")
    _train_args(p)
    p.add_argument("--n-list", type=int, nargs="+", required=True)
    p.add_argument("--delta-list", type=float, nargs="+", required=True)
    p.add_argument("--downsample", type=int, default=1)
    p.add_argument("--out", default=".")
    return parser


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        subs = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        try:
            cfg = read_config(args.config)
        except OSError as e:
            raise UsageError(f"cannot read config: {e}") from None
        _apply_config(subs.choices[args.command], cfg, args.config)
        args = parser.parse_args(argv)
    return args


# ---------------------------------------------------------------------------
# commands


def _make_grid(args):
    if args.grid == "quasi":
        return make_quasi_uniform_grid(args.points, args.radius)
    if args.grid == "geo":
        return make_geographical_grid(args.step_el, args.step_az, args.radius)
    if not args.grid_file:
        raise UsageError("--grid file needs --grid-file")
    return load_grid(args.grid_file)


def cmd_gen_grid(args) -> int:
    grid = _make_grid(args)
    write_grid(args.output, grid)
    print(f"{args.output}: {len(grid)} points")
    return EXIT_OK


def cmd_gen_data(args) -> int:
    grid = _make_grid(args)
    ds = make_synthetic_dataset(grid, args.subjects, args.seed)
    write_dataset(args.output, ds)
    print(f"{args.output}: {len(grid)} points x {args.subjects} subjects = {len(grid) * args.subjects} measurements")
    return EXIT_OK


def _log_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "fold", "train_lsd", "val_lsd", "lr"])
    for e, f, tr, va, lr in rows:
        w.writerow([e, f, repr(float(tr)), repr(float(va)), repr(float(lr))])
    return buf.getvalue()


def cmd_train(args) -> int:
    ds = load_dataset(args.data)
    cfg = _train_config(args)
    run = Path(args.run_dir) / (args.name or args.variant)
    run.mkdir(parents=True, exist_ok=True)
    settings = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose", "run_dir", "name")}
    (run / "config.txt").write_text(config_text(settings), encoding="utf-8")
    result = train(ds, args.variant, cfg, args.fold)
    for f in result.folds:
        save_checkpoint(run / f"fold{f.split.fold_index}.ckpt", f.params)
    (run / "log.csv").write_text(_log_csv(result.rows), encoding="utf-8")
    summary = {"variant": args.variant, "folds_run": " ".join(str(f.split.fold_index) for f in result.folds)}
    for f in result.folds:
        k = f.split.fold_index
        summary[f"fold{k}.best_epoch"] = f.best_epoch
        summary[f"fold{k}.best_val_lsd"] = repr(f.rows[f.best_epoch][3])
        summary[f"fold{k}.final_train_lsd"] = repr(f.final_train_lsd)
        summary[f"fold{k}.skipped_targets"] = f.skipped_targets
        summary[f"fold{k}.val_subjects"] = " ".join(f.split.val_subjects)
    (run / "summary.txt").write_text(config_text(summary), encoding="utf-8")
    loss_png(run / "loss.png", result.rows)
    for f in result.folds:
        print(f"fold {f.split.fold_index}: best epoch {f.best_epoch}, val {f.rows[f.best_epoch][3]:.4f} dB, "
              f"final train {f.final_train_lsd:.4f} dB")
    print(f"run directory: {run}")
    return EXIT_OK


def _predictor(args):
    if args.baseline:
        return LinearBaseline()
    if not args.checkpoint:
        raise UsageError("need --checkpoint or --baseline")
    params = load_checkpoint(args.checkpoint)
    if getattr(args, "variant", None) and args.variant != params.variant:
        raise CheckpointError(f"checkpoint variant is {params.variant}, expected {args.variant}")
    if getattr(args, "n", None) is not None and args.n != params.n_neighbors:
        raise CheckpointError(f"checkpoint has N={params.n_neighbors}, expected N={args.n}")
    return ModelPredictor(params, args.delta)


def cmd_eval(args) -> int:
    ds = load_dataset(args.data)
    pred = _predictor(args)
    subjects = args.subjects.split(",") if args.subjects else None
    if subjects:
        for s in subjects:
            ds.subject(s)
    rep = evaluate(pred, ds, args.downsample, subjects=subjects, label=args.label,
                   delta=None if args.baseline else args.delta, leave_one_out=args.leave_one_out)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(rep.to_csv(), encoding="utf-8")
    (out / "report.txt").write_text(rep.to_text(), encoding="utf-8")
    (out / "positions.csv").write_text(rep.positions_csv(), encoding="utf-8")
    report_png(out / "report.png", [rep])
    sys.stdout.write(rep.to_text())
    print(f"references {rep.n_references}, targets {rep.n_targets}, skipped {rep.skipped}")
    return EXIT_OK


def cmd_plot(args) -> int:
    ds = load_dataset(args.data)
    rec = ds.subject(args.subject) if args.subject else ds.subjects[0]
    angles, truth, idx = plane_matrix(rec.positions, rec.hrtfs, args.plane)
    panels = [("measured", truth)]
    if args.baseline or args.checkpoint:
        pred = _predictor(args)
        keep = ds.grid_indices(rec.subject_id) % args.downsample == 0
        est = pred(rec.anthropometry, rec.positions[keep], rec.hrtfs[keep], rec.positions[idx]).T
        if np.isnan(est).any():
            raise EmptySelection("some plane positions have no reference within delta")
        panels.append(("estimated", est))
    lo, hi = db_range(*(m for _, m in panels))
    print(f"dB range {lo:.6g} .. {hi:.6g} mapped to pixels 0 .. 255", file=sys.stderr)
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    for name, m in panels:
        Path(f"{prefix}_{name}.csv").write_text(matrix_csv(m, angles), encoding="utf-8")
        Path(f"{prefix}_{name}.pgm").write_bytes(pgm_bytes(m, lo, hi))
    magnitude_png(f"{prefix}.png", panels, angles, lo, hi, args.plane)
    print(f"{rec.subject_id}: {len(angles)} {args.plane}-plane positions x {truth.shape[0]} bins")
    return EXIT_OK


def cmd_ablate(args) -> int:
    ds = load_dataset(args.data)
    reports = ablation_run(ds, _train_config(args), args.downsample, args.fold)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.csv").write_text(ablation_table(reports), encoding="utf-8")
    table = format_table(list(reports.values()))
    (out / "ablation.txt").write_text(table, encoding="utf-8")
    report_png(out / "ablation.png", list(reports.values()))
    sys.stdout.write(table)
    return EXIT_OK


def cmd_study(args) -> int:
    ds = load_dataset(args.data)
    m = neighborhood_study(ds, args.n_list, args.delta_list, _train_config(args), args.variant,
                           args.downsample, args.fold)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    text = study_csv(m, args.n_list, args.delta_list)
    (out / "study.csv").write_text(text, encoding="utf-8")
    heatmap_png(out / "study.png", m, args.n_list, args.delta_list)
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "gen-grid": cmd_gen_grid,
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "plot": cmd_plot,
    "ablate": cmd_ablate,
    "study": cmd_study,
}


def main(argv=None) -> int:
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except DATA_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
