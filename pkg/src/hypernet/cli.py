"""Command-line experiment runner.

Subcommands: ``run`` (one training run), ``depth-sweep`` and ``ratio-sweep``
(CSV reports over model depth or training label rate), ``gen-synthetic``
(write a synthetic dataset to disk), ``validate-dataset`` (load and
summarize a manifest).  Exit codes: 0 success, 1 usage, 2 validation or
parameter problems, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .data import (
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    load_manifest,
    load_synthetic_spec,
    save_dataset,
    stratified_train_mask,
)
from .errors import HypernetError, NumericError, ParameterError, ValidationError
from .models import FAMILIES, RESIDUAL_FAMILIES, ModelConfig, default_res_schedule
from .training import RunResult, TrainConfig, balanced_subset, train

CSV_SCHEMA = "# hypernet-sweep-v1"
CSV_HEADER = "dataset,family,depth,label_mode,ratio,seed,final_acc,best_acc,runtime_s"
DEFAULT_DEPTHS = (2, 4, 8, 16, 32, 64)
DEFAULT_RATIOS = (0.05, 0.1, 0.2, 0.4, 0.6, 0.8)


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; this toolkit reserves 2 for
    validation problems, so usage errors exit 1 instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class _Task:
    """One picklable training run for sweep workers."""

    kind: str
    source: object
    family: str
    depth: int
    hidden: int
    alpha: float
    lam: float
    dropout: float
    epochs: int
    lr: float
    weight_decay: float
    eval_every: int
    seed: int
    label_mode: str = "full"
    per_class: int | None = None
    ratio: float | None = None


@lru_cache(maxsize=4)
def _load_source(kind: str, source):
    if kind == "manifest":
        return load_dataset(source)
    return generate_synthetic(source)


def _task_dataset(task: _Task):
    ds = _load_source(task.kind, task.source)
    if task.ratio is not None:
        rng = np.random.default_rng([2, task.seed, int(round(task.ratio * 1e9))])
        tr = stratified_train_mask(ds.labels, task.ratio, rng)
        return ds.replace_masks(tr, ~tr)
    if task.label_mode == "balanced":
        per = task.per_class
        if per is None:
            per = int(np.bincount(ds.labels[ds.train_mask],
                                  minlength=ds.n_classes).min())
        rng = np.random.default_rng([1, task.seed])
        tr = balanced_subset(ds.labels, ds.train_mask, per, rng)
        return ds.replace_masks(tr, ~tr)
    return ds


def _train_task(task: _Task) -> RunResult:
    ds = _task_dataset(task)
    sched = None
    if task.family in RESIDUAL_FAMILIES:
        sched = default_res_schedule(task.alpha, task.lam)
    mcfg = ModelConfig(
        family=task.family,
        depth=task.depth,
        hidden=task.hidden,
        n_classes=ds.n_classes,
        res_schedule=sched,
        dropout=task.dropout,
        seed=task.seed,
    )
    tcfg = TrainConfig(
        epochs=task.epochs,
        learning_rate=task.lr,
        weight_decay=task.weight_decay,
        optimizer="adam",
        eval_every=task.eval_every,
        seed=task.seed,
    )
    return train(mcfg, tcfg, ds)


def _run_task(task: _Task):
    """Sweep-worker wrapper: failures become result rows, not exceptions."""
    try:
        res = _train_task(task)
        return ("ok", res.final_test_accuracy, res.best_test_accuracy, res.elapsed)
    except HypernetError as e:
        return ("error", str(e), float("nan"), float("nan"))


def _execute(tasks: list[_Task], jobs: int):
    if jobs < 1:
        raise ParameterError(f"--jobs must be positive, got {jobs}")
    if jobs == 1 or len(tasks) <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_run_task, tasks))


def _env_seed() -> int | None:
    raw = os.environ.get("HYPERNET_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ValidationError(f"HYPERNET_SEED must be an integer, got {raw!r}") from None


def _resolve_seed(flag_value: int | None) -> int:
    if flag_value is not None:
        return flag_value
    env = _env_seed()
    return 0 if env is None else env


def _resolve_seeds(flag_value: list[int] | None, default_count: int) -> list[int]:
    if flag_value is not None:
        return sorted(set(flag_value))
    env = _env_seed()
    if env is not None:
        return [env]
    return list(range(default_count))


def _resolve_source(args) -> tuple[str, object]:
    dataset = getattr(args, "dataset", None)
    if dataset:
        return ("manifest", str(dataset))
    spec = getattr(args, "synthetic", None) or "default"
    if spec == "default":
        return ("synthetic", SyntheticSpec())
    return ("synthetic", load_synthetic_spec(spec))


def _source_name(kind: str, source) -> str:
    if kind == "manifest":
        return load_manifest(source).name
    return source.name


def _fmt_acc(v: float) -> str:
    return "nan" if not np.isfinite(v) else f"{v:.6f}"


def _fmt_runtime(v: float) -> str:
    return "nan" if not np.isfinite(v) else f"{v:.3f}"


def _write_csv(path, rows: list[tuple]) -> None:
    lines = [CSV_SCHEMA, CSV_HEADER]
    lines += [",".join(row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def _sweep_common(args, tasks, cell_of, cell_label, name: str):
    """Run tasks, log failures, write the CSV, print per-cell summaries."""
    results = _execute(tasks, args.jobs)
    rows = []
    cells: dict[tuple, list[tuple[int, float, float]]] = {}
    for task, res in zip(tasks, results):
        status, a, b, rt = res
        if status == "error":
            print(
                f"warning: family={task.family} depth={task.depth} "
                f"ratio={task.ratio} seed={task.seed} failed: {a}",
                file=sys.stderr,
            )
            final, best, runtime = float("nan"), float("nan"), float("nan")
        else:
            final, best, runtime = a, b, rt
        ratio_str = "" if task.ratio is None else f"{task.ratio:g}"
        rows.append((
            name, task.family, str(task.depth), task.label_mode, ratio_str,
            str(task.seed), _fmt_acc(final), _fmt_acc(best), _fmt_runtime(runtime),
        ))
        cells.setdefault(cell_of(task), []).append((task.seed, final, best))
    _write_csv(args.out, rows)
    for key in sorted(cells):
        entries = cells[key]
        finals = np.array([e[1] for e in entries])
        bests = np.array([e[2] for e in entries])
        ok = np.isfinite(finals)
        label = cell_label(key)
        if not ok.any():
            print(f"{label}: all {len(entries)} runs failed")
            continue
        if len(entries) == 1:
            print(f"{label}: final_acc={finals[ok][0]:.4f} best_acc={bests[ok][0]:.4f}")
        else:
            print(
                f"{label}: final_acc={finals[ok].mean():.4f}"
                f"±{finals[ok].std():.4f} "
                f"best_acc={bests[ok].mean():.4f}±{bests[ok].std():.4f} "
                f"({int(ok.sum())}/{len(entries)} runs)"
            )
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


def cmd_run(args) -> int:
    kind, source = _resolve_source(args)
    seed = _resolve_seed(args.seed)
    task = _Task(
        kind=kind, source=source, family=args.family, depth=args.depth,
        hidden=args.hidden, alpha=args.alpha, lam=args.lam,
        dropout=args.dropout, epochs=args.epochs, lr=args.lr,
        weight_decay=args.weight_decay, eval_every=args.eval_every,
        seed=seed, label_mode=args.label_mode, per_class=args.per_class,
    )
    res = _train_task(task)
    name = _source_name(kind, source)
    summary = (
        f"dataset={name} family={args.family} depth={args.depth} "
        f"label_mode={args.label_mode} seed={seed} "
        f"final_acc={res.final_test_accuracy:.6f} "
        f"best_acc={res.best_test_accuracy:.6f}"
    )
    print(summary)
    if args.out:
        payload = {
            "dataset": name,
            "family": args.family,
            "depth": args.depth,
            "label_mode": args.label_mode,
            "seed": seed,
            "final_acc": res.final_test_accuracy,
            "best_acc": res.best_test_accuracy,
            "loss_curve": res.loss_curve,
        }
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
    return 0


def cmd_depth_sweep(args) -> int:
    kind, source = _resolve_source(args)
    depths = sorted(set(args.depths))
    if any(d < 1 for d in depths):
        raise ParameterError(f"depths must be positive, got {args.depths}")
    families = sorted(set(args.families))
    seeds = _resolve_seeds(args.seeds, default_count=1)
    tasks = [
        _Task(
            kind=kind, source=source, family=f, depth=d, hidden=args.hidden,
            alpha=args.alpha, lam=args.lam, dropout=args.dropout,
            epochs=args.epochs, lr=args.lr, weight_decay=args.weight_decay,
            eval_every=args.eval_every, seed=s, label_mode=args.label_mode,
            per_class=args.per_class,
        )
        for f in families for d in depths for s in seeds
    ]
    name = _source_name(kind, source)
    return _sweep_common(
        args, tasks,
        cell_of=lambda t: (t.family, t.depth),
        cell_label=lambda key: f"family={key[0]} depth={key[1]}",
        name=name,
    )


def cmd_ratio_sweep(args) -> int:
    kind, source = _resolve_source(args)
    ratios = sorted(set(args.ratios))
    if any(not 0.0 < r < 1.0 for r in ratios):
        raise ParameterError(f"ratios must lie in (0, 1), got {args.ratios}")
    if args.depth < 1:
        raise ParameterError(f"depth must be positive, got {args.depth}")
    families = sorted(set(args.families))
    seeds = _resolve_seeds(args.seeds, default_count=8)
    tasks = [
        _Task(
            kind=kind, source=source, family=f, depth=args.depth,
            hidden=args.hidden, alpha=args.alpha, lam=args.lam,
            dropout=args.dropout, epochs=args.epochs, lr=args.lr,
            weight_decay=args.weight_decay, eval_every=args.eval_every,
            seed=s, label_mode="full", ratio=r,
        )
        for f in families for r in ratios for s in seeds
    ]
    name = _source_name(kind, source)
    return _sweep_common(
        args, tasks,
        cell_of=lambda t: (t.family, t.ratio),
        cell_label=lambda key: f"family={key[0]} ratio={key[1]:g}",
        name=name,
    )


def cmd_gen_synthetic(args) -> int:
    spec_arg = args.synthetic or "default"
    spec = SyntheticSpec() if spec_arg == "default" else load_synthetic_spec(spec_arg)
    ds = generate_synthetic(spec)
    man = save_dataset(ds, args.out, name=args.name, knn_k=spec.knn_k,
                       force=args.force)
    path = Path(args.out) / f"{man.name}.json"
    print(
        f"wrote {path} ({man.n_vertices} vertices, {len(man.modalities)} "
        f"modalities, {man.n_classes} classes)"
    )
    return 0


def cmd_validate_dataset(args) -> int:
    ds = load_dataset(args.dataset)
    print(
        f"dataset={ds.name} n_vertices={ds.n_vertices} "
        f"n_classes={ds.n_classes} n_modalities={ds.n_modalities} "
        f"label_rate={ds.label_rate:.4f}"
    )
    for i, m in enumerate(ds.modalities):
        print(f"  modality {i}: dim={m.dim} n_edges={m.hypergraph.n_edges}")
    return 0


def _add_source_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--dataset", metavar="MANIFEST",
                   help="path to a dataset manifest JSON")
    g.add_argument("--synthetic", metavar="SPEC",
                   help="'default' or path to a synthetic spec JSON")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hidden", type=int, default=128,
                   help="hidden layer width (default 128)")
    p.add_argument("--alpha", type=float, default=0.1,
                   help="initial-residual weight for residual families")
    p.add_argument("--lambda", dest="lam", type=float, default=0.5,
                   help="identity-mapping decay strength for residual families")
    p.add_argument("--dropout", type=float, default=0.5,
                   help="dropout probability on hidden activations")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--weight-decay", type=float, default=5e-4)
    p.add_argument("--eval-every", type=int, default=10,
                   help="epochs between test evaluations (default 10)")


def _add_label_mode_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--label-mode", choices=("full", "balanced"), default="full",
                   help="'balanced' trains on an equal per-class subset")
    p.add_argument("--per-class", type=int, default=None,
                   help="labels per class in balanced mode "
                        "(default: smallest class count in the train mask)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hypernet",
                     description="Hypergraph neural network experiment runner")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("run", help="train one model and print a summary")
    _add_source_flags(p)
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--seed", type=int, default=None,
                   help="default: HYPERNET_SEED env var, else 0")
    _add_model_flags(p)
    _add_train_flags(p)
    _add_label_mode_flags(p)
    p.add_argument("--out", metavar="FILE",
                   help="write a JSON result file with the loss curve")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("depth-sweep",
                       help="accuracy over model depths, CSV report")
    _add_source_flags(p)
    p.add_argument("--families", nargs="+", choices=FAMILIES,
                   default=list(FAMILIES))
    p.add_argument("--depths", nargs="+", type=int,
                   default=list(DEFAULT_DEPTHS))
    p.add_argument("--seeds", nargs="+", type=int, default=None,
                   help="default: HYPERNET_SEED env var, else 0")
    _add_model_flags(p)
    _add_train_flags(p)
    _add_label_mode_flags(p)
    p.add_argument("--out", default="depth-sweep.csv")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_depth_sweep)

    p = sub.add_parser("ratio-sweep",
                       help="accuracy over training label rates, CSV report")
    _add_source_flags(p)
    p.add_argument("--families", nargs="+", choices=FAMILIES,
                   default=list(FAMILIES))
    p.add_argument("--ratios", nargs="+", type=float,
                   default=list(DEFAULT_RATIOS))
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--seeds", nargs="+", type=int, default=None,
                   help="default: HYPERNET_SEED env var, else 0..7")
    _add_model_flags(p)
    _add_train_flags(p)
    p.add_argument("--out", default="ratio-sweep.csv")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_ratio_sweep)

    p = sub.add_parser("gen-synthetic", help="write a synthetic dataset to disk")
    p.add_argument("--synthetic", metavar="SPEC", default="default",
                   help="'default' or path to a synthetic spec JSON")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--name", default=None, help="override the dataset name")
    p.add_argument("--force", action="store_true",
                   help="overwrite existing files")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("validate-dataset", help="load a manifest and summarize it")
    p.add_argument("--dataset", required=True, metavar="MANIFEST")
    p.set_defaults(func=cmd_validate_dataset)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (HypernetError, FileExistsError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
