"""Command line: train, predict, ensemble, eval, gridsearch, report.

Exit codes: 0 success, 1 usage or validation error, 2 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .corpus import load_gold, load_run, load_texts, split_train_dev, write_run
from .ensemble import EnsembleConfig, PriorityStrategy, TypeStrategy, ensemble_runs
from .errors import ValidationError
from .metrics import evaluate_all, evaluate_per_event
from .model import load_checkpoint, predict_run, save_checkpoint
from .ontology import default_ontology, load_ontology
from .report import parse_report_csv, per_event_csv, render_report, report_csv
from .training import CONFIG_KEYS, coerce_config_value, configs_from_values, grid_search, parse_config_text, train

log = logging.getLogger("crisismtl")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _ontology(args):
    return load_ontology(args.ontology) if args.ontology else default_ontology()


def _training_configs(args):
    values = parse_config_text(Path(args.config).read_text(encoding="utf-8")) if args.config else {}
    for key in CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = coerce_config_value(key, flag)
    if args.seed is not None:
        values["seed"] = args.seed
    return configs_from_values(values)


def _split(args, ontology, seed):
    gold = load_gold(args.gold, ontology)
    return split_train_dev(gold, args.dev_ratio, seed)


def cmd_train(args) -> int:
    ontology = _ontology(args)
    mc, tc = _training_configs(args)
    split = _split(args, ontology, tc.seed)
    ckpt, history = train(mc, tc, split.train, split.dev, ontology, k=args.k)
    save_checkpoint(ckpt, args.checkpoint)
    if args.out:
        Path(args.out).write_text(history.to_csv(), encoding="utf-8")
    log.info("trained %d steps; selected step %d", history.total_steps, history.best_step)
    return 0


def cmd_predict(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    write_run(predict_run(ckpt, load_texts(args.gold)), args.out)
    return 0


def cmd_ensemble(args) -> int:
    if len(args.runs) < 2:
        raise UsageError("ensemble needs at least two run files")
    ontology = _ontology(args)
    members = [load_run(p, ontology) for p in args.runs]
    config = EnsembleConfig(TypeStrategy(args.types), PriorityStrategy(args.priority))
    write_run(ensemble_runs(members, config), args.out)
    return 0


def cmd_eval(args) -> int:
    ontology = _ontology(args)
    gold = load_gold(args.gold, ontology)
    run = load_run(args.run, ontology)
    report = evaluate_all(run, gold, ontology, k=args.k, lenient=args.lenient)
    Path(args.out).write_text(report_csv(report), encoding="utf-8")
    if args.per_event:
        breakdown = evaluate_per_event(run, gold, ontology, k=args.k, lenient=args.lenient)
        Path(args.per_event).write_text(per_event_csv(breakdown), encoding="utf-8")
    if args.markdown:
        Path(args.markdown).write_text(render_report({Path(args.run).stem: report}), encoding="utf-8")
    return 0


def cmd_gridsearch(args) -> int:
    ontology = _ontology(args)
    mc, tc = _training_configs(args)
    split = _split(args, ontology, tc.seed)
    lrs = [float(x) for x in args.lr_grid.split(",")] if args.lr_grid else None
    bss = [int(x) for x in args.bs_grid.split(",")] if args.bs_grid else None
    kwargs = {}
    if lrs:
        kwargs["lr_grid"] = lrs
    if bss:
        kwargs["bs_grid"] = bss
    results = grid_search(mc, tc, split.train, split.dev, ontology, **kwargs)
    lines = ["lr,batch_size,harm,best_step"] + [f"{r.lr!r},{r.batch_size},{r.harm!r},{r.best_step}" for r in results]
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def _named(item: str) -> tuple[str, str]:
    name, sep, path = item.partition("=")
    return (name, path) if sep else (Path(item).stem, item)


def cmd_report(args) -> int:
    from .plotting import plot_history, plot_metric_bars

    reports = {}
    for item in args.reports:
        name, path = _named(item)
        reports[name] = parse_report_csv(Path(path).read_text(encoding="utf-8"))
    if args.run:
        if not args.gold:
            raise UsageError("--run in report needs --gold")
        ontology = _ontology(args)
        gold = load_gold(args.gold, ontology)
        for item in args.run:
            name, path = _named(item)
            reports[name] = evaluate_all(load_run(path, ontology), gold, ontology, k=args.k, lenient=args.lenient)
    if not reports:
        raise UsageError("report needs at least one eval CSV or --run")
    Path(args.out).write_text(render_report(reports, args.format), encoding="utf-8")
    if args.figures:
        fig_dir = Path(args.figures)
        fig_dir.mkdir(parents=True, exist_ok=True)
        plot_metric_bars(reports, fig_dir / "metrics.png")
        if args.history:
            plot_history(args.history, fig_dir / "history.png")
    return 0


def _add_training_flags(p):
    p.add_argument("--gold", required=True, help="training gold file")
    p.add_argument("--config", help="key = value training config file")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--ontology", help="label file replacing the default 25 types")
    p.add_argument("--dev-ratio", type=float, default=0.1, help="fraction held out for model selection")
    p.add_argument("--k", type=int, default=100, help="NDCG cutoff for dev evaluation")
    for key in CONFIG_KEYS:
        if key != "seed":
            p.add_argument(f"--{key}", metavar="VALUE", help=f"override config {key}")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="crisismtl", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("train", help="train a model")
    _add_training_flags(p)
    p.add_argument("--checkpoint", required=True, help="output checkpoint path")
    p.add_argument("--out", help="history CSV output path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write a run file from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--gold", required=True, help="gold or {tweet_id, event_id, text} input")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("ensemble", help="merge run files")
    p.add_argument("runs", nargs="+", metavar="RUN")
    p.add_argument("--types", choices=[s.value for s in TypeStrategy], default="union")
    p.add_argument("--priority", choices=[s.value for s in PriorityStrategy], default="highest")
    p.add_argument("--ontology")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("eval", help="score a run against gold")
    p.add_argument("--run", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--out", required=True, help="single-row metric CSV")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--lenient", action="store_true", help="score missing tweets as empty, score 0")
    p.add_argument("--ontology")
    p.add_argument("--per-event", help="optional per-event breakdown CSV")
    p.add_argument("--markdown", help="optional markdown table")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gridsearch", help="grid over learning rate and batch size")
    _add_training_flags(p)
    p.add_argument("--lr-grid", help="comma-separated learning rates")
    p.add_argument("--bs-grid", help="comma-separated batch sizes")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("report", help="render result tables and figures")
    p.add_argument("reports", nargs="*", metavar="[NAME=]EVAL_CSV")
    p.add_argument("--run", action="append", metavar="[NAME=]RUN", help="evaluate a run file against --gold")
    p.add_argument("--gold")
    p.add_argument("--ontology")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--lenient", action="store_true")
    p.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    p.add_argument("--figures", help="directory for PNG figures")
    p.add_argument("--history", help="training history CSV to plot")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return ap


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            raise UsageError("crisismtl: error: a subcommand is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
