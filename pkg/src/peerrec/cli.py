"""Command-line entry point.

Exit codes: 0 success, 1 invalid input or usage, 2 failure while running.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys

from .config import ConfigError, load_config
from .events import EventLogError

logger = logging.getLogger("peerrec")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p):
    p.add_argument("--config", help="JSON run config (or builtin:pipeline_2k)")
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--threads", type=int, help="cap on BLAS/OpenMP worker threads")
    p.add_argument("--json", action="store_true", help="machine-readable output on stdout")
    p.add_argument("-v", "--verbose", action="store_true")


def _data_args(p, model=False):
    p.add_argument("--log", help="event log (JSON lines)")
    p.add_argument("--embeddings", help="precomputed update embeddings")
    if model:
        p.add_argument("--model", help="trained model file")


def build_parser():
    parser = _Parser(prog="peerrec", description="Peer site recommendation from community event logs.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("generate", help="write a seeded synthetic event log")
    _common(p)
    p.add_argument("--synthetic", help="synthetic generator config (JSON)")

    p = sub.add_parser("validate", help="parse an event log and report its shape")
    _common(p)
    _data_args(p)

    p = sub.add_parser("extract", help="write initiations and training samples")
    _common(p)
    _data_args(p)

    p = sub.add_parser("train", help="train the configured scorer")
    _common(p)
    _data_args(p)
    p.add_argument("--scorer")

    p = sub.add_parser("evaluate", help="MRR / HR@k on the test split")
    _common(p)
    _data_args(p, model=True)

    p = sub.add_parser("coverage", help="coverage statistics of top-k sets")
    _common(p)
    _data_args(p, model=True)

    p = sub.add_parser("recommend", help="draft a capped recommendation batch and render emails")
    _common(p)
    _data_args(p, model=True)
    p.add_argument("--batch-id", dest="batch_id")
    p.add_argument("--previous-manifest", dest="previous_manifests", action="append")

    p = sub.add_parser("analyze", help="effect estimates and power analysis")
    asub = p.add_subparsers(dest="analysis", metavar="ANALYSIS", parser_class=_Parser)
    e = asub.add_parser("effects", help="raw / OLS / doubly robust effects from a panel CSV")
    _common(e)
    e.add_argument("--panel", required=True)
    e.add_argument("--method", choices=("raw", "ols", "doubly_robust", "all"), default="all")
    e.add_argument("--n-bootstrap", dest="n_bootstrap", type=int, default=1000)
    e.add_argument("--covariates", help="comma-separated subset of panel covariates")
    w = asub.add_parser("power", help="sample size for a one-tailed point-biserial test")
    _power_args(w)
    g = asub.add_parser("panel", help="build an outcome panel CSV from a log and a unit list")
    _common(g)
    g.add_argument("--log", required=True)
    g.add_argument("--units", required=True, help="CSV with columns unit,treated,event_time[,batch]")
    g.add_argument("--schema", choices=("author", "site"), default="author")
    g.add_argument("--outcome", default="journal_updates")
    g.add_argument("--pre-weeks", dest="pre_weeks", type=float)
    g.add_argument("--post-weeks", dest="post_weeks", type=float)
    g.add_argument("--daily-visits", action="store_true", help="coarsen visits to one per actor/site/day")
    g.add_argument("--out", required=True)

    p = sub.add_parser("power", help="alias of 'analyze power'")
    _power_args(p)

    p = sub.add_parser("pipeline", help="all stages: generate/extract/train/evaluate/coverage/recommend")
    _common(p)
    _data_args(p)
    return parser


def _power_args(p):
    _common(p)
    p.add_argument("--rho", type=float, required=True, help="effect size treated as a correlation")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--power", type=float, default=0.8)
    p.add_argument("--tails", type=int, choices=(1, 2), default=1)


_OVERRIDES = ("seed", "output_dir", "threads", "log", "embeddings", "model", "scorer", "synthetic",
              "batch_id", "previous_manifests")


def _config(args, need_log=False, need_model=False):
    ov = {k: getattr(args, k) for k in _OVERRIDES if hasattr(args, k)}
    cfg = load_config(getattr(args, "config", None), ov)
    cfg.validate(need_log=need_log)
    if need_model and cfg.model is None:
        raise ConfigError("--model is required")
    return cfg


def _emit(args, payload, text):
    if args.json:
        sys.stdout.write(json.dumps(payload, sort_keys=True, indent=2, allow_nan=True) + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _threads(n):
    if n is None:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


# -- commands -------------------------------------------------------------------

def cmd_generate(args):
    from .pipeline import Run
    cfg = _config(args)
    cfg.log = None
    run = Run(cfg)
    path = run.generate()
    run.provenance()
    _emit(args, {"log": str(path), "n_records": len(run.log)}, f"wrote {len(run.log)} records to {path}")


def cmd_validate(args):
    from .events import parse_event_log
    cfg = _config(args)
    if cfg.log is None:
        raise ConfigError("--log is required")
    log = parse_event_log(cfg.resolve(cfg.log))
    from collections import Counter
    kinds = Counter(r.kind.value for r in log.records)
    payload = {"n_records": len(log), "n_reordered": log.n_reordered, "kinds": dict(sorted(kinds.items())),
               "start_ms": log.start_ms, "end_ms": log.end_ms}
    _emit(args, payload, "\n".join(f"{k}: {v}" for k, v in payload.items()))


def cmd_extract(args):
    from .pipeline import Run
    run = Run(_config(args, need_log=True))
    samples = run.extract()
    run.provenance()
    payload = {"n_initiations": len(run.ctx.initiations), "n_samples": len(samples),
               "n_skipped_ineligible": samples.n_skipped_ineligible}
    _emit(args, payload, "\n".join(f"{k}: {v}" for k, v in payload.items()))


def cmd_train(args):
    from .pipeline import Run
    run = Run(_config(args, need_log=True))
    scorer = run.train()
    run.provenance()
    payload = {"model": str(run.out / "model.bin"), "kind": scorer.kind}
    if hasattr(scorer, "estimator_") and hasattr(scorer.estimator_, "best_epoch_"):
        payload["best_epoch"] = int(scorer.estimator_.best_epoch_)
    _emit(args, payload, "\n".join(f"{k}: {v}" for k, v in payload.items()))


def cmd_evaluate(args):
    from .evaluation import format_table
    from .pipeline import Run, _dump
    run = Run(_config(args, need_log=True, need_model=True))
    rows, payload = run.evaluate(run.load_model())
    run._emit("metrics.json", _dump(payload))
    run.provenance()
    _emit(args, payload, format_table(rows))


def cmd_coverage(args):
    from .pipeline import Run, _dump
    run = Run(_config(args, need_log=True, need_model=True))
    cov = run.coverage(run.load_model())
    payload = {k: v.to_dict() for k, v in cov.items()}
    run._emit("coverage.json", _dump(payload))
    run.provenance()
    _emit(args, payload, "\n".join(f"{k}: {v}" for k, v in payload.items()))


def cmd_recommend(args):
    from .pipeline import Run
    run = Run(_config(args, need_log=True, need_model=True))
    sets, batch_dir = run.recommend(run.load_model())
    run.provenance()
    payload = {"batch_dir": str(batch_dir), "n_participants": len(sets),
               "n_incomplete": sum(rs.incomplete for rs in sets.values())}
    _emit(args, payload, "\n".join(f"{k}: {v}" for k, v in payload.items()))


def cmd_power(args):
    from .analysis.power import PowerRequest, required_sample_size
    try:
        req = PowerRequest(args.rho, args.alpha, args.power, args.tails)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    n = required_sample_size(req)
    payload = {"rho": args.rho, "alpha": args.alpha, "power": args.power, "tails": args.tails, "n": n}
    _emit(args, payload, f"n = {n}")


def cmd_effects(args):
    from .analysis.estimators import estimate
    from .analysis.panel import OutcomePanel, PanelError
    cfg = _config(args)
    try:
        panel = OutcomePanel.from_csv(args.panel)
        if args.covariates is not None:
            panel = panel.select([c for c in args.covariates.split(",") if c])
    except (PanelError, FileNotFoundError) as e:
        raise ConfigError(f"--panel: {e}") from None
    except ValueError as e:
        raise ConfigError(f"--covariates: {e}") from None
    methods = ("raw", "ols", "doubly_robust") if args.method == "all" else (args.method,)
    ests = [estimate(panel, m, args.n_bootstrap, cfg.seed) for m in methods]
    payload = [json.loads(e.to_json()) for e in ests]
    _emit(args, payload, "\n".join(e.to_json() for e in ests))


def cmd_panel(args):
    import csv

    from .analysis.outcomes import build_outcome_panel
    from .events import parse_event_log
    cfg = _config(args)
    try:
        with open(args.units, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except FileNotFoundError:
        raise ConfigError(f"--units: file not found: {args.units}") from None
    treated = [r["unit"] for r in rows if r["treated"] == "1"]
    controls = [r["unit"] for r in rows if r["treated"] != "1"]
    times = {r["unit"]: (int(r["event_time"]) if r.get("event_time") else None) for r in rows}
    batches = {r["unit"]: r.get("batch") for r in rows}
    log = parse_event_log(args.log)
    panel = build_outcome_panel(log, treated, controls, times,
                                pre_weeks=args.pre_weeks or cfg.pre_weeks, post_weeks=args.post_weeks or cfg.post_weeks,
                                outcome=args.outcome, schema=args.schema, batches=batches, seed=cfg.seed,
                                coarsen_visits=args.daily_visits)
    panel.to_csv(args.out)
    payload = {"out": args.out, "n_rows": len(panel), **panel.meta}
    _emit(args, payload, "\n".join(f"{k}: {v}" for k, v in payload.items()))


def cmd_pipeline(args):
    from .pipeline import run_pipeline
    run = run_pipeline(_config(args))
    payload = {"output_dir": str(run.out), "outputs": run.outputs}
    _emit(args, payload, (run.out / "metrics.txt").read_text(encoding="utf-8"))


COMMANDS = {
    "generate": cmd_generate, "validate": cmd_validate, "extract": cmd_extract, "train": cmd_train,
    "evaluate": cmd_evaluate, "coverage": cmd_coverage, "recommend": cmd_recommend, "power": cmd_power,
    "pipeline": cmd_pipeline,
}
ANALYSES = {"effects": cmd_effects, "power": cmd_power, "panel": cmd_panel}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as e:  # --help
        return EXIT_OK if not e.code else EXIT_INVALID
    if args.command is None or (args.command == "analyze" and args.analysis is None):
        parser.print_usage(sys.stderr)
        print("peerrec: error: a command is required", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    fn = ANALYSES[args.analysis] if args.command == "analyze" else COMMANDS[args.command]
    try:
        with _threads(getattr(args, "threads", None)):
            fn(args)
    except (ConfigError, EventLogError) as e:
        print(f"peerrec: error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as e:  # noqa: BLE001
        logger.debug("failure", exc_info=True)
        print(f"peerrec: failed: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
