"""Command-line entry point: ``edgereplay {generate,monitor,compare,bench}``.

Exit codes: 0 success, 1 runtime failure (including a missing dataset),
2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .config import ConfigError, RunConfig, dump_config, load_config, set_key
from .evaluation import (
    bench_strategies,
    mean_traces,
    prepare_corpus,
    run_experiment,
    summarize,
    write_results,
    write_runtime,
    write_summary,
    write_csv,
)
from .features import DatasetError, downsample, make_windows, read_dataset
from .monitor import monitor_windows, run_monitor, write_events
from .plant_sim import ANOMALOUS_FILE, HEALTHY_FILE, build_corpus, corpus_seeds, synthetic_run
from .replay import STRATEGIES

logger = logging.getLogger("edgereplay")

RESULTS_CSV = "results.csv"
SUMMARY_CSV = "summary.csv"
RUNTIME_CSV = "runtime.csv"
BENCH_CSV = "bench.csv"
EVENTS_CSV = "monitor_events.csv"
AUC_SVG = "auc_vs_time.svg"
BOX_SVG = "auc_boxplot.svg"
MONITOR_SVG = "monitor_demo.svg"
CONFIG_TXT = "config.txt"


class CliError(RuntimeError):
    """Runtime failure reported with exit code 1."""


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key-value config file (section.key = value)")
    common.add_argument("--seed", type=int, help="master seed (overrides run.seed)")
    common.add_argument("--strategy", help=f"online strategy, one of {', '.join(STRATEGIES)}")
    common.add_argument("--methods", help="comma-separated method list for compare")
    common.add_argument("--jobs", type=int, help="parallel folds")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    common.add_argument("--data", type=Path, help="directory holding the corpus CSVs (default: --out)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key, may be repeated")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="edgereplay", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="simulate the healthy and blocked-outlet corpora")
    sub.add_parser("monitor", parents=[common], help="threshold demo run with event log and figure")
    sub.add_parser("compare", parents=[common], help="cross-validated comparison of all methods")
    sub.add_parser("bench", parents=[common], help="per-step runtime of each online strategy")
    return p


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        set_key(cfg, key.strip(), value)
    if args.seed is not None:
        cfg.run.seed = args.seed
    if args.strategy is not None:
        set_key(cfg, "run.strategy", args.strategy)
    if args.methods is not None:
        set_key(cfg, "run.methods", args.methods)
    if args.jobs is not None:
        cfg.run.jobs = args.jobs
    cfg.validate()
    return cfg


def _write_config(out: Path, cfg: RunConfig) -> None:
    tmp = out / (CONFIG_TXT + ".tmp")
    tmp.write_text(dump_config(cfg))
    tmp.replace(out / CONFIG_TXT)


def _load_stream(path: Path, period: float):
    if not path.is_file():
        raise CliError(f"dataset not found: {path} (run 'edgereplay generate' first)")
    return downsample(read_dataset(path), period)


def cmd_generate(cfg: RunConfig, out: Path, data: Path) -> None:
    c = cfg.corpus
    paths = build_corpus(
        cfg.run.seed, data, cfg.thermal_plant(),
        healthy_hours=c.healthy_hours, anomalous_hours=c.anomalous_hours,
        hold=c.hold_s, p_stop=c.p_stop, stop_duration=c.stop_s,
    )
    for label, path in (("healthy", paths.healthy), ("anomalous", paths.anomalous)):
        records = read_dataset(path)
        hours = (records[-1].timestamp + cfg.features.sample_period) / 3600.0 if records else 0.0
        print(f"{label:9s} {path}  {len(records)} records  {hours:.2f} h")


def cmd_monitor(cfg: RunConfig, out: Path, data: Path) -> None:
    from .plotting import plot_monitor

    spec = cfg.window_spec()
    healthy = _load_stream(data / HEALTHY_FILE, spec.sample_period)
    anomalous = _load_stream(data / ANOMALOUS_FILE, spec.sample_period)
    train, test = monitor_windows(healthy, anomalous, spec, cfg.eval.parts, cfg.monitor.test_parts)
    p = cfg.method_params()
    result = run_monitor(
        train, test,
        strategy=cfg.run.strategy,
        normalizer=p.normalizer,
        hidden=p.hidden,
        learning_rate=p.learning_rate,
        momentum=p.momentum,
        alpha=cfg.threshold.alpha,
        fit_samples=cfg.fit_samples,
        sample_period=spec.sample_period,
        train_during_test=cfg.monitor.train_during_test,
        seed=cfg.run.seed,
        trainer_kwargs=dict(
            buffer_size=p.buffer_size, icarl_exemplars=p.icarl_exemplars,
            ewc_lambda=p.ewc_lambda, ewc_gamma=p.ewc_gamma, lwf_lambda=p.lwf_lambda,
            epochs=p.epochs_per_step,
        ),
    )
    write_events(out / EVENTS_CSV, result)
    plot_monitor(out / MONITOR_SVG, result)
    print(f"strategy {cfg.run.strategy}: trained on {result.train_samples} windows, "
          f"test run {len(result.hours)} windows, threshold fitted on {result.fit_samples}")
    print(f"FPR {100 * result.false_positive_rate:.2f}%  TPR {100 * result.true_positive_rate:.2f}%")


def cmd_compare(cfg: RunConfig, out: Path, data: Path) -> None:
    from .plotting import plot_auc_boxplot, plot_auc_vs_time

    spec = cfg.window_spec()
    healthy = _load_stream(data / HEALTHY_FILE, spec.sample_period)
    anomalous = _load_stream(data / ANOMALOUS_FILE, spec.sample_period)
    corpus = prepare_corpus(healthy, anomalous, spec, cfg.eval.parts, cfg.eval.classifier_anomalous_fraction)
    params = cfg.method_params()
    methods = list(cfg.run.methods)
    results, failures = run_experiment(corpus, methods, params, cfg.run.seed, jobs=cfg.run.jobs)
    n_train = len(corpus.fold(0).train)
    if results:
        summaries = summarize(results, params, spec.window_len, n_train)
        write_results(out / RESULTS_CSV, results)
        write_summary(out / SUMMARY_CSV, summaries)
        write_runtime(out / RUNTIME_CSV, summaries)
        hours, mean, ci = mean_traces(results)
        plot_auc_vs_time(out / AUC_SVG, hours, mean, ci)
        folded: dict[str, list[float]] = {}
        for r in results:
            folded.setdefault(r.method, []).append(r.mean_auc)
        plot_auc_boxplot(out / BOX_SVG, folded)
        print(f"{'method':20s} {'mean AUC':>9s} {'ci95':>7s} {'final':>7s} {'memory':>8s} {'runtime':>8s}")
        for s in summaries:
            rt = "-" if s.normalized_runtime is None else f"{s.normalized_runtime:.2f}"
            print(f"{s.method:20s} {s.mean_auc:9.3f} {s.ci95:7.3f} {s.final_auc:7.3f} {s.memory:8d} {rt:>8s}")
    for fold, msg in sorted(failures.items()):
        print(f"fold {fold} failed: {msg}", file=sys.stderr)
    if failures:
        raise CliError(f"{len(failures)} of {len(corpus.plan.folds)} folds failed")


def cmd_bench(cfg: RunConfig, out: Path, data: Path) -> None:
    spec = cfg.window_spec()
    params = cfg.method_params()
    steps = cfg.eval.bench_steps
    needed = spec.window_len + params.buffer_size + steps
    hours = needed * spec.sample_period / 3600.0 + 0.1
    seeds = corpus_seeds(cfg.run.seed)
    records = synthetic_run(cfg.thermal_plant(), hours, seeds["healthy_refs"], seeds["healthy_noise"])
    windows = make_windows(downsample(records, spec.sample_period), spec)
    timings = bench_strategies(windows, params, steps=steps, seed=cfg.run.seed)
    base = timings["incremental"]
    rows = [(m, round(t * 1e3, 6), round(t / base, 4)) for m, t in timings.items()]
    write_csv(out / BENCH_CSV, ("method", "median_step_ms", "normalized_runtime"), rows)
    print(f"{'method':12s} {'step ms':>9s} {'ratio':>7s}")
    for m, ms, ratio in rows:
        print(f"{m:12s} {ms:9.4f} {ratio:7.3f}")


COMMANDS = {"generate": cmd_generate, "monitor": cmd_monitor, "compare": cmd_compare, "bench": cmd_bench}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    out = args.out
    data = args.data if args.data is not None else out
    try:
        out.mkdir(parents=True, exist_ok=True)
        _write_config(out, cfg)
        COMMANDS[args.command](cfg, out, data)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (CliError, DatasetError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
