"""
Command-line entry point.

Subcommands::

    cld simulate  --config exp.cfg --seed 0 --out runs/log.csv
    cld train     --config exp.cfg --log runs/log.csv --method cld --out runs/model.ckpt
    cld evaluate  --config exp.cfg --checkpoint runs/model.ckpt
    cld sweep     --config exp.cfg --axis eta_true --values 0,0.5,1,2 --out runs/eta.csv
    cld fig2      --out runs/fig2.csv
    cld plot-data --input runs/eta_summary.csv --out-dir runs/plots

The dataset is rebuilt from the experiment config by every subcommand, so a
click log and the checkpoints trained on it refer to the same documents.
"""
import argparse
import logging
import os
import sys
from typing import List, Sequence

from src.conf.config import configure_logging, settings
from src.exceptions import CldError, ConfigError
from src.repository.checkpoints import load_ranker, save_ranker, save_vector, write_trace
from src.repository.clicklog import read_click_log, write_click_log
from src.repository.config_file import read_config
from src.repository.results import write_results, write_summary, write_table
from src.schemas import METHODS, SWEEP_AXES, ExperimentConfig, Fig2Config
from src.services.estimators import train_method
from src.services.harness import emit_plot_data, fig2_study, prepare_data, simulate, summarize, sweep
from src.services.metrics import evaluate
from src.services.policy import train_logging_policy

logger = logging.getLogger(__name__)


def _experiment(path: str | None) -> ExperimentConfig:
    return read_config(path, ExperimentConfig) if path else ExperimentConfig()


def _output(path: str | None, name: str) -> str:
    path = path or os.path.join(settings.output_dir, name)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    return path


def _parse_values(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values must be comma-separated numbers, got {text!r}")


def cmd_simulate(args) -> None:
    config = _experiment(args.config)
    train, _ = prepare_data(config)
    policy, log = simulate(config, train, args.seed)
    out = _output(args.out, "clicks.csv")
    write_click_log(log, out)
    if args.policy_out:
        save_vector(policy.weights, _output(args.policy_out, "policy.txt"))
    print(out)


def cmd_train(args) -> None:
    config = _experiment(args.config)
    train, _ = prepare_data(config)
    log = read_click_log(args.log, train)
    policy = train_logging_policy(train, config.policy_fraction, args.seed) if args.method == "oracle" else None
    ranker = train_method(args.method, log, train, config.cld_config(args.seed), policy, config.k_cutoff)
    out = _output(args.out, f"{args.method}.ckpt")
    save_ranker(ranker, out)
    if args.trace and ranker.trace:
        write_trace(ranker.trace, _output(args.trace, f"{args.method}_trace.csv"))
    print(out)


def cmd_evaluate(args) -> None:
    config = _experiment(args.config)
    _, test = prepare_data(config)
    report = evaluate(load_ranker(args.checkpoint), test, graded=config.graded_eval)
    text = report.json(sort_keys=True)
    if args.out:
        with open(_output(args.out, "metrics.json"), "w", encoding="utf-8") as f:
            f.write(text + "\n")
    print(text)


def cmd_sweep(args) -> None:
    config = _experiment(args.config)
    runs = sweep(config, args.axis, _parse_values(args.values))
    out = _output(args.out, f"sweep_{args.axis}.csv")
    write_results(runs, out, config.record_timing)
    summary_path = args.summary or os.path.splitext(out)[0] + "_summary.csv"
    write_summary(summarize(runs, args.axis), summary_path)
    failed = [run for run in runs if not run.ok]
    if failed:
        logger.warning("%d of %d cells failed", len(failed), len(runs))
    print(out)


def cmd_fig2(args) -> None:
    config = read_config(args.config, Fig2Config) if args.config else Fig2Config()
    out = _output(args.out, "fig2.csv")
    write_table(fig2_study(config), out)
    print(out)


def cmd_plot_data(args) -> None:
    for path in emit_plot_data(args.input, args.out_dir or os.path.join(settings.output_dir, "plots"), args.axis):
        print(path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cld", description="Click simulation and unbiased ranking estimators")
    parser.add_argument("--log-level", default=None, help="overrides CLD_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a click log on the training split")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--policy-out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train one method on a click log")
    p.add_argument("--config")
    p.add_argument("--log", required=True)
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--trace")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on the test split")
    p.add_argument("--config")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="run the experiment over the values of one axis")
    p.add_argument("--config")
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", required=True)
    p.add_argument("--out")
    p.add_argument("--summary")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fig2", help="fit lines to clean and biased one-dimensional data")
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fig2)

    p = sub.add_parser("plot-data", help="write one series file per metric and method")
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir")
    p.add_argument("--axis", choices=SWEEP_AXES)
    p.set_defaults(func=cmd_plot_data)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        args.func(args)
    except CldError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
