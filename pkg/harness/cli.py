"""
PerturbKit CLI - Command-line entry point.

Subcommands:
    sweep    --config <json> [--threads N] [--destruction-check]
    perturb  --in <pkpt> --out <pkpt> --lambda <λ> --seed <u64> (--preset NAME | --select EXPR)
             [--layers L] [--dist uniform|gaussian] [--report <json>]
    eval     jnere --pred <json> --gold <json>
    eval     rouge --cand <dir> --ref <dir>
    inspect  --ckpt <pkpt>

Both eval commands print one JSON object of metric values rounded to 6 decimals.

Exit status: 0 on success, 2 on domain errors (bad input, invalid config,
corrupt checkpoint, failed run), 1 on anything unexpected.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

from data.adapters import get_adapter
from harness.config import load_config
from harness.results import emit_results, format_checkpoint_table, format_table
from harness.runner import RunError, destruction_check, results_path, run_experiment
from metrics.jnere import AdjustedCounts, adjusted_counts
from metrics.rouge import mean_scores
from noise.engine import Distribution, NoiseSpec, apply_noise
from noise.presets import preset
from noise.selector import parse_selector
from params.checkpoint import read_checkpoint, write_checkpoint


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_DOMAIN = 2

METRIC_DECIMALS = 6

DOMAIN_ERRORS = (ValueError, OSError, ArithmeticError, RunError)


# ============================================================================
# LOGGING
# ============================================================================


def setup_logging(verbose: bool = False) -> None:
    """Install one stderr handler on the root logger."""
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(
        "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    ))
    root = logging.getLogger()
    root.handlers = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


# ============================================================================
# COMMANDS
# ============================================================================


def print_metrics(values: Dict[str, float]) -> None:
    """Metric values as a JSON object, rounded to 6 decimals."""
    print(json.dumps({name: round(float(v), METRIC_DECIMALS) for name, v in values.items()}, indent=2))


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.output:
        config = config.model_copy(update={"output": args.output})
    results = run_experiment(config, threads=args.threads)
    csv_path = results_path(config)
    emit_results(results, csv_path)
    print(format_table(results))
    print(f"\nResults: {csv_path}")

    if args.destruction_check:
        rows = destruction_check(config)
        for row in rows:
            print(
                f"destruction seed={row.seed}: loss {row.loss_at_lambda:.6f} vs {row.loss_at_zero:.6f} "
                f"({'ok' if row.destroyed else 'FAILED'})"
            )
        if not all(row.destroyed for row in rows):
            logger.error("Destruction check failed: large noise did not raise the loss for every seed")
            return EXIT_DOMAIN
    return EXIT_OK


def cmd_perturb(args: argparse.Namespace) -> int:
    store = read_checkpoint(args.inp)
    if args.preset:
        selector = preset(args.preset, args.layers)
    else:
        selector = parse_selector(args.select)
    spec = NoiseSpec(lam=args.lam, selector=selector, seed=args.seed, distribution=args.dist)
    noisy, report = apply_noise(store, spec)
    write_checkpoint(noisy, args.out)
    if args.report:
        Path(args.report).write_text(report.to_json() + "\n", encoding="utf-8")
        logger.info(f"Wrote perturbation report to {args.report}")
    print(f"Perturbed {report.tensors_touched}/{len(store)} tensors ({report.elements_perturbed} elements) -> {args.out}")
    return EXIT_OK


def cmd_eval_jnere(args: argparse.Namespace) -> int:
    adapter = get_adapter("file")
    preds = adapter.load_relations(args.pred)
    golds = adapter.load_relations(args.gold)
    if len(preds) != len(golds):
        raise ValueError(f"Prediction file has {len(preds)} sentences, gold file has {len(golds)}")
    total = AdjustedCounts()
    for p, g in zip(preds, golds):
        total = total + adjusted_counts(p, g)
    print_metrics({"tp": total.tp, "fp": total.fp, "fn": total.fn, "adjusted_f1": total.f1})
    return EXIT_OK


def cmd_eval_rouge(args: argparse.Namespace) -> int:
    adapter = get_adapter("file")
    cands = adapter.load_summaries(args.cand)
    refs = adapter.load_summaries(args.ref)
    if set(cands) != set(refs):
        missing = sorted(set(cands) ^ set(refs))
        raise ValueError(f"Candidate and reference documents differ: {missing}")
    scores = mean_scores([(cands[name], refs[name]) for name in sorted(refs)])
    print_metrics({
        "rouge1": scores.rouge1,
        "rouge2": scores.rouge2,
        "rougeL": scores.rougeL,
        "rougeLsum": scores.rougeLsum,
        "rouge_average": scores.average,
    })
    return EXIT_OK


def cmd_inspect(args: argparse.Namespace) -> int:
    print(format_checkpoint_table(read_checkpoint(args.ckpt)))
    return EXIT_OK


# ============================================================================
# PARSER
# ============================================================================


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perturbkit", description="Localized parameter-noise perturbation toolkit"
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="DEBUG logging")
    sub = parser.add_subparsers(dest="command", required=True)

    swp = sub.add_parser("sweep", help="Run a location x λ x seed sweep")
    swp.add_argument("--config", required=True, help="ExperimentConfig JSON file")
    swp.add_argument("--output", default=None, help="Override the config's output directory")
    swp.add_argument("--threads", type=int, default=None, help="Worker threads (capped by PERTURBKIT_THREADS)")
    swp.add_argument(
        "--destruction-check", action="store_true", help="Also verify that λ=10 on all tensors raises the loss"
    )
    swp.set_defaults(func=cmd_sweep)

    per = sub.add_parser("perturb", help="Perturb a checkpoint")
    per.add_argument("--in", dest="inp", required=True, help="Input checkpoint")
    per.add_argument("--out", required=True, help="Output checkpoint")
    per.add_argument("--lambda", dest="lam", type=float, required=True, help="Noise intensity λ")
    per.add_argument("--seed", type=int, required=True, help="Unsigned 64-bit seed")
    which = per.add_mutually_exclusive_group(required=True)
    which.add_argument("--preset", help="Preset name (all, bias, weights, add_norm, ...)")
    which.add_argument("--select", help="Selector expression, e.g. 'kind:bias and zone:encoder'")
    per.add_argument("--layers", type=int, default=None, help="Encoder depth for layer-zone presets")
    per.add_argument("--dist", choices=[d.value for d in Distribution], default=Distribution.UNIFORM.value)
    per.add_argument("--report", default=None, help="Write the perturbation report JSON here")
    per.set_defaults(func=cmd_perturb)

    ev = sub.add_parser("eval", help="Score predictions")
    ev_sub = ev.add_subparsers(dest="metric", required=True)
    jn = ev_sub.add_parser("jnere", help="Adjusted F1 of relation predictions")
    jn.add_argument("--pred", required=True, help="Predicted relations JSON")
    jn.add_argument("--gold", required=True, help="Gold relations JSON")
    jn.set_defaults(func=cmd_eval_jnere)
    rg = ev_sub.add_parser("rouge", help="ROUGE of summary directories")
    rg.add_argument("--cand", required=True, help="Directory of candidate <doc>.txt files")
    rg.add_argument("--ref", required=True, help="Directory of reference <doc>.txt files")
    rg.set_defaults(func=cmd_eval_rouge)

    ins = sub.add_parser("inspect", help="List the tensors of a checkpoint")
    ins.add_argument("--ckpt", required=True, help="Checkpoint file")
    ins.set_defaults(func=cmd_inspect)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, run the command, map errors to exit codes.

    Returns:
        Process exit status
    """
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    try:
        return args.func(args)
    except DOMAIN_ERRORS as e:
        logger.debug("Domain error", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
