import argparse
import logging
import os
from typing import Any, Dict, List

import numpy as np
import pandas as pd

from calculate_metrics import evaluate
from experiment_utils import (
    METHODS,
    add_common_arguments,
    best_of,
    child_seeds,
    default_output,
    exit_code_for_results,
    expand_methods,
    get_settings_from_env,
    load_dataset_from_args,
    options_from_args,
    report_metadata,
    resolve_k,
    run_grid,
    run_main,
    write_json,
)
from pkm_errors import InputError
from solvers import speedup

SCORE_COLUMNS = ["sse", "dbi", "nmi", "ari", "vm"]


def parse_args(settings, argv=None):
    parser = argparse.ArgumentParser(description="Run several methods over several seeds and tabulate the scores.")
    add_common_arguments(parser, settings)
    parser.add_argument("--methods", nargs="+", default=list(METHODS), help=f"Methods to compare (default: all of {', '.join(METHODS)}).")
    parser.add_argument("--steps", nargs="+", type=float, default=None, help="Optional: one pkm-agp row per step length, e.g. 0.01 0.1.")
    parser.add_argument("--seeds", type=int, default=10, help="Seeded runs per method (default 10).")
    parser.add_argument("--output", type=str, default=None, help="Table path (default <PKM_OUTPUT_DIR>/compare.csv).")
    return parser.parse_args(argv)


def _mean(values: List[Any]):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def summarize(label: str, cells: List[Dict[str, Any]], dataset) -> Dict[str, Any]:
    """Best-of-seeds scores (lowest objective) plus per-seed means for one method."""
    results = [c["result"] for c in cells if c["result"] is not None]
    row: Dict[str, Any] = {"method": label, "runs": len(cells), "failures": len(cells) - len(results)}
    if not results:
        return row

    scores = [evaluate(dataset, r.labels, dataset.labels) for r in results]
    best_index = results.index(best_of(results))
    best = results[best_index]
    row.update(
        {
            "best_seed": best.seed,
            "objective": best.objective,
            "iterations": best.iterations,
            "converged": best.converged,
            "wall_time": best.wall_time,
            "mean_objective": _mean([r.objective for r in results]),
            "mean_iterations": _mean([r.iterations for r in results]),
            "mean_wall_time": _mean([r.wall_time for r in results]),
        }
    )
    for column in SCORE_COLUMNS:
        row[column] = scores[best_index].get(column)
        row[f"mean_{column}"] = _mean([s.get(column) for s in scores])
    return row


def add_speedup(rows: List[Dict[str, Any]]):
    by_method = {row["method"]: row for row in rows}
    msagp, fmsagp = by_method.get("pkm-msagp"), by_method.get("pkm-fmsagp")
    if msagp and fmsagp and msagp.get("mean_wall_time") and fmsagp.get("mean_wall_time") is not None:
        fmsagp["speedup_vs_msagp"] = speedup(msagp["mean_wall_time"], fmsagp["mean_wall_time"])
        print(f"  - FMSAGP / MSAGP wall-time ratio: {fmsagp['speedup_vs_msagp']:.1%}")


def main(argv=None):
    settings = get_settings_from_env()
    args = parse_args(settings, argv)
    output_file = args.output or default_output(settings, "compare.csv")
    errors_file = os.path.splitext(output_file)[0] + "_errors.json"

    def compare():
        if args.seeds < 1:
            raise InputError(f"--seeds must be at least 1, got {args.seeds}")
        dataset = load_dataset_from_args(args)
        n_clusters = resolve_k(args, dataset)
        variants = expand_methods(args.methods, options_from_args(args), steps=args.steps)
        seeds = child_seeds(args.seed, args.seeds)

        print(f"Comparing {len(variants)} methods on {dataset.name} (K={n_clusters}, {len(seeds)} seeds each)")
        cells = run_grid(dataset, n_clusters, variants, seeds, n_jobs=args.jobs)

        rows = []
        for variant in variants:
            own = [c for c in cells if c["label"] == variant.label]
            row = summarize(variant.label, own, dataset)
            rows.append(row)
            if "objective" in row:
                print(f"  - {variant.label}: best objective {row['objective']:.6f}, NMI {row.get('nmi')}, {row['failures']} failed runs")
            else:
                print(f"  - {variant.label}: every run failed")
        add_speedup(rows)

        directory = os.path.dirname(output_file)
        if directory:
            os.makedirs(directory, exist_ok=True)
        pd.DataFrame(rows).to_csv(output_file, index=False)
        print(f"\nComparison successfully saved to: {output_file}")

        failures = [{"method": c["label"], "seed": c["seed"], **c["error"]} for c in cells if c["error"]]
        if failures:
            report = report_metadata("compare", args, dataset)
            report["failures"] = failures
            write_json(errors_file, report)
            logging.warning(f"{len(failures)} runs failed; details in {errors_file}")
        return exit_code_for_results([c["result"] for c in cells if c["result"] is not None])

    run_main(compare, error_path=errors_file)


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
    main()
