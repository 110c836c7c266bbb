import argparse
import logging
import os

import pandas as pd

from calculate_metrics import robustness
from experiment_utils import (
    add_common_arguments,
    default_output,
    expand_methods,
    get_settings_from_env,
    load_dataset_from_args,
    make_algorithm,
    options_from_args,
    resolve_k,
    run_main,
)
from pkm_errors import EXIT_OK, InputError

ROBUSTNESS_COLUMNS = ["method", "runs", "correct", "percentage"]


def parse_args(settings, argv=None):
    parser = argparse.ArgumentParser(
        description="Count how many randomly initialized runs recover the labeled partition exactly."
    )
    add_common_arguments(parser, settings)
    parser.add_argument("--methods", nargs="+", default=["pkm-fmsagp", "kmeanspp", "fcm"], help="Methods to test (default pkm-fmsagp kmeanspp fcm).")
    parser.add_argument("--runs", type=int, default=100, help="Runs per method (default 100).")
    parser.add_argument("--fuzzifiers", nargs="+", type=float, default=None, help="Optional: one fcm row per fuzzifier, e.g. 1.1 1.3 2.0.")
    parser.add_argument("--output", type=str, default=None, help="Table path (default <PKM_OUTPUT_DIR>/robustness.csv).")
    return parser.parse_args(argv)


def main(argv=None):
    settings = get_settings_from_env()
    args = parse_args(settings, argv)
    output_file = args.output or default_output(settings, "robustness.csv")

    def count_recoveries():
        dataset = load_dataset_from_args(args)
        if dataset.labels is None:
            raise InputError("Robustness needs a dataset with labels (use --label-col or --data artificial)")
        n_clusters = resolve_k(args, dataset)
        variants = expand_methods(args.methods, options_from_args(args), fuzzifiers=args.fuzzifiers)

        if args.runs < 0:
            raise InputError(f"--runs must not be negative, got {args.runs}")

        print(f"Robustness on {dataset.name}: {args.runs} runs per method, K={n_clusters}")
        rows = []
        # zero runs leaves the table empty
        for variant in variants if args.runs else []:
            algorithm = make_algorithm(n_clusters, variant.method, variant.options)
            correct = robustness(dataset, dataset.labels, algorithm, args.runs, seed=args.seed, n_jobs=args.jobs)
            rows.append(
                {
                    "method": variant.label,
                    "runs": args.runs,
                    "correct": correct,
                    "percentage": 100.0 * correct / args.runs,
                }
            )
            print(f"  - {variant.label}: {correct}/{args.runs} runs recovered the partition")

        directory = os.path.dirname(output_file)
        if directory:
            os.makedirs(directory, exist_ok=True)
        pd.DataFrame(rows, columns=ROBUSTNESS_COLUMNS).to_csv(output_file, index=False)
        print(f"\nRobustness counts successfully saved to: {output_file}")
        return EXIT_OK

    run_main(count_recoveries, error_path=os.path.splitext(output_file)[0] + "_error.json")


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
    main()
