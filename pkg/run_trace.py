import argparse
import logging
import os

import pandas as pd

from experiment_utils import (
    TRACE_COLUMNS,
    add_common_arguments,
    default_output,
    exit_code_for_results,
    expand_methods,
    get_settings_from_env,
    load_dataset_from_args,
    options_from_args,
    resolve_k,
    run_grid,
    run_main,
    trace_frame,
)


def parse_args(settings, argv=None):
    parser = argparse.ArgumentParser(description="Record the objective per iteration for one seed and several methods.")
    add_common_arguments(parser, settings)
    parser.add_argument("--methods", nargs="+", default=["pkm-agp", "pkm-msagp", "pkm-fmsagp"], help="Methods to trace (default: the three PKM solvers).")
    parser.add_argument("--steps", nargs="+", type=float, default=None, help="Optional: one pkm-agp trace per step length.")
    parser.add_argument("--output", type=str, default=None, help="Trace path (default <PKM_OUTPUT_DIR>/trace.csv).")
    return parser.parse_args(argv)


def main(argv=None):
    settings = get_settings_from_env()
    args = parse_args(settings, argv)
    output_file = args.output or default_output(settings, "trace.csv")

    def trace():
        dataset = load_dataset_from_args(args)
        n_clusters = resolve_k(args, dataset)
        variants = expand_methods(args.methods, options_from_args(args), steps=args.steps)

        print(f"Tracing {len(variants)} methods on {dataset.name} (K={n_clusters}, seed {args.seed})")
        cells = run_grid(dataset, n_clusters, variants, [args.seed], n_jobs=args.jobs)

        frames = []
        for cell in cells:
            if cell["result"] is None:
                print(f"  - Skipping {cell['label']}: {cell['error']['message']}")
                continue
            result = cell["result"]
            print(f"  - {cell['label']}: {result.iterations} iterations, final objective {result.objective:.6f}")
            frames.append(trace_frame(cell["label"], result))

        table = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=TRACE_COLUMNS)
        directory = os.path.dirname(output_file)
        if directory:
            os.makedirs(directory, exist_ok=True)
        table.to_csv(output_file, index=False)
        print(f"\nTrace successfully saved to: {output_file}")
        return exit_code_for_results([c["result"] for c in cells if c["result"] is not None])

    run_main(trace, error_path=os.path.splitext(output_file)[0] + "_error.json")


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
    main()
