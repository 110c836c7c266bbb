import argparse
import logging

from experiment_utils import (
    METHODS,
    add_common_arguments,
    best_of,
    child_seeds,
    default_output,
    exit_code_for_results,
    get_settings_from_env,
    load_dataset_from_args,
    method_config,
    options_from_args,
    report_metadata,
    resolve_k,
    result_report,
    run_main,
    run_method,
    run_summary,
    write_json,
)
from joblib import Parallel, delayed
from pkm_errors import InputError


def parse_args(settings, argv=None):
    parser = argparse.ArgumentParser(description="Cluster one dataset with one method and write a JSON report.")
    add_common_arguments(parser, settings)
    parser.add_argument("--method", type=str, default="pkm-fmsagp", choices=METHODS, help="Clustering method (default pkm-fmsagp).")
    parser.add_argument("--seeds", type=int, default=1, help="Number of seeded runs; the lowest objective is reported (default 1).")
    parser.add_argument("--output", type=str, default=None, help="Report path (default <PKM_OUTPUT_DIR>/cluster_<method>.json).")
    return parser.parse_args(argv)


def main(argv=None):
    settings = get_settings_from_env()
    args = parse_args(settings, argv)
    output_file = args.output or default_output(settings, f"cluster_{args.method}.json")

    def cluster():
        if args.seeds < 1:
            raise InputError(f"--seeds must be at least 1, got {args.seeds}")
        dataset = load_dataset_from_args(args)
        n_clusters = resolve_k(args, dataset)
        options = options_from_args(args)
        seeds = [args.seed] if args.seeds == 1 else child_seeds(args.seed, args.seeds)

        print(f"Clustering {dataset.name} (L={dataset.n_points}, D={dataset.n_features}) into K={n_clusters} with {args.method}")
        results = Parallel(n_jobs=args.jobs)(
            delayed(run_method)(dataset, n_clusters, args.method, options, seed) for seed in seeds
        )
        for result in results:
            print(f"  - seed {result.seed}: objective {result.objective:.6f} after {result.iterations} iterations ({result.stop_reason})")

        best = best_of(results)
        report = report_metadata("cluster", args, dataset)
        report.update(
            {
                "k": n_clusters,
                "method": args.method,
                "config": method_config(args.method, options, best.seed),
                "runs": [run_summary(r) for r in results],
                "best": result_report(dataset, best),
            }
        )
        write_json(output_file, report)
        print(f"\nReport successfully saved to: {output_file}")

        code = exit_code_for_results([best])
        if code:
            logging.warning(f"Best run stopped at the iteration cap without converging ({best.iterations} iterations)")
        return code

    run_main(cluster, error_path=output_file)


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
    main()
