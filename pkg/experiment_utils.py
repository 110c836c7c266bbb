import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, replace
from functools import partial
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from dotenv import load_dotenv
from joblib import Parallel, delayed

from baselines import FcmConfig, fcm, kmeans_pp
from calculate_metrics import NMI_VARIANT, evaluate
from datasets import CsvOptions, load_csv, make_artificial, zscore
from pkm_errors import EXIT_INPUT_ERROR, EXIT_NOT_CONVERGED, EXIT_OK, InputError, PkmError, exit_code_for
from pkm_types import ClusterResult, Dataset
from solvers import DEFAULT_LK_CAP, Method, SolverConfig, derive_seed, solve

CODE_VERSION = "0.1.0"

METHODS = ("pkm-agp", "pkm-msagp", "pkm-fmsagp", "kmeanspp", "fcm")

TRACE_COLUMNS = ["method", "iteration", "objective", "step_length", "active_count"]

# Report fields that legitimately differ between two identical invocations.
WALL_TIME_FIELDS = ("wall_time", "mean_wall_time", "speedup_vs_msagp")


# --- Configuration ---

def get_settings_from_env() -> Dict[str, Any]:
    """
    Reads optional settings from the environment (a .env file is loaded first).

    Environment variables:
        PKM_OUTPUT_DIR: Default directory for reports (default 'results').
        PKM_DATA_DIR: Directory holding the benchmark CSVs (default 'data').
        PKM_LK_CAP: Largest L*K the dense projection solvers accept.
    """
    load_dotenv()
    return {
        "output_dir": os.getenv("PKM_OUTPUT_DIR", "results"),
        "data_dir": os.getenv("PKM_DATA_DIR", "data"),
        "lk_cap": int(os.getenv("PKM_LK_CAP", DEFAULT_LK_CAP)),
    }


@dataclass
class MethodOptions:
    step: float = 0.01
    m: float = 1.3
    max_iterations: Optional[int] = None
    lk_cap: int = DEFAULT_LK_CAP


@dataclass
class MethodVariant:
    label: str
    method: str
    options: MethodOptions


def expand_methods(
    methods: Sequence[str],
    options: MethodOptions,
    steps: Optional[Sequence[float]] = None,
    fuzzifiers: Optional[Sequence[float]] = None,
) -> List[MethodVariant]:
    """One variant per method, or per step length for AGP and per m for FCM."""
    variants: List[MethodVariant] = []
    for method in methods:
        if method not in METHODS:
            raise InputError(f"Unknown method '{method}'. Choose from {', '.join(METHODS)}")
        if method == "pkm-agp" and steps:
            variants += [MethodVariant(f"pkm-agp(t={t:g})", method, replace(options, step=t)) for t in steps]
        elif method == "fcm" and fuzzifiers:
            variants += [MethodVariant(f"fcm(m={m:g})", method, replace(options, m=m)) for m in fuzzifiers]
        else:
            variants.append(MethodVariant(method, method, options))
    return variants


# --- Running methods ---

def solver_config(method: str, options: MethodOptions, seed: Optional[int]) -> SolverConfig:
    cfg = SolverConfig(method=Method(method.split("-", 1)[1]), step_length=options.step, seed=seed, lk_cap=options.lk_cap)
    if options.max_iterations is not None:
        cfg.max_iterations = options.max_iterations
    return cfg


def fcm_config(options: MethodOptions, seed: Optional[int]) -> FcmConfig:
    cfg = FcmConfig(m=options.m, seed=seed)
    if options.max_iterations is not None:
        cfg.max_iterations = options.max_iterations
    return cfg


def method_config(method: str, options: MethodOptions, seed: Optional[int]) -> Dict[str, Any]:
    """Full effective configuration of one run, as written into reports."""
    if method.startswith("pkm-"):
        return solver_config(method, options, seed).to_dict()
    if method == "fcm":
        return fcm_config(options, seed).to_dict()
    return {"seed": seed, "max_iterations": options.max_iterations or 300}


def run_method(X, n_clusters: int, method: str, options: MethodOptions, seed: Optional[int]) -> ClusterResult:
    if method.startswith("pkm-"):
        return solve(X, n_clusters, solver_config(method, options, seed))
    if method == "fcm":
        return fcm(X, n_clusters, fcm_config(options, seed))
    if method == "kmeanspp":
        return kmeans_pp(X, n_clusters, seed, max_iterations=options.max_iterations or 300)
    raise InputError(f"Unknown method '{method}'")


def _labels_for(X, seed, n_clusters: int, method: str, options: MethodOptions) -> np.ndarray:
    return run_method(X, n_clusters, method, options, seed).labels


def make_algorithm(n_clusters: int, method: str, options: MethodOptions) -> Callable:
    """Picklable `algorithm(X, seed) -> labels` for the robustness protocol."""
    return partial(_labels_for, n_clusters=n_clusters, method=method, options=options)


def _guarded_run(X, n_clusters: int, variant: MethodVariant, seed: Optional[int]) -> Dict[str, Any]:
    try:
        result = run_method(X, n_clusters, variant.method, variant.options, seed)
        return {"label": variant.label, "seed": seed, "result": result, "error": None}
    except PkmError as e:
        logging.error(f"{variant.label} with seed {seed} failed: {e}")
        return {"label": variant.label, "seed": seed, "result": None, "error": e.to_record()}


def run_grid(
    X,
    n_clusters: int,
    variants: Sequence[MethodVariant],
    seeds: Sequence[Optional[int]],
    n_jobs: int = 1,
) -> List[Dict[str, Any]]:
    """Every variant x seed, fanned out over a joblib pool; output order is fixed."""
    cells = [(variant, seed) for variant in variants for seed in seeds]
    return Parallel(n_jobs=n_jobs)(delayed(_guarded_run)(X, n_clusters, v, s) for v, s in cells)


def child_seeds(master_seed: int, count: int) -> List[int]:
    return [derive_seed(master_seed, index) for index in range(count)]


def best_of(results: Sequence[ClusterResult]) -> ClusterResult:
    # lowest objective, earliest run on ties
    return min(results, key=lambda r: r.objective)


# --- Reports ---

def dataset_summary(dataset: Dataset) -> Dict[str, Any]:
    return {
        "name": dataset.name,
        "n_points": dataset.n_points,
        "n_features": dataset.n_features,
        "n_classes": dataset.n_classes,
        "label_names": list(dataset.label_names) if dataset.label_names else None,
        "preprocessing": dataset.preprocessing,
    }


def run_summary(result: ClusterResult) -> Dict[str, Any]:
    return {
        "seed": result.seed,
        "method": result.method,
        "objective": result.objective,
        "iterations": result.iterations,
        "converged": result.converged,
        "stop_reason": result.stop_reason,
        "restarts": result.restarts,
        "wall_time": result.wall_time,
    }


def result_report(dataset: Dataset, result: ClusterResult) -> Dict[str, Any]:
    report = run_summary(result)
    report.update(
        {
            "labels": result.labels.tolist(),
            "centers": result.centers.tolist(),
            "metrics": evaluate(dataset, result.labels, dataset.labels),
            "trace": [vars(record) for record in result.trace],
        }
    )
    return report


def report_metadata(command: str, args: argparse.Namespace, dataset: Dataset) -> Dict[str, Any]:
    return {
        "code_version": CODE_VERSION,
        "command": command,
        "arguments": dict(sorted(vars(args).items())),
        "dataset": dataset_summary(dataset),
        "nmi_variant": NMI_VARIANT,
    }


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def write_json(path: str, payload: Dict[str, Any]):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")


def strip_wall_times(payload):
    """Copy of a report without wall-time fields, for determinism checks."""
    if isinstance(payload, dict):
        return {k: strip_wall_times(v) for k, v in payload.items() if k not in WALL_TIME_FIELDS}
    if isinstance(payload, list):
        return [strip_wall_times(v) for v in payload]
    return payload


def trace_frame(label: str, result: ClusterResult) -> pd.DataFrame:
    frame = result.trace_frame()
    frame.insert(0, "method", label)
    return frame[TRACE_COLUMNS]


def load_trace(path: str) -> pd.DataFrame:
    frame = pd.read_csv(path)
    missing = [c for c in TRACE_COLUMNS if c not in frame.columns]
    if missing:
        raise InputError(f"Trace file {path} is missing columns {missing}")
    return frame


# --- Command-line plumbing ---

def add_common_arguments(parser: argparse.ArgumentParser, settings: Dict[str, Any]):
    parser.add_argument("--data", type=str, required=True, help="CSV file, or 'artificial' for the generated 4-class dataset.")
    parser.add_argument("--label-col", "--label_col", dest="label_col", type=int, default=None, help="Optional: index of the label column (negative counts from the end).")
    parser.add_argument("--has-header", "--has_header", dest="has_header", action="store_true", help="Skip the first CSV line.")
    parser.add_argument("--delimiter", type=str, default=",", help="CSV delimiter (default ',').")
    parser.add_argument("--zscore", action="store_true", help="Standardize every feature before clustering.")
    parser.add_argument("--k", type=int, default=None, help="Number of clusters (default: number of classes in the labels).")
    parser.add_argument("--seed", type=int, default=0, help="Master seed; run seeds are derived from it.")
    parser.add_argument("--jobs", type=int, default=1, help="Worker processes for multi-run commands (default 1).")
    parser.add_argument("--step", type=float, default=0.01, help="AGP step length t (default 0.01).")
    parser.add_argument("--m", type=float, default=1.3, help="FCM fuzzifier m > 1 (default 1.3).")
    parser.add_argument("--max-iterations", "--max_iterations", dest="max_iterations", type=int, default=None, help="Optional: iteration cap for every method.")
    parser.add_argument("--lk-cap", "--lk_cap", dest="lk_cap", type=int, default=settings["lk_cap"], help="Largest L*K accepted by the PKM solvers.")


def load_dataset_from_args(args: argparse.Namespace) -> Dataset:
    if args.data == "artificial":
        dataset = make_artificial(args.seed)
    else:
        options = CsvOptions(has_header=args.has_header, label_column=args.label_col, delimiter=args.delimiter)
        dataset = load_csv(args.data, options)
    return zscore(dataset) if args.zscore else dataset


def resolve_k(args: argparse.Namespace, dataset: Dataset) -> int:
    if args.k is not None:
        return args.k
    if dataset.n_classes is None:
        raise InputError("--k is required when the dataset has no labels")
    return dataset.n_classes


def options_from_args(args: argparse.Namespace) -> MethodOptions:
    return MethodOptions(step=args.step, m=args.m, max_iterations=args.max_iterations, lk_cap=args.lk_cap)


def default_output(settings: Dict[str, Any], filename: str) -> str:
    return os.path.join(settings["output_dir"], filename)


def exit_code_for_results(results: Sequence[ClusterResult]) -> int:
    return EXIT_OK if all(r.converged for r in results) else EXIT_NOT_CONVERGED


def run_main(main: Callable[[], Optional[int]], error_path: Optional[str] = None):
    """Run a script entry point, turning package errors into an error record and exit code."""
    try:
        code = main()
    except PkmError as e:
        code = exit_code_for(e)
        record = e.to_record()
    except OSError as e:
        code = EXIT_INPUT_ERROR
        record = {"error": type(e).__name__, "message": str(e)}
    else:
        sys.exit(EXIT_OK if code is None else code)

    print(f"Error: {record['message']}")
    if error_path:
        write_json(error_path, record)
        print(f"Error record saved to: {error_path}")
    else:
        print(json.dumps(record, sort_keys=True))
    sys.exit(code)
