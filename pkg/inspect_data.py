import argparse
import os

from datasets import DATASET_FILES, BENCHMARK_DATASETS, load_named
from experiment_utils import get_settings_from_env
from pkm_errors import PkmError


def inspect(data_dir: str):
    """(name, expected (L, K, D), found (L, K, D) or None) for every benchmark set."""
    rows = []
    for name, expected in BENCHMARK_DATASETS.items():
        if name not in DATASET_FILES:
            continue
        try:
            dataset = load_named(name, data_dir)
            found = (dataset.n_points, dataset.n_classes, dataset.n_features)
        except (PkmError, OSError):
            found = None
        rows.append((name, expected, found))
    return rows


def main(argv=None):
    settings = get_settings_from_env()
    parser = argparse.ArgumentParser(description="Check the benchmark CSVs in the data directory against their expected shapes.")
    parser.add_argument("--data-dir", "--data_dir", dest="data_dir", type=str, default=settings["data_dir"], help="Directory with the CSVs (default PKM_DATA_DIR).")
    args = parser.parse_args(argv)

    print(f"Inspecting {os.path.abspath(args.data_dir)}")
    print("Dataset\t\t\tExpected (L, K, D)\tFound")
    print("-" * 60)
    for name, expected, found in inspect(args.data_dir):
        if found is None:
            print(f"{name:<20}\t{expected}\t\tMISSING")
            continue
        flag = "" if found == expected else "\t<- differs"
        print(f"{name:<20}\t{expected}\t\t{found}{flag}")


if __name__ == "__main__":
    main()
