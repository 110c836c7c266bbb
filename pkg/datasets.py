"""
Dataset ingestion (CSV), the generated four-class artificial dataset and
feature hygiene helpers.
"""
import logging
import os
import re
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd

from pkm_errors import EmptyDataset, InputError, NonFiniteValue, ParseError
from pkm_types import Dataset

logger = logging.getLogger(__name__)

# Instances, classes and dimension of the benchmark sets, keyed by display name.
BENCHMARK_DATASETS: Dict[str, Tuple[int, int, int]] = {
    "Artificial": (310, 4, 2),
    "Iris": (150, 3, 4),
    "Parkinson": (195, 2, 22),
    "Seeds": (210, 3, 7),
    "Segmentation": (210, 7, 19),
    "Glass": (214, 6, 9),
    "Ionosphere": (351, 2, 33),
    "Dermatology": (358, 6, 34),
    "Breast-cancer": (683, 2, 9),
    "Natural": (2000, 9, 294),
    "Yeast": (2426, 3, 24),
    "Waveform": (5000, 3, 21),
    "Satellite": (6435, 6, 36),
    "Epileptic": (11500, 5, 178),
}

# File names looked up under PKM_DATA_DIR; labels are in the last column.
DATASET_FILES: Dict[str, str] = {
    name: f"{name.lower()}.csv" for name in BENCHMARK_DATASETS if name != "Artificial"
}


@dataclass
class CsvOptions:
    has_header: bool = False
    label_column: Optional[int] = None
    delimiter: str = ","


@dataclass
class ArtificialGeometry:
    # small blobs sit above the left and below the right large blob
    centers: Tuple[Tuple[float, float], ...] = ((0.0, 0.0), (6.0, 0.0), (-1.0, 8.0), (7.0, -8.0))
    sizes: Tuple[int, ...] = (150, 150, 5, 5)
    sigmas: Tuple[float, ...] = (0.8, 0.8, 0.3, 0.3)
    max_draws: int = 100


def _parser_error_row(message: str) -> int:
    match = re.search(r"line (\d+)", message)
    return int(match.group(1)) if match else -1


def load_csv(path: str, options: Optional[CsvOptions] = None, name: Optional[str] = None) -> Dataset:
    """
    Read a delimited text file (gzip accepted by extension) into a Dataset.

    Errors carry 1-based file line numbers and 0-based column indices; nothing
    is returned for a file that fails any check.
    """
    options = options or CsvOptions()
    try:
        frame = pd.read_csv(
            path,
            header=0 if options.has_header else None,
            sep=options.delimiter,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=True,
            compression="infer",
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError as e:
        raise EmptyDataset(str(path)) from e
    except pd.errors.ParserError as e:
        raise ParseError(_parser_error_row(str(e)), -1, str(e)) from e

    if frame.empty or frame.shape[1] == 0:
        raise EmptyDataset(str(path))

    line_offset = 2 if options.has_header else 1
    n_columns = frame.shape[1]
    label_column = options.label_column
    if label_column is not None:
        if not -n_columns <= label_column < n_columns:
            raise InputError(f"Label column {label_column} out of range for {n_columns} columns")
        label_column %= n_columns
    feature_columns = [c for c in range(n_columns) if c != label_column]
    if not feature_columns:
        raise EmptyDataset(str(path))

    used = feature_columns if label_column is None else sorted(feature_columns + [label_column])
    # short rows come back as NaN, empty fields as ""
    blank = frame.iloc[:, used].fillna("").apply(lambda column: column.str.strip().eq("")).to_numpy()
    if blank.any():
        row, position = np.argwhere(blank)[0]
        raise ParseError(int(row) + line_offset, used[int(position)], "")

    features = np.empty((frame.shape[0], len(feature_columns)))
    for position, column in enumerate(feature_columns):
        cells = frame.iloc[:, column].str.strip()
        values = pd.to_numeric(cells, errors="coerce").to_numpy(dtype=float)
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            row = int(bad[0])
            try:
                float(cells.iloc[row])
            except ValueError:
                raise ParseError(row + line_offset, column, cells.iloc[row]) from None
            raise NonFiniteValue(row + line_offset, column)
        features[:, position] = values

    labels, label_names = None, None
    if label_column is not None:
        codes, uniques = pd.factorize(frame.iloc[:, label_column].str.strip())
        labels = codes
        label_names = tuple(str(u) for u in uniques)

    dataset_name = name or os.path.basename(str(path)).split(".")[0]
    logger.info("Loaded %s: L=%d, D=%d", dataset_name, features.shape[0], features.shape[1])
    return Dataset(points=features, labels=labels, name=dataset_name, label_names=label_names)


def load_named(name: str, data_dir: str) -> Dataset:
    """Load one of the benchmark CSVs from data_dir (label in the last column)."""
    path = os.path.join(data_dir, DATASET_FILES[name])
    if not os.path.exists(path) and os.path.exists(path + ".gz"):
        path += ".gz"
    return load_csv(path, CsvOptions(label_column=-1), name=name)


def _recoverable(points: np.ndarray, labels: np.ndarray, n_classes: int, max_iterations: int = 100) -> bool:
    # hard K-means started at the true class means must return the true partition
    centers = np.array([points[labels == j].mean(axis=0) for j in range(n_classes)])
    assigned = labels
    for _ in range(max_iterations):
        distances = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assigned = np.argmin(distances, axis=1)
        if np.bincount(assigned, minlength=n_classes).min() == 0:
            return False
        updated = np.array([points[assigned == j].mean(axis=0) for j in range(n_classes)])
        if np.allclose(updated, centers):
            break
        centers = updated
    return bool(np.array_equal(assigned, labels))


def make_artificial(seed=0, geometry: Optional[ArtificialGeometry] = None) -> Dataset:
    """
    Four isotropic Gaussian blobs: two large (150 points) and two small (5 points).
    Draws are repeated from the same generator until hard K-means from the true
    means recovers the partition, so the result depends only on the seed.
    """
    geometry = geometry or ArtificialGeometry()
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(len(geometry.sizes)), geometry.sizes)
    for draw in range(geometry.max_draws):
        points = np.vstack(
            [
                rng.normal(loc=center, scale=sigma, size=(size, 2))
                for center, size, sigma in zip(geometry.centers, geometry.sizes, geometry.sigmas)
            ]
        )
        if _recoverable(points, labels, len(geometry.sizes)):
            break
        logger.debug("Artificial draw %d not separable, redrawing", draw)
    else:
        logger.warning("No separable artificial draw in %d attempts; keeping the last one", geometry.max_draws)
    return Dataset(points=points, labels=labels, name="artificial")


def zscore(dataset: Dataset) -> Dataset:
    mean = dataset.points.mean(axis=0)
    scale = dataset.points.std(axis=0)
    scale[scale == 0.0] = 1.0
    return Dataset(
        points=(dataset.points - mean) / scale,
        labels=dataset.labels,
        name=dataset.name,
        label_names=dataset.label_names,
        preprocessing="zscore",
    )


def subsample(dataset: Dataset, n_points: int, seed=0) -> Dataset:
    """Uniform random subset of n_points rows, original order kept."""
    if n_points >= dataset.n_points:
        return dataset
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(dataset.n_points, size=n_points, replace=False))
    labels = None if dataset.labels is None else dataset.labels[keep]
    return Dataset(
        points=dataset.points[keep],
        labels=labels,
        name=f"{dataset.name}[{n_points}]",
        label_names=dataset.label_names,
        preprocessing=dataset.preprocessing,
    )
