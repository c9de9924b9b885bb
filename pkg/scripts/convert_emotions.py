"""
Convert the emotions ARFF distribution (train and test folds) to the dataset CSV.

    python scripts/convert_emotions.py emotions-train.arff emotions-test.arff data/emotions.csv

The folds are concatenated in the order given. The last `--labels` attributes
are the labels; every other attribute is a feature.
"""
from pathlib import Path
import argparse
import logging
import sys

import numpy as np
import pandas as pd
from scipy.io import arff

from pacile.cli.main import configure_logging
from pacile.datasets import MultiLabelDataset, write_csv

logger = logging.getLogger(__name__)


def _decode(column: pd.Series) -> pd.Series:
    # nominal attributes come back as bytes
    if column.dtype == object:
        return column.map(lambda v: v.decode() if isinstance(v, bytes) else v)
    return column


def read_fold(path: Path) -> pd.DataFrame:
    data, meta = arff.loadarff(path)
    frame = pd.DataFrame(data).apply(_decode)
    logger.info(f"Read {path.name}: {len(frame)} rows, {len(meta.names())} attributes")
    return frame


def convert(folds, out_path: Path, n_labels: int = 6) -> MultiLabelDataset:
    frame = pd.concat([read_fold(Path(p)) for p in folds], ignore_index=True)
    features = frame.iloc[:, :-n_labels].apply(pd.to_numeric).to_numpy(dtype=np.float64)
    labels = frame.iloc[:, -n_labels:].apply(pd.to_numeric).to_numpy().astype(np.int8)
    dataset = MultiLabelDataset(features, labels, name=out_path.stem)
    write_csv(dataset, out_path)
    logger.info(f"Converted {len(folds)} folds: m={dataset.m}, d={dataset.n_features}, l={dataset.n_labels}")
    return dataset


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    parser.add_argument("folds", nargs="+", help="ARFF files followed by the output CSV path")
    parser.add_argument("--labels", type=int, default=6, help="number of trailing label attributes")
    args = parser.parse_args(argv)
    if len(args.folds) < 2:
        parser.error("give at least one ARFF file and the output CSV path")
    configure_logging()
    *folds, out = args.folds
    convert(folds, Path(out), args.labels)
    return 0


if __name__ == "__main__":
    sys.exit(main())
