"""Dataset container and CSV round trip.

A :class:`Dataset` bundles the variables every pipeline needs: machine
learning input features, the treatment (independent variable of the
downstream regression), the outcome, an optional block of controls and
instruments, and the labeled-row mask that marks where ground truth is
available.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from .exceptions import DimensionMismatch, EmptyLabeledSet
from .validation import as_float_matrix, as_float_vector, check_rows


@dataclass(frozen=True)
class Dataset:
    """Immutable bundle of aligned columns.

    Parameters
    ----------
    features : ndarray, shape (n, d)
        Inputs for the predictive model.
    treatment : ndarray, shape (n,) or (n, q)
        Independent variable(s) of the downstream regression.
    y : ndarray, shape (n,)
        Outcome. Ground truth is only trusted on labeled rows.
    labeled : ndarray of bool, shape (n,), optional
        Rows with usable ground truth. Defaults to all rows.
    controls : ndarray, shape (n, k), optional
    instrument : ndarray, shape (n, m), optional
    """

    features: np.ndarray
    treatment: np.ndarray
    y: np.ndarray
    labeled: np.ndarray = None
    controls: np.ndarray = None
    instrument: np.ndarray = None

    def __post_init__(self):
        features = as_float_matrix(self.features, "features")
        n = features.shape[0]
        treatment = np.asarray(self.treatment, dtype=np.float64)
        if treatment.ndim not in (1, 2):
            raise DimensionMismatch("treatment must be 1-D or 2-D")
        if not np.isfinite(treatment).all():
            raise ValueError("treatment must be finite")
        y = as_float_vector(self.y, "y")
        check_rows(n, treatment, "treatment")
        check_rows(n, y, "y")
        if self.labeled is None:
            labeled = np.ones(n, dtype=bool)
        else:
            labeled = np.asarray(self.labeled, dtype=bool)
            check_rows(n, labeled, "labeled")
        controls = None
        if self.controls is not None:
            controls = as_float_matrix(self.controls, "controls")
            check_rows(n, controls, "controls")
        instrument = None
        if self.instrument is not None:
            instrument = as_float_matrix(self.instrument, "instrument")
            check_rows(n, instrument, "instrument")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "treatment", treatment)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "labeled", labeled)
        object.__setattr__(self, "controls", controls)
        object.__setattr__(self, "instrument", instrument)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def n_labeled(self) -> int:
        return int(self.labeled.sum())

    @property
    def labeled_indices(self) -> np.ndarray:
        return np.flatnonzero(self.labeled)

    @property
    def treatment_matrix(self) -> np.ndarray:
        """Treatment as a 2-D column block."""
        t = self.treatment
        return t[:, None] if t.ndim == 1 else t

    def with_labels(self, rows) -> "Dataset":
        """Copy of the dataset where only ``rows`` count as labeled."""
        rows = np.asarray(rows)
        if rows.dtype == bool:
            mask = rows.copy()
        else:
            mask = np.zeros(self.n, dtype=bool)
            mask[rows] = True
        if not mask.any():
            raise EmptyLabeledSet("label mask selects no rows")
        return replace(self, labeled=mask)

    def take(self, rows) -> "Dataset":
        """Row subset (duplicates allowed), all rows marked labeled.

        Bootstrap resampling uses this to build training sets with
        repeated rows, which a boolean mask cannot express.
        """
        rows = np.asarray(rows, dtype=np.int64)
        t = self.treatment[rows] if self.treatment.ndim == 1 else self.treatment[rows, :]
        return Dataset(
            features=self.features[rows],
            treatment=t,
            y=self.y[rows],
            labeled=np.ones(rows.size, dtype=bool),
            controls=None if self.controls is None else self.controls[rows],
            instrument=None if self.instrument is None else self.instrument[rows],
        )


def write_dataset_csv(dataset: Dataset, path: str, w=None, predictions=None) -> None:
    """Write the flat CSV layout: id, y, x, w, f1..fD[, c*, z*, yhat], labeled_flag."""
    n = dataset.n
    cols = {"id": np.arange(n, dtype=np.int64), "y": dataset.y}
    t = dataset.treatment_matrix
    if t.shape[1] == 1:
        cols["x"] = t[:, 0]
    else:
        for j in range(t.shape[1]):
            cols[f"x{j + 1}"] = t[:, j]
    cols["w"] = np.full(n, np.nan) if w is None else np.asarray(w, dtype=np.float64)
    for j in range(dataset.features.shape[1]):
        cols[f"f{j + 1}"] = dataset.features[:, j]
    if dataset.controls is not None:
        for j in range(dataset.controls.shape[1]):
            cols[f"c{j + 1}"] = dataset.controls[:, j]
    if dataset.instrument is not None:
        for j in range(dataset.instrument.shape[1]):
            cols[f"z{j + 1}"] = dataset.instrument[:, j]
    if predictions is not None:
        cols["yhat"] = np.asarray(predictions, dtype=np.float64)
    cols["labeled_flag"] = dataset.labeled.astype(np.int64)
    pd.DataFrame(cols).to_csv(path, index=False, float_format="%.17g")


def read_dataset_csv(path: str):
    """Inverse of :func:`write_dataset_csv`.

    Returns
    -------
    (dataset, w, predictions)
        ``w`` and ``predictions`` are None when absent from the file.
    """
    frame = pd.read_csv(path)

    def block(prefix):
        names = [c for c in frame.columns if c.startswith(prefix) and c[len(prefix):].isdigit()]
        names.sort(key=lambda c: int(c[len(prefix):]))
        if not names:
            return None
        return frame[names].to_numpy(dtype=np.float64)

    features = block("f")
    if features is None:
        raise DimensionMismatch(f"{path} has no feature columns f1..fD")
    if "x" in frame.columns:
        treatment = frame["x"].to_numpy(dtype=np.float64)
    else:
        treatment = block("x")
        if treatment is None:
            raise DimensionMismatch(f"{path} has no treatment column")
    dataset = Dataset(
        features=features,
        treatment=treatment,
        y=frame["y"].to_numpy(dtype=np.float64),
        labeled=frame["labeled_flag"].to_numpy(dtype=np.int64).astype(bool),
        controls=block("c"),
        instrument=block("z"),
    )
    w = None
    if "w" in frame.columns:
        w_col = frame["w"].to_numpy(dtype=np.float64)
        if np.isfinite(w_col).all():
            w = w_col
    predictions = None
    if "yhat" in frame.columns:
        predictions = frame["yhat"].to_numpy(dtype=np.float64)
    return dataset, w, predictions


def write_sidecar(path: str, meta: dict) -> None:
    from .util import atomic_write_text

    atomic_write_text(path, json.dumps(meta, sort_keys=True, indent=2) + "\n")


def read_sidecar(path: str) -> dict:
    with open(path) as handle:
        return json.load(handle)
