"""Dataset ingestion, prewhitening, normalization and seeded splitting.

Whitening statistics are always fitted on training data only and then applied
unchanged to test data.  Inputs are mapped so the training sample covariance
becomes (1/d) I; outputs are centred and scaled to unit variance (population
convention).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

RIDGE_FACTOR = 1e-8


class SingularCovarianceError(Exception):
    """Training covariance not invertible even after the ridge."""


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    columns: list[str] = field(default_factory=list)
    provenance: str = ""
    dropped_rows: int = 0

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class WhiteningTransform:
    """Affine input/output transform fitted on training data.

    Whitened x = (x - mu_x) @ M_inv.T / sqrt(d) where the training covariance
    is M M'; whitened y = (y - mu_y) / sigma_y.
    """

    mu_y: float
    sigma_y: float
    mu_x: np.ndarray
    M_inv: np.ndarray
    d: int


def _resolve_column(name_or_pos, columns: list[str]) -> str:
    if isinstance(name_or_pos, int):
        return columns[name_or_pos]
    if name_or_pos not in columns:
        raise ValueError(f"missing column {name_or_pos!r}; file has {columns}")
    return name_or_pos


def load_csv(
    path,
    target_column,
    drop_columns=(),
    *,
    has_header: bool = True,
    delimiter: str = ",",
) -> Dataset:
    """Load a numeric CSV into (X, y), dropping rows with nulls or unparseable cells.

    ``target_column`` and entries of ``drop_columns`` may be names or integer
    positions (negative allowed).
    """
    path = Path(path)
    df = pd.read_csv(path, header=0 if has_header else None, sep=delimiter)
    if not has_header:
        df.columns = [f"col{i}" for i in range(df.shape[1])]
    df.columns = [str(c) for c in df.columns]
    columns = list(df.columns)

    target = _resolve_column(target_column, columns)
    drops = {_resolve_column(c, columns) for c in drop_columns}
    if target in drops:
        raise ValueError(f"target column {target!r} is also listed in drop_columns")
    df = df.drop(columns=sorted(drops))

    df = df.apply(pd.to_numeric, errors="coerce")
    before = len(df)
    df = df.dropna(axis=0)
    dropped = before - len(df)
    if len(df) == 0:
        raise ValueError(f"{path}: zero usable rows after dropping nulls")

    y = df[target].to_numpy(dtype=float)
    Xdf = df.drop(columns=[target])
    X = Xdf.to_numpy(dtype=float)
    note = f"{path.name}: {len(df)} rows, {X.shape[1]} features, {dropped} rows dropped"
    return Dataset(X=X, y=y, columns=list(Xdf.columns), provenance=note, dropped_rows=dropped)


def load_recipes(path=None) -> dict:
    """Per-dataset target/drop rules; defaults to the bundled recipe file."""
    if path is None:
        text = resources.files("gpnn.assets").joinpath("recipes.json").read_text()
    else:
        text = Path(path).read_text()
    return json.loads(text)


def load_with_recipe(path, recipe: dict) -> Dataset:
    return load_csv(
        path,
        recipe["target"],
        recipe.get("drop", ()),
        has_header=recipe.get("header", True),
        delimiter=recipe.get("delimiter", ","),
    )


def fit_whitening(train: Dataset) -> WhiteningTransform:
    """Fit the whitening transform from training data only.

    Requires n >= d + 1.  A small ridge is added when the covariance is
    near-singular; if factorization still fails the offending directions are
    reported.
    """
    X, y = train.X, train.y
    n, d = X.shape
    if n < d + 1:
        raise ValueError(f"need at least d+1={d + 1} rows to whiten, got {n}")

    mu_y = float(np.mean(y))
    sigma_y = float(np.std(y))  # population (1/n) convention
    if sigma_y <= 0:
        raise ValueError("target variance is zero; cannot normalize y")

    mu_x = X.mean(axis=0)
    Xc = X - mu_x
    cov = (Xc.T @ Xc) / n
    try:
        M = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        # a ridge rescues near-singular covariances; exactly degenerate
        # directions make the whitening meaningless and are a hard error
        scale = np.trace(cov) / d
        eigvals, eigvecs = np.linalg.eigh(cov)
        floor = 1e-12 * scale
        bad = np.where(eigvals <= floor)[0]
        if bad.size:
            directions = []
            for b in bad[:5]:
                lead = int(np.argmax(np.abs(eigvecs[:, b])))
                name = train.columns[lead] if train.columns else f"column {lead}"
                directions.append(f"{name} (eigenvalue {eigvals[b]:.3e})")
            raise SingularCovarianceError(
                "training covariance is singular; degenerate directions: "
                + "; ".join(directions)
            ) from None
        M = np.linalg.cholesky(cov + RIDGE_FACTOR * scale * np.eye(d))
    M_inv = np.linalg.inv(M)
    return WhiteningTransform(mu_y=mu_y, sigma_y=sigma_y, mu_x=mu_x, M_inv=M_inv, d=d)


def apply_whitening(t: WhiteningTransform, X: np.ndarray, y: np.ndarray | None = None):
    """Whiten inputs (and optionally outputs) with a fitted transform."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != t.d:
        raise ValueError(f"dimension mismatch: transform is {t.d}-d, data is {X.shape[1]}-d")
    Xw = (X - t.mu_x) @ t.M_inv.T / np.sqrt(t.d)
    if y is None:
        return Xw
    yw = (np.asarray(y, dtype=float) - t.mu_y) / t.sigma_y
    return Xw, yw


def invert_whitening(t: WhiteningTransform, Xw: np.ndarray, yw: np.ndarray | None = None):
    """Inverse of ``apply_whitening``."""
    Xw = np.atleast_2d(np.asarray(Xw, dtype=float))
    M = np.linalg.inv(t.M_inv)
    X = np.sqrt(t.d) * Xw @ M.T + t.mu_x
    if yw is None:
        return X
    y = np.asarray(yw, dtype=float) * t.sigma_y + t.mu_y
    return X, y


def whiten_point(t: WhiteningTransform, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != t.d:
        raise ValueError(f"dimension mismatch: transform is {t.d}-d, point is {x.shape[0]}-d")
    return (t.M_inv @ (x - t.mu_x)) / np.sqrt(t.d)


def denormalize_prediction(t: WhiteningTransform, mean_w: float, var_w: float) -> tuple[float, float]:
    """Map a whitened-space predictive (mean, variance) back to raw output units."""
    return t.sigma_y * mean_w + t.mu_y, t.sigma_y**2 * var_w


def split(ds: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded uniform split into disjoint, exhaustive train/test subsets."""
    if not (0.0 < train_fraction < 1.0):
        raise ValueError("train_fraction must be in (0, 1)")
    n = ds.n
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_train = int(round(train_fraction * n))
    n_train = min(max(n_train, 1), n - 1)
    tr, te = perm[:n_train], perm[n_train:]

    def take(idx, tag):
        return Dataset(
            X=ds.X[idx],
            y=ds.y[idx],
            columns=list(ds.columns),
            provenance=f"{ds.provenance} [{tag} split seed={seed}]",
            dropped_rows=ds.dropped_rows,
        )

    return take(tr, "train"), take(te, "test")
