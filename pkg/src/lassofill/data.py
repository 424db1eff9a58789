"""Synthetic problem generation, CSV ingestion, missingness injection, splits.

Everything here is a pure function of its inputs and seed; the same seed
always reproduces the same dataset bit for bit.

CSV conventions: comma separator, optional single header row, and the
tokens "NA"/"NaN" (case-insensitive) or an empty cell denote a missing
entry. Values are written with 12 significant digits. A saved dataset gets
a plain-text ``key=value`` sidecar recording seed, generation parameters,
and provenance.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import DataError, IngestError
from .matrices import MaskedMatrix

_MISSING_TOKENS = {"", "na", "nan"}
_CSV_FORMAT = "%.12g"


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a synthetic sparse-regression problem with missing data.

    `block_corr`/`block_size` mix features within consecutive blocks so the
    within-block population correlation equals `block_corr`. `rank`, when
    given, projects the design to that rank before mixing. `miss_rate` is
    the independent per-entry missingness probability on the train design.
    """

    m: int
    n: int
    sparsity: int
    rank: int | None = None
    block_corr: float = 0.0
    block_size: int = 1
    miss_rate: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError("dimensions must be positive")
        if not 0 <= self.sparsity <= self.n:
            raise ValueError("sparsity must lie in [0, n]")
        if self.rank is not None and not 1 <= self.rank <= min(self.m, self.n):
            raise ValueError("rank must lie in [1, min(m, n)]")
        if not 0.0 <= self.block_corr < 1.0:
            raise ValueError("block_corr must lie in [0, 1)")
        if self.block_size < 1:
            raise ValueError("block_size must be positive")
        if not 0.0 <= self.miss_rate < 1.0:
            raise ValueError("miss_rate must lie in [0, 1)")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be nonnegative")


@dataclass(frozen=True)
class RegressionProblem:
    """Labels plus masked design, with ground truth when synthetic."""

    y: np.ndarray
    xhat: MaskedMatrix
    beta_true: np.ndarray | None = None
    x_true: np.ndarray | None = None


@dataclass(frozen=True)
class Dataset:
    """Train problem plus a fully observed holdout portion.

    The test design never carries injected missingness: holdout RMSE must
    not depend on any imputation.
    """

    problem: RegressionProblem
    test_x: np.ndarray
    test_y: np.ndarray
    feature_names: list[str]
    label_name: str
    provenance: dict

    @property
    def n_features(self) -> int:
        return self.problem.xhat.n


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Draw a linear-model dataset y = X beta + noise per the spec fields.

    The design starts standard Gaussian, is rank-projected if requested,
    then block-mixed: each block of `block_size` columns shares a fresh
    Gaussian factor g via ``x_j <- sqrt(1-rho) x_j + sqrt(rho) g``, giving
    within-block population correlation rho at unit variance. The true
    weights have `sparsity` nonzeros with magnitudes uniform in [1, 2] and
    random signs at uniformly random positions.
    """
    rng = np.random.default_rng(spec.seed)
    x = rng.standard_normal((spec.m, spec.n))
    if spec.rank is not None and spec.rank < min(spec.m, spec.n):
        u, s, vt = np.linalg.svd(x, full_matrices=False)
        x = (u[:, : spec.rank] * s[: spec.rank]) @ vt[: spec.rank]
    if spec.block_corr > 0.0 and spec.block_size > 1:
        rho = spec.block_corr
        for start in range(0, spec.n, spec.block_size):
            stop = min(start + spec.block_size, spec.n)
            shared = rng.standard_normal(spec.m)
            x[:, start:stop] = (
                np.sqrt(1.0 - rho) * x[:, start:stop]
                + np.sqrt(rho) * shared[:, None]
            )

    beta = np.zeros(spec.n)
    positions = rng.choice(spec.n, size=spec.sparsity, replace=False)
    magnitudes = rng.uniform(1.0, 2.0, size=spec.sparsity)
    signs = rng.choice([-1.0, 1.0], size=spec.sparsity)
    beta[positions] = signs * magnitudes

    noise = rng.normal(0.0, spec.noise_sigma, size=spec.m)
    y = x @ beta + noise
    mask = rng.random((spec.m, spec.n)) >= spec.miss_rate

    problem = RegressionProblem(
        y=y,
        xhat=MaskedMatrix(np.where(mask, x, 0.0), mask),
        beta_true=beta,
        x_true=x,
    )
    provenance = {
        "kind": "synthetic",
        "m": spec.m,
        "n": spec.n,
        "sparsity": spec.sparsity,
        "rank": spec.rank if spec.rank is not None else "",
        "block_corr": spec.block_corr,
        "block_size": spec.block_size,
        "miss_rate": spec.miss_rate,
        "noise_sigma": spec.noise_sigma,
        "seed": spec.seed,
        "source_rows": spec.m,
    }
    return Dataset(
        problem=problem,
        test_x=np.zeros((0, spec.n)),
        test_y=np.zeros(0),
        feature_names=[f"x{i}" for i in range(spec.n)],
        label_name="y",
        provenance=provenance,
    )


def _parse_cell(token: str, row: int, name: str) -> float | None:
    token = token.strip()
    if token.lower() in _MISSING_TOKENS:
        return None
    try:
        return float(token)
    except ValueError:
        raise IngestError(
            f"unparseable cell at row {row}, column {name!r}: {token!r}"
        ) from None


def load_csv(path, label_column: str, header: bool = True) -> Dataset:
    """Read a numeric CSV into a dataset with an empty holdout portion.

    The label column becomes y; rows whose label is missing are dropped
    (with a warning carrying the count). Without a header row the columns
    are named col0, col1, ... and `label_column` refers to those names.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        raw_rows = [row for row in reader if row]
    if not raw_rows:
        raise IngestError(f"{path}: file is empty")

    if header:
        names = [name.strip() for name in raw_rows[0]]
        data_rows = raw_rows[1:]
        first_data_line = 2
    else:
        names = [f"col{i}" for i in range(len(raw_rows[0]))]
        data_rows = raw_rows
        first_data_line = 1
    if label_column not in names:
        raise IngestError(f"{path}: label column {label_column!r} not found")
    label_pos = names.index(label_column)
    feature_names = [nm for i, nm in enumerate(names) if i != label_pos]
    if not feature_names:
        raise IngestError(f"{path}: no feature columns besides the label")

    ys, rows, masks = [], [], []
    dropped = 0
    for offset, row in enumerate(data_rows):
        line = first_data_line + offset
        if len(row) != len(names):
            raise IngestError(
                f"{path}: row {line} has {len(row)} cells, expected {len(names)}"
            )
        cells = [_parse_cell(tok, line, names[i]) for i, tok in enumerate(row)]
        label = cells.pop(label_pos)
        if label is None:
            dropped += 1
            continue
        ys.append(label)
        rows.append([0.0 if c is None else c for c in cells])
        masks.append([c is not None for c in cells])
    if dropped:
        warnings.warn(f"{path}: dropped {dropped} rows with missing label")
    if not ys:
        raise IngestError(f"{path}: no usable rows (all labels missing)")

    n = len(feature_names)
    problem = RegressionProblem(
        y=np.asarray(ys, dtype=float),
        xhat=MaskedMatrix(np.asarray(rows, dtype=float), np.asarray(masks, dtype=bool)),
    )
    provenance = {
        "kind": "csv",
        "source": str(path),
        "label_column": label_column,
        "dropped_label_rows": dropped,
        "source_rows": len(ys),
    }
    return Dataset(
        problem=problem,
        test_x=np.zeros((0, n)),
        test_y=np.zeros(0),
        feature_names=feature_names,
        label_name=label_column,
        provenance=provenance,
    )


def _write_csv(path: Path, label: str, names: list[str], y, values, mask) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([label] + names)
        for i in range(len(y)):
            row = [_CSV_FORMAT % y[i]]
            for j in range(values.shape[1]):
                row.append(_CSV_FORMAT % values[i, j] if mask[i, j] else "NA")
            writer.writerow(row)


def save_dataset(d: Dataset, out_dir, name: str = "dataset") -> dict[str, Path]:
    """Write train CSV, optional test CSV, and the key=value sidecar.

    Returns the written paths keyed by role ("train", "test", "meta").
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    train = out_dir / f"{name}.csv"
    _write_csv(
        train,
        d.label_name,
        d.feature_names,
        d.problem.y,
        d.problem.xhat.values,
        d.problem.xhat.mask,
    )
    paths["train"] = train

    if len(d.test_y):
        test = out_dir / f"{name}.test.csv"
        _write_csv(
            test,
            d.label_name,
            d.feature_names,
            d.test_y,
            d.test_x,
            np.ones(d.test_x.shape, dtype=bool),
        )
        paths["test"] = test

    meta = out_dir / f"{name}.meta"
    with open(meta, "w", encoding="utf-8") as fh:
        for key, value in d.provenance.items():
            fh.write(f"{key}={value}\n")
        fh.write(f"label_column={d.label_name}\n")
        fh.write(f"train_rows={len(d.problem.y)}\n")
        fh.write(f"test_rows={len(d.test_y)}\n")
    paths["meta"] = meta
    return paths


def inject_missingness(d: Dataset, rate: float, seed: int) -> Dataset:
    """Independently drop each observed train-design entry with probability rate.

    Labels and the holdout portion are untouched.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError("rate must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    keep = rng.random(d.problem.xhat.shape) >= rate
    mask = d.problem.xhat.mask & keep
    xhat = MaskedMatrix(d.problem.xhat.values, mask)
    problem = replace(d.problem, xhat=xhat)
    provenance = dict(d.provenance)
    provenance["injected_miss_rate"] = rate
    provenance["injection_seed"] = seed
    return replace(d, problem=problem, provenance=provenance)


def split_train_test(d: Dataset, test_fraction: float, seed: int) -> Dataset:
    """Hold out a uniformly random set of fully observed rows for testing.

    Only rows with no missing design entries are eligible for the holdout,
    keeping RMSE independent of imputation. The requested size is
    ``round(test_fraction * rows)``, shrunk to the number of eligible rows
    if needed; both splits must end up nonempty.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    if len(d.test_y):
        raise DataError("dataset already has a holdout portion")
    total = len(d.problem.y)
    complete = np.flatnonzero(d.problem.xhat.mask.all(axis=1))
    if complete.size == 0:
        raise DataError(
            "no fully observed rows available for the holdout; "
            "lower the injection rate"
        )
    n_test = int(round(test_fraction * total))
    n_test = max(1, min(n_test, complete.size, total - 1))
    if total - n_test < 1:
        raise DataError("not enough rows to keep both splits nonempty")

    rng = np.random.default_rng(seed)
    test_rows = np.sort(rng.choice(complete, size=n_test, replace=False))
    train_rows = np.setdiff1d(np.arange(total), test_rows)

    xhat = d.problem.xhat
    problem = RegressionProblem(
        y=d.problem.y[train_rows],
        xhat=MaskedMatrix(xhat.values[train_rows], xhat.mask[train_rows]),
        beta_true=d.problem.beta_true,
        x_true=None if d.problem.x_true is None else d.problem.x_true[train_rows],
    )
    provenance = dict(d.provenance)
    provenance["test_fraction"] = test_fraction
    provenance["split_seed"] = seed
    return replace(
        d,
        problem=problem,
        test_x=xhat.values[test_rows],
        test_y=d.problem.y[test_rows],
        provenance=provenance,
    )
