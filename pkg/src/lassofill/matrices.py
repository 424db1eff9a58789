"""Masked dense matrices, the observed-entry projection, column normalization,
and the empirical covariance of column-normalized data.

All operations are pure functions; nothing here mutates its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Columns with Euclidean norm at or below this are treated as degenerate
# (constant-zero) and flagged instead of normalized.
DEGENERATE_COLUMN_NORM = 1e-12

# Text export: one row per line, comma-separated, 9 significant digits.
_EXPORT_FORMAT = "%.9g"


@dataclass(frozen=True)
class MaskedMatrix:
    """An m-by-n real matrix paired with an observation mask.

    `mask[i, j]` is True where entry (i, j) was observed. Unobserved entries
    of `values` are canonically stored as 0 and are never read as data.
    `col_index` carries original column indices after column confinement;
    None means the identity mapping.
    """

    values: np.ndarray
    mask: np.ndarray
    col_index: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if values.ndim != 2:
            raise ValueError(f"values must be 2-D, got shape {values.shape}")
        if values.shape != mask.shape:
            raise ValueError(
                f"values shape {values.shape} != mask shape {mask.shape}"
            )
        object.__setattr__(self, "values", np.where(mask, values, 0.0))
        object.__setattr__(self, "mask", mask)
        if self.col_index is not None:
            ci = np.asarray(self.col_index, dtype=int)
            if ci.shape != (values.shape[1],):
                raise ValueError("col_index length must equal column count")
            object.__setattr__(self, "col_index", ci)

    @classmethod
    def fully_observed(cls, values: np.ndarray) -> "MaskedMatrix":
        values = np.asarray(values, dtype=float)
        return cls(values, np.ones(values.shape, dtype=bool))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def observed_count(self) -> int:
        return int(self.mask.sum())

    @property
    def observed_fraction(self) -> float:
        return self.observed_count / self.mask.size if self.mask.size else 0.0


@dataclass(frozen=True)
class CovarianceMatrix:
    """n-by-n symmetric feature inner-product matrix (XᵀX of normalized data)."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError(f"covariance must be square, got {entries.shape}")
        if not np.array_equal(entries, entries.T):
            raise ValueError("covariance entries must be exactly symmetric")
        object.__setattr__(self, "entries", entries)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def project_observed(x: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Zero out the unobserved entries of `x` (the projection onto E).

    A pure elementwise product with the mask; idempotent.
    """
    x = np.asarray(x, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if x.shape != mask.shape:
        raise ValueError(f"x shape {x.shape} != mask shape {mask.shape}")
    return np.where(mask, x, 0.0)


def normalize_columns(
    x: np.ndarray, *, center: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Scale every column of `x` to unit Euclidean norm.

    Columns whose norm is at or below ``DEGENERATE_COLUMN_NORM`` are returned
    as all zeros and flagged. Returns ``(normalized, degenerate)`` where
    `degenerate` is a boolean vector over columns. With ``center=True`` column
    means are subtracted first (making the downstream covariance a true
    correlation matrix); off by default.
    """
    x = np.asarray(x, dtype=float)
    if center:
        x = x - x.mean(axis=0, keepdims=True)
    norms = np.linalg.norm(x, axis=0)
    degenerate = norms <= DEGENERATE_COLUMN_NORM
    safe = np.where(degenerate, 1.0, norms)
    out = x / safe
    out[:, degenerate] = 0.0
    return out, degenerate


def empirical_covariance(x: np.ndarray) -> CovarianceMatrix:
    """XᵀX of an already column-normalized matrix, symmetrized exactly.

    The product is re-symmetrized as (A + Aᵀ)/2 so comparisons downstream
    never depend on traversal order. Degenerate (all-zero) columns yield
    all-zero covariance rows and can never be selected by support sifting.
    """
    x = np.asarray(x, dtype=float)
    product = x.T @ x
    return CovarianceMatrix(0.5 * (product + product.T))


def save_matrix_text(matrix: np.ndarray, path) -> None:
    """Write a dense matrix as comma-separated text, 9 significant digits."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w", encoding="ascii") as fh:
        for row in matrix:
            fh.write(",".join(_EXPORT_FORMAT % v for v in row))
            fh.write("\n")


def load_matrix_text(path) -> np.ndarray:
    """Parse a matrix written by :func:`save_matrix_text`."""
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(tok) for tok in line.split(",")])
    return np.asarray(rows, dtype=float)
