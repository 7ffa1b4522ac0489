"""File library model: Zipf popularity, grouping into cacheable blocks,
and the SBS-to-group placement matrix."""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np


def zipf_probs(num_files: int, exponent: float) -> np.ndarray:
    """Zipf request probabilities p_f = f^-s / sum_q q^-s for ranks 1..num_files.

    The normalizer uses compensated summation so the vector sums to 1 within
    1e-12 even for libraries of ~1e6 files.  Exponents outside (0, 1] are
    allowed but unusual for content popularity, so they raise a warning.
    """
    if num_files < 1:
        raise ValueError("num_files must be >= 1")
    if not (0.0 < exponent <= 1.0):
        warnings.warn(
            f"Zipf exponent {exponent} outside the usual (0, 1] range",
            stacklevel=2,
        )
    ranks = np.arange(1, num_files + 1, dtype=float)
    weights = ranks ** (-float(exponent))
    total = math.fsum(weights)
    return weights / total


def group_probs(file_probs: np.ndarray, group_size: int) -> np.ndarray:
    """Request probability per file group (contiguous popularity-ordered blocks)."""
    file_probs = np.asarray(file_probs, dtype=float)
    if group_size < 1:
        raise ValueError("group_size must be >= 1")
    if file_probs.size % group_size != 0:
        raise ValueError(
            f"library size {file_probs.size} not divisible by group size {group_size}"
        )
    n_groups = file_probs.size // group_size
    blocks = file_probs.reshape(n_groups, group_size)
    return np.array([math.fsum(row) for row in blocks])


@dataclass(frozen=True)
class PopularityModel:
    """Zipf library split into num_groups = num_files / group_size cache units."""

    num_files: int
    group_size: int
    exponent: float
    file_probs: np.ndarray
    group_probs: np.ndarray

    @property
    def num_groups(self) -> int:
        return self.group_probs.size

    @classmethod
    def from_zipf(cls, num_files: int, group_size: int, exponent: float) -> "PopularityModel":
        p = zipf_probs(num_files, exponent)
        return cls(
            num_files=num_files,
            group_size=group_size,
            exponent=exponent,
            file_probs=p,
            group_probs=group_probs(p, group_size),
        )

    def __post_init__(self):
        if self.num_files % self.group_size != 0:
            raise ValueError("num_files must be divisible by group_size")
        if abs(math.fsum(self.file_probs) - 1.0) > 1e-12:
            raise ValueError("file probabilities must sum to 1")
        if abs(math.fsum(self.group_probs) - 1.0) > 1e-12:
            raise ValueError("group probabilities must sum to 1")
        if np.any(np.diff(self.file_probs) > 0):
            raise ValueError("file probabilities must be non-increasing in rank")
        self.file_probs.flags.writeable = False
        self.group_probs.flags.writeable = False


@dataclass(frozen=True)
class PlacementMatrix:
    """One cached group per SBS, stored as a group index per row.

    Equivalent to a K x N binary matrix with exactly one 1 per row.
    """

    assignment: np.ndarray
    n_groups: int

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.int64)
        if a.ndim != 1:
            raise ValueError("assignment must be a 1-D index vector")
        if a.size and (a.min() < 0 or a.max() >= self.n_groups):
            raise ValueError("group indices out of range")
        object.__setattr__(self, "assignment", a)
        a.flags.writeable = False

    @property
    def n_sbs(self) -> int:
        return self.assignment.size

    def as_matrix(self) -> np.ndarray:
        mat = np.zeros((self.n_sbs, self.n_groups), dtype=np.int8)
        mat[np.arange(self.n_sbs), self.assignment] = 1
        return mat

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "PlacementMatrix":
        matrix = np.asarray(matrix)
        bad = validate_placement(matrix, matrix.shape[0], matrix.shape[1])
        if bad:
            raise ValueError(f"invalid placement matrix: {bad}")
        return cls(assignment=np.argmax(matrix, axis=1), n_groups=matrix.shape[1])


def validate_placement(matrix: np.ndarray, n_sbs: int, n_groups: int) -> list:
    """Check a raw K x N matrix for one-hot rows; report violations, never raise.

    Returns a list of (row_index, reason) tuples, empty when the matrix is a
    valid placement.
    """
    matrix = np.asarray(matrix)
    violations = []
    if matrix.shape != (n_sbs, n_groups):
        return [(-1, f"shape {matrix.shape} != ({n_sbs}, {n_groups})")]
    binary = np.isin(matrix, (0, 1))
    row_sums = matrix.sum(axis=1)
    for k in range(n_sbs):
        if not binary[k].all():
            violations.append((k, "entries not in {0, 1}"))
        elif row_sums[k] != 1:
            violations.append((k, f"row sums to {int(row_sums[k])}, expected 1"))
    return violations
