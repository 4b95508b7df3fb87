"""CSR sparse matrices used for relation and metapath adjacency.

Thin immutable wrapper around the classic (indptr, indices, data) triple.
Products and reorderings are delegated to scipy.sparse; every constructor
canonicalizes so that column indices are strictly increasing within each
row and all values are finite.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import ShapeError

# Multiply count for sparse @ dense products, used by cost assertions.
_SPMM_MULTIPLIES = 0


def reset_op_counter() -> None:
    global _SPMM_MULTIPLIES
    _SPMM_MULTIPLIES = 0


def op_count() -> int:
    return _SPMM_MULTIPLIES


class SparseMatrix:
    """Immutable CSR matrix with non-negative-free, finite real values.

    Invariants enforced at construction: row pointers are non-decreasing and
    span the index array, column indices are strictly increasing within each
    row (sorted, no duplicates), and all values are finite.
    """

    __slots__ = ("n_rows", "n_cols", "indptr", "indices", "data")

    def __init__(self, n_rows, n_cols, indptr, indices, data):
        indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        indices = np.ascontiguousarray(indices, dtype=np.int64)
        data = np.ascontiguousarray(data, dtype=np.float64)
        if n_rows < 0 or n_cols < 0:
            raise ShapeError(f"negative matrix shape ({n_rows}, {n_cols})")
        if indptr.shape != (n_rows + 1,):
            raise ShapeError(
                f"indptr has length {indptr.shape[0]}, expected n_rows+1={n_rows + 1}"
            )
        nnz = len(indices)
        if indptr[0] != 0 or indptr[-1] != nnz or np.any(np.diff(indptr) < 0):
            raise ShapeError("row pointers must be non-decreasing from 0 to nnz")
        if len(data) != nnz:
            raise ShapeError(f"{len(data)} values for {nnz} indices")
        if nnz:
            if indices.min() < 0 or indices.max() >= n_cols:
                raise ShapeError(f"column index out of range for n_cols={n_cols}")
            # strictly increasing within each row == sorted with no duplicates
            starts = indptr[1:-1]
            next_is_row_start = np.zeros(nnz, dtype=bool)
            next_is_row_start[starts[starts < nnz]] = True
            within_row = ~next_is_row_start[1:]
            if not np.all(np.diff(indices)[within_row] > 0):
                raise ShapeError("column indices must be sorted and unique per row")
        if not np.isfinite(data).all():
            raise ShapeError("sparse values must be finite")
        for arr in (indptr, indices, data):
            arr.setflags(write=False)
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.indptr = indptr
        self.indices = indices
        self.data = data

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_scipy(cls, mat) -> "SparseMatrix":
        m = sp.csr_matrix(mat, copy=True)
        m.sum_duplicates()
        m.sort_indices()
        m.eliminate_zeros()
        return cls(m.shape[0], m.shape[1], m.indptr, m.indices, m.data)

    @classmethod
    def from_dense(cls, arr) -> "SparseMatrix":
        return cls.from_scipy(sp.csr_matrix(np.asarray(arr, dtype=np.float64)))

    @classmethod
    def from_edges(cls, rows, cols, shape) -> "SparseMatrix":
        """Binary 0/1 matrix from an edge list; duplicate pairs collapse to 1."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if rows.shape != cols.shape:
            raise ShapeError("row and column id lists differ in length")
        if len(rows):
            pairs = np.unique(np.stack([rows, cols], axis=1), axis=0)
            rows, cols = pairs[:, 0], pairs[:, 1]
        m = sp.coo_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=shape, dtype=np.float64
        )
        return cls.from_scipy(m)

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls.from_scipy(sp.identity(n, dtype=np.float64, format="csr"))

    @classmethod
    def zeros(cls, n_rows: int, n_cols: int) -> "SparseMatrix":
        return cls(n_rows, n_cols, np.zeros(n_rows + 1, np.int64), [], [])

    # -- views --------------------------------------------------------------

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return len(self.indices)

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.data, self.indices, self.indptr), shape=self.shape, copy=False
        )

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def __repr__(self) -> str:
        return f"SparseMatrix({self.n_rows}x{self.n_cols}, nnz={self.nnz})"

    # -- algebra ------------------------------------------------------------

    def matmul(self, other: "SparseMatrix") -> "SparseMatrix":
        if self.n_cols != other.n_rows:
            raise ShapeError(
                f"cannot multiply {self.shape} by {other.shape}: inner dims differ"
            )
        return SparseMatrix.from_scipy(self.to_scipy() @ other.to_scipy())

    def __matmul__(self, other: "SparseMatrix") -> "SparseMatrix":
        return self.matmul(other)

    def add(self, other: "SparseMatrix") -> "SparseMatrix":
        if self.shape != other.shape:
            raise ShapeError(f"cannot add {self.shape} and {other.shape}")
        return SparseMatrix.from_scipy(self.to_scipy() + other.to_scipy())

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix.from_scipy(self.to_scipy().transpose())

    def binarize(self) -> "SparseMatrix":
        """Clamp every stored value to 1."""
        return SparseMatrix(
            self.n_rows, self.n_cols, self.indptr, self.indices,
            np.ones_like(self.data),
        )

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.to_scipy().sum(axis=1)).ravel()

    def scale_rows(self, v) -> SparseMatrix:
        """Multiply row i by v[i]."""
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.n_rows,):
            raise ShapeError(f"row scale vector has shape {v.shape}, want ({self.n_rows},)")
        row_of = np.repeat(np.arange(self.n_rows), np.diff(self.indptr))
        return SparseMatrix(
            self.n_rows, self.n_cols, self.indptr, self.indices,
            self.data * v[row_of],
        )

    def scale_cols(self, v) -> "SparseMatrix":
        """Multiply column j by v[j]."""
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.n_cols,):
            raise ShapeError(f"column scale vector has shape {v.shape}, want ({self.n_cols},)")
        return SparseMatrix(
            self.n_rows, self.n_cols, self.indptr, self.indices,
            self.data * v[self.indices],
        )

    def dense_dot(self, x: np.ndarray) -> np.ndarray:
        """Sparse @ dense product; counts one multiply per (nnz, column) pair."""
        x = np.asarray(x)
        if x.ndim != 2 or x.shape[0] != self.n_cols:
            raise ShapeError(
                f"dense operand has shape {x.shape}, want ({self.n_cols}, d)"
            )
        global _SPMM_MULTIPLIES
        _SPMM_MULTIPLIES += self.nnz * x.shape[1]
        out = self.to_scipy() @ x
        return np.ascontiguousarray(out, dtype=x.dtype)
