"""Sparse QUBO container, energy evaluation and text import/export."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import LengthMismatch


@dataclass(frozen=True, eq=False)
class Qubo:
    """``offset + linear @ x + x @ quadratic @ x`` with ``quadratic`` strictly upper triangular."""

    linear: np.ndarray
    quadratic: sp.csr_matrix
    offset: float = 0.0

    def __post_init__(self):
        lin = np.array(self.linear, dtype=float)
        lin.setflags(write=False)
        object.__setattr__(self, "linear", lin)
        n = lin.shape[0]
        q = sp.csr_matrix(self.quadratic, shape=(n, n), dtype=float)
        if sp.tril(q).nnz:
            raise ValueError("quadratic part must be strictly upper triangular")
        q.eliminate_zeros()
        q.sort_indices()
        object.__setattr__(self, "quadratic", q)
        object.__setattr__(self, "offset", float(self.offset))

    @classmethod
    def from_terms(cls, n_vars, linear=None, rows=(), cols=(), vals=(), offset=0.0) -> "Qubo":
        """Build from (possibly duplicated, lower or diagonal) coupling triples.

        Diagonal entries fold into the linear part since ``x*x == x``.
        """
        lin = np.zeros(n_vars) if linear is None else np.array(linear, dtype=float)
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        diag = rows == cols
        if diag.any():
            np.add.at(lin, rows[diag], vals[diag])
            rows, cols, vals = rows[~diag], cols[~diag], vals[~diag]
        lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
        q = sp.coo_matrix((vals, (lo, hi)), shape=(n_vars, n_vars)).tocsr()
        q.sum_duplicates()
        return cls(lin, q, offset)

    @classmethod
    def from_dense(cls, matrix, linear=None, offset=0.0) -> "Qubo":
        """From a full matrix ``M`` meaning ``x @ M @ x`` (diagonal is linear)."""
        m = np.asarray(matrix, dtype=float)
        lin = np.diag(m).copy() if linear is None else np.asarray(linear, float) + np.diag(m)
        upper = np.triu(m, 1) + np.tril(m, -1).T
        return cls(lin, sp.csr_matrix(upper), offset)

    @property
    def n_vars(self) -> int:
        return self.linear.shape[0]

    def symmetric_adjacency(self) -> sp.csr_matrix:
        a = (self.quadratic + self.quadratic.T).tocsr()
        a.sort_indices()
        return a

    def degrees(self) -> np.ndarray:
        q = self.quadratic
        return np.diff(q.indptr) + np.bincount(q.indices, minlength=self.n_vars)

    def mean_abs_coefficient(self) -> float:
        coeffs = np.concatenate([self.linear[self.linear != 0], self.quadratic.data])
        return float(np.abs(coeffs).mean()) if coeffs.size else 0.0

    def to_dense(self) -> np.ndarray:
        """Upper-triangular matrix with the linear part on the diagonal."""
        return self.quadratic.toarray() + np.diag(self.linear)


def energy(qubo: Qubo, bits) -> float:
    x = np.asarray(bits, dtype=float)
    if x.shape != (qubo.n_vars,):
        raise LengthMismatch(f"expected {qubo.n_vars} bits, got shape {x.shape}")
    return qubo.offset + float(qubo.linear @ x) + float(x @ (qubo.quadratic @ x))


def energies(qubo: Qubo, bits) -> np.ndarray:
    """Energies for a batch of assignments with shape ``(k, n_vars)``."""
    x = np.asarray(bits, dtype=float)
    if x.ndim != 2 or x.shape[1] != qubo.n_vars:
        raise LengthMismatch(f"expected (k, {qubo.n_vars}) bits, got shape {x.shape}")
    qx = (qubo.quadratic @ x.T).T
    return qubo.offset + x @ qubo.linear + np.einsum("ij,ij->i", x, qx)


def coupling_count_per_variable(n_bits: int, n_timesteps: int, chunk_size: int) -> int:
    """Max couplings of one bit in a chunk QUBO with dense data."""
    q = n_bits
    return q * (n_timesteps - 1) + q * (chunk_size - 1) + q - 1


class SquareAccumulator:
    """Collects weighted squares of affine forms ``w * (c + sum_i a_i x_i)**2``."""

    def __init__(self, n_vars: int):
        self.n_vars = n_vars
        self.linear = np.zeros(n_vars)
        self.offset = 0.0
        self._rows, self._cols, self._vals = [], [], []

    def add_linear(self, idx, coef, const=0.0):
        np.add.at(self.linear, np.ravel(idx), np.ravel(coef))
        self.offset += float(const)

    def add_squares(self, const, idx, coef, weight: float):
        """``const`` has shape ``(G,)``; ``idx``/``coef`` ``(G, S)``; indices distinct per row."""
        if weight == 0:
            return
        const = np.asarray(const, dtype=float)
        idx = np.asarray(idx, dtype=np.int64)
        coef = np.asarray(coef, dtype=float)
        self.offset += weight * float(const @ const)
        np.add.at(self.linear, idx.ravel(), (weight * (2 * const[:, None] * coef + coef**2)).ravel())
        iu, ju = np.triu_indices(idx.shape[1], 1)
        if iu.size:
            self._rows.append(idx[:, iu].ravel())
            self._cols.append(idx[:, ju].ravel())
            self._vals.append((2 * weight * coef[:, iu] * coef[:, ju]).ravel())

    def n_pairs(self) -> int:
        return sum(r.size for r in self._rows)

    def build(self) -> Qubo:
        if self._rows:
            rows, cols, vals = (np.concatenate(a) for a in (self._rows, self._cols, self._vals))
        else:
            rows = cols = vals = ()
        return Qubo.from_terms(self.n_vars, self.linear, rows, cols, vals, self.offset)


def write_qubo(qubo: Qubo, path) -> None:
    q = qubo.quadratic.tocoo()
    lines = [f"# n_vars={qubo.n_vars} offset={qubo.offset!r}"]
    lines += [f"{i} {i} {float(v)!r}" for i, v in enumerate(qubo.linear) if v != 0]
    lines += [f"{i} {j} {float(v)!r}" for i, j, v in zip(q.row, q.col, q.data)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_qubo(path) -> Qubo:
    n_vars = offset = None
    rows, cols, vals = [], [], []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                key, _, val = tok.partition("=")
                if key == "n_vars":
                    n_vars = int(val)
                elif key == "offset":
                    offset = float(val)
            continue
        i, j, v = line.split()
        rows.append(int(i))
        cols.append(int(j))
        vals.append(float(v))
    if n_vars is None:
        n_vars = max(max(rows, default=-1), max(cols, default=-1)) + 1
    return Qubo.from_terms(n_vars, None, rows, cols, vals, offset or 0.0)
