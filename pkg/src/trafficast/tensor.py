"""Dense float64 matrix primitives for the recurrent cells and the trainer.

A "matrix" throughout this package is a 2-D C-order float64 numpy array.
Activations carry the batch in columns: inputs are (features x batch) and
hidden states are (hidden x batch), so every gate product W @ [h; x] is a
single matmul. There is no broadcasting anywhere except `add_bias`, which
adds a (rows x 1) column vector to every column.
"""

from __future__ import annotations

import numpy as np

Matrix = np.ndarray


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


def as_matrix(data) -> Matrix:
    """Coerce nested sequences (or a 1-D sequence, read as one column) to a matrix."""
    m = np.array(data, dtype=np.float64, order="C")
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise ShapeError(f"expected 2-D data, got ndim={m.ndim}")
    return m


def zeros(rows: int, cols: int) -> Matrix:
    return np.zeros((rows, cols), dtype=np.float64)


def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} x {b.shape}")
    return a @ b


_ELEMENTWISE = {"add": np.add, "sub": np.subtract, "hadamard": np.multiply}


def elementwise(a: Matrix, b: Matrix, op: str) -> Matrix:
    """Entrywise add / sub / hadamard on identically shaped matrices."""
    fn = _ELEMENTWISE.get(op)
    if fn is None:
        raise ValueError(f"unknown elementwise op {op!r}, expected one of {sorted(_ELEMENTWISE)}")
    if a.shape != b.shape:
        raise ShapeError(f"elementwise {op}: shapes differ, {a.shape} vs {b.shape}")
    return fn(a, b)


def add_bias(a: Matrix, bias: Matrix) -> Matrix:
    """Add a (rows x 1) bias column to every column of a."""
    if bias.shape != (a.shape[0], 1):
        raise ShapeError(f"add_bias: bias {bias.shape} does not fit matrix {a.shape}")
    return a + bias


def concat_rows(h: Matrix, x: Matrix) -> Matrix:
    """Stack h on top of x; both must carry the same number of columns."""
    if h.shape[1] != x.shape[1]:
        raise ShapeError(f"concat_rows: column counts differ, {h.shape} vs {x.shape}")
    return np.concatenate([h, x], axis=0)


def split_rows(m: Matrix, k: int) -> tuple[Matrix, Matrix]:
    """Undo concat_rows: return copies of (m[:k], m[k:])."""
    if not 0 <= k <= m.shape[0]:
        raise ShapeError(f"split_rows: cannot split {m.shape} at row {k}")
    return m[:k].copy(), m[k:].copy()


def sigmoid(x: Matrix) -> Matrix:
    # exp only sees non-positive arguments, so this never overflows
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def tanh(x: Matrix) -> Matrix:
    return np.tanh(x)


def sigmoid_deriv_from_output(y: Matrix) -> Matrix:
    """Sigmoid derivative expressed in the sigmoid output y: y * (1 - y)."""
    return y * (1.0 - y)


def tanh_deriv_from_output(y: Matrix) -> Matrix:
    """Tanh derivative expressed in the tanh output y: 1 - y^2."""
    return 1.0 - y * y


_MAP_FNS = {
    "sigmoid": sigmoid,
    "tanh": tanh,
    "sigmoid_deriv_from_output": sigmoid_deriv_from_output,
    "tanh_deriv_from_output": tanh_deriv_from_output,
}


def map_fn(a: Matrix, f: str) -> Matrix:
    """Apply a named scalar function entrywise."""
    fn = _MAP_FNS.get(f)
    if fn is None:
        raise ValueError(f"unknown map_fn {f!r}, expected one of {sorted(_MAP_FNS)}")
    return fn(np.asarray(a, dtype=np.float64))
