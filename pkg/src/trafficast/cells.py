"""LSTM and GRU cells: forward steps and exact analytic backward steps.

Shape conventions (see tensor.py): x_t is (input_dim x batch), h and c are
(hidden x batch). Each gate weight is (hidden x (hidden + input_dim)) and
multiplies the stacked column [h_prev; x_t]. Internally the per-gate
products are fused into one matmul over vertically stacked weights, which
is the same arithmetic with fewer BLAS calls.

LSTM update, computed in this order:

    f = sigmoid(W_f [h, x] + b_f)
    i = sigmoid(W_i [h, x] + b_i)
    c_bar = tanh(W_c [h, x] + b_c)
    c = f * c_prev + i * c_bar
    o = sigmoid(W_o [h, x] + b_o)
    h = o * tanh(c)

GRU update. Note the convention used here: the update gate z scales the
OLD state and (1 - z) scales the candidate. The candidate sees the reset
state through the concatenation [h_prev * r, x]:

    r = sigmoid(W_r [h, x] + b_r)
    z = sigmoid(W_z [h, x] + b_z)
    h_bar = tanh(W_h [h_prev * r, x] + b_h)
    h = z * h_prev + (1 - z) * h_bar

Step caches store gate outputs, not pre-activations; the backward passes
use the derivative-from-output identities so no activation is recomputed.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .tensor import (
    Matrix,
    ShapeError,
    add_bias,
    concat_rows,
    matmul,
    sigmoid,
    sigmoid_deriv_from_output,
    split_rows,
    tanh,
    tanh_deriv_from_output,
)


@dataclass
class LstmParams:
    w_f: Matrix
    w_i: Matrix
    w_c: Matrix
    w_o: Matrix
    b_f: Matrix
    b_i: Matrix
    b_c: Matrix
    b_o: Matrix

    @property
    def hidden_dim(self) -> int:
        return self.w_f.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_f.shape[1] - self.w_f.shape[0]


@dataclass
class GruParams:
    w_r: Matrix
    w_z: Matrix
    w_h: Matrix
    b_r: Matrix
    b_z: Matrix
    b_h: Matrix

    @property
    def hidden_dim(self) -> int:
        return self.w_r.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_r.shape[1] - self.w_r.shape[0]


@dataclass
class CellState:
    """Recurrent state: h always, c only for LSTM."""

    h: Matrix
    c: Matrix | None = None


@dataclass
class LstmStepCache:
    params: LstmParams
    za: Matrix  # stacked [h_prev; x_t]
    c_prev: Matrix
    f: Matrix
    i: Matrix
    c_bar: Matrix
    o: Matrix
    c: Matrix
    tanh_c: Matrix
    h: Matrix


@dataclass
class GruStepCache:
    params: GruParams
    za: Matrix  # stacked [h_prev; x_t]
    zc: Matrix  # stacked [h_prev * r; x_t]
    h_prev: Matrix
    r: Matrix
    z: Matrix
    h_bar: Matrix
    h: Matrix


def param_fields(params) -> list[str]:
    """Field names of a params dataclass in declaration order."""
    return [f.name for f in fields(params)]


def _glorot(rng: np.random.Generator, rows: int, cols: int) -> Matrix:
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


def lstm_init(input_dim: int, hidden_dim: int, seed: int) -> LstmParams:
    """Glorot-uniform gate weights, zero biases, forget bias set to 1."""
    if input_dim < 1 or hidden_dim < 1:
        raise ValueError(f"dims must be >= 1, got input_dim={input_dim} hidden_dim={hidden_dim}")
    rng = np.random.default_rng(seed)
    cols = hidden_dim + input_dim
    w_f, w_i, w_c, w_o = (_glorot(rng, hidden_dim, cols) for _ in range(4))
    zero = lambda: np.zeros((hidden_dim, 1))
    return LstmParams(w_f, w_i, w_c, w_o, b_f=np.ones((hidden_dim, 1)), b_i=zero(), b_c=zero(), b_o=zero())


def gru_init(input_dim: int, hidden_dim: int, seed: int) -> GruParams:
    """Glorot-uniform gate weights, all biases zero."""
    if input_dim < 1 or hidden_dim < 1:
        raise ValueError(f"dims must be >= 1, got input_dim={input_dim} hidden_dim={hidden_dim}")
    rng = np.random.default_rng(seed)
    cols = hidden_dim + input_dim
    w_r, w_z, w_h = (_glorot(rng, hidden_dim, cols) for _ in range(3))
    zero = lambda: np.zeros((hidden_dim, 1))
    return GruParams(w_r, w_z, w_h, b_r=zero(), b_z=zero(), b_h=zero())


def zero_state(hidden_dim: int, batch: int, with_cell: bool) -> CellState:
    h = np.zeros((hidden_dim, batch))
    return CellState(h=h, c=np.zeros((hidden_dim, batch)) if with_cell else None)


def _check_step_shapes(kind: str, params, x_t: Matrix, prev: CellState, need_c: bool) -> None:
    hd, ind = params.hidden_dim, params.input_dim
    if x_t.ndim != 2 or x_t.shape[0] != ind:
        raise ShapeError(f"{kind}_step: x_t has shape {x_t.shape}, expected ({ind}, batch)")
    batch = x_t.shape[1]
    if prev.h.shape != (hd, batch):
        raise ShapeError(f"{kind}_step: prev.h has shape {prev.h.shape}, expected ({hd}, {batch})")
    if need_c and (prev.c is None or prev.c.shape != (hd, batch)):
        got = None if prev.c is None else prev.c.shape
        raise ShapeError(f"{kind}_step: prev.c has shape {got}, expected ({hd}, {batch})")


def lstm_step(p: LstmParams, x_t: Matrix, prev: CellState) -> tuple[CellState, LstmStepCache]:
    _check_step_shapes("lstm", p, x_t, prev, need_c=True)
    hd = p.hidden_dim
    za = concat_rows(prev.h, x_t)
    pre = add_bias(matmul(np.vstack((p.w_f, p.w_i, p.w_c, p.w_o)), za),
                   np.vstack((p.b_f, p.b_i, p.b_c, p.b_o)))
    f = sigmoid(pre[:hd])
    i = sigmoid(pre[hd:2 * hd])
    c_bar = tanh(pre[2 * hd:3 * hd])
    o = sigmoid(pre[3 * hd:])
    c = f * prev.c + i * c_bar
    tanh_c = tanh(c)
    h = o * tanh_c
    cache = LstmStepCache(params=p, za=za, c_prev=prev.c, f=f, i=i, c_bar=c_bar, o=o, c=c, tanh_c=tanh_c, h=h)
    return CellState(h=h, c=c), cache


def lstm_backward(cache: LstmStepCache, d_h: Matrix, d_c: Matrix) -> tuple[LstmParams, Matrix, CellState]:
    """Gradients of the cached step given upstream d_h and d_c.

    Returns (per-parameter gradients, d_x, gradients w.r.t. the previous
    state). The cell-state gradient includes both the additive path into c
    and the path through h = o * tanh(c).
    """
    p = cache.params
    hd = p.hidden_dim
    if d_h.shape != cache.h.shape or d_c.shape != cache.c.shape:
        raise ShapeError(
            f"lstm_backward: upstream shapes {d_h.shape}/{d_c.shape} do not match step {cache.h.shape}")
    d_o = d_h * cache.tanh_c
    d_c_total = d_c + d_h * cache.o * tanh_deriv_from_output(cache.tanh_c)
    d_f = d_c_total * cache.c_prev
    d_i = d_c_total * cache.c_bar
    d_c_bar = d_c_total * cache.i
    d_c_prev = d_c_total * cache.f
    d_pre = np.vstack((
        d_f * sigmoid_deriv_from_output(cache.f),
        d_i * sigmoid_deriv_from_output(cache.i),
        d_c_bar * tanh_deriv_from_output(cache.c_bar),
        d_o * sigmoid_deriv_from_output(cache.o),
    ))
    d_w = matmul(d_pre, cache.za.T)
    d_b = d_pre.sum(axis=1, keepdims=True)
    w = np.vstack((p.w_f, p.w_i, p.w_c, p.w_o))
    d_za = matmul(w.T, d_pre)
    d_h_prev, d_x = split_rows(d_za, hd)
    d_params = LstmParams(
        w_f=d_w[:hd].copy(), w_i=d_w[hd:2 * hd].copy(), w_c=d_w[2 * hd:3 * hd].copy(), w_o=d_w[3 * hd:].copy(),
        b_f=d_b[:hd].copy(), b_i=d_b[hd:2 * hd].copy(), b_c=d_b[2 * hd:3 * hd].copy(), b_o=d_b[3 * hd:].copy(),
    )
    return d_params, d_x, CellState(h=d_h_prev, c=d_c_prev)


def gru_step(p: GruParams, x_t: Matrix, prev: CellState) -> tuple[CellState, GruStepCache]:
    _check_step_shapes("gru", p, x_t, prev, need_c=False)
    hd = p.hidden_dim
    za = concat_rows(prev.h, x_t)
    pre = add_bias(matmul(np.vstack((p.w_r, p.w_z)), za), np.vstack((p.b_r, p.b_z)))
    r = sigmoid(pre[:hd])
    z = sigmoid(pre[hd:])
    zc = concat_rows(prev.h * r, x_t)
    h_bar = tanh(add_bias(matmul(p.w_h, zc), p.b_h))
    h = z * prev.h + (1.0 - z) * h_bar
    cache = GruStepCache(params=p, za=za, zc=zc, h_prev=prev.h, r=r, z=z, h_bar=h_bar, h=h)
    return CellState(h=h, c=None), cache


def gru_backward(cache: GruStepCache, d_h: Matrix) -> tuple[GruParams, Matrix, Matrix]:
    """Gradients of the cached step given upstream d_h.

    Returns (per-parameter gradients, d_x, d_h_prev). d_h_prev collects
    three paths: the z * h_prev term, the reset-scaled copy inside the
    candidate, and the gate pre-activations that read h_prev directly.
    """
    p = cache.params
    hd = p.hidden_dim
    if d_h.shape != cache.h.shape:
        raise ShapeError(f"gru_backward: upstream shape {d_h.shape} does not match step {cache.h.shape}")
    d_z = d_h * (cache.h_prev - cache.h_bar)
    d_h_bar = d_h * (1.0 - cache.z)
    d_h_prev = d_h * cache.z
    d_pre_h = d_h_bar * tanh_deriv_from_output(cache.h_bar)
    d_w_h = matmul(d_pre_h, cache.zc.T)
    d_b_h = d_pre_h.sum(axis=1, keepdims=True)
    d_zc = matmul(p.w_h.T, d_pre_h)
    d_hr, d_x_cand = split_rows(d_zc, hd)
    d_r = d_hr * cache.h_prev
    d_h_prev = d_h_prev + d_hr * cache.r
    d_pre_rz = np.vstack((
        d_r * sigmoid_deriv_from_output(cache.r),
        d_z * sigmoid_deriv_from_output(cache.z),
    ))
    d_w_rz = matmul(d_pre_rz, cache.za.T)
    d_b_rz = d_pre_rz.sum(axis=1, keepdims=True)
    d_za = matmul(np.vstack((p.w_r, p.w_z)).T, d_pre_rz)
    d_h_prev = d_h_prev + d_za[:hd]
    d_x = d_za[hd:] + d_x_cand
    d_params = GruParams(
        w_r=d_w_rz[:hd].copy(), w_z=d_w_rz[hd:].copy(), w_h=d_w_h,
        b_r=d_b_rz[:hd].copy(), b_z=d_b_rz[hd:].copy(), b_h=d_b_h,
    )
    return d_params, d_x, d_h_prev
