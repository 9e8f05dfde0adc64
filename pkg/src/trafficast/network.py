"""Stacked recurrent network with a linear head, Adam training and persistence.

Every recurrent layer consumes the full hidden-state sequence of the layer
below it and emits its own full sequence; only the linear head reads the
final timestep of the top layer. Initial states are zero. Training is
plain minibatch BPTT with Adam, time-based learning-rate decay and
early stopping on validation loss with best-weights restore.

Datasets are anything with two attributes: `inputs`, a float64 array of
shape (samples, lookback, features), and `targets`, shape (samples, horizon).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cells import (
    CellState,
    GruParams,
    LstmParams,
    gru_backward,
    gru_init,
    gru_step,
    lstm_backward,
    lstm_init,
    lstm_step,
    param_fields,
    zero_state,
)
from .fileio import atomic_write_text
from .tensor import Matrix, ShapeError, add_bias, matmul

MODEL_HEADER = "trafficast-model v1"
CELL_KINDS = ("lstm", "gru")


class ModelFormatError(ValueError):
    """Model file is not a readable trafficast model."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass
class ModelConfig:
    cell_kind: str
    layer_sizes: list[int]
    input_dim: int
    horizon: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.cell_kind not in CELL_KINDS:
            raise ValueError(f"cell_kind must be one of {CELL_KINDS}, got {self.cell_kind!r}")
        if not self.layer_sizes or any(h < 1 for h in self.layer_sizes):
            raise ValueError(f"layer_sizes must be non-empty positive ints, got {self.layer_sizes}")
        if self.input_dim < 1 or self.horizon < 1:
            raise ValueError(f"input_dim and horizon must be >= 1, got {self.input_dim}, {self.horizon}")


@dataclass
class TrainConfig:
    base_lr: float = 1e-4
    decay: float = 1e-5
    batch_size: int = 64
    max_epochs: int = 300
    patience: int = 5
    seed: int = 0

    def validate(self) -> None:
        if self.base_lr <= 0:
            raise ValueError(f"base_lr must be > 0, got {self.base_lr}")
        if self.batch_size < 1 or self.patience < 1 or self.max_epochs < 1:
            raise ValueError("batch_size, patience and max_epochs must be >= 1")


@dataclass
class Network:
    layers: list  # LstmParams | GruParams per layer, bottom to top
    head_w: Matrix
    head_b: Matrix
    config: ModelConfig

    def params_dict(self) -> dict[str, Matrix]:
        out: dict[str, Matrix] = {}
        for i, layer in enumerate(self.layers):
            for name in param_fields(layer):
                out[f"layer{i}.{name}"] = getattr(layer, name)
        out["head.w"] = self.head_w
        out["head.b"] = self.head_b
        return out

    def with_params(self, params: dict[str, Matrix]) -> "Network":
        """Rebuild the network around a params dict produced by params_dict()."""
        layers = []
        for i, layer in enumerate(self.layers):
            kwargs = {name: params[f"layer{i}.{name}"] for name in param_fields(layer)}
            layers.append(type(layer)(**kwargs))
        return Network(layers=layers, head_w=params["head.w"], head_b=params["head.b"], config=self.config)


def layer_input_dims(config: ModelConfig) -> list[int]:
    return [config.input_dim] + list(config.layer_sizes[:-1])


def build_network(config: ModelConfig) -> Network:
    """Deterministically initialize all layers and the head from config.seed."""
    config.validate()
    init = lstm_init if config.cell_kind == "lstm" else gru_init
    seeds = np.random.SeedSequence(config.seed).generate_state(len(config.layer_sizes) + 1)
    layers = [
        init(in_dim, hidden, int(seeds[i]))
        for i, (in_dim, hidden) in enumerate(zip(layer_input_dims(config), config.layer_sizes))
    ]
    head_rng = np.random.default_rng(int(seeds[-1]))
    last = config.layer_sizes[-1]
    bound = np.sqrt(6.0 / (last + config.horizon))
    head_w = head_rng.uniform(-bound, bound, size=(config.horizon, last))
    head_b = np.zeros((config.horizon, 1))
    return Network(layers=layers, head_w=head_w, head_b=head_b, config=config)


@dataclass
class SequenceCaches:
    layer_caches: list  # [layer][timestep] step caches
    h_last: Matrix  # top layer hidden state at the final timestep


def forward_sequence(net: Network, window: list[Matrix]) -> tuple[Matrix, SequenceCaches]:
    """Run the stack over a window of timesteps, return (prediction, caches)."""
    if not window:
        raise ShapeError("forward_sequence: empty window")
    batch = window[0].shape[1]
    is_lstm = net.config.cell_kind == "lstm"
    step = lstm_step if is_lstm else gru_step
    seq = window
    layer_caches = []
    for layer in net.layers:
        state = zero_state(layer.hidden_dim, batch, with_cell=is_lstm)
        caches = []
        outs = []
        for x_t in seq:
            state, cache = step(layer, x_t, state)
            caches.append(cache)
            outs.append(state.h)
        layer_caches.append(caches)
        seq = outs
    h_last = seq[-1]
    pred = add_bias(matmul(net.head_w, h_last), net.head_b)
    return pred, SequenceCaches(layer_caches=layer_caches, h_last=h_last)


def predict(net: Network, window: list[Matrix]) -> Matrix:
    """Forward pass only; (horizon x batch) scaled-space outputs."""
    pred, _ = forward_sequence(net, window)
    return pred


def mse_loss_and_grad(pred: Matrix, target: Matrix) -> tuple[float, Matrix]:
    """Mean squared error over all entries and its gradient w.r.t. pred."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse: shapes differ, {pred.shape} vs {target.shape}")
    diff = pred - target
    n = diff.size
    return float(np.mean(diff * diff)), (2.0 / n) * diff


def backward_sequence(net: Network, caches: SequenceCaches, d_pred: Matrix) -> dict[str, Matrix]:
    """Exact gradients of every parameter given the upstream prediction gradient.

    Gradient flows into each layer both from the layer above (at every
    timestep, since layers hand full sequences upward) and recurrently
    from later timesteps within the layer.
    """
    if d_pred.shape[0] != net.head_w.shape[0]:
        raise ShapeError(f"backward_sequence: d_pred rows {d_pred.shape} do not match head {net.head_w.shape}")
    n_steps = len(caches.layer_caches[0])
    batch = caches.h_last.shape[1]
    is_lstm = net.config.cell_kind == "lstm"

    grads: dict[str, Matrix] = {
        "head.w": matmul(d_pred, caches.h_last.T),
        "head.b": d_pred.sum(axis=1, keepdims=True),
    }
    # upstream gradient on the top layer's output sequence: only the last step
    d_seq: list[Matrix | None] = [None] * n_steps
    d_seq[-1] = matmul(net.head_w.T, d_pred)

    for li in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[li]
        step_caches = caches.layer_caches[li]
        if len(step_caches) != n_steps:
            raise ShapeError("backward_sequence: cache does not match forward pass")
        acc = {name: np.zeros_like(getattr(layer, name)) for name in param_fields(layer)}
        d_h_next = np.zeros((layer.hidden_dim, batch))
        d_c_next = np.zeros((layer.hidden_dim, batch))
        d_below: list[Matrix | None] = [None] * n_steps
        for t in range(n_steps - 1, -1, -1):
            d_h = d_h_next if d_seq[t] is None else d_seq[t] + d_h_next
            if is_lstm:
                d_params, d_x, d_prev = lstm_backward(step_caches[t], d_h, d_c_next)
                d_h_next, d_c_next = d_prev.h, d_prev.c
            else:
                d_params, d_x, d_h_next = gru_backward(step_caches[t], d_h)
            for name in acc:
                acc[name] += getattr(d_params, name)
            d_below[t] = d_x
        for name, g in acc.items():
            grads[f"layer{li}.{name}"] = g
        d_seq = d_below
    return grads


@dataclass
class AdamState:
    m: dict[str, Matrix]
    v: dict[str, Matrix]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(params: dict[str, Matrix]) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
    )


def adam_step(
    params: dict[str, Matrix], grads: dict[str, Matrix], state: AdamState, lr_t: float
) -> tuple[dict[str, Matrix], AdamState]:
    """One bias-corrected Adam update. Pure: returns fresh params and state."""
    if set(params) != set(grads):
        raise ShapeError(f"adam_step: params/grads keys differ: {sorted(set(params) ^ set(grads))}")
    t = state.t + 1
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ShapeError(f"adam_step: grad shape {g.shape} != param shape {p.shape} for {k}")
        m = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[k] + (1.0 - state.beta2) * (g * g)
        new_p[k] = p - lr_t * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_m[k] = m
        new_v[k] = v
    return new_p, AdamState(m=new_m, v=new_v, t=t, beta1=state.beta1, beta2=state.beta2, eps=state.eps)


def lr_schedule(cfg: TrainConfig, step: int) -> float:
    """Time-based decay applied per optimizer step: base / (1 + decay * step)."""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    return cfg.base_lr / (1.0 + cfg.decay * step)


def _batch_window(inputs: np.ndarray, idx: np.ndarray) -> list[Matrix]:
    # (samples, lookback, features) -> one (features x batch) matrix per timestep
    return [np.ascontiguousarray(inputs[idx, t, :].T) for t in range(inputs.shape[1])]


def _batch_ranges(n: int, size: int):
    for start in range(0, n, size):
        yield np.arange(start, min(start + size, n))


def validation_loss(net: Network, dataset, batch_size: int) -> float:
    """MSE over the whole dataset in scaled space, batched for memory."""
    n = dataset.inputs.shape[0]
    if n == 0:
        raise ValueError("validation_loss: empty dataset")
    sse = 0.0
    count = 0
    for idx in _batch_ranges(n, batch_size):
        pred = predict(net, _batch_window(dataset.inputs, idx))
        diff = pred - dataset.targets[idx].T
        sse += float(np.sum(diff * diff))
        count += diff.size
    return sse / count


def predict_dataset(net: Network, dataset, batch_size: int = 256) -> np.ndarray:
    """Predictions for every sample, shape (samples, horizon), scaled space."""
    chunks = [
        predict(net, _batch_window(dataset.inputs, idx)).T
        for idx in _batch_ranges(dataset.inputs.shape[0], batch_size)
    ]
    return np.concatenate(chunks, axis=0)


def train(
    net: Network, train_set, val_set, cfg: TrainConfig
) -> tuple[Network, list[tuple[int, float, float]]]:
    """Minibatch Adam training with early stopping and best-weights restore.

    Windows are reshuffled every epoch (seeded); validation MSE is computed
    on scaled values after each epoch. Stops when validation loss has not
    improved (by at least 1e-12) for cfg.patience consecutive epochs, or at
    cfg.max_epochs. Returns the best-validation network and the per-epoch
    history of (epoch, train_loss, val_loss).
    """
    cfg.validate()
    n = train_set.inputs.shape[0]
    if n == 0 or val_set.inputs.shape[0] == 0:
        raise ValueError("train: empty training or validation dataset")
    params = net.params_dict()
    state = init_adam(params)
    rng = np.random.default_rng(cfg.seed)
    history: list[tuple[int, float, float]] = []
    best_val = math.inf
    best_params = dict(params)
    stale = 0
    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(n)
        sse = 0.0
        count = 0
        for lo in range(0, n, cfg.batch_size):
            idx = perm[lo:lo + cfg.batch_size]
            window = _batch_window(train_set.inputs, idx)
            target = train_set.targets[idx].T
            pred, caches = forward_sequence(net, window)
            loss, d_pred = mse_loss_and_grad(pred, target)
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite training loss at epoch {epoch}, optimizer step {state.t}")
            grads = backward_sequence(net, caches, d_pred)
            params, state = adam_step(params, grads, state, lr_schedule(cfg, state.t))
            net = net.with_params(params)
            sse += loss * target.size
            count += target.size
        train_loss = sse / count
        val_loss = validation_loss(net, val_set, cfg.batch_size)
        if not math.isfinite(val_loss):
            raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch}")
        history.append((epoch, train_loss, val_loss))
        if best_val - val_loss >= 1e-12:
            best_val = val_loss
            best_params = dict(params)
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return net.with_params(best_params), history


def expected_param_shapes(config: ModelConfig) -> dict[str, tuple[int, int]]:
    """Parameter name -> shape mandated by the config."""
    shapes: dict[str, tuple[int, int]] = {}
    names = ("w_f", "w_i", "w_c", "w_o", "b_f", "b_i", "b_c", "b_o") if config.cell_kind == "lstm" \
        else ("w_r", "w_z", "w_h", "b_r", "b_z", "b_h")
    for i, (in_dim, hidden) in enumerate(zip(layer_input_dims(config), config.layer_sizes)):
        for name in names:
            cols = hidden + in_dim if name.startswith("w_") else 1
            shapes[f"layer{i}.{name}"] = (hidden, cols)
    shapes["head.w"] = (config.horizon, config.layer_sizes[-1])
    shapes["head.b"] = (config.horizon, 1)
    return shapes


def save_model(net: Network, path, extra: dict[str, str] | None = None) -> None:
    """Line-oriented text format; full-precision floats for a bit-exact round trip."""
    cfg = net.config
    lines = [
        MODEL_HEADER,
        f"cell_kind={cfg.cell_kind}",
        "layer_sizes=" + ",".join(str(h) for h in cfg.layer_sizes),
        f"input_dim={cfg.input_dim}",
        f"horizon={cfg.horizon}",
        f"seed={cfg.seed}",
    ]
    for key, value in (extra or {}).items():
        if "=" in key or "\n" in key or "\n" in str(value):
            raise ValueError(f"extra config key/value not serializable: {key!r}")
        lines.append(f"{key}={value}")
    for name, mat in net.params_dict().items():
        lines.append(f"param {name}")
        lines.append(f"{mat.shape[0]} {mat.shape[1]}")
        for row in mat:
            lines.append(" ".join(repr(float(v)) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _parse_matrix(lines: list[str], pos: int, name: str) -> tuple[Matrix, int]:
    if pos >= len(lines):
        raise ModelFormatError(f"truncated file: missing shape line for {name}")
    parts = lines[pos].split()
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise ModelFormatError(f"bad shape line for {name}: {lines[pos]!r}")
    rows, cols = int(parts[0]), int(parts[1])
    if pos + 1 + rows > len(lines):
        raise ModelFormatError(f"truncated file: expected {rows} rows for {name}")
    data = np.empty((rows, cols))
    for r in range(rows):
        vals = lines[pos + 1 + r].split()
        if len(vals) != cols:
            raise ModelFormatError(f"{name} row {r}: expected {cols} values, got {len(vals)}")
        try:
            data[r] = [float(v) for v in vals]
        except ValueError as exc:
            raise ModelFormatError(f"{name} row {r}: unparseable float ({exc})") from None
    return data, pos + 1 + rows


def load_model(path) -> tuple[Network, dict[str, str]]:
    """Read a saved model; returns the network and any extra config entries."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != MODEL_HEADER:
        head = lines[0] if lines else "<empty>"
        raise ModelFormatError(f"bad header {head!r}, expected {MODEL_HEADER!r}")
    config_kv: dict[str, str] = {}
    pos = 1
    while pos < len(lines) and not lines[pos].startswith("param "):
        line = lines[pos]
        if "=" not in line:
            raise ModelFormatError(f"expected key=value or param line, got {line!r}")
        key, _, value = line.partition("=")
        config_kv[key] = value
        pos += 1
    try:
        config = ModelConfig(
            cell_kind=config_kv.pop("cell_kind"),
            layer_sizes=[int(s) for s in config_kv.pop("layer_sizes").split(",")],
            input_dim=int(config_kv.pop("input_dim")),
            horizon=int(config_kv.pop("horizon")),
            seed=int(config_kv.pop("seed")),
        )
        config.validate()
    except (KeyError, ValueError) as exc:
        raise ModelFormatError(f"bad or missing config field: {exc}") from None
    params: dict[str, Matrix] = {}
    while pos < len(lines):
        if not lines[pos].startswith("param "):
            raise ModelFormatError(f"expected param line, got {lines[pos]!r}")
        name = lines[pos][len("param "):]
        params[name], pos = _parse_matrix(lines, pos + 1, name)
    expected = expected_param_shapes(config)
    if set(params) != set(expected):
        missing = sorted(set(expected) - set(params))
        surplus = sorted(set(params) - set(expected))
        raise ModelFormatError(f"parameter set mismatch: missing={missing} unexpected={surplus}")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ModelFormatError(
                f"shape inconsistency for {name}: file has {params[name].shape}, config implies {shape}")
    param_cls = LstmParams if config.cell_kind == "lstm" else GruParams
    layers = []
    for i in range(len(config.layer_sizes)):
        names = ("w_f", "w_i", "w_c", "w_o", "b_f", "b_i", "b_c", "b_o") if config.cell_kind == "lstm" \
            else ("w_r", "w_z", "w_h", "b_r", "b_z", "b_h")
        layers.append(param_cls(**{n: params[f"layer{i}.{n}"] for n in names}))
    net = Network(layers=layers, head_w=params["head.w"], head_b=params["head.b"], config=config)
    return net, config_kv
