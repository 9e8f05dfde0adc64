"""From-scratch LSTM/GRU forecasting toolkit for hourly traffic volume data."""

from .cells import CellState, GruParams, LstmParams, gru_init, gru_step, lstm_init, lstm_step
from .datapipe import (
    FeatureFrame,
    RawRecord,
    ScalerParams,
    WindowConfig,
    WindowedDataset,
    encode,
    fit_scaler,
    inverse_target,
    make_windows,
    parse_csv,
    prepare_datasets,
    split,
    transform,
)
from .metrics import EvalReport, evaluate, mae, mape, mse
from .network import (
    AdamState,
    ModelConfig,
    Network,
    TrainConfig,
    adam_step,
    backward_sequence,
    build_network,
    forward_sequence,
    load_model,
    lr_schedule,
    mse_loss_and_grad,
    predict,
    predict_dataset,
    save_model,
    train,
)

__version__ = "0.1.0"
