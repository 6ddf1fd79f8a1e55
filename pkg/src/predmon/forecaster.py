"""Bidirectional LSTM forecaster producing direct multi-horizon predictions."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import neural
from .errors import DimensionMismatch, DivergedLoss, EmptyDataset, FrameTooShort, ZeroActual
from .metrics import MetricReport
from .neural import AdamState, DenseLayer, LstmCell
from .timeseries import NormalizationSpec, TimeSeriesFrame, WindowedDataset, fit_normalizer, make_windows

log = logging.getLogger(__name__)


@dataclass
class ForecasterConfig:
    window: int = 8
    horizon: int = 4
    hidden: int = 32
    dropout: float = 0.2
    batch_size: int = 32
    epochs: int = 200
    learning_rate: float = 0.005
    val_fraction: float = 0.2
    normalization: str = "minmax"
    seed: int = 0


@dataclass
class ForecastNetwork:
    forward_cell: LstmCell
    backward_cell: LstmCell
    head: DenseLayer
    window: int
    horizon: int
    channels: tuple[str, ...]
    dropout: float = 0.0
    norm: NormalizationSpec | None = None
    optimizer: AdamState = field(default_factory=AdamState)

    @classmethod
    def init(cls, channels, window: int, horizon: int, hidden: int, dropout: float,
             rng: np.random.Generator, norm: NormalizationSpec | None = None, lr: float = 1e-3):
        C = len(channels)
        return cls(
            LstmCell.init(C, hidden, rng),
            LstmCell.init(C, hidden, rng),
            DenseLayer.init(2 * hidden, horizon * C, "identity", rng),
            window, horizon, tuple(channels), dropout, norm, AdamState(lr=lr),
        )

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def hidden(self) -> int:
        return self.forward_cell.hidden_size

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        out.update(neural.prefixed("fwd", self.forward_cell.params()))
        out.update(neural.prefixed("bwd", self.backward_cell.params()))
        out.update(neural.prefixed("head", self.head.params()))
        return out

    def forward(self, x: np.ndarray, mask: np.ndarray | None = None):
        """Normalized (B, W, C) windows -> normalized (B, H, C) forecasts."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[1:] != (self.window, self.n_channels):
            raise DimensionMismatch(f"expected (B, {self.window}, {self.n_channels}), got {x.shape}")
        hf, cf = self.forward_cell.forward(x)
        hb, cb = self.backward_cell.forward(x, reverse=True)
        feat = np.concatenate([hf[:, -1], hb[:, 0]], axis=1)
        if mask is not None:
            feat = feat * mask
        y, ch = self.head.forward(feat)
        return y.reshape(len(x), self.horizon, self.n_channels), (cf, cb, ch, mask, hf.shape)

    def loss_and_grads(self, x, y, mask=None):
        pred, (cf, cb, ch, mask, hshape) = self.forward(x, mask)
        y = np.asarray(y, dtype=np.float64)
        loss = neural.mse_loss(pred, y)
        dpred = neural.mse_grad(pred, y).reshape(len(pred), -1)
        dfeat, g_head = self.head.backward(ch, dpred)
        if mask is not None:
            dfeat = dfeat * mask
        h = self.hidden
        dhf = np.zeros(hshape)
        dhb = np.zeros(hshape)
        dhf[:, -1] = dfeat[:, :h]
        dhb[:, 0] = dfeat[:, h:]
        _, g_fwd = self.forward_cell.backward(cf, dhf)
        _, g_bwd = self.backward_cell.backward(cb, dhb)
        grads = {}
        grads.update(neural.prefixed("fwd", g_fwd))
        grads.update(neural.prefixed("bwd", g_bwd))
        grads.update(neural.prefixed("head", g_head))
        return loss, grads

    def predict_normalized(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def predict_batch(self, windows: np.ndarray) -> np.ndarray:
        """Raw-unit (B, W, C) windows -> raw-unit (B, H, C) forecasts, dropout off."""
        windows = np.asarray(windows, dtype=np.float64)
        x = self.norm.apply(windows) if self.norm is not None else windows
        out = self.predict_normalized(x)
        return self.norm.invert(out) if self.norm is not None else out


def predict_horizon(network: ForecastNetwork, window) -> np.ndarray:
    w = np.asarray(window, dtype=np.float64)
    if w.ndim == 1:
        w = w[:, None]
    if w.shape != (network.window, network.n_channels):
        raise DimensionMismatch(f"window shape {w.shape} != ({network.window}, {network.n_channels})")
    return network.predict_batch(w[None])[0]


@dataclass
class TrainReport:
    losses: list[float]
    horizon_metrics: list[dict | None]
    aggregate: dict | None
    epochs: int
    seed: int
    n_train: int
    n_val: int
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def train_forecaster(dataset: WindowedDataset, config: ForecasterConfig | None = None,
                     norm: NormalizationSpec | None = None, channels=None):
    """Mini-batch Adam on MSE over all H*C outputs.

    ``dataset`` must already be normalized; ``norm`` is attached to the
    network so that predictions come back in original units.
    """
    config = config or ForecasterConfig()
    if len(dataset) == 0:
        raise EmptyDataset("no training windows")
    C = dataset.inputs.shape[2]
    channels = tuple(channels) if channels is not None else tuple(f"ch{i}" for i in range(C))
    if dataset.window_length != config.window or dataset.horizon != config.horizon:
        config = ForecasterConfig(**{**asdict(config), "window": dataset.window_length,
                                     "horizon": dataset.horizon})
    rng = np.random.default_rng(config.seed)
    net = ForecastNetwork.init(channels, config.window, config.horizon, config.hidden,
                               config.dropout, rng, norm, config.learning_rate)
    train, val = dataset.split(config.val_fraction)
    t0 = time.perf_counter()
    losses = []
    params = net.params()
    for epoch in range(config.epochs):
        order = rng.permutation(len(train))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            mask = neural.dropout_mask((len(idx), 2 * net.hidden), net.dropout, rng)
            loss, grads = net.loss_and_grads(train.inputs[idx], train.targets[idx], mask)
            if not np.isfinite(loss):
                raise DivergedLoss(f"epoch {epoch}: loss {loss}")
            neural.adam_step(net.optimizer, params, grads)
            total += loss * len(idx)
        losses.append(total / len(train))
    per_h, agg = evaluate_forecaster(net, val if len(val) else train)
    report = TrainReport(losses, per_h, agg, config.epochs, config.seed, len(train), len(val),
                         time.perf_counter() - t0)
    if losses:
        log.info("forecaster trained: loss %.5f -> %.5f over %d epochs", losses[0], losses[-1], len(losses))
    return net, report


def evaluate_forecaster(net: ForecastNetwork, dataset: WindowedDataset):
    """Per-horizon-step and aggregate metrics in original units.

    MAPE is reported as None where an actual value is zero.
    """
    if len(dataset) == 0:
        return [None] * net.horizon, None
    pred = net.predict_normalized(dataset.inputs)
    actual = dataset.targets
    if net.norm is not None:
        pred, actual = net.norm.invert(pred), net.norm.invert(actual)
    per_h = [_metrics(pred[:, k], actual[:, k]) for k in range(net.horizon)]
    return per_h, _metrics(pred, actual)


def _metrics(pred, actual) -> dict:
    try:
        return MetricReport.compute(pred, actual).as_dict()
    except ZeroActual:
        from .metrics import mae, rmse
        return {"mae": mae(pred, actual), "mape": None, "rmse": rmse(pred, actual), "n": int(np.size(pred))}


def fit_forecaster(frame: TimeSeriesFrame, config: ForecasterConfig | None = None):
    """Normalize a raw frame, window it and train; returns (network, report)."""
    config = config or ForecasterConfig()
    norm = fit_normalizer(frame, config.normalization)
    ds = make_windows(norm.apply(frame.values), config.window, config.horizon)
    return train_forecaster(ds, config, norm, frame.channels)


def holdout_metrics(net: ForecastNetwork, frame: TimeSeriesFrame, val_fraction: float = 0.2):
    values = net.norm.apply(frame.values) if net.norm is not None else frame.values
    ds = make_windows(values, net.window, net.horizon)
    _, val = ds.split(val_fraction)
    return evaluate_forecaster(net, val if len(val) else ds)


@dataclass(frozen=True)
class ForecastFrame:
    """Rows of predicted states, one per (anchor, horizon step)."""

    anchor_t: np.ndarray
    target_t: np.ndarray
    horizon_step: np.ndarray  # 1-based
    channels: tuple[str, ...]
    values: np.ndarray        # (rows, C)

    def __len__(self) -> int:
        return len(self.values)

    def channel(self, name: str) -> np.ndarray:
        return self.values[:, self.channels.index(name)]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["anchor_t", "horizon_step", "channel", "value"])
            for r in range(len(self)):
                for j, ch in enumerate(self.channels):
                    w.writerow([_num(self.anchor_t[r]), int(self.horizon_step[r]), ch, repr(float(self.values[r, j]))])


def _num(x):
    x = float(x)
    return int(x) if x.is_integer() else x


def rolling_forecast(network: ForecastNetwork, frame: TimeSeriesFrame, stride: int = 1) -> ForecastFrame:
    """Forecast H steps ahead from every anchor with a full window behind it.

    With ``stride == horizon`` the blocks tile the future without overlap,
    which gives one contiguous predicted trajectory.
    """
    W, H = network.window, network.horizon
    if len(frame) < W:
        raise FrameTooShort(f"need at least {W} rows, got {len(frame)}")
    if stride < 1:
        raise ValueError("stride must be positive")
    vals = frame.select(network.channels).values if frame.channels != network.channels else frame.values
    anchors = np.arange(W - 1, len(frame), stride)
    windows = np.stack([vals[a - W + 1:a + 1] for a in anchors])
    preds = network.predict_batch(windows)  # (n, H, C)
    ts = np.asarray(frame.timestamps, dtype=np.float64)
    dt = float(np.median(np.diff(ts))) if len(ts) > 1 else 1.0
    anchor_t = np.repeat(ts[anchors], H)
    steps = np.tile(np.arange(1, H + 1), len(anchors))
    return ForecastFrame(anchor_t, anchor_t + steps * dt, steps, network.channels,
                         preds.reshape(-1, network.n_channels))
