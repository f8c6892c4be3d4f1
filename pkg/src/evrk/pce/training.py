from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..core import Dataset
from ..prep import WindowArrays, fit_normalization, stack_windows
from .network import CnnModel, backward, encode, forward_batch, mse_loss, predict_normalized
from .optim import AdamState, DivergenceError, adam_step

log = logging.getLogger(__name__)


@dataclass
class TrainResult:
    model: CnnModel
    history: list = field(default_factory=list)  # (epoch, train_mse, valid_mse)

    def write_history(self, path: Union[str, Path], header_comment: str = "") -> None:
        with open(path, "w", newline="") as fh:
            for line in header_comment.splitlines():
                fh.write(f"# {line}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "train_mse", "valid_mse"])
            for epoch, train_mse, valid_mse in self.history:
                writer.writerow([epoch, repr(train_mse), "" if valid_mse is None else repr(valid_mse)])


def _as_arrays(data: Union[Dataset, WindowArrays, None]) -> Optional[WindowArrays]:
    if data is None or isinstance(data, WindowArrays):
        return data
    if len(data) == 0:
        raise ValueError("empty dataset")
    return stack_windows(data.windows)


def train(model: CnnModel, train_set: Union[Dataset, WindowArrays], valid_set=None, epochs: int = 100,
          batch_size: int = 64, rng_seed: int = 0, alpha: float = 0.001, restore_best: bool = False,
          in_place: bool = False) -> TrainResult:
    """Minimise MSE on normalised power with mini-batch Adam.

    Batches are drawn from a seeded permutation each epoch and dropout uses
    its own seeded stream, so equal seeds give identical histories. The
    validation set is only ever evaluated in inference mode. If the model has
    no normalisation ranges they are fitted on ``train_set``.
    """
    train_arrays = _as_arrays(train_set)
    valid_arrays = _as_arrays(valid_set)
    if train_arrays.target is None:
        raise ValueError("training windows need act_pow targets")
    model = model if in_place else model.copy()
    if model.norm is None:
        model.norm = fit_normalization(train_arrays, model.input_names, model.scalar_names, model.target_name)
    x, s, y = encode(model, train_arrays)
    if valid_arrays is not None:
        vx, vs, vy = encode(model, valid_arrays)

    order_rng = np.random.default_rng([rng_seed, 0])
    drop_rng = np.random.default_rng([rng_seed, 1])
    state = AdamState(alpha=alpha)
    n = x.shape[0]
    history = []
    best = (np.inf, None)
    for epoch in range(1, epochs + 1):
        order = order_rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            out, cache = forward_batch(model, x[idx], s[idx], training=True, rng=drop_rng, keep_cache=True)
            loss, dout = mse_loss(out, y[idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite training loss at epoch {epoch}, batch starting {start}")
            adam_step(model.params, backward(model, cache, dout), state)
            total += loss * idx.size
        train_mse = total / n
        valid_mse = None
        if valid_arrays is not None:
            valid_mse = mse_loss(predict_normalized(model, vx, vs), vy)[0]
            if not np.isfinite(valid_mse):
                raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
            if restore_best and valid_mse < best[0]:
                best = (valid_mse, {k: v.copy() for k, v in model.params.items()})
        history.append((epoch, train_mse, valid_mse))
        level = logging.INFO if epoch % 10 == 0 or epoch == epochs else logging.DEBUG
        log.log(level, "epoch %d train %.6g valid %s", epoch, train_mse,
                "-" if valid_mse is None else f"{valid_mse:.6g}")
    if restore_best and best[1] is not None:
        model.params = best[1]
    model.meta.update(epochs=epochs, batch_size=batch_size, seed=rng_seed, alpha=alpha)
    return TrainResult(model, history)
