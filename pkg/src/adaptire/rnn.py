"""Recurrent surface-temperature predictor trained with backpropagation through time.

Inputs per step are inner-liner temperature, ambient temperature, frictional
power, forward velocity and the surface temperature of the previous step. In
closed-loop use the network's own previous prediction is fed back as the fifth
input, and training differentiates through that feedback.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from . import kvfile
from .exceptions import TrainingDivergedError

INPUT_NAMES = ("inner_liner_c", "ambient_c", "friction_energy_w", "velocity_mps", "previous_surface_c")
N_INPUTS = len(INPUT_NAMES)


def _as_sequences(X) -> list[np.ndarray]:
    if isinstance(X, np.ndarray) and X.ndim == 2:
        X = [X]
    seqs = [np.asarray(x, dtype=np.float64) for x in X]
    if not seqs:
        raise ValueError("need at least one sequence")
    for s in seqs:
        if s.ndim != 2 or s.shape[1] != N_INPUTS:
            raise ValueError(f"each sequence must have shape (steps, {N_INPUTS}), got {s.shape}")
        if s.shape[0] == 0:
            raise ValueError("empty sequence")
        if not np.all(np.isfinite(s)):
            raise ValueError("inputs must be finite")
    return seqs


def _pad(seqs: list[np.ndarray], width: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    steps = max(len(s) for s in seqs)
    shape = (len(seqs), steps) if width is None else (len(seqs), steps, width)
    out = np.zeros(shape)
    mask = np.zeros((len(seqs), steps))
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
        mask[i, : len(s)] = 1.0
    return out, mask


@dataclass(frozen=True)
class _Layout:
    n_inputs: int
    n_hidden: int
    n_layers: int

    def shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        out = []
        for layer in range(self.n_layers):
            fan_in = self.n_inputs if layer == 0 else self.n_hidden
            out += [
                (f"w_in_{layer}", (self.n_hidden, fan_in)),
                (f"w_rec_{layer}", (self.n_hidden, self.n_hidden)),
                (f"b_{layer}", (self.n_hidden,)),
            ]
        out += [("w_out", (1, self.n_hidden)), ("b_out", (1,))]
        return out

    @property
    def size(self) -> int:
        return sum(int(np.prod(s)) for _, s in self.shapes())

    def unpack(self, theta: np.ndarray) -> dict[str, np.ndarray]:
        views, start = {}, 0
        for name, shape in self.shapes():
            n = int(np.prod(shape))
            views[name] = theta[start : start + n].reshape(shape)
            start += n
        return views


def _forward(layout: _Layout, theta: np.ndarray, exog: np.ndarray, seed: np.ndarray):
    """Closed-loop pass over a batch; ``exog`` is (B, T, 4) normalised, ``seed`` (B,)."""
    w = layout.unpack(theta)
    b_size, steps, _ = exog.shape
    L, H = layout.n_layers, layout.n_hidden
    hs = np.zeros((L, steps + 1, b_size, H))  # hs[l, t + 1] is the state after step t
    xs = np.zeros((steps, b_size, layout.n_inputs))
    ys = np.zeros((steps, b_size))
    prev = seed
    for t in range(steps):
        x = np.concatenate([exog[:, t, :], prev[:, None]], axis=1)
        xs[t] = x
        inp = x
        for layer in range(L):
            h = np.tanh(inp @ w[f"w_in_{layer}"].T + hs[layer, t] @ w[f"w_rec_{layer}"].T + w[f"b_{layer}"])
            hs[layer, t + 1] = h
            inp = h
        prev = (inp @ w["w_out"].T)[:, 0] + w["b_out"][0]
        ys[t] = prev
    return ys, hs, xs


def _loss_and_grad(layout: _Layout, theta: np.ndarray, exog, seed, target, mask):
    """Masked mean squared error over all steps and its exact BPTT gradient."""
    ys, hs, xs = _forward(layout, theta, exog, seed)
    w = layout.unpack(theta)
    grad = np.zeros_like(theta)
    g = layout.unpack(grad)
    steps = ys.shape[0]
    count = mask.sum()
    err = (ys - target.T) * mask.T
    loss = float((err * err).sum() / count)
    L = layout.n_layers
    dh_next = [np.zeros_like(hs[0, 0]) for _ in range(L)]
    dy_feedback = np.zeros(ys.shape[1])
    for t in range(steps - 1, -1, -1):
        dy = 2.0 * err[t] / count + dy_feedback
        g["w_out"] += dy[None, :] @ hs[L - 1, t + 1]
        g["b_out"] += dy.sum()
        dh = dy[:, None] @ w["w_out"]
        for layer in range(L - 1, -1, -1):
            h = hs[layer, t + 1]
            da = (dh + dh_next[layer]) * (1.0 - h * h)
            below = xs[t] if layer == 0 else hs[layer - 1, t + 1]
            g[f"w_in_{layer}"] += da.T @ below
            g[f"w_rec_{layer}"] += da.T @ hs[layer, t]
            g[f"b_{layer}"] += da.sum(axis=0)
            dh_next[layer] = da @ w[f"w_rec_{layer}"]
            dh = da @ w[f"w_in_{layer}"]
        dy_feedback = dh[:, -1]  # gradient into the fed-back previous prediction
    return loss, grad


class SurfaceTemperatureRNN(RegressorMixin, BaseEstimator):
    """Two-layer Elman network predicting tire surface temperature.

    ``X`` is a sequence (or list of sequences) of shape ``(steps, 5)``; the
    fifth column is only read at the first step, where it seeds the feedback
    loop. ``y`` holds the matching surface temperatures.

    Parameters
    ----------
    n_hidden : int
        Neurons per recurrent layer.
    n_layers : int
        Number of stacked recurrent layers.
    learning_rate, epochs, seed
        Adam step size, number of full-batch epochs and weight-init seed.
    clip_norm : float
        Global gradient-norm clip applied before each update.
    """

    def __init__(self, n_hidden: int = 14, n_layers: int = 2, learning_rate: float = 0.01,
                 epochs: int = 1500, seed: int = 0, clip_norm: float = 1.0, init_scale: float = 0.3):
        self.n_hidden = n_hidden
        self.n_layers = n_layers
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.seed = seed
        self.clip_norm = clip_norm
        self.init_scale = init_scale

    # -- normalisation ---------------------------------------------------------------

    def _norm_x(self, x: np.ndarray) -> np.ndarray:
        return (x - self.x_min_) / self.x_range_

    def _norm_y(self, y):
        return (np.asarray(y) - self.y_min_) / self.y_range_

    def _denorm_y(self, y):
        return np.asarray(y) * self.y_range_ + self.y_min_

    @property
    def layout_(self) -> _Layout:
        return _Layout(N_INPUTS, self.n_hidden, self.n_layers)

    def _batch(self, seqs: list[np.ndarray]):
        padded, mask = _pad(seqs, N_INPUTS)
        normed = self._norm_x(padded)
        return normed[:, :, :4], normed[:, 0, 4], mask

    # -- sklearn API ---------------------------------------------------------------------

    def fit(self, X, y):
        seqs = _as_sequences(X)
        targets = [np.asarray(t, dtype=np.float64).ravel() for t in ([y] if np.ndim(y) == 1 and len(seqs) == 1 else y)]
        if len(targets) != len(seqs) or any(len(t) != len(s) for t, s in zip(targets, seqs)):
            raise ValueError("each target series must match its input sequence length")
        if not all(np.all(np.isfinite(t)) for t in targets):
            raise ValueError("targets must be finite")
        stacked = np.vstack(seqs)
        all_y = np.concatenate(targets)
        self.y_min_ = float(all_y.min())
        self.y_range_ = float(all_y.max() - all_y.min()) or 1.0
        self.x_min_ = stacked.min(axis=0)
        self.x_range_ = stacked.max(axis=0) - self.x_min_
        self.x_range_[self.x_range_ == 0] = 1.0
        # the fed-back input lives on the output scale
        self.x_min_[4] = self.y_min_
        self.x_range_[4] = self.y_range_

        layout = self.layout_
        rng = np.random.default_rng(self.seed)
        theta = np.zeros(layout.size)
        for name, view in layout.unpack(theta).items():
            if not name.startswith("b"):
                view[...] = rng.normal(0.0, self.init_scale / np.sqrt(view.shape[1]), view.shape)

        exog, seed, mask = self._batch(seqs)
        target, _ = _pad([self._norm_y(t) for t in targets])
        m = np.zeros_like(theta)
        v = np.zeros_like(theta)
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        history = []
        for epoch in range(1, self.epochs + 1):
            loss, grad = _loss_and_grad(layout, theta, exog, seed, target, mask)
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise TrainingDivergedError(epoch)
            history.append(loss)
            norm = float(np.linalg.norm(grad))
            if self.clip_norm and norm > self.clip_norm:
                grad = grad * (self.clip_norm / norm)
            m = beta1 * m + (1 - beta1) * grad
            v = beta2 * v + (1 - beta2) * grad * grad
            m_hat = m / (1 - beta1**epoch)
            v_hat = v / (1 - beta2**epoch)
            theta = theta - self.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        final, _ = _loss_and_grad(layout, theta, exog, seed, target, mask)
        if not np.isfinite(final):
            raise TrainingDivergedError(self.epochs + 1)
        history.append(final)
        self.theta_ = theta
        self.loss_history_ = history
        self.n_features_in_ = N_INPUTS
        return self

    def predict(self, X):
        check_is_fitted(self, "theta_")
        single = isinstance(X, np.ndarray) and X.ndim == 2
        seqs = _as_sequences(X)
        exog, seed, _ = self._batch(seqs)
        ys, _, _ = _forward(self.layout_, self.theta_, exog, seed)
        preds = [self._denorm_y(ys[: len(s), i]) for i, s in enumerate(seqs)]
        return preds[0] if single else preds

    # -- numerics helpers used by tests ------------------------------------------------------

    def loss_and_gradient(self, X, y, theta: np.ndarray | None = None) -> tuple[float, np.ndarray]:
        check_is_fitted(self, "theta_")
        seqs = _as_sequences(X)
        targets = [np.asarray(t, dtype=np.float64).ravel() for t in ([y] if len(seqs) == 1 and np.ndim(y) == 1 else y)]
        exog, seed, mask = self._batch(seqs)
        target, _ = _pad([self._norm_y(t) for t in targets])
        return _loss_and_grad(self.layout_, self.theta_ if theta is None else theta, exog, seed, target, mask)

    def session(self, seed_temperature: float) -> PredictorSession:
        check_is_fitted(self, "theta_")
        return PredictorSession(self, seed_temperature)

    @property
    def weights_(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.layout_.unpack(self.theta_).items()}


class PredictorSession:
    """Caller-owned recurrent state for streaming one step at a time."""

    def __init__(self, model: SurfaceTemperatureRNN, seed_temperature: float):
        self._model = model
        self._w = model.layout_.unpack(model.theta_)
        self._h = [np.zeros(model.n_hidden) for _ in range(model.n_layers)]
        self._prev = float(model._norm_y(seed_temperature))

    def step(self, inner_liner: float, ambient: float, friction_energy: float, velocity: float) -> float:
        m = self._model
        raw = np.array([inner_liner, ambient, friction_energy, velocity, 0.0])
        x = (raw - m.x_min_) / m.x_range_
        x[4] = self._prev
        inp = x
        for layer in range(m.n_layers):
            h = np.tanh(self._w[f"w_in_{layer}"] @ inp + self._w[f"w_rec_{layer}"] @ self._h[layer] + self._w[f"b_{layer}"])
            self._h[layer] = h
            inp = h
        self._prev = float(self._w["w_out"][0] @ inp + self._w["b_out"][0])
        return float(m._denorm_y(self._prev))


def rnn_predict(model: SurfaceTemperatureRNN, input_series: np.ndarray) -> np.ndarray:
    return model.predict(np.asarray(input_series, dtype=np.float64))


def rnn_train(inputs: Sequence[np.ndarray], targets: Sequence[np.ndarray], learning_rate: float = 0.01,
              epochs: int = 1500, seed: int = 0, **kwargs) -> SurfaceTemperatureRNN:
    return SurfaceTemperatureRNN(learning_rate=learning_rate, epochs=epochs, seed=seed, **kwargs).fit(list(inputs), list(targets))


# -- serialisation ---------------------------------------------------------------------------


def dumps_model(model: SurfaceTemperatureRNN) -> str:
    check_is_fitted(model, "theta_")
    layout = model.layout_
    sections: dict[str, dict[str, object]] = {
        "dimensions": {"n_inputs": layout.n_inputs, "n_hidden": layout.n_hidden, "n_layers": layout.n_layers},
        "normalisation": {
            "x_min": " ".join(kvfile.format_float(v) for v in model.x_min_),
            "x_range": " ".join(kvfile.format_float(v) for v in model.x_range_),
            "y_min": model.y_min_,
            "y_range": model.y_range_,
        },
        "training": {
            "learning_rate": float(model.learning_rate),
            "epochs": model.epochs,
            "seed": model.seed,
            "clip_norm": float(model.clip_norm),
            "init_scale": float(model.init_scale),
        },
        "weights": {},
    }
    for name, view in layout.unpack(model.theta_).items():
        sections["weights"][f"{name}.shape"] = " ".join(str(d) for d in view.shape)
        sections["weights"][name] = " ".join(kvfile.format_float(v) for v in view.ravel(order="C"))
    return kvfile.dumps(sections, header="recurrent surface temperature model, row-major weights\ninputs: " + ", ".join(INPUT_NAMES))


def loads_model(text: str) -> SurfaceTemperatureRNN:
    data = kvfile.loads(text)
    dims = data["dimensions"]
    tr = data["training"]
    model = SurfaceTemperatureRNN(
        n_hidden=int(dims["n_hidden"]),
        n_layers=int(dims["n_layers"]),
        learning_rate=float(tr["learning_rate"]),
        epochs=int(tr["epochs"]),
        seed=int(tr["seed"]),
        clip_norm=float(tr["clip_norm"]),
        init_scale=float(tr["init_scale"]),
    )
    if int(dims["n_inputs"]) != N_INPUTS:
        raise ValueError(f"model expects {N_INPUTS} inputs")
    norm = data["normalisation"]
    model.x_min_ = np.array([float(v) for v in norm["x_min"].split()])
    model.x_range_ = np.array([float(v) for v in norm["x_range"].split()])
    model.y_min_ = float(norm["y_min"])
    model.y_range_ = float(norm["y_range"])
    layout = model.layout_
    theta = np.zeros(layout.size)
    views = layout.unpack(theta)
    for name, view in views.items():
        shape = tuple(int(d) for d in data["weights"][f"{name}.shape"].split())
        if shape != view.shape:
            raise ValueError(f"{name}: stored shape {shape} does not match {view.shape}")
        view[...] = np.array([float(v) for v in data["weights"][name].split()]).reshape(shape)
    model.theta_ = theta
    model.loss_history_ = []
    model.n_features_in_ = N_INPUTS
    return model


def save_model(model: SurfaceTemperatureRNN, path: str | Path) -> None:
    Path(path).write_text(dumps_model(model))


def load_model(path: str | Path) -> SurfaceTemperatureRNN:
    return loads_model(Path(path).read_text())
