"""Training-set synthesis from a channel estimate, Adam, and the full-batch training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..channel import PacketLayout, data_matrix, noise_variance_for
from ..errors import TrainingDivergedError
from ..numerics import as_generator, complex_gaussian
from ..receivers import ReceiverResult
from .network import MlpModel, backward, bce_loss, featurize, forward

log = logging.getLogger(__name__)


@dataclass
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class TrainingSet:
    """Labelled examples ``D(H_hat)``, all generated through the same channel estimate.

    ``train_snr_db`` is a float, or a ``(low, high)`` pair when each example
    draws its SNR uniformly from that range. With ``resample_per_epoch`` the
    training loop calls :meth:`refresh` before every epoch to redraw the noise.
    """

    inputs: np.ndarray
    labels: np.ndarray
    h_hat: np.ndarray
    train_snr_db: object
    include_channel: bool = True
    resample_per_epoch: bool = False
    clean: np.ndarray = field(default=None, repr=False)
    rng: object = field(default=None, repr=False)

    def __len__(self):
        return len(self.labels)

    def refresh(self):
        """Redraw the noise of every example in place."""
        noisy = self.clean + _training_noise(self.clean.shape, self.train_snr_db, self.rng)
        self.inputs = featurize(noisy, self.h_hat, self.include_channel)


def _training_noise(shape, train_snr_db, rng):
    gen = as_generator(rng)
    if isinstance(train_snr_db, (tuple, list)):
        low, high = train_snr_db
        snr = gen.uniform(low, high, size=shape[0])
        nv = 10.0 ** (-snr / 10.0)
        unit = complex_gaussian(shape, 1.0, gen)
        return unit * np.sqrt(nv)[:, None, None]
    nv = noise_variance_for(float(train_snr_db))
    if nv == 0:
        return np.zeros(shape, dtype=complex)
    return complex_gaussian(shape, nv, gen)


def generate_training_set(
    h_hat,
    layout: PacketLayout,
    train_snr_db,
    rng,
    resample_per_epoch: bool = False,
    include_channel: bool = True,
    copies: int = 1,
) -> TrainingSet:
    """One example per codebook message (ascending), repeated ``copies`` times.

    Each example is ``sqrt(1/M_T) H_hat X_d(b) + W`` with fresh noise; the
    true channel never enters the training data.
    """
    code = layout.code
    h_hat = np.asarray(h_hat, dtype=complex)
    if h_hat.shape != (layout.M_R, layout.M_T):
        raise ValueError(f"H_hat shape {h_hat.shape} does not match layout")
    messages = np.tile(code.messages, (copies, 1))
    X_d = data_matrix(np.tile(code.codewords, (copies, 1)), layout)
    clean = np.sqrt(1.0 / layout.M_T) * (h_hat @ X_d)
    ts = TrainingSet(
        inputs=None,
        labels=messages.astype(float),
        h_hat=h_hat,
        train_snr_db=train_snr_db,
        include_channel=include_channel,
        resample_per_epoch=resample_per_epoch,
        clean=clean,
        rng=as_generator(rng),
    )
    ts.refresh()
    return ts


def adam_step(model: MlpModel, grads: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> MlpModel:
    """One bias-corrected Adam update of every parameter, in place."""
    model.adam_step += 1
    t = model.adam_step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, param in model.params.items():
        g = grads[name]
        m = model.adam_m[name]
        v = model.adam_v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        param -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return model


def train(
    model: MlpModel,
    training_set: TrainingSet,
    epochs: int,
    optimizer: Optional[AdamConfig] = None,
    log_every: int = 0,
) -> list:
    """Full-batch training; one Adam step per epoch over the whole set.

    Returns the per-epoch loss history (loss before that epoch's update) and
    leaves the model in infer mode.
    """
    if epochs < 1:
        raise ValueError(f"epochs must be at least 1, got {epochs}")
    opt = optimizer or AdamConfig()
    model.mode = "train"
    history = []
    for epoch in range(epochs):
        if training_set.resample_per_epoch and epoch > 0:
            training_set.refresh()
        probs, cache = forward(model, training_set.inputs, "train")
        loss = bce_loss(probs, training_set.labels)
        grads = backward(model, cache, training_set.labels)
        if not np.isfinite(loss):
            max_grad = max(float(np.max(np.abs(g))) for g in grads.values())
            raise TrainingDivergedError(epoch, loss, max_grad)
        adam_step(model, grads, opt.lr, opt.beta1, opt.beta2, opt.eps)
        history.append(loss)
        if log_every and epoch % log_every == 0:
            log.info("epoch %d loss %.6f", epoch, loss)
    model.mode = "infer"
    return history


def dnn_receive(model: MlpModel, Y_d, H_hat) -> ReceiverResult:
    """Decode with a trained network: bits where the sigmoid output exceeds 0.5."""
    if model.mode != "infer":
        raise ValueError("dnn_receive needs a model in infer mode")
    Y_d = np.asarray(Y_d, dtype=complex)
    features = featurize(Y_d, H_hat, model.arch.channel_features)
    flat = features.reshape(-1, features.shape[-1])
    probs, _ = forward(model, flat, "infer")
    probs = probs.reshape(features.shape[:-1] + (model.arch.output_width,))
    return ReceiverResult(hard_bits=(probs > 0.5).astype(np.uint8), soft_bits=probs)
