"""Fully connected network with batch normalization, written directly in numpy.

Stage layout::

    input stage   dense -> ReLU                (optional)
    hidden stages dense -> batch norm -> ReLU
    output stage  dense -> sigmoid

Weights are stored ``(fan_in, fan_out)`` so a stage computes ``x @ W + b``.
All arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..numerics import as_generator

BN_EPS = 1e-5
BN_MOMENTUM = 0.99
PROB_CLIP = 1e-12

PAPER_HIDDEN_WIDTHS = (512, 356, 128, 64, 32)


def default_hidden_widths(K: int) -> tuple:
    """The five wide hidden stages followed by a final ``K``-wide stage (16 for K=16)."""
    return PAPER_HIDDEN_WIDTHS + (K,)


@dataclass(frozen=True)
class MlpArchitecture:
    input_width: int
    hidden_widths: tuple
    output_width: int
    input_stage_width: int = -1  # -1: same as input_width, 0: no input stage
    batch_norm: bool = True
    channel_features: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_stage_width == -1:
            object.__setattr__(self, "input_stage_width", self.input_width)
        widths = (self.input_width, self.output_width) + self.hidden_widths
        if min(widths) <= 0 or self.input_stage_width < 0:
            raise ValueError(f"all layer widths must be positive: {self}")

    def stage_dims(self) -> list:
        """``(name, fan_in, fan_out, kind)`` for every affine stage in order."""
        dims = []
        width = self.input_width
        if self.input_stage_width:
            dims.append(("input", width, self.input_stage_width, "relu"))
            width = self.input_stage_width
        kind = "bn_relu" if self.batch_norm else "relu"
        for i, w in enumerate(self.hidden_widths):
            dims.append((f"hidden{i}", width, w, kind))
            width = w
        dims.append(("output", width, self.output_width, "sigmoid"))
        return dims

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_widths"] = list(self.hidden_widths)
        return d


@dataclass
class MlpModel:
    """Parameters, batch-norm buffers and optimizer state of one network.

    ``params`` and ``buffers`` are ordered name -> array mappings; the order
    is the serialization order.
    """

    arch: MlpArchitecture
    params: dict
    buffers: dict
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)
    adam_step: int = 0
    mode: str = "train"
    meta: dict = field(default_factory=dict)

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self) -> "MlpModel":
        dup = lambda d: {k: v.copy() for k, v in d.items()}  # noqa: E731
        return MlpModel(
            arch=self.arch,
            params=dup(self.params),
            buffers=dup(self.buffers),
            adam_m=dup(self.adam_m),
            adam_v=dup(self.adam_v),
            adam_step=self.adam_step,
            mode=self.mode,
            meta=dict(self.meta),
        )


def init_model(arch: MlpArchitecture, rng, meta: dict | None = None) -> MlpModel:
    """He-normal weights for ReLU stages, ``sqrt(1/fan_in)`` for the sigmoid stage.

    Biases and ``beta`` start at zero, ``gamma`` at one, running statistics
    at mean 0 and variance 1.
    """
    gen = as_generator(rng)
    params, buffers = {}, {}
    for name, fan_in, fan_out, kind in arch.stage_dims():
        std = np.sqrt((1.0 if kind == "sigmoid" else 2.0) / fan_in)
        params[f"{name}.W"] = gen.normal(0.0, std, size=(fan_in, fan_out))
        params[f"{name}.b"] = np.zeros(fan_out)
        if kind == "bn_relu":
            params[f"{name}.gamma"] = np.ones(fan_out)
            params[f"{name}.beta"] = np.zeros(fan_out)
            buffers[f"{name}.running_mean"] = np.zeros(fan_out)
            buffers[f"{name}.running_var"] = np.ones(fan_out)
    model = MlpModel(arch=arch, params=params, buffers=buffers, meta=dict(meta or {}))
    model.adam_m = {k: np.zeros_like(v) for k, v in params.items()}
    model.adam_v = {k: np.zeros_like(v) for k, v in params.items()}
    return model


def featurize(Y_d, H_hat=None, include_channel: bool = True) -> np.ndarray:
    """Real feature vector(s) ``[Re vec(Y_d); Im vec(Y_d)]`` (+ the same for ``H_hat``).

    ``vec`` stacks columns. ``Y_d`` may carry leading batch axes; ``H_hat``
    is broadcast across them.
    """
    Y_d = np.asarray(Y_d, dtype=complex)
    vec_y = np.swapaxes(Y_d, -1, -2).reshape(Y_d.shape[:-2] + (-1,))
    parts = [vec_y.real, vec_y.imag]
    if include_channel:
        if H_hat is None:
            raise ValueError("channel features requested but no channel estimate given")
        H_hat = np.asarray(H_hat, dtype=complex)
        vec_h = np.swapaxes(H_hat, -1, -2).reshape(H_hat.shape[:-2] + (-1,))
        vec_h = np.broadcast_to(vec_h, vec_y.shape[:-1] + vec_h.shape[-1:])
        parts += [vec_h.real, vec_h.imag]
    return np.concatenate(parts, axis=-1)


def feature_width(M_R: int, M_T: int, L: int, include_channel: bool) -> int:
    return 2 * M_R * L + (2 * M_R * M_T if include_channel else 0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def forward(model: MlpModel, inputs, mode: str | None = None):
    """Run the network on a ``(batch, input_width)`` array.

    In ``"train"`` mode batch normalization uses the batch statistics (1/batch
    variance) and updates the running averages; in ``"infer"`` mode it uses
    the running averages. Returns ``(probabilities, cache)``; the cache is
    ``None`` in infer mode. Probabilities lie in ``[PROB_CLIP, 1 - PROB_CLIP]``,
    strictly inside (0, 1).
    """
    mode = mode or model.mode
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    if x.shape[1] != model.arch.input_width:
        raise ValueError(f"input width {x.shape[1]} != model input width {model.arch.input_width}")
    train = mode == "train"
    cache = []
    p = model.params
    for name, _, _, kind in model.arch.stage_dims():
        z = x @ p[f"{name}.W"] + p[f"{name}.b"]
        entry = {"name": name, "kind": kind, "x": x}
        if kind == "sigmoid":
            prob = sigmoid(z)
            entry["prob"] = prob
            cache.append(entry)
            out = np.clip(prob, PROB_CLIP, 1.0 - PROB_CLIP)
            return out, (cache if train else None)
        if kind == "bn_relu":
            rm, rv = model.buffers[f"{name}.running_mean"], model.buffers[f"{name}.running_var"]
            if train:
                mu = z.mean(axis=0)
                var = z.var(axis=0)
                rm *= BN_MOMENTUM
                rm += (1.0 - BN_MOMENTUM) * mu
                rv *= BN_MOMENTUM
                rv += (1.0 - BN_MOMENTUM) * var
            else:
                mu, var = rm, rv
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (z - mu) * inv_std
            entry.update(xhat=xhat, inv_std=inv_std)
            z = p[f"{name}.gamma"] * xhat + p[f"{name}.beta"]
        entry["pre"] = z
        cache.append(entry)
        x = np.maximum(z, 0.0)
    raise AssertionError("architecture has no output stage")


def bce_loss(probs, labels) -> float:
    """Mean binary cross entropy over examples and bits, with probabilities clipped."""
    p = np.clip(np.asarray(probs, dtype=float), PROB_CLIP, 1.0 - PROB_CLIP)
    b = np.asarray(labels, dtype=float)
    return float(-np.mean(b * np.log(p) + (1.0 - b) * np.log(1.0 - p)))


def backward(model: MlpModel, cache, labels) -> dict:
    """Exact gradients of :func:`bce_loss` for every parameter.

    ``cache`` must come from a train-mode :func:`forward` on the same batch.
    The output-stage gradient uses the unclipped sigmoid, i.e. ``(p - b)/(batch*K)``.
    """
    if not cache or cache[-1]["kind"] != "sigmoid":
        raise ValueError("backward needs the cache of a train-mode forward pass")
    b = np.asarray(labels, dtype=float)
    prob = cache[-1]["prob"]
    if b.shape != prob.shape:
        raise ValueError(f"labels shape {b.shape} != output shape {prob.shape}")
    grads = {}
    delta = (prob - b) / prob.size  # d loss / d logits
    for entry in reversed(cache):
        name = entry["name"]
        if entry["kind"] != "sigmoid":
            delta = delta * (entry["pre"] > 0)
            if entry["kind"] == "bn_relu":
                xhat, inv_std = entry["xhat"], entry["inv_std"]
                grads[f"{name}.gamma"] = np.sum(delta * xhat, axis=0)
                grads[f"{name}.beta"] = np.sum(delta, axis=0)
                dxhat = delta * model.params[f"{name}.gamma"]
                n = dxhat.shape[0]
                delta = (inv_std / n) * (
                    n * dxhat - dxhat.sum(axis=0) - xhat * np.sum(dxhat * xhat, axis=0)
                )
        grads[f"{name}.W"] = entry["x"].T @ delta
        grads[f"{name}.b"] = delta.sum(axis=0)
        delta = delta @ model.params[f"{name}.W"].T
    return {k: grads[k] for k in model.params}
