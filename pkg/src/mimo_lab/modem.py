"""BPSK/QPSK mapping and exact soft demapping.

All noise variances are total complex variances (both real dimensions
summed), matching the unit-variance noise entries of the channel model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import masked_log_odds
from .polar import LLR_MAX

_SQRT_HALF = np.sqrt(0.5)


@dataclass(frozen=True)
class Modulation:
    """A constellation with ``bits_per_symbol`` Gray-labelled bits per point.

    ``labels[i]`` holds the bits of ``points[i]``; for QPSK the in-phase bit
    comes first.
    """

    name: str
    bits_per_symbol: int
    points: np.ndarray = field(repr=False, compare=False)
    labels: np.ndarray = field(repr=False, compare=False)

    def __hash__(self):
        return hash(self.name)


BPSK = Modulation(
    name="bpsk",
    bits_per_symbol=1,
    points=np.array([1.0 + 0j, -1.0 + 0j]),
    labels=np.array([[0], [1]], dtype=np.uint8),
)

QPSK = Modulation(
    name="qpsk",
    bits_per_symbol=2,
    points=_SQRT_HALF * np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]),
    labels=np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=np.uint8),
)

SCHEMES = {"bpsk": BPSK, "qpsk": QPSK}


def get_scheme(name) -> Modulation:
    if isinstance(name, Modulation):
        return name
    try:
        return SCHEMES[str(name).lower()]
    except KeyError:
        raise ValueError(f"unknown modulation {name!r}; choose from {sorted(SCHEMES)}") from None


def modulate(bits, scheme) -> np.ndarray:
    """Map bits of shape ``(..., n)`` to ``(..., n / B)`` unit-power symbols."""
    scheme = get_scheme(scheme)
    bits = np.asarray(bits)
    n = bits.shape[-1]
    if n % scheme.bits_per_symbol:
        raise ValueError(f"{n} bits do not split into {scheme.name} symbols")
    groups = bits.reshape(bits.shape[:-1] + (n // scheme.bits_per_symbol, scheme.bits_per_symbol))
    signs = 1.0 - 2.0 * groups
    if scheme.bits_per_symbol == 1:
        return signs[..., 0].astype(complex)
    return _SQRT_HALF * (signs[..., 0] + 1j * signs[..., 1])


def hard_demap(symbols, scheme) -> np.ndarray:
    """Nearest-point decisions back to bits, shape ``(..., n * B)``."""
    scheme = get_scheme(scheme)
    y = np.asarray(symbols)
    nearest = np.argmin(np.abs(y[..., None] - scheme.points) ** 2, axis=-1)
    bits = scheme.labels[nearest]
    return bits.reshape(y.shape[:-1] + (-1,)) if y.ndim else bits.ravel()


def demap_llr_awgn(y, noise_variance, scheme) -> np.ndarray:
    """Exact per-bit LLRs of received symbols under white Gaussian noise.

    ``LLR_b = ln sum_{s: b=0} exp(-|y-s|^2/nv) - ln sum_{s: b=1} exp(-|y-s|^2/nv)``,
    clamped to ``+-LLR_MAX``. ``noise_variance`` broadcasts against ``y``, so
    per-symbol variances (e.g. after zero forcing) are supported.

    Returns shape ``y.shape + (B,)``.
    """
    scheme = get_scheme(scheme)
    nv = np.asarray(noise_variance, dtype=float)
    if np.any(nv <= 0):
        raise ValueError("noise variance must be positive")
    y = np.asarray(y, dtype=complex)
    metric = -np.abs(y[..., None] - scheme.points) ** 2 / nv[..., None]
    return masked_log_odds(metric, scheme.labels, LLR_MAX)
