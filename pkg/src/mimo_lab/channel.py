"""Packet assembly, the flat-fading MIMO channel and LS channel estimation.

The received block is ``Y = sqrt(1/M_T) H X + W`` with unit-variance channel
entries and noise of total variance ``10**(-snr_db/10)`` per entry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SingularMatrixError
from .modem import Modulation, get_scheme, modulate
from .numerics import MAX_CONDITION, complex_gaussian, hadamard, hermitian
from .polar import PolarCode, encode


def noise_variance_for(snr_db: float) -> float:
    """Total complex noise variance for a nominal per-antenna SNR in dB."""
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return 10.0 ** (-snr_db / 10.0)


@dataclass(frozen=True)
class PacketLayout:
    """Dimensions of one packet: antennas, code, modulation and pilot length."""

    M_T: int
    M_R: int
    scheme: Modulation
    code: PolarCode
    pilot_len: int = 0  # 0 selects the minimum, M_T

    def __post_init__(self):
        object.__setattr__(self, "scheme", get_scheme(self.scheme))
        if self.M_T < 1 or self.M_R < self.M_T:
            raise ValueError(f"need 1 <= M_T <= M_R, got M_T={self.M_T}, M_R={self.M_R}")
        per_slot = self.scheme.bits_per_symbol * self.M_T
        if self.code.N % per_slot:
            raise ValueError(
                f"N={self.code.N} is not divisible by B*M_T={per_slot}; L would not be integral"
            )
        if self.pilot_len == 0:
            object.__setattr__(self, "pilot_len", self.M_T)
        if self.pilot_len < self.M_T:
            raise ValueError(f"pilot length {self.pilot_len} is shorter than M_T={self.M_T}")

    @property
    def L(self) -> int:
        """Number of data slots (columns of ``X_d``)."""
        return self.code.N // (self.scheme.bits_per_symbol * self.M_T)

    @property
    def bits_per_slot(self) -> int:
        return self.scheme.bits_per_symbol * self.M_T

    def pilots(self) -> np.ndarray:
        """``M_T x L_p`` pilot block: Hadamard columns, repeated cyclically if ``L_p > M_T``."""
        h = hadamard(self.M_T)
        return h[:, np.arange(self.pilot_len) % self.M_T]

    def to_dict(self) -> dict:
        return {
            "M_T": self.M_T,
            "M_R": self.M_R,
            "modulation": self.scheme.name,
            "pilot_len": self.pilot_len,
            "L": self.L,
            "code": self.code.to_dict(),
        }


@dataclass(frozen=True)
class ChannelRealization:
    """True channel, the receiver's estimate of it and the noise level."""

    H: np.ndarray = field(repr=False)
    H_hat: np.ndarray = field(repr=False)
    noise_variance: float
    snr_db: float

    @classmethod
    def perfect(cls, H, snr_db: float) -> "ChannelRealization":
        H = np.asarray(H, dtype=complex)
        return cls(H=H, H_hat=H, noise_variance=noise_variance_for(snr_db), snr_db=snr_db)


@dataclass(frozen=True)
class TransmitFrame:
    X_p: np.ndarray
    X_d: np.ndarray
    message: np.ndarray
    codeword: np.ndarray

    @property
    def X(self) -> np.ndarray:
        return np.concatenate([self.X_p, self.X_d], axis=-1)


def symbols_to_slots(symbols: np.ndarray, M_T: int) -> np.ndarray:
    """Serial-to-parallel: ``(..., L*M_T)`` symbols to ``(..., M_T, L)``, column by column."""
    symbols = np.asarray(symbols)
    L = symbols.shape[-1] // M_T
    return np.swapaxes(symbols.reshape(symbols.shape[:-1] + (L, M_T)), -1, -2)


def slots_to_symbols(slots: np.ndarray) -> np.ndarray:
    """Inverse of :func:`symbols_to_slots`."""
    slots = np.asarray(slots)
    return np.swapaxes(slots, -1, -2).reshape(slots.shape[:-2] + (-1,))


def data_matrix(codewords, layout: PacketLayout) -> np.ndarray:
    """``X_d`` for codewords of shape ``(..., N)``; result ``(..., M_T, L)``."""
    return symbols_to_slots(modulate(codewords, layout.scheme), layout.M_T)


def build_frame(message, layout: PacketLayout) -> TransmitFrame:
    """Encode, modulate and lay out one message as pilot and data blocks."""
    message = np.asarray(message, dtype=np.uint8)
    codeword = encode(layout.code, message)
    return TransmitFrame(
        X_p=layout.pilots(),
        X_d=data_matrix(codeword, layout),
        message=message,
        codeword=codeword,
    )


def draw_channel(layout: PacketLayout, rng) -> np.ndarray:
    """``M_R x M_T`` channel with i.i.d. CN(0, 1) entries."""
    return complex_gaussian((layout.M_R, layout.M_T), 1.0, rng)


def apply_channel(X, realization: ChannelRealization, rng) -> np.ndarray:
    """``Y = sqrt(1/M_T) H X + W`` for ``X`` of shape ``(..., M_T, T)``."""
    X = np.asarray(X, dtype=complex)
    H = np.asarray(realization.H)
    if X.ndim < 2 or X.shape[-2] != H.shape[1]:
        raise ValueError(f"X with shape {X.shape} does not conform to H {H.shape}")
    M_T = H.shape[1]
    Y = np.sqrt(1.0 / M_T) * (H @ X)
    if realization.noise_variance > 0:
        Y = Y + complex_gaussian(Y.shape, realization.noise_variance, rng)
    return Y


def ls_estimate(Y_p, X_p) -> np.ndarray:
    """Least-squares channel estimate ``sqrt(M_T) Y_p X_p^H (X_p X_p^H)^{-1}``."""
    Y_p = np.asarray(Y_p, dtype=complex)
    X_p = np.asarray(X_p, dtype=complex)
    if Y_p.shape[-1] != X_p.shape[-1]:
        raise ValueError(f"pilot lengths differ: Y_p {Y_p.shape}, X_p {X_p.shape}")
    gram = X_p @ hermitian(X_p)
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularMatrixError(f"pilot gram matrix is singular (cond={cond:.3e})")
    M_T = X_p.shape[0]
    # H_hat G = A with G Hermitian  <=>  G H_hat^H = A^H
    cross = Y_p @ hermitian(X_p)
    return np.sqrt(M_T) * hermitian(np.linalg.solve(gram, hermitian(cross)))


def estimate_realization(H, layout: PacketLayout, snr_db: float, rng) -> ChannelRealization:
    """Send the pilot block through ``H`` and return a realization with its LS estimate."""
    H = np.asarray(H, dtype=complex)
    truth = ChannelRealization.perfect(H, snr_db)
    X_p = layout.pilots()
    Y_p = apply_channel(X_p, truth, rng)
    return ChannelRealization(
        H=H, H_hat=ls_estimate(Y_p, X_p), noise_variance=truth.noise_variance, snr_db=snr_db
    )
