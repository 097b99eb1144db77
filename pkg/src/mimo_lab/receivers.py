"""Model-based receivers: zero forcing, iterative soft detection/decoding and the ML oracle.

Every receiver accepts a single data block ``Y_d`` of shape ``(M_R, L)`` or
a batch ``(..., M_R, L)`` and uses only ``realization.H_hat`` and
``realization.noise_variance``; the true channel is never consulted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .channel import ChannelRealization, PacketLayout, data_matrix
from .errors import CapacityError
from .modem import Modulation, demap_llr_awgn, get_scheme
from .numerics import bit_masks, gram_inverse_diagonal, left_pseudo_inverse, masked_log_odds
from .polar import LLR_MAX, joint_posteriors, map_decode_bitwise

#: Variance substituted for a zero noise level so log-domain metrics stay finite.
NOISE_FLOOR = 1e-12
MAX_CANDIDATES = 1 << 20
DEFAULT_ITERATIONS = 4

_CHUNK_ENTRIES = 1 << 22


@dataclass
class DetectorSoftOutput:
    """Per-bit soft output of the MIMO detector; ``extrinsic = posterior - prior``."""

    extrinsic: np.ndarray
    posterior: np.ndarray


@dataclass
class ReceiverResult:
    hard_bits: np.ndarray
    soft_bits: Optional[np.ndarray] = None
    diagnostics: list = field(default_factory=list)


def _effective_variance(noise_variance: float) -> float:
    return max(float(noise_variance), NOISE_FLOOR)


def _prob_one(llr: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(llr))


def zf_equalize(Y_d, H_hat, noise_variance: float = 1.0):
    """Zero-forcing equalization ``X_tilde = sqrt(M_T) H_hat^+ Y_d``.

    Returns the equalized block and the per-stream post-equalization noise
    variances ``M_T * noise_variance * [(H^H H)^{-1}]_mm``; correlation between
    streams is deliberately ignored.
    """
    H_hat = np.asarray(H_hat, dtype=complex)
    M_T = H_hat.shape[1]
    pinv = left_pseudo_inverse(H_hat)
    x_tilde = np.sqrt(M_T) * (pinv @ np.asarray(Y_d, dtype=complex))
    variances = M_T * noise_variance * gram_inverse_diagonal(H_hat)
    return x_tilde, variances


def linear_receive(Y_d, realization: ChannelRealization, layout: PacketLayout) -> ReceiverResult:
    """ZF equalization, white-noise soft demapping, then bitwise MAP decoding."""
    nv = _effective_variance(realization.noise_variance)
    x_tilde, variances = zf_equalize(Y_d, realization.H_hat, nv)
    per_symbol_var = np.broadcast_to(variances[:, None], x_tilde.shape[-2:])
    llr = demap_llr_awgn(x_tilde, per_symbol_var, layout.scheme)  # (..., M_T, L, B)
    # slot-major, then antenna, then bit: the codeword order used by build_frame
    code_llr = np.swapaxes(llr, -3, -2).reshape(llr.shape[:-3] + (layout.code.N,))
    posterior, hard = map_decode_bitwise(layout.code, code_llr)
    return ReceiverResult(hard_bits=hard, soft_bits=_prob_one(posterior))


@lru_cache(maxsize=16)
def candidate_vectors(scheme: Modulation, M_T: int):
    """All transmit vectors in ``constellation**M_T`` with their bit labels.

    Returns ``(symbols, labels)`` of shapes ``(C, M_T)`` and ``(C, B*M_T)``;
    antenna 0 is the most significant digit and its bits come first.
    """
    q = len(scheme.points)
    count = q**M_T
    if count > MAX_CANDIDATES:
        raise CapacityError(f"{count} candidate vectors exceed the guard of {MAX_CANDIDATES}")
    idx = np.arange(count)
    digits = np.stack([(idx // q ** (M_T - 1 - m)) % q for m in range(M_T)], axis=1)
    symbols = scheme.points[digits]
    labels = scheme.labels[digits].reshape(count, M_T * scheme.bits_per_symbol)
    return symbols, labels


@lru_cache(maxsize=16)
def _candidate_masks(scheme: Modulation, M_T: int):
    return bit_masks(candidate_vectors(scheme, M_T)[1])


def soft_mimo_detect(y, H_hat, prior, noise_variance: float, scheme) -> DetectorSoftOutput:
    """Exact APP soft detection of one slot by enumerating every transmit vector.

    Parameters
    ----------
    y : array_like, shape (..., M_R)
        Received vector(s) of one time slot.
    prior : array_like, shape (..., B*M_T), or None
        A priori LLRs of the slot's bits (zero when ``None``).
    """
    scheme = get_scheme(scheme)
    H_hat = np.asarray(H_hat, dtype=complex)
    M_T = H_hat.shape[1]
    symbols, labels = candidate_vectors(scheme, M_T)
    masks = _candidate_masks(scheme, M_T)
    nbits = labels.shape[1]
    nv = _effective_variance(noise_variance)

    images = np.sqrt(1.0 / M_T) * (symbols @ H_hat.T)  # (C, M_R)
    image_energy = np.sum(np.abs(images) ** 2, axis=1)
    label_signs = 1.0 - 2.0 * labels

    y = np.asarray(y, dtype=complex)
    batch_shape = y.shape[:-1]
    flat_y = y.reshape(-1, y.shape[-1])
    if prior is None:
        flat_prior = np.zeros((flat_y.shape[0], nbits))
    else:
        flat_prior = np.broadcast_to(
            np.clip(np.asarray(prior, dtype=float), -LLR_MAX, LLR_MAX), batch_shape + (nbits,)
        ).reshape(-1, nbits)

    posterior = np.empty((flat_y.shape[0], nbits))
    step = max(1, _CHUNK_ENTRIES // len(symbols))
    for start in range(0, flat_y.shape[0], step):
        sl = slice(start, start + step)
        yc = flat_y[sl]
        # -|y - s|^2 / nv up to the per-row constant |y|^2
        corr = np.real(np.conj(yc) @ images.T)
        metric = (2.0 * corr - image_energy) / nv + 0.5 * (flat_prior[sl] @ label_signs.T)
        posterior[sl] = masked_log_odds(metric, masks, LLR_MAX)

    extrinsic = np.clip(posterior - flat_prior, -LLR_MAX, LLR_MAX)
    return DetectorSoftOutput(
        extrinsic=extrinsic.reshape(batch_shape + (nbits,)),
        posterior=posterior.reshape(batch_shape + (nbits,)),
    )


def _detect_block(Y_d, realization, layout, code_prior):
    """Soft detection of every slot; returns extrinsic LLRs in codeword order."""
    Y_d = np.asarray(Y_d, dtype=complex)
    slots = np.swapaxes(Y_d, -1, -2)  # (..., L, M_R)
    slot_prior = code_prior.reshape(code_prior.shape[:-1] + (layout.L, layout.bits_per_slot))
    out = soft_mimo_detect(
        slots, realization.H_hat, slot_prior, realization.noise_variance, layout.scheme
    )
    return out.extrinsic.reshape(out.extrinsic.shape[:-2] + (layout.code.N,))


def iterative_receive(
    Y_d,
    realization: ChannelRealization,
    layout: PacketLayout,
    n_iterations: int = DEFAULT_ITERATIONS,
) -> ReceiverResult:
    """Turbo-style exchange of extrinsic LLRs between the soft detector and MAP decoder.

    ``diagnostics`` holds the message-bit posterior of every iteration.
    """
    if n_iterations < 1:
        raise ValueError(f"n_iterations must be at least 1, got {n_iterations}")
    Y_d = np.asarray(Y_d, dtype=complex)
    code = layout.code
    prior = np.zeros(Y_d.shape[:-2] + (code.N,))
    history = []
    for it in range(n_iterations):
        detector_ext = _detect_block(Y_d, realization, layout, prior)
        if it + 1 < n_iterations:
            posterior, decoder_post = joint_posteriors(code, detector_ext)
            prior = np.clip(decoder_post - detector_ext, -LLR_MAX, LLR_MAX)
        else:
            posterior, _ = map_decode_bitwise(code, detector_ext)
        history.append(posterior)
    hard = (posterior < 0).astype(np.uint8)
    return ReceiverResult(hard_bits=hard, soft_bits=_prob_one(posterior), diagnostics=history)


def codebook_images(realization: ChannelRealization, layout: PacketLayout) -> np.ndarray:
    """Noiseless received blocks ``sqrt(1/M_T) H_hat X_d(b)`` for every message, flattened."""
    code = layout.code
    X_all = data_matrix(code.codewords, layout)  # (2**K, M_T, L)
    images = np.sqrt(1.0 / layout.M_T) * (np.asarray(realization.H_hat) @ X_all)
    return images.reshape(len(X_all), -1)


def ml_oracle_scores(Y_d, realization: ChannelRealization, layout: PacketLayout) -> np.ndarray:
    """Joint log-likelihood ``-||Y_d - sqrt(1/M_T) H_hat X_d(b)||_F^2 / nv`` of every message.

    The message-independent ``||Y_d||^2`` term is omitted.
    """
    Y_d = np.asarray(Y_d, dtype=complex)
    if layout.code.K > 20:
        raise CapacityError(f"2**{layout.code.K} messages exceed the oracle guard")
    images = codebook_images(realization, layout)
    energy = np.sum(np.abs(images) ** 2, axis=1)
    flat = Y_d.reshape(Y_d.shape[:-2] + (-1,))
    nv = _effective_variance(realization.noise_variance)
    corr = np.real(np.conj(flat) @ images.T)
    return (2.0 * corr - energy) / nv


def ml_oracle_receive(
    Y_d, realization: ChannelRealization, layout: PacketLayout, rule: str = "bitwise"
) -> ReceiverResult:
    """Exact joint detection and decoding over all ``2**K`` messages.

    ``rule="bitwise"`` decides each bit by its a posteriori probability;
    ``rule="sequence"`` returns the single most likely message.
    """
    if rule not in ("bitwise", "sequence"):
        raise ValueError(f"unknown rule {rule!r}")
    code = layout.code
    Y_d = np.asarray(Y_d, dtype=complex)
    batch_shape = Y_d.shape[:-2]
    flat_y = Y_d.reshape((-1,) + Y_d.shape[-2:])
    step = max(1, _CHUNK_ENTRIES >> code.K)
    posterior = np.empty((flat_y.shape[0], code.K))
    hard = np.empty((flat_y.shape[0], code.K), dtype=np.uint8)
    for start in range(0, flat_y.shape[0], step):
        sl = slice(start, start + step)
        scores = ml_oracle_scores(flat_y[sl], realization, layout)
        posterior[sl] = masked_log_odds(scores, code.message_masks, LLR_MAX)
        if rule == "bitwise":
            hard[sl] = posterior[sl] < 0
        else:
            hard[sl] = code.messages[np.argmax(scores, axis=-1)]
    return ReceiverResult(
        hard_bits=hard.reshape(batch_shape + (code.K,)),
        soft_bits=_prob_one(posterior).reshape(batch_shape + (code.K,)),
    )


def zf_reconstruct(x_tilde, H_hat) -> np.ndarray:
    """Undo zero forcing: ``sqrt(1/M_T) H_hat X_tilde``."""
    H_hat = np.asarray(H_hat, dtype=complex)
    return np.sqrt(1.0 / H_hat.shape[1]) * (H_hat @ x_tilde)

