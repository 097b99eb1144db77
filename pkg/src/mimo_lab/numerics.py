"""Complex linear algebra helpers, seeded random streams and pilot matrices.

Matrices are plain ``numpy`` arrays of dtype ``complex128``. Batched inputs
carry leading batch axes and the matrix in the last two axes.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import SingularMatrixError

#: Condition number above which a matrix is treated as rank deficient.
MAX_CONDITION = 1e12

_SUPPORTED_HADAMARD = (1, 2, 4, 8)
_UINT64 = (1 << 64) - 1


class RngStream:
    """A reproducible random stream identified by ``(seed, stream_id)``.

    The underlying bit generator is PCG64 seeded from
    ``SeedSequence(seed, spawn_key=(stream_id,))``. Distinct spawn keys give
    streams that numpy's seeding scheme guarantees to be independent, so
    parallel workers should each derive their own stream with
    :func:`derive_stream` rather than share one.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _UINT64
        self.stream_id = int(stream_id) & _UINT64
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def stream_id_for(seed: int, tag: str, *indices: int) -> int:
    """64-bit stream identifier hashed from the run seed, a purpose tag and indices."""
    key = ":".join([str(int(seed)), tag, *(str(int(i)) for i in indices)])
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_stream(seed: int, tag: str, *indices: int) -> RngStream:
    """Stream for one purpose (``"channel"``, ``"noise"``, ``"train"``...) and index."""
    return RngStream(seed, stream_id_for(seed, tag, *indices))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


def complex_gaussian(shape, variance: float, rng) -> np.ndarray:
    """Circularly-symmetric complex Gaussian array of arbitrary shape.

    Each entry has total variance ``variance``, split equally between the
    real and imaginary parts.
    """
    if variance < 0:
        raise ValueError(f"variance must be non-negative, got {variance}")
    shape = tuple(int(s) for s in np.atleast_1d(shape))
    draws = as_generator(rng).standard_normal(shape + (2,))
    scale = np.sqrt(variance / 2.0)
    return scale * draws[..., 0] + 1j * (scale * draws[..., 1])


def sample_complex_gaussian(rows: int, cols: int, variance: float, rng) -> np.ndarray:
    """``rows x cols`` matrix of i.i.d. CN(0, variance) entries."""
    return complex_gaussian((int(rows), int(cols)), variance, rng)


def hermitian(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(a, -1, -2))


def left_pseudo_inverse(a: np.ndarray) -> np.ndarray:
    """Left inverse ``(A^H A)^{-1} A^H`` of a tall full-column-rank matrix.

    Computed from a thin QR factorization as ``R^{-1} Q^H``; the normal
    equations are never formed.

    Raises
    ------
    SingularMatrixError
        If ``A`` is wide or its condition number exceeds ``MAX_CONDITION``.
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    rows, cols = a.shape
    if rows < cols:
        raise SingularMatrixError(f"matrix {rows}x{cols} cannot have full column rank")
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularMatrixError(f"matrix is ill-conditioned (cond={cond:.3e})")
    q, r = np.linalg.qr(a, mode="reduced")
    return np.linalg.solve(r, hermitian(q))


def gram_inverse_diagonal(a: np.ndarray) -> np.ndarray:
    """Diagonal of ``(A^H A)^{-1}``, i.e. the squared row norms of the left inverse."""
    p = left_pseudo_inverse(a)
    return np.sum(np.abs(p) ** 2, axis=1)


def hadamard(n: int) -> np.ndarray:
    """Sylvester Hadamard matrix of order ``n`` with entries +1/-1 (complex dtype)."""
    if n not in _SUPPORTED_HADAMARD:
        raise ValueError(f"Hadamard order must be one of {_SUPPORTED_HADAMARD}, got {n}")
    h = np.ones((1, 1))
    while h.shape[0] < n:
        h = np.block([[h, h], [h, -h]])
    return h.astype(complex)


def logsumexp(x: np.ndarray, axis=-1) -> np.ndarray:
    """Stable ``log(sum(exp(x)))`` with the maximum factored out."""
    x = np.asarray(x, dtype=float)
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def bit_masks(labels: np.ndarray):
    """Float ``(ones, zeros)`` indicator pair for a ``(C, B)`` 0/1 label table."""
    ones = np.asarray(labels, dtype=float)
    return ones, 1.0 - ones


def masked_log_odds(scores: np.ndarray, masks, clamp: float) -> np.ndarray:
    """Per-column log odds ``ln sum_{bit=0} e^s - ln sum_{bit=1} e^s``.

    ``scores`` has shape ``(..., C)`` over ``C`` hypotheses. ``masks`` is
    either a ``(C, B)`` 0/1 table of the hypotheses' bits or the pair returned
    by :func:`bit_masks`. The maximum score is factored out before
    exponentiating and the result is clamped to ``[-clamp, clamp]``.
    """
    ones, zeros = masks if isinstance(masks, tuple) else bit_masks(masks)
    scores = np.asarray(scores, dtype=float)
    weights = np.exp(scores - np.max(scores, axis=-1, keepdims=True))
    sum1 = weights @ ones
    sum0 = weights @ zeros
    with np.errstate(divide="ignore"):
        llr = np.log(sum0) - np.log(sum1)
    return np.clip(llr, -clamp, clamp)
