"""Short polar codes with exhaustive (codebook) soft decoding.

LLRs follow the convention ``ln p(bit=0) / p(bit=1)``: positive values favour
zero. Messages are ordered by integer value with the first message bit as
the most significant bit, so codebook entry 0 is the all-zero message.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import CapacityError
from .numerics import bit_masks, masked_log_odds

LLR_MAX = 40.0
MAX_ENUMERATED_K = 20

# Rows of hypotheses x batch entries kept in memory at once during decoding.
_CHUNK_ENTRIES = 1 << 22


def _bit_reverse(i: int, n: int) -> int:
    return int(format(i, f"0{n}b")[::-1], 2) if n else 0


def bhattacharyya_bec(n: int, erasure: float = 0.5) -> np.ndarray:
    """Bhattacharyya parameters of the ``2**n`` synthetic channels of a BEC."""
    z = np.array([erasure])
    for _ in range(n):
        z = np.stack([2 * z - z * z, z * z], axis=1).ravel()
    return z


def generator_matrix(n: int) -> np.ndarray:
    """``B_N F^{(x)n}`` over GF(2): the Kronecker power with bit-reversed rows."""
    kernel = np.array([[1, 0], [1, 1]], dtype=np.uint8)
    g = np.ones((1, 1), dtype=np.uint8)
    for _ in range(n):
        g = np.kron(g, kernel)
    order = [_bit_reverse(i, n) for i in range(1 << n)]
    return g[order]


@dataclass(frozen=True)
class PolarCode:
    """A polar code of block length ``N`` carrying ``K`` message bits.

    ``frozen`` holds the ``N - K`` positions of ``u`` fixed to zero; message
    bits fill the remaining positions in ascending order.
    """

    N: int
    K: int
    frozen: tuple

    @property
    def rate(self) -> float:
        return self.K / self.N

    @property
    def n(self) -> int:
        return self.N.bit_length() - 1

    @property
    def info_positions(self) -> tuple:
        frozen = set(self.frozen)
        return tuple(i for i in range(self.N) if i not in frozen)

    @cached_property
    def generator(self) -> np.ndarray:
        """``K x N`` generator restricted to the information rows."""
        return generator_matrix(self.n)[list(self.info_positions)]

    @cached_property
    def messages(self) -> np.ndarray:
        """All ``2**K`` messages in ascending order, shape ``(2**K, K)``."""
        if self.K > MAX_ENUMERATED_K:
            raise CapacityError(
                f"cannot enumerate 2**{self.K} messages (guard is K <= {MAX_ENUMERATED_K})"
            )
        idx = np.arange(1 << self.K, dtype=np.int64)
        shifts = np.arange(self.K - 1, -1, -1)
        return ((idx[:, None] >> shifts) & 1).astype(np.uint8)

    @cached_property
    def codewords(self) -> np.ndarray:
        return encode(self, self.messages)

    @cached_property
    def message_masks(self):
        return bit_masks(self.messages)

    @cached_property
    def codeword_masks(self):
        return bit_masks(self.codewords)

    @cached_property
    def joint_masks(self):
        return bit_masks(np.concatenate([self.messages, self.codewords], axis=1))

    @cached_property
    def codeword_signs(self) -> np.ndarray:
        return 1.0 - 2.0 * self.codewords

    @cached_property
    def message_signs(self) -> np.ndarray:
        return 1.0 - 2.0 * self.messages

    def to_dict(self) -> dict:
        return {"N": self.N, "K": self.K, "frozen": list(self.frozen)}


def build_code(N: int, K: int) -> PolarCode:
    """Construct a polar code by the BEC(0.5) Bhattacharyya recursion.

    The ``N - K`` least reliable positions (largest Bhattacharyya parameter)
    are frozen; among equal parameters the lower index is frozen first.
    """
    if N < 1 or N & (N - 1):
        raise ValueError(f"block length must be a power of two, got {N}")
    if not 0 < K <= N:
        raise ValueError(f"message length must satisfy 0 < K <= N, got K={K}, N={N}")
    z = bhattacharyya_bec(N.bit_length() - 1)
    order = sorted(range(N), key=lambda i: (-z[i], i))
    return PolarCode(N=N, K=K, frozen=tuple(sorted(order[: N - K])))


def encode(code: PolarCode, message) -> np.ndarray:
    """Encode message bits of shape ``(..., K)`` into codewords ``(..., N)``."""
    m = np.asarray(message)
    if m.shape[-1:] != (code.K,):
        raise ValueError(f"message length must be {code.K}, got shape {m.shape}")
    if np.any((m != 0) & (m != 1)):
        raise ValueError("message entries must be 0 or 1")
    return ((m.astype(np.int64) @ code.generator.astype(np.int64)) % 2).astype(np.uint8)


def enumerate_codebook(code: PolarCode) -> list:
    """All ``(message, codeword)`` pairs in ascending message order."""
    return list(zip(code.messages, code.codewords))


def _check_llr(llr, length, what="llr"):
    llr = np.asarray(llr, dtype=float)
    if llr.shape[-1:] != (length,):
        raise ValueError(f"{what} length must be {length}, got shape {llr.shape}")
    return np.clip(llr, -LLR_MAX, LLR_MAX)


def codebook_scores(code: PolarCode, llr, prior=None) -> np.ndarray:
    """Log-domain codeword metric ``sum_n (-1)^{c_n} llr_n / 2`` (+ message prior).

    Returns shape ``(..., 2**K)``.
    """
    llr = _check_llr(llr, code.N)
    scores = 0.5 * (llr @ code.codeword_signs.T)
    if prior is not None:
        prior = _check_llr(prior, code.K, "prior")
        scores = scores + 0.5 * (prior @ code.message_signs.T)
    return scores


def _decode_chunked(code, llr, prior, mask):
    llr = np.asarray(llr, dtype=float)
    batch_shape = llr.shape[:-1]
    flat = llr.reshape(-1, llr.shape[-1])
    flat_prior = None
    if prior is not None:
        flat_prior = np.broadcast_to(np.asarray(prior, dtype=float), batch_shape + (code.K,))
        flat_prior = flat_prior.reshape(-1, code.K)
    step = max(1, _CHUNK_ENTRIES >> code.K)
    out = np.empty((flat.shape[0], mask[0].shape[1]))
    for start in range(0, flat.shape[0], step):
        sl = slice(start, start + step)
        scores = codebook_scores(code, flat[sl], None if flat_prior is None else flat_prior[sl])
        out[sl] = masked_log_odds(scores, mask, LLR_MAX)
    return out.reshape(batch_shape + (mask[0].shape[1],))


def map_decode_bitwise(code: PolarCode, llr, prior=None):
    """Exact bitwise MAP decoding over the full codebook.

    Parameters
    ----------
    llr : array_like, shape (..., N)
        Channel LLRs of the code bits.
    prior : array_like, shape (..., K), optional
        A priori LLRs of the message bits.

    Returns
    -------
    posterior : ndarray, shape (..., K)
        Message-bit posterior LLRs. The extrinsic part is ``posterior - prior``.
    hard : ndarray of uint8, shape (..., K)
        ``1`` where the posterior is negative; a zero posterior decides 0.
    """
    _check_llr(llr, code.N)
    posterior = _decode_chunked(code, llr, prior, code.message_masks)
    return posterior, (posterior < 0).astype(np.uint8)


def codeword_posteriors(code: PolarCode, llr, prior=None) -> np.ndarray:
    """Exact posterior LLRs of the ``N`` code bits under the codebook constraint.

    Subtracting the input ``llr`` gives the decoder's extrinsic output, the
    quantity fed back to a soft detector.
    """
    _check_llr(llr, code.N)
    return _decode_chunked(code, llr, prior, code.codeword_masks)


def joint_posteriors(code: PolarCode, llr, prior=None):
    """Message-bit and code-bit posteriors from a single pass over the codebook.

    Equivalent to ``(map_decode_bitwise(...)[0], codeword_posteriors(...))``.
    """
    _check_llr(llr, code.N)
    both = _decode_chunked(code, llr, prior, code.joint_masks)
    return both[..., : code.K], both[..., code.K:]


def ml_decode(code: PolarCode, llr) -> np.ndarray:
    """Sequence ML decoding: the message whose codeword best correlates with ``llr``.

    Ties go to the smallest message value.
    """
    llr = _check_llr(llr, code.N)
    flat = llr.reshape(-1, code.N)
    step = max(1, _CHUNK_ENTRIES >> code.K)
    best = np.empty(flat.shape[0], dtype=np.int64)
    for start in range(0, flat.shape[0], step):
        best[start:start + step] = np.argmax(flat[start:start + step] @ code.codeword_signs.T, axis=-1)
    return code.messages[best].reshape(llr.shape[:-1] + (code.K,))
