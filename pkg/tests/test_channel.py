import numpy as np
import pytest

from mimo_lab.channel import (
    ChannelRealization,
    PacketLayout,
    apply_channel,
    build_frame,
    draw_channel,
    estimate_realization,
    ls_estimate,
    noise_variance_for,
    slots_to_symbols,
    symbols_to_slots,
)
from mimo_lab.errors import SingularMatrixError
from mimo_lab.numerics import RngStream, derive_stream


class TestLayout:
    def test_dimensions(self, code_32_16):
        assert PacketLayout(2, 2, "bpsk", code_32_16).L == 16
        assert PacketLayout(2, 2, "qpsk", code_32_16).L == 8
        assert PacketLayout(4, 4, "qpsk", code_32_16).L == 4

    def test_indivisible(self):
        from mimo_lab.polar import build_code

        with pytest.raises(ValueError):
            PacketLayout(8, 8, "qpsk", build_code(8, 4))

    def test_more_tx_than_rx(self, code_32_16):
        with pytest.raises(ValueError):
            PacketLayout(4, 2, "bpsk", code_32_16)

    def test_short_pilots(self, code_32_16):
        with pytest.raises(ValueError):
            PacketLayout(4, 4, "bpsk", code_32_16, pilot_len=3)

    def test_pilot_default_and_cyclic(self, code_32_16):
        lay = PacketLayout(2, 2, "bpsk", code_32_16)
        assert lay.pilots().shape == (2, 2)
        long = PacketLayout(2, 2, "bpsk", code_32_16, pilot_len=5).pilots()
        np.testing.assert_array_equal(long[:, 4], long[:, 0])


class TestFrame:
    def test_slot_order(self):
        # symbols fill antennas first within a slot
        slots = symbols_to_slots(np.arange(6), 2)
        np.testing.assert_array_equal(slots, [[0, 2, 4], [1, 3, 5]])
        np.testing.assert_array_equal(slots_to_symbols(slots), np.arange(6))

    def test_build_frame(self, code_32_16, rng):
        lay = PacketLayout(2, 2, "qpsk", code_32_16)
        m = rng.integers(0, 2, 16)
        frame = build_frame(m, lay)
        assert frame.X.shape == (2, 2 + 8)
        assert np.mean(np.abs(frame.X_d) ** 2) == pytest.approx(1.0)


class TestChannel:
    def test_noise_variance(self):
        assert noise_variance_for(0) == 1.0
        assert noise_variance_for(10) == pytest.approx(0.1)
        assert noise_variance_for(float("inf")) == 0.0

    def test_noiseless_is_exact(self, code_32_16):
        lay = PacketLayout(2, 2, "bpsk", code_32_16)
        H = draw_channel(lay, RngStream(1))
        X = build_frame(np.ones(16, dtype=int), lay).X
        Y = apply_channel(X, ChannelRealization.perfect(H, float("inf")), RngStream(2))
        np.testing.assert_allclose(Y, np.sqrt(0.5) * H @ X, rtol=0, atol=1e-15)

    def test_received_power(self, code_32_16):
        # E|Y_ij|^2 = 1 (signal) + nv; 4000 draws give a standard error near 0.03
        lay = PacketLayout(2, 2, "bpsk", code_32_16)
        stream = RngStream(5)
        X = build_frame(np.zeros(16, dtype=int), lay).X_d
        powers = []
        for _ in range(4000):
            real = ChannelRealization.perfect(draw_channel(lay, stream), 0.0)
            powers.append(np.mean(np.abs(apply_channel(X, real, stream)) ** 2))
        assert np.mean(powers) == pytest.approx(2.0, abs=0.1)

    def test_shape_mismatch(self):
        real = ChannelRealization.perfect(np.eye(2), 0.0)
        with pytest.raises(ValueError):
            apply_channel(np.ones((3, 4)), real, RngStream(0))


class TestLsEstimate:
    @pytest.mark.parametrize("M_T", [2, 4, 8])
    def test_noiseless_exact(self, M_T):
        from mimo_lab.numerics import hadamard

        H = draw_channel(PacketLayout(M_T, M_T, "bpsk", _code_for(M_T)), RngStream(M_T))
        X_p = hadamard(M_T)
        Y_p = np.sqrt(1.0 / M_T) * H @ X_p
        assert np.max(np.abs(ls_estimate(Y_p, X_p) - H)) < 1e-12

    def test_rank_deficient_pilots(self):
        X_p = np.ones((2, 4))
        with pytest.raises(SingularMatrixError):
            ls_estimate(np.ones((2, 4)), X_p)

    def test_mse_matches_theory(self, code_32_16):
        # Hadamard pilots give E|H_hat - H|^2 = M_T * nv / L_p per entry
        lay = PacketLayout(2, 2, "bpsk", code_32_16)
        errs = []
        for i in range(500):
            H = draw_channel(lay, derive_stream(0, "h", i))
            est = estimate_realization(H, lay, 0.0, derive_stream(0, "p", i))
            errs.append(np.mean(np.abs(est.H_hat - H) ** 2))
        assert np.mean(errs) == pytest.approx(1.0, rel=0.1)


def _code_for(M_T):
    from mimo_lab.polar import build_code

    return build_code(max(8, M_T), max(8, M_T) // 2)
