"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that the terminal summary prints after
the run (see conftest.py). The two Monte-Carlo criteria are marked ``slow``
so ``pytest -m "not slow"`` skips them.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_RESULTS
from mimo_lab.channel import (
    ChannelRealization,
    PacketLayout,
    apply_channel,
    data_matrix,
    draw_channel,
    estimate_realization,
    ls_estimate,
)
from mimo_lab.cli import main as cli_main
from mimo_lab.dnn import (
    AdamConfig,
    MlpArchitecture,
    dnn_receive,
    forward,
    generate_training_set,
    init_model,
    load_model,
    save_model,
    train,
)
from mimo_lab.harness import DnnConfig, RunConfig, run_ber_sweep, run_realization
from mimo_lab.numerics import RngStream, derive_stream, hadamard
from mimo_lab.polar import build_code, encode, map_decode_bitwise
from mimo_lab.receivers import (
    iterative_receive,
    linear_receive,
    ml_oracle_receive,
    zf_equalize,
    zf_reconstruct,
)
from oracles import brute_joint, brute_posteriors, fd_gradient_error


def record(name, passed, detail):
    ACCEPTANCE_RESULTS[name] = (bool(passed), detail)
    assert passed, f"{name}: {detail}"


def test_gradient_oracle():
    start = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        gen = np.random.default_rng(seed)
        widths = tuple(int(w) for w in gen.integers(2, 5, size=gen.integers(1, 3)))
        arch = MlpArchitecture(
            input_width=int(gen.integers(2, 5)),
            hidden_widths=widths,
            output_width=int(gen.integers(1, 4)),
            input_stage_width=int(gen.integers(0, 5)),
        )
        model = init_model(arch, RngStream(seed))
        assert model.parameter_count() <= 200
        for k in model.params:
            if k.endswith((".b", ".beta")):
                model.params[k] += gen.normal(scale=0.1, size=model.params[k].shape)
        x = gen.normal(size=(int(gen.integers(3, 7)), arch.input_width))
        y = gen.integers(0, 2, size=(len(x), arch.output_width)).astype(float)
        worst = max(worst, fd_gradient_error(model, x, y, step=1e-5))
    elapsed = time.perf_counter() - start
    record(
        "gradient oracle",
        worst < 1e-4 and elapsed < 60,
        f"max relative error {worst:.2e} over 20 models (< 1e-4), {elapsed:.1f} s",
    )


def test_decoder_oracle_equivalence():
    start = time.perf_counter()
    code = build_code(8, 4)
    layout = PacketLayout(2, 2, "bpsk", code)
    worst = 0.0
    for draw in range(100):
        stream = derive_stream(draw, "decoder-oracle")
        gen = stream.generator
        # channel-decoder path: random received LLRs
        llr = gen.normal(scale=3.0, size=8)
        post, _ = map_decode_bitwise(code, llr)
        worst = max(worst, float(np.max(np.abs(post - brute_posteriors(code, llr)))))
        # joint path: a full packet through a random channel
        H = draw_channel(layout, stream)
        real = ChannelRealization.perfect(H, 2.0)
        msg = gen.integers(0, 2, 4)
        Y = apply_channel(data_matrix(encode(code, msg), layout), real, stream)
        expected, _ = brute_joint(Y, H, real.noise_variance, layout)
        got = ml_oracle_receive(Y, real, layout).soft_bits
        worst = max(worst, float(np.max(np.abs(got - 1.0 / (1.0 + np.exp(expected))))))
    elapsed = time.perf_counter() - start
    record(
        "decoder oracle equivalence",
        worst <= 1e-9 and elapsed < 60,
        f"max deviation {worst:.2e} over 100 draws (<= 1e-9), {elapsed:.1f} s",
    )


def memorize(model, ts, chunk=100, max_epochs=3000):
    """Train at a high rate until the set decodes exactly in infer mode, then settle.

    The closing low-rate phase lets the batch-norm running statistics catch
    up with the final weights.
    """
    epochs = 0
    while epochs < max_epochs:
        train(model, ts, chunk, AdamConfig(lr=1e-2))
        epochs += chunk
        probs, _ = forward(model, ts.inputs, "infer")
        if np.array_equal(probs > 0.5, ts.labels > 0.5):
            break
    train(model, ts, 300, AdamConfig(lr=1e-3))


def test_noiseless_identity():
    start = time.perf_counter()
    code = build_code(16, 8)
    errors = {}
    for M in (2, 4):
        for b, scheme in enumerate(("bpsk", "qpsk")):
            layout = PacketLayout(M, M, scheme, code)
            stream = derive_stream(0, "noiseless", M, b)
            H = draw_channel(layout, stream)
            real = ChannelRealization.perfect(H, math.inf)
            assert real.noise_variance == 0
            msgs = stream.generator.integers(0, 2, (500, 8)).astype(np.uint8)
            Y = apply_channel(data_matrix(encode(code, msgs), layout), real, stream)

            ts = generate_training_set(H, layout, math.inf, derive_stream(0, "noiseless-train", M, b))
            arch = MlpArchitecture(ts.inputs.shape[1], (256, 128, 8), 8)
            model = init_model(arch, derive_stream(0, "noiseless-init", M, b))
            memorize(model, ts)

            outputs = {
                "linear": linear_receive(Y, real, layout),
                "iterative": iterative_receive(Y, real, layout, 4),
                "oracle": ml_oracle_receive(Y, real, layout),
                "dnn": dnn_receive(model, Y, H),
            }
            for rx, out in outputs.items():
                errors[f"{M}x{M} {scheme} {rx}"] = int(np.sum(out.hard_bits != msgs))
    elapsed = time.perf_counter() - start
    bad = {k: v for k, v in errors.items() if v}
    record(
        "noiseless identity",
        not bad and elapsed < 60,
        f"{len(errors) - len(bad)}/{len(errors)} receiver/config pairs error-free over 500 packets"
        + (f", errors {bad}" if bad else "")
        + f", {elapsed:.1f} s",
    )


def test_zf_reconstruction():
    worst = 0.0
    for i in range(100):
        gen = np.random.default_rng(i)
        M = int(gen.choice([2, 4, 8]))
        H = gen.normal(size=(M, M)) + 1j * gen.normal(size=(M, M))
        Y = gen.normal(size=(M, 16)) + 1j * gen.normal(size=(M, 16))
        x_tilde, _ = zf_equalize(Y, H)
        worst = max(worst, float(np.max(np.abs(zf_reconstruct(x_tilde, H) - Y))))
    record("ZF reconstruction", worst < 1e-9, f"max residual {worst:.2e} over 100 channels (< 1e-9)")


def test_ls_estimation():
    exact = {}
    for M in (2, 4, 8):
        H = draw_channel(PacketLayout(M, M, "bpsk", build_code(16, 8)), derive_stream(0, "ls", M))
        X_p = hadamard(M)
        exact[M] = float(np.max(np.abs(ls_estimate(np.sqrt(1.0 / M) * H @ X_p, X_p) - H)))
    layout = PacketLayout(2, 2, "bpsk", build_code(16, 8))
    mse = {}
    for snr in (0.0, 10.0, 20.0):
        errs = []
        for i in range(200):
            H = draw_channel(layout, derive_stream(1, "ls-h", i))
            est = estimate_realization(H, layout, snr, derive_stream(1, "ls-pilot", i, int(snr)))
            errs.append(np.mean(np.abs(est.H_hat - H) ** 2))
        mse[snr] = float(np.mean(errs))
    decreasing = mse[0.0] > mse[10.0] > mse[20.0]
    record(
        "LS estimation",
        max(exact.values()) < 1e-9 and decreasing,
        f"noiseless error {max(exact.values()):.1e} (< 1e-9); MSE "
        + ", ".join(f"{s:g} dB {v:.2e}" for s, v in mse.items()),
    )


ORDERING_SNRS = [0.0, 2.0, 4.0, 6.0, 8.0]


@pytest.fixture(scope="module")
def ordering_sweep():
    # 10 realizations x 1000 packets = 1e4 packets per SNR point
    config = RunConfig(
        M_T=2,
        M_R=2,
        modulation="bpsk",
        N=32,
        K=16,
        snr_db_list=ORDERING_SNRS,
        receivers=["oracle", "iterative", "linear"],
        packets_per_point=1000,
        channel_realizations=10,
        perfect_csi=True,
        iterations=4,
        batch_size=500,
        seed=0,
    )
    start = time.perf_counter()
    records, manifest = run_ber_sweep(config)
    assert not manifest["failures"]
    return {(r.receiver, r.snr_db): r for r in records}, time.perf_counter() - start


def _violations(better, worse, table):
    out = []
    for snr in ORDERING_SNRS:
        a, b = table[(better, snr)], table[(worse, snr)]
        if a.ber > b.ber:
            se = math.sqrt(a.ber * (1 - a.ber) / a.bits_total + b.ber * (1 - b.ber) / b.bits_total)
            out.append((snr, (a.ber - b.ber) / se if se else math.inf))
    return out


@pytest.mark.slow
def test_receiver_ordering(ordering_sweep):
    table, elapsed = ordering_sweep
    verdicts = []
    ok = elapsed < 1800
    for better, worse in (("oracle", "iterative"), ("iterative", "linear")):
        v = _violations(better, worse, table)
        ok &= len(v) == 0 or (len(v) == 1 and v[0][1] <= 2.0)
        verdicts.append(f"{better}<={worse} violations {[(s, round(z, 2)) for s, z in v]}")
    curve = "; ".join(
        f"{rx} " + "/".join(f"{table[(rx, s)].ber:.1e}" for s in ORDERING_SNRS)
        for rx in ("oracle", "iterative", "linear")
    )
    record("receiver ordering", ok, f"{', '.join(verdicts)}; BER {curve}; {elapsed:.0f} s")


@pytest.mark.slow
def test_ber_drops_over_six_db(ordering_sweep):
    # with ~1.6e5 bits per point a reversal at 6 dB spacing would be many standard errors
    table, _ = ordering_sweep
    for rx in ("oracle", "iterative", "linear"):
        for lo, hi in ((0.0, 6.0), (2.0, 8.0)):
            assert table[(rx, hi)].ber <= table[(rx, lo)].ber


@pytest.mark.slow
def test_dnn_learning_signal():
    # the first channel realization of seed 0, as the harness draws it
    config = RunConfig(
        M_T=2,
        M_R=2,
        modulation="bpsk",
        N=16,
        K=8,
        snr_db_list=[4.0],
        receivers=["linear", "dnn"],
        packets_per_point=10_000,
        channel_realizations=1,
        perfect_csi=True,
        batch_size=1000,
        seed=0,
        dnn=DnnConfig(epochs=2000, train_snr_db=4.0, resample_noise=True),
    )
    start = time.perf_counter()
    result = run_realization(config, 0)
    elapsed = time.perf_counter() - start
    lin = result["counts"][("linear", 0)]
    dnn = result["counts"][("dnn", 0)]
    ber_lin, ber_dnn = lin[0] / lin[1], dnn[0] / dnn[1]
    initial, final = result["train_losses"]["all"]
    ok = ber_dnn < ber_lin and final < 0.1 * initial and elapsed < 1800
    record(
        "DNN learning signal",
        ok,
        f"BER dnn {ber_dnn:.3e} vs linear {ber_lin:.3e} on {dnn[3]} packets; "
        f"loss {initial:.3f} -> {final:.4f} (< {0.1 * initial:.4f}); {elapsed:.0f} s",
    )


def test_sweep_determinism(tmp_path):
    args = [
        "--N", "16", "--K", "8", "--snr-db-list", "0,4", "--packets", "100",
        "--realizations", "2", "--receivers", "linear,iterative,oracle,dnn",
        "--epochs", "20", "--hidden-widths", "32,16,8", "--seed", "11",
    ]
    outputs = []
    for run in ("a", "b"):
        out, models = tmp_path / run, tmp_path / f"{run}_models"
        assert cli_main(["sweep", "--out", str(out), "--model-out", str(models), *args]) == 0
        ckpts = {p.name: p.read_bytes() for p in sorted(models.iterdir())}
        outputs.append(((out / "results.csv").read_bytes(), ckpts))
    (csv_a, ck_a), (csv_b, ck_b) = outputs
    same = csv_a == csv_b and ck_a == ck_b and len(ck_a) == 2
    record(
        "sweep determinism",
        same,
        f"CSV identical: {csv_a == csv_b}; {len(ck_a)} checkpoints identical: {ck_a == ck_b}",
    )


def test_checkpoint_round_trip(tmp_path):
    layout = PacketLayout(2, 2, "bpsk", build_code(16, 8))
    H = draw_channel(layout, RngStream(0))
    ts = generate_training_set(H, layout, 4.0, RngStream(1))
    model = init_model(MlpArchitecture(ts.inputs.shape[1], (64, 32, 8), 8), RngStream(2))
    train(model, ts, 10)
    path = tmp_path / "model.ckpt"
    save_model(model, path)
    loaded = load_model(path)
    x = np.random.default_rng(5).normal(size=(100, ts.inputs.shape[1]))
    a, _ = forward(model, x, "infer")
    b, _ = forward(loaded, x, "infer")
    record(
        "checkpoint round trip",
        a.tobytes() == b.tobytes(),
        f"{int(np.sum(a != b))} of {a.size} outputs differ after save/load (need 0)",
    )
