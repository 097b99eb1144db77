"""Monte-Carlo BER sweeps over channel realizations and SNR points.

For each realization a channel is drawn, the receiver's estimate formed
(exact, or LS from Hadamard pilots), the network trained on that estimate
if requested, and then every SNR point runs the same packets through every
enabled receiver. Results are aggregated in realization order so output is
independent of scheduling.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from . import __version__
from .channel import (
    ChannelRealization,
    PacketLayout,
    apply_channel,
    data_matrix,
    draw_channel,
    estimate_realization,
)
from .dnn import (
    AdamConfig,
    MlpArchitecture,
    default_hidden_widths,
    dnn_receive,
    generate_training_set,
    init_model,
    load_model,
    save_model,
    train,
)
from .modem import get_scheme
from .numerics import derive_stream
from .polar import build_code, encode
from .receivers import iterative_receive, linear_receive, ml_oracle_receive

log = logging.getLogger(__name__)

RECEIVERS = ("linear", "iterative", "oracle", "dnn")
CSV_COLUMNS = (
    "receiver",
    "snr_db",
    "bit_errors",
    "bits_total",
    "frame_errors",
    "frames_total",
    "ber",
    "fer",
    "realizations",
    "seed",
)
# how each receiver turns soft information into bits, recorded in the manifest
DECODING_RULES = {
    "linear": "zf + awgn demap + bitwise MAP over codebook",
    "iterative": "exact-APP detector <-> bitwise MAP decoder",
    "oracle": "joint bitwise APP over all messages",
    "dnn": "sigmoid outputs thresholded at 0.5",
}


@dataclass
class DnnConfig:
    epochs: int = 2000
    train_snr_db: float = 4.0
    train_snr_range: Optional[list] = None  # [low, high] switches to a uniform SNR mixture
    lr: float = 1e-3
    resample_noise: bool = False
    channel_features: bool = True
    hidden_widths: Optional[list] = None  # None: 512, 356, 128, 64, 32, K
    copies: int = 1

    @property
    def snr_spec(self):
        return tuple(self.train_snr_range) if self.train_snr_range else self.train_snr_db


@dataclass
class RunConfig:
    M_T: int = 2
    M_R: int = 2
    modulation: str = "bpsk"
    N: int = 32
    K: int = 16
    pilot_len: int = 0
    snr_db_list: list = field(default_factory=lambda: [0.0, 2.0, 4.0, 6.0, 8.0])
    receivers: list = field(default_factory=lambda: list(RECEIVERS))
    packets_per_point: int = 200
    channel_realizations: int = 100
    perfect_csi: bool = True
    seed: int = 0
    iterations: int = 4
    early_stop_errors: Optional[int] = None
    batch_size: int = 200
    workers: int = 1
    dnn: DnnConfig = field(default_factory=DnnConfig)
    output_dir: str = "results"
    model_out: Optional[str] = None
    model_in: Optional[str] = None

    def __post_init__(self):
        if isinstance(self.dnn, dict):
            self.dnn = DnnConfig(**self.dnn)
        self.snr_db_list = [parse_snr(s) for s in self.snr_db_list]
        self.receivers = [r.strip().lower() for r in self.receivers]
        unknown = set(self.receivers) - set(RECEIVERS)
        if unknown:
            raise ValueError(f"unknown receivers {sorted(unknown)}; choose from {RECEIVERS}")
        if not self.receivers:
            raise ValueError("receiver set must not be empty")
        for name in ("packets_per_point", "channel_realizations", "iterations", "batch_size", "workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.snr_db_list:
            raise ValueError("snr_db_list must not be empty")
        get_scheme(self.modulation)

    def layout(self) -> PacketLayout:
        return PacketLayout(
            M_T=self.M_T,
            M_R=self.M_R,
            scheme=self.modulation,
            code=build_code(self.N, self.K),
            pilot_len=self.pilot_len,
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["snr_db_list"] = [format_snr(s) for s in self.snr_db_list]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**data)


def parse_snr(value) -> float:
    if isinstance(value, str) and value.strip().lower() in ("inf", "+inf", "infinity"):
        return math.inf
    return float(value)


def format_snr(value: float):
    return "inf" if math.isinf(value) else float(value)


def load_config(path) -> RunConfig:
    """Read a YAML (or JSON) run configuration."""
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    return RunConfig.from_dict(data)


def git_blob_hash(data: bytes) -> str:
    """Content hash in git's blob format: ``sha1("blob <len>\\0" + data)``."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


@dataclass
class BerRecord:
    receiver: str
    snr_db: float
    bit_errors: int
    bits_total: int
    frame_errors: int
    frames_total: int
    ber: float
    fer: float
    realizations: int
    seed: int

    def as_row(self) -> dict:
        row = dataclasses.asdict(self)
        row["snr_db"] = format_snr(self.snr_db)
        return row


def _input_digest(Y_d, H_hat) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(Y_d).tobytes())
    h.update(np.ascontiguousarray(H_hat).tobytes())
    return h.hexdigest()


def _train_dnn(config: RunConfig, layout, H_hat, r: int, j: int, tag: str):
    dnn = config.dnn
    if config.model_in:
        return load_model(config.model_in), []
    ts = generate_training_set(
        H_hat,
        layout,
        dnn.snr_spec,
        derive_stream(config.seed, "train", r, j),
        resample_per_epoch=dnn.resample_noise,
        include_channel=dnn.channel_features,
        copies=dnn.copies,
    )
    widths = dnn.hidden_widths or default_hidden_widths(layout.code.K)
    arch = MlpArchitecture(
        input_width=ts.inputs.shape[1],
        hidden_widths=tuple(widths),
        output_width=layout.code.K,
        channel_features=dnn.channel_features,
    )
    meta = {
        "K": layout.code.K,
        "M_R": layout.M_R,
        "M_T": layout.M_T,
        "L": layout.L,
        "train_snr_db": list(dnn.snr_spec) if isinstance(dnn.snr_spec, tuple) else dnn.snr_spec,
        "realization": r,
        "seed": config.seed,
    }
    model = init_model(arch, derive_stream(config.seed, "init", r, j), meta)
    history = train(model, ts, dnn.epochs, AdamConfig(lr=dnn.lr))
    if config.model_out:
        os.makedirs(config.model_out, exist_ok=True)
        save_model(model, os.path.join(config.model_out, f"model_r{r:03d}{tag}.ckpt"))
    return model, history


def run_realization(config: RunConfig, r: int) -> dict:
    """Error counts of every receiver at every SNR point for realization ``r``."""
    layout = config.layout()
    code = layout.code
    H = draw_channel(layout, derive_stream(config.seed, "channel", r))
    counts = {(rx, j): [0, 0, 0, 0] for rx in config.receivers for j in range(len(config.snr_db_list))}
    digest = hashlib.sha256()
    timings = {rx: 0.0 for rx in config.receivers}
    train_losses = {}
    model = None
    for j, snr in enumerate(config.snr_db_list):
        if config.perfect_csi:
            real = ChannelRealization.perfect(H, snr)
        else:
            real = estimate_realization(H, layout, snr, derive_stream(config.seed, "pilot", r, j))
        if "dnn" in config.receivers and (model is None or not config.perfect_csi):
            t0 = time.perf_counter()
            tag = "" if config.perfect_csi else f"_s{j:02d}"
            model, history = _train_dnn(config, layout, real.H_hat, r, j, tag)
            if history:
                train_losses[format_snr(snr) if not config.perfect_csi else "all"] = [history[0], history[-1]]
            timings["dnn"] += time.perf_counter() - t0

        rng = derive_stream(config.seed, "packets", r, j)
        done = 0
        while done < config.packets_per_point:
            batch = min(config.batch_size, config.packets_per_point - done)
            messages = rng.generator.integers(0, 2, size=(batch, code.K), dtype=np.uint8)
            X_d = data_matrix(encode(code, messages), layout)
            Y_d = apply_channel(X_d, real, rng)
            ref = _input_digest(Y_d, real.H_hat)
            digest.update(ref.encode())
            for rx in config.receivers:
                t0 = time.perf_counter()
                if rx == "linear":
                    result = linear_receive(Y_d, real, layout)
                elif rx == "iterative":
                    result = iterative_receive(Y_d, real, layout, config.iterations)
                elif rx == "oracle":
                    result = ml_oracle_receive(Y_d, real, layout)
                else:
                    result = dnn_receive(model, Y_d, real.H_hat)
                timings[rx] += time.perf_counter() - t0
                if _input_digest(Y_d, real.H_hat) != ref:
                    raise RuntimeError(f"receiver {rx} modified its inputs")
                errors = result.hard_bits != messages
                c = counts[(rx, j)]
                c[0] += int(errors.sum())
                c[1] += errors.size
                c[2] += int(errors.any(axis=1).sum())
                c[3] += batch
            done += batch
            if config.early_stop_errors and all(
                counts[(rx, j)][0] >= config.early_stop_errors for rx in config.receivers
            ):
                break
    return {
        "index": r,
        "counts": counts,
        "input_digest": digest.hexdigest(),
        "timings": timings,
        "train_losses": train_losses,
    }


def _safe_realization(args):
    config, r = args
    try:
        return run_realization(config, r)
    except Exception as exc:  # a failed realization is reported, not fatal to the others
        log.exception("realization %d failed", r)
        return {"index": r, "error": f"{type(exc).__name__}: {exc}"}


def run_ber_sweep(config: RunConfig, config_bytes: Optional[bytes] = None):
    """Run every realization and aggregate the error counts.

    Returns ``(records, manifest)``. Records are ordered by receiver (in
    config order) then SNR. Failed realizations are listed under
    ``manifest["failures"]`` and excluded from the counts.
    """
    started = time.time()
    layout = config.layout()
    jobs = [(config, r) for r in range(config.channel_realizations)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_safe_realization, jobs))
    else:
        results = [_safe_realization(job) for job in jobs]
    results.sort(key=lambda res: res["index"])

    ok = [res for res in results if "error" not in res]
    failures = [{"realization": res["index"], "error": res["error"]} for res in results if "error" in res]
    records = []
    for rx in config.receivers:
        for j, snr in enumerate(config.snr_db_list):
            totals = np.zeros(4, dtype=np.int64)
            for res in ok:
                totals += np.asarray(res["counts"][(rx, j)], dtype=np.int64)
            bit_errors, bits, frame_errors, frames = (int(v) for v in totals)
            records.append(
                BerRecord(
                    receiver=rx,
                    snr_db=snr,
                    bit_errors=bit_errors,
                    bits_total=bits,
                    frame_errors=frame_errors,
                    frames_total=frames,
                    ber=bit_errors / bits if bits else float("nan"),
                    fer=frame_errors / frames if frames else float("nan"),
                    realizations=len(ok),
                    seed=config.seed,
                )
            )

    timings = {rx: round(sum(res["timings"][rx] for res in ok), 3) for rx in config.receivers}
    manifest = {
        "package_version": __version__,
        "config": config.to_dict(),
        "layout": layout.to_dict(),
        "detector": "exact-app",
        "decoding_rules": {rx: DECODING_RULES[rx] for rx in config.receivers},
        "dnn_train_snr_mode": "mixture" if config.dnn.train_snr_range else "fixed",
        "config_blob_hash": git_blob_hash(config_bytes) if config_bytes is not None else None,
        "realization_input_digests": [res["input_digest"] for res in ok],
        "dnn_train_losses": {str(res["index"]): res["train_losses"] for res in ok if res["train_losses"]},
        "failures": failures,
        "timings_s": {"receivers": timings, "wall_clock": round(time.time() - started, 3)},
    }
    return records, manifest


def write_csv(records, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for rec in records:
            writer.writerow(rec.as_row())


def read_csv(path) -> list:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            records.append(
                BerRecord(
                    receiver=row["receiver"],
                    snr_db=parse_snr(row["snr_db"]),
                    bit_errors=int(row["bit_errors"]),
                    bits_total=int(row["bits_total"]),
                    frame_errors=int(row["frame_errors"]),
                    frames_total=int(row["frames_total"]),
                    ber=float(row["ber"]),
                    fer=float(row["fer"]),
                    realizations=int(row["realizations"]),
                    seed=int(row["seed"]),
                )
            )
    return records
