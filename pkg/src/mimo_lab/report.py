"""Tabulate BER records: per-receiver curves, confidence intervals and SNR gains."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

Z_95 = 1.959963984540054


def ber_half_width(ber: float, bits: int, z: float = Z_95) -> float:
    """Normal-approximation binomial confidence half-width."""
    if bits <= 0:
        return float("nan")
    return z * math.sqrt(max(ber * (1.0 - ber), 0.0) / bits)


def snr_at_ber(points, target: float) -> Optional[float]:
    """SNR where a BER curve first falls through ``target``, by log-linear interpolation.

    ``points`` are ``(snr_db, ber)`` pairs. Points with zero BER or infinite
    SNR cannot be placed on a log scale and are skipped. Returns ``None``
    when no pair of usable points brackets the target.
    """
    usable = sorted((s, b) for s, b in points if math.isfinite(s) and b > 0)
    for (s0, b0), (s1, b1) in zip(usable, usable[1:]):
        if b0 >= target >= b1 and b0 != b1:
            frac = (math.log10(b0) - math.log10(target)) / (math.log10(b0) - math.log10(b1))
            return s0 + frac * (s1 - s0)
        if b0 == target:
            return s0
    if usable and usable[-1][1] == target:
        return usable[-1][0]
    return None


@dataclass
class Summary:
    table: list
    snr_at_target: dict
    gains: dict
    target_ber: float
    reference: Optional[str]
    flags: list = field(default_factory=list)
    text: str = ""


def summarize(records, target_ber: float = 1e-4, reference: Optional[str] = None) -> Summary:
    """Per-receiver SNR/BER table plus SNR gain over ``reference`` at ``target_ber``.

    The gain of receiver A is ``snr_ref(target) - snr_A(target)``, positive
    when A needs less SNR. ``reference`` defaults to ``"linear"`` when present,
    else the first receiver.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to summarize")
    receivers = list(dict.fromkeys(r.receiver for r in records))
    if reference is None:
        reference = "linear" if "linear" in receivers else receivers[0]
    elif reference not in receivers:
        raise ValueError(f"reference receiver {reference!r} not in records")

    table = []
    for rec in sorted(records, key=lambda r: (receivers.index(r.receiver), r.snr_db)):
        table.append(
            {
                "receiver": rec.receiver,
                "snr_db": rec.snr_db,
                "ber": rec.ber,
                "ber_ci95": ber_half_width(rec.ber, rec.bits_total),
                "fer": rec.fer,
                "bits_total": rec.bits_total,
            }
        )

    flags = []
    snr_at = {}
    for rx in receivers:
        pts = [(r.snr_db, r.ber) for r in records if r.receiver == rx]
        snr_at[rx] = snr_at_ber(pts, target_ber)
        if snr_at[rx] is None:
            flags.append(f"{rx}: BER curve does not cross {target_ber:g}; no gain computable")
    gains = {}
    ref_snr = snr_at.get(reference)
    for rx in receivers:
        if rx == reference:
            continue
        gains[rx] = None if ref_snr is None or snr_at[rx] is None else ref_snr - snr_at[rx]

    summary = Summary(
        table=table,
        snr_at_target=snr_at,
        gains=gains,
        target_ber=target_ber,
        reference=reference,
        flags=flags,
    )
    summary.text = format_summary(summary)
    return summary


def format_summary(summary: Summary) -> str:
    lines = [f"{'receiver':<10} {'snr_db':>7} {'ber':>11} {'+-95%':>10} {'fer':>9} {'bits':>10}"]
    for row in summary.table:
        snr = "inf" if math.isinf(row["snr_db"]) else f"{row['snr_db']:.2f}"
        lines.append(
            f"{row['receiver']:<10} {snr:>7} {row['ber']:>11.4e} {row['ber_ci95']:>10.2e} "
            f"{row['fer']:>9.4f} {row['bits_total']:>10d}"
        )
    lines.append("")
    lines.append(f"SNR at BER {summary.target_ber:g} (gain over {summary.reference}):")
    for rx, snr in summary.snr_at_target.items():
        where = "n/a" if snr is None else f"{snr:.2f} dB"
        gain = summary.gains.get(rx)
        extra = "" if rx == summary.reference else (
            "  gain n/a" if gain is None else f"  gain {gain:+.2f} dB"
        )
        lines.append(f"  {rx:<10} {where}{extra}")
    for flag in summary.flags:
        lines.append(f"  note: {flag}")
    return "\n".join(lines)
