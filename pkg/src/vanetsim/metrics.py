"""Delivery records and the four summary metrics, plus CSV emission.

A DeliveryRecord is written once per (message, intended recipient) pair:
either the recipient got the message (recv_us set) or it did not
(loss_cause set), never both.  All metrics are plain functions over a
record list, so they can be recomputed independently from an event log
and compared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, TextIO

from .engine import SimTime, US_PER_S
from .radio import LOSS_CAUSES

CSV_HEADER = (
    "protocol,vehicle_count,seed,mean_e2e_delay_s,delivery_probability,"
    "plr,avg_throughput_bps,n_sent,n_delivered,n_lost"
)

METRIC_NAMES = (
    "mean_e2e_delay_s",
    "delivery_probability",
    "plr",
    "avg_throughput_bps",
)


@dataclass
class DeliveryRecord:
    msg_id: int
    src: int
    dst: int
    sent_us: SimTime
    recv_us: Optional[SimTime] = None
    loss_cause: Optional[str] = None
    protocol: str = ""
    hop_count: int = 0

    def __post_init__(self):
        delivered = self.recv_us is not None
        lost = self.loss_cause is not None
        if delivered == lost:
            raise ValueError(
                f"record (msg={self.msg_id}, dst={self.dst}) must set exactly one "
                f"of recv_us / loss_cause"
            )
        if lost and self.loss_cause not in LOSS_CAUSES:
            raise ValueError(f"unknown loss cause {self.loss_cause!r}")
        if delivered and self.recv_us < self.sent_us:
            raise ValueError("recv_us earlier than sent_us")

    @property
    def delivered(self) -> bool:
        return self.recv_us is not None


def end_to_end_delay_s(records: Sequence[DeliveryRecord]) -> Optional[float]:
    """Mean (recv - sent) in seconds over delivered records; None if none."""
    delays = [r.recv_us - r.sent_us for r in records if r.delivered]
    if not delays:
        return None
    return (sum(delays) / len(delays)) / US_PER_S


def delivery_probability(records: Sequence[DeliveryRecord]) -> Optional[float]:
    if not records:
        return None
    return sum(1 for r in records if r.delivered) / len(records)


def packet_loss_ratio(records: Sequence[DeliveryRecord]) -> Optional[float]:
    if not records:
        return None
    return sum(1 for r in records if not r.delivered) / len(records)


def average_throughput_bps(
    records: Sequence[DeliveryRecord], window_s: float, msg_size_bytes: int
) -> float:
    """Delivered payload bits per second of observation window."""
    if window_s <= 0:
        raise ValueError("window_s must be positive")
    delivered = sum(1 for r in records if r.delivered)
    return delivered * msg_size_bytes * 8 / window_s


@dataclass
class MetricsSummary:
    protocol: str
    vehicle_count: int
    seed: int
    n_sent: int
    n_delivered: int
    n_lost: int
    mean_e2e_delay_s: Optional[float]
    delivery_probability: Optional[float]
    plr: Optional[float]
    avg_throughput_bps: float


def summarize(
    records: Sequence[DeliveryRecord],
    protocol: str,
    vehicle_count: int,
    seed: int,
    window_s: float,
    msg_size_bytes: int,
) -> MetricsSummary:
    delivered = sum(1 for r in records if r.delivered)
    return MetricsSummary(
        protocol=protocol,
        vehicle_count=vehicle_count,
        seed=seed,
        n_sent=len(records),
        n_delivered=delivered,
        n_lost=len(records) - delivered,
        mean_e2e_delay_s=end_to_end_delay_s(records),
        delivery_probability=delivery_probability(records),
        plr=packet_loss_ratio(records),
        avg_throughput_bps=average_throughput_bps(records, window_s, msg_size_bytes),
    )


@dataclass
class AggregateRow:
    protocol: str
    vehicle_count: int
    n_runs: int
    mean_e2e_delay_s: Optional[float]
    std_e2e_delay_s: float
    delivery_probability: Optional[float]
    std_delivery_probability: float
    plr: Optional[float]
    std_plr: float
    avg_throughput_bps: float
    std_throughput_bps: float


def _mean_std(values: list[float]) -> tuple[Optional[float], float]:
    # Sample standard deviation (n - 1); a single value has zero spread.
    if not values:
        return None, 0.0
    mean = sum(values) / len(values)
    if len(values) < 2:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return mean, math.sqrt(var)


def aggregate_sweep(summaries: Iterable[MetricsSummary]) -> list[AggregateRow]:
    """Seed-average summaries into one row per (protocol, vehicle_count)."""
    groups: dict[tuple[str, int], list[MetricsSummary]] = {}
    for s in summaries:
        groups.setdefault((s.protocol, s.vehicle_count), []).append(s)
    rows = []
    for (protocol, vc) in sorted(groups):
        runs = groups[(protocol, vc)]
        delay_m, delay_s = _mean_std(
            [r.mean_e2e_delay_s for r in runs if r.mean_e2e_delay_s is not None]
        )
        dp_m, dp_s = _mean_std(
            [r.delivery_probability for r in runs if r.delivery_probability is not None]
        )
        plr_m, plr_s = _mean_std([r.plr for r in runs if r.plr is not None])
        tp_m, tp_s = _mean_std([r.avg_throughput_bps for r in runs])
        rows.append(
            AggregateRow(
                protocol=protocol,
                vehicle_count=vc,
                n_runs=len(runs),
                mean_e2e_delay_s=delay_m,
                std_e2e_delay_s=delay_s,
                delivery_probability=dp_m,
                std_delivery_probability=dp_s,
                plr=plr_m,
                std_plr=plr_s,
                avg_throughput_bps=tp_m if tp_m is not None else 0.0,
                std_throughput_bps=tp_s,
            )
        )
    return rows


def _fmt(value: Optional[float]) -> str:
    # Decimal reals at 9 significant digits; absent values stay empty.
    if value is None:
        return ""
    return format(value, ".9g")


def csv_text(summaries: Iterable[MetricsSummary]) -> str:
    lines = [CSV_HEADER]
    for s in sorted(summaries, key=lambda s: (s.protocol, s.vehicle_count, s.seed)):
        lines.append(
            f"{s.protocol},{s.vehicle_count},{s.seed},{_fmt(s.mean_e2e_delay_s)},"
            f"{_fmt(s.delivery_probability)},{_fmt(s.plr)},{_fmt(s.avg_throughput_bps)},"
            f"{s.n_sent},{s.n_delivered},{s.n_lost}"
        )
    return "\n".join(lines) + "\n"


def write_csv(summaries: Iterable[MetricsSummary], fh: TextIO) -> None:
    fh.write(csv_text(summaries))


def plot_data_texts(summaries: Iterable[MetricsSummary]) -> dict[str, str]:
    """One two-column file body per (protocol, metric), seed-averaged.

    Keys are file names like ``baseline_plr.dat``; each body starts with a
    '#' header line followed by ``vehicle_count value`` rows.
    """
    rows = aggregate_sweep(summaries)
    out: dict[str, str] = {}
    protocols = sorted({r.protocol for r in rows})
    for protocol in protocols:
        mine = [r for r in rows if r.protocol == protocol]
        for metric in METRIC_NAMES:
            lines = [f"# vehicle_count {metric}"]
            for row in mine:
                value = getattr(row, metric)
                if value is None:
                    continue
                lines.append(f"{row.vehicle_count} {_fmt(value)}")
            out[f"{protocol}_{metric}.dat"] = "\n".join(lines) + "\n"
    return out
