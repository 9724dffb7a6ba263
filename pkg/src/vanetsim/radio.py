"""DSRC-style radio abstraction: range gate, sight blockage, timing, loss.

A hop either delivers or fails for exactly one reason: out_of_range (the
receiver is beyond the radio range), shadowed (the straight line between
the two positions passes through a building), or channel_loss (a Bernoulli
draw whose probability grows with the number of concurrent transmissions
near the receiver).  Contention is abstracted as a random backoff before
the transmission starts; there is no MAC state machine.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from random import Random
from typing import Optional, Sequence

from .engine import US_PER_S
from .errors import ConfigError
from .mobility import Position, distance

OUT_OF_RANGE = "out_of_range"
SHADOWED = "shadowed"
CHANNEL_LOSS = "channel_loss"
LOSS_CAUSES = (OUT_OF_RANGE, SHADOWED, CHANNEL_LOSS)


@dataclass
class RadioParams:
    range_m: float = 300.0
    data_rate_bps: int = 2_000_000
    msg_size_bytes: int = 256
    prop_speed_mps: float = 3.0e8
    base_loss: float = 0.02
    loss_slope: float = 0.001
    max_backoff_us: int = 2000
    max_defers: int = 16  # carrier-sense deferrals before transmitting anyway

    def __post_init__(self):
        if self.range_m <= 0:
            raise ConfigError("radio.range_m: must be positive")
        if self.data_rate_bps <= 0:
            raise ConfigError("radio.data_rate_bps: must be positive")
        if self.msg_size_bytes <= 0:
            raise ConfigError("radio.msg_size_bytes: must be positive")
        if self.prop_speed_mps <= 0:
            raise ConfigError("radio.prop_speed_mps: must be positive")
        if not 0.0 <= self.base_loss <= 1.0:
            raise ConfigError("radio.base_loss: must lie in [0, 1]")
        if self.loss_slope < 0:
            raise ConfigError("radio.loss_slope: must be non-negative")
        if self.max_backoff_us < 0:
            raise ConfigError("radio.max_backoff_us: must be non-negative")
        if self.max_defers < 0:
            raise ConfigError("radio.max_defers: must be non-negative")


@dataclass
class HopOutcome:
    delivered: bool
    delay_us: Optional[int] = None
    loss_cause: Optional[str] = None

    def __post_init__(self):
        if self.delivered and (self.delay_us is None or self.loss_cause is not None):
            raise ValueError("delivered hop must carry a delay and no loss cause")
        if not self.delivered and (
            self.loss_cause not in LOSS_CAUSES or self.delay_us is not None
        ):
            raise ValueError("lost hop must carry exactly a loss cause")


Rect = tuple[float, float, float, float]  # x_min, y_min, x_max, y_max


@dataclass
class ObstacleMap:
    """Axis-aligned rectangles whose interiors block line of sight."""

    rects: list[Rect] = field(default_factory=list)

    def __post_init__(self):
        cleaned = []
        for i, rect in enumerate(self.rects):
            if len(rect) != 4:
                raise ConfigError(f"obstacles[{i}]: need 4 numbers, got {len(rect)}")
            x0, y0, x1, y1 = (float(v) for v in rect)
            if x0 >= x1 or y0 >= y1:
                raise ConfigError(
                    f"obstacles[{i}]: degenerate rectangle ({x0}, {y0}, {x1}, {y1})"
                )
            cleaned.append((x0, y0, x1, y1))
        self.rects = cleaned

    def __len__(self) -> int:
        return len(self.rects)

    @classmethod
    def load(cls, path: str) -> "ObstacleMap":
        """Read one rectangle per line: x_min y_min x_max y_max.

        Blank lines are skipped; '#' starts a comment.
        """
        rects: list[Rect] = []
        try:
            with open(path, "r", encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    text = line.split("#", 1)[0].strip()
                    if not text:
                        continue
                    parts = text.split()
                    if len(parts) != 4:
                        raise ConfigError(
                            f"{path}:{lineno}: expected 4 numbers, got {len(parts)}"
                        )
                    try:
                        rects.append(tuple(float(p) for p in parts))
                    except ValueError as exc:
                        raise ConfigError(f"{path}:{lineno}: {exc}") from exc
        except OSError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        try:
            return cls(rects)
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}") from exc


EMPTY_MAP = ObstacleMap([])


def in_range(a: Position, b: Position, params: RadioParams) -> bool:
    return distance(a, b) <= params.range_m


def _segment_blocked(ax, ay, bx, by, rect: Rect) -> bool:
    # Liang-Barsky clip of the segment to the closed rectangle.  The segment
    # is blocked only when the clipped portion has positive length and runs
    # through the interior; corner or edge grazing keeps sight clear.
    x0, y0, x1, y1 = rect
    dx = bx - ax
    dy = by - ay
    if dx == 0.0 and dy == 0.0:
        return x0 < ax < x1 and y0 < ay < y1
    t0, t1 = 0.0, 1.0
    for p, q in (
        (-dx, ax - x0),
        (dx, x1 - ax),
        (-dy, ay - y0),
        (dy, y1 - ay),
    ):
        if p == 0.0:
            if q < 0.0:
                return False
        else:
            r = q / p
            if p < 0.0:
                if r > t1:
                    return False
                if r > t0:
                    t0 = r
            else:
                if r < t0:
                    return False
                if r < t1:
                    t1 = r
    if t1 <= t0:
        return False
    tm = (t0 + t1) / 2.0
    mx = ax + tm * dx
    my = ay + tm * dy
    return x0 < mx < x1 and y0 < my < y1


def line_of_sight(a: Position, b: Position, obstacles: ObstacleMap) -> bool:
    """True when no rectangle interior intersects the open segment a-b."""
    if not obstacles.rects:
        return True
    # Canonical endpoint order makes the test exactly symmetric.
    if (b.x, b.y) < (a.x, a.y):
        a, b = b, a
    lo_x, hi_x = (a.x, b.x) if a.x <= b.x else (b.x, a.x)
    lo_y, hi_y = (a.y, b.y) if a.y <= b.y else (b.y, a.y)
    for rect in obstacles.rects:
        if hi_x < rect[0] or lo_x > rect[2] or hi_y < rect[1] or lo_y > rect[3]:
            continue
        if _segment_blocked(a.x, a.y, b.x, b.y, rect):
            return False
    return True


def tx_time_us(params: RadioParams, size_bytes: Optional[int] = None) -> int:
    size = params.msg_size_bytes if size_bytes is None else size_bytes
    raw = size * 8 * US_PER_S / params.data_rate_bps
    return max(1, int(raw + 0.5))


def hop_delay_us(params: RadioParams, distance_m: float, backoff_us: int = 0) -> int:
    """Transmission plus propagation plus backoff, in whole microseconds.

    The fractional transmission and propagation terms are rounded half-up;
    the result is always at least one microsecond.
    """
    tx = params.msg_size_bytes * 8 * US_PER_S / params.data_rate_bps
    prop = distance_m * US_PER_S / params.prop_speed_mps
    return max(1, int(tx + prop + 0.5) + int(backoff_us))


def channel_loss(params: RadioParams, concurrent_tx: int, rng: Random) -> bool:
    """Bernoulli loss draw; probability min(1, base + slope * concurrent).

    Always consumes exactly one draw from the stream so the draw sequence
    stays aligned no matter what the probability works out to.
    """
    q = min(1.0, params.base_loss + params.loss_slope * concurrent_tx)
    return rng.random() < q


def unicast(
    sender: Position,
    receiver: Position,
    params: RadioParams,
    obstacles: ObstacleMap,
    rng: Random,
    concurrent_tx: int = 0,
    backoff_us: int = 0,
) -> HopOutcome:
    """Evaluate one directed hop.  Checks run range, sight, then channel."""
    d = distance(sender, receiver)
    if d > params.range_m:
        return HopOutcome(False, loss_cause=OUT_OF_RANGE)
    if not line_of_sight(sender, receiver, obstacles):
        return HopOutcome(False, loss_cause=SHADOWED)
    if channel_loss(params, concurrent_tx, rng):
        return HopOutcome(False, loss_cause=CHANNEL_LOSS)
    return HopOutcome(True, delay_us=hop_delay_us(params, d, backoff_us))


def broadcast(
    sender: Position,
    receivers: Sequence[tuple[int, Position]],
    params: RadioParams,
    obstacles: ObstacleMap,
    rng: Random,
    concurrent_tx: int = 0,
    backoff_us: int = 0,
) -> list[tuple[int, HopOutcome]]:
    """Evaluate one broadcast against every listed receiver independently.

    Receivers are visited in ascending id order so the loss draws are
    reproducible.  The shared backoff is the sender's single contention
    delay for this transmission.
    """
    outcomes = []
    for rid, pos in sorted(receivers, key=lambda item: item[0]):
        outcomes.append(
            (rid, unicast(sender, pos, params, obstacles, rng, concurrent_tx, backoff_us))
        )
    return outcomes
