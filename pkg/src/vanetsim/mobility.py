"""Vehicle position models: synthetic highway and grid fleets, recorded traces.

All providers answer the same question: where is vehicle v at time t (in
microseconds), as a VehicleState.  Synthetic fleets draw their initial
placement and per-vehicle constant speed once from the "mobility" RNG
stream; trace fleets interpolate linearly between recorded samples and
clamp at the trace ends.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from bisect import bisect_right
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation, ROUND_HALF_UP
from random import Random
from typing import NamedTuple, Optional, Sequence

from .engine import SimTime, US_PER_S
from .errors import ConfigError, TraceParseError

# 1 mph is exactly 0.44704 m/s.
MPH_TO_MPS = 0.44704

LANE_WIDTH_M = 3.5

MODE_HIGHWAY = "synthetic_highway"
MODE_GRID = "synthetic_grid"
MODE_TRACE = "trace"
MODES = (MODE_HIGHWAY, MODE_GRID, MODE_TRACE)

MAX_VEHICLES = 10_000


class Position(NamedTuple):
    x: float
    y: float


def distance(a: Position, b: Position) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


@dataclass
class VehicleState:
    vehicle_id: int
    pos: Position
    speed: float  # m/s
    heading: float  # radians, 0 along +x
    is_gateway: bool = False


@dataclass
class TraceSample:
    time_us: SimTime
    vehicle_id: str
    x: float
    y: float
    speed: float


@dataclass
class MobilitySpec:
    mode: str = MODE_HIGHWAY
    vehicle_count: int = 50
    road_length_m: float = 10_000.0
    lanes: int = 2
    speed_range_mph: tuple[float, float] = (30.0, 60.0)
    trace_path: Optional[str] = None
    grid_blocks: int = 5
    grid_spacing_m: float = 200.0
    gateway_fraction: float = 0.05

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mobility.mode: unknown mode {self.mode!r}")
        if not 1 <= int(self.vehicle_count) <= MAX_VEHICLES:
            raise ConfigError(
                f"mobility.vehicle_count: {self.vehicle_count} outside [1, {MAX_VEHICLES}]"
            )
        if self.road_length_m <= 0:
            raise ConfigError("mobility.road_length_m: must be positive")
        if self.lanes < 1:
            raise ConfigError("mobility.lanes: must be at least 1")
        lo, hi = self.speed_range_mph
        if lo < 0 or hi < lo:
            raise ConfigError(
                f"mobility.speed_range_mph: bad range ({lo}, {hi}); need 0 <= min <= max"
            )
        if self.mode == MODE_TRACE and not self.trace_path:
            raise ConfigError("mobility.trace_path: required when mode is 'trace'")
        if self.grid_blocks < 1:
            raise ConfigError("mobility.grid_blocks: must be at least 1")
        if self.grid_spacing_m <= 0:
            raise ConfigError("mobility.grid_spacing_m: must be positive")
        if not 0.0 <= self.gateway_fraction <= 1.0:
            raise ConfigError("mobility.gateway_fraction: must lie in [0, 1]")


def gateway_count(n: int, fraction: float) -> int:
    return min(n, int(round(n * fraction)))


class MobilityProvider:
    """Interface shared by all providers."""

    vehicle_ids: list[int]

    #: coordinate wrap periods (x, y); None means that axis does not wrap
    wrap_period: tuple[Optional[float], Optional[float]] = (None, None)

    @property
    def vehicle_count(self) -> int:
        return len(self.vehicle_ids)

    def position_at(self, vehicle_id: int, t_us: SimTime) -> VehicleState:
        raise NotImplementedError

    def fleet_at(self, t_us: SimTime) -> list[VehicleState]:
        return [self.position_at(v, t_us) for v in self.vehicle_ids]

    def max_drift_mps(self) -> float:
        """Upper bound on how fast any vehicle's position can change."""
        raise NotImplementedError

    def bounds(self) -> tuple[float, float, float, float]:
        """(x_min, y_min, x_max, y_max) box every vehicle stays inside."""
        raise NotImplementedError


class SyntheticHighwayProvider(MobilityProvider):
    """Constant-speed vehicles on a straight multi-lane road that wraps.

    Each vehicle draws (start position, lane, speed) once; afterwards it
    moves along +x at its speed and wraps modulo the road length, so the
    fleet size and the relative spacing statistics stay put for the whole
    run.  ``initial`` bypasses the random draws with explicit
    (x0_m, lane, speed_mps) triples, which experiments and tests use to
    pin down exact geometries.
    """

    def __init__(
        self,
        spec: MobilitySpec,
        rng: Optional[Random] = None,
        initial: Optional[Sequence[tuple[float, int, float]]] = None,
    ):
        self.spec = spec
        if initial is None:
            if rng is None:
                raise ConfigError("synthetic mobility needs an RNG stream")
            lo = spec.speed_range_mph[0] * MPH_TO_MPS
            hi = spec.speed_range_mph[1] * MPH_TO_MPS
            initial = [
                (
                    rng.uniform(0.0, spec.road_length_m),
                    rng.randrange(spec.lanes),
                    rng.uniform(lo, hi),
                )
                for _ in range(spec.vehicle_count)
            ]
        self._start = [float(x) for x, _, _ in initial]
        self._lane = [int(lane) for _, lane, _ in initial]
        self._speed = [float(s) for _, _, s in initial]
        self.vehicle_ids = list(range(len(initial)))
        self._n_gateways = gateway_count(len(initial), spec.gateway_fraction)
        self.wrap_period = (spec.road_length_m, None)

    def position_at(self, vehicle_id: int, t_us: SimTime) -> VehicleState:
        x = (
            self._start[vehicle_id] + self._speed[vehicle_id] * (t_us / US_PER_S)
        ) % self.spec.road_length_m
        return VehicleState(
            vehicle_id,
            Position(x, self._lane[vehicle_id] * LANE_WIDTH_M),
            self._speed[vehicle_id],
            0.0,
            vehicle_id < self._n_gateways,
        )

    def max_drift_mps(self) -> float:
        return max(self._speed) if self._speed else 0.0

    def bounds(self) -> tuple[float, float, float, float]:
        return (0.0, 0.0, self.spec.road_length_m, (self.spec.lanes - 1) * LANE_WIDTH_M)


class SyntheticGridProvider(MobilityProvider):
    """Constant-speed vehicles on a square street grid.

    Streets run along every line x = i * spacing and y = j * spacing for
    0 <= i, j <= blocks.  Each vehicle picks one street, a travel
    direction and a speed, then shuttles along it, wrapping at the grid
    edge.  Block interiors are left to the obstacle map.
    """

    def __init__(
        self,
        spec: MobilitySpec,
        rng: Optional[Random] = None,
        initial: Optional[Sequence[tuple[str, int, float, int, float]]] = None,
    ):
        # initial entries: (orientation "h"|"v", street index, offset_m, direction +-1, speed_mps)
        self.spec = spec
        self.extent_m = spec.grid_blocks * spec.grid_spacing_m
        if initial is None:
            if rng is None:
                raise ConfigError("synthetic mobility needs an RNG stream")
            lo = spec.speed_range_mph[0] * MPH_TO_MPS
            hi = spec.speed_range_mph[1] * MPH_TO_MPS
            initial = [
                (
                    "h" if rng.random() < 0.5 else "v",
                    rng.randrange(spec.grid_blocks + 1),
                    rng.uniform(0.0, self.extent_m),
                    1 if rng.random() < 0.5 else -1,
                    rng.uniform(lo, hi),
                )
                for _ in range(spec.vehicle_count)
            ]
        self._orient = [o for o, _, _, _, _ in initial]
        self._street = [int(i) for _, i, _, _, _ in initial]
        self._offset = [float(d) for _, _, d, _, _ in initial]
        self._dir = [int(s) for _, _, _, s, _ in initial]
        self._speed = [float(v) for _, _, _, _, v in initial]
        self.vehicle_ids = list(range(len(initial)))
        self._n_gateways = gateway_count(len(initial), spec.gateway_fraction)
        self.wrap_period = (self.extent_m, self.extent_m)

    def position_at(self, vehicle_id: int, t_us: SimTime) -> VehicleState:
        along = (
            self._offset[vehicle_id]
            + self._dir[vehicle_id] * self._speed[vehicle_id] * (t_us / US_PER_S)
        ) % self.extent_m
        fixed = self._street[vehicle_id] * self.spec.grid_spacing_m
        if self._orient[vehicle_id] == "h":
            pos = Position(along, fixed)
            heading = 0.0 if self._dir[vehicle_id] > 0 else math.pi
        else:
            pos = Position(fixed, along)
            heading = math.pi / 2 if self._dir[vehicle_id] > 0 else 3 * math.pi / 2
        return VehicleState(
            vehicle_id,
            pos,
            self._speed[vehicle_id],
            heading,
            vehicle_id < self._n_gateways,
        )

    def max_drift_mps(self) -> float:
        return max(self._speed) if self._speed else 0.0

    def bounds(self) -> tuple[float, float, float, float]:
        return (0.0, 0.0, self.extent_m, self.extent_m)


class StaticProvider(MobilityProvider):
    """Fixed fleet that never moves; handy for topology experiments."""

    def __init__(self, positions: Sequence[Position], gateways: Sequence[int] = ()):
        self._positions = [Position(float(x), float(y)) for x, y in positions]
        self.vehicle_ids = list(range(len(self._positions)))
        self._gateways = set(gateways)

    def position_at(self, vehicle_id: int, t_us: SimTime) -> VehicleState:
        return VehicleState(
            vehicle_id,
            self._positions[vehicle_id],
            0.0,
            0.0,
            vehicle_id in self._gateways,
        )

    def max_drift_mps(self) -> float:
        return 0.0

    def bounds(self) -> tuple[float, float, float, float]:
        xs = [p.x for p in self._positions]
        ys = [p.y for p in self._positions]
        return (min(xs), min(ys), max(xs), max(ys))


class TraceProvider(MobilityProvider):
    """Playback of recorded samples with linear interpolation.

    Queries before the first or after the last sample of a vehicle clamp
    to that sample.  Trace vehicle ids (strings) are mapped to integer ids
    in order of first appearance; ``label_of`` recovers the original id.
    """

    def __init__(self, samples: Sequence[TraceSample], gateway_fraction: float = 0.0):
        by_vehicle: dict[str, list[TraceSample]] = {}
        for sample in samples:
            by_vehicle.setdefault(sample.vehicle_id, []).append(sample)
        if not by_vehicle:
            raise ConfigError("trace contains no vehicle samples")
        self._labels = list(by_vehicle.keys())  # first-appearance order
        self.vehicle_ids = list(range(len(self._labels)))
        self._times: list[list[SimTime]] = []
        self._points: list[list[Position]] = []
        self._speeds: list[list[float]] = []
        drift = 0.0
        for label in self._labels:
            rows = by_vehicle[label]
            times = [r.time_us for r in rows]
            if any(b <= a for a, b in zip(times, times[1:])):
                raise TraceParseError(
                    f"vehicle '{label}': sample timestamps must be strictly increasing"
                )
            points = [Position(r.x, r.y) for r in rows]
            self._times.append(times)
            self._points.append(points)
            self._speeds.append([r.speed for r in rows])
            for (t0, p0), (t1, p1) in zip(zip(times, points), zip(times[1:], points[1:])):
                drift = max(drift, distance(p0, p1) / ((t1 - t0) / US_PER_S))
        self._max_drift = drift
        self._n_gateways = gateway_count(len(self._labels), gateway_fraction)

    def label_of(self, vehicle_id: int) -> str:
        return self._labels[vehicle_id]

    def position_at(self, vehicle_id: int, t_us: SimTime) -> VehicleState:
        times = self._times[vehicle_id]
        points = self._points[vehicle_id]
        speeds = self._speeds[vehicle_id]
        is_gw = vehicle_id < self._n_gateways
        if t_us <= times[0]:
            return VehicleState(vehicle_id, points[0], speeds[0], 0.0, is_gw)
        if t_us >= times[-1]:
            return VehicleState(vehicle_id, points[-1], speeds[-1], 0.0, is_gw)
        k = bisect_right(times, t_us) - 1
        if times[k] == t_us:
            return VehicleState(vehicle_id, points[k], speeds[k], 0.0, is_gw)
        t0, t1 = times[k], times[k + 1]
        frac = (t_us - t0) / (t1 - t0)
        p0, p1 = points[k], points[k + 1]
        pos = Position(p0.x + frac * (p1.x - p0.x), p0.y + frac * (p1.y - p0.y))
        speed = speeds[k] + frac * (speeds[k + 1] - speeds[k])
        heading = math.atan2(p1.y - p0.y, p1.x - p0.x) if p1 != p0 else 0.0
        return VehicleState(vehicle_id, pos, speed, heading, is_gw)

    def max_drift_mps(self) -> float:
        return self._max_drift

    def bounds(self) -> tuple[float, float, float, float]:
        xs = [p.x for pts in self._points for p in pts]
        ys = [p.y for pts in self._points for p in pts]
        return (min(xs), min(ys), max(xs), max(ys))


def _seconds_to_us(text: str, where: str) -> SimTime:
    try:
        quantized = (Decimal(text) * US_PER_S).quantize(
            Decimal(1), rounding=ROUND_HALF_UP
        )
    except InvalidOperation as exc:
        raise TraceParseError(f"{where}: bad time value {text!r}") from exc
    return int(quantized)


def _require(node: ET.Element, attr: str, where: str) -> str:
    value = node.get(attr)
    if value is None:
        raise TraceParseError(
            f"{where}: {node.tag} element missing required attribute '{attr}'"
        )
    return value


def _float_attr(node: ET.Element, attr: str, where: str) -> float:
    raw = _require(node, attr, where)
    try:
        return float(raw)
    except ValueError as exc:
        raise TraceParseError(f"{where}: attribute '{attr}' is not a number: {raw!r}") from exc


def parse_fcd(path: str) -> list[TraceSample]:
    """Parse the floating-car-data XML subset into a flat sample list.

    Expected shape: an ``fcd-export`` root holding ``timestep`` elements
    (attribute ``time`` in seconds), each holding ``vehicle`` elements with
    ``id``, ``x``, ``y`` and ``speed``.  Unknown elements and attributes
    are ignored.  Times are converted to whole microseconds, rounding
    half-up.  Per vehicle, timestamps must be strictly increasing.
    """
    try:
        tree = ET.parse(path)
    except ET.ParseError as exc:
        raise TraceParseError(f"{path}: malformed XML: {exc}") from exc
    except OSError as exc:
        raise TraceParseError(f"{path}: {exc}") from exc
    root = tree.getroot()
    if root.tag != "fcd-export":
        raise TraceParseError(
            f"{path}: root element is '{root.tag}', expected 'fcd-export'"
        )
    samples: list[TraceSample] = []
    last_time: dict[str, SimTime] = {}
    for step in root:
        if step.tag != "timestep":
            continue
        raw_time = _require(step, "time", path)
        time_us = _seconds_to_us(raw_time, path)
        where = f"{path}: timestep {raw_time}"
        for node in step:
            if node.tag != "vehicle":
                continue
            vid = _require(node, "id", where)
            x = _float_attr(node, "x", where)
            y = _float_attr(node, "y", where)
            speed = _float_attr(node, "speed", where)
            previous = last_time.get(vid)
            if previous is not None and time_us <= previous:
                raise TraceParseError(
                    f"{where}: vehicle '{vid}' timestamp does not increase "
                    f"(previous sample at {previous}us)"
                )
            last_time[vid] = time_us
            samples.append(TraceSample(time_us, vid, x, y, speed))
    return samples


def build_provider(spec: MobilitySpec, rng: Optional[Random]) -> MobilityProvider:
    if spec.mode == MODE_HIGHWAY:
        return SyntheticHighwayProvider(spec, rng)
    if spec.mode == MODE_GRID:
        return SyntheticGridProvider(spec, rng)
    samples = parse_fcd(spec.trace_path)
    provider = TraceProvider(samples, spec.gateway_fraction)
    if provider.vehicle_count != spec.vehicle_count:
        raise ConfigError(
            f"mobility.vehicle_count: configured {spec.vehicle_count} but trace "
            f"'{spec.trace_path}' contains {provider.vehicle_count} vehicles"
        )
    return provider


class NeighborIndex:
    """Coarse spatial bucket index over the fleet for range queries.

    Buckets are rebuilt lazily when the snapshot is older than the refresh
    interval; queries widen the radius by the largest possible drift since
    the snapshot, so the candidate set always contains every vehicle that
    is actually within the requested radius.  Callers must still do the
    exact distance check.
    """

    REFRESH_US = 200_000

    def __init__(self, provider: MobilityProvider, cell_m: float):
        self._provider = provider
        self._cell = max(cell_m, 1.0)
        self._built_at: Optional[SimTime] = None
        self._buckets: dict[tuple[int, int], list[int]] = {}
        self._snapshot: dict[int, Position] = {}

    def _rebuild(self, t_us: SimTime) -> None:
        self._buckets = {}
        self._snapshot = {}
        for state in self._provider.fleet_at(t_us):
            key = (int(state.pos.x // self._cell), int(state.pos.y // self._cell))
            self._buckets.setdefault(key, []).append(state.vehicle_id)
            self._snapshot[state.vehicle_id] = state.pos
        self._built_at = t_us

    def candidates(self, center: Position, radius_m: float, t_us: SimTime) -> list[int]:
        if self._built_at is None or t_us - self._built_at > self.REFRESH_US:
            self._rebuild(t_us)
        elapsed = max(0, t_us - self._built_at)
        slack = self._provider.max_drift_mps() * (elapsed / US_PER_S)
        reach = radius_m + slack + 1e-9
        # Near a wrap boundary a vehicle can jump across the map between the
        # snapshot and now, so the query is repeated from mirror centers.
        wrap_x, wrap_y = self._provider.wrap_period
        xs = [center.x]
        if wrap_x is not None:
            if center.x - reach < 0:
                xs.append(center.x + wrap_x)
            if center.x + reach > wrap_x:
                xs.append(center.x - wrap_x)
        ys = [center.y]
        if wrap_y is not None:
            if center.y - reach < 0:
                ys.append(center.y + wrap_y)
            if center.y + reach > wrap_y:
                ys.append(center.y - wrap_y)
        found: set[int] = set()
        for cx in xs:
            for cy in ys:
                x_lo = int((cx - reach) // self._cell)
                x_hi = int((cx + reach) // self._cell)
                y_lo = int((cy - reach) // self._cell)
                y_hi = int((cy + reach) // self._cell)
                for bx in range(x_lo, x_hi + 1):
                    for by in range(y_lo, y_hi + 1):
                        for vid in self._buckets.get((bx, by), ()):
                            snap = self._snapshot[vid]
                            if abs(snap.x - cx) <= reach and abs(snap.y - cy) <= reach:
                                found.add(vid)
        return sorted(found)
