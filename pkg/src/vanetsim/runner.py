"""Run orchestration: wires mobility, stations, channel and a protocol
into the event loop, injects the workload, and sweeps densities/seeds.

One run = one (protocol, vehicle_count, seed) triple.  Every vehicle
transmission goes through carrier sense: while another transmission is
audible at the sender the attempt is pushed to the moment the channel
frees up (bounded number of times), then a random backoff is added and
the frame goes out.  Receivers are evaluated at fire time against range,
sight and a loss draw whose probability grows with the number of other
transmissions audible at the receiver.
"""

from __future__ import annotations

import dataclasses
import heapq
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

from .config import TARGET_EXPLICIT, ScenarioConfig
from .engine import (
    BEACON_EMIT,
    CLOUD_DELIVER,
    FOG_MAINTENANCE,
    MESSAGE_INJECT,
    MOBILITY_TICK,
    RADIO_DELIVER,
    SIM_END,
    US_PER_S,
    RunStats,
    SimTime,
    Simulator,
)
from .errors import ConfigError, SimulationError, VanetSimError
from .metrics import DeliveryRecord, MetricsSummary, summarize
from .mobility import (
    MODE_GRID,
    MODE_HIGHWAY,
    MobilitySpec,
    NeighborIndex,
    Position,
    build_provider,
    distance,
)
from .protocols import (
    PROTOCOLS,
    BaseStation,
    BeaconJob,
    GatewayInfo,
    InfraTx,
    KIND_BEACON,
    Message,
    TxJob,
    nearest_station,
)
from .radio import (
    CHANNEL_LOSS,
    OUT_OF_RANGE,
    SHADOWED,
    HopOutcome,
    RadioParams,
    channel_loss,
    hop_delay_us,
    line_of_sight,
    tx_time_us,
)


def _us(seconds: float) -> SimTime:
    return int(seconds * US_PER_S + 0.5)


def _fmt_ids(ids) -> str:
    return ",".join(str(i) for i in ids)


class Channel:
    """In-flight transmission registry shared by everything that radiates.

    Entries are (end, start, x, y) kept in a heap by end time so expired
    transmissions drop off in O(log n).  A transmission is audible at a
    point when it has started, has not ended, and its origin lies within
    radio range of that point.
    """

    def __init__(self, params: RadioParams, backoff_rng):
        self.params = params
        self._rng = backoff_rng
        self._active: list[tuple[SimTime, SimTime, float, float]] = []

    def register(self, start: SimTime, end: SimTime, pos: Position) -> None:
        heapq.heappush(self._active, (end, start, pos.x, pos.y))

    def _prune(self, t: SimTime) -> None:
        while self._active and self._active[0][0] <= t:
            heapq.heappop(self._active)

    def concurrent_near(self, pos: Position, t: SimTime) -> int:
        self._prune(t)
        r = self.params.range_m
        return sum(
            1
            for end, start, x, y in self._active
            if start <= t and math.hypot(x - pos.x, y - pos.y) <= r
        )

    def busy_until_near(self, pos: Position, t: SimTime) -> Optional[SimTime]:
        self._prune(t)
        r = self.params.range_m
        busy = None
        for end, start, x, y in self._active:
            if start <= t and math.hypot(x - pos.x, y - pos.y) <= r:
                busy = end if busy is None else max(busy, end)
        return busy

    def draw_backoff(self) -> int:
        return self._rng.randint(0, self.params.max_backoff_us)


def _snap_to_grid(v: float, spacing: float, extent: float) -> float:
    k = int(v / spacing + 0.5)
    return min(max(k * spacing, 0.0), extent)


def place_stations(spec: MobilitySpec, provider, knobs) -> list[BaseStation]:
    """Fixed infrastructure along the scenario geometry.

    Highway: stations on the roadside (y=0) every bs_spacing_m, centered
    in their segment.  Grid: an even tiling snapped to the nearest street
    intersection.  Traces and anything else: an even tiling of the
    bounding box of the recorded positions.
    """
    if spec.mode == MODE_HIGHWAY:
        step = knobs.bs_spacing_m
        xs = []
        x = step / 2
        while x < spec.road_length_m:
            xs.append(x)
            x += step
        if not xs:
            xs = [spec.road_length_m / 2]
        return [BaseStation(i, Position(x, 0.0)) for i, x in enumerate(xs)]
    if spec.mode == MODE_GRID:
        extent = spec.grid_blocks * spec.grid_spacing_m
        n = max(1, math.ceil(extent / knobs.bs_spacing_m))
        centers = {
            _snap_to_grid((i + 0.5) * extent / n, spec.grid_spacing_m, extent)
            for i in range(n)
        }
        stations = []
        for j, y in enumerate(sorted(centers)):
            for i, x in enumerate(sorted(centers)):
                stations.append(BaseStation(j * len(centers) + i, Position(x, y)))
        return stations
    x0, y0, x1, y1 = provider.bounds()
    w, h = x1 - x0, y1 - y0
    nx = max(1, math.ceil(w / knobs.bs_spacing_m))
    ny = max(1, math.ceil(h / knobs.bs_spacing_m))
    stations = []
    for j in range(ny):
        cy = y0 + (j + 0.5) * h / ny if h > 0 else y0
        for i in range(nx):
            cx = x0 + (i + 0.5) * w / nx if w > 0 else x0
            stations.append(BaseStation(j * nx + i, Position(cx, cy)))
    return stations


@dataclass
class _Inject:
    msg_id: int
    src: int


class Runtime:
    """Owns one run: positions, channel, records, and the protocol."""

    def __init__(
        self,
        sim: Simulator,
        cfg: ScenarioConfig,
        spec: MobilitySpec,
        provider,
        obstacles,
        stations: list[BaseStation],
        protocol_name: str,
    ):
        self.sim = sim
        self.cfg = cfg
        self.spec = spec
        self.params = cfg.radio
        self.knobs = cfg.knobs
        self.cloud = cfg.cloud
        self.provider = provider
        self.obstacles = obstacles
        self.stations = stations
        self._station_by_id = {s.station_id: s for s in stations}
        self.index = NeighborIndex(provider, cell_m=max(cfg.radio.range_m, 1.0))
        self.channel = Channel(cfg.radio, sim.rng("radio-backoff"))
        self.loss_rng = sim.rng("radio-loss")
        self.gateway_ids = [v.vehicle_id for v in provider.fleet_at(0) if v.is_gateway]
        self._gateway_info = {
            g: GatewayInfo(g, cfg.knobs.gateway_access_us) for g in self.gateway_ids
        }
        self.records: dict[tuple[int, int], DeliveryRecord] = {}
        self.all_pairs: set[tuple[int, int]] = set()
        self._messages: dict[int, Message] = {}
        self._msg_seq = 0
        self._notes: list[str] = []
        self.end_us: SimTime = 0
        self.protocol = PROTOCOLS[protocol_name](self)

    # -- geometry and lookups ------------------------------------------------

    def pos(self, vehicle_id: int, t: SimTime) -> Position:
        return self.provider.position_at(vehicle_id, t).pos

    def fleet_positions(self, t: SimTime) -> dict[int, Position]:
        return {s.vehicle_id: s.pos for s in self.provider.fleet_at(t)}

    def neighbors(self, center: Position, radius_m: float, t: SimTime) -> list[int]:
        return [
            v
            for v in self.index.candidates(center, radius_m, t)
            if distance(center, self.pos(v, t)) <= radius_m
        ]

    def region_members(self, bs: BaseStation, t: SimTime, exclude: int = -1) -> list[int]:
        return [
            v
            for v in self.neighbors(bs.pos, self.knobs.bs_coverage_m, t)
            if v != exclude
        ]

    def nearest_station(self, pos: Position) -> BaseStation:
        return nearest_station(self.stations, pos)

    def station(self, station_id: int) -> BaseStation:
        return self._station_by_id[station_id]

    def gateway_info(self, gateway_id: int) -> GatewayInfo:
        return self._gateway_info[gateway_id]

    def los(self, a: Position, b: Position) -> bool:
        return line_of_sight(a, b, self.obstacles)

    def tx_time_us(self, size_bytes: Optional[int] = None) -> int:
        return tx_time_us(self.params, size_bytes)

    # -- scheduling helpers ---------------------------------------------------

    def schedule_tx(self, job: TxJob, at: SimTime) -> None:
        self.sim.schedule(at, RADIO_DELIVER, job)

    def schedule_infra(self, job: InfraTx, at: SimTime) -> None:
        self.sim.schedule(at, RADIO_DELIVER, job)

    def schedule_cloud(self, payload, at: SimTime) -> None:
        self.sim.schedule(at, CLOUD_DELIVER, payload)

    # -- delivery accounting ----------------------------------------------------

    def note(self, text: str) -> None:
        self._notes.append(text)

    def is_recorded(self, msg_id: int, dst: int) -> bool:
        return (msg_id, dst) in self.records

    def record_delivery(self, msg: Message, dst: int, recv_us: SimTime, hops: int) -> bool:
        key = (msg.msg_id, dst)
        if key in self.records:
            return False
        self.records[key] = DeliveryRecord(
            msg.msg_id,
            msg.src,
            dst,
            msg.origin_us,
            recv_us=recv_us,
            protocol=self.protocol.name,
            hop_count=hops,
        )
        self.note(f"rec={msg.msg_id}:{dst}:ok:{recv_us}")
        return True

    def record_loss(self, msg: Message, dst: int, cause: str) -> bool:
        key = (msg.msg_id, dst)
        if key in self.records:
            return False
        self.records[key] = DeliveryRecord(
            msg.msg_id,
            msg.src,
            dst,
            msg.origin_us,
            loss_cause=cause,
            protocol=self.protocol.name,
        )
        self.note(f"rec={msg.msg_id}:{dst}:{cause}")
        return True

    def ordered_records(self) -> list[DeliveryRecord]:
        return list(self.records.values())

    # -- setup ------------------------------------------------------------------

    def setup(self) -> None:
        sim = self.sim
        duration_us = _us(self.cfg.sim_duration_s)
        self.end_us = duration_us + _us(self.knobs.drain_s)

        for kind, handler in (
            (MESSAGE_INJECT, self._on_inject),
            (RADIO_DELIVER, self._on_radio),
            (CLOUD_DELIVER, self._on_cloud),
            (MOBILITY_TICK, self._on_tick),
            (FOG_MAINTENANCE, self._on_maintenance),
            (BEACON_EMIT, self._on_beacon),
            (SIM_END, self._on_sim_end),
        ):
            sim.on(kind, self._wrap(handler))

        if self.protocol.wants_maintenance:
            sim.schedule(0, FOG_MAINTENANCE)
        if self.protocol.wants_ticks:
            sim.schedule(_us(self.knobs.mobility_tick_s), MOBILITY_TICK)

        beacon_us = _us(self.knobs.beacon_interval_s)
        if beacon_us > 0:
            phase_rng = sim.rng("beacon-phase")
            for v in self.provider.vehicle_ids:
                sim.schedule(phase_rng.randrange(beacon_us), BEACON_EMIT, BeaconJob(v))

        workload_rng = sim.rng("workload")
        rate = self.cfg.workload.rate_per_s
        n_msgs = int(self.cfg.sim_duration_s * rate + 1e-9)
        n_vehicles = self.provider.vehicle_count
        for k in range(1, n_msgs + 1):
            t_k = _us(k / rate)
            if t_k > duration_us:
                break
            self._msg_seq += 1
            src = workload_rng.randrange(n_vehicles)
            sim.schedule(t_k, MESSAGE_INJECT, _Inject(self._msg_seq, src))

        sim.schedule(self.end_us, SIM_END)

    # -- handlers ---------------------------------------------------------------

    def _wrap(self, fn):
        def handler(event):
            self._notes = []
            base = fn(event)
            if self._notes:
                extra = " ".join(self._notes)
                base = f"{base} {extra}" if base else extra
            return base

        return handler

    def _targets_for(self, src: int, t: SimTime) -> tuple[int, ...]:
        if self.cfg.workload.target_rule == TARGET_EXPLICIT:
            valid = set(self.provider.vehicle_ids)
            wanted = set(self.cfg.workload.explicit_targets)
            return tuple(sorted(v for v in wanted if v in valid and v != src))
        bs = self.nearest_station(self.pos(src, t))
        return tuple(self.region_members(bs, t, exclude=src))

    def _on_inject(self, event) -> str:
        spec: _Inject = event.payload
        t = event.fire_at
        targets = self._targets_for(spec.src, t)
        msg = Message(
            spec.msg_id,
            spec.src,
            t,
            targets,
            size_bytes=self.params.msg_size_bytes,
            ttl_hops=self.knobs.ttl_hops,
        )
        self._messages[msg.msg_id] = msg
        self.all_pairs.update((msg.msg_id, dst) for dst in targets)
        extra = self.protocol.on_inject(msg, t)
        base = f"msg={msg.msg_id} src={msg.src} targets={_fmt_ids(targets)}"
        return f"{base} {extra}" if extra else base

    def _on_radio(self, event) -> str:
        payload = event.payload
        t = event.fire_at
        if isinstance(payload, InfraTx):
            return self._fire_infra(payload, t)
        job: TxJob = payload
        if not job.fire:
            pos = self.pos(job.sender, t)
            busy = self.channel.busy_until_near(pos, t)
            if busy is not None and job.defers < self.params.max_defers:
                job.defers += 1
                self.sim.schedule(busy, RADIO_DELIVER, job)
                return f"defer msg={job.msg.msg_id} from={job.sender} until={busy}"
            job.fire = True
            wait = self.channel.draw_backoff()
            self.sim.schedule(t + wait, RADIO_DELIVER, job)
            return f"wait msg={job.msg.msg_id} from={job.sender} backoff={wait}"
        return self._fire_tx(job, t)

    def _fire_tx(self, job: TxJob, t: SimTime) -> str:
        sender_pos = self.pos(job.sender, t)
        receivers = self.protocol.tx_receivers(job, t)
        results = []
        for rid in receivers:
            rpos = self.pos(rid, t)
            d = distance(sender_pos, rpos)
            if d > self.params.range_m:
                out = HopOutcome(False, loss_cause=OUT_OF_RANGE)
            elif not self.los(sender_pos, rpos):
                out = HopOutcome(False, loss_cause=SHADOWED)
            elif channel_loss(
                self.params, self.channel.concurrent_near(rpos, t), self.loss_rng
            ):
                out = HopOutcome(False, loss_cause=CHANNEL_LOSS)
            else:
                out = HopOutcome(True, delay_us=hop_delay_us(self.params, d, 0))
            results.append((rid, out))
        self.channel.register(
            t, t + self.tx_time_us(job.msg.size_bytes), sender_pos
        )
        return self.protocol.after_tx(job, t, results)

    def _fire_infra(self, job: InfraTx, t: SimTime) -> str:
        bs = self.station(job.bs_id)
        results = []
        for rid in job.receivers:
            rpos = self.pos(rid, t)
            d = distance(bs.pos, rpos)
            if d > self.knobs.bs_coverage_m:
                out = HopOutcome(False, loss_cause=OUT_OF_RANGE)
            elif not self.los(bs.pos, rpos):
                out = HopOutcome(False, loss_cause=SHADOWED)
            else:
                # Scheduled infrastructure downlink: no contention draw.
                out = HopOutcome(True, delay_us=hop_delay_us(self.params, d, 0))
            results.append((rid, out))
        self.channel.register(t, t + self.tx_time_us(job.msg.size_bytes), bs.pos)
        return self.protocol.after_infra(job, t, results)

    def _on_cloud(self, event) -> str:
        return self.protocol.on_cloud(event.payload, event.fire_at)

    def _on_tick(self, event) -> Optional[str]:
        base = self.protocol.on_tick(event.fire_at)
        nxt = event.fire_at + _us(self.knobs.mobility_tick_s)
        if nxt <= self.end_us:
            self.sim.schedule(nxt, MOBILITY_TICK)
        return base

    def _on_maintenance(self, event) -> Optional[str]:
        base = self.protocol.on_maintenance(event.fire_at)
        nxt = event.fire_at + _us(self.knobs.maintenance_interval_s)
        if nxt <= self.end_us:
            self.sim.schedule(nxt, FOG_MAINTENANCE)
        return base

    def _on_beacon(self, event) -> str:
        job: BeaconJob = event.payload
        t = event.fire_at
        v = job.vehicle
        pos = self.pos(v, t)
        base = f"v={v}"
        if self.knobs.include_beacons_in_metrics:
            base = self._metered_beacon(v, pos, t)
        self.channel.register(t, t + self.tx_time_us(), pos)
        nxt = t + _us(self.knobs.beacon_interval_s)
        if nxt <= self.end_us:
            self.sim.schedule(nxt, BEACON_EMIT, job)
        return base

    def _metered_beacon(self, v: int, pos: Position, t: SimTime) -> str:
        cand = [r for r in self.neighbors(pos, self.params.range_m, t) if r != v]
        self._msg_seq += 1
        msg = Message(
            self._msg_seq,
            v,
            t,
            tuple(cand),
            size_bytes=self.params.msg_size_bytes,
            ttl_hops=1,
            kind=KIND_BEACON,
        )
        self._messages[msg.msg_id] = msg
        self.all_pairs.update((msg.msg_id, dst) for dst in cand)
        for rid in cand:
            rpos = self.pos(rid, t)
            d = distance(pos, rpos)
            if not self.los(pos, rpos):
                self.record_loss(msg, rid, SHADOWED)
            elif channel_loss(
                self.params, self.channel.concurrent_near(rpos, t), self.loss_rng
            ):
                self.record_loss(msg, rid, CHANNEL_LOSS)
            else:
                self.record_delivery(msg, rid, t + hop_delay_us(self.params, d, 0), 1)
        return f"v={v} msg={msg.msg_id} targets={_fmt_ids(cand)}"

    def _on_sim_end(self, event) -> str:
        self.protocol.on_end(event.fire_at)
        swept = 0
        for mid, dst in sorted(self.all_pairs):
            if (mid, dst) not in self.records:
                self.record_loss(self._messages[mid], dst, OUT_OF_RANGE)
                swept += 1
        return f"records={len(self.records)} swept={swept}"


@dataclass
class RunResult:
    summary: MetricsSummary
    records: list[DeliveryRecord]
    stats: RunStats
    log: Optional[list[str]]
    audit: list


def run_single(
    cfg: ScenarioConfig,
    protocol: str,
    vehicle_count: int,
    seed: int,
    capture_log: bool = False,
) -> RunResult:
    if protocol not in PROTOCOLS:
        raise ConfigError(f"unknown protocol {protocol!r}")
    spec = dataclasses.replace(cfg.mobility, vehicle_count=vehicle_count)
    log: Optional[list[str]] = [] if capture_log else None
    sim = Simulator(seed=seed, event_budget=cfg.knobs.event_budget, log=log)
    provider = build_provider(spec, sim.rng("mobility"))
    obstacles = cfg.load_obstacles()
    stations = place_stations(spec, provider, cfg.knobs)
    rt = Runtime(sim, cfg, spec, provider, obstacles, stations, protocol)
    rt.setup()
    stats = sim.run(until=rt.end_us)
    if set(rt.records) != rt.all_pairs:
        missing = len(rt.all_pairs.symmetric_difference(rt.records))
        raise SimulationError(
            f"delivery accounting out of balance: {missing} (message, target) "
            f"pairs without exactly one record"
        )
    records = rt.ordered_records()
    summary = summarize(
        records,
        protocol,
        vehicle_count,
        seed,
        window_s=cfg.sim_duration_s,
        msg_size_bytes=cfg.radio.msg_size_bytes,
    )
    audit = getattr(rt.protocol, "audit", [])
    return RunResult(summary, records, stats, log, audit)


def _run_ident(protocol: str, density: int, seed: int) -> str:
    return f"protocol={protocol} density={density} seed={seed}"


def _sweep_task(args) -> MetricsSummary:
    cfg, protocol, density, seed = args
    ident = _run_ident(protocol, density, seed)
    try:
        return run_single(cfg, protocol, density, seed).summary
    except VanetSimError as exc:
        raise type(exc)(f"run {ident}: {exc}") from None
    except Exception as exc:  # pragma: no cover - defensive identification
        raise SimulationError(f"run {ident}: {exc!r}") from exc


def run_sweep(
    cfg: ScenarioConfig,
    workers: int = 1,
    collect_logs: bool = False,
) -> tuple[list[MetricsSummary], Optional[list[tuple[str, list[str]]]]]:
    """Run the full (protocol, density, seed) grid.

    Returns (summaries, logs); logs is None unless collect_logs, which
    forces serial execution so the log order matches the task order.
    """
    tasks = [
        (cfg, protocol, density, seed)
        for protocol in cfg.protocols
        for density in cfg.densities
        for seed in cfg.seeds
    ]
    if collect_logs or workers <= 1:
        summaries = []
        logs: Optional[list[tuple[str, list[str]]]] = [] if collect_logs else None
        for cfg_, protocol, density, seed in tasks:
            ident = _run_ident(protocol, density, seed)
            try:
                result = run_single(cfg_, protocol, density, seed, capture_log=collect_logs)
            except VanetSimError as exc:
                raise type(exc)(f"run {ident}: {exc}") from None
            summaries.append(result.summary)
            if collect_logs:
                logs.append((ident, result.log or []))
        return summaries, logs
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_task, tasks)), None
