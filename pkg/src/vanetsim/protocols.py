"""Dissemination protocols: multi-hop flooding, cloud-assisted gateway
relay for shadowed vehicles, and fog-cell directed dissemination.

Each protocol is driven by a Runtime (see runner.py) that owns the event
loop, the channel, positions and the delivery-record store.  Protocols
receive injected messages, decide who transmits what and when, and are
called back with per-receiver radio outcomes after every transmission
fires.  All iteration is over sorted ids so a given seed always produces
the same event sequence.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .engine import SimTime, US_PER_S
from .mobility import Position, distance
from .radio import (
    CHANNEL_LOSS,
    OUT_OF_RANGE,
    SHADOWED,
    HopOutcome,
    ObstacleMap,
    RadioParams,
    channel_loss,
    hop_delay_us,
    line_of_sight,
)

KIND_BEACON = "beacon"
KIND_EVENT = "event_driven"

# Higher rank wins when several transmissions failed toward the same
# recipient and we must pick a single recorded cause.
_CAUSE_RANK = {OUT_OF_RANGE: 1, SHADOWED: 2, CHANNEL_LOSS: 3}


@dataclass(frozen=True)
class Message:
    msg_id: int
    src: int
    origin_us: SimTime
    targets: tuple[int, ...]
    size_bytes: int = 256
    ttl_hops: int = 8
    kind: str = KIND_EVENT

    def __post_init__(self):
        if self.size_bytes <= 0:
            raise ValueError("message size must be positive")
        if self.ttl_hops < 1:
            raise ValueError("ttl_hops must be >= 1")

    @property
    def target_set(self) -> frozenset:
        return frozenset(self.targets)


@dataclass(frozen=True)
class BaseStation:
    station_id: int
    pos: Position


@dataclass(frozen=True)
class GatewayInfo:
    gateway_id: int
    access_delay_us: SimTime = 5_000
    bandwidth_bps: int = 10_000_000

    def __post_init__(self):
        if self.access_delay_us < 0:
            raise ValueError("access_delay_us must be >= 0")


@dataclass(frozen=True)
class CloudModel:
    """Cloud access latencies; defaults keep the cloud round trip well
    above the fog processing delay."""

    uplink_us: SimTime = 50_000
    downlink_us: SimTime = 50_000
    processing_us: SimTime = 10_000

    def __post_init__(self):
        if min(self.uplink_us, self.downlink_us, self.processing_us) < 0:
            raise ValueError("cloud latencies must be >= 0")


def nearest_station(stations: Sequence[BaseStation], pos: Position) -> BaseStation:
    if not stations:
        raise ValueError("no base stations placed")
    return min(stations, key=lambda s: (distance(s.pos, pos), s.station_id))


def scan_trans_range(
    center: Position, positions: dict[int, Position], radius_m: float, exclude: int = -1
) -> list[int]:
    """Vehicle ids within radius_m of center, sorted, excluding one id."""
    return sorted(
        v for v, p in positions.items() if v != exclude and distance(center, p) <= radius_m
    )


def obstacle_shadowing(vehicle_pos: Position, station_pos: Position, obstacles: ObstacleMap) -> int:
    """1 if the vehicle-to-station segment is blocked, else 0."""
    return 0 if line_of_sight(vehicle_pos, station_pos, obstacles) else 1


def select_gateways(
    shadowed: Sequence[int],
    gateway_ids: Sequence[int],
    positions: dict[int, Position],
    params: RadioParams,
    obstacles: ObstacleMap,
    k_max: int = 4,
) -> tuple[list[int], dict[int, list[int]]]:
    """Greedy maximum-coverage pick of at most k_max gateways.

    A gateway covers a shadowed vehicle when the vehicle is within radio
    range and line of sight of it.  Ties go to the smaller gateway id;
    selection stops when everyone is covered, no gateway adds coverage,
    or k_max picks were made.  Returns (chosen ids in pick order,
    coverage sets for every candidate gateway).
    """
    covers: dict[int, list[int]] = {}
    for g in sorted(gateway_ids):
        gpos = positions[g]
        covers[g] = sorted(
            v
            for v in shadowed
            if v != g
            and distance(gpos, positions[v]) <= params.range_m
            and line_of_sight(gpos, positions[v], obstacles)
        )
    chosen: list[int] = []
    uncovered = set(shadowed)
    while uncovered and len(chosen) < k_max:
        best_id = -1
        best_gain = 0
        for g in sorted(covers):
            if g in chosen:
                continue
            gain = sum(1 for v in covers[g] if v in uncovered)
            if gain > best_gain:
                best_id, best_gain = g, gain
        if best_gain == 0:
            break
        chosen.append(best_id)
        uncovered.difference_update(covers[best_id])
    return chosen, covers


# ---------------------------------------------------------------------------
# Event payloads

@dataclass
class TxJob:
    """A vehicle transmission going through carrier sense and backoff.

    receivers=None means broadcast to whoever the protocol finds in range
    at fire time; an explicit list is an addressed delivery attempt whose
    misses must be accounted for.
    """

    msg: Message
    sender: int
    hop: int
    purpose: str  # flood | direct | gateway | newcomer
    receivers: Optional[list[int]] = None
    defers: int = 0
    fire: bool = False


@dataclass
class InfraTx:
    """Downlink broadcast from a base station to listed vehicles."""

    msg: Message
    bs_id: int
    receivers: list[int]
    targets: frozenset


@dataclass
class GatewayDrop:
    """Cloud handing a message to a gateway for local rebroadcast."""

    msg: Message
    gateway: int
    receivers: list[int]


@dataclass
class FogDrop:
    """Cloud/fog handing a message to a base station for downlink."""

    msg: Message
    bs_id: int
    receivers: list[int]
    targets: frozenset


@dataclass
class BeaconJob:
    vehicle: int


class Protocol:
    """Shared callbacks; the Runtime dispatches events to these."""

    name = "?"
    wants_ticks = False
    wants_maintenance = False

    def __init__(self, rt):
        self.rt = rt

    def on_inject(self, msg: Message, t: SimTime) -> str:
        raise NotImplementedError

    def tx_receivers(self, job: TxJob, t: SimTime) -> list[int]:
        raise NotImplementedError

    def after_tx(self, job: TxJob, t: SimTime, results) -> str:
        raise NotImplementedError

    def on_cloud(self, payload, t: SimTime) -> str:
        raise NotImplementedError

    def after_infra(self, job: InfraTx, t: SimTime, results) -> str:
        raise NotImplementedError

    def on_tick(self, t: SimTime) -> Optional[str]:
        return None

    def on_maintenance(self, t: SimTime) -> Optional[str]:
        return None

    def on_end(self, t: SimTime) -> None:
        return None


def _fmt_ids(ids) -> str:
    return ",".join(str(i) for i in ids)


class BaselineFlood(Protocol):
    """Multi-hop flood: every first-time recipient rebroadcasts once.

    Losses are provisional until the flood dies out: a target missed by
    one relay may still be reached by another, so causes are noted with
    a severity rank and only recorded when no transmission is pending.
    """

    name = "baseline"

    def __init__(self, rt):
        super().__init__(rt)
        self._seen: dict[int, set] = {}
        self._pending: dict[int, int] = {}
        self._noted: dict[tuple[int, int], str] = {}
        self._msgs: dict[int, Message] = {}

    def on_inject(self, msg: Message, t: SimTime) -> str:
        self._msgs[msg.msg_id] = msg
        self._seen[msg.msg_id] = {msg.src}
        self._pending[msg.msg_id] = 1
        start = t + self.rt.knobs.route_setup_delay_us
        self.rt.schedule_tx(TxJob(msg, msg.src, hop=1, purpose="flood"), start)
        return f"flood start={start}"

    def tx_receivers(self, job: TxJob, t: SimTime) -> list[int]:
        seen = self._seen[job.msg.msg_id]
        pos = self.rt.pos(job.sender, t)
        cand = self.rt.neighbors(pos, self.rt.params.range_m, t)
        return [v for v in cand if v != job.sender and v not in seen]

    def after_tx(self, job: TxJob, t: SimTime, results) -> str:
        msg = job.msg
        mid = msg.msg_id
        seen = self._seen[mid]
        targets = msg.target_set
        relays = 0
        delivered = 0
        for rid, out in results:
            if out.delivered:
                recv = t + out.delay_us
                seen.add(rid)
                delivered += 1
                if rid in targets and not self.rt.is_recorded(mid, rid):
                    self.rt.record_delivery(msg, rid, recv, job.hop)
                if job.hop < msg.ttl_hops:
                    self._pending[mid] += 1
                    self.rt.schedule_tx(
                        TxJob(msg, rid, hop=job.hop + 1, purpose="flood"), recv
                    )
                    relays += 1
            elif rid in targets and not self.rt.is_recorded(mid, rid):
                self._note_cause(mid, rid, out.loss_cause)
        self._pending[mid] -= 1
        tail = ""
        if self._pending[mid] == 0:
            self._finalize(mid)
            tail = " final"
        return f"tx msg={mid} from={job.sender} hop={job.hop} ok={delivered} relay={relays}{tail}"

    def _note_cause(self, mid: int, dst: int, cause: str):
        prev = self._noted.get((mid, dst))
        if prev is None or _CAUSE_RANK[cause] > _CAUSE_RANK[prev]:
            self._noted[(mid, dst)] = cause

    def _finalize(self, mid: int):
        msg = self._msgs[mid]
        for dst in msg.targets:
            if not self.rt.is_recorded(mid, dst):
                cause = self._noted.get((mid, dst), OUT_OF_RANGE)
                self.rt.record_loss(msg, dst, cause)

    def on_end(self, t: SimTime) -> None:
        # Floods cut off by the horizon finalize with what was noted.
        for mid, n in self._pending.items():
            if n > 0:
                self._finalize(mid)
                self._pending[mid] = 0


@dataclass
class _HybridState:
    msg: Message
    bs: BaseStation
    loc: dict[int, int]
    window_end: SimTime
    handled: set = field(default_factory=set)
    chances: dict[int, int] = field(default_factory=dict)
    uplink: str = "none"  # none | ok | failed
    fail_cause: str = SHADOWED
    cloud_ready: SimTime = 0


class HybridVehcloud(Protocol):
    """Direct broadcast for line-of-sight vehicles; shadowed ones get the
    message through the vehicular cloud via selected mobile gateways.

    Late joiners entering the sender's region during the dissemination
    window get a one-shot re-delivery down whichever branch applies.
    """

    name = "hybrid_vehcloud"
    wants_ticks = True

    def __init__(self, rt):
        super().__init__(rt)
        self._live: dict[int, _HybridState] = {}
        self._seen: dict[int, set] = {}
        self._noted: dict[tuple[int, int], str] = {}

    # -- injection -----------------------------------------------------

    def on_inject(self, msg: Message, t: SimTime) -> str:
        rt = self.rt
        src_pos = rt.pos(msg.src, t)
        bs = rt.nearest_station(src_pos)
        region = rt.region_members(bs, t, exclude=msg.src)
        window_us = int(rt.knobs.window_s * US_PER_S)
        loc = {
            v: obstacle_shadowing(rt.pos(v, t), bs.pos, rt.obstacles) for v in region
        }
        st = _HybridState(msg, bs, loc, window_end=t + window_us)
        st.handled = set(region)
        st.handled.add(msg.src)
        self._live[msg.msg_id] = st
        self._seen[msg.msg_id] = {msg.src}
        if not region:
            # Nobody around the sender's station: nothing to transmit.
            self._drop_if_done(msg.msg_id, t)
            return f"bs={bs.station_id} n=0 no nearby vehicles"

        rt.schedule_tx(TxJob(msg, msg.src, hop=1, purpose="direct"), t)
        shadowed = sorted(v for v in region if loc[v] == 1)
        if shadowed:
            self._cloud_round(st, shadowed, t)
        return f"bs={bs.station_id} n={len(region)} shadowed={len(shadowed)}"

    def _cloud_round(self, st: _HybridState, shadowed: list[int], t: SimTime):
        """Uplink once, pick gateways over this shadowed batch, schedule drops."""
        rt = self.rt
        msg = st.msg
        targets = msg.target_set
        self._establish_uplink(st, t)
        if st.uplink == "failed":
            for v in shadowed:
                if v in targets and not rt.is_recorded(msg.msg_id, v):
                    rt.record_loss(msg, v, st.fail_cause)
            return
        positions = {v: rt.pos(v, t) for v in shadowed}
        gws = [g for g in rt.gateway_ids if g != msg.src]
        for g in gws:
            positions[g] = rt.pos(g, t)
        chosen, covers = select_gateways(
            shadowed, gws, positions, rt.params, rt.obstacles, rt.knobs.k_max_gateways
        )
        covered_count = {v: 0 for v in shadowed}
        for g in chosen:
            for v in covers[g]:
                covered_count[v] += 1
        for v in shadowed:
            if v in targets and not rt.is_recorded(msg.msg_id, v):
                if covered_count[v] == 0:
                    rt.record_loss(msg, v, SHADOWED)
                else:
                    st.chances[v] = st.chances.get(v, 0) + covered_count[v]
        for g in chosen:
            if not covers[g]:
                continue
            arrive = (
                max(t, st.cloud_ready)
                + rt.cloud.downlink_us
                + rt.gateway_info(g).access_delay_us
            )
            rt.schedule_cloud(GatewayDrop(msg, g, covers[g]), arrive)
        rt.note(f"gw={_fmt_ids(chosen)}")

    def _establish_uplink(self, st: _HybridState, t: SimTime):
        if st.uplink != "none":
            return
        rt = self.rt
        src_pos = rt.pos(st.msg.src, t)
        best = None
        for g in rt.gateway_ids:
            if g == st.msg.src:
                continue
            gpos = rt.pos(g, t)
            d = distance(src_pos, gpos)
            if d <= rt.params.range_m and rt.los(src_pos, gpos):
                if best is None or (d, g) < (best[0], best[1]):
                    best = (d, g, gpos)
        if best is not None:
            d, g, gpos = best
            backoff = rt.channel.draw_backoff()
            concurrent = rt.channel.concurrent_near(gpos, t)
            if channel_loss(rt.params, concurrent, rt.loss_rng):
                st.uplink = "failed"
                st.fail_cause = CHANNEL_LOSS
                rt.note(f"uplink=lost:{g}")
                return
            hop = hop_delay_us(rt.params, d, backoff)
            st.uplink = "ok"
            st.cloud_ready = t + hop + rt.cloud.uplink_us + rt.cloud.processing_us
            rt.note(f"uplink=gw:{g}")
            return
        # No gateway in reach: try the station itself as the entry point.
        d_bs = distance(src_pos, st.bs.pos)
        if d_bs <= rt.knobs.bs_coverage_m and rt.los(src_pos, st.bs.pos):
            backoff = rt.channel.draw_backoff()
            hop = hop_delay_us(rt.params, d_bs, backoff)
            st.uplink = "ok"
            st.cloud_ready = t + hop + rt.cloud.uplink_us + rt.cloud.processing_us
            rt.note("uplink=bs")
        else:
            st.uplink = "failed"
            st.fail_cause = SHADOWED
            rt.note("uplink=none")

    # -- transmissions ---------------------------------------------------

    def _loc_of(self, st: _HybridState, v: int, t: SimTime) -> int:
        if v in st.loc:
            return st.loc[v]
        return obstacle_shadowing(self.rt.pos(v, t), st.bs.pos, self.rt.obstacles)

    def tx_receivers(self, job: TxJob, t: SimTime) -> list[int]:
        rt = self.rt
        mid = job.msg.msg_id
        seen = self._seen[mid]
        st = self._live.get(mid)
        if job.purpose == "direct":
            pos = rt.pos(job.sender, t)
            cand = rt.neighbors(pos, rt.params.range_m, t)
            out = {
                v
                for v in cand
                if v != job.sender and v not in seen and self._loc_of(st, v, t) == 0
            }
            # Addressed line-of-sight targets beyond range must still be
            # accounted for, so they join the evaluation explicitly.
            for v in job.msg.targets:
                if v not in seen and st.loc.get(v) == 0:
                    out.add(v)
            return sorted(out)
        return [v for v in (job.receivers or []) if v not in seen]

    def after_tx(self, job: TxJob, t: SimTime, results) -> str:
        msg = job.msg
        mid = msg.msg_id
        rt = self.rt
        seen = self._seen[mid]
        targets = msg.target_set
        st = self._live.get(mid)
        delivered = 0
        for rid, out in results:
            if out.delivered:
                seen.add(rid)
                delivered += 1
                if rid in targets and not rt.is_recorded(mid, rid):
                    rt.record_delivery(msg, rid, t + out.delay_us, job.hop)
                if st is not None:
                    st.chances.pop(rid, None)
                continue
            if rid not in targets or rt.is_recorded(mid, rid):
                continue
            if job.purpose == "direct":
                # One shot for line-of-sight vehicles: the miss is final.
                rt.record_loss(msg, rid, out.loss_cause)
            elif job.purpose == "gateway":
                self._note_cause(mid, rid, out.loss_cause)
                if st is not None and rid in st.chances:
                    st.chances[rid] -= 1
                    if st.chances[rid] <= 0:
                        rt.record_loss(msg, rid, self._noted[(mid, rid)])
        self._drop_if_done(mid, t)
        return f"tx msg={mid} from={job.sender} purpose={job.purpose} ok={delivered}"

    def _note_cause(self, mid: int, dst: int, cause: str):
        prev = self._noted.get((mid, dst))
        if prev is None or _CAUSE_RANK[cause] > _CAUSE_RANK[prev]:
            self._noted[(mid, dst)] = cause

    def on_cloud(self, payload, t: SimTime) -> str:
        drop: GatewayDrop = payload
        self.rt.schedule_tx(
            TxJob(drop.msg, drop.gateway, hop=2, purpose="gateway", receivers=drop.receivers),
            t,
        )
        return f"msg={drop.msg.msg_id} gw={drop.gateway} n={len(drop.receivers)}"

    # -- late joiners ------------------------------------------------------

    def on_tick(self, t: SimTime) -> Optional[str]:
        rt = self.rt
        attempts = 0
        for mid in sorted(self._live):
            st = self._live[mid]
            if t > st.window_end:
                continue
            current = rt.region_members(st.bs, t, exclude=st.msg.src)
            fresh = sorted(set(current) - st.handled)
            if not fresh:
                continue
            st.handled.update(fresh)
            seen = self._seen[mid]
            late_shadowed = []
            for v in fresh:
                if v in seen:
                    continue
                if obstacle_shadowing(rt.pos(v, t), st.bs.pos, rt.obstacles) == 0:
                    rt.schedule_tx(
                        TxJob(st.msg, st.msg.src, hop=1, purpose="newcomer", receivers=[v]),
                        t,
                    )
                    attempts += 1
                else:
                    late_shadowed.append(v)
            if late_shadowed:
                self._establish_uplink(st, t)
                if st.uplink != "ok":
                    continue
                for v in late_shadowed:
                    g = self._covering_gateway(st, v, t)
                    if g is None:
                        continue
                    arrive = (
                        max(t, st.cloud_ready)
                        + rt.cloud.downlink_us
                        + rt.gateway_info(g).access_delay_us
                    )
                    rt.schedule_cloud(GatewayDrop(st.msg, g, [v]), arrive)
                    attempts += 1
        self._expire(t)
        return f"late_attempts={attempts}" if attempts else None

    def _covering_gateway(self, st: _HybridState, v: int, t: SimTime) -> Optional[int]:
        rt = self.rt
        vpos = rt.pos(v, t)
        best = None
        for g in rt.gateway_ids:
            if g in (v, st.msg.src):
                continue
            gpos = rt.pos(g, t)
            d = distance(gpos, vpos)
            if d <= rt.params.range_m and rt.los(gpos, vpos):
                if best is None or (d, g) < (best[0], best[1]):
                    best = (d, g)
        return None if best is None else best[1]

    def _expire(self, t: SimTime):
        for mid in sorted(self._live):
            if t > self._live[mid].window_end:
                self._drop_if_done(mid, t, force=True)

    def _drop_if_done(self, mid: int, t: SimTime, force: bool = False):
        st = self._live.get(mid)
        if st is None:
            return
        if force or (t > st.window_end and not st.chances):
            self._live.pop(mid, None)

    def on_end(self, t: SimTime) -> None:
        self._live.clear()


class Dfcv(Protocol):
    """Fog-cell dissemination: base stations keep their vehicles grouped
    into bounded cells; a sender hands the message to its fog node which
    broadcasts to every cell intersecting the target set, crossing the
    cloud for recipients parked under other stations."""

    name = "dfcv"
    wants_maintenance = True

    def __init__(self, rt):
        super().__init__(rt)
        self._cells: dict[int, list] = {}
        self._assoc: dict[int, Optional[int]] = {}
        self._cell_seq = itertools.count(1)
        self.audit: list[tuple[SimTime, int, int, int]] = []

    # -- membership upkeep -------------------------------------------------

    def maintain(self, t: SimTime) -> tuple[int, int]:
        """Re-associate vehicles, reconcile cells, split/merge to fixed point.

        Returns (total cells, total maintenance steps) across stations.
        """
        from .fog import FogCell, nearest_to_centroid, run_maintenance, check_partition

        rt = self.rt
        positions = rt.fleet_positions(t)
        assoc: dict[int, Optional[int]] = {}
        by_bs: dict[int, list[int]] = {s.station_id: [] for s in rt.stations}
        for v in sorted(positions):
            bs = rt.nearest_station(positions[v])
            if distance(bs.pos, positions[v]) <= rt.knobs.bs_coverage_m:
                assoc[v] = bs.station_id
                by_bs[bs.station_id].append(v)
            else:
                assoc[v] = None
        self._assoc = assoc

        total_cells = 0
        total_steps = 0
        th_cap = rt.knobs.th_cap
        d_min = rt.knobs.d_min_m
        for bs_id in sorted(by_bs):
            current = by_bs[bs_id]
            current_set = set(current)
            cells = self._cells.get(bs_id, [])
            kept = []
            claimed = set()
            for cell in cells:
                members = [m for m in cell.members if m in current_set]
                if not members:
                    continue
                cell.members = members
                if cell.anchor not in current_set:
                    cell.anchor = nearest_to_centroid(members, positions)
                claimed.update(members)
                kept.append(cell)
            for v in current:
                if v in claimed:
                    continue
                if kept:
                    home = min(
                        kept,
                        key=lambda c: (distance(positions[c.anchor], positions[v]), c.cell_id),
                    )
                    home.members = sorted(home.members + [v])
                else:
                    kept.append(
                        FogCell(
                            cell_id=next(self._cell_seq),
                            base_station_id=bs_id,
                            anchor=v,
                            members=[v],
                            threshold=th_cap,
                        )
                    )
            kept, steps = run_maintenance(
                kept, positions, d_min, th_cap, lambda: next(self._cell_seq)
            )
            check_partition(kept, current_set, th_cap)
            self._cells[bs_id] = kept
            self.audit.append((t, bs_id, steps, len(kept)))
            total_cells += len(kept)
            total_steps += steps
        return total_cells, total_steps

    def on_maintenance(self, t: SimTime) -> Optional[str]:
        cells, steps = self.maintain(t)
        return f"cells={cells} steps={steps}"

    # -- dissemination -------------------------------------------------------

    def on_inject(self, msg: Message, t: SimTime) -> str:
        rt = self.rt
        self.maintain(t)
        src_bs_id = self._assoc.get(msg.src)
        if src_bs_id is None:
            for dst in msg.targets:
                rt.record_loss(msg, dst, OUT_OF_RANGE)
            return "sender outside coverage"
        bs = rt.station(src_bs_id)
        src_pos = rt.pos(msg.src, t)
        if not rt.los(src_pos, bs.pos):
            for dst in msg.targets:
                rt.record_loss(msg, dst, SHADOWED)
            return f"bs={src_bs_id} uplink shadowed"

        backoff = rt.channel.draw_backoff()
        up_delay = hop_delay_us(rt.params, distance(src_pos, bs.pos), backoff)
        rt.channel.register(t, t + rt.tx_time_us(msg.size_bytes), src_pos)
        fog_ready = t + up_delay + rt.knobs.fog_processing_us

        by_bs: dict[int, list[int]] = {}
        for dst in msg.targets:
            dst_bs = self._assoc.get(dst)
            if dst_bs is None:
                rt.record_loss(msg, dst, OUT_OF_RANGE)
            else:
                by_bs.setdefault(dst_bs, []).append(dst)
        hops = 0
        for bs_id in sorted(by_bs):
            wanted = set(by_bs[bs_id])
            receivers: set = set()
            for cell in self._cells.get(bs_id, []):
                if wanted.intersection(cell.members):
                    receivers.update(cell.members)
            if bs_id == src_bs_id:
                at = fog_ready
            else:
                at = (
                    fog_ready
                    + rt.cloud.uplink_us
                    + rt.cloud.processing_us
                    + rt.cloud.downlink_us
                    + rt.knobs.fog_processing_us
                )
            rt.schedule_cloud(
                FogDrop(msg, bs_id, sorted(receivers), frozenset(wanted)), at
            )
            hops += 1
        return f"bs={src_bs_id} ready={fog_ready} drops={hops}"

    def on_cloud(self, payload, t: SimTime) -> str:
        drop: FogDrop = payload
        self.rt.schedule_infra(
            InfraTx(drop.msg, drop.bs_id, drop.receivers, drop.targets), t
        )
        return f"msg={drop.msg.msg_id} bs={drop.bs_id} n={len(drop.receivers)}"

    def after_infra(self, job: InfraTx, t: SimTime, results) -> str:
        rt = self.rt
        msg = job.msg
        delivered = 0
        for rid, out in results:
            if rid in job.targets and not rt.is_recorded(msg.msg_id, rid):
                if out.delivered:
                    rt.record_delivery(msg, rid, t + out.delay_us, 2)
                else:
                    rt.record_loss(msg, rid, out.loss_cause)
            if out.delivered:
                delivered += 1
        return f"i2v msg={msg.msg_id} bs={job.bs_id} ok={delivered}"

    def tx_receivers(self, job: TxJob, t: SimTime) -> list[int]:  # pragma: no cover
        return []

    def after_tx(self, job: TxJob, t: SimTime, results) -> str:  # pragma: no cover
        return ""


PROTOCOLS = {
    BaselineFlood.name: BaselineFlood,
    HybridVehcloud.name: HybridVehcloud,
    Dfcv.name: Dfcv,
}
