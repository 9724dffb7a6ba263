"""Scenario configuration: JSON schema, defaults, strict validation.

An empty config object is a complete, runnable scenario (300 m radio at
2 Mbps, 256 B messages, a 10 km highway, densities 50..450, one seed).
Unknown keys are rejected with their full key path so typos never pass
silently.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from typing import Any, Optional

from .engine import DEFAULT_EVENT_BUDGET
from .errors import ConfigError
from .mobility import MAX_VEHICLES, MobilitySpec
from .protocols import PROTOCOLS, CloudModel, KIND_EVENT
from .radio import EMPTY_MAP, ObstacleMap, RadioParams

TARGET_BS_REGION = "bs_region"
TARGET_EXPLICIT = "explicit"

DEFAULT_DENSITIES = (50, 150, 250, 350, 450)


@dataclass(frozen=True)
class WorkloadSpec:
    rate_per_s: float = 1.0
    kind: str = KIND_EVENT
    target_rule: str = TARGET_BS_REGION
    explicit_targets: tuple[int, ...] = ()

    def __post_init__(self):
        if self.rate_per_s <= 0:
            raise ConfigError("workload.rate_per_s: must be positive")
        if self.kind != KIND_EVENT:
            raise ConfigError(f"workload.kind: unsupported kind {self.kind!r}")
        if self.target_rule not in (TARGET_BS_REGION, TARGET_EXPLICIT):
            raise ConfigError(f"workload.target_rule: unknown rule {self.target_rule!r}")
        if self.target_rule == TARGET_EXPLICIT and not self.explicit_targets:
            raise ConfigError("workload.explicit_targets: required for explicit targeting")


@dataclass(frozen=True)
class ProtocolKnobs:
    ttl_hops: int = 8
    route_setup_delay_us: int = 0
    bs_spacing_m: float = 2_000.0
    bs_coverage_m: float = 1_000.0
    k_max_gateways: int = 4
    window_s: float = 5.0
    gateway_access_us: int = 5_000
    fog_processing_us: int = 5_000
    d_min_m: float = 300.0
    th_cap: int = 20
    maintenance_interval_s: float = 1.0
    mobility_tick_s: float = 1.0
    beacon_interval_s: float = 0.1  # 0 turns beacons off
    include_beacons_in_metrics: bool = False
    drain_s: float = 2.0
    event_budget: int = DEFAULT_EVENT_BUDGET

    def __post_init__(self):
        if self.ttl_hops < 1:
            raise ConfigError("knobs.ttl_hops: must be at least 1")
        if self.route_setup_delay_us < 0:
            raise ConfigError("knobs.route_setup_delay_us: must be non-negative")
        if self.bs_spacing_m <= 0:
            raise ConfigError("knobs.bs_spacing_m: must be positive")
        if self.bs_coverage_m <= 0:
            raise ConfigError("knobs.bs_coverage_m: must be positive")
        if self.k_max_gateways < 1:
            raise ConfigError("knobs.k_max_gateways: must be at least 1")
        if self.window_s < 0:
            raise ConfigError("knobs.window_s: must be non-negative")
        if self.gateway_access_us < 0:
            raise ConfigError("knobs.gateway_access_us: must be non-negative")
        if self.fog_processing_us < 0:
            raise ConfigError("knobs.fog_processing_us: must be non-negative")
        if self.d_min_m <= 0:
            raise ConfigError("knobs.d_min_m: must be positive")
        if self.th_cap < 1:
            raise ConfigError("knobs.th_cap: must be at least 1")
        if self.maintenance_interval_s <= 0:
            raise ConfigError("knobs.maintenance_interval_s: must be positive")
        if self.mobility_tick_s <= 0:
            raise ConfigError("knobs.mobility_tick_s: must be positive")
        if self.beacon_interval_s < 0:
            raise ConfigError("knobs.beacon_interval_s: must be non-negative")
        if self.drain_s < 0:
            raise ConfigError("knobs.drain_s: must be non-negative")
        if self.event_budget < 1:
            raise ConfigError("knobs.event_budget: must be at least 1")


@dataclass
class ScenarioConfig:
    mobility: MobilitySpec = dataclasses.field(default_factory=MobilitySpec)
    radio: RadioParams = dataclasses.field(default_factory=RadioParams)
    cloud: CloudModel = dataclasses.field(default_factory=CloudModel)
    workload: WorkloadSpec = dataclasses.field(default_factory=WorkloadSpec)
    knobs: ProtocolKnobs = dataclasses.field(default_factory=ProtocolKnobs)
    obstacle_path: Optional[str] = None
    obstacle_rects: tuple[tuple[float, float, float, float], ...] = ()
    protocols: tuple[str, ...] = tuple(sorted(PROTOCOLS))
    densities: tuple[int, ...] = DEFAULT_DENSITIES
    seeds: tuple[int, ...] = (1,)
    sim_duration_s: float = 30.0

    def __post_init__(self):
        if not self.protocols:
            raise ConfigError("protocols: must name at least one protocol")
        for name in self.protocols:
            if name not in PROTOCOLS:
                raise ConfigError(
                    f"protocols: unknown protocol {name!r} "
                    f"(choose from {', '.join(sorted(PROTOCOLS))})"
                )
        if not self.densities:
            raise ConfigError("densities: must not be empty")
        for d in self.densities:
            if not 1 <= d <= MAX_VEHICLES:
                raise ConfigError(f"densities: {d} outside [1, {MAX_VEHICLES}]")
        if not self.seeds:
            raise ConfigError("seeds: must not be empty")
        for s in self.seeds:
            if not 0 <= s < 2**64:
                raise ConfigError(f"seeds: {s} does not fit in 64 bits")
        if self.sim_duration_s <= 0:
            raise ConfigError("sim_duration_s: must be positive")
        if self.obstacle_path is not None and self.obstacle_rects:
            raise ConfigError("obstacles: give a path or inline rectangles, not both")

    def load_obstacles(self) -> ObstacleMap:
        if self.obstacle_path is not None:
            return ObstacleMap.load(self.obstacle_path)
        if self.obstacle_rects:
            return ObstacleMap(list(self.obstacle_rects))
        return EMPTY_MAP

    def to_dict(self) -> dict:
        obstacles: Any
        if self.obstacle_path is not None:
            obstacles = self.obstacle_path
        elif self.obstacle_rects:
            obstacles = [list(r) for r in self.obstacle_rects]
        else:
            obstacles = None
        return {
            "mobility": {
                "mode": self.mobility.mode,
                "vehicle_count": self.mobility.vehicle_count,
                "road_length_m": self.mobility.road_length_m,
                "lanes": self.mobility.lanes,
                "speed_range_mph": list(self.mobility.speed_range_mph),
                "trace_path": self.mobility.trace_path,
                "grid_blocks": self.mobility.grid_blocks,
                "grid_spacing_m": self.mobility.grid_spacing_m,
                "gateway_fraction": self.mobility.gateway_fraction,
            },
            "radio": dataclasses.asdict(self.radio),
            "cloud": dataclasses.asdict(self.cloud),
            "workload": {
                "rate_per_s": self.workload.rate_per_s,
                "kind": self.workload.kind,
                "target_rule": self.workload.target_rule,
                "explicit_targets": list(self.workload.explicit_targets),
            },
            "knobs": dataclasses.asdict(self.knobs),
            "obstacles": obstacles,
            "protocols": list(self.protocols),
            "densities": list(self.densities),
            "seeds": list(self.seeds),
            "sim_duration_s": self.sim_duration_s,
        }


def _check_keys(section: dict, path: str, allowed) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}: unknown key" if path else f"{key}: unknown key")


def _expect(value, types, path: str):
    # bool is an int subtype; keep the two apart for numeric fields.
    if isinstance(value, bool) and bool not in (
        types if isinstance(types, tuple) else (types,)
    ):
        raise ConfigError(f"{path}: expected a number, got a boolean")
    if not isinstance(value, types):
        raise ConfigError(f"{path}: unexpected type {type(value).__name__}")
    return value


def _int(value, path: str) -> int:
    return int(_expect(value, int, path))


def _num(value, path: str) -> float:
    return float(_expect(value, (int, float), path))


def _str(value, path: str) -> str:
    return _expect(value, str, path)


def _bool(value, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{path}: expected true or false")
    return value


def _int_list(value, path: str) -> tuple[int, ...]:
    _expect(value, list, path)
    return tuple(_int(v, f"{path}[{i}]") for i, v in enumerate(value))


_TYPED_FIELDS = {
    MobilitySpec: {
        "mode": _str,
        "vehicle_count": _int,
        "road_length_m": _num,
        "lanes": _int,
        "grid_blocks": _int,
        "grid_spacing_m": _num,
        "gateway_fraction": _num,
    },
    RadioParams: {
        "range_m": _num,
        "data_rate_bps": _int,
        "msg_size_bytes": _int,
        "prop_speed_mps": _num,
        "base_loss": _num,
        "loss_slope": _num,
        "max_backoff_us": _int,
        "max_defers": _int,
    },
    CloudModel: {"uplink_us": _int, "downlink_us": _int, "processing_us": _int},
    WorkloadSpec: {"rate_per_s": _num, "kind": _str, "target_rule": _str},
    ProtocolKnobs: {
        "ttl_hops": _int,
        "route_setup_delay_us": _int,
        "bs_spacing_m": _num,
        "bs_coverage_m": _num,
        "k_max_gateways": _int,
        "window_s": _num,
        "gateway_access_us": _int,
        "fog_processing_us": _int,
        "d_min_m": _num,
        "th_cap": _int,
        "maintenance_interval_s": _num,
        "mobility_tick_s": _num,
        "beacon_interval_s": _num,
        "include_beacons_in_metrics": _bool,
        "drain_s": _num,
        "event_budget": _int,
    },
}


def _build_section(cls, data, path: str, extra: Optional[dict] = None):
    _expect(data, dict, path)
    _check_keys(data, path, {f.name for f in dataclasses.fields(cls)})
    kwargs = dict(extra or {})
    typed = _TYPED_FIELDS.get(cls, {})
    for name, raw in data.items():
        if name in kwargs:
            continue
        key = f"{path}.{name}"
        if name in typed:
            kwargs[name] = typed[name](raw, key)
        else:
            kwargs[name] = raw
    return cls(**kwargs)


def from_dict(data: dict, base_dir: str = ".") -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys(
        data,
        "",
        {
            "mobility",
            "radio",
            "cloud",
            "workload",
            "knobs",
            "obstacles",
            "protocols",
            "densities",
            "seeds",
            "sim_duration_s",
        },
    )
    mobility_raw = dict(_expect(data.get("mobility", {}), dict, "mobility"))
    speed = mobility_raw.pop("speed_range_mph", None)
    mob_extra = {}
    if speed is not None:
        _expect(speed, list, "mobility.speed_range_mph")
        if len(speed) != 2:
            raise ConfigError("mobility.speed_range_mph: expected [min, max]")
        mob_extra["speed_range_mph"] = (
            _num(speed[0], "mobility.speed_range_mph[0]"),
            _num(speed[1], "mobility.speed_range_mph[1]"),
        )
    trace = mobility_raw.get("trace_path")
    if trace is not None:
        mobility_raw["trace_path"] = _resolve(_str(trace, "mobility.trace_path"), base_dir)
    mobility = _build_section(MobilitySpec, mobility_raw, "mobility", mob_extra)

    radio = _build_section(RadioParams, data.get("radio", {}), "radio")
    cloud = _build_section(CloudModel, data.get("cloud", {}), "cloud")

    workload_raw = dict(_expect(data.get("workload", {}), dict, "workload"))
    wl_extra = {}
    if "explicit_targets" in workload_raw:
        wl_extra["explicit_targets"] = _int_list(
            workload_raw.pop("explicit_targets"), "workload.explicit_targets"
        )
    workload = _build_section(WorkloadSpec, workload_raw, "workload", wl_extra)

    knobs = _build_section(ProtocolKnobs, data.get("knobs", {}), "knobs")

    obstacle_path = None
    obstacle_rects: tuple = ()
    obstacles = data.get("obstacles")
    if isinstance(obstacles, str):
        obstacle_path = _resolve(obstacles, base_dir)
    elif isinstance(obstacles, list):
        rects = []
        for i, rect in enumerate(obstacles):
            _expect(rect, list, f"obstacles[{i}]")
            if len(rect) != 4:
                raise ConfigError(f"obstacles[{i}]: expected [x_min, y_min, x_max, y_max]")
            rects.append(tuple(_num(v, f"obstacles[{i}][{j}]") for j, v in enumerate(rect)))
        obstacle_rects = tuple(rects)
    elif obstacles is not None:
        raise ConfigError("obstacles: expected a path, a list of rectangles, or null")

    kwargs: dict = {}
    if "protocols" in data:
        names = _expect(data["protocols"], list, "protocols")
        kwargs["protocols"] = tuple(_str(n, f"protocols[{i}]") for i, n in enumerate(names))
    if "densities" in data:
        kwargs["densities"] = _int_list(data["densities"], "densities")
    if "seeds" in data:
        kwargs["seeds"] = _int_list(data["seeds"], "seeds")
    if "sim_duration_s" in data:
        kwargs["sim_duration_s"] = _num(data["sim_duration_s"], "sim_duration_s")

    cfg = ScenarioConfig(
        mobility=mobility,
        radio=radio,
        cloud=cloud,
        workload=workload,
        knobs=knobs,
        obstacle_path=obstacle_path,
        obstacle_rects=obstacle_rects,
        **kwargs,
    )
    # Fail now, not at run time, when a referenced file is unreadable.
    cfg.load_obstacles()
    if cfg.mobility.trace_path is not None and not os.path.isfile(cfg.mobility.trace_path):
        raise ConfigError(f"mobility.trace_path: no such file {cfg.mobility.trace_path!r}")
    return cfg


def _resolve(path: str, base_dir: str) -> str:
    return path if os.path.isabs(path) else os.path.normpath(os.path.join(base_dir, path))


def load_config(path: str) -> ScenarioConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))


def config_json(cfg: ScenarioConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)
