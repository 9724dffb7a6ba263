"""Mobility providers, trace ingestion, and the neighbor index."""

import math
import random

import pytest

from vanetsim.engine import US_PER_S
from vanetsim.errors import ConfigError, TraceParseError
from vanetsim.mobility import (
    LANE_WIDTH_M,
    MPH_TO_MPS,
    MobilitySpec,
    NeighborIndex,
    Position,
    StaticProvider,
    SyntheticGridProvider,
    SyntheticHighwayProvider,
    TraceProvider,
    build_provider,
    distance,
    gateway_count,
    parse_fcd,
)

FCD_FIXTURE = """<?xml version="1.0" encoding="UTF-8"?>
<fcd-export>
  <timestep time="0.00">
    <vehicle id="veh_a" x="100.0" y="0.0" speed="10.0"/>
    <vehicle id="veh_b" x="400.0" y="3.5" speed="20.0"/>
  </timestep>
  <timestep time="1.00">
    <vehicle id="veh_a" x="110.0" y="0.0" speed="10.0"/>
    <vehicle id="veh_b" x="420.0" y="3.5" speed="20.0"/>
  </timestep>
  <timestep time="2.00">
    <vehicle id="veh_a" x="120.0" y="0.0" speed="10.0"/>
    <vehicle id="veh_b" x="440.0" y="3.5" speed="20.0"/>
  </timestep>
</fcd-export>
"""


def write_fixture(tmp_path, text=FCD_FIXTURE, name="trace.xml"):
    fp = tmp_path / name
    fp.write_text(text)
    return str(fp)


# -- MobilitySpec validation ----------------------------------------------------------

def test_mobility_defaults_are_usable():
    spec = MobilitySpec()
    assert spec.mode == "synthetic_highway"
    assert spec.vehicle_count == 50
    assert spec.gateway_fraction == 0.05


@pytest.mark.parametrize(
    "kw, field",
    [
        ({"mode": "hovercraft"}, "mobility.mode"),
        ({"vehicle_count": 0}, "mobility.vehicle_count"),
        ({"vehicle_count": 10_001}, "mobility.vehicle_count"),
        ({"road_length_m": -1.0}, "mobility.road_length_m"),
        ({"lanes": 0}, "mobility.lanes"),
        ({"speed_range_mph": (60.0, 30.0)}, "mobility.speed_range_mph"),
        ({"speed_range_mph": (-5.0, 30.0)}, "mobility.speed_range_mph"),
        ({"mode": "trace"}, "mobility.trace_path"),
        ({"grid_blocks": 0}, "mobility.grid_blocks"),
        ({"grid_spacing_m": 0.0}, "mobility.grid_spacing_m"),
        ({"gateway_fraction": 1.5}, "mobility.gateway_fraction"),
    ],
)
def test_spec_rejects_bad_values(kw, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        MobilitySpec(**kw)


def test_gateway_count_rounding():
    assert gateway_count(50, 0.05) == 2   # round(2.5) -> 2, banker's
    assert gateway_count(100, 0.05) == 5
    assert gateway_count(3, 1.0) == 3
    assert gateway_count(10, 0.0) == 0
    assert gateway_count(2, 0.9) == 2  # capped at fleet size


# -- highway ------------------------------------------------------------------

def test_mph_conversion_is_exact():
    assert MPH_TO_MPS == 0.44704
    assert 30.0 * MPH_TO_MPS == pytest.approx(13.4112)


def test_highway_moves_at_constant_speed_and_wraps():
    spec = MobilitySpec(vehicle_count=2, road_length_m=1000.0)
    prov = SyntheticHighwayProvider(spec, initial=[(990.0, 0, 20.0), (10.0, 1, 15.0)])
    s0 = prov.position_at(0, 0)
    assert s0.pos == Position(990.0, 0.0)
    # 1 s later: 990 + 20 wraps to 10
    assert prov.position_at(0, US_PER_S).pos.x == pytest.approx(10.0)
    assert prov.position_at(1, US_PER_S).pos == Position(25.0, LANE_WIDTH_M)
    assert prov.position_at(1, 500_000).pos.x == pytest.approx(17.5)


def test_highway_lane_y_offsets():
    spec = MobilitySpec(vehicle_count=3, lanes=3)
    prov = SyntheticHighwayProvider(
        spec, initial=[(0.0, 0, 10.0), (0.0, 1, 10.0), (0.0, 2, 10.0)]
    )
    assert [prov.position_at(v, 0).pos.y for v in range(3)] == [0.0, 3.5, 7.0]
    assert prov.bounds() == (0.0, 0.0, 10_000.0, 7.0)


def test_highway_random_draws_respect_configured_ranges():
    spec = MobilitySpec(vehicle_count=200, speed_range_mph=(30.0, 60.0), lanes=2)
    prov = SyntheticHighwayProvider(spec, rng=random.Random(1))
    lo = 30.0 * MPH_TO_MPS
    hi = 60.0 * MPH_TO_MPS
    for state in prov.fleet_at(0):
        assert 0.0 <= state.pos.x < 10_000.0
        assert state.pos.y in (0.0, LANE_WIDTH_M)
        assert lo <= state.speed <= hi
    assert prov.max_drift_mps() <= hi
    # first 5% of ids are the buses
    flags = [s.is_gateway for s in prov.fleet_at(0)]
    assert sum(flags) == gateway_count(200, 0.05) == 10
    assert all(flags[:10]) and not any(flags[10:])


def test_highway_same_rng_replays_identically():
    spec = MobilitySpec(vehicle_count=30)
    a = SyntheticHighwayProvider(spec, rng=random.Random(7))
    b = SyntheticHighwayProvider(spec, rng=random.Random(7))
    assert [s.pos for s in a.fleet_at(123_456)] == [s.pos for s in b.fleet_at(123_456)]


# -- grid ---------------------------------------------------------------------

def test_grid_keeps_vehicles_on_streets():
    spec = MobilitySpec(mode="synthetic_grid", vehicle_count=100, grid_blocks=4,
                        grid_spacing_m=250.0)
    prov = SyntheticGridProvider(spec, rng=random.Random(3))
    assert prov.bounds() == (0.0, 0.0, 1000.0, 1000.0)
    for t in (0, 5 * US_PER_S, 30 * US_PER_S):
        for state in prov.fleet_at(t):
            on_h = state.pos.y % 250.0 == 0.0
            on_v = state.pos.x % 250.0 == 0.0
            assert on_h or on_v
            assert 0.0 <= state.pos.x <= 1000.0
            assert 0.0 <= state.pos.y <= 1000.0


def test_grid_pinned_vehicle_shuttles_and_wraps():
    spec = MobilitySpec(mode="synthetic_grid", vehicle_count=1, grid_blocks=2,
                        grid_spacing_m=100.0)
    prov = SyntheticGridProvider(spec, initial=[("v", 1, 190.0, 1, 20.0)])
    assert prov.position_at(0, 0).pos == Position(100.0, 190.0)
    assert prov.position_at(0, US_PER_S).pos == Position(100.0, 10.0)  # wrapped at 200
    back = SyntheticGridProvider(spec, initial=[("h", 0, 10.0, -1, 20.0)])
    assert back.position_at(0, US_PER_S).pos.x == pytest.approx(190.0)


# -- static -------------------------------------------------------------------

def test_static_provider_never_moves():
    prov = StaticProvider([Position(0, 0), Position(50, 10)], gateways=[1])
    assert prov.position_at(1, 0).pos == prov.position_at(1, 10 * US_PER_S).pos
    assert prov.max_drift_mps() == 0.0
    assert prov.position_at(1, 0).is_gateway
    assert not prov.position_at(0, 0).is_gateway
    assert prov.bounds() == (0.0, 0.0, 50.0, 10.0)


# -- trace parsing and playback -----------------------------------------------

def test_parse_fcd_flat_samples(tmp_path):
    samples = parse_fcd(write_fixture(tmp_path))
    assert len(samples) == 6
    assert samples[0].vehicle_id == "veh_a"
    assert samples[0].time_us == 0
    assert samples[1].x == 400.0
    assert samples[-1].time_us == 2 * US_PER_S


def test_parse_fcd_rounds_seconds_half_up(tmp_path):
    text = FCD_FIXTURE.replace('time="1.00"', 'time="1.0000005"')
    samples = parse_fcd(write_fixture(tmp_path, text))
    times = sorted({s.time_us for s in samples})
    assert times == [0, 1_000_001, 2_000_000]


def test_parse_fcd_rejects_wrong_root(tmp_path):
    with pytest.raises(TraceParseError, match="root element"):
        parse_fcd(write_fixture(tmp_path, "<sumo></sumo>"))


def test_parse_fcd_rejects_missing_attribute(tmp_path):
    text = FCD_FIXTURE.replace(' x="100.0"', "", 1)
    with pytest.raises(TraceParseError, match="'x'"):
        parse_fcd(write_fixture(tmp_path, text))


def test_parse_fcd_rejects_non_numeric(tmp_path):
    text = FCD_FIXTURE.replace('x="100.0"', 'x="fast"')
    with pytest.raises(TraceParseError, match="not a number"):
        parse_fcd(write_fixture(tmp_path, text))


def test_parse_fcd_rejects_non_increasing_time(tmp_path):
    text = FCD_FIXTURE.replace('time="1.00"', 'time="0.00"')
    with pytest.raises(TraceParseError, match="does not increase"):
        parse_fcd(write_fixture(tmp_path, text))


def test_parse_fcd_malformed_xml(tmp_path):
    with pytest.raises(TraceParseError, match="malformed"):
        parse_fcd(write_fixture(tmp_path, "<fcd-export><timestep"))


def test_trace_provider_interpolates_and_clamps(tmp_path):
    prov = TraceProvider(parse_fcd(write_fixture(tmp_path)))
    a = prov.vehicle_ids[0]
    assert prov.label_of(a) == "veh_a"
    # exact at samples
    assert prov.position_at(a, 0).pos == Position(100.0, 0.0)
    assert prov.position_at(a, US_PER_S).pos == Position(110.0, 0.0)
    # linear halfway between samples
    assert prov.position_at(a, 500_000).pos.x == pytest.approx(105.0)
    assert prov.position_at(a, 1_500_000).pos.x == pytest.approx(115.0)
    # clamped outside the recorded window
    assert prov.position_at(a, 99 * US_PER_S).pos.x == 120.0
    assert prov.max_drift_mps() == pytest.approx(20.0)
    x0, y0, x1, y1 = prov.bounds()
    assert (x0, y0) == (100.0, 0.0) and (x1, y1) == (440.0, 3.5)


def test_build_provider_checks_trace_count(tmp_path):
    path = write_fixture(tmp_path)
    spec = MobilitySpec(mode="trace", trace_path=path, vehicle_count=2)
    prov = build_provider(spec, None)
    assert prov.vehicle_count == 2
    bad = MobilitySpec(mode="trace", trace_path=path, vehicle_count=5)
    with pytest.raises(ConfigError, match="contains 2 vehicles"):
        build_provider(bad, None)


# -- neighbor index -----------------------------------------------------------

def brute_in_range(provider, center, radius, t):
    return {
        s.vehicle_id
        for s in provider.fleet_at(t)
        if distance(s.pos, center) <= radius
    }


def test_neighbor_index_superset_random_fleets():
    rng = random.Random(88)
    for trial in range(10):
        spec = MobilitySpec(vehicle_count=120)
        prov = SyntheticHighwayProvider(spec, rng=random.Random(trial))
        index = NeighborIndex(prov, cell_m=300.0)
        for t in (0, 150_000, 400_000, 2 * US_PER_S):
            center = Position(rng.uniform(0, 10_000), rng.uniform(0, 3.5))
            want = brute_in_range(prov, center, 300.0, t)
            got = set(index.candidates(center, 300.0, t))
            assert want <= got, (trial, t)


def test_neighbor_index_handles_wrap_boundary():
    spec = MobilitySpec(vehicle_count=3, road_length_m=1000.0)
    # one vehicle crosses the seam right after the index snapshot
    prov = SyntheticHighwayProvider(
        spec, initial=[(995.0, 0, 30.0), (500.0, 0, 30.0), (5.0, 0, 30.0)]
    )
    index = NeighborIndex(prov, cell_m=100.0)
    index.candidates(Position(500.0, 0.0), 50.0, 0)  # builds snapshot at t=0
    # 0.5 s later vehicle 0 sits at 10.0; a query near the seam must see it
    t = 500_000
    got = set(index.candidates(Position(20.0, 0.0), 50.0, t))
    assert 0 in got and 2 in got
    want = brute_in_range(prov, Position(20.0, 0.0), 50.0, t)
    assert want <= got


def test_neighbor_index_refreshes_after_interval():
    spec = MobilitySpec(vehicle_count=1, road_length_m=10_000.0)
    prov = SyntheticHighwayProvider(spec, initial=[(0.0, 0, 25.0)])
    index = NeighborIndex(prov, cell_m=200.0)
    assert index.candidates(Position(0.0, 0.0), 100.0, 0) == [0]
    # after 60 s the vehicle is at 1500 m; stale buckets would miss it
    t = 60 * US_PER_S
    assert 0 in index.candidates(Position(1500.0, 0.0), 100.0, t)
    assert index.candidates(Position(0.0, 0.0), 100.0, t) == []


def test_neighbor_index_grid_wraps_both_axes():
    spec = MobilitySpec(mode="synthetic_grid", vehicle_count=2, grid_blocks=2,
                        grid_spacing_m=100.0)
    prov = SyntheticGridProvider(
        spec, initial=[("v", 0, 195.0, 1, 10.0), ("h", 2, 195.0, 1, 10.0)]
    )
    index = NeighborIndex(prov, cell_m=50.0)
    index.candidates(Position(100.0, 100.0), 10.0, 0)
    # 1 s on: the "v" vehicle wrapped from y=195 to y=5
    got = set(index.candidates(Position(0.0, 10.0), 20.0, US_PER_S))
    assert 0 in got
