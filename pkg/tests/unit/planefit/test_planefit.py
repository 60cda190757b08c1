"""Unit Tests for the plane-fit FlowProvider."""

import logging

import numpy as np
import pytest
from fbc import log_msgs
from fbc.flow_interface import OutOfBoundsEventError
from fbc.flow_providers.planefit import (
    FlowProvider,
    TimeSurface,
    plane_fit_flow,
    update_surface,
)
from fbc.model import CodecConfig, Event, Polarity

from ...abstract_flow_provider_tests.unit_tests import FlowProviderUnitTest


class TestUnitPlaneFit(FlowProviderUnitTest):
    """Unit test suite interface for the plane-fit flow provider."""

    provider_name = "planefit"


def _ramp(vx: float, vy: float, x_max: int = 10) -> TimeSurface:
    """An edge that passed every pixel up to column `x_max` at t = (x*vx + y*vy) / |v|^2."""
    surface = TimeSurface(32, 32)
    g2 = vx * vx + vy * vy
    for y in range(32):
        for x in range(x_max + 1):
            t = round((x * vx + y * vy) / g2 * 1e6)
            if t >= 0:
                surface.last_ts[int(Polarity.ON), y, x] = t
    return surface


def test_horizontal_motion() -> None:
    """A clean ramp gives its velocity back with no residual."""
    surface = _ramp(1000.0, 0.0)
    flow = plane_fit_flow(surface, Event(10, 10, 10_000, Polarity.ON))
    assert flow.valid
    assert flow.vx == pytest.approx(1000.0)
    assert flow.vy == pytest.approx(0.0, abs=1e-6)
    assert flow.residual == pytest.approx(0.0, abs=1e-9)


def test_diagonal_motion() -> None:
    """Both components come back."""
    surface = _ramp(300.0, 400.0, x_max=31)
    e = Event(16, 16, int(surface.last_ts[1, 16, 16]), Polarity.ON)
    surface.last_ts[1, :, :][surface.last_ts[1] > e.t] = -1  # nothing from the future
    flow = plane_fit_flow(surface, e)
    assert flow.valid
    assert flow.vx == pytest.approx(300.0, rel=0.01)
    assert flow.vy == pytest.approx(400.0, rel=0.01)


def test_other_polarity_is_ignored() -> None:
    """Only the event's own polarity takes part."""
    surface = _ramp(1000.0, 0.0)
    assert not plane_fit_flow(surface, Event(10, 10, 10_000, Polarity.OFF)).valid


def test_stale_support_is_ignored() -> None:
    """Timestamps older than dt_max do not count."""
    surface = _ramp(1000.0, 0.0)
    flow = plane_fit_flow(surface, Event(10, 10, 10_000, Polarity.ON), dt_max=500)
    assert not flow.valid


def test_single_column_has_no_flow() -> None:
    """A degenerate fit gives no flow."""
    surface = TimeSurface(16, 16)
    surface.last_ts[1, 2:9, 5] = 100
    flow = plane_fit_flow(surface, Event(5, 5, 100, Polarity.ON))
    assert not flow.valid
    assert flow.residual == float("inf")


def test_slow_fit_is_invalid() -> None:
    """Speeds under v_min are marked invalid but still reported."""
    surface = _ramp(1000.0, 0.0)
    flow = plane_fit_flow(surface, Event(10, 10, 10_000, Polarity.ON), v_min=5000.0)
    assert not flow.valid
    assert flow.vx == pytest.approx(1000.0)


def test_update_surface() -> None:
    """Events land at their pixel; off-sensor events are refused."""
    surface = TimeSurface(4, 3)
    update_surface(surface, Event(3, 2, 77, Polarity.OFF))
    assert surface.last_ts[0, 2, 3] == 77
    assert int(np.count_nonzero(surface.last_ts >= 0)) == 1
    with pytest.raises(OutOfBoundsEventError):
        update_surface(surface, Event(4, 0, 1, Polarity.ON))
    surface.clear()
    assert np.all(surface.last_ts == -1)


def _edge(speed: float, heading_deg: float, t_e: int = 1_000_000) -> TimeSurface:
    """A straight edge through pixel (16, 16) at `t_e`, every pixel it already crossed stamped."""
    surface = TimeSurface(33, 33)
    vx = speed * np.cos(np.radians(heading_deg))
    vy = speed * np.sin(np.radians(heading_deg))
    ys, xs = np.mgrid[0:33, 0:33]
    t = t_e + np.round(((xs - 16) * vx + (ys - 16) * vy) / speed**2 * 1e6).astype(np.int64)
    surface.last_ts[int(Polarity.ON)] = np.where(t <= t_e, t, -1)
    return surface


@pytest.mark.parametrize("speed", [20.0, 50.0, 150.0, 400.0, 1000.0])
@pytest.mark.parametrize("heading", [0.0, 30.0, 45.0, 100.0, 210.0, 330.0])
def test_edge_velocity_accuracy(speed: float, heading: float) -> None:
    """Straight edges from 20 to 1000 px/s come back within 5% and 5 degrees."""
    flow = plane_fit_flow(_edge(speed, heading), Event(16, 16, 1_000_000, Polarity.ON))
    assert flow.valid
    assert flow.magnitude == pytest.approx(speed, rel=0.05)
    error = (np.degrees(np.arctan2(flow.vy, flow.vx)) - heading + 180.0) % 360.0 - 180.0
    assert abs(error) <= 5.0


@pytest.mark.parametrize("shift", [1, 37_501, 10**9])
def test_timestamp_shift_leaves_flow_unchanged(shift: int) -> None:
    """Moving the whole neighbourhood in time does not move the estimate."""
    surface = _edge(150.0, 30.0)
    before = plane_fit_flow(surface, Event(16, 16, 1_000_000, Polarity.ON))
    stamped = surface.last_ts >= 0
    surface.last_ts[stamped] += shift
    after = plane_fit_flow(surface, Event(16, 16, 1_000_000 + shift, Polarity.ON))
    assert after == before


def test_unknown_options_are_logged(caplog: pytest.LogCaptureFixture) -> None:
    """Options the provider does not take are named in a debug line and dropped."""
    with caplog.at_level(logging.DEBUG, logger="fbc.planefit"):
        provider = FlowProvider(CodecConfig(), dt_max_us=80_000, smoothing=2)
    assert provider.dt_max_us == 80_000
    assert caplog.messages == [f"{log_msgs.FLOW_OPTIONS_IGNORED} (['smoothing'])"]
