"""Flow from least-squares planes fitted to a time surface."""

import logging
import math
from typing import Any

import numpy as np

from .. import flow_interface, log_msgs
from ..flow_interface import NO_FLOW, FlowEstimate, OutOfBoundsEventError
from ..model import US_PER_S, CodecConfig, Event

LOGGER = logging.getLogger("fbc.planefit")

WINDOW_RADIUS = 3  # px, Chebyshev
DT_MAX_US = 150_000  # a 20 px/s edge crosses the window radius in this time
MIN_SUPPORT = 8
RESIDUAL_MAX = 0.5  # px


class TimeSurface:
    """Most recent timestamp per (polarity, y, x); -1 where nothing fired yet."""

    def __init__(self, width: int, height: int) -> None:
        self.width = width
        self.height = height
        self.last_ts = np.full((2, height, width), -1, dtype=np.int64)

    def clear(self) -> None:
        """Forget all timestamps."""
        self.last_ts.fill(-1)


def update_surface(surface: TimeSurface, e: Event) -> TimeSurface:
    """Write `e.t` into the surface at `e`'s pixel and polarity."""
    if not (0 <= e.x < surface.width and 0 <= e.y < surface.height):
        raise OutOfBoundsEventError(
            f"event ({e.x}, {e.y}) outside {surface.width}x{surface.height} time surface"
        )
    surface.last_ts[int(e.p), e.y, e.x] = e.t
    return surface


def plane_fit_flow(
    surface: TimeSurface,
    e: Event,
    window_radius: int = WINDOW_RADIUS,
    dt_max: int = DT_MAX_US,
    min_support: int = MIN_SUPPORT,
    residual_max: float = RESIDUAL_MAX,
    v_min: float = 1.0,
    v_max: float = 2047.0,
) -> FlowEstimate:
    """Fit t = a*x + b*y + c around `e` and turn the gradient into a velocity.

    Only same-polarity timestamps no older than `dt_max` (and not newer
    than `e.t`) take part. `e` must already be on the surface.
    """
    x0 = max(0, e.x - window_radius)
    x1 = min(surface.width, e.x + window_radius + 1)
    y0 = max(0, e.y - window_radius)
    y1 = min(surface.height, e.y + window_radius + 1)

    patch = surface.last_ts[int(e.p), y0:y1, x0:x1]
    age = e.t - patch
    mask = (patch >= 0) & (age >= 0) & (age <= dt_max)
    support = int(np.count_nonzero(mask))
    if support < 3:
        return NO_FLOW

    rows, cols = np.nonzero(mask)
    design = np.column_stack(
        [
            (cols + x0 - e.x).astype(np.float64),
            (rows + y0 - e.y).astype(np.float64),
            np.ones(support),
        ]
    )
    dt = -age[mask].astype(np.float64)  # relative to e.t, so the fit is shift-invariant
    coef, _, rank, _ = np.linalg.lstsq(design, dt, rcond=None)
    if rank < 3:
        return NO_FLOW

    a, b = float(coef[0]), float(coef[1])  # µs/px
    g2 = a * a + b * b
    if g2 == 0.0 or not math.isfinite(g2):
        return NO_FLOW

    fitted = design @ coef
    rms = math.sqrt(float(np.mean((fitted - dt) ** 2)))
    residual = rms / math.sqrt(g2)

    vx = a / g2 * US_PER_S
    vy = b / g2 * US_PER_S
    speed = math.hypot(vx, vy)
    valid = support >= min_support and residual <= residual_max and v_min <= speed <= v_max
    return FlowEstimate(vx, vy, valid, residual)


class FlowProvider(flow_interface.FlowProvider):
    """Plane-fit flow over a per-stream time surface."""

    NAME = "planefit"

    def __init__(
        self,
        cfg: CodecConfig,
        window_radius: int = WINDOW_RADIUS,
        dt_max_us: int = DT_MAX_US,
        min_support: int = MIN_SUPPORT,
        residual_max: float = RESIDUAL_MAX,
        **kwargs: Any,
    ) -> None:
        super().__init__(cfg)
        if kwargs:
            LOGGER.debug(f"{log_msgs.FLOW_OPTIONS_IGNORED} ({sorted(kwargs)})")
        self.window_radius = window_radius
        self.dt_max_us = dt_max_us
        self.min_support = min_support
        self.residual_max = residual_max
        self.surface = TimeSurface(cfg.sensor_width, cfg.sensor_height)

    def estimate(self, e: Event) -> FlowEstimate:
        """Apply `e` to the time surface, then fit around it."""
        update_surface(self.surface, e)
        return plane_fit_flow(
            self.surface,
            e,
            window_radius=self.window_radius,
            dt_max=self.dt_max_us,
            min_support=self.min_support,
            residual_max=self.residual_max,
            v_min=self.cfg.v_min,
            v_max=self.cfg.v_max,
        )

    def reset(self) -> None:
        """Clear the time surface."""
        self.surface.clear()
