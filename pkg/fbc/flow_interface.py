"""Define an interface that flow providers will adhere to."""

import logging
import math
from typing import List, NamedTuple

from . import log_msgs
from .model import CodecConfig, Event, EventStream, FBCError

LOGGER = logging.getLogger("fbc.flow")


class OutOfBoundsEventError(FBCError, ValueError):
    """Raised when an event lies outside the sensor a provider was built for."""


class FlowEstimate(NamedTuple):
    """A per-event optical-flow estimate.

    `residual` is the fit error in pixels (0 for ground truth, inf when
    no fit was possible).
    """

    vx: float  # px/s
    vy: float  # px/s
    valid: bool
    residual: float = 0.0

    @property
    def magnitude(self) -> float:
        """Speed in pixels/second."""
        return math.hypot(self.vx, self.vy)


NO_FLOW = FlowEstimate(0.0, 0.0, False, math.inf)


# -----------------------------
# classes to override/implement
# -----------------------------


class FlowProvider:
    """Turns events, in stream order, into flow estimates.

    Providers may keep state between calls (e.g. a time surface), so a
    provider instance serves a single stream at a time.
    """

    NAME = "abstract-flow-provider"

    def __init__(self, cfg: CodecConfig) -> None:
        self.cfg = cfg

    def estimate(self, e: Event) -> FlowEstimate:
        """Return the flow of `e`, which is the next event of the stream."""
        raise NotImplementedError()

    def reset(self) -> None:
        """Forget everything seen so far."""


def estimate_flows(stream: EventStream, provider: FlowProvider) -> List[FlowEstimate]:
    """Run `provider` over a whole stream (after resetting it)."""
    LOGGER.debug(f"{log_msgs.FLOW_ESTIMATING} ({provider.NAME}, {len(stream)} events)")
    provider.reset()
    flows = [provider.estimate(e) for e in stream]
    LOGGER.debug(
        f"{log_msgs.FLOW_ESTIMATED} ({sum(f.valid for f in flows)}/{len(flows)} valid)"
    )
    return flows
