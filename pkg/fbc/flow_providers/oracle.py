"""Ground-truth flow for synthetic scenes."""

import math
from typing import TYPE_CHECKING, Any, Optional

from .. import flow_interface
from ..flow_interface import NO_FLOW, FlowEstimate
from ..model import CodecConfig, ConfigError, Event

if TYPE_CHECKING:
    from ..synth import GroundTruth


def oracle_flow(
    truth: "GroundTruth", e: Event, v_min: float = 1.0, v_max: float = 2047.0
) -> FlowEstimate:
    """Return the velocity the scene assigned to `e`.

    Noise and events the scene did not generate get no flow; so does a
    velocity outside [v_min, v_max].
    """
    velocity = truth.velocity_of(e)
    if velocity is None:
        return NO_FLOW
    vx, vy = velocity
    return FlowEstimate(vx, vy, v_min <= math.hypot(vx, vy) <= v_max, 0.0)


class FlowProvider(flow_interface.FlowProvider):
    """Looks every event up in a scene's ground truth."""

    NAME = "oracle"

    def __init__(
        self, cfg: CodecConfig, truth: Optional["GroundTruth"] = None, **kwargs: Any
    ) -> None:
        super().__init__(cfg)
        if truth is None:
            raise ConfigError("oracle flow needs the ground truth of a synthetic scene")
        self.truth = truth

    def estimate(self, e: Event) -> FlowEstimate:
        """Look `e` up."""
        return oracle_flow(self.truth, e, self.cfg.v_min, self.cfg.v_max)
