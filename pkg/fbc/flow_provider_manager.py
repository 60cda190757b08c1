"""Manage the different flow providers."""

from types import ModuleType
from typing import Any, Dict, List

from .flow_interface import FlowProvider
from .flow_providers import oracle, planefit
from .model import CodecConfig, FBCError

_INSTALLED_PROVIDERS: Dict[str, ModuleType] = {
    planefit.FlowProvider.NAME: planefit,
    oracle.FlowProvider.NAME: oracle,
}


class UnknownFlowProviderError(FBCError, RuntimeError):
    """Raised when no flow provider goes by the requested name."""


def available_flow_providers() -> List[str]:
    """Names accepted by `get_flow_provider()`."""
    return sorted(_INSTALLED_PROVIDERS)


def get_flow_provider(name: str, cfg: CodecConfig, **kwargs: Any) -> FlowProvider:
    """Get a `FlowProvider` instance per the given name."""
    try:
        module = _INSTALLED_PROVIDERS[name]
    except KeyError:
        raise UnknownFlowProviderError(f"Unknown flow provider: {name}")
    provider: FlowProvider = module.FlowProvider(cfg, **kwargs)
    return provider
