"""Convenience wrapper around wipac-telemetry, so package can be used with/without it."""

# pylint:skip-file

from typing import Any, Callable, TypeVar, cast

#
# First, try to import then implement wipac-telemetry
#
try:
    import wipac_telemetry.tracing_tools as wtt  # type: ignore[import]  # ignore for CI/CD

    spanned = wtt.spanned

    def set_current_span_attribute(key: str, value: Any) -> None:
        wtt.get_current_span().set_attribute(key, value)


#
# Otherwise, dummy-implement every call
#
except ImportError:

    # fmt: off
    F = TypeVar("F", bound=Callable[..., Any])

    def dummy_wrapper(*args: Any, **kwargs: Any) -> Callable[[F], F]:
        def decorator(fn: F) -> F:
            def wrapper(*args: Any, **kwargs: Any) -> Any:
                return fn(*args, **kwargs)
            return cast(F, wrapper)
        return decorator
    # fmt:on

    spanned = dummy_wrapper

    def set_current_span_attribute(key: str, value: Any) -> None:
        pass
