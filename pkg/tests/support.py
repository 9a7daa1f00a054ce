"""Shared small-grid contexts for the operator tests."""

from functools import lru_cache
from typing import Any, Optional

from cli.config import RunConfig, parse_run_config
from eval.transport import TransportContext


@lru_cache(maxsize=8)
def fast_config(family: str = "synthetic") -> RunConfig:
    """The ``fast`` preset with the given cross-section family."""
    return parse_run_config({"preset": "fast", "cross_sections": {"family": family}})


def fast_context(family: str = "synthetic", **overrides: Any) -> TransportContext:
    ctx = fast_config(family).build_context()
    for key, value in overrides.items():
        setattr(ctx, key, value)
    return ctx


def field(field_id: str, config: Optional[RunConfig] = None) -> Any:
    return (config or fast_config()).field(field_id)
