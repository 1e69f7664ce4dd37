"""Feature backends: built-in detector, fixture replay, and HTTP client."""

from .base import (
    BackendConfig,
    BackendKind,
    DescriptorKind,
    DescriptorSet,
    FeatureBackend,
    Keypoint,
    Match,
    MatchResult,
)
from .native import NativeBackend
from .remote import InferenceClient, RemoteBackend
from .scripted import ScriptedBackend, load_fixture, match_key

__all__ = [
    "BackendConfig",
    "BackendKind",
    "DescriptorKind",
    "DescriptorSet",
    "FeatureBackend",
    "InferenceClient",
    "Keypoint",
    "Match",
    "MatchResult",
    "NativeBackend",
    "RemoteBackend",
    "ScriptedBackend",
    "create_backend",
    "load_fixture",
    "match_key",
]


def create_backend(config: BackendConfig) -> FeatureBackend:
    """Instantiate the backend named by ``config.kind``."""
    if config.kind is BackendKind.NATIVE:
        return NativeBackend(config)
    if config.kind is BackendKind.SCRIPTED:
        return ScriptedBackend(config)
    if config.kind is BackendKind.REMOTE:
        return RemoteBackend(config)
    raise ValueError(f"unknown backend kind: {config.kind!r}")
