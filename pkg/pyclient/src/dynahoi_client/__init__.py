"""Reference client SDK for the DynaHOI evaluation server."""

from .agents import (
    ChaserPolicy,
    ExtrapolatorPolicy,
    POLICIES,
    SkillTemplatePolicy,
    WirePolicy,
    ZeroPolicy,
    make_policy,
)
from .client import PolicyClient, run_episode
from .wire import ClientError

__all__ = [
    "ChaserPolicy",
    "ClientError",
    "ExtrapolatorPolicy",
    "POLICIES",
    "PolicyClient",
    "SkillTemplatePolicy",
    "WirePolicy",
    "ZeroPolicy",
    "make_policy",
    "run_episode",
]
