"""Wire protocol, skill programs, and the evaluation server."""

from .skills import (
    SkillProgram,
    SkillProgramError,
    SkillStep,
    expand_skill_program,
    parse_skill_program,
    validate_skill_program,
)
from .wire import (
    ActionData,
    ImageAndState,
    Metrics,
    StartEpisode,
    WireError,
    WireProtocolError,
    decode,
    encode,
    read_message,
    write_message,
)
from .server import EvalServer

__all__ = [
    "ActionData",
    "EvalServer",
    "ImageAndState",
    "Metrics",
    "SkillProgram",
    "SkillProgramError",
    "SkillStep",
    "StartEpisode",
    "WireError",
    "WireProtocolError",
    "decode",
    "encode",
    "expand_skill_program",
    "parse_skill_program",
    "read_message",
    "validate_skill_program",
    "write_message",
]
