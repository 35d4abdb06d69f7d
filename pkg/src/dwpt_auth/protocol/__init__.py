"""Protocol messages, entity state machines and the session engine."""

from .entities import ChainState, ChargingPad, Cspa, Obu, PadRegistry, UpdatePolicy
from .messages import (
    M1,
    M2,
    M3,
    M4,
    MESSAGE_TYPES,
    ChainForward,
    ChainValue,
    KeyDelivery,
    Message,
    PreAuth,
    RevM3,
    RevM4,
)
from .session import PROTOCOLS, Deployment, SessionResult, Wire, build_deployment, run_session
from .transcript import ACCOUNTED_PHASES, Event, Transcript, read_jsonl

__all__ = [
    "ACCOUNTED_PHASES",
    "ChainForward",
    "ChainState",
    "ChainValue",
    "ChargingPad",
    "Cspa",
    "Deployment",
    "Event",
    "KeyDelivery",
    "M1",
    "M2",
    "M3",
    "M4",
    "MESSAGE_TYPES",
    "Message",
    "Obu",
    "PROTOCOLS",
    "PadRegistry",
    "PreAuth",
    "RevM3",
    "RevM4",
    "SessionResult",
    "Transcript",
    "UpdatePolicy",
    "Wire",
    "build_deployment",
    "read_jsonl",
    "run_session",
]
