"""Ordered log of wire events, serialisable as JSON Lines."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..errors import FormatError
from .messages import Message, message_from_hex

# Phases priced in the per-session communication cost; the rest are
# one-time registration traffic or the wired CP<->CSPA backhaul.
ACCOUNTED_PHASES = ("preauth", "auth_obu", "auth_server", "chain")
PHASES = ("registration",) + ACCOUNTED_PHASES + ("backhaul",)


@dataclass
class Event:
    step: int
    sender: str
    receiver: str
    message: Message
    phase: str
    link: str = "air"
    session: str = ""
    ops: dict | None = None

    @property
    def wire_bytes(self) -> int:
        return self.message.wire_bytes

    def to_json(self) -> dict:
        out = {
            "step": self.step,
            "from": self.sender,
            "to": self.receiver,
            "type": self.message.type_name,
            "fields": self.message.to_hex(),
            "bytes": self.wire_bytes,
            "phase": self.phase,
            "link": self.link,
            "session": self.session,
        }
        if self.ops is not None:
            out["ops"] = self.ops
        return out


@dataclass
class Transcript:
    events: list[Event] = field(default_factory=list)
    instrumented: bool = True

    def append(self, event: Event) -> Event:
        self.events.append(event)
        return event

    def extend(self, other: "Transcript") -> None:
        for ev in other.events:
            ev.step = len(self.events) + 1
            self.events.append(ev)
        self.instrumented = self.instrumented and other.instrumented

    def of_type(self, type_name: str) -> list[Event]:
        return [e for e in self.events if e.message.type_name == type_name]

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def to_jsonl(self, header: dict | None = None) -> str:
        lines = []
        if header is not None:
            lines.append(json.dumps({"header": header}, sort_keys=True))
        lines.extend(json.dumps(e.to_json(), sort_keys=True) for e in self.events)
        return "\n".join(lines) + "\n"


def read_jsonl(text: str) -> tuple[dict | None, Transcript]:
    """Parse a transcript file; returns (header, transcript)."""
    header = None
    events = []
    instrumented = True
    lines = text.splitlines()
    if not any(line.strip() for line in lines):
        raise FormatError(1, "empty transcript")
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            if "header" in obj:
                if events or header is not None:
                    raise ValueError("header must be the first line")
                header = obj["header"]
                continue
            msg = message_from_hex(obj["type"], obj["fields"])
            ev = Event(
                step=obj["step"],
                sender=obj["from"],
                receiver=obj["to"],
                message=msg,
                phase=obj["phase"],
                link=obj.get("link", "air"),
                session=obj.get("session", ""),
                ops=obj.get("ops"),
            )
            if obj["bytes"] != ev.wire_bytes:
                raise ValueError("byte count does not match fields")
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(lineno, str(exc)) from None
        instrumented = instrumented and ev.ops is not None
        events.append(ev)
    if not events:
        raise FormatError(len(lines), "transcript has no events")
    return header, Transcript(events=events, instrumented=instrumented)
