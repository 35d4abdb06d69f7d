"""Wire messages of the three protocols.

Fields are raw bytes so a channel adversary can corrupt them freely;
receivers call :meth:`Message.check` before touching the contents.
Every field is a 32-byte digest except ``RevM4.c7p``, a 64-byte group
element.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from ..errors import ProtocolError
from ..primitives import DIGEST_SIZE, GROUP_ELEMENT_SIZE


@dataclass(frozen=True)
class Message:
    SIZES = {}

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def field_size(cls, name: str) -> int:
        return cls.SIZES.get(name, DIGEST_SIZE)

    @classmethod
    def nominal_size(cls) -> int:
        return sum(cls.field_size(n) for n in cls.field_names())

    def values(self) -> dict[str, bytes]:
        return {n: getattr(self, n) for n in self.field_names()}

    @property
    def wire_bytes(self) -> int:
        return sum(len(v) for v in self.values().values())

    def check(self) -> "Message":
        for name, value in self.values().items():
            if not isinstance(value, bytes) or len(value) != self.field_size(name):
                raise ProtocolError(f"{type(self).__name__}.{name}: malformed field")
        return self

    def to_hex(self) -> dict[str, str]:
        return {n: v.hex() for n, v in self.values().items()}

    @property
    def type_name(self) -> str:
        return type(self).__name__


@dataclass(frozen=True)
class M1(Message):
    pwd: bytes
    x_obu: bytes


@dataclass(frozen=True)
class M2(Message):
    x_obu: bytes
    h2_val: bytes
    h3_val: bytes


@dataclass(frozen=True)
class M3(Message):
    c1: bytes
    c2: bytes
    c3: bytes
    h3: bytes
    delta4: bytes


@dataclass(frozen=True)
class M4(Message):
    c4: bytes
    c5: bytes
    c6: bytes
    c7: bytes


@dataclass(frozen=True)
class ChainValue(Message):
    v: bytes


@dataclass(frozen=True)
class RevM3(Message):
    c1: bytes
    c3p: bytes
    c4p: bytes
    c5p: bytes
    h3: bytes


@dataclass(frozen=True)
class RevM4(Message):
    SIZES = {"c7p": GROUP_ELEMENT_SIZE}
    c6p: bytes
    c7p: bytes


@dataclass(frozen=True)
class PreAuth(Message):
    x_obu_dyn: bytes


@dataclass(frozen=True)
class ChainForward(Message):
    v: bytes


@dataclass(frozen=True)
class KeyDelivery(Message):
    sealed_key: bytes


MESSAGE_TYPES = {
    cls.__name__: cls
    for cls in (M1, M2, M3, M4, ChainValue, RevM3, RevM4, PreAuth, ChainForward, KeyDelivery)
}


def message_from_hex(type_name: str, hex_fields: dict[str, str]) -> Message:
    cls = MESSAGE_TYPES.get(type_name)
    if cls is None:
        raise ValueError(f"unknown message type {type_name!r}")
    if set(hex_fields) != set(cls.field_names()):
        raise ValueError(f"{type_name}: expected fields {cls.field_names()}")
    return cls(**{n: bytes.fromhex(hex_fields[n]) for n in cls.field_names()})
