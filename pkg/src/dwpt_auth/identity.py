"""Registration authority: pseudonyms, vehicle identifiers, CSPA database copy.

A pseudonym record is the DMV-signed triple
``(alpha)_{K_sym} || (alpha xor ID)_{K_V} || n_i`` with
``alpha = c_V + n_i * inc_V``. On the wire only its 32-byte handle travels,
``h(record)``; the record itself stays with the DMV and the OBU.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import primitives as prim
from .errors import InvalidArgument
from .primitives import H, H2, FULL512, GroupParams
from .rng import DetRng


@dataclass(frozen=True)
class VehicleSecrets:
    real_id: bytes
    k_v: bytes
    k_sym: bytes
    c_v: int
    inc_v: int

    def __post_init__(self):
        if self.c_v <= 0 or self.inc_v <= 0:
            raise InvalidArgument("c_v and inc_v must be positive")

    @classmethod
    def generate(cls, rng: DetRng) -> "VehicleSecrets":
        return cls(
            real_id=rng.bytes(32),
            k_v=rng.bytes(32),
            k_sym=rng.bytes(32),
            c_v=1 + rng.below(1 << 64),
            inc_v=1 + rng.below(1 << 32),
        )


@dataclass(frozen=True)
class PseudonymRecord:
    n_i: int
    alpha: int
    enc_alpha: bytes
    enc_alpha_xor_id: bytes
    dmv_signature: bytes

    def body(self) -> bytes:
        return self.enc_alpha + self.enc_alpha_xor_id + self.n_i.to_bytes(4, "big")

    def encode(self) -> bytes:
        return self.body() + self.dmv_signature

    @property
    def handle(self) -> bytes:
        return prim.hash(H, self.encode())

    def to_json(self) -> dict:
        return {
            "n_i": self.n_i,
            "alpha": str(self.alpha),
            "enc_alpha": self.enc_alpha.hex(),
            "enc_alpha_xor_id": self.enc_alpha_xor_id.hex(),
            "dmv_signature": self.dmv_signature.hex(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "PseudonymRecord":
        return cls(
            n_i=d["n_i"],
            alpha=int(d["alpha"]),
            enc_alpha=bytes.fromhex(d["enc_alpha"]),
            enc_alpha_xor_id=bytes.fromhex(d["enc_alpha_xor_id"]),
            dmv_signature=bytes.fromhex(d["dmv_signature"]),
        )


@dataclass
class PseudonymEntry:
    record: PseudonymRecord
    handle: bytes
    # DMV-provisioned chain h^1(PS) .. h^L(PS); empty when not provisioned.
    dmv_chain: list[bytes] = field(default_factory=list)


@dataclass
class Credentials:
    pseudonyms: list[PseudonymEntry]
    x_obu_static: bytes
    pwd_obu: bytes

    @property
    def handles(self) -> list[bytes]:
        return [e.handle for e in self.pseudonyms]

    def to_json(self) -> dict:
        return {
            "pseudonyms": [
                {
                    "record": e.record.to_json(),
                    "handle": e.handle.hex(),
                    "dmv_chain": [v.hex() for v in e.dmv_chain],
                }
                for e in self.pseudonyms
            ],
            "x_obu_static": self.x_obu_static.hex(),
            "pwd_obu": self.pwd_obu.hex(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "Credentials":
        return cls(
            pseudonyms=[
                PseudonymEntry(
                    record=PseudonymRecord.from_json(p["record"]),
                    handle=bytes.fromhex(p["handle"]),
                    dmv_chain=[bytes.fromhex(v) for v in p["dmv_chain"]],
                )
                for p in d["pseudonyms"]
            ],
            x_obu_static=bytes.fromhex(d["x_obu_static"]),
            pwd_obu=bytes.fromhex(d["pwd_obu"]),
        )


def alpha_for(secrets: VehicleSecrets, n_i: int) -> int:
    return secrets.c_v + n_i * secrets.inc_v


def x_obu_static(handles: list[bytes]) -> bytes:
    return prim.hash(H, b"".join(handles))


def x_obu_dynamic(handle: bytes) -> bytes:
    return prim.hash(H2, handle)


def build_chain_anchor(handle: bytes, n_obu: bytes, length: int) -> bytes:
    """``h^length(N_OBU || PS)``."""
    if length < 1:
        raise InvalidArgument("chain length must be at least 1")
    return prim.hash_iter(H, n_obu + handle, length)


class Dmv:
    """Issues pseudonyms and keeps the registry the CSPA copy is made from."""

    def __init__(self, rng: DetRng, params: GroupParams = FULL512):
        self.params = params
        self._rng = rng
        self.keypair = prim.keygen(rng.fork("dmv-key"), params)
        self.issued: list[Credentials] = []

    @property
    def public_key(self) -> int:
        return self.keypair.public

    def register_vehicle(self, secrets: VehicleSecrets, count: int, chain_length: int = 0) -> Credentials:
        if count < 1:
            raise InvalidArgument("a vehicle needs at least one pseudonym")
        if chain_length < 0:
            raise InvalidArgument("chain length must be non-negative")
        entries = []
        for n_i in range(1, count + 1):
            record = self._issue(secrets, n_i)
            handle = record.handle
            chain = [prim.hash_iter(H, handle, k) for k in range(1, chain_length + 1)]
            entries.append(PseudonymEntry(record=record, handle=handle, dmv_chain=chain))
        creds = Credentials(
            pseudonyms=entries,
            x_obu_static=x_obu_static([e.handle for e in entries]),
            pwd_obu=self._rng.bytes(32),
        )
        self.issued.append(creds)
        return creds

    def _issue(self, secrets: VehicleSecrets, n_i: int) -> PseudonymRecord:
        alpha = alpha_for(secrets, n_i)
        alpha32 = prim.int_to_digest(alpha)
        nonce = n_i.to_bytes(4, "big")
        enc_alpha = prim.sym_encrypt(secrets.k_sym, b"alpha" + nonce, alpha32)
        enc_alpha_xor_id = prim.sym_encrypt(
            secrets.k_v, b"alpha-id" + nonce, prim.xor32(alpha32, secrets.real_id)
        )
        unsigned = PseudonymRecord(n_i, alpha, enc_alpha, enc_alpha_xor_id, b"")
        sig = prim.sign(self.keypair.secret, unsigned.body(), self.params)
        return PseudonymRecord(n_i, alpha, enc_alpha, enc_alpha_xor_id, sig)

    def verify_record(self, record: PseudonymRecord) -> bool:
        return prim.verify(self.keypair.public, record.body(), record.dmv_signature, self.params)


class CspaPseudonymDb:
    """The CSPA's copy of every issued pseudonym handle, with no owner field."""

    def __init__(self, handles: list[bytes]):
        self.handles = list(handles)
        self.valid = set(handles)
        self.spent: set[bytes] = set()
        self._by_dynamic = {x_obu_dynamic(h): h for h in handles}

    def __contains__(self, handle: bytes) -> bool:
        return handle in self.valid or handle in self.spent

    def __len__(self) -> int:
        return len(self.handles)

    def is_spent(self, handle: bytes) -> bool:
        return handle in self.spent

    def mark_spent(self, handle: bytes) -> None:
        self.valid.discard(handle)
        self.spent.add(handle)

    def lookup_dynamic(self, x_obu: bytes) -> bytes | None:
        return self._by_dynamic.get(x_obu)

    def to_json(self) -> dict:
        return {"handles": [h.hex() for h in self.handles], "spent": sorted(h.hex() for h in self.spent)}

    @classmethod
    def from_json(cls, d: dict) -> "CspaPseudonymDb":
        db = cls([bytes.fromhex(h) for h in d["handles"]])
        for h in d["spent"]:
            db.mark_spent(bytes.fromhex(h))
        return db


def sync_cspa_db(credentials: list[Credentials], rng: DetRng) -> CspaPseudonymDb:
    handles = [h for creds in credentials for h in creds.handles]
    rng.shuffle(handles)
    return CspaPseudonymDb(handles)


def dump_json(obj) -> str:
    return json.dumps(obj.to_json(), sort_keys=True, indent=2)
