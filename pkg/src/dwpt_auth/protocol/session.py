"""Deployment setup and the deterministic session engine.

A session is one vehicle driving across ``pads`` charging pads:

* ``dma``: one-time m1/m2 registration, then one m3/m4 handshake per pad.
* ``pha``: chain-head registration, then one chain value per pad.
* ``revised``: pre-authentication, m'3/m'4 with the CSPA, then one chain
  value per pad.

Every hop goes through :class:`Wire`, which logs a transcript event,
attaches the primitive counts the entities accumulated since the previous
event, and lets an optional tap observe or rewrite the message.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import Rejected
from ..identity import Dmv, VehicleSecrets, sync_cspa_db
from ..primitives import GROUPS, GroupParams
from ..rng import DetRng
from .entities import ChargingPad, Cspa, Obu, PadRegistry, UpdatePolicy
from .messages import Message
from .transcript import Event, Transcript

PROTOCOLS = ("dma", "pha", "revised")

# links: "air" is the public wireless channel, "wired" the CP<->CSPA
# backhaul (sniffable, key deliveries sealed), "registration" the
# confidential enrolment/pre-authentication exchange.
LINKS = ("air", "wired", "registration")


class Dropped(Exception):
    pass


class Wire:
    def __init__(self, transcript: Transcript, parties: dict, session: str = "", tap=None, instrument: bool = True):
        self.transcript = transcript
        self.parties = parties
        self.session = session
        self.tap = tap
        self.instrument = instrument
        self._drain()

    def _drain(self) -> dict:
        ops = {}
        for role, entity in self.parties.items():
            counts = entity.meter.drain()
            if counts:
                ops[role] = counts
        return ops

    def send(self, sender: str, receiver: str, msg: Message, phase: str, link: str = "air") -> Message:
        ev = Event(
            step=len(self.transcript) + 1,
            sender=sender,
            receiver=receiver,
            message=msg,
            phase=phase,
            link=link,
            session=self.session,
            ops=self._drain() if self.instrument else None,
        )
        self.transcript.append(ev)
        if self.tap is None:
            return msg
        delivered = self.tap.intercept(ev)
        if delivered is None:
            raise Dropped(ev.step)
        return delivered

    def close(self) -> None:
        """Attribute trailing verification work to the last event."""
        ops = self._drain()
        if not self.instrument or not self.transcript.events:
            return
        last = self.transcript.events[-1]
        for role, by_purpose in ops.items():
            slot = last.ops.setdefault(role, {})
            for purpose, kinds in by_purpose.items():
                bucket = slot.setdefault(purpose, {})
                for kind, n in kinds.items():
                    bucket[kind] = bucket.get(kind, 0) + n


@dataclass
class Deployment:
    protocol: str
    params: GroupParams
    policy: UpdatePolicy
    chain_length: int
    verify_c2: bool
    rng: DetRng
    dmv: Dmv
    cspa: Cspa
    obus: list[Obu]
    secrets: list[VehicleSecrets]
    registry: PadRegistry
    msk: bytes
    _pads: dict[int, ChargingPad] = field(default_factory=dict)

    def pad(self, index: int) -> ChargingPad:
        if index not in self._pads:
            rng = self.rng.fork(f"cp{index}")
            self._pads[index] = ChargingPad(
                id_cp=self.registry.id_of(index),
                rng=rng.fork("nonces"),
                link_key=rng.fork("link").bytes(32),
                msk=self.msk if self.protocol == "dma" else None,
                x_registry=[o.credentials.x_obu_static for o in self.obus],
                verify_c2=self.verify_c2,
            )
        return self._pads[index]

    def parties(self, obu: Obu, pads: int) -> dict:
        out = {"OBU": obu, "CSPA": self.cspa}
        # all pads share the CP role in the accounting
        out.update({f"CP{i}": self.pad(i) for i in range(pads)})
        return out


def build_deployment(
    protocol: str = "revised",
    vehicles: int = 1,
    pseudonyms: int = 16,
    chain_length: int = 16,
    seed: int = 0,
    policy: str | UpdatePolicy = "fixed",
    verify_c2: bool = False,
    group: str = "full512",
) -> Deployment:
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}")
    params = GROUPS[group]
    policy = UpdatePolicy(policy)
    root = DetRng(seed)
    dmv = Dmv(root.fork("dmv"), params)
    # DMV chains: DMA needs h^2(PS) per pseudonym, PHA the full chain; the
    # revised OBU generates its own chain.
    dmv_chain = {"dma": 2, "pha": chain_length, "revised": 0}[protocol]
    secrets, creds = [], []
    for v in range(vehicles):
        s = VehicleSecrets.generate(root.fork(f"vehicle{v}/secrets"))
        secrets.append(s)
        creds.append(dmv.register_vehicle(s, pseudonyms, chain_length=dmv_chain))
    cspa_rng = root.fork("cspa")
    msk = cspa_rng.fork("msk").bytes(32)
    db = sync_cspa_db(creds, root.fork("db")) if protocol == "revised" else None
    cspa = Cspa(
        rng=cspa_rng.fork("nonces"),
        params=params,
        msk=msk,
        secret_s=cspa_rng.fork("s").bytes(32),
        policy=policy,
        pseudonym_db=db,
        dma_registrations={c.x_obu_static: c.pwd_obu for c in creds},
    )
    obus = [
        Obu(c, root.fork(f"vehicle{v}/obu"), params, label=f"OBU{v}") for v, c in enumerate(creds)
    ]
    return Deployment(
        protocol=protocol,
        params=params,
        policy=policy,
        chain_length=chain_length,
        verify_c2=verify_c2,
        rng=root,
        dmv=dmv,
        cspa=cspa,
        obus=obus,
        secrets=secrets,
        registry=PadRegistry(root.fork("registry")),
        msk=msk,
    )


@dataclass
class SessionResult:
    label: str
    protocol: str
    transcript: Transcript
    accepted: bool
    error: str | None = None
    failed_step: int | None = None
    failed_pad: int | None = None
    pads_accepted: int = 0
    obu_keys: list[bytes] = field(default_factory=list)
    cp_keys: list[bytes] = field(default_factory=list)

    @property
    def keys_match(self) -> bool | None:
        if self.protocol == "pha":
            return None  # the OBU never learns the pad's key
        return self.obu_keys == self.cp_keys

    def verdict(self) -> dict:
        return {
            "session": self.label,
            "protocol": self.protocol,
            "accepted": self.accepted,
            "error": self.error,
            "failed_step": self.failed_step,
            "failed_pad": self.failed_pad,
            "pads_accepted": self.pads_accepted,
            "keys_match": self.keys_match,
        }


def run_session(dep: Deployment, obu: Obu, pads: int, label: str = "s0", tap=None, instrument: bool = True) -> SessionResult:
    transcript = Transcript(instrumented=instrument)
    wire = Wire(transcript, dep.parties(obu, pads), session=label, tap=tap, instrument=instrument)
    result = SessionResult(label=label, protocol=dep.protocol, transcript=transcript, accepted=False)
    runner = {"dma": _dma, "pha": _pha, "revised": _revised}[dep.protocol]
    try:
        runner(dep, obu, pads, wire, result)
        result.accepted = True
    except Rejected as exc:
        result.error = exc.code
        result.failed_step = len(transcript)
    except Dropped as exc:
        result.error = "dropped"
        result.failed_step = exc.args[0]
    finally:
        wire.close()
    return result


def _dma(dep: Deployment, obu: Obu, pads: int, wire: Wire, result: SessionResult) -> None:
    if not obu.dma_registered:
        m1 = wire.send("OBU", "CSPA", obu.dma_registration(), "registration", "registration")
        m2 = wire.send("CSPA", "OBU", dep.cspa.register(m1), "registration", "registration")
        obu.receive_m2(m2)
        obu.dma_registered = True
    obu.begin_session()
    for i in range(pads):
        result.failed_pad = i + 1
        cp = dep.pad(i)
        m3 = wire.send("OBU", f"CP{i}", obu.dma_request(), "auth_obu")
        m4, sk_cp = cp.dma_respond(m3)
        result.cp_keys.append(sk_cp)
        m4 = wire.send(f"CP{i}", "OBU", m4, "auth_server")
        result.obu_keys.append(obu.dma_finish(m4, cp.id_cp))
        result.pads_accepted += 1
    result.failed_pad = None


def _pha(dep: Deployment, obu: Obu, pads: int, wire: Wire, result: SessionResult) -> None:
    obu.begin_session()
    head = wire.send("OBU", "CSPA", obu.pha_register(), "registration")
    dep.cspa.pha_register(head)
    charge(dep, obu, pads, wire, result, obu_keys=False)


def _revised(dep: Deployment, obu: Obu, pads: int, wire: Wire, result: SessionResult) -> None:
    pre = wire.send("OBU", "CSPA", obu.rev_preauth(), "registration", "registration")
    m2 = wire.send("CSPA", "OBU", dep.cspa.register(pre), "preauth", "registration")
    obu.receive_m2(m2)
    m3 = wire.send("OBU", "CSPA", obu.rev_request(dep.chain_length), "auth_obu")
    m4 = wire.send("CSPA", "OBU", dep.cspa.rev_respond(m3), "auth_server")
    obu.rev_verify(m4)
    charge(dep, obu, pads, wire, result, obu_keys=True)


def charge(dep: Deployment, obu: Obu, pads: int, wire: Wire, result: SessionResult, obu_keys: bool) -> None:
    """Charging phase: one chain value per pad, verified by the CSPA."""
    for i in range(pads):
        result.failed_pad = i + 1
        cp = dep.pad(i)
        value = wire.send("OBU", f"CP{i}", obu.pha_next_value(), "chain")
        fwd = wire.send(f"CP{i}", "CSPA", cp.forward(value), "backhaul", "wired")
        session = dep.cspa.verify_chain(fwd.v)
        delivery = dep.cspa.key_delivery(session, cp.id_cp, cp.link_key, fwd.v)
        delivery = wire.send("CSPA", f"CP{i}", delivery, "backhaul", "wired")
        result.cp_keys.append(cp.store_key(delivery, fwd.v, timestamp=len(wire.transcript)))
        if obu_keys:
            result.obu_keys.append(obu.session_key_for(cp.id_cp))
        result.pads_accepted += 1
    result.failed_pad = None
