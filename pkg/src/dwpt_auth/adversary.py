"""Dolev-Yao channel adversary and the scripted attack scenarios.

The adversary owns a :class:`ChannelTap` and nothing else. Every attack
works through the tap's verbs (record, replay, mutate, inject, drop) and
through the public message interfaces of the entities it talks to, the way
a radio on the road side would. Success is read off the victims' own
accept/reject decisions.
"""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field

from . import primitives as prim
from .errors import InvalidArgument, Rejected
from .primitives import H
from .protocol.entities import UpdatePolicy
from .protocol.messages import M3, M4, ChainValue, Message, RevM3, RevM4
from .protocol.session import LINKS, Deployment, Wire, build_deployment, run_session
from .protocol.transcript import Event, Transcript
from .rng import DetRng

# links a passive road-side listener can hear; the enrolment link is
# assumed confidential
PUBLIC_LINKS = ("air", "wired")


# --------------------------------------------------------------------------
# channel tap


@dataclass
class MutationRule:
    """Rewrite one field of the first matching message.

    ``delta`` is XORed into byte ``pos`` of ``field_name``. ``swap`` names a
    second field whose bytes are exchanged with ``field_name`` instead, and
    ``value`` overwrites the field outright.
    """

    type_name: str
    field_name: str = ""
    pos: int = 0
    delta: int = 0x01
    swap: str | None = None
    value: bytes | None = None
    drop: bool = False
    occurrence: int = 0
    fired: bool = False
    _seen: int = 0

    def matches(self, msg: Message) -> bool:
        if self.fired or msg.type_name != self.type_name:
            return False
        hit = self._seen == self.occurrence
        self._seen += 1
        return hit

    def describe(self) -> dict:
        out = {"type": self.type_name, "field": self.field_name}
        if self.drop:
            out["drop"] = True
        elif self.swap:
            out["swap"] = self.swap
        elif self.value is not None:
            out["value"] = self.value.hex()
        else:
            out.update(pos=self.pos, delta=self.delta)
        return out


def flip_byte(msg: Message, field_name: str, pos: int, delta: int) -> Message:
    raw = bytearray(getattr(msg, field_name))
    raw[pos] ^= delta
    return dataclasses.replace(msg, **{field_name: bytes(raw)})


def swap_fields(msg: Message, a: str, b: str) -> Message:
    return dataclasses.replace(msg, **{a: getattr(msg, b), b: getattr(msg, a)})


class ChannelTap:
    """Sits on the wire; stores, replays, drops and rewrites bytes.

    It has no keys and never inverts a hash. ``access_log`` records every
    verb used so tests can check attacks stay inside these capabilities.
    """

    VERBS = ("record", "replay", "mutate", "inject", "drop")

    def __init__(self, links=PUBLIC_LINKS, rules: list[MutationRule] | None = None):
        bad = set(links) - set(LINKS)
        if bad:
            raise InvalidArgument(f"unknown links {sorted(bad)}")
        self.links = frozenset(links)
        self.rules = list(rules or [])
        self.recorded: list[Event] = []
        self.injection_queue: list[Message] = []
        self.access_log: list[tuple[str, str]] = []

    def _log(self, verb: str, what: str) -> None:
        self.access_log.append((verb, what))

    # called by the wire for every hop
    def intercept(self, ev: Event) -> Message | None:
        if ev.link not in self.links:
            return ev.message
        self.record(ev)
        msg = ev.message
        for rule in self.rules:
            if not rule.matches(msg):
                continue
            rule.fired = True
            if rule.drop:
                self.drop(msg)
                return None
            if rule.swap or rule.value is not None:
                msg = self.mutate(msg, rule.field_name, swap=rule.swap, value=rule.value)
            else:
                msg = self.mutate(msg, rule.field_name, rule.pos, rule.delta)
        return msg

    def record(self, ev: Event) -> None:
        self._log("record", ev.message.type_name)
        self.recorded.append(ev)

    def replay(self, type_name: str, index: int = 0) -> Message:
        """A copy of the ``index``-th recorded message of ``type_name`` (negative counts from the end)."""
        self._log("replay", type_name)
        seen = [e.message for e in self.recorded if e.message.type_name == type_name]
        if not -len(seen) <= index < len(seen):
            raise InvalidArgument(f"no recorded {type_name} #{index}")
        return seen[index]

    def mutate(
        self,
        msg: Message,
        field_name: str,
        pos: int = 0,
        delta: int = 0x01,
        swap: str | None = None,
        value: bytes | None = None,
    ) -> Message:
        self._log("mutate", f"{msg.type_name}.{field_name}")
        if swap:
            return swap_fields(msg, field_name, swap)
        if value is not None:
            return dataclasses.replace(msg, **{field_name: value})
        return flip_byte(msg, field_name, pos, delta)

    def inject(self, msg: Message) -> Message:
        self._log("inject", msg.type_name)
        self.injection_queue.append(msg)
        return msg

    def drop(self, msg: Message) -> None:
        self._log("drop", msg.type_name)

    def observed_values(self) -> list[tuple[str, bytes]]:
        """Every 32/64-byte field value heard, tagged with its session."""
        out = []
        for ev in self.recorded:
            for value in ev.message.values().values():
                if len(value) in (prim.DIGEST_SIZE, prim.GROUP_ELEMENT_SIZE):
                    out.append((ev.session, value))
        return out


# --------------------------------------------------------------------------
# outcomes


@dataclass
class AttackOutcome:
    name: str
    succeeded: bool
    detector: str
    evidence: list[dict] = field(default_factory=list)
    details: dict = field(default_factory=dict)
    expected: bool | None = None

    def to_json(self) -> dict:
        out = {
            "attack": self.name,
            "succeeded": self.succeeded,
            "detector": self.detector,
            "evidence": self.evidence,
            "details": self.details,
        }
        if self.expected is not None:
            out["expected"] = self.expected
            out["as_expected"] = self.expected == self.succeeded
        return out


def _excerpt(transcript: Transcript, last: int = 6) -> list[dict]:
    out = []
    for ev in transcript.events[-last:]:
        d = ev.to_json()
        d.pop("ops", None)
        out.append(d)
    return out


def _deliver(step, *args):
    """Hand an adversarial message to a victim; returns (result, rejection code)."""
    try:
        return step(*args), None
    except Rejected as exc:
        return None, exc.code


def _attacker_wire(dep: Deployment, pads: int, session: str, tap: ChannelTap) -> tuple[Transcript, Wire]:
    transcript = Transcript()
    parties = {"CSPA": dep.cspa}
    parties.update({f"CP{i}": dep.pad(i) for i in range(pads)})
    return transcript, Wire(transcript, parties, session=session, tap=tap)


# --------------------------------------------------------------------------
# replay / free riding


def replay_attack(protocol: str = "pha", policy: str = "buggy", chain_length: int = 4, seed: int = 0) -> AttackOutcome:
    """Record one honest pad authentication, then replay it as a second principal."""
    policy = UpdatePolicy(policy)
    dep = build_deployment(protocol, pseudonyms=2, chain_length=chain_length, seed=seed, policy=policy)
    tap = ChannelTap()
    honest = run_session(dep, dep.obus[0], pads=1, label="victim", tap=tap)
    if not honest.accepted:
        return AttackOutcome("replay", False, "honest-run-failed", _excerpt(honest.transcript), honest.verdict())
    transcript, wire = _attacker_wire(dep, 2, "adversary", tap)

    if protocol == "revised":
        m3 = tap.inject(tap.replay("RevM3"))
        wire.send("ADV", "CSPA", m3, "auth_obu")
        _, err = _deliver(dep.cspa.rev_respond, m3)
        ok = err is None
        return AttackOutcome("replay", ok, err or "cspa-accepted-replay", _excerpt(transcript), {"rejection": err})

    if protocol == "dma":
        # the pad has no freshness of its own before m3
        m3 = tap.inject(tap.replay("M3"))
        wire.send("ADV", "CP1", m3, "auth_obu")
        res, err = _deliver(dep.pad(1).dma_respond, m3)
        ok = err is None
        if ok:
            wire.send("CP1", "ADV", res[0], "auth_server")
        return AttackOutcome("replay", ok, err or "cp-accepted-replayed-m3", _excerpt(transcript), {"rejection": err})

    # PHA: replay the chain value the victim showed at pad 1 on pad 2 (the
    # first recorded ChainValue is the registered head)
    value = tap.inject(tap.replay("ChainValue", -1))
    cp = dep.pad(1)
    wire.send("ADV", "CP1", value, "chain")
    fwd = wire.send("CP1", "CSPA", cp.forward(value), "backhaul", "wired")
    session, err = _deliver(dep.cspa.verify_chain, fwd.v)
    if err is None:
        delivery = dep.cspa.key_delivery(session, cp.id_cp, cp.link_key, fwd.v)
        delivery = wire.send("CSPA", "CP1", delivery, "backhaul", "wired")
        cp.store_key(delivery, fwd.v, timestamp=len(transcript))
    ok = err is None
    return AttackOutcome(
        "replay",
        ok,
        err or "cspa-accepted-replayed-chain-value",
        _excerpt(transcript),
        {"rejection": err, "policy": policy.value, "chain_length": chain_length},
    )


def dos_via_buggy_update(pads: int = 2, policy: str = "buggy", chain_length: int | None = None, seed: int = 0) -> AttackOutcome:
    """Honest OBU on PHA: does the pad-2 authentication fail on its own?"""
    if chain_length is None:
        chain_length = max(pads, 2)
    dep = build_deployment("pha", pseudonyms=1, chain_length=chain_length, seed=seed, policy=policy)
    res = run_session(dep, dep.obus[0], pads=pads, label="victim")
    if pads < 2:
        return AttackOutcome("dos", False, "not-applicable", _excerpt(res.transcript), res.verdict())
    ok = not res.accepted and res.failed_pad == 2
    detector = f"{res.error}@pad{res.failed_pad}" if not res.accepted else "all-pads-accepted"
    return AttackOutcome("dos", ok, detector, _excerpt(res.transcript), res.verdict())


# --------------------------------------------------------------------------
# linkability


class _UnionFind:
    def __init__(self, items):
        self.parent = {i: i for i in items}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        self.parent[self.find(a)] = self.find(b)


def link_sessions(tap: ChannelTap) -> tuple[dict[str, str], dict[bytes, set[str]]]:
    """Exact-match linker over the values the tap heard.

    Returns (session -> cluster representative, shared value -> sessions).
    """
    where: dict[bytes, set[str]] = {}
    sessions = []
    for session, value in tap.observed_values():
        where.setdefault(value, set()).add(session)
        if session not in sessions:
            sessions.append(session)
    uf = _UnionFind(sessions)
    shared = {}
    for value, owners in where.items():
        if len(owners) > 1:
            shared[value] = owners
            first, *rest = sorted(owners)
            for other in rest:
                uf.union(first, other)
    return {s: uf.find(s) for s in sessions}, shared


def linkability_attack(protocol: str = "revised", k: int = 5, seed: int = 0) -> AttackOutcome:
    """k sessions of one target vehicle among k single-session decoy vehicles."""
    if k < 2:
        raise InvalidArgument("linking needs at least two sessions per vehicle")
    dep = build_deployment(protocol, vehicles=k + 1, pseudonyms=k, chain_length=1, seed=seed)
    tap = ChannelTap()
    targets = [f"target{i}" for i in range(k)]
    decoys = [f"decoy{i}" for i in range(k)]
    for i, label in enumerate(targets):
        run_session(dep, dep.obus[0], pads=1, label=label, tap=tap)
        run_session(dep, dep.obus[i + 1], pads=1, label=decoys[i], tap=tap)
    clusters, shared = link_sessions(tap)
    target_clusters = {clusters[t] for t in targets}
    linked = len(target_clusters) == 1 and not any(clusters[d] in target_clusters for d in decoys)
    cross = {v.hex(): sorted(owners) for v, owners in shared.items()}
    return AttackOutcome(
        "linkability",
        linked,
        "exact-match-cluster" if linked else "no-common-wire-value",
        [{"value": v, "sessions": s} for v, s in list(cross.items())[:4]],
        {"k": k, "cross_session_collisions": len(shared), "clusters": len(set(clusters.values()))},
    )


# --------------------------------------------------------------------------
# man in the middle


def derive_candidate_keys(tap: ChannelTap, pad_ids: list[bytes]) -> set[bytes]:
    """Every session key the adversary can compute from what it heard.

    The attempt treats each heard 32-byte value as a possible H2 and runs
    the protocol's unmasking arithmetic forward; with the enrolment link
    confidential none of these guesses is the real H2.
    """
    heard = {v for _, v in tap.observed_values() if len(v) == prim.DIGEST_SIZE}
    keys = set()
    for ev in tap.recorded:
        msg = ev.message
        if isinstance(msg, RevM3):
            m4 = next((e.message for e in tap.recorded if isinstance(e.message, RevM4) and e.session == ev.session), None)
            for h2 in heard:
                ps = prim.xor32(msg.c1, prim.hash(H, h2))
                r_obu = prim.xor32(msg.c4p, ps)
                if m4 is None:
                    continue
                r_cspa = prim.xor32(m4.c6p, prim.hash(H, r_obu + ps))
                for id_cp in pad_ids:
                    keys.add(prim.hash(H, msg.c5p + r_cspa + id_cp))
        elif isinstance(msg, M3):
            m4s = [e.message for e in tap.recorded if isinstance(e.message, M4) and e.session == ev.session]
            for h2 in heard:
                ps = prim.xor32(msg.c1, prim.hash(H, h2))
                r_obu = prim.xor32(msg.delta4, ps)
                for m4 in m4s:
                    for id_cp in pad_ids:
                        r_cp = prim.xor32(m4.c4, prim.hash(H, r_obu + id_cp))
                        keys.add(prim.hash(H, r_obu + r_cp + ps))
    return keys


def mitm_forge(rule: MutationRule | None = None, protocol: str = "revised", seed: int = 0, links=PUBLIC_LINKS) -> AttackOutcome:
    """Active tap between the OBU and the infrastructure.

    ``rule`` = None is the pass-through forwarder.
    """
    dep = build_deployment(protocol, pseudonyms=1, chain_length=1, seed=seed)
    tap = ChannelTap(links=links, rules=[rule] if rule else [])
    res = run_session(dep, dep.obus[0], pads=1, label="victim", tap=tap)
    pad_ids = [dep.pad(0).id_cp]
    learned = derive_candidate_keys(tap, pad_ids) & set(res.cp_keys)
    ok = res.accepted and bool(learned)
    if not res.accepted:
        detector = f"{res.error}@step{res.failed_step}"
    else:
        detector = "endpoints-accepted"
    return AttackOutcome(
        "mitm",
        ok,
        detector,
        _excerpt(res.transcript),
        {
            "rule": rule.describe() if rule else None,
            "endpoints_accept": res.accepted,
            "adversary_knows_key": bool(learned),
            "rule_fired": bool(rule and rule.fired),
        },
    )


def handshake_mutations(protocol: str) -> list[tuple[str, str, int]]:
    """(message type, field, byte position) for every handshake byte."""
    types = {"revised": ("PreAuth", "M2", "RevM3", "RevM4"), "dma": ("M1", "M2", "M3", "M4"), "pha": ("ChainValue",)}[protocol]
    from .protocol.messages import MESSAGE_TYPES

    out = []
    for name in types:
        cls = MESSAGE_TYPES[name]
        for f in cls.field_names():
            out.extend((name, f, pos) for pos in range(cls.field_size(f)))
    return out


def mutation_sweep(protocol: str = "revised", seed: int = 1, deltas=(0x01,), pads: int = 1) -> list[dict]:
    """Run one session per single-byte mutation; list the mutations that went unnoticed.

    The tap here sees every link, including the enrolment exchange.
    """
    missed = []
    # registration is the slow part (DMV signatures); mutate fresh copies of one pristine deployment
    pristine = build_deployment(protocol, pseudonyms=1, chain_length=max(pads, 1), seed=seed)
    for type_name, field_name, pos in handshake_mutations(protocol):
        for delta in deltas:
            dep = copy.deepcopy(pristine)
            rule = MutationRule(type_name, field_name, pos, delta)
            tap = ChannelTap(links=LINKS, rules=[rule])
            res = run_session(dep, dep.obus[0], pads=pads, label="victim", tap=tap, instrument=False)
            if not rule.fired:
                raise AssertionError(f"mutation {rule.describe()} never applied")
            if res.accepted:
                missed.append(rule.describe())
    return missed


# --------------------------------------------------------------------------
# impersonation


IMPERSONATION_MODES = ("random_handle", "spent_handle", "replay_c5")


def impersonation_attack(mode: str = "random_handle", seed: int = 0) -> AttackOutcome:
    """Try to open a revised session without any vehicle secret."""
    if mode not in IMPERSONATION_MODES:
        raise InvalidArgument(f"unknown impersonation mode {mode!r}")
    dep = build_deployment("revised", pseudonyms=2, chain_length=2, seed=seed)
    adv_rng = DetRng(seed, "adversary")
    tap = ChannelTap()
    run_session(dep, dep.obus[0], pads=1, label="past", tap=tap)
    past = tap.replay("RevM3")
    transcript, wire = _attacker_wire(dep, 1, "adversary", tap)
    own_head = adv_rng.bytes(32)

    if mode == "random_handle":
        forged = RevM3(c1=adv_rng.bytes(32), c3p=adv_rng.bytes(32), c4p=adv_rng.bytes(32), c5p=own_head, h3=past.h3)
    elif mode == "spent_handle":
        forged = tap.mutate(past, "c5p", value=own_head)
    else:
        # catch a fresh in-flight m'3, drop it, and send one built around an
        # old chain head with a c'3 the adversary cannot compute
        drop_rule = MutationRule("RevM3", drop=True)
        tap.rules.append(drop_rule)
        run_session(dep, dep.obus[0], pads=0, label="fresh", tap=tap)
        fresh = tap.replay("RevM3", 1)
        forged = tap.mutate(tap.mutate(fresh, "c5p", value=past.c5p), "c3p", value=adv_rng.bytes(32))

    tap.inject(forged)
    wire.send("ADV", "CSPA", forged, "auth_obu")
    res, err = _deliver(dep.cspa.rev_respond, forged)
    if err is None:
        wire.send("CSPA", "ADV", res, "auth_server")
    ok = err is None
    return AttackOutcome(f"impersonation:{mode}", ok, err or "cspa-accepted", _excerpt(transcript), {"rejection": err})


# --------------------------------------------------------------------------
# chain-head substitution


def head_substitution_attack(seed: int = 0) -> AttackOutcome:
    """Swap c'5 in an honest m'3 for a chain the adversary controls.

    c'3 binds the pseudonym and H3 but not c'4 or c'5, so the CSPA has no way
    to tell the head was replaced. The victim's own chain values are then
    refused at pad 1 while the adversary charges on the victim's session.
    """
    dep = build_deployment("revised", pseudonyms=1, chain_length=2, seed=seed)
    adv_rng = DetRng(seed, "adversary")
    seed_value = adv_rng.bytes(32)
    adv_head = prim.hash(H, seed_value)
    tap = ChannelTap(rules=[MutationRule("RevM3", "c5p", value=adv_head)])
    victim = run_session(dep, dep.obus[0], pads=1, label="victim", tap=tap)
    transcript, wire = _attacker_wire(dep, 2, "adversary", tap)
    cp = dep.pad(1)
    value = tap.inject(ChainValue(v=seed_value))
    wire.send("ADV", "CP1", value, "chain")
    fwd = wire.send("CP1", "CSPA", cp.forward(value), "backhaul", "wired")
    _, err = _deliver(dep.cspa.verify_chain, fwd.v)
    ok = err is None
    return AttackOutcome(
        "head_substitution",
        ok,
        err or "cspa-accepted-substituted-chain",
        _excerpt(victim.transcript, 4) + _excerpt(transcript, 2),
        {
            "rejection": err,
            "victim_error": victim.error,
            "victim_failed_pad": victim.failed_pad,
        },
    )


ATTACKS = {
    "replay": replay_attack,
    "dos": dos_via_buggy_update,
    "linkability": linkability_attack,
    "mitm": mitm_forge,
    "impersonation": impersonation_attack,
    "head_substitution": head_substitution_attack,
}
