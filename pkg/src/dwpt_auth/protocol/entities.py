"""OBU, CSPA and charging-pad state machines for DMA, PHA and the revised scheme.

Each entity owns an :class:`~dwpt_auth.primitives.OpMeter`; every metered
primitive it evaluates shows up in the transcript event that carried the
message it was building or checking. Failures raise a subclass of
:class:`~dwpt_auth.errors.Rejected`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .. import primitives as prim
from ..errors import (
    AuthenticationFailed,
    CredentialsExhausted,
    DoubleSpendRejected,
    ProtocolError,
    RegistrationRejected,
    UnknownPseudonym,
)
from ..identity import CspaPseudonymDb, Credentials, PseudonymEntry
from ..primitives import H, H2, GroupParams, OpMeter
from ..rng import DetRng
from .messages import M1, M2, M3, M4, ChainForward, ChainValue, KeyDelivery, PreAuth, RevM3, RevM4


class UpdatePolicy(enum.Enum):
    BUGGY = "buggy"
    FIXED = "fixed"


class PadRegistry:
    """Public directory of charging-pad identities, known to every OBU."""

    def __init__(self, rng: DetRng):
        self._rng = rng
        self._ids: dict[int, bytes] = {}

    def id_of(self, index: int) -> bytes:
        if index not in self._ids:
            self._ids[index] = self._rng.fork(f"pad{index}").bytes(32)
        return self._ids[index]

    def known(self) -> list[bytes]:
        return [self._ids[i] for i in sorted(self._ids)]


# --------------------------------------------------------------------------
# OBU


class Obu:
    def __init__(self, credentials: Credentials, rng: DetRng, params: GroupParams, label: str = "OBU"):
        self.credentials = credentials
        self.params = params
        self.label = label
        self.meter = OpMeter()
        self._rng = rng
        self._next_index = 0
        self.current: PseudonymEntry | None = None
        self.x_obu: bytes | None = None
        self.h2_val: bytes | None = None
        self.h3_val: bytes | None = None
        self.h1_val: bytes | None = None
        self.r_obu: bytes | None = None
        self.n_obu: bytes | None = None
        self.r_cspa: bytes | None = None
        self.chain_head: bytes | None = None
        self._reveals: list[bytes] = []
        self.dma_registered = False

    @property
    def current_pseudonym_index(self) -> int:
        return self._next_index - 1

    @property
    def chain_cursor(self) -> int:
        return len(self._reveals)

    def begin_session(self) -> PseudonymEntry:
        if self._next_index >= len(self.credentials.pseudonyms):
            raise CredentialsExhausted("no unused pseudonym left")
        self.current = self.credentials.pseudonyms[self._next_index]
        self._next_index += 1
        self.r_obu = self.n_obu = self.r_cspa = self.chain_head = None
        self._reveals = []
        return self.current

    def _pseudonym(self) -> bytes:
        if self.current is None:
            raise ProtocolError("no active session")
        return self.current.handle

    def receive_m2(self, m2: M2) -> None:
        m2.check()
        if m2.x_obu != self.x_obu:
            raise AuthenticationFailed("M2 echoes a different X_OBU")
        self.h2_val, self.h3_val = m2.h2_val, m2.h3_val

    def _require_m2(self) -> None:
        if self.h2_val is None or self.h3_val is None:
            raise ProtocolError("registration material (M2) missing")

    # -- DMA ---------------------------------------------------------------

    def dma_registration(self) -> M1:
        self.x_obu = self.credentials.x_obu_static
        return M1(pwd=self.credentials.pwd_obu, x_obu=self.x_obu)

    def dma_request(self) -> M3:
        self._require_m2()
        ps = self._pseudonym()
        m = self.meter
        self.r_obu = self._rng.bytes(32)
        c1 = m.xor(m.hash(H, self.h2_val), ps)
        c2 = m.hash(H, m.xor(ps, self.x_obu))
        c3 = m.hash(H, m.hash(H, ps + c2 + self.h3_val))
        delta4 = m.xor(self.r_obu, ps)
        return M3(c1=c1, c2=c2, c3=c3, h3=self.h3_val, delta4=delta4)

    def _h2_of_pseudonym(self) -> bytes:
        chain = self.current.dmv_chain
        if len(chain) >= 2:
            return chain[1]
        return self.meter.hash_iter(H, self.current.handle, 2)

    def dma_finish(self, m4: M4, id_cp: bytes) -> bytes:
        m4.check()
        ps = self._pseudonym()
        m = self.meter
        id_j = m.hash(H, self.r_obu + id_cp)
        r_cp = m.xor(m4.c4, id_j)
        hh = self._h2_of_pseudonym()
        if m.xor(r_cp, hh) != m4.c5:
            raise AuthenticationFailed("c5 mismatch")
        if m.hash(H, r_cp + m4.c4 + m4.c5) != m4.c6:
            raise AuthenticationFailed("c6 mismatch")
        self.h1_val = m.xor(m4.c7, hh)
        with m.purpose_of("key"):
            return m.hash(H, self.r_obu + r_cp + ps)

    # -- PHA ---------------------------------------------------------------

    def pha_register(self) -> ChainValue:
        ps = self._pseudonym()
        chain = self.current.dmv_chain
        if not chain:
            raise ProtocolError("no DMV hash chain provisioned for this pseudonym")
        # reveal order h^{n-1} .. h^1, then the pseudonym itself (h^0)
        self._reveals = [ps] + chain[:-1]
        self.chain_head = chain[-1]
        return ChainValue(v=self.chain_head)

    def pha_next_value(self) -> ChainValue:
        if not self._reveals:
            raise CredentialsExhausted("hash chain exhausted")
        return ChainValue(v=self._reveals.pop())

    # -- revised -----------------------------------------------------------

    def rev_preauth(self) -> PreAuth:
        entry = self.begin_session()
        self.x_obu = self.meter.hash(H2, entry.handle)
        self.h2_val = self.h3_val = None
        return PreAuth(x_obu_dyn=self.x_obu)

    def rev_request(self, chain_len: int) -> RevM3:
        """Build m'3. ``chain_len`` is the number of pads the chain can pay for."""
        if chain_len < 0:
            raise ProtocolError("chain length must be non-negative")
        self._require_m2()
        ps = self._pseudonym()
        m = self.meter
        self.r_obu = self._rng.bytes(32)
        self.n_obu = self._rng.bytes(32)
        c1 = m.xor(m.hash(H, self.h2_val), ps)
        c3p = m.hash(H, m.hash(H, ps) + self.h3_val)
        c4p = m.xor(self.r_obu, ps)
        # the anchor sits one step above the last payable value: the 64-byte
        # seed N_OBU || PS cannot itself be revealed as a chain value
        with m.purpose_of("chain"):
            values = []
            v = self.n_obu + ps
            for _ in range(chain_len + 1):
                v = m.hash(H, v)
                values.append(v)
        self.chain_head = values[-1]
        self._reveals = values[:-1]
        return RevM3(c1=c1, c3p=c3p, c4p=c4p, c5p=self.chain_head, h3=self.h3_val)

    def rev_verify(self, m4: RevM4) -> None:
        m4.check()
        ps = self._pseudonym()
        m = self.meter
        p_prime = m.hash(H, self.r_obu + ps)
        r_cspa = m.xor(m4.c6p, p_prime)
        expected = m.exp(self.params, prim.masked_exponent(p_prime, r_cspa, self.params.n_pub))
        if expected.to_bytes() != m4.c7p:
            raise AuthenticationFailed("c'7 does not match the exponentiation")
        self.r_cspa = r_cspa

    def session_key_for(self, id_cp: bytes) -> bytes:
        if self.r_cspa is None:
            raise ProtocolError("revised handshake not completed")
        with self.meter.purpose_of("key"):
            return self.meter.hash(H, self.chain_head + self.r_cspa + id_cp)


# --------------------------------------------------------------------------
# CSPA


@dataclass
class ChainState:
    head: bytes
    expected: bytes
    r_cspa: bytes
    accepted: int = 0


class Cspa:
    def __init__(
        self,
        rng: DetRng,
        params: GroupParams,
        msk: bytes,
        secret_s: bytes,
        policy: UpdatePolicy = UpdatePolicy.FIXED,
        pseudonym_db: CspaPseudonymDb | None = None,
        dma_registrations: dict[bytes, bytes] | None = None,
    ):
        self.params = params
        self.msk = msk
        self.msk_index = 0
        self.secret_s = secret_s
        self.update_policy = policy
        self.pseudonym_db = pseudonym_db
        # X_OBU -> PWD_OBU, supplied by the DMV for the reference scheme
        self.dma_registrations = dma_registrations or {}
        self.meter = OpMeter()
        self._rng = rng
        self.security_params: dict[bytes, bytes] = {}
        self._by_h1: dict[bytes, tuple[bytes, bytes]] = {}
        self.chain_state: dict[bytes, ChainState] = {}

    def register(self, msg: M1 | PreAuth) -> M2:
        msg.check()
        if isinstance(msg, M1):
            if self.dma_registrations.get(msg.x_obu) != msg.pwd:
                raise RegistrationRejected("unknown X_OBU or wrong password")
            x = msg.x_obu
        elif isinstance(msg, PreAuth):
            if self.pseudonym_db is None:
                raise RegistrationRejected("no pseudonym database")
            handle = self.pseudonym_db.lookup_dynamic(msg.x_obu_dyn)
            if handle is None:
                raise RegistrationRejected("X_OBU matches no issued pseudonym")
            if self.pseudonym_db.is_spent(handle):
                raise DoubleSpendRejected("pseudonym already used")
            x = msg.x_obu_dyn
        else:
            raise ProtocolError(f"unexpected {msg.type_name}")
        m = self.meter
        h1 = m.hash(H, self.secret_s + x)
        h2 = m.hash(H, h1)
        h3 = m.wrap(self.msk, h1)
        self.security_params[x] = h1
        self._by_h1[h1] = (x, h2)
        return M2(x_obu=x, h2_val=h2, h3_val=h3)

    def rev_respond(self, m3: RevM3) -> RevM4:
        m3.check()
        m = self.meter
        h1 = m.wrap(self.msk, m3.h3)
        if h1 not in self._by_h1:
            raise AuthenticationFailed("H3 belongs to no pre-authenticated session")
        x, h2 = self._by_h1[h1]
        ps = m.xor(m3.c1, m.hash(H, h2))
        db = self.pseudonym_db
        if ps not in db:
            raise UnknownPseudonym("extracted pseudonym was never issued")
        if db.is_spent(ps):
            raise DoubleSpendRejected("pseudonym already used")
        if m.hash(H2, ps) != x:
            raise AuthenticationFailed("pseudonym does not match pre-authentication")
        r_obu = m.xor(m3.c4p, ps)
        if m.hash(H, m.hash(H, ps) + m3.h3) != m3.c3p:
            raise AuthenticationFailed("c'3 mismatch")
        p_prime = m.hash(H, r_obu + ps)
        r_cspa = self._rng.bytes(32)
        c6p = m.xor(p_prime, r_cspa)
        c7p = m.exp(self.params, prim.masked_exponent(p_prime, r_cspa, self.params.n_pub))
        db.mark_spent(ps)
        self.chain_state[m3.c5p] = ChainState(head=m3.c5p, expected=m3.c5p, r_cspa=r_cspa)
        return RevM4(c6p=c6p, c7p=c7p.to_bytes())

    def pha_register(self, head: ChainValue) -> bytes:
        head.check()
        if head.v in self.chain_state:
            raise DoubleSpendRejected("chain head already registered")
        self.chain_state[head.v] = ChainState(head=head.v, expected=head.v, r_cspa=self._rng.bytes(32))
        return head.v

    def verify_chain(self, value: bytes, session: bytes | None = None) -> bytes:
        """Check one revealed chain value; returns the session (chain head) it advanced."""
        if len(value) != prim.DIGEST_SIZE:
            raise ProtocolError("chain value must be 32 bytes")
        with self.meter.purpose_of("chain"):
            hv = self.meter.hash(H, value)
        if session is not None:
            st = self.chain_state.get(session)
            if st is None or st.expected != hv:
                raise AuthenticationFailed("chain value rejected")
        else:
            st = next((s for s in self.chain_state.values() if s.expected == hv), None)
            if st is None:
                raise AuthenticationFailed("chain value matches no expected value")
        if self.update_policy is UpdatePolicy.BUGGY:
            st.expected = hv
        else:
            st.expected = value
        st.accepted += 1
        return st.head

    def key_delivery(self, session: bytes, id_cp: bytes, link_key: bytes, nonce: bytes) -> KeyDelivery:
        st = self.chain_state[session]
        with self.meter.purpose_of("key"):
            sk = self.meter.hash(H, st.head + st.r_cspa + id_cp)
        return KeyDelivery(sealed_key=prim.sym_encrypt(link_key, nonce, sk))


# --------------------------------------------------------------------------
# charging pad


class ChargingPad:
    def __init__(
        self,
        id_cp: bytes,
        rng: DetRng,
        link_key: bytes,
        msk: bytes | None = None,
        x_registry: list[bytes] | None = None,
        verify_c2: bool = False,
    ):
        self.id_cp = id_cp
        self.link_key = link_key
        self.msk = msk
        self.x_registry = x_registry or []
        self.verify_c2 = verify_c2
        self.meter = OpMeter()
        self._rng = rng
        self.session_key_store: dict[int, tuple[bytes, int]] = {}

    def dma_respond(self, m3: M3) -> tuple[M4, bytes]:
        m3.check()
        if self.msk is None:
            raise ProtocolError("pad holds no master key")
        m = self.meter
        h1 = m.wrap(self.msk, m3.h3)
        h2 = m.hash(H, h1)
        ps = m.xor(m3.c1, m.hash(H, h2))
        if self.verify_c2:
            # the brute-force lookup the reference scheme implies
            if not any(m.hash(H, m.xor(ps, x)) == m3.c2 for x in self.x_registry):
                raise AuthenticationFailed("c2 matches no registered X_OBU")
        if m.hash(H, m.hash(H, ps + m3.c2 + m3.h3)) != m3.c3:
            raise AuthenticationFailed("c3 mismatch")
        r_obu = m.xor(m3.delta4, ps)
        r_cp = self._rng.bytes(32)
        id_j = m.hash(H, r_obu + self.id_cp)
        c4 = m.xor(id_j, r_cp)
        hh = m.hash(H, m.hash(H, ps))
        c5 = m.xor(r_cp, hh)
        c6 = m.hash(H, r_cp + c4 + c5)
        c7 = m.xor(h1, hh)
        with m.purpose_of("key"):
            sk = m.hash(H, r_obu + r_cp + ps)
        self._store(sk, timestamp=len(self.session_key_store))
        return M4(c4=c4, c5=c5, c6=c6, c7=c7), sk

    def forward(self, value: ChainValue) -> ChainForward:
        value.check()
        return ChainForward(v=value.v)

    def store_key(self, delivery: KeyDelivery, nonce: bytes, timestamp: int) -> bytes:
        delivery.check()
        sk = prim.sym_decrypt(self.link_key, nonce, delivery.sealed_key)
        self._store(sk, timestamp)
        return sk

    def _store(self, sk: bytes, timestamp: int) -> None:
        self.session_key_store[len(self.session_key_store)] = (sk, timestamp)
