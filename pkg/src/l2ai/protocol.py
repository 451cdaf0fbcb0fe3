"""Three-factor authentication and key-exchange flows.

Two sides: the hospital authentication server, which owns the ledger and
the master secret, and the user gateway, which holds the human factors
(identity, password, biometric) and a ledger-resident smart card.

Flow summary. Token issuance seals a fresh token under the server secret
and anchors its digest on the ledger. Registration binds the user's factors
to the token and ends with the card on the ledger; the card stores only
masked values, so neither the card nor the chain reveals identity, password,
or token. Login checks the factors locally against the card verifier, then
builds a one-time authentication request; the server resolves the request
through the ledger, answers with a key-confirmation message, and re-keys
the card's pseudonymous fields so no wire or ledger value repeats across
sessions. Credential update swaps password/biometric on the card; an
authorization update swaps the token (and so the card's authorization
index) without touching the user's factors.

All multi-field hash inputs are raw concatenations of fixed-width fields
(digests 20 bytes, timestamps 8-byte big-endian). Where a 160-bit value
must be XOR-combined with a pair of fields, the pair is first compressed
with concat_mask. The per-side operation counts of each flow are pinned by
the metrics tests; change them only on purpose.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .ledger import (
    BlockAddress, IdentityIndex, Ledger, NotFound, SmartCard, TokenRecord,
)
from .permissions import PermissionTable, Role
from .primitives import (
    WIDTH, BioTemplate, Ciphertext, Digest160, HelperData, PrimitiveOps,
    RecoveryFailure, SimClock, is_fresh, open_sealed, pack_ts, seal,
    sha256_160, unpack_ts,
)

DEFAULT_DELTA_T = 2000  # freshness window, simulated milliseconds

MSG1_WIDTH = 8 + 3 * WIDTH      # 68 bytes
MSG2_WIDTH = 2 * WIDTH + 8      # 48 bytes
REG_REQUEST_WIDTH = 3 * WIDTH   # 60 bytes
PROVISIONAL_WIDTH = 5 * WIDTH   # 100 bytes


class Reject(Exception):
    """Base class for protocol-level rejections."""


class Stale(Reject):
    """Timestamp outside the freshness window."""


class UnknownPrincipal(Reject):
    """Recovered pseudo-identity or token digest has no live ledger record."""


class Unauthorized(Reject):
    """Token role does not grant the requested scope at this time."""


class BadMac(Reject):
    """Authentication digest mismatch."""


class LocalVerifyFailed(Reject):
    """Card check failed: wrong password or biometric beyond tolerance."""


class UnknownToken(Reject):
    """Registration presented a token digest that is not live on the ledger."""


class InvalidRole(Reject):
    """Token requested for a role the permission table does not know."""


class UnexpectedMessage(Reject):
    """Message arrived with no protocol state expecting it."""


# --- domain records -----------------------------------------------------------

@dataclass(frozen=True)
class Credentials:
    """The user's three factors."""

    user_id: Digest160
    password: bytes
    bio: BioTemplate


@dataclass(frozen=True)
class Token:
    """Access token as handed to the user out of band."""

    t_g: Digest160
    role: Role


@dataclass(frozen=True)
class UserScratch:
    """Gateway-held values alive only between the registration request and
    card finalization; dropped (token included) once the card is built."""

    user_id: Digest160
    b_i: Digest160
    pwd_i: Digest160
    tau: HelperData
    t_g: Digest160


@dataclass(frozen=True)
class UserSession:
    """User-side login context awaiting the server's confirmation."""

    c_i: Digest160
    w1: Digest160
    t1: int


@dataclass(frozen=True)
class AuthTranscript:
    """Server-side record of one accepted key exchange."""

    c_i: Digest160
    w1: Digest160
    m1: Digest160
    m2: Digest160
    m3: Digest160
    sk: Digest160
    n_s: Digest160
    t1: int
    t2: int


# --- wire messages ---------------------------------------------------------------

@dataclass(frozen=True)
class RegRequest:
    """Registration request: token digest, masked identity, password digest."""

    x: Digest160
    did: Digest160
    pwd: Digest160

    def to_bytes(self) -> bytes:
        return self.x.value + self.did.value + self.pwd.value

    @classmethod
    def from_bytes(cls, raw: bytes) -> "RegRequest":
        if len(raw) != REG_REQUEST_WIDTH:
            raise ValueError(f"registration request must be {REG_REQUEST_WIDTH} bytes")
        return cls(x=Digest160(raw[:WIDTH]), did=Digest160(raw[WIDTH:2 * WIDTH]),
                   pwd=Digest160(raw[2 * WIDTH:]))


@dataclass(frozen=True)
class ProvisionalCard:
    """Server's registration reply; the gateway folds it into the card."""

    k_i: Digest160
    eid_i: Digest160
    hid_hms: Digest160
    r_hms: Digest160
    ax_ui: Digest160

    def to_bytes(self) -> bytes:
        return (self.k_i.value + self.eid_i.value + self.hid_hms.value +
                self.r_hms.value + self.ax_ui.value)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "ProvisionalCard":
        if len(raw) != PROVISIONAL_WIDTH:
            raise ValueError(f"provisional card must be {PROVISIONAL_WIDTH} bytes")
        parts = [Digest160(raw[i * WIDTH:(i + 1) * WIDTH]) for i in range(5)]
        return cls(*parts)


@dataclass(frozen=True)
class Msg1:
    """Authentication request: timestamp, proof digest, masked pseudonym,
    authorization index."""

    t1: int
    m1: Digest160
    eid: Digest160
    ax: Digest160

    def to_bytes(self) -> bytes:
        return pack_ts(self.t1) + self.m1.value + self.eid.value + self.ax.value

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Msg1":
        if len(raw) != MSG1_WIDTH:
            raise ValueError(f"authentication request must be {MSG1_WIDTH} bytes")
        return cls(t1=unpack_ts(raw[:8]), m1=Digest160(raw[8:8 + WIDTH]),
                   eid=Digest160(raw[8 + WIDTH:8 + 2 * WIDTH]),
                   ax=Digest160(raw[8 + 2 * WIDTH:]))


@dataclass(frozen=True)
class Msg2:
    """Server reply: key confirmation digest, masked session key, timestamp."""

    m3: Digest160
    m2: Digest160
    t2: int

    def to_bytes(self) -> bytes:
        return self.m3.value + self.m2.value + pack_ts(self.t2)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Msg2":
        if len(raw) != MSG2_WIDTH:
            raise ValueError(f"server reply must be {MSG2_WIDTH} bytes")
        return cls(m3=Digest160(raw[:WIDTH]), m2=Digest160(raw[WIDTH:2 * WIDTH]),
                   t2=unpack_ts(raw[2 * WIDTH:]))


# --- user-side flows --------------------------------------------------------------

def register_request(ops: PrimitiveOps, creds: Credentials,
                     token: Token) -> tuple[RegRequest, UserScratch]:
    """Bind the three factors to the token and build the registration request."""
    sigma, tau = ops.fe_gen(creds.bio)
    b_i = ops.hash(sigma.value)                          # biometric key digest
    x = ops.hash(token.t_g.value)                        # token index digest
    pwd = ops.hash(creds.password + b_i.value)           # salted password digest
    did = ops.xor(creds.user_id, ops.hash(x.value + token.t_g.value))
    scratch = UserScratch(user_id=creds.user_id, b_i=b_i, pwd_i=pwd,
                          tau=tau, t_g=token.t_g)
    return RegRequest(x=x, did=did, pwd=pwd), scratch


def finalize_card(ops: PrimitiveOps, provisional: ProvisionalCard,
                  scratch: UserScratch) -> SmartCard:
    """Fold the server's reply into the final card; the provisional card key
    is masked under the factors and then dropped."""
    # recover the pseudo-identity for the session; the card itself keeps
    # only the masked form
    _d_tid = ops.xor(scratch.user_id, provisional.r_hms)
    e_i = ops.xor(provisional.k_i, ops.hash(scratch.pwd_i.value + scratch.b_i.value))
    f_i = ops.hash(ops.xor(ops.xor(scratch.pwd_i, provisional.k_i), scratch.b_i).value)
    return SmartCard(e_i=e_i, f_i=f_i, eid_i=provisional.eid_i,
                     r_hms=provisional.r_hms, hid_hms=provisional.hid_hms,
                     ax_ui=provisional.ax_ui, tau=scratch.tau,
                     card_uid=scratch.user_id)


def login(ops: PrimitiveOps, clock: SimClock, creds: Credentials,
          card: SmartCard) -> tuple[Msg1, UserSession]:
    """Check the factors against the card, then build the authentication
    request. Raises LocalVerifyFailed without touching the wire."""
    try:
        sigma = ops.fe_rep(creds.bio, card.tau)
    except RecoveryFailure:
        raise LocalVerifyFailed("biometric beyond tolerance") from None
    b_i = ops.hash(sigma.value)
    pwd = ops.hash(creds.password + b_i.value)
    d_tid = ops.xor(creds.user_id, card.r_hms)
    k_i = ops.xor(card.e_i, ops.hash(pwd.value + b_i.value))
    f_check = ops.hash(ops.xor(ops.xor(pwd, k_i), b_i).value)
    if f_check != card.f_i:
        raise LocalVerifyFailed("card verifier mismatch")

    c_i = ops.xor(k_i, pwd)
    server_pair = ops.xor(card.hid_hms, d_tid)       # unmasks the server binding
    w1 = ops.hash(d_tid.value + server_pair.value)
    t1 = clock.now()
    m1 = ops.hash(c_i.value + pack_ts(t1) + w1.value)
    return (Msg1(t1=t1, m1=m1, eid=card.eid_i, ax=card.ax_ui),
            UserSession(c_i=c_i, w1=w1, t1=t1))


def verify_server(ops: PrimitiveOps, clock: SimClock, delta_t: int,
                  session: UserSession, msg2: Msg2) -> Digest160:
    """Check the server's reply and release the session key."""
    if not is_fresh(clock.now(), msg2.t2, delta_t):
        raise Stale("server reply timestamp outside the freshness window")
    sk = ops.xor(msg2.m2, session.w1)
    m3_check = ops.hash(session.c_i.value + pack_ts(msg2.t2) +
                        session.w1.value + sk.value)
    if m3_check != msg2.m3:
        raise BadMac("server key confirmation mismatch")
    return sk


def update_credentials(ops: PrimitiveOps, creds: Credentials, new_password: bytes,
                       new_bio: BioTemplate, card: SmartCard) -> SmartCard:
    """Re-key the card under a new password/biometric without a server
    round trip. The stored card key carries the password digest as a mask,
    so it is re-masked here; the invariant is the underlying server binding
    (card key XOR password digest). The caller publishes the returned card."""
    try:
        sigma_old = ops.fe_rep(creds.bio, card.tau)
    except RecoveryFailure:
        raise LocalVerifyFailed("biometric beyond tolerance") from None
    b_old = ops.hash(sigma_old.value)
    pwd_old = ops.hash(creds.password + b_old.value)
    k_old = ops.xor(card.e_i, ops.hash(pwd_old.value + b_old.value))
    f_check = ops.hash(ops.xor(ops.xor(pwd_old, k_old), b_old).value)
    if f_check != card.f_i:
        raise LocalVerifyFailed("card verifier mismatch")

    sigma_new, tau_new = ops.fe_gen(new_bio)
    b_new = ops.hash(sigma_new.value)
    pwd_new = ops.hash(new_password + b_new.value)
    k_new = ops.xor(ops.xor(k_old, pwd_old), pwd_new)
    e_new = ops.xor(k_new, ops.hash(pwd_new.value + b_new.value))
    f_new = ops.hash(ops.xor(ops.xor(pwd_new, k_new), b_new).value)
    return replace(card, e_i=e_new, f_i=f_new, tau=tau_new)


# --- hospital server ---------------------------------------------------------------

class HospitalServer:
    """Authentication server state: master secret, ledger handle, permission
    table, token-role registry, and cached digests of the static secrets.

    h(S_HMS) and h(ID_HMS || S_HMS) depend only on setup-time secrets, so
    they are computed once here; per-request hash counts rely on that.
    """

    def __init__(self, ops: PrimitiveOps, clock: SimClock, ledger: Ledger,
                 perm_table: PermissionTable, delta_t: int = DEFAULT_DELTA_T):
        self.ops = ops
        self.clock = clock
        self.ledger = ledger
        self.perm_table = perm_table
        self.delta_t = delta_t
        self.id_hms = ops.rand_digest()
        self.s_hms = ops.rand_digest()
        self._h_s = ops.hash(self.s_hms.value)
        self._h_pair = ops.hash(self.id_hms.value + self.s_hms.value)
        self.token_roles: dict[bytes, Role] = {}
        self.transcripts: list[AuthTranscript] = []

    @classmethod
    def setup(cls, seed: int, clock: SimClock, ledger: Ledger,
              perm_table: PermissionTable | None = None,
              delta_t: int = DEFAULT_DELTA_T) -> "HospitalServer":
        return cls(PrimitiveOps(seed), clock, ledger,
                   perm_table or PermissionTable.default(), delta_t)

    # --- token issuance ------------------------------------------------------------

    def issue_token(self, national_code: bytes, role: Role) -> Token:
        """Draw a fresh token for a vetted applicant, seal it under the
        master secret, and anchor its digest on the ledger. The token itself
        is returned for out-of-band delivery; the national code is the
        vetting input and is deliberately not recorded."""
        if role not in self.perm_table:
            raise InvalidRole(f"no permission row for role {role!r}")
        ops = self.ops
        t_g = ops.rand_digest()
        x = ops.hash(t_g.value)
        y = ops.enc(self.s_hms, t_g.value)
        self.ledger.append(TokenRecord(x=x, y=y))
        self.token_roles[x.value] = role
        return Token(t_g=t_g, role=role)

    # --- registration ----------------------------------------------------------------

    def register(self, req: RegRequest) -> ProvisionalCard:
        """Admit a token holder: recover their identity, derive the card
        values, and anchor the identity index."""
        ops = self.ops
        if not self.ledger.any_digest(req.x):
            raise UnknownToken("token digest not live on the ledger")
        record = self.ledger.get_token(req.x)
        t_g = Digest160(ops.dec(self.s_hms, record.y))

        user_id = ops.xor(req.did, ops.hash(req.x.value + t_g.value))
        if self.ledger.live_index_for(user_id) is not None:
            raise Reject("identity already registered")
        r1 = ops.rand_digest()
        d_tid = ops.xor(user_id, r1)
        ax = ops.xor(t_g, ops.concat_mask(d_tid, self.id_hms))
        k_i = ops.xor(ops.hash(self.s_hms.value + user_id.value), req.pwd)
        eid = ops.xor(d_tid, self._h_s)
        hid = ops.xor(self._h_pair, d_tid)

        self.ledger.append(IdentityIndex(h_dtid=ops.hash(d_tid.value),
                                         user_id=user_id))
        return ProvisionalCard(k_i=k_i, eid_i=eid, hid_hms=hid, r_hms=r1, ax_ui=ax)

    # --- authentication and key exchange ----------------------------------------------

    def authenticate(self, msg1: Msg1, scope: str) -> tuple[Msg2, AuthTranscript]:
        """Process an authentication request. Checks run in a fixed order —
        freshness, principal, authorization, proof — and nothing is written
        until every check has passed, so a rejected request leaves no trace."""
        ops = self.ops
        now = self.clock.now()
        if not is_fresh(now, msg1.t1, self.delta_t):
            raise Stale("request timestamp outside the freshness window")

        # unmask the pseudo-identity and the token
        d_tid = ops.xor(msg1.eid, self._h_s)
        t_g = ops.xor(msg1.ax, ops.concat_mask(d_tid, self.id_hms))
        h_dtid = ops.hash(d_tid.value)
        h_tg = ops.hash(t_g.value)
        if not (self.ledger.any_digest(h_dtid) and self.ledger.any_digest(h_tg)):
            raise UnknownPrincipal("pseudo-identity or token not live on the ledger")

        role = self.token_roles.get(h_tg.value)
        if role is None:
            raise UnknownPrincipal("token has no registered role")
        if not self.perm_table.allows(role, scope, now):
            raise Unauthorized(f"role {role.value} may not {scope} now")

        try:
            user_id = self.ledger.get_identity(h_dtid)
        except NotFound:
            raise UnknownPrincipal("identity index vanished") from None
        c_i = ops.hash(self.s_hms.value + user_id.value)
        w1 = ops.hash(d_tid.value + self._h_pair.value)
        m1_check = ops.hash(c_i.value + pack_ts(msg1.t1) + w1.value)
        if m1_check != msg1.m1:
            raise BadMac("authentication proof mismatch")

        # accepted: derive the session key and the confirmation message
        n_s = ops.rand_digest()
        t2 = self.clock.now()
        sk = ops.hash(w1.value + n_s.value)
        m2 = ops.xor(sk, w1)
        m3 = ops.hash(c_i.value + pack_ts(t2) + w1.value + sk.value)

        # re-key the pseudonymous card fields so nothing repeats next session
        r2 = ops.rand_digest()
        d_new = ops.xor(user_id, r2)
        ax_new = ops.xor(t_g, ops.concat_mask(d_new, self.id_hms))
        eid_new = ops.xor(d_new, self._h_s)
        hid_new = ops.xor(self._h_pair, d_new)
        try:
            card = self.ledger.get_card(user_id)
        except NotFound:
            raise UnknownPrincipal("no card published for the identity") from None
        self.ledger.put_card(replace(card, eid_i=eid_new, ax_ui=ax_new,
                                     hid_hms=hid_new, r_hms=r2))
        self.ledger.replace_index(h_dtid, ops.hash(d_new.value), user_id)

        transcript = AuthTranscript(c_i=c_i, w1=w1, m1=msg1.m1, m2=m2, m3=m3,
                                    sk=sk, n_s=n_s, t1=msg1.t1, t2=t2)
        self.transcripts.append(transcript)
        return Msg2(m3=m3, m2=m2, t2=t2), transcript

    # --- authorization ----------------------------------------------------------------

    def authorize(self, role: Role, scope: str, at_ms: int) -> bool:
        return self.perm_table.allows(role, scope, at_ms)

    def update_authorization(self, user_id: Digest160, role: Role) -> Token:
        """Swap the user's token for one carrying the given role: revoke the
        old token, anchor the new one, and re-point the card's
        authorization index. The user's factors and card key stay put."""
        if role not in self.perm_table:
            raise InvalidRole(f"no permission row for role {role!r}")
        ops = self.ops
        try:
            card = self.ledger.get_card(user_id)
        except NotFound:
            raise UnknownPrincipal("no card for the given identity") from None

        # recover the current pseudo-identity and the old token from the card
        d_tid = ops.xor(card.eid_i, self._h_s)
        mask = ops.concat_mask(d_tid, self.id_hms)
        t_g_old = ops.xor(card.ax_ui, mask)
        x_old = ops.hash(t_g_old.value)
        self.ledger.revoke_token(x_old)
        self.token_roles.pop(x_old.value, None)

        t_g_new = ops.rand_digest()
        x_new = ops.hash(t_g_new.value)
        self.ledger.append(TokenRecord(x=x_new, y=ops.enc(self.s_hms, t_g_new.value)))
        self.token_roles[x_new.value] = role

        self.ledger.put_card(replace(card, ax_ui=ops.xor(t_g_new, mask)))
        return Token(t_g=t_g_new, role=role)


# --- user gateway -----------------------------------------------------------------

class UserGateway:
    """The user's terminal: holds the factors, drives the user-side flows,
    and keeps the card's ledger address sealed under a device-local key
    (storage plumbing, outside protocol op accounting)."""

    def __init__(self, name: str, seed: int, clock: SimClock, ledger: Ledger,
                 creds: Credentials, delta_t: int = DEFAULT_DELTA_T):
        self.name = name
        self.ops = PrimitiveOps(seed)
        self.clock = clock
        self.ledger = ledger
        self.creds = creds
        self.delta_t = delta_t
        self._device_key = Digest160(sha256_160(b"device-key:" + str(seed).encode()))
        self._sealed_address: bytes | None = None
        self._scratch: UserScratch | None = None
        self._session: UserSession | None = None
        self.session_key: Digest160 | None = None

    # registration

    def build_registration(self, token: Token) -> RegRequest:
        req, self._scratch = register_request(self.ops, self.creds, token)
        return req

    def accept_provisional(self, provisional: ProvisionalCard) -> BlockAddress:
        if self._scratch is None:
            raise UnexpectedMessage("no registration in progress")
        card = finalize_card(self.ops, provisional, self._scratch)
        self._scratch = None                      # token and scratch are dropped here
        address = self.ledger.put_card(card)
        self._sealed_address = seal(self._device_key, address.to_bytes(),
                                    nonce=self.ops.rng.randbytes(16)).to_bytes()
        return address

    # card access

    def current_card(self) -> SmartCard:
        if self._sealed_address is None:
            raise UnexpectedMessage("gateway holds no card")
        raw = open_sealed(self._device_key, Ciphertext.from_bytes(self._sealed_address))
        return self.ledger.get_card(BlockAddress.from_bytes(raw).card_uid)

    # login and verification

    def start_login(self) -> Msg1:
        msg1, self._session = login(self.ops, self.clock, self.creds,
                                    self.current_card())
        return msg1

    def accept_server_reply(self, msg2: Msg2) -> Digest160:
        if self._session is None:
            raise UnexpectedMessage("no login in progress")
        sk = verify_server(self.ops, self.clock, self.delta_t, self._session, msg2)
        self._session = None
        self.session_key = sk
        return sk

    # credential update

    def change_credentials(self, new_password: bytes, new_bio: BioTemplate) -> None:
        card = update_credentials(self.ops, self.creds, new_password, new_bio,
                                  self.current_card())
        self.ledger.put_card(card)
        self.creds = Credentials(user_id=self.creds.user_id,
                                 password=new_password, bio=new_bio)
