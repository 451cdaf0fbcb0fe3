"""Simulation harness: a World wires one server, one ledger, one channel,
and any number of user gateways together, runs scenario scripts or
programmatic sessions over them, and writes line-oriented reports.

Outcome strings, not exceptions, cross the harness boundary: channel
delivery handlers catch protocol rejections and return "rejected <Class>",
so an attack scenario runs to completion and the run is judged afterwards.

The invariant checker encodes what a run must satisfy regardless of the
adversary script:

  * the ledger chain verifies;
  * no tampered authentication delivery is accepted;
  * each authentication request is accepted at most once across its
    original delivery and any replays (a replay of a message whose original
    was suppressed is a delayed delivery and may legitimately succeed);
  * sessions the adversary never touched complete with equal session keys
    on both sides.

Registration traffic is assumed to run over a protected enrollment channel,
so a scenario that tampers with it taints the user instead of proving
anything about the authentication protocol; tainted users are exempt from
the completion invariant but their later traffic still must not break the
others.

Per-phase operation counts are measured by snapshotting each side's
counters around the phase call; EXPECTED_OPS pins the per-call costs the
metrics suite enforces.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, replace

from .channel import Channel, DEFAULT_DELAY, Envelope, Scenario, parse_scenario
from .ledger import Ledger
from .permissions import DEFAULT_SCOPE, PermissionTable, Role, SCOPE_CATALOG
from .primitives import Digest160, OpCounters, PrimitiveOps, SimClock, sha256_160
from .protocol import (
    DEFAULT_DELTA_T, MSG1_WIDTH, MSG2_WIDTH, PROVISIONAL_WIDTH,
    REG_REQUEST_WIDTH, Credentials, HospitalServer, Msg1, Msg2,
    ProvisionalCard, Reject, RegRequest, UserGateway,
)

SERVER = "hms"

WIRE_KINDS = {
    MSG1_WIDTH: "auth-request",
    MSG2_WIDTH: "server-reply",
    REG_REQUEST_WIDTH: "reg-request",
    PROVISIONAL_WIDTH: "provisional",
}

# per-call operation costs, pinned; the metrics suite and the acceptance
# tests enforce these numbers exactly
EXPECTED_OPS = {
    ("user", "register"):      {"hash": 4, "xor": 1, "enc": 0, "dec": 0, "fe": 1},
    ("user", "finalize"):      {"hash": 2, "xor": 4, "enc": 0, "dec": 0, "fe": 0},
    ("user", "login"):         {"hash": 6, "xor": 6, "enc": 0, "dec": 0, "fe": 1},
    ("user", "verify"):        {"hash": 1, "xor": 1, "enc": 0, "dec": 0, "fe": 0},
    ("user", "update-creds"):  {"hash": 8, "xor": 8, "enc": 0, "dec": 0, "fe": 2},
    ("server", "issue-token"): {"hash": 1, "xor": 0, "enc": 1, "dec": 0, "fe": 0},
    ("server", "register"):    {"hash": 4, "xor": 6, "enc": 0, "dec": 1, "fe": 0},
    ("server", "auth"):        {"hash": 10, "xor": 7, "enc": 0, "dec": 0, "fe": 0},
    ("server", "update-auth"): {"hash": 3, "xor": 3, "enc": 1, "dec": 0, "fe": 0},
}

OP_KEYS = ("hash", "xor", "enc", "dec", "fe")


@dataclass
class Session:
    """One authentication attempt, from the user's login call to the final
    verdict. Wire-less local failures have no msg1 envelope."""

    user: str
    scope: str
    msg1_env: Envelope | None = None
    local_reject: str | None = None
    reply_seq: int | None = None
    reply_env: Envelope | None = None
    sk_user: Digest160 | None = None
    sk_server: Digest160 | None = None
    server_reject: str | None = None
    user_reject: str | None = None

    @property
    def outcome(self) -> str:
        if self.local_reject:
            return self.local_reject
        if self.sk_user is not None:
            return "verified"
        return self.server_reject or self.user_reject or "pending"


class World:
    def __init__(self, seed: int = 42, delta_t: int = DEFAULT_DELTA_T,
                 perm_table: PermissionTable | None = None,
                 base_delay: int = DEFAULT_DELAY):
        self.seed = seed
        self.clock = SimClock()
        self.ledger = Ledger()
        self.server = HospitalServer.setup(seed, self.clock, self.ledger,
                                           perm_table, delta_t)
        self.channel = Channel(self.clock, base_delay)
        self.users: dict[str, UserGateway] = {}
        self.handlers = {SERVER: self._server_handler}
        self.sessions: list[Session] = []
        self.step_notes: list[str] = []
        self.tainted: set[str] = set()
        self.phase_ops: dict[tuple[str, str], Counter] = {}
        self.phase_calls: Counter = Counter()
        self.width_counts: Counter = Counter()
        self._cred_draw: dict[str, PrimitiveOps] = {}
        self._by_msg1_seq: dict[int, Session] = {}
        self._reply_to_session: dict[int, Session] = {}
        self._scope_by_seq: dict[int, str] = {}
        self._reg_user_by_seq: dict[int, str] = {}
        self._prov_user_by_seq: dict[int, str] = {}

    # --- entities ------------------------------------------------------------

    def _user_seed(self, name: str) -> int:
        raw = sha256_160(f"user:{self.seed}:{name}".encode())
        return int.from_bytes(raw[:8], "big")

    def get_user(self, name: str) -> UserGateway:
        if name not in self.users:
            draw = PrimitiveOps(self._user_seed(name) ^ 0x5EED)
            creds = Credentials(user_id=draw.rand_digest(),
                                password=f"pw-{name}".encode(),
                                bio=draw.rand_template())
            self.users[name] = UserGateway(name, self._user_seed(name), self.clock,
                                           self.ledger, creds,
                                           delta_t=self.server.delta_t)
            self._cred_draw[name] = draw
            self.handlers[name] = lambda env, n=name: self._user_handler(n, env)
        return self.users[name]

    # --- instrumentation -------------------------------------------------------

    def _bump(self, side: str, phase: str, ops: PrimitiveOps,
              before: OpCounters) -> None:
        delta = ops.counters.delta(before)
        bucket = self.phase_ops.setdefault((side, phase), Counter())
        bucket.update(delta.as_dict())
        self.phase_calls[(side, phase)] += 1

    def _send(self, src: str, dst: str, payload: bytes) -> Envelope:
        self.width_counts[len(payload)] += 1
        return self.channel.send(src, dst, payload)

    # --- honest steps -------------------------------------------------------------

    def register_user(self, name: str, role: Role = Role.DOCTOR) -> None:
        gateway = self.get_user(name)
        before = self.server.ops.counters.snapshot()
        token = self.server.issue_token(name.encode(), role)   # out-of-band delivery
        self._bump("server", "issue-token", self.server.ops, before)
        before = gateway.ops.counters.snapshot()
        req = gateway.build_registration(token)
        self._bump("user", "register", gateway.ops, before)
        env = self._send(name, SERVER, req.to_bytes())
        self._reg_user_by_seq[env.seq] = name

    def auth_attempt(self, name: str, scope: str = DEFAULT_SCOPE,
                     creds: Credentials | None = None) -> Session:
        gateway = self.get_user(name)
        original = gateway.creds
        if creds is not None:
            gateway.creds = creds
        before = gateway.ops.counters.snapshot()
        try:
            msg1 = gateway.start_login()
        except Reject as exc:
            self._bump("user", "login", gateway.ops, before)
            session = Session(user=name, scope=scope,
                              local_reject=f"rejected {type(exc).__name__}")
            self.sessions.append(session)
            return session
        finally:
            gateway.creds = original
        self._bump("user", "login", gateway.ops, before)
        env = self._send(name, SERVER, msg1.to_bytes())
        session = Session(user=name, scope=scope, msg1_env=env)
        self._by_msg1_seq[env.seq] = session
        self._scope_by_seq[env.seq] = scope
        self.sessions.append(session)
        return session

    def update_user_credentials(self, name: str) -> None:
        gateway = self.get_user(name)
        serial = self.phase_calls[("user", "update-creds")] + 1
        new_password = f"pw-{name}-v{serial}".encode()
        new_bio = self._cred_draw[name].rand_template()
        before = gateway.ops.counters.snapshot()
        try:
            gateway.change_credentials(new_password, new_bio)
        except Reject as exc:
            self.step_notes.append(f"step kind=update-creds user={name} "
                                   f"result=rejected {type(exc).__name__}")
            return
        finally:
            self._bump("user", "update-creds", gateway.ops, before)
        self.step_notes.append(f"step kind=update-creds user={name} result=ok")

    def update_authorization(self, name: str, role: Role) -> None:
        gateway = self.get_user(name)
        before = self.server.ops.counters.snapshot()
        try:
            self.server.update_authorization(gateway.creds.user_id, role)
        except Reject as exc:
            self.step_notes.append(f"step kind=update-auth user={name} "
                                   f"result=rejected {type(exc).__name__}")
            return
        finally:
            self._bump("server", "update-auth", self.server.ops, before)
        self.step_notes.append(f"step kind=update-auth user={name} "
                               f"result=ok role={role.value}")

    def drain(self, strict: bool = False) -> None:
        self.channel.run(self.handlers, strict=strict)

    # --- delivery handlers ------------------------------------------------------

    def _server_handler(self, env: Envelope) -> str:
        width = len(env.payload)
        origin = env.replay_of if env.replay_of is not None else env.seq
        if width == REG_REQUEST_WIDTH:
            if env.touched and origin in self._reg_user_by_seq:
                self.tainted.add(self._reg_user_by_seq[origin])
            before = self.server.ops.counters.snapshot()
            try:
                provisional = self.server.register(RegRequest.from_bytes(env.payload))
            except (Reject, ValueError) as exc:
                return f"rejected {type(exc).__name__}"
            finally:
                self._bump("server", "register", self.server.ops, before)
            reply = self._send(SERVER, env.src, provisional.to_bytes())
            if origin in self._reg_user_by_seq:
                self._prov_user_by_seq[reply.seq] = self._reg_user_by_seq[origin]
            return "provisional-issued"

        if width == MSG1_WIDTH:
            scope = self._scope_by_seq.get(origin, DEFAULT_SCOPE)
            before = self.server.ops.counters.snapshot()
            try:
                msg2, transcript = self.server.authenticate(
                    Msg1.from_bytes(env.payload), scope)
            except (Reject, ValueError) as exc:
                return f"rejected {type(exc).__name__}"
            finally:
                self._bump("server", "auth", self.server.ops, before)
            reply = self._send(SERVER, env.src, msg2.to_bytes())
            session = self._by_msg1_seq.get(origin)
            if session is not None:
                session.sk_server = transcript.sk
                session.reply_seq = reply.seq
                self._reply_to_session[reply.seq] = session
            return f"accepted sk={transcript.sk.hex()[:8]}"

        return f"rejected UnexpectedMessage ({width}B to server)"

    def _user_handler(self, name: str, env: Envelope) -> str:
        gateway = self.users[name]
        width = len(env.payload)
        origin = env.replay_of if env.replay_of is not None else env.seq
        if width == PROVISIONAL_WIDTH:
            if env.touched and origin in self._prov_user_by_seq:
                self.tainted.add(self._prov_user_by_seq[origin])
            before = gateway.ops.counters.snapshot()
            try:
                gateway.accept_provisional(ProvisionalCard.from_bytes(env.payload))
            except (Reject, ValueError) as exc:
                return f"rejected {type(exc).__name__}"
            finally:
                self._bump("user", "finalize", gateway.ops, before)
            return "registered"

        if width == MSG2_WIDTH:
            session = self._reply_to_session.get(origin)
            if session is not None and env.seq > 0:
                session.reply_env = env
            before = gateway.ops.counters.snapshot()
            try:
                sk = gateway.accept_server_reply(Msg2.from_bytes(env.payload))
            except (Reject, ValueError) as exc:
                if session is not None and env.seq > 0:
                    session.user_reject = f"rejected {type(exc).__name__}"
                return f"rejected {type(exc).__name__}"
            finally:
                self._bump("user", "verify", gateway.ops, before)
            if session is not None:
                session.sk_user = sk
            return f"verified sk={sk.hex()[:8]}"

        return f"rejected UnexpectedMessage ({width}B to {name})"

    # --- post-run resolution ------------------------------------------------------

    def finalize(self) -> None:
        """Resolve drops into session state and user taint; call after the
        final drain."""
        delivered = {env.seq for env, _ in self.channel.delivered}
        for env, outcome in self.channel.delivered:
            if env.seq > 0 and env.seq in self._by_msg1_seq and \
                    outcome.startswith("rejected"):
                self._by_msg1_seq[env.seq].server_reject = outcome
        for seq, user in self._reg_user_by_seq.items():
            if seq not in delivered:
                self.tainted.add(user)
        for seq, user in self._prov_user_by_seq.items():
            if seq not in delivered:
                self.tainted.add(user)

    # --- report ---------------------------------------------------------------------

    def report_lines(self, violations: list[str] | None = None) -> list[str]:
        ch = self.channel
        delivered = {env.seq for env, _ in ch.delivered}
        sends = ch._next_seq - 1
        drops = sum(1 for s in range(1, sends + 1) if s not in delivered
                    and not any(e.seq == s for (_, _, e) in ch._queue))
        replays = sum(1 for env, _ in ch.delivered if env.replay_of is not None)
        tampered = sum(1 for env, _ in ch.delivered if env.tampered)

        lines = [
            "l2ai-report v=1",
            f"config seed={self.seed} delta-t={self.server.delta_t} "
            f"base-delay={ch.base_delay}",
            "algo hash=sha256-160 cipher=sha256-stream+mac160 "
            "sketch=repetition-5x keywidth=160",
        ]
        for session in self.sessions:
            seq = session.msg1_env.seq if session.msg1_env else "-"
            t1 = session.msg1_env.send_time if session.msg1_env else "-"
            sk = session.sk_user.hex()[:8] if session.sk_user else "-"
            lines.append(f"session user={session.user} scope={session.scope} "
                         f"msg1-seq={seq} t1={t1} outcome={session.outcome} sk={sk}")
        lines.extend(self.step_notes)
        for (side, phase) in sorted(self.phase_ops):
            ops = self.phase_ops[(side, phase)]
            calls = self.phase_calls[(side, phase)]
            counts = " ".join(f"{k}={ops.get(k, 0)}" for k in OP_KEYS)
            lines.append(f"ops side={side} phase={phase} calls={calls} {counts}")
        for width in sorted(self.width_counts):
            kind = WIRE_KINDS.get(width, "other")
            lines.append(f"wire kind={kind} width={width} "
                         f"count={self.width_counts[width]}")
        for text in violations or []:
            lines.append(f"violation {text}")

        outcomes = Counter(s.outcome for s in self.sessions)
        verified = outcomes.pop("verified", 0)
        pending = outcomes.pop("pending", 0)
        local = sum(1 for s in self.sessions if s.local_reject)
        rejected = len(self.sessions) - verified - pending - local
        digest = sha256_160("\n".join(ch.log).encode()).hex()
        lines.extend([
            f"summary sessions={len(self.sessions)} verified={verified} "
            f"rejected={rejected} pending={pending} local={local}",
            f"summary sends={sends} deliveries={len(ch.delivered)} drops={drops} "
            f"replay-deliveries={replays} tampered-deliveries={tampered}",
            f"summary users={len(self.users)} tainted={len(self.tainted)}",
            f"summary ledger-blocks={len(self.ledger.blocks)} "
            f"chain-ok={'yes' if self.ledger.verify_chain() else 'NO'}",
            f"summary event-digest={digest}",
            f"summary violations={len(violations or [])}",
        ])
        return lines


# --- scenario execution --------------------------------------------------------------


@dataclass
class RunResult:
    world: World
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations

    def report_lines(self) -> list[str]:
        return self.world.report_lines(self.violations)


def check_invariants(world: World) -> list[str]:
    violations: list[str] = []
    if not world.ledger.verify_chain():
        violations.append("ledger chain verification failed")

    accepted_per_origin: Counter = Counter()
    for env, outcome in world.channel.delivered:
        accepted = not outcome.startswith("rejected")
        auth_wire = len(env.payload) in (MSG1_WIDTH, MSG2_WIDTH)
        if accepted and env.tampered and auth_wire:
            violations.append(f"tampered delivery seq={env.seq} accepted: {outcome}")
        if accepted and auth_wire:
            origin = env.replay_of if env.replay_of is not None else env.seq
            accepted_per_origin[origin] += 1
    for origin, count in sorted(accepted_per_origin.items()):
        if count > 1:
            violations.append(f"message seq={origin} accepted {count} times "
                              "(replay got through)")

    delivered = {env.seq for env, _ in world.channel.delivered}
    for session in world.sessions:
        if session.local_reject or session.user in world.tainted:
            continue
        env = session.msg1_env
        touched = env.tampered or env.seq not in delivered
        if session.reply_env is not None:
            touched = touched or session.reply_env.tampered
        if session.reply_seq is not None and session.reply_seq not in delivered:
            touched = True                         # reply dropped in flight
        if touched:
            continue
        if session.sk_user is None or session.sk_user != session.sk_server:
            violations.append(f"untouched session (user={session.user} "
                              f"seq={env.seq}) did not complete: {session.outcome}")
    for session in world.sessions:
        if session.sk_user is not None and session.sk_server is not None \
                and session.sk_user != session.sk_server:
            violations.append(f"session keys differ for user={session.user}")
    return violations


def run_scenario(world: World, scenario: Scenario) -> RunResult:
    scenario.arm(world.channel)
    for step in scenario.steps:
        if step.phase == "register":
            world.register_user(step.user, step.role)
        elif step.phase == "auth":
            world.auth_attempt(step.user, step.scope)
        elif step.phase == "update-creds":
            world.update_user_credentials(step.user)
        elif step.phase == "update-auth":
            world.update_authorization(step.user, step.role)
        world.drain(strict=False)
    world.drain(strict=True)
    world.finalize()
    return RunResult(world=world, violations=check_invariants(world))


# --- suites -------------------------------------------------------------------------

HONEST_SCENARIO = """\
honest register alice D
honest register bob N
honest auth alice
honest auth bob read-lab-results
honest update-creds alice
honest auth alice
honest update-auth bob P
honest auth bob read-own-records
"""


def suite_honest(seed: int = 42, rounds: int = 20, emit=print) -> bool:
    scenario = parse_scenario(HONEST_SCENARIO)
    ok = True
    for i in range(rounds):
        world = World(seed=seed + i)
        result = run_scenario(world, scenario)
        verified = sum(1 for s in world.sessions if s.outcome == "verified")
        keys = {s.sk_user.value for s in world.sessions if s.sk_user}
        good = result.ok and verified == len(world.sessions) == 4 \
            and len(keys) == verified
        ok &= good
        emit(f"{'ok' if good else 'FAIL'} honest seed={seed + i} "
             f"sessions={len(world.sessions)} verified={verified} "
             f"distinct-keys={len(keys)}")
        for violation in result.violations:
            emit(f"  violation: {violation}")
    return ok


# Each attack entry: scenario text, plus what must be true afterwards.
# Timeline arithmetic (base delay 50ms): register = two sends, each
# step advances the clock 100ms; the n-th step's sends start at (n-1)*100.

def _attack_cases() -> list[tuple[str, str, dict]]:
    return [
        ("replay-fresh-after-rekey",
         "honest register alice\nhonest auth alice\nreplay 3 180\n",
         {"replay_outcome": "rejected UnknownPrincipal", "verified": 1}),
        ("replay-stale",
         "honest register alice\nhonest auth alice\nreplay 3 2101\n",
         {"replay_outcome": "rejected Stale", "verified": 1}),
        ("tamper-msg1-proof",
         "honest register alice\nhonest auth alice\nmodify 3 10 ff\n",
         {"session_outcomes": ["rejected BadMac"], "verified": 0}),
        ("tamper-msg1-pseudonym",
         "honest register alice\nhonest auth alice\nmodify 3 30 01\n",
         {"session_outcomes": ["rejected UnknownPrincipal"], "verified": 0}),
        ("tamper-msg1-timestamp",
         "honest register alice\nhonest auth alice\nmodify 3 0 0000000000000fff\n",
         {"session_outcomes": ["rejected Stale"], "verified": 0}),
        ("tamper-msg2",
         "honest register alice\nhonest auth alice\nmodify 4 5 80\n",
         {"session_outcomes": ["rejected BadMac"], "verified": 0}),
        ("drop-msg1-then-clean-retry",
         "honest register alice\nhonest auth alice\nhonest auth alice\n"
         "drop alice hms 3\n",
         {"session_outcomes": ["pending", "verified"], "verified": 1}),
        ("drop-msg2-then-clean-retry",
         "honest register alice\nhonest auth alice\nhonest auth alice\n"
         "drop hms alice 4\n",
         {"session_outcomes": ["pending", "verified"], "verified": 1}),
        ("suppress-then-replay-is-delayed-delivery",
         "honest register alice\nhonest auth alice\n"
         "drop alice hms 3\nreplay 3 400\n",
         {"session_outcomes": ["verified"], "verified": 1}),
        ("replay-msg2-no-session",
         "honest register alice\nhonest auth alice\nreplay 4 500\n",
         {"replay_outcome": "rejected UnexpectedMessage", "verified": 1}),
    ]


def suite_attacks(seed: int = 42, emit=print) -> bool:
    ok = True
    for name, text, expect in _attack_cases():
        world = World(seed=seed)
        result = run_scenario(world, parse_scenario(text))
        problems = list(result.violations)
        verified = sum(1 for s in world.sessions if s.outcome == "verified")
        if verified != expect["verified"]:
            problems.append(f"expected {expect['verified']} verified, got {verified}")
        if "session_outcomes" in expect:
            got = [s.outcome for s in world.sessions]
            if got != expect["session_outcomes"]:
                problems.append(f"session outcomes {got} != "
                                f"{expect['session_outcomes']}")
        if "replay_outcome" in expect:
            replayed = [out for env, out in world.channel.delivered
                        if env.replay_of is not None]
            if replayed != [expect["replay_outcome"]]:
                problems.append(f"replay outcomes {replayed} != "
                                f"[{expect['replay_outcome']}]")
        ok &= not problems
        emit(f"{'ok' if not problems else 'FAIL'} attack {name}")
        for p in problems:
            emit(f"  problem: {p}")

    # authorization enforcement is not a wire attack; drive it directly
    world = World(seed=seed)
    world.register_user("carol", Role.PATIENT)
    world.drain()
    session = world.auth_attempt("carol", scope="write-prescription")
    world.drain()
    world.finalize()
    good = session.outcome == "rejected Unauthorized" \
        and world.ledger.verify_chain()
    ok &= good
    emit(f"{'ok' if good else 'FAIL'} attack scope-outside-role "
         f"(outcome={session.outcome})")
    return ok


def suite_metrics(seed: int = 42, emit=print) -> bool:
    world = World(seed=seed)
    result = run_scenario(world, parse_scenario(HONEST_SCENARIO))
    ok = result.ok
    for violation in result.violations:
        emit(f"FAIL metrics: {violation}")
    for key in sorted(EXPECTED_OPS):
        side, phase = key
        calls = world.phase_calls.get(key, 0)
        got = world.phase_ops.get(key, Counter())
        if calls == 0:
            ok = False
            emit(f"FAIL metrics side={side} phase={phase}: never exercised")
            continue
        expect = {k: v * calls for k, v in EXPECTED_OPS[key].items()}
        match = all(got.get(k, 0) == expect[k] for k in OP_KEYS)
        ok &= match
        counts = " ".join(f"{k}={got.get(k, 0)}/{expect[k]}" for k in OP_KEYS)
        emit(f"{'ok' if match else 'FAIL'} metrics side={side} phase={phase} "
             f"calls={calls} {counts}")
    widths = {
        MSG1_WIDTH: world.width_counts.get(MSG1_WIDTH, 0),
        MSG2_WIDTH: world.width_counts.get(MSG2_WIDTH, 0),
        REG_REQUEST_WIDTH: world.width_counts.get(REG_REQUEST_WIDTH, 0),
        PROVISIONAL_WIDTH: world.width_counts.get(PROVISIONAL_WIDTH, 0),
    }
    sizes_ok = widths[MSG1_WIDTH] == widths[MSG2_WIDTH] == 4 \
        and widths[REG_REQUEST_WIDTH] == widths[PROVISIONAL_WIDTH] == 2 \
        and set(world.width_counts) == set(WIRE_KINDS)
    ok &= sizes_ok
    emit(f"{'ok' if sizes_ok else 'FAIL'} metrics wire-widths "
         + " ".join(f"{w}B={n}" for w, n in sorted(widths.items())))
    user_session = EXPECTED_OPS[("user", "login")]["hash"] \
        + EXPECTED_OPS[("user", "verify")]["hash"]
    emit(f"ok metrics headline user-session-hashes={user_session} "
         f"server-auth-hashes={EXPECTED_OPS[('server', 'auth')]['hash']}")
    return ok


def suite_fuzz(seed: int = 42, sessions: int = 1000, users: int = 50,
               emit=print) -> bool:
    import random
    rng = random.Random(seed ^ 0xF022)
    world = World(seed=seed)
    roles = list(Role)
    user_roles: dict[str, Role] = {}
    for i in range(users):
        name = f"u{i:02d}"
        role = roles[i % len(roles)]
        world.register_user(name, role)
        user_roles[name] = role
    world.drain()

    def scope_for(role: Role) -> str:
        grant = world.server.perm_table.grants[role]
        pool = sorted(grant.scopes) if grant.scopes is not None else list(SCOPE_CATALOG)
        return rng.choice(pool)

    expected = Counter()
    problems: list[str] = []
    for i in range(sessions):
        name = rng.choice(sorted(user_roles))
        gateway = world.get_user(name)
        scope = scope_for(user_roles[name])
        kind = rng.random()
        if kind < 0.10:
            creds = replace(gateway.creds, password=b"wrong-" + gateway.creds.password)
            session = world.auth_attempt(name, scope, creds=creds)
            expected["wrong-password"] += 1
            if session.outcome != "rejected LocalVerifyFailed":
                problems.append(f"wrong password #{i}: {session.outcome}")
            if session.msg1_env is not None:
                problems.append(f"wrong password #{i} reached the wire")
            continue
        if kind < 0.30:
            blocks = rng.sample(range(51), rng.randint(1, 20))
            flips = [5 * b + off for b in blocks
                     for off in rng.sample(range(5), rng.randint(1, 2))]
            creds = replace(gateway.creds, bio=gateway.creds.bio.with_flips(flips))
            session = world.auth_attempt(name, scope, creds=creds)
            expected["noisy-bio"] += 1
        else:
            session = world.auth_attempt(name, scope)
            expected["honest"] += 1
        world.drain()
        if session.outcome != "verified":
            problems.append(f"session #{i} user={name} scope={scope}: "
                            f"{session.outcome}")
        world.clock.advance(rng.randint(1, 40))
    world.drain(strict=True)
    world.finalize()
    problems.extend(check_invariants(world))

    secret = world.server.s_hms.value
    wire = b"".join(world.channel.wire_history)
    chain = b"".join(block.payload for block in world.ledger.blocks)
    if secret in wire:
        problems.append("master secret bytes appeared on the wire")
    if secret in chain:
        problems.append("master secret bytes appeared in ledger payloads")

    emit(f"{'ok' if not problems else 'FAIL'} fuzz sessions={sessions} "
         f"users={users} mix=" +
         ",".join(f"{k}:{v}" for k, v in sorted(expected.items())) +
         f" wire-bytes={len(wire)} ledger-blocks={len(world.ledger.blocks)}")
    for p in problems[:20]:
        emit(f"  problem: {p}")
    return not problems


SUITES = {
    "honest": suite_honest,
    "attacks": suite_attacks,
    "metrics": suite_metrics,
    "fuzz": suite_fuzz,
}
