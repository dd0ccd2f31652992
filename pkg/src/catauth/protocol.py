"""Authentication rounds between Alice and Bob.

The engine tracks every challenge particle, the catalyst key shared by the
two parties, the requests each party receives, and the outcome of each
projective test. Conversions are modeled at the level of pass
probabilities: a challenge pair converted with a genuine catalyst is exactly
in the catalyst state ``c``; any conversion without one reaches at best the
optimal unassisted fidelity ``p0`` (the adversary-optimal state ``xi_c``).

An adversary object (see :mod:`catauth.adversary`) sits on the channel.
``None`` means an untouched channel.
"""

from __future__ import annotations

import enum
import functools
import json
from dataclasses import dataclass, field
from typing import IO, Iterable, NamedTuple

import numpy as np

from . import kernels
from .schmidt import SchmidtVector, optimal_fidelity, reference_states
from .states import DensityOperator, embed_schmidt, fidelity_with, reduced_state


class Party(str, enum.Enum):
    ALICE = "alice"
    BOB = "bob"
    EVE = "eve"

    @property
    def other(self) -> "Party":
        if self is Party.ALICE:
            return Party.BOB
        if self is Party.BOB:
            return Party.ALICE
        raise ValueError("Eve has no protocol peer")

    @property
    def side(self) -> str:
        return "A" if self is Party.ALICE else "B"


class Variant(str, enum.Enum):
    CHALLENGE = "challenge"
    CATALYSIS = "catalysis_classical"
    REQUEST = "response_request"
    RESPONSE = "response"
    ABORT = "abort"
    ATTACK = "attack"


class WireMessage(NamedTuple):
    """One message on the channel. ``particle`` names a transmitted particle."""

    variant: Variant
    sender: Party
    receiver: Party
    index: int | None = None
    particle: str | None = None
    data: object = None


class ProtocolError(RuntimeError):
    """Misuse of the engine (not an abort: aborts are round outcomes)."""


class ConfigError(ValueError):
    pass


ALICE, BOB, EVE = Party.ALICE, Party.BOB, Party.EVE

# where a particle currently is
_AT_ALICE, _AT_BOB, _AT_EVE, _GONE, _TRANSIT = 0, 1, 2, 3, 4
_LOC = {ALICE: _AT_ALICE, BOB: _AT_BOB, EVE: _AT_EVE}
# what a prover holds for a challenge index
_NOTHING, _GENUINE, _FOREIGN = 0, 1, 2


def verifier_of(index: int) -> Party:
    """Bob verifies odd indices, Alice even ones."""
    return BOB if index % 2 else ALICE


def particle_ref(side: str, index: int) -> str:
    return f"beta_{side}^{index}"


@dataclass(frozen=True)
class RoundConfig:
    K: int
    K_prime: int
    seed: int = 0
    test_mode: bool = False

    def __post_init__(self):
        if self.K < 1:
            raise ConfigError(f"K must be positive, got {self.K}")
        if self.K_prime < 0 or (self.K_prime == 0 and not self.test_mode):
            raise ConfigError(f"K' must be positive, got {self.K_prime}")
        if not 2 * self.K_prime < self.K:
            raise ConfigError(f"need K' < K/2, got K={self.K}, K'={self.K_prime}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @property
    def key_delta(self) -> int:
        return 2 * self.K - 4 * self.K_prime


class PairRecord(NamedTuple):
    index: int
    state_tag: object  # SchmidtVector, or COMPROMISED
    entangled_with_legitimate_peer: bool


COMPROMISED = "compromised"


class KeyStore:
    """Catalyst pairs shared by Alice and Bob, one entry per key position.

    ``genuine[p]`` is true when position ``p`` holds the two halves of one
    pair in state ``c``. ``eve_a``/``eve_b`` flag halves whose partner is
    held by Eve.
    """

    def __init__(self, genuine, eve_a=None, eve_b=None):
        self.genuine = np.asarray(genuine, dtype=bool)
        n = self.genuine.size
        self.eve_a = np.zeros(n, bool) if eve_a is None else np.asarray(eve_a, dtype=bool)
        self.eve_b = np.zeros(n, bool) if eve_b is None else np.asarray(eve_b, dtype=bool)

    @classmethod
    def fresh(cls, size: int) -> "KeyStore":
        return cls(np.ones(size, bool))

    def __len__(self):
        return self.genuine.size

    @property
    def size(self) -> int:
        return self.genuine.size

    def permuted(self, perm: np.ndarray) -> "KeyStore":
        return KeyStore(self.genuine[perm], self.eve_a[perm], self.eve_b[perm])

    def records(self, c: SchmidtVector) -> list[PairRecord]:
        return [
            PairRecord(p + 1, c if g else COMPROMISED, bool(g))
            for p, g in enumerate(self.genuine.tolist())
        ]

    def pairs_with_eve(self) -> tuple[int, int]:
        return int(self.eve_a.sum()), int(self.eve_b.sum())

    def clear(self):
        self.genuine = self.genuine[:0]
        self.eve_a = self.eve_a[:0]
        self.eve_b = self.eve_b[:0]


class TranscriptRecord(NamedTuple):
    round: int
    step: int
    sender: str
    variant: str
    index: int | None
    detail: str | None = None

    def to_json(self) -> str:
        d = {"round": self.round, "step": self.step, "sender": self.sender,
             "variant": self.variant, "index": self.index}
        if self.detail is not None:
            d["detail"] = self.detail
        return json.dumps(d, separators=(",", ":"))


def write_transcript(records: Iterable[TranscriptRecord], fp: IO[str]) -> None:
    """Line-delimited JSON, one message per line."""
    for r in records:
        fp.write(r.to_json())
        fp.write("\n")


def read_transcript(fp: IO[str]) -> list[TranscriptRecord]:
    out = []
    for line in fp:
        line = line.strip()
        if line:
            d = json.loads(line)
            out.append(TranscriptRecord(d["round"], d["step"], d["sender"], d["variant"],
                                        d["index"], d.get("detail")))
    return out


@dataclass
class RoundResult:
    success: bool
    reason: str | None = None
    at_test: int | None = None
    detected_by: Party | None = None
    key_delta: int = 0
    transcript: list[TranscriptRecord] = field(default_factory=list)

    @property
    def outcome(self) -> str:
        return "success" if self.success else "aborted"


class _RoundState:
    """Mutable bookkeeping for the round in progress."""

    def __init__(self, K: int):
        n = 2 * K
        self.n = n
        idx = np.arange(n + 1)
        # location of the half destined for the prover, and of the verifier's half
        self.holder = np.full(n + 1, _TRANSIT, np.int8)
        self.vholder = np.where(idx % 2 == 1, _AT_BOB, _AT_ALICE).astype(np.int8)
        self.prover_has = np.zeros(n + 1, np.int8)
        self.fid = np.zeros(n + 1)
        self.catalysed = False
        self.batched = False
        self.Q_A: tuple[int, ...] = ()
        self.Q_B: tuple[int, ...] = ()
        self.requested = {ALICE: set(), BOB: set()}
        self.received = {ALICE: [], BOB: []}
        self.tested = {ALICE: [], BOB: []}
        self.claims: set[tuple[Party, int]] = set()
        self.eve_particles: dict[str, float] = {}
        self.tests_done = 0
        self.uniforms = None
        self.aborted: tuple[str, Party | None, int | None] | None = None
        self.transcript: list[TranscriptRecord] = []


class Session:
    """Alice's and Bob's joint protocol state across rounds.

    ``key_sets`` holds the active key followed by reserve sets. Randomness
    comes from three streams derived from ``config.seed``: the shared stream
    for test-set selection, the relabeling stream (pre-shared with the key),
    and the measurement stream for projective-test outcomes.
    """

    def __init__(self, config: RoundConfig, initial_key_sets: int = 1, *,
                 b: SchmidtVector | None = None, c: SchmidtVector | None = None,
                 record_transcript: bool = True):
        if initial_key_sets < 1:
            raise ConfigError("need at least one key set")
        pb, pc = reference_states()
        self.config = config
        self.b = b if b is not None else pb
        self.c = c if c is not None else pc
        self.p0, self.xi_c, self.mismatch_pass = _constants(self.b, self.c)
        self.key_sets = [KeyStore.fresh(2 * config.K) for _ in range(initial_key_sets)]
        self.active = 0
        self.round_no = 0
        self.terminated = False
        self.record_transcript = record_transcript
        self.transcript: list[TranscriptRecord] = []
        self.rs: _RoundState | None = None
        self.adversary = None
        self._present_flags = {ALICE: True, BOB: True}

    @functools.cached_property
    def rng_shared(self) -> np.random.Generator:
        return np.random.default_rng([self.config.seed, 0])

    @functools.cached_property
    def rng_relabel(self) -> np.random.Generator:
        return np.random.default_rng([self.config.seed, 1])

    @functools.cached_property
    def rng_lab(self) -> np.random.Generator:
        return np.random.default_rng([self.config.seed, 2])

    @property
    def key(self) -> KeyStore:
        if self.terminated:
            raise ProtocolError("session terminated: no key sets left")
        return self.key_sets[self.active]

    @property
    def key_size(self) -> int:
        return 0 if self.terminated else self.key.size

    @property
    def aborted(self) -> bool:
        return self.rs is not None and self.rs.aborted is not None

    def _present(self, party: Party) -> bool:
        return self._present_flags.get(party, False)

    # -- transcript ---------------------------------------------------------

    def _log(self, step: int, msg: WireMessage, detail: str | None = None):
        if self.record_transcript:
            self.rs.transcript.append(TranscriptRecord(
                self.round_no, step, msg.sender.value, msg.variant.value, msg.index,
                detail if detail is not None else (None if msg.data is None else str(msg.data))))

    def log_attack(self, step: int, index: int | None, detail: str):
        """Append an adversary event line to the transcript."""
        if self.record_transcript and self.rs is not None:
            self.rs.transcript.append(TranscriptRecord(
                self.round_no, step, EVE.value, Variant.ATTACK.value, index, detail))

    # -- hooks used by the adversary ----------------------------------------

    def register_eve_particle(self, ref: str, pass_probability: float):
        """Declare an Eve-made particle and its pass probability when tested."""
        if not 0.0 <= pass_probability <= 1.0:
            raise ValueError("pass probability outside [0, 1]")
        self.rs.eve_particles[ref] = pass_probability

    def claim_partner(self, party: Party, index: int):
        """Record that ``party``'s half of pair ``index`` is now paired with Eve."""
        self.rs.claims.add((party, index))

    def request_as_eve(self, prover: Party, index: int) -> WireMessage | None:
        """Eve, posing as the verifier, asks ``prover`` for a response particle.

        The request counts against the prover's budget. Returns the response
        (now held by Eve) or ``None`` if the prover could not or would not
        answer (the round may have aborted).
        """
        msg = WireMessage(Variant.REQUEST, EVE, prover, index)
        self._log(3, msg, "forged")
        resp = self._prover_answer(msg)
        if resp is not None and self.rs.holder[index] == _TRANSIT:
            self.rs.holder[index] = _AT_EVE
        return resp

    def abort(self, reason: str, by: Party | None, detected_by: Party | None = None):
        rs = self.rs
        if rs.aborted is not None:
            return
        rs.aborted = (reason, detected_by, rs.tests_done)
        sender = by if by in (ALICE, BOB) else BOB
        self._log(4, WireMessage(Variant.ABORT, sender, sender.other, None, None, reason))

    # -- engine internals ---------------------------------------------------

    def _prover_answer(self, request: WireMessage) -> WireMessage | None:
        rs = self.rs
        prover, i = request.receiver, request.index
        if not self._present_flags.get(prover, False):
            return None
        received = rs.received[prover]
        received.append(i)
        if len(received) > self.config.K_prime:
            self.abort("request-flood", prover, detected_by=prover)
            return None
        if not 1 <= i <= rs.n or (i % 2 == 1) == (prover is BOB):
            return None
        has = rs.prover_has[i]
        if has == _NOTHING:
            return None
        rs.prover_has[i] = _NOTHING
        side = "A" if prover is ALICE else "B"
        if has == _GENUINE:
            ref = f"beta_{side}^{i}"
            rs.holder[i] = _TRANSIT
        else:
            ref = f"alpha_{side}^{i}"
        resp = WireMessage(Variant.RESPONSE, prover, request.sender, i, ref)
        if self.record_transcript:
            self._log(3, resp)
        return resp

    def _pass_probability(self, index: int, ref: str) -> float:
        rs = self.rs
        p = rs.eve_particles.get(ref)
        if p is not None:
            return p
        if ref.startswith("beta_") and int(ref.rsplit("^", 1)[1]) == index:
            return float(rs.fid[index])
        return self.mismatch_pass


@functools.lru_cache(maxsize=64)
def _constants(b: SchmidtVector, c: SchmidtVector):
    p0, xi_c = optimal_fidelity(b, c)
    return p0, xi_c, _unentangled_pass(c)


def _unentangled_pass(c: SchmidtVector) -> float:
    """Test pass probability for two halves taken from different ``c`` pairs."""
    half = reduced_state(embed_schmidt(c), [0]).matrix
    rho = DensityOperator(np.kron(half, half), dims=(c.dim, c.dim))
    return fidelity_with(rho, c)


def new_session(config: RoundConfig, initial_key_sets: int = 1, **kwargs) -> Session:
    """Fresh session: ``initial_key_sets`` sets of 2K catalyst pairs in state ``c``."""
    return Session(config, initial_key_sets, **kwargs)


def _begin_round(session: Session, adversary=None):
    if session.terminated:
        raise ProtocolError("session terminated: no key sets left")
    if session.key.size < 2 * session.config.K:
        raise ProtocolError("active key holds fewer than 2K pairs")
    session.round_no += 1
    session.rs = _RoundState(session.config.K)
    if adversary is not None and getattr(adversary, "passive", False):
        adversary.begin_round(session)
        adversary = None
    session.adversary = adversary
    absent = adversary.impersonates if adversary is not None else None
    session._present_flags = {ALICE: absent is not ALICE, BOB: absent is not BOB}
    if absent is ALICE:
        session.rs.vholder[2::2] = _AT_EVE
    elif absent is BOB:
        session.rs.vholder[1::2] = _AT_EVE
    if adversary is not None:
        adversary.begin_round(session)


def _challenge_senders(session: Session) -> tuple[Party, Party]:
    return (BOB if session._present(BOB) else EVE, ALICE if session._present(ALICE) else EVE)


def prepare_challenges(session: Session) -> list[WireMessage]:
    """Step 1: Bob emits challenges for odd indices, Alice for even ones.

    Each underlying pair is in state ``b``. A party being impersonated has its
    challenges prepared and sent by Eve instead. Starts a new round if none
    is in progress.
    """
    if session.rs is None or session.rs.catalysed or session.rs.aborted is not None:
        _begin_round(session, session.adversary)
    n = session.rs.n
    b_sender, a_sender = _challenge_senders(session)
    msgs = []
    for i in range(1, n + 1):
        if i % 2:
            msgs.append(WireMessage(Variant.CHALLENGE, b_sender, ALICE, i, f"beta_A^{i}"))
        else:
            msgs.append(WireMessage(Variant.CHALLENGE, a_sender, BOB, i, f"beta_B^{i}"))
    return msgs


def deliver_challenges(session: Session, messages: list[WireMessage] | None = None) -> None:
    """Send the round's challenges through the channel.

    ``messages=None`` sends the standard 2K challenges without building
    message objects (unless the transcript is being recorded). The adversary
    sees each direction as one batch.
    """
    rs = session.rs
    n = rs.n
    if messages is None:
        if session.record_transcript:
            messages = prepare_challenges(session)
    if messages is not None:
        for m in messages:
            session._log(1, m)
        sent = np.zeros(n + 1, bool)
        sent[[m.index for m in messages]] = True
    else:
        sent = np.ones(n + 1, bool)
        sent[0] = False
    adv = session.adversary
    b_sender, a_sender = _challenge_senders(session)
    for sender, receiver, idx in ((b_sender, ALICE, np.arange(1, n + 1, 2)),
                                  (a_sender, BOB, np.arange(2, n + 1, 2))):
        idx = idx[sent[idx]]
        if idx.size == 0:
            continue
        retained = substituted = None
        if adv is not None:
            plan = adv.challenge_plan(sender, receiver, idx)
            if plan is not None:
                retained, substituted = plan
        if not session._present(receiver):
            rs.holder[idx] = _AT_EVE
            continue
        if retained is None:
            rs.holder[idx] = _LOC[receiver]
            rs.prover_has[idx] = _GENUINE
            continue
        ok = ~retained
        rs.holder[idx[ok]] = _LOC[receiver]
        rs.prover_has[idx[ok]] = _GENUINE
        rs.holder[idx[retained]] = _AT_EVE
        rs.prover_has[idx[retained & substituted]] = _FOREIGN


def _catalysis_fidelity(session: Session, indices: np.ndarray) -> np.ndarray:
    rs = session.rs
    ok = session.key.genuine[indices - 1] & (rs.prover_has[indices] == _GENUINE)
    ok &= np.where(indices % 2 == 1, rs.vholder[indices] == _AT_BOB, rs.vholder[indices] == _AT_ALICE)
    if not (session._present(ALICE) and session._present(BOB)):
        ok &= False
    return np.where(ok, 1.0, session.p0)


def perform_catalysis(session: Session, index: int) -> float:
    """Step 2 for one index. Returns the fidelity of the challenge pair with ``c``.

    With a genuine catalyst the pair ends exactly in ``c``; otherwise it ends
    in the best unassisted approximation, at fidelity ``p0``. Raises
    :class:`ProtocolError` if the prover lacks a challenge particle.
    """
    rs = session.rs
    if rs is None:
        raise ProtocolError("no round in progress")
    if not 1 <= index <= rs.n:
        raise ProtocolError(f"index {index} outside 1..{rs.n}")
    prover = verifier_of(index).other
    if session._present(prover) and rs.prover_has[index] == _NOTHING:
        raise ProtocolError(f"{prover.value} holds no challenge particle for index {index}")
    f = float(_catalysis_fidelity(session, np.array([index]))[0])
    rs.fid[index] = f
    _send_catalysis_messages(session, [index])
    return f


def _send_catalysis_messages(session: Session, indices):
    adv = session.adversary
    watch = adv is not None and adv.observes_catalysis
    if not session.record_transcript and not watch:
        return
    for i in indices:
        v = verifier_of(i)
        msg = WireMessage(Variant.CATALYSIS, v if session._present(v) else EVE, v.other, i)
        session._log(2, msg)
        if watch:
            adv.interpose(msg, (v, v.other))


def catalyse_all(session: Session) -> bool:
    """Step 2 for every index. Returns False (and aborts) on a missing particle."""
    rs = session.rs
    idx = np.arange(1, rs.n + 1)
    prover_in = np.where(idx % 2 == 1, session._present(ALICE), session._present(BOB))
    missing = idx[prover_in & (rs.prover_has[1:] == _NOTHING)]
    if missing.size:
        session.abort("missing-particle", verifier_of(int(missing[0])).other)
        return False
    rs.fid[1:] = _catalysis_fidelity(session, idx)
    rs.catalysed = True
    _send_catalysis_messages(session, idx.tolist())
    return True


def select_test_sets(session: Session) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Step 3 selection: K' even indices for Alice, K' odd ones for Bob.

    Drawn without replacement from the shared stream; the returned order is
    the order in which the requests are issued.
    """
    rs = session.rs
    Kp = session.config.K_prime
    rng = session.rng_shared
    q_a = tuple(rng.choice(np.arange(2, rs.n + 1, 2), size=Kp, replace=False).tolist())
    q_b = tuple(rng.choice(np.arange(1, rs.n, 2), size=Kp, replace=False).tolist())
    rs.Q_A, rs.Q_B = q_a, q_b
    return q_a, q_b


def request_response(session: Session, verifier: Party, index: int) -> None:
    """One test: ``verifier`` asks for the response at ``index`` and measures it."""
    rs = session.rs
    if rs.aborted is not None:
        return
    if (index % 2 == 1) != (verifier is BOB):
        raise ProtocolError(f"{verifier.value} does not verify index {index}")
    requested = rs.requested[verifier]
    if index in requested:
        raise ProtocolError(f"{verifier.value} already requested index {index}")
    requested.add(index)
    adv = session.adversary
    prover = ALICE if verifier is BOB else BOB
    msg = WireMessage(Variant.REQUEST, verifier, prover, index)
    if session.record_transcript:
        session._log(3, msg)
    delivered = (msg,) if adv is None else adv.interpose(msg, (verifier, prover))
    response = None
    for m in delivered:
        if m.variant is Variant.REQUEST and m.receiver is prover:
            resp = session._prover_answer(m)
            if rs.aborted is not None:
                return
            if resp is None:
                continue
            if adv is None:
                response = resp
                continue
            back = adv.interpose(resp, (prover, verifier))
            if rs.holder[index] == _TRANSIT and not any(r.particle == resp.particle for r in back):
                rs.holder[index] = _AT_EVE
            for r in back:
                if r.variant is Variant.RESPONSE and r.receiver is verifier:
                    response = r
                    if r.sender is EVE and session.record_transcript:
                        session._log(3, r)
        elif m.variant is Variant.RESPONSE and m.receiver is verifier:
            response = m
            if session.record_transcript:
                session._log(3, m)
    if rs.aborted is not None:
        return
    if response is None:
        session.abort("timeout", verifier)
        return
    _test(session, verifier, index, response)


def _uniforms(session: Session) -> np.ndarray:
    # 2K' draws per round whatever happens, so every code path consumes the lab stream alike
    rs = session.rs
    if rs.uniforms is None:
        rs.uniforms = session.rng_lab.random(2 * session.config.K_prime)
    return rs.uniforms


def _test(session: Session, verifier: Party, index: int, response: WireMessage):
    rs = session.rs
    p = session._pass_probability(index, response.particle)
    u = _uniforms(session)
    if rs.tests_done >= u.size:  # only reachable by driving tests outside exchange_tests
        rs.uniforms = u = np.append(u, session.rng_lab.random(rs.tests_done + 1 - u.size))
    passed = u[rs.tests_done] < p
    rs.tests_done += 1
    rs.tested[verifier].append(index)
    rs.vholder[index] = _GONE
    if rs.holder[index] == _TRANSIT:
        rs.holder[index] = _GONE
    elif rs.holder[index] == _AT_EVE and response.sender is EVE \
            and response.particle == particle_ref("A" if verifier is BOB else "B", index):
        rs.holder[index] = _GONE
    if session.adversary is not None:
        session.adversary.after_test(session, verifier, index, passed)
    if not passed:
        session.abort("test-failed", verifier, detected_by=verifier)


def _batch_ready(session: Session) -> bool:
    """True when every test can be resolved in one vectorized pass.

    That holds for an untouched channel and for adversaries that relay only
    genuine halves (``batch_tests``), as long as no transcript is recorded.
    """
    if session.record_transcript:
        return False
    adv = session.adversary
    if adv is not None and not getattr(adv, "batch_tests", False):
        return False
    rs = session.rs
    return bool(np.all(rs.holder[1:] != _TRANSIT))


def _batch_tests(session: Session, q_a, q_b) -> None:
    rs = session.rs
    qa, qb = np.asarray(q_a, np.int64), np.asarray(q_b, np.int64)
    m = min(qa.size, qb.size)
    head = np.empty(2 * m, np.int64)
    head[0::2], head[1::2] = qb[:m], qa[:m]
    idx = np.concatenate([head, qb[m:], qa[m:]])
    by_bob = idx % 2 == 1
    bob_in, alice_in = session._present(BOB), session._present(ALICE)
    keep = np.where(by_bob, bob_in, alice_in)
    idx, by_bob = idx[keep], by_bob[keep]
    if not np.all((rs.prover_has[idx] == _GENUINE) | (rs.holder[idx] == _AT_EVE)):
        return  # a missing response: let the stepwise path time it out
    fail = kernels.first_failure(rs.fid[idx], rs.uniforms[:idx.size])
    done = idx.size if fail < 0 else fail + 1
    sel, sel_bob = idx[:done], by_bob[:done]
    for v, mask, prover_in in ((BOB, sel_bob, alice_in), (ALICE, ~sel_bob, bob_in)):
        mine = sel[mask].tolist()
        rs.requested[v].update(mine)
        rs.tested[v].extend(mine)
        if prover_in:
            rs.received[v.other].extend(mine)
    rs.prover_has[sel] = _NOTHING
    rs.holder[sel] = _GONE
    rs.vholder[sel] = _GONE
    rs.tests_done = done
    adv = session.adversary
    if adv is not None:
        adv.batch_done(session, sel)
    rs.batched = True
    if fail >= 0:
        v = BOB if by_bob[fail] else ALICE
        session.abort("test-failed", v, detected_by=v)


def exchange_tests(session: Session, Q_A, Q_B, adversary=None) -> RoundResult:
    """Steps 3-4: alternate tests, Bob first, until both sets are exhausted.

    Any failed test, missing response, or more than K' requests to a party
    aborts the round.
    """
    if adversary is not None:
        session.adversary = None if getattr(adversary, "passive", False) else adversary
    adv = session.adversary
    rs = session.rs
    if rs is None or not rs.catalysed:
        raise ProtocolError("catalysis has not been performed")
    if adv is not None and rs.aborted is None:
        adv.on_exchange_start(session)
    q_a, q_b = list(Q_A), list(Q_B)
    _uniforms(session)
    if rs.aborted is None and _batch_ready(session):
        _batch_tests(session, q_a, q_b)
    bob_in, alice_in = session._present(BOB), session._present(ALICE)
    for t in range(max(len(q_a), len(q_b))):
        if rs.aborted is not None or rs.batched:
            break
        if t < len(q_b):
            if bob_in:
                request_response(session, BOB, q_b[t])
            else:
                adv.verify_turn(session, q_b[t])
        if rs.aborted is not None:
            break
        if t < len(q_a):
            if alice_in:
                request_response(session, ALICE, q_a[t])
            else:
                adv.verify_turn(session, q_a[t])
    if adv is not None and rs.aborted is None:
        adv.on_exchange_end(session)
    if rs.aborted is not None:
        reason, detected_by, at_test = rs.aborted
        return RoundResult(False, reason, at_test, detected_by, 0, rs.transcript)
    return RoundResult(True, None, None, None, 0, rs.transcript)


def _kept_items(session: Session, party: Party):
    """Labels and Eve-partner flags of everything ``party`` keeps after step 3.

    Labels ``0..S-1`` are catalyst positions, ``S + i - 1`` the challenge pair
    ``i``. ``foreign`` marks halves that came from Eve rather than the peer.
    """
    rs = session.rs
    key = session.key
    S, n = key.size, rs.n
    discard = np.zeros(n + 1, bool)
    discard[rs.tested[party]] = True
    discard[rs.received[party]] = True
    cat_keep = np.ones(S, bool)
    cat_keep[:n] &= ~discard[1:]
    cat_ids = np.flatnonzero(cat_keep)
    cat_eve = (key.eve_a if party is ALICE else key.eve_b)[cat_ids]

    idx = np.arange(1, n + 1)
    is_verifier = (idx % 2 == 1) == (party is BOB)
    claims = np.zeros(n + 1, bool)
    for p, i in rs.claims:
        if p is party:
            claims[i] = True
    claims = claims[1:]
    holder, vholder, has = rs.holder[1:], rs.vholder[1:], rs.prover_has[1:]
    v_hold = is_verifier & (vholder == _LOC[party])
    v_eve = (holder == _AT_EVE) | claims
    p_hold = ~is_verifier & (has != _NOTHING)
    p_eve = (has == _FOREIGN) | (vholder == _AT_EVE) | ((vholder == _GONE) & claims)
    hold = (v_hold | p_hold) & ~discard[1:]
    if not session._present(party):
        hold[:] = False
    ch_idx = idx[hold]
    ch_eve = np.where(v_hold, v_eve, p_eve)[hold]
    ch_foreign = (p_hold & (has == _FOREIGN))[hold]
    ids = np.concatenate([cat_ids, S + ch_idx - 1])
    eve = np.concatenate([cat_eve, ch_eve])
    foreign = np.concatenate([np.zeros(cat_ids.size, bool), ch_foreign])
    return ids, eve, foreign


def _merge_views(session: Session) -> KeyStore:
    """Pair Alice's and Bob's surviving halves into new key positions.

    Halves carrying the same label are paired; leftover halves (from
    mismatched discards) are paired with each other in label order.
    """
    rs = session.rs
    key = session.key
    ids_a, eve_a, for_a = _kept_items(session, ALICE)
    ids_b, eve_b, for_b = _kept_items(session, BOB)
    if ids_a.size != ids_b.size:
        session.log_attack(5, None, f"key views disagree: alice={ids_a.size} bob={ids_b.size}")
    span = key.size + rs.n
    has_a = np.zeros(span, bool)
    has_a[ids_a] = True
    has_b = np.zeros(span, bool)
    has_b[ids_b] = True
    in_b = has_b[ids_a]
    in_a = has_a[ids_b]
    lo_a, lo_b = np.flatnonzero(~in_b), np.flatnonzero(~in_a)
    m = min(lo_a.size, lo_b.size)
    order_a = np.concatenate([np.flatnonzero(in_b), lo_a[:m]])
    order_b = np.concatenate([np.flatnonzero(in_a), lo_b[:m]])
    pair_ok = np.concatenate([key.genuine, (rs.fid[1:] == 1.0)
                              & (rs.vholder[1:] != _AT_EVE) & (rs.holder[1:] != _AT_EVE)])
    la, lb = ids_a[order_a], ids_b[order_b]
    genuine = (la == lb) & ~for_a[order_a] & ~for_b[order_b] & pair_ok[la]
    return KeyStore(genuine, eve_a[order_a] & ~genuine, eve_b[order_b] & ~genuine)


def finalize_round(session: Session, result: RoundResult) -> Session:
    """Step 5, or the discard rule after an abort.

    On success the surviving catalysts and converted challenge pairs become
    the new key, relabeled by a permutation from the pre-shared relabeling
    stream. On abort the active key set is discarded and the next reserve
    set becomes active (the session terminates if none is left).
    """
    rs = session.rs
    key = session.key
    old = key.size
    if result.success:
        new = _merge_views(session)
        perm = session.rng_relabel.permutation(new.size)
        session.key_sets[session.active] = new.permuted(perm)
        result.key_delta = new.size - old
    else:
        key.clear()
        result.key_delta = -old
        if session.active + 1 < len(session.key_sets):
            session.active += 1
        else:
            session.terminated = True
    if session.adversary is not None:
        session.adversary.on_round_end(session, result)
    if session.record_transcript:
        session.transcript.extend(rs.transcript)
    result.transcript = rs.transcript
    return session


def run_round(session: Session, adversary=None) -> RoundResult:
    """One full authentication round, steps 1-5."""
    _begin_round(session, adversary)
    rs = session.rs
    deliver_challenges(session)
    if rs.aborted is None and catalyse_all(session):
        q_a, q_b = select_test_sets(session)
        result = exchange_tests(session, q_a, q_b)
    else:
        reason, detected_by, at_test = rs.aborted
        result = RoundResult(False, reason, at_test, detected_by, 0, rs.transcript)
    finalize_round(session, result)
    if adversary is not None and session.adversary is None:
        adversary.on_round_end(session, result)
    return result


def particle_locations(session: Session) -> dict[str, str]:
    """Where each challenge particle of the current round is.

    Values are 'alice', 'bob', 'eve', 'gone' or 'transit'.
    """
    rs = session.rs
    names = {_AT_ALICE: "alice", _AT_BOB: "bob", _AT_EVE: "eve", _GONE: "gone", _TRANSIT: "transit"}
    out = {}
    for i in range(1, rs.n + 1):
        v = verifier_of(i)
        out[particle_ref(v.side, i)] = names[int(rs.vholder[i])]
        out[particle_ref(v.other.side, i)] = names[int(rs.holder[i])]
    return out
