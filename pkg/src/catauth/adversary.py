"""Eve: a channel adversary with full control of quantum and classical traffic.

:class:`Eve` implements the interposition hook used by the protocol engine
and the attack strategies: impersonation, denial of service, type I (the
challenge reaches the prover untouched; Eve plays with the responses) and
type II (Eve swaps the challenge for half of her own pair).

Eve is granted the best outcome the security analysis allows her: every
unassisted conversion reaches fidelity ``p0`` exactly, and every pair she is
assumed to steal counts as a perfect catalyst.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .protocol import (
    ALICE, BOB, EVE, Party, RoundResult, Session, Variant, WireMessage,
    particle_ref, run_round,
)
from .states import DensityOperator, embed_schmidt, fidelity_with, reduced_state


class Kind(str, enum.Enum):
    PASSIVE = "passive"
    IMPERSONATION = "impersonation"
    DOS = "dos"
    TYPE_I = "type1"
    TYPE_II = "type2"


DOS_MODES = ("corrupt", "substitute", "drop", "flood")


@dataclass(frozen=True)
class AttackStrategy:
    """What Eve does and how often.

    ``L`` is the number of pairs attacked per round (type I thefts, type II
    interceptions). ``option`` selects the type I variant, ``case`` the type
    II response policy when an attacked pair is tested (1: answer with the
    intercepted particle; 2: same, then steal a catalyst pair from Alice on
    a pass; 3: forward the request and answer with a three-particle mix).
    """

    kind: Kind = Kind.PASSIVE
    target: Party = ALICE
    option: int = 3
    case: int = 2
    L: int = 0
    dos_mode: str = "corrupt"

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "target", Party(self.target))
        if self.target is EVE:
            raise ValueError("Eve cannot impersonate herself")
        if self.option not in (1, 2, 3):
            raise ValueError(f"type I option must be 1, 2 or 3, got {self.option}")
        if self.case not in (1, 2, 3):
            raise ValueError(f"type II case must be 1, 2 or 3, got {self.case}")
        if self.L < 0:
            raise ValueError("L must be non-negative")
        if self.dos_mode not in DOS_MODES:
            raise ValueError(f"unknown denial-of-service mode {self.dos_mode!r}")

    def check(self, K: int) -> None:
        if self.kind in (Kind.TYPE_I, Kind.TYPE_II) and self.L > K:
            raise ValueError(f"attack budget L={self.L} exceeds K={K}")

    @property
    def label(self) -> str:
        if self.kind is Kind.IMPERSONATION:
            return f"impersonation:target={self.target.value}"
        if self.kind is Kind.DOS:
            return f"dos:mode={self.dos_mode}"
        if self.kind is Kind.TYPE_I:
            return f"type1:option={self.option}"
        if self.kind is Kind.TYPE_II:
            return f"type2:case={self.case}"
        return "passive"

    @classmethod
    def parse(cls, text: str, L: int | None = None) -> "AttackStrategy":
        """Parse ``kind[:key=value,...]``, e.g. ``type2:case=1,L=5``."""
        kind, _, rest = text.strip().partition(":")
        kw: dict = {"kind": Kind(kind.strip().lower())}
        for item in filter(None, (p.strip() for p in rest.split(","))):
            key, _, val = item.partition("=")
            key = key.strip()
            if key in ("option", "case", "L"):
                kw[key] = int(val)
            elif key in ("target", "dos_mode", "mode"):
                kw["dos_mode" if key == "mode" else key] = val.strip().lower()
            else:
                raise ValueError(f"unknown strategy parameter {key!r}")
        if L is not None:
            kw["L"] = L
        return cls(**kw)


@dataclass
class EveLedger:
    """Catalyst pairs Eve shares with each party, and what detection cost her."""

    pairs_with_alice: int = 0
    pairs_with_bob: int = 0
    detected: bool = False
    invalidated_pairs: int = 0

    def fraction(self, K: int) -> float:
        """Eve's share of one round's key material, ``e = pairs / K`` averaged over both parties."""
        return (self.pairs_with_alice + self.pairs_with_bob) / (2 * K)


def garbage_pass(c) -> float:
    """Pass probability when the response is replaced by an unentangled basis state.

    Eve picks the basis state carrying the least weight in ``c``.
    """
    d = len(c)
    half = reduced_state(embed_schmidt(c), [1]).matrix
    junk = np.zeros((d, d))
    junk[d - 1, d - 1] = 1.0
    return fidelity_with(DensityOperator(np.kron(junk, half), dims=(d, d)), c)


class Eve:
    """Adversary bound to one session at a time.

    The engine calls :meth:`interpose` on every message it routes through
    the channel and the ``on_*``/``after_test`` hooks at fixed points of
    the round.
    """

    observes_catalysis = False

    def __init__(self, strategy: AttackStrategy | None = None, seed: int = 0):
        self.strategy = strategy or AttackStrategy()
        self.seed = seed
        self.ledger = EveLedger()
        self.held: set[str] = set()
        self.session: Session | None = None
        self._reset_round()

    def _reset_round(self):
        # challenge indices Eve took in place of an impersonated party, and those returned
        self.intercepted = np.zeros(0, np.int64)
        self.spent = np.zeros(0, np.int64)
        self.seen: set[int] = set()
        self.stolen: set[int] = set()
        self.attacked: set[int] = set()
        self.pending: set[int] = set()
        self.case3: set[int] = set()
        self.thefts = 0
        self.corrupted = 0

    @functools.cached_property
    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    @property
    def impersonates(self) -> Party | None:
        s = self.strategy
        return s.target if s.kind is Kind.IMPERSONATION else None

    @property
    def batch_tests(self) -> bool:
        """Whether the engine may resolve all tests in one pass."""
        return self.strategy.kind in (Kind.PASSIVE, Kind.IMPERSONATION)

    def batch_done(self, session: Session, indices: np.ndarray):
        """Bookkeeping after a batched test pass: relayed halves are spent."""
        if self.strategy.kind is Kind.IMPERSONATION:
            self.spent = np.concatenate([self.spent, indices])

    @property
    def passive(self) -> bool:
        return self.strategy.kind is Kind.PASSIVE

    # -- round hooks --------------------------------------------------------

    def begin_round(self, session: Session):
        self.strategy.check(session.config.K)
        self.session = session
        self.held.clear()
        self._reset_round()
        if self.strategy.kind is Kind.TYPE_II and self.strategy.L:
            odds = np.arange(1, 2 * session.config.K, 2)
            pick = self.rng.choice(odds, size=self.strategy.L, replace=False)
            self.attacked = set(pick.tolist())

    def on_exchange_start(self, session: Session):
        s = self.strategy
        if s.kind is Kind.DOS and s.dos_mode == "flood":
            for j in range(1, 2 * session.config.K, 2):
                if session.aborted:
                    break
                self._steal(session, j)

    def on_exchange_end(self, session: Session):
        s = self.strategy
        if s.kind is Kind.TYPE_I and s.option == 3:
            # thefts Bob's requests did not cover need extra requests to Alice
            while self.thefts < s.L and not session.aborted:
                j = self._next_target(session, 0)
                if j is None:
                    break
                self.thefts += 1
                self._steal(session, j)

    def verify_turn(self, session: Session, index: int):
        """Eve's turn as the impersonated verifier: she tests nothing."""

    def after_test(self, session: Session, verifier: Party, index: int, passed: bool):
        if index in self.pending:
            self.pending.discard(index)
            if passed:
                if self.strategy.kind is Kind.TYPE_I:
                    session.claim_partner(ALICE, index)
                j = self._next_target(session, index)
                if j is not None:
                    self._steal(session, j)

    def on_round_end(self, session: Session, result: RoundResult):
        led = self.ledger
        if result.success:
            led.pairs_with_alice, led.pairs_with_bob = session.key.pairs_with_eve()
        else:
            if not self.passive:
                led.detected = True
            led.invalidated_pairs += led.pairs_with_alice + led.pairs_with_bob
            led.pairs_with_alice = led.pairs_with_bob = 0

    # -- channel ------------------------------------------------------------

    def interpose(self, message: WireMessage, direction=None) -> list[WireMessage]:
        """Messages actually delivered in place of ``message``."""
        kind = self.strategy.kind
        if kind is Kind.PASSIVE:
            return [message]
        if kind is Kind.IMPERSONATION:
            return self._impersonate(message)
        if kind is Kind.DOS:
            return self._deny(message)
        if kind is Kind.TYPE_I:
            return self._type1(message)
        return self._type2(message)

    def interpose_many(self, messages: Iterable[WireMessage], direction=None) -> list[WireMessage]:
        kind = self.strategy.kind
        if kind is Kind.PASSIVE or kind is Kind.TYPE_I:
            return list(messages)
        out = []
        for m in messages:
            out.extend(self.interpose(m, direction))
        return out

    def challenge_plan(self, sender: Party, receiver: Party, indices: np.ndarray):
        """Batch view of one direction of challenge traffic.

        Returns ``None`` to deliver everything, or boolean arrays
        ``(retained, substituted)`` over ``indices``: retained particles stay
        with Eve, and substituted ones are replaced by half of an Eve pair.
        """
        s = self.strategy
        kind = s.kind
        if kind is Kind.IMPERSONATION:
            if receiver is s.target:
                self.intercepted = np.concatenate([self.intercepted, indices])
                return np.ones(indices.size, bool), np.zeros(indices.size, bool)
            return None
        if kind is Kind.DOS and s.dos_mode == "drop":
            self.held.update(particle_ref(receiver.side, int(i)) for i in indices)
            return np.ones(indices.size, bool), np.zeros(indices.size, bool)
        if kind is Kind.TYPE_II and sender is BOB and self.attacked:
            hit = np.isin(indices, list(self.attacked))
            for i in indices[hit].tolist():
                self.held.add(particle_ref("A", i))
                self.held.add(f"alpha_E^{i}")
                self.session.log_attack(1, i, "type2:intercept")
            return hit, hit.copy()
        return None

    # -- strategies ---------------------------------------------------------

    def _impersonate(self, m: WireMessage) -> list[WireMessage]:
        target = self.strategy.target
        if m.receiver is not target:
            return [m]
        if m.variant is Variant.CHALLENGE:
            self.intercepted = np.append(self.intercepted, m.index)
            return []
        if m.variant is Variant.REQUEST:
            return [self.impersonation_response(m.index)]
        return []

    def impersonation_response(self, index: int) -> WireMessage:
        """Return the intercepted challenge half, converted as well as Eve can without a catalyst."""
        target = self.strategy.target
        ref = particle_ref(target.side, index)
        self.spent = np.append(self.spent, index)
        return WireMessage(Variant.RESPONSE, EVE, target.other, index, ref)

    def _deny(self, m: WireMessage) -> list[WireMessage]:
        mode = self.strategy.dos_mode
        sess = self.session
        if mode == "drop":
            if m.particle:
                self.held.add(m.particle)
            return []
        if mode in ("corrupt", "substitute") and m.variant is Variant.RESPONSE \
                and m.receiver is BOB and self.corrupted == 0:
            self.corrupted += 1
            self.held.add(m.particle)
            ref = f"garbage^{m.index}"
            p = garbage_pass(sess.c) if mode == "corrupt" else sess.p0
            sess.register_eve_particle(ref, p)
            sess.log_attack(3, m.index, f"dos:{mode}")
            return [WireMessage(Variant.RESPONSE, EVE, BOB, m.index, ref)]
        return [m]

    def _type1(self, m: WireMessage) -> list[WireMessage]:
        s = self.strategy
        sess = self.session
        if m.variant is Variant.REQUEST and m.sender is BOB:
            self.seen.add(m.index)
            if m.index in self.stolen:
                return [self._return_held(m.index)]
            if s.option == 3 and self.thefts < s.L:
                return self.type1_option3(sess, m)
            return [m]
        if m.variant is Variant.RESPONSE and m.receiver is BOB and s.option == 2 \
                and self.thefts < s.L and m.sender is ALICE:
            self.thefts += 1
            self.held.add(m.particle)
            ref = f"alpha_B^{m.index}"
            sess.register_eve_particle(ref, sess.p0)
            sess.log_attack(3, m.index, "type1:option=2")
            return [WireMessage(Variant.RESPONSE, EVE, BOB, m.index, ref)]
        return [m]

    def type1_option3(self, session: Session, request: WireMessage) -> list[WireMessage]:
        """Withhold Bob's request and answer with half of Eve's own pair.

        After Bob's test passes, Eve asks Alice for the next challenge Bob
        verifies, which leaves her sharing that pair with Bob.
        """
        i = request.index
        self.thefts += 1
        ref = f"alpha_B^{i}"
        self.held.add(f"alpha_E^{i}")
        session.register_eve_particle(ref, session.p0)
        session.log_attack(3, i, "type1:option=3")
        self.pending.add(i)
        return [WireMessage(Variant.RESPONSE, EVE, BOB, i, ref)]

    def _type2(self, m: WireMessage) -> list[WireMessage]:
        sess = self.session
        i = m.index
        if m.variant is Variant.CHALLENGE and m.sender is BOB and i in self.attacked:
            self.held.add(m.particle)
            self.held.add(f"alpha_E^{i}")
            sess.log_attack(1, i, "type2:intercept")
            return [m._replace(particle=f"alpha_A^{i}")]
        if m.variant is Variant.REQUEST and m.sender is BOB:
            self.seen.add(i)
            if i in self.stolen:
                return [self._return_held(i)]
            if i in self.attacked:
                return self.type2_attack(sess, m, self.strategy.case)
            return [m]
        if m.variant is Variant.RESPONSE and m.receiver is BOB and i in self.case3:
            self.case3.discard(i)
            self.held.add(m.particle)
            ref = f"tilde_beta_E^{i}"
            for r in (particle_ref("A", i), f"alpha_E^{i}", m.particle):
                self.held.discard(r)
            sess.register_eve_particle(ref, sess.p0)
            return [WireMessage(Variant.RESPONSE, EVE, BOB, i, ref)]
        return [m]

    def type2_attack(self, session: Session, request: WireMessage, case: int) -> list[WireMessage]:
        """Bob asks for a pair whose challenge Eve intercepted."""
        i = request.index
        session.log_attack(3, i, f"type2:case={case}")
        if case == 3:
            self.case3.add(i)
            return [request]
        if case == 2:
            self.pending.add(i)
        return [self._return_held(i)]

    # -- helpers ------------------------------------------------------------

    def _return_held(self, index: int) -> WireMessage:
        ref = particle_ref("A", index)
        self.held.discard(ref)
        return WireMessage(Variant.RESPONSE, EVE, BOB, index, ref)

    def _next_target(self, session: Session, after: int) -> int | None:
        """Next odd index after ``after`` (cyclically) that Eve can still take from Alice."""
        n = 2 * session.config.K
        odds = list(range(1, n, 2))
        start = (after + 1) // 2 if after else 0
        for k in range(len(odds)):
            j = odds[(start + k) % len(odds)]
            if j == after or j in self.seen or j in self.stolen or j in self.attacked:
                continue
            return j
        return None

    def _steal(self, session: Session, j: int):
        session.log_attack(3, j, "steal")
        resp = session.request_as_eve(ALICE, j)
        if resp is not None:
            self.held.add(resp.particle)
            self.stolen.add(j)


def dos_attack(session: Session, mode: str = "corrupt", seed: int = 0) -> RoundResult:
    """Run one round with Eve trying to make it fail."""
    return run_round(session, Eve(AttackStrategy(Kind.DOS, dos_mode=mode), seed=seed))
