"""Event-driven supervisor for the taboo-game interaction.

`advance` is a pure function of (state, event, memory, config). Memory is
only read here; requested changes come back as `UpdateMemory` effects and
are applied by whoever executes the effects (see `GameRunner`).
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .memory import (AssignColor, Ambiguous, Bind, MemoryOp, PersonSlot, Relocate,
                     SetName, SpatialMemory, apply_op, unknown_name)
from .sls import AzimuthBin

log = logging.getLogger(__name__)

TIMES_UP = "Time's up. I wonder if anyone has figured out what this is all about?"
SEAT_ORDER = (AzimuthBin.RIGHT, AzimuthBin.CENTER, AzimuthBin.LEFT)


class Phase(enum.Enum):
    IDLE = "Idle"
    WELCOME = "Welcome"
    PLAYER_POSITIONING = "PlayerPositioning"
    PLAYERS_PRESENTATION = "PlayersPresentation"
    START_GAME = "StartGame"
    CARD_DESCRIPTION = "CardDescription"
    ANSWER_WAIT = "AnswerWait"
    ANSWER_GIVEN = "AnswerGiven"
    VERIFICATION = "Verification"
    GAME_END = "GameEnd"


@dataclass(frozen=True)
class GameState:
    phase: Phase = Phase.IDLE
    color: str | None = None
    bin: AzimuthBin | None = None
    round: int = 0
    # presentation timer running (name already given)
    active: bool = False

    def __str__(self) -> str:
        p = self.phase
        if p in (Phase.PLAYER_POSITIONING, Phase.PLAYERS_PRESENTATION,
                 Phase.CARD_DESCRIPTION, Phase.VERIFICATION):
            return f"{p.value}({self.color})"
        if p is Phase.START_GAME:
            return f"{p.value}({self.round})"
        if p is Phase.ANSWER_GIVEN:
            return f"{p.value}({self.bin})"
        return p.value


# ---- events -------------------------------------------------------------

@dataclass(frozen=True)
class SoundDetected:
    bin: AzimuthBin

    def __str__(self):
        return f"SoundDetected({self.bin})"


@dataclass(frozen=True)
class FacesDetected:
    track_ids: tuple[int, ...]

    @property
    def count(self) -> int:
        return len(self.track_ids)

    def __str__(self):
        return f"FacesDetected({','.join(map(str, self.track_ids))})"


@dataclass(frozen=True)
class PositionStable:
    track_id: int
    bin: AzimuthBin

    def __str__(self):
        return f"PositionStable({self.track_id},{self.bin})"


@dataclass(frozen=True)
class TimerElapsed:
    name: str

    def __str__(self):
        return f"TimerElapsed({self.name})"


@dataclass(frozen=True)
class NamePresented:
    track_id: int
    name: str | None  # None: name extraction failed

    def __str__(self):
        return f"NamePresented({self.track_id},{self.name if self.name else '<failed>'})"


@dataclass(frozen=True)
class HotWord:
    word: str

    def __post_init__(self):
        if self.word not in ("yes", "no"):
            raise ValueError("hot word must be 'yes' or 'no'")

    def __str__(self):
        return f"HotWord({self.word})"


@dataclass(frozen=True)
class BuzzerCall:
    bin: AzimuthBin

    def __str__(self):
        return f"BuzzerCall({self.bin})"


GameEvent = (SoundDetected | FacesDetected | PositionStable | TimerElapsed
             | NamePresented | HotWord | BuzzerCall)


@dataclass(frozen=True)
class TimedEvent:
    t: float
    event: GameEvent


# ---- effects ------------------------------------------------------------

@dataclass(frozen=True)
class OrientGaze:
    bin: AzimuthBin

    def __str__(self):
        return f"OrientGaze({self.bin})"


@dataclass(frozen=True)
class StartTimer:
    name: str
    seconds: float

    def __str__(self):
        return f"StartTimer({self.name},{self.seconds:g})"


@dataclass(frozen=True)
class CollectFace:
    label: str | None
    bin: AzimuthBin
    track_id: int | None = None

    def __str__(self):
        return f"CollectFace({self.label or '-'},{self.bin},{self.track_id})"


@dataclass(frozen=True)
class CollectVoice:
    label: str | None
    bin: AzimuthBin

    def __str__(self):
        return f"CollectVoice({self.label or '-'},{self.bin})"


@dataclass(frozen=True)
class UpdateMemory:
    op: MemoryOp

    def __str__(self):
        return f"UpdateMemory({self.op})"


@dataclass(frozen=True)
class Announce:
    text: str

    def __str__(self):
        return f'Announce("{self.text}")'


@dataclass(frozen=True)
class Ignored:
    """Audit record for an event that is not legal in the current state."""

    reason: str

    def __str__(self):
        return f"Ignored({self.reason})"


Effect = OrientGaze | StartTimer | CollectFace | CollectVoice | UpdateMemory | Announce | Ignored


# ---- configuration ------------------------------------------------------

@dataclass(frozen=True)
class GameConfig:
    players: tuple[str, ...] = ("blue", "green", "red")
    presentation_seconds: float = 20.0
    description_seconds: float = 30.0
    cards_per_player: int = 3
    turn_order_seed: int = 0
    prepare_seconds: float = 3.0
    answer_wait_seconds: float = 10.0
    answer_seconds: float = 5.0
    verification_seconds: float = 5.0
    # color -> bin the robot points the player to; defaults to SEAT_ORDER
    seating: tuple[tuple[str, AzimuthBin], ...] | None = None

    def __post_init__(self):
        if len(self.players) < 1 or len(set(self.players)) != len(self.players):
            raise ValueError("players must be distinct and non-empty")
        if self.cards_per_player < 1:
            raise ValueError("cards_per_player must be positive")
        for v in (self.presentation_seconds, self.description_seconds, self.prepare_seconds,
                  self.answer_wait_seconds, self.answer_seconds, self.verification_seconds):
            if not v > 0:
                raise ValueError("all durations must be positive")

    @property
    def n_rounds(self) -> int:
        return self.cards_per_player * len(self.players)

    def seat_of(self, color: str) -> AzimuthBin | None:
        if self.seating is None:
            order = positioning_order(self)
            k = order.index(color)
            return SEAT_ORDER[k] if k < len(SEAT_ORDER) else None
        return dict(self.seating).get(color)


def positioning_order(config: GameConfig) -> tuple[str, ...]:
    """Random order in which players are invited to their positions (and
    later asked to present themselves)."""
    rng = np.random.default_rng([config.turn_order_seed, 1])
    return tuple(config.players[i] for i in rng.permutation(len(config.players)))


def turn_order(config: GameConfig) -> tuple[str, ...]:
    """Describer of each round: one seeded permutation, cycled so every player
    describes `cards_per_player` cards."""
    rng = np.random.default_rng([config.turn_order_seed, 2])
    perm = tuple(config.players[i] for i in rng.permutation(len(config.players)))
    return perm * config.cards_per_player


# ---- transition function ------------------------------------------------

def _identity(memory: SpatialMemory, b: AzimuthBin) -> PersonSlot | None:
    who = memory.identity_at(b)
    if who is None or isinstance(who, Ambiguous):
        return None
    return who


def _collect(memory: SpatialMemory, b: AzimuthBin) -> list[Effect]:
    slot = _identity(memory, b)
    label = slot.color_label if slot else None
    effects: list[Effect] = [OrientGaze(b), CollectVoice(label, b)]
    if slot is not None:
        effects.append(CollectFace(label, b, slot.track_id))
    return effects


def _invite(color: str, config: GameConfig) -> Announce:
    seat = config.seat_of(color)
    where = f" and go to the {seat.value.lower()} position" if seat else ""
    return Announce(f"{color} player, please come to the table, take your deck{where}")


def _ask_name(color: str) -> Announce:
    return Announce(f"{color} player, what is your name?")


def _next_round(state: GameState, config: GameConfig, extra: list[Effect]):
    if state.round < config.n_rounds:
        nxt = GameState(Phase.START_GAME, round=state.round + 1)
        return nxt, extra + [Announce(f"Round {nxt.round}: watch the screen"),
                             StartTimer("prepare", config.prepare_seconds)]
    return GameState(Phase.GAME_END, round=state.round), extra + [
        Announce("The game is over, thank you for playing!")]


def advance(state: GameState, event: GameEvent, memory: SpatialMemory,
            config: GameConfig) -> tuple[GameState, list[Effect]]:
    p = state.phase

    def ignore(reason="not expected"):
        log.debug("ignored %s in %s: %s", event, state, reason)
        return state, [Ignored(reason)]

    if p is Phase.IDLE:
        if isinstance(event, SoundDetected):
            return GameState(Phase.WELCOME, bin=event.bin), [OrientGaze(event.bin)]
        return ignore()

    if p is Phase.WELCOME:
        if isinstance(event, SoundDetected):
            return replace(state, bin=event.bin), [OrientGaze(event.bin)]
        if isinstance(event, FacesDetected):
            if event.count < len(config.players):
                return ignore("waiting for all players")
            effects: list[Effect] = [UpdateMemory(Bind(state.bin, tid))
                                     for tid in event.track_ids if tid not in memory]
            first = positioning_order(config)[0]
            effects += [Announce("Welcome! Let's play the history taboo game"), _invite(first, config)]
            return GameState(Phase.PLAYER_POSITIONING, color=first), effects
        return ignore()

    if p is Phase.PLAYER_POSITIONING:
        if not isinstance(event, PositionStable):
            return ignore()
        if event.track_id not in memory:
            return ignore("unknown track")
        if memory.slot(event.track_id).color_label is not None:
            return ignore("track already positioned")
        effects = [UpdateMemory(Relocate(event.track_id, event.bin)),
                   UpdateMemory(AssignColor(event.track_id, state.color)),
                   CollectFace(state.color, event.bin, event.track_id)]
        order = positioning_order(config)
        k = order.index(state.color)
        if k + 1 < len(order):
            nxt = order[k + 1]
            return GameState(Phase.PLAYER_POSITIONING, color=nxt), effects + [_invite(nxt, config)]
        first = order[0]
        gaze = event.bin if first == state.color else memory.bin_of_color(first)
        effects += [OrientGaze(gaze), _ask_name(first)]
        return GameState(Phase.PLAYERS_PRESENTATION, color=first), effects

    if p is Phase.PLAYERS_PRESENTATION:
        if isinstance(event, NamePresented) and not state.active:
            if event.track_id not in memory or memory.slot(event.track_id).color_label != state.color:
                return ignore("name from a different player")
            name = event.name or unknown_name(state.color)
            return replace(state, active=True), [
                UpdateMemory(SetName(event.track_id, name)),
                Announce(f"Nice to meet you {name}, please present yourself"),
                StartTimer("presentation", config.presentation_seconds)]
        if isinstance(event, SoundDetected) and state.active:
            return state, _collect(memory, event.bin)
        if isinstance(event, TimerElapsed) and event.name == "presentation" and state.active:
            order = positioning_order(config)
            k = order.index(state.color)
            if k + 1 < len(order):
                nxt = order[k + 1]
                gaze = memory.bin_of_color(nxt)
                effects = ([OrientGaze(gaze)] if gaze else []) + [_ask_name(nxt)]
                return GameState(Phase.PLAYERS_PRESENTATION, color=nxt), effects
            return _next_round(GameState(Phase.PLAYERS_PRESENTATION, round=0), config,
                               [Announce("Let's start the game!")])
        return ignore()

    if p is Phase.START_GAME:
        if isinstance(event, TimerElapsed) and event.name == "prepare":
            describer = turn_order(config)[state.round - 1]
            return GameState(Phase.CARD_DESCRIPTION, color=describer, round=state.round), [
                Announce(f"{describer} player, describe your card"),
                StartTimer("description", config.description_seconds)]
        return ignore()

    if p is Phase.CARD_DESCRIPTION:
        if isinstance(event, SoundDetected):
            return state, _collect(memory, event.bin)
        if isinstance(event, TimerElapsed) and event.name == "description":
            return replace(state, phase=Phase.ANSWER_WAIT), [
                Announce(TIMES_UP), StartTimer("answer_wait", config.answer_wait_seconds)]
        return ignore()

    if p is Phase.ANSWER_WAIT:
        if isinstance(event, BuzzerCall):
            return replace(state, phase=Phase.ANSWER_GIVEN, bin=event.bin), [
                OrientGaze(event.bin), Announce("What is your answer?"),
                StartTimer("answer", config.answer_seconds)]
        if isinstance(event, TimerElapsed) and event.name == "answer_wait":
            return _next_round(state, config, [Announce("Nobody? Let's go on")])
        return ignore()

    if p is Phase.ANSWER_GIVEN:
        if isinstance(event, TimerElapsed) and event.name == "answer":
            gaze = memory.bin_of_color(state.color)
            return replace(state, phase=Phase.VERIFICATION, bin=None), (
                ([OrientGaze(gaze)] if gaze else [])
                + [Announce(f"{state.color} player, is that right?"),
                   StartTimer("verification", config.verification_seconds)])
        if isinstance(event, HotWord):
            return _next_round(state, config, [Announce(_verdict(event))])
        return ignore()

    if p is Phase.VERIFICATION:
        if isinstance(event, HotWord):
            return _next_round(state, config, [Announce(_verdict(event))])
        if isinstance(event, TimerElapsed) and event.name == "verification":
            return _next_round(state, config, [])
        return ignore()

    return ignore("game over")


def _verdict(event: HotWord) -> str:
    return "Well done!" if event.word == "yes" else "Too bad!"


# ---- replay -------------------------------------------------------------

@dataclass(frozen=True)
class TraceEntry:
    t: float
    state: GameState
    event: GameEvent
    effects: tuple[Effect, ...]

    def line(self) -> str:
        return f"{self.t:.3f} {self.state} {self.event} [{'; '.join(map(str, self.effects))}]"


@dataclass
class GameTrace:
    entries: list[TraceEntry] = field(default_factory=list)
    final_state: GameState = field(default_factory=GameState)

    @property
    def complete(self) -> bool:
        return self.final_state.phase is Phase.GAME_END

    def export(self) -> str:
        return "".join(e.line() + "\n" for e in self.entries)

    def count_phase(self, phase: Phase) -> int:
        """Number of times `phase` was entered."""
        n, prev = 0, None
        for e in self.entries:
            if e.state.phase is phase and prev is not phase:
                n += 1
            prev = e.state.phase
        if self.final_state.phase is phase and prev is not phase:
            n += 1
        return n

    def effects(self):
        for e in self.entries:
            for fx in e.effects:
                yield e, fx


class GameRunner:
    """Feeds events through `advance`, applies memory updates and keeps the
    trace. Other effects are returned to the caller for execution."""

    def __init__(self, config: GameConfig, memory: SpatialMemory | None = None):
        self.config = config
        self.memory = memory if memory is not None else SpatialMemory()
        self.state = GameState()
        self.trace = GameTrace()
        self._last_t = float("-inf")

    def feed(self, t: float, event: GameEvent) -> list[Effect]:
        if t < self._last_t:
            raise ValueError(f"event at t={t} arrives after t={self._last_t}")
        self._last_t = t
        before = self.state
        self.state, effects = advance(before, event, self.memory, self.config)
        for fx in effects:
            if isinstance(fx, UpdateMemory):
                apply_op(self.memory, fx.op)
        self.trace.entries.append(TraceEntry(t, before, event, tuple(effects)))
        self.trace.final_state = self.state
        return effects


def run_to_completion(events, config: GameConfig, memory: SpatialMemory | None = None) -> GameTrace:
    runner = GameRunner(config, memory)
    for item in events:
        runner.feed(item.t, item.event)
    if not runner.trace.complete:
        log.warning("event stream ended in %s before the game ended", runner.state)
    return runner.trace


def scripted_events(config: GameConfig, names: dict[str, str | None] | None = None,
                    answers: str = "yes") -> list[TimedEvent]:
    """Idealized perception stream for a full game (tests and demos).

    Players arrive together on the left; the k-th invited player gets track
    id k + 1. `names` maps color -> extracted name (None = failure).
    """
    names = names or {c: c.capitalize() for c in config.players}
    order = positioning_order(config)
    tid = {c: k + 1 for k, c in enumerate(order)}
    seat = {c: config.seat_of(c) for c in config.players}
    out: list[TimedEvent] = []
    t = 0.0

    def emit(ev, dt=0.0):
        nonlocal t
        t += dt
        out.append(TimedEvent(round(t, 6), ev))

    emit(SoundDetected(AzimuthBin.LEFT))
    emit(FacesDetected(tuple(sorted(tid.values()))), 1.0)
    for c in order:
        emit(PositionStable(tid[c], seat[c]), 5.0)
    for c in order:
        emit(NamePresented(tid[c], names.get(c)), 2.0)
        for _ in range(int(config.presentation_seconds)):
            emit(SoundDetected(seat[c]))
            t += 1.0
        emit(TimerElapsed("presentation"))
    for r, c in enumerate(turn_order(config)):
        emit(TimerElapsed("prepare"), config.prepare_seconds)
        for _ in range(int(config.description_seconds)):
            emit(SoundDetected(seat[c]))
            t += 1.0
        emit(TimerElapsed("description"))
        answerer = next(x for x in config.players if x != c) if len(config.players) > 1 else c
        emit(BuzzerCall(seat[answerer]), 2.0)
        emit(TimerElapsed("answer"), config.answer_seconds)
        emit(HotWord(answers), 1.5)
    return out
