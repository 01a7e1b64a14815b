import pytest
from hypothesis import given
from hypothesis import strategies as st

from hri_memory.game import (TIMES_UP, Announce, BuzzerCall, CollectFace, CollectVoice,
                             FacesDetected, GameConfig, GameRunner, GameState, HotWord, Ignored,
                             NamePresented, OrientGaze, Phase, PositionStable, SoundDetected,
                             StartTimer, TimedEvent, TimerElapsed, advance, positioning_order,
                             run_to_completion, scripted_events, turn_order)
from hri_memory.memory import PersonSlot, SpatialMemory
from hri_memory.sls import AzimuthBin

L, C, R = AzimuthBin.LEFT, AzimuthBin.CENTER, AzimuthBin.RIGHT
CFG = GameConfig()


def seated_memory():
    m = SpatialMemory()
    for tid, (b, c) in enumerate(zip((R, C, L), ("blue", "green", "red")), 1):
        m.bind(b, PersonSlot(tid, c))
    return m


def test_config_validation():
    with pytest.raises(ValueError):
        GameConfig(presentation_seconds=0)
    with pytest.raises(ValueError):
        GameConfig(cards_per_player=0)
    with pytest.raises(ValueError):
        GameConfig(players=("blue", "blue"))
    with pytest.raises(ValueError):
        HotWord("maybe")


def test_idle_sound_goes_to_welcome():
    s, fx = advance(GameState(), SoundDetected(L), SpatialMemory(), CFG)
    assert s.phase is Phase.WELCOME and fx == [OrientGaze(L)]


def test_idle_ignores_other_events():
    s, fx = advance(GameState(), FacesDetected((1, 2, 3)), SpatialMemory(), CFG)
    assert s == GameState() and isinstance(fx[0], Ignored)


def test_description_timeout_says_times_up():
    s, fx = advance(GameState(Phase.CARD_DESCRIPTION, color="red", round=2),
                    TimerElapsed("description"), seated_memory(), CFG)
    assert s.phase is Phase.ANSWER_WAIT
    assert Announce(TIMES_UP) in fx


def test_answer_hotword_moves_on_or_ends():
    s, _ = advance(GameState(Phase.ANSWER_GIVEN, color="red", bin=L, round=2),
                   HotWord("yes"), seated_memory(), CFG)
    assert s.phase is Phase.START_GAME and s.round == 3
    s, _ = advance(GameState(Phase.ANSWER_GIVEN, color="red", bin=L, round=9),
                   HotWord("no"), seated_memory(), CFG)
    assert s.phase is Phase.GAME_END


def test_no_buzzer_timeout_goes_to_next_round():
    s, _ = advance(GameState(Phase.ANSWER_WAIT, color="red", round=1),
                   TimerElapsed("answer_wait"), seated_memory(), CFG)
    assert s.phase is Phase.START_GAME and s.round == 2


def test_collect_voice_uses_identity_at_gaze_bin():
    m = seated_memory()
    for b in AzimuthBin:
        _, fx = advance(GameState(Phase.CARD_DESCRIPTION, color="blue", round=1), SoundDetected(b), m, CFG)
        voice = [f for f in fx if isinstance(f, CollectVoice)]
        assert voice == [CollectVoice(m.identity_at(b).color_label, b)]


def test_turn_order_each_player_three_cards():
    order = turn_order(CFG)
    assert len(order) == 9
    assert all(order.count(c) == 3 for c in CFG.players)
    assert sorted(positioning_order(CFG)) == sorted(CFG.players)


def test_scripted_stream_completes_with_nine_descriptions():
    trace = run_to_completion(scripted_events(CFG), CFG)
    assert trace.complete and trace.final_state.phase is Phase.GAME_END
    assert trace.count_phase(Phase.CARD_DESCRIPTION) == 9


def test_empty_stream_is_incomplete_idle():
    trace = run_to_completion([], CFG)
    assert not trace.complete and trace.final_state.phase is Phase.IDLE


def test_replay_is_byte_identical():
    cfg = GameConfig(turn_order_seed=5)
    a = run_to_completion(scripted_events(cfg), cfg).export()
    b = run_to_completion(scripted_events(cfg), cfg).export()
    assert a == b and a.encode() == b.encode()


def test_failed_name_becomes_unknown_color():
    names = {c: None for c in CFG.players}
    runner = GameRunner(CFG)
    for ev in scripted_events(CFG, names):
        runner.feed(ev.t, ev.event)
    assert sorted(s.label for s in runner.memory.slots()) == ["unknown-blue", "unknown-green", "unknown-red"]


def test_events_out_of_order_rejected():
    r = GameRunner(CFG)
    r.feed(1.0, SoundDetected(L))
    with pytest.raises(ValueError):
        r.feed(0.5, SoundDetected(L))


def test_trace_line_format():
    trace = run_to_completion([TimedEvent(0.0, SoundDetected(L))], CFG)
    assert trace.export() == "0.000 Idle SoundDetected(Left) [OrientGaze(Left)]\n"


events = st.one_of(
    st.sampled_from(list(AzimuthBin)).map(SoundDetected),
    st.sampled_from(list(AzimuthBin)).map(BuzzerCall),
    st.lists(st.integers(1, 4), min_size=1, max_size=4, unique=True).map(lambda x: FacesDetected(tuple(x))),
    st.builds(PositionStable, st.integers(1, 4), st.sampled_from(list(AzimuthBin))),
    st.sampled_from(["presentation", "prepare", "description", "answer_wait", "answer", "verification"]).map(TimerElapsed),
    st.builds(NamePresented, st.integers(1, 4), st.sampled_from(["Marco", None])),
    st.sampled_from(["yes", "no"]).map(HotWord),
)


@given(st.lists(events, max_size=80))
def test_random_streams_never_collect_in_idle_or_end(stream):
    r = GameRunner(CFG)
    for k, ev in enumerate(stream):
        r.feed(float(k), ev)
    for entry, fx in r.trace.effects():
        if isinstance(fx, (CollectFace, CollectVoice)):
            assert entry.state.phase not in (Phase.IDLE, Phase.GAME_END)
    assert r.trace.count_phase(Phase.CARD_DESCRIPTION) <= 9


@given(st.lists(events, max_size=40))
def test_advance_is_pure(stream):
    a, b = GameRunner(CFG), GameRunner(CFG)
    for k, ev in enumerate(stream):
        a.feed(float(k), ev)
        b.feed(float(k), ev)
    assert a.trace.export() == b.trace.export()
    assert a.memory.snapshot() == b.memory.snapshot()


def test_scripted_effects_include_timers():
    trace = run_to_completion(scripted_events(CFG), CFG)
    timers = [fx for _, fx in trace.effects() if isinstance(fx, StartTimer)]
    assert sum(t.name == "description" and t.seconds == 30 for t in timers) == 9
    assert sum(t.name == "presentation" and t.seconds == 20 for t in timers) == 3
