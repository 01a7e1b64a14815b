import pytest
from hypothesis import given
from hypothesis import strategies as st

from hri_memory.memory import (Ambiguous, Bind, DuplicateTrack, PersonSlot, Relocate, SetName,
                               SpatialMemory, UnknownTrack, apply_op, unknown_name)
from hri_memory.sls import AzimuthBin, NoisyOracleEstimator, AudioEvent, bin_azimuth

L, C, R = AzimuthBin.LEFT, AzimuthBin.CENTER, AzimuthBin.RIGHT


def test_bind_single_and_welcome_cluster():
    m = SpatialMemory()
    m.bind(L, PersonSlot(1, "blue"))
    assert len(m.bins[L]) == 1
    m.bind(L, PersonSlot(2))
    m.bind(L, PersonSlot(3))
    assert len(m.bins[L]) == 3 and isinstance(m.identity_at(L), Ambiguous)


def test_bind_duplicate_track_or_color_raises():
    m = SpatialMemory()
    m.bind(L, PersonSlot(1, "blue"))
    with pytest.raises(DuplicateTrack):
        m.bind(R, PersonSlot(1))
    with pytest.raises(DuplicateTrack):
        m.bind(R, PersonSlot(2, "blue"))


def test_relocate():
    m = SpatialMemory()
    m.bind(L, PersonSlot(1))
    m.bind(L, PersonSlot(2))
    m.relocate(1, R)
    assert [s.track_id for s in m.bins[L]] == [2]
    assert [s.track_id for s in m.bins[R]] == [1]
    before = m.snapshot()
    m.relocate(1, R)
    assert m.snapshot() == before
    with pytest.raises(UnknownTrack):
        m.relocate(9, C)


def test_identity_at_cases():
    m = SpatialMemory()
    assert m.identity_at(C) is None
    m.bind(C, PersonSlot(4, "green"))
    assert m.identity_at(C).track_id == 4


def test_positioning_yields_bijection():
    m = SpatialMemory()
    for tid in (1, 2, 3):
        m.bind(L, PersonSlot(tid))
    for tid, b in zip((1, 2, 3), (R, C, L)):
        m.relocate(tid, b)
    assert {b: m.identity_at(b).track_id for b in AzimuthBin} == {R: 1, C: 2, L: 3}


def test_set_name_and_unknown():
    m = SpatialMemory()
    m.bind(L, PersonSlot(1, "blue"))
    m.set_name(1, "Marco")
    assert m.slot(1).name == "Marco" and m.slot(1).color_label == "blue"
    m.set_name(1, "Parco")
    assert m.slot(1).label == "Parco"
    m.set_name(1, unknown_name("blue"))
    assert m.slot(1).label == "unknown-blue"
    with pytest.raises(UnknownTrack):
        m.set_name(2, "x")


def test_snapshot_round_trip():
    m = SpatialMemory()
    m.bind(L, PersonSlot(1, "blue", "Marco"))
    m.bind(R, PersonSlot(2, "red"))
    m.bind(R, PersonSlot(3, None, "Anna Maria"))
    text = m.snapshot()
    assert text.splitlines()[0] == "Left 1 blue Marco"
    assert SpatialMemory.from_snapshot(text).snapshot() == text
    assert SpatialMemory().snapshot() == ""


ops = st.lists(st.tuples(st.sampled_from(["bind", "relocate", "name"]),
                         st.integers(1, 6), st.sampled_from(list(AzimuthBin))), max_size=40)


@given(ops)
def test_random_ops_conserve_slots(seq):
    m = SpatialMemory()
    bound = set()
    for kind, tid, b in seq:
        op = {"bind": Bind(b, tid), "relocate": Relocate(tid, b), "name": SetName(tid, f"n{tid}")}[kind]
        try:
            apply_op(m, op)
        except (DuplicateTrack, UnknownTrack):
            pass
        else:
            if kind == "bind":
                bound.add(tid)
        ids = [s.track_id for s in m.slots()]
        assert len(ids) == len(set(ids)) == len(bound) == len(m)
        assert set(ids) == bound


def test_speaker_identity_from_direction():
    m = SpatialMemory()
    seats = {R: 1, C: 2, L: 3}
    for b, tid in seats.items():
        m.bind(b, PersonSlot(tid))
    est = NoisyOracleEstimator(5.0, seed=4)
    import numpy as np
    hits = 0
    for k in range(1000):
        b = list(seats)[k % 3]
        ev = AudioEvent(np.zeros((160, 2), np.int16), 16000, b.center, 0.0)
        hits += m.identity_at(bin_azimuth(est(ev))).track_id == seats[b]
    assert hits / 1000 >= 0.97
