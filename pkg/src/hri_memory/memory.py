"""Spatial working memory: azimuth bins -> tracked persons."""
from __future__ import annotations

from dataclasses import dataclass, field

from .sls import AzimuthBin

COLORS = ("blue", "green", "red")


class MemoryConsistencyError(Exception):
    """Base for memory consistency failures."""


class DuplicateTrack(MemoryConsistencyError):
    pass


class UnknownTrack(MemoryConsistencyError, KeyError):
    pass


@dataclass
class PersonSlot:
    track_id: int
    color_label: str | None = None
    name: str | None = None

    @property
    def label(self) -> str:
        """Name once known, otherwise the color label."""
        if self.name:
            return self.name
        return self.color_label or f"track-{self.track_id}"


@dataclass(frozen=True)
class Ambiguous:
    """More than one person is remembered in the queried bin."""

    slots: tuple[PersonSlot, ...]


def unknown_name(color: str) -> str:
    return f"unknown-{color}"


@dataclass
class SpatialMemory:
    bins: dict[AzimuthBin, list[PersonSlot]] = field(
        default_factory=lambda: {b: [] for b in AzimuthBin})

    def _locate(self, track_id: int) -> tuple[AzimuthBin, PersonSlot]:
        for b, slots in self.bins.items():
            for s in slots:
                if s.track_id == track_id:
                    return b, s
        raise UnknownTrack(track_id)

    def slots(self) -> list[PersonSlot]:
        return [s for b in AzimuthBin for s in self.bins[b]]

    def __len__(self) -> int:
        return sum(len(v) for v in self.bins.values())

    def __contains__(self, track_id: int) -> bool:
        return any(s.track_id == track_id for s in self.slots())

    def bind(self, bin: AzimuthBin, slot: PersonSlot) -> None:
        if slot.track_id in self:
            raise DuplicateTrack(f"track {slot.track_id} is already bound")
        if slot.color_label is not None and self.by_color(slot.color_label) is not None:
            raise DuplicateTrack(f"color {slot.color_label} is already in use")
        self.bins[bin].append(slot)

    def relocate(self, track_id: int, new_bin: AzimuthBin) -> None:
        old_bin, slot = self._locate(track_id)
        if old_bin is new_bin:
            return
        self.bins[old_bin].remove(slot)
        self.bins[new_bin].append(slot)

    def identity_at(self, bin: AzimuthBin) -> PersonSlot | Ambiguous | None:
        occupants = self.bins[bin]
        if not occupants:
            return None
        if len(occupants) == 1:
            return occupants[0]
        return Ambiguous(tuple(occupants))

    def set_name(self, track_id: int, name: str) -> None:
        self._locate(track_id)[1].name = name

    def assign_color(self, track_id: int, color: str) -> None:
        holder = self.by_color(color)
        if holder is not None and holder.track_id != track_id:
            raise DuplicateTrack(f"color {color} already belongs to track {holder.track_id}")
        self._locate(track_id)[1].color_label = color

    def slot(self, track_id: int) -> PersonSlot:
        return self._locate(track_id)[1]

    def bin_of(self, track_id: int) -> AzimuthBin:
        return self._locate(track_id)[0]

    def by_color(self, color: str) -> PersonSlot | None:
        for s in self.slots():
            if s.color_label == color:
                return s
        return None

    def bin_of_color(self, color: str) -> AzimuthBin | None:
        slot = self.by_color(color)
        return None if slot is None else self.bin_of(slot.track_id)

    def snapshot(self) -> str:
        lines = []
        for b in AzimuthBin:
            for s in self.bins[b]:
                lines.append(f"{b.value} {s.track_id} {s.color_label or '-'} {s.name or '-'}")
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_snapshot(cls, text: str) -> "SpatialMemory":
        mem = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            b, tid, color, name = line.split(" ", 3)
            mem.bind(AzimuthBin.parse(b), PersonSlot(
                int(tid), None if color == "-" else color, None if name == "-" else name))
        return mem


# memory operations carried by UpdateMemory effects

@dataclass(frozen=True)
class Bind:
    bin: AzimuthBin
    track_id: int

    def __str__(self):
        return f"Bind({self.bin},{self.track_id})"


@dataclass(frozen=True)
class Relocate:
    track_id: int
    bin: AzimuthBin

    def __str__(self):
        return f"Relocate({self.track_id},{self.bin})"


@dataclass(frozen=True)
class AssignColor:
    track_id: int
    color: str

    def __str__(self):
        return f"AssignColor({self.track_id},{self.color})"


@dataclass(frozen=True)
class SetName:
    track_id: int
    name: str

    def __str__(self):
        return f"SetName({self.track_id},{self.name})"


MemoryOp = Bind | Relocate | AssignColor | SetName


def apply_op(memory: SpatialMemory, op: MemoryOp) -> None:
    if isinstance(op, Bind):
        memory.bind(op.bin, PersonSlot(op.track_id))
    elif isinstance(op, Relocate):
        memory.relocate(op.track_id, op.bin)
    elif isinstance(op, AssignColor):
        memory.assign_color(op.track_id, op.color)
    elif isinstance(op, SetName):
        memory.set_name(op.track_id, op.name)
    else:
        raise TypeError(f"not a memory op: {op!r}")
