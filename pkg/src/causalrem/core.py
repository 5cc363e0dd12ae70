"""Domain types shared across the package.

Vertex labels are opaque strings; everything numeric works on dense integer
indices into ``EventStream.v1`` / ``EventStream.v2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np


class CausalREMError(Exception):
    """Base class for all errors raised by this package."""


class StreamError(CausalREMError):
    pass


class DuplicateTime(StreamError):
    pass


class OutOfOrder(StreamError):
    pass


class UnknownVertex(StreamError):
    pass


class NotAtRisk(CausalREMError):
    """An observed event dyad is missing from its own risk set."""


class NoControlAvailable(CausalREMError):
    pass


class MissingCovariate(CausalREMError):
    pass


class HazardOverflow(CausalREMError):
    pass


class SingularFit(CausalREMError):
    pass


class RiskOverflow(CausalREMError):
    pass


class NoNeighbor(CausalREMError):
    pass


@dataclass(frozen=True)
class Event:
    time: float
    sender: str
    receiver: str


@dataclass(frozen=True, eq=False)
class EventStream:
    """Marked point process of relational events on ``[0, horizon]``.

    ``senders`` and ``receivers`` index into ``v1`` and ``v2``.  Use
    :meth:`from_events` to build a stream from labelled events; it validates.
    """

    times: np.ndarray
    senders: np.ndarray
    receivers: np.ndarray
    v1: tuple[str, ...]
    v2: tuple[str, ...]
    horizon: float

    def __post_init__(self):
        for name, dtype in (("times", float), ("senders", np.int64), ("receivers", np.int64)):
            arr = np.array(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_events(
        cls,
        events: Sequence[Event | tuple],
        v1: Sequence[str] | None = None,
        v2: Sequence[str] | None = None,
        horizon: float | None = None,
    ) -> "EventStream":
        events = [e if isinstance(e, Event) else Event(float(e[0]), str(e[1]), str(e[2])) for e in events]
        if v1 is None:
            v1 = sorted({e.sender for e in events} | {e.receiver for e in events})
        if v2 is None:
            v2 = v1
        v1, v2 = tuple(str(v) for v in v1), tuple(str(v) for v in v2)
        idx1 = {v: i for i, v in enumerate(v1)}
        idx2 = {v: i for i, v in enumerate(v2)}
        senders, receivers = [], []
        for k, e in enumerate(events):
            if e.sender not in idx1:
                raise UnknownVertex(f"event {k}: sender {e.sender!r} not in V1")
            if e.receiver not in idx2:
                raise UnknownVertex(f"event {k}: receiver {e.receiver!r} not in V2")
            senders.append(idx1[e.sender])
            receivers.append(idx2[e.receiver])
        times = [e.time for e in events]
        if horizon is None:
            horizon = max(times) if times else 0.0
        stream = cls(np.asarray(times, float), np.asarray(senders, np.int64),
                     np.asarray(receivers, np.int64), v1, v2, float(horizon))
        validate_stream(stream)
        return stream

    def __len__(self) -> int:
        return len(self.times)

    def __iter__(self) -> Iterator[Event]:
        for t, s, r in zip(self.times, self.senders, self.receivers):
            yield Event(float(t), self.v1[s], self.v2[r])

    def __getitem__(self, i: int) -> Event:
        return Event(float(self.times[i]), self.v1[self.senders[i]], self.v2[self.receivers[i]])

    @property
    def events(self) -> list[Event]:
        return list(self)

    @property
    def one_mode(self) -> bool:
        return self.v1 == self.v2

    def count(self, sender: int, receiver: int, t: float) -> int:
        """N_sr(t): number of (sender, receiver) events with time <= t."""
        mask = (self.senders == sender) & (self.receivers == receiver)
        return int(np.searchsorted(self.times[mask], t, side="right"))

    def counts_at(self, t: float) -> np.ndarray:
        """Matrix of all N_sr(t), shape (|V1|, |V2|)."""
        k = int(np.searchsorted(self.times, t, side="right"))
        out = np.zeros((len(self.v1), len(self.v2)), dtype=np.int64)
        np.add.at(out, (self.senders[:k], self.receivers[:k]), 1)
        return out


def validate_stream(stream: EventStream) -> None:
    """Raise a :class:`StreamError` subclass if ``stream`` breaks an invariant."""
    t = stream.times
    if not np.all(np.isfinite(t)) or np.any(t < 0):
        raise StreamError("event times must be finite and non-negative")
    if len(t) > 1:
        dt = np.diff(t)
        if np.any(dt < 0):
            k = int(np.argmax(dt < 0)) + 1
            raise OutOfOrder(f"event {k} at t={t[k]} precedes event {k - 1} at t={t[k - 1]}")
        if np.any(dt == 0):
            k = int(np.argmax(dt == 0)) + 1
            raise DuplicateTime(f"events {k - 1} and {k} share t={t[k]}")
    if len(t) and t[-1] > stream.horizon:
        raise StreamError(f"event at t={t[-1]} beyond horizon {stream.horizon}")
    for arr, verts, side in ((stream.senders, stream.v1, "sender"), (stream.receivers, stream.v2, "receiver")):
        if len(arr) and (arr.min() < 0 or arr.max() >= len(verts)):
            raise UnknownVertex(f"{side} index outside vertex set")


@dataclass(frozen=True)
class RiskSetPolicy:
    """Which dyads are at risk at a given time.

    ``mode`` is ``"all-dyads"``, ``"all-dyads-no-self"`` or ``"explicit"``.  In
    explicit mode ``windows`` holds ``(start, end, dyads)`` triples covering
    half-open intervals ``[start, end)``; ``dyads`` is an ``(k, 2)`` array of
    (sender, receiver) indices.
    """

    mode: str = "all-dyads"
    windows: tuple = ()

    MODES = ("all-dyads", "all-dyads-no-self", "explicit")

    def __post_init__(self):
        if self.mode not in self.MODES:
            raise ValueError(f"unknown risk-set mode {self.mode!r}")
        if self.mode == "explicit":
            if not self.windows:
                raise ValueError("explicit risk-set policy needs at least one window")
            wins = []
            for start, end, dyads in self.windows:
                d = np.asarray(dyads, dtype=np.int64).reshape(-1, 2)
                if len(d) == 0:
                    raise ValueError("risk set windows must be non-empty")
                d.setflags(write=False)
                wins.append((float(start), float(end), d))
            object.__setattr__(self, "windows", tuple(sorted(wins, key=lambda w: w[0])))

    def window_at(self, t: float) -> np.ndarray:
        for start, end, dyads in self.windows:
            if start <= t < end:
                return dyads
        raise NotAtRisk(f"no risk-set window covers t={t}")


@dataclass(frozen=True)
class CaseControlPair:
    event_index: int
    time: float
    case_dyad: tuple[int, int]
    control_dyad: tuple[int, int]
    x_case: np.ndarray
    x_control: np.ndarray

    def __post_init__(self):
        if tuple(self.case_dyad) == tuple(self.control_dyad):
            raise ValueError("control dyad must differ from the case dyad")
        xc = np.asarray(self.x_case, float)
        xs = np.asarray(self.x_control, float)
        if xc.shape != xs.shape or xc.ndim != 1:
            raise ValueError("x_case and x_control must be vectors of equal length")
        object.__setattr__(self, "x_case", xc)
        object.__setattr__(self, "x_control", xs)


@dataclass(frozen=True, eq=False)
class PairTable:
    """Column-oriented storage of case-control pairs (one per event).

    Indexing or iterating yields :class:`CaseControlPair` records.
    """

    event_index: np.ndarray
    time: np.ndarray
    case: np.ndarray
    control: np.ndarray
    x_case: np.ndarray
    x_control: np.ndarray
    names: tuple[str, ...] = ()
    v1: tuple[str, ...] = ()
    v2: tuple[str, ...] = ()

    def __post_init__(self):
        xc = np.asarray(self.x_case, float)
        xs = np.asarray(self.x_control, float)
        if xc.ndim != 2 or xc.shape != xs.shape:
            raise ValueError("x_case and x_control must be (n, p) arrays of equal shape")
        case = np.asarray(self.case, np.int64).reshape(-1, 2)
        control = np.asarray(self.control, np.int64).reshape(-1, 2)
        if np.any(np.all(case == control, axis=1)):
            raise ValueError("control dyad must differ from the case dyad")
        for name, val in (("event_index", np.asarray(self.event_index, np.int64)),
                          ("time", np.asarray(self.time, float)),
                          ("case", case), ("control", control),
                          ("x_case", xc), ("x_control", xs)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"x{j + 1}" for j in range(xc.shape[1])))
        if len(self.names) != xc.shape[1]:
            raise ValueError("one name per covariate column required")

    def __len__(self) -> int:
        return len(self.time)

    @property
    def p(self) -> int:
        return self.x_case.shape[1]

    def __getitem__(self, i: int) -> CaseControlPair:
        return CaseControlPair(int(self.event_index[i]), float(self.time[i]),
                               tuple(int(v) for v in self.case[i]),
                               tuple(int(v) for v in self.control[i]),
                               self.x_case[i], self.x_control[i])

    def __iter__(self) -> Iterator[CaseControlPair]:
        for i in range(len(self)):
            yield self[i]

    def swapped(self) -> "PairTable":
        """Same pairs with case and control exchanged."""
        return PairTable(self.event_index, self.time, self.control, self.case,
                         self.x_control, self.x_case, self.names, self.v1, self.v2)

    def with_columns(self, x_case: np.ndarray, x_control: np.ndarray,
                     names: Sequence[str]) -> "PairTable":
        return PairTable(self.event_index, self.time, self.case, self.control,
                         x_case, x_control, tuple(names), self.v1, self.v2)


@dataclass(frozen=True)
class SubsetModel:
    """Candidate parent set: 0-based covariate ``indices`` and one fitted basis each."""

    indices: tuple[int, ...]
    bases: tuple = field(default=(), compare=False)

    def __post_init__(self):
        raw = [int(i) for i in self.indices]
        if not raw:
            raise ValueError("subset must contain at least one covariate")
        if len(set(raw)) != len(raw) or min(raw) < 0:
            raise ValueError(f"invalid subset indices {self.indices}")
        if self.bases and len(self.bases) != len(raw):
            raise ValueError("one basis per index required")
        order = sorted(range(len(raw)), key=raw.__getitem__)
        object.__setattr__(self, "indices", tuple(raw[k] for k in order))
        if self.bases:
            object.__setattr__(self, "bases", tuple(self.bases[k] for k in order))

    @property
    def label(self) -> str:
        """1-based label, e.g. ``{2,3}``."""
        return "{" + ",".join(str(i + 1) for i in self.indices) + "}"
