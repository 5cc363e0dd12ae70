"""Endogenous and dyadic covariates for observed event streams.

Repetition and reciprocity are elapsed times since the last (s, r) or (r, s)
event strictly before the query time, capped at ``cap`` and paired with a
never-seen indicator.  Elapsed times are divided by ``unit`` (stream time
units per output unit); the defaults assume a stream clocked in hours.
Competition is the biking time from a station to its nearest neighbour.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import EventStream, NoNeighbor, PairTable

EARTH_RADIUS_KM = 6371.0088
DEFAULT_CAP = 72.0
DEFAULT_SPEED_KMH = 15.0


def _last_before(stream: EventStream, s: int, r: int, t: float) -> float | None:
    k = int(np.searchsorted(stream.times, t, side="left"))
    hits = np.flatnonzero((stream.senders[:k] == s) & (stream.receivers[:k] == r))
    return float(stream.times[hits[-1]]) if len(hits) else None


def _elapsed(last, t, cap, unit):
    if last is None:
        return cap, 1
    return min((t - last) / unit, cap), 0


def repetition(stream: EventStream, s: int, r: int, t: float,
               cap: float = DEFAULT_CAP, unit: float = 1.0) -> tuple[float, int]:
    """(elapsed since the last s->r event before ``t``, never-seen flag)."""
    return _elapsed(_last_before(stream, s, r, t), t, cap, unit)


def reciprocity(stream: EventStream, s: int, r: int, t: float,
                cap: float = DEFAULT_CAP, unit: float = 1.0) -> tuple[float, int]:
    """(elapsed since the last r->s event before ``t``, never-seen flag)."""
    return _elapsed(_last_before(stream, r, s, t), t, cap, unit)


class EndogenousTracker:
    """Streaming last-occurrence table keyed by dyad.

    Query with :meth:`repetition` / :meth:`reciprocity` before calling
    :meth:`update` with the event at that time, so covariates only see the
    strict past.
    """

    def __init__(self, cap: float = DEFAULT_CAP, unit: float = 1.0):
        self.cap = cap
        self.unit = unit
        self._last: dict[tuple[int, int], float] = {}

    def repetition(self, s: int, r: int, t: float) -> tuple[float, int]:
        return _elapsed(self._last.get((s, r)), t, self.cap, self.unit)

    def reciprocity(self, s: int, r: int, t: float) -> tuple[float, int]:
        return _elapsed(self._last.get((r, s)), t, self.cap, self.unit)

    def update(self, s: int, r: int, t: float) -> None:
        self._last[(s, r)] = t


def endogenous_columns(stream: EventStream, dyads: np.ndarray,
                       cap: float = DEFAULT_CAP, unit: float = 1.0) -> np.ndarray:
    """Repetition and reciprocity for dyad ``dyads[i]`` at event time ``t_i``.

    Returns an ``(n, 4)`` array: repetition elapsed, repetition never-seen,
    reciprocity elapsed, reciprocity never-seen.
    """
    dyads = np.asarray(dyads, np.int64).reshape(-1, 2)
    if len(dyads) != len(stream):
        raise ValueError("one dyad per event required")
    tracker = EndogenousTracker(cap, unit)
    out = np.empty((len(stream), 4))
    for i, (t, es, er) in enumerate(zip(stream.times, stream.senders, stream.receivers)):
        s, r = int(dyads[i, 0]), int(dyads[i, 1])
        out[i, 0:2] = tracker.repetition(s, r, t)
        out[i, 2:4] = tracker.reciprocity(s, r, t)
        tracker.update(int(es), int(er), float(t))
    return out


# -- geography -----------------------------------------------------------------

@dataclass(frozen=True)
class Stations:
    ids: tuple[str, ...]
    lat: np.ndarray
    lon: np.ndarray

    def index(self, labels) -> np.ndarray:
        pos = {s: k for k, s in enumerate(self.ids)}
        return np.array([pos[str(v)] for v in labels], np.int64)


def load_stations(path) -> Stations:
    """Read a ``station_id,lat,lon`` CSV."""
    ids, lat, lon = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"station_id", "lat", "lon"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            try:
                lat.append(float(row["lat"]))
                lon.append(float(row["lon"]))
            except ValueError as exc:
                raise ValueError(f"{path}:{reader.line_num}: {exc}") from None
            ids.append(row["station_id"])
    return Stations(tuple(ids), np.array(lat), np.array(lon))


def haversine_km(lat1, lon1, lat2, lon2):
    lat1, lon1, lat2, lon2 = map(np.radians, (lat1, lon1, lat2, lon2))
    a = (np.sin((lat2 - lat1) / 2) ** 2
         + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2)
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def distance_matrix_km(stations: Stations) -> np.ndarray:
    lat, lon = stations.lat, stations.lon
    return haversine_km(lat[:, None], lon[:, None], lat[None, :], lon[None, :])


def competition_all(stations: Stations, speed_kmh: float = DEFAULT_SPEED_KMH) -> np.ndarray:
    """Biking minutes from every station to its nearest other station.

    Larger values mean less competition nearby.
    """
    if len(stations.ids) < 2:
        raise NoNeighbor("competition needs at least two stations")
    d = distance_matrix_km(stations)
    np.fill_diagonal(d, np.inf)
    return d.min(axis=1) / speed_kmh * 60.0


def competition(stations: Stations, station_id: str,
                speed_kmh: float = DEFAULT_SPEED_KMH) -> float:
    if len(stations.ids) < 2:
        raise NoNeighbor("competition needs at least two stations")
    k = stations.ids.index(str(station_id))
    d = haversine_km(stations.lat[k], stations.lon[k], stations.lat, stations.lon)
    d[k] = np.inf
    return float(d.min() / speed_kmh * 60.0)


# -- assembling pair covariates ----------------------------------------------------

BIKE_COLUMNS = ("competition_sender", "competition_receiver", "distance",
                "repetition", "reciprocity", "repetition_never", "reciprocity_never")


def bike_covariates(stream: EventStream, pairs: PairTable, stations: Stations,
                    cap: float = DEFAULT_CAP, unit: float = 1.0,
                    speed_kmh: float = DEFAULT_SPEED_KMH) -> tuple[np.ndarray, np.ndarray]:
    """Case and control rows of :data:`BIKE_COLUMNS` for every pair.

    Station coordinates are looked up by vertex label.  Distances are in
    biking minutes at ``speed_kmh``.
    """
    sidx = stations.index(stream.v1)
    ridx = stations.index(stream.v2)
    comp = competition_all(stations, speed_kmh)
    dist = distance_matrix_km(stations) / speed_kmh * 60.0

    def rows(dyads):
        s, r = sidx[dyads[:, 0]], ridx[dyads[:, 1]]
        endo = endogenous_columns(stream, dyads, cap, unit)
        return np.column_stack([comp[s], comp[r], dist[s, r],
                                endo[:, 0], endo[:, 2], endo[:, 1], endo[:, 3]])

    return rows(pairs.case), rows(pairs.control)


class StationPanel:
    """Covariate panel over a station stream, evaluated lazily per queried dyad.

    Columns are :data:`BIKE_COLUMNS`.  Endogenous columns at event ``i`` only
    use events ``0..i-1``; since event times are unique this is the strict
    past of ``t_i``.
    """

    names = BIKE_COLUMNS

    def __init__(self, stream: EventStream, stations: Stations, cap: float = DEFAULT_CAP,
                 unit: float = 1.0, speed_kmh: float = DEFAULT_SPEED_KMH):
        self.stream = stream
        self.cap, self.unit = cap, unit
        self._sidx = stations.index(stream.v1)
        self._ridx = stations.index(stream.v2)
        self._comp = competition_all(stations, speed_kmh)
        self._minutes = distance_matrix_km(stations) / speed_kmh * 60.0
        history: dict[tuple[int, int], list[int]] = {}
        for i, (s, r) in enumerate(zip(stream.senders.tolist(), stream.receivers.tolist())):
            history.setdefault((s, r), []).append(i)
        self._history = {k: np.asarray(v) for k, v in history.items()}

    def _elapsed(self, i: int, s: int, r: int) -> tuple[float, int]:
        idx = self._history.get((s, r))
        if idx is None:
            return self.cap, 1
        k = int(np.searchsorted(idx, i, side="left"))
        if k == 0:
            return self.cap, 1
        t = self.stream.times
        return min((t[i] - t[idx[k - 1]]) / self.unit, self.cap), 0

    def values(self, event_index, senders, receivers) -> np.ndarray:
        event_index = np.asarray(event_index)
        senders, receivers = np.asarray(senders), np.asarray(receivers)
        out = np.empty((len(event_index), len(self.names)))
        s_st, r_st = self._sidx[senders], self._ridx[receivers]
        out[:, 0] = self._comp[s_st]
        out[:, 1] = self._comp[r_st]
        out[:, 2] = self._minutes[s_st, r_st]
        for k, (i, s, r) in enumerate(zip(event_index.tolist(), senders.tolist(), receivers.tolist())):
            out[k, 3], out[k, 5] = self._elapsed(i, s, r)
            out[k, 4], out[k, 6] = self._elapsed(i, r, s)
        return out
