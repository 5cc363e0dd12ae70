"""CSV and JSON formats for events, panels, pairs, specs and results."""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .basis import BasisSpec
from .core import CausalREMError, EventStream, PairTable, RiskSetPolicy
from .sampler import ArrayPanel


class ParseError(CausalREMError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path, self.line = str(path), line


def _natural_key(label: str):
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)


def _float(path, line, value, what):
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ParseError(path, line, f"{what}: cannot parse {value!r} as a number") from None
    return x


def _reader(path, required: Sequence[str]):
    fh = open(path, newline="", encoding="utf-8")
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        fh.close()
        raise ParseError(path, 1, "empty file") from None
    header = [h.strip() for h in header]
    missing = [c for c in required if c not in header]
    if missing:
        fh.close()
        raise ParseError(path, 1, f"missing columns {missing}")
    return fh, reader, header


# -- events ----------------------------------------------------------------------

def write_events(path, stream: EventStream) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "sender", "receiver"])
        for t, s, r in zip(stream.times, stream.senders, stream.receivers):
            w.writerow([repr(float(t)), stream.v1[s], stream.v2[r]])


def read_events_raw(path) -> list[tuple[float, str, str]]:
    fh, reader, header = _reader(path, ("time", "sender", "receiver"))
    ti, si, ri = header.index("time"), header.index("sender"), header.index("receiver")
    rows = []
    with fh:
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(path, reader.line_num, f"expected {len(header)} fields, got {len(row)}")
            rows.append((_float(path, reader.line_num, row[ti], "time"), row[si].strip(), row[ri].strip()))
    return rows


def read_events(path, v1: Sequence[str] | None = None, v2: Sequence[str] | None = None,
                horizon: float | None = None) -> EventStream:
    rows = read_events_raw(path)
    if v1 is None:
        labels = {s for _, s, _ in rows} | {r for _, _, r in rows}
        v1 = v2 = sorted(labels, key=_natural_key)
    return EventStream.from_events(rows, v1, v2 if v2 is not None else v1, horizon)


# -- covariate panel ------------------------------------------------------------

def write_panel(path, sim) -> None:
    """Rows ``event_index,sender,receiver,x1..xp`` for every event and dyad."""
    v = sim.config.v
    labels = sim.stream.v1
    n, m, p = sim.panel.shape
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["event_index", "sender", "receiver"] + [f"x{j + 1}" for j in range(p)])
        for i in range(n):
            for k in range(m):
                s, r = divmod(k, v)
                w.writerow([i, labels[s], labels[r], *map(repr, sim.panel[i, k].tolist())])


def read_panel(path, stream: EventStream) -> tuple[ArrayPanel, EventStream]:
    """Load a panel CSV; returns the panel and ``stream`` re-indexed to cover its vertices."""
    fh, reader, header = _reader(path, ("event_index", "sender", "receiver"))
    xcols = [k for k, h in enumerate(header) if re.fullmatch(r"x\d+", h)]
    if not xcols:
        raise ParseError(path, 1, "no covariate columns x1..xp")
    names = tuple(header[k] for k in xcols)
    ei, si, ri = header.index("event_index"), header.index("sender"), header.index("receiver")
    events, senders, receivers, values, lines = [], [], [], [], []
    with fh:
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(path, reader.line_num, f"expected {len(header)} fields, got {len(row)}")
            try:
                events.append(int(row[ei]))
            except ValueError:
                raise ParseError(path, reader.line_num, f"bad event_index {row[ei]!r}") from None
            lines.append(reader.line_num)
            senders.append(row[si].strip())
            receivers.append(row[ri].strip())
            values.append([_float(path, reader.line_num, row[k], header[k]) for k in xcols])

    v1 = sorted(set(stream.v1) | set(senders), key=_natural_key)
    v2 = sorted(set(stream.v2) | set(receivers), key=_natural_key)
    stream = EventStream.from_events(list(stream), v1, v2, stream.horizon)
    i1 = {v: k for k, v in enumerate(v1)}
    i2 = {v: k for k, v in enumerate(v2)}
    dyad_keys = sorted({(i1[s], i2[r]) for s, r in zip(senders, receivers)})
    col = {d: k for k, d in enumerate(dyad_keys)}
    data = np.full((len(stream), len(dyad_keys), len(xcols)), np.nan)
    for e, s, r, x, line in zip(events, senders, receivers, values, lines):
        if not 0 <= e < len(stream):
            raise ParseError(path, line, f"event_index {e} outside 0..{len(stream) - 1}")
        data[e, col[(i1[s], i2[r])]] = x
    return ArrayPanel(data, np.array(dyad_keys).reshape(-1, 2), len(v2), names), stream


# -- risk-set policy ------------------------------------------------------------------

def read_policy(spec: str, stream: EventStream) -> RiskSetPolicy:
    """``all-dyads``, ``all-dyads-no-self`` or a JSON file of explicit windows.

    The JSON form is ``[{"start": t0, "end": t1, "dyads": [[s, r], ...]}, ...]``.
    """
    if spec in ("all-dyads", "all-dyads-no-self"):
        return RiskSetPolicy(spec)
    with open(spec, encoding="utf-8") as fh:
        raw = json.load(fh)
    i1 = {v: k for k, v in enumerate(stream.v1)}
    i2 = {v: k for k, v in enumerate(stream.v2)}
    windows = []
    for w in raw:
        dyads = [(i1[str(s)], i2[str(r)]) for s, r in w["dyads"]]
        windows.append((w["start"], w["end"], dyads))
    return RiskSetPolicy("explicit", tuple(windows))


# -- pairs ----------------------------------------------------------------------------

def write_pairs(path, pairs: PairTable) -> None:
    p = pairs.p
    v1 = pairs.v1 or tuple(str(i) for i in range(int(pairs.case[:, 0].max()) + 1))
    v2 = pairs.v2 or v1
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["event_index", "time", "case_sender", "case_receiver", "ctrl_sender",
                    "ctrl_receiver"] + [f"xc{j + 1}" for j in range(p)] + [f"xs{j + 1}" for j in range(p)])
        for k in range(len(pairs)):
            (cs, cr), (ss, sr) = pairs.case[k], pairs.control[k]
            w.writerow([int(pairs.event_index[k]), repr(float(pairs.time[k])), v1[cs], v2[cr], v1[ss], v2[sr],
                        *map(repr, pairs.x_case[k].tolist()), *map(repr, pairs.x_control[k].tolist())])


def read_pairs(path, names: Sequence[str] | None = None) -> PairTable:
    """Load a pairs CSV (also the ingestion format for externally built pairs)."""
    fixed = ("event_index", "time", "case_sender", "case_receiver", "ctrl_sender", "ctrl_receiver")
    fh, reader, header = _reader(path, fixed)
    xc = sorted((int(m.group(1)), k) for k, h in enumerate(header) if (m := re.fullmatch(r"xc(\d+)", h)))
    xs = sorted((int(m.group(1)), k) for k, h in enumerate(header) if (m := re.fullmatch(r"xs(\d+)", h)))
    if not xc or [j for j, _ in xc] != [j for j, _ in xs] or [j for j, _ in xc] != list(range(1, len(xc) + 1)):
        raise ParseError(path, 1, "need matching xc1..xcp and xs1..xsp columns")
    col = {h: header.index(h) for h in fixed}
    ev, tm, dy, XC, XS = [], [], [], [], []
    with fh:
        for row in reader:
            if not row:
                continue
            line = reader.line_num
            if len(row) != len(header):
                raise ParseError(path, line, f"expected {len(header)} fields, got {len(row)}")
            try:
                ev.append(int(row[col["event_index"]]))
            except ValueError:
                raise ParseError(path, line, "bad event_index") from None
            tm.append(_float(path, line, row[col["time"]], "time"))
            dy.append(tuple(row[col[h]].strip() for h in fixed[2:]))
            XC.append([_float(path, line, row[k], header[k]) for _, k in xc])
            XS.append([_float(path, line, row[k], header[k]) for _, k in xs])
            if dy[-1][:2] == dy[-1][2:]:
                raise ParseError(path, line, "control dyad equals case dyad")
    senders = sorted({d[0] for d in dy} | {d[2] for d in dy}, key=_natural_key)
    receivers = sorted({d[1] for d in dy} | {d[3] for d in dy}, key=_natural_key)
    i1 = {v: k for k, v in enumerate(senders)}
    i2 = {v: k for k, v in enumerate(receivers)}
    case = np.array([(i1[a], i2[b]) for a, b, _, _ in dy], np.int64).reshape(-1, 2)
    ctrl = np.array([(i1[c], i2[d]) for _, _, c, d in dy], np.int64).reshape(-1, 2)
    p = len(xc)
    if names is not None and len(names) != p:
        raise ValueError(f"{len(names)} names for {p} covariates")
    return PairTable(np.array(ev), np.array(tm), case, ctrl,
                     np.array(XC, float).reshape(-1, p), np.array(XS, float).reshape(-1, p),
                     tuple(names) if names else (), tuple(senders), tuple(receivers))


# -- specs and outputs ---------------------------------------------------------------

def read_basis_specs(path) -> list[BasisSpec]:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if isinstance(raw, dict):
        raw = raw.get("covariates", raw.get("basis"))
    if not isinstance(raw, list):
        raise ValueError(f"{path}: expected a list of basis specs")
    return [BasisSpec.from_dict(d) for d in raw]


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(obj), fh, indent=2)
        fh.write("\n")


def write_rows(path, rows: Iterable[dict], columns: Sequence[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x)) if np.isfinite(x) else ""
    return x


def sidecar(path) -> Path:
    """Config file written next to a CSV output: ``out.csv`` -> ``out.csv.config.json``."""
    return Path(str(path) + ".config.json")
