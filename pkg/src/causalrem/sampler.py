"""Nested case-control sampling: one uniformly drawn non-event per event."""

from __future__ import annotations

from typing import Protocol, Sequence

import numpy as np

from .core import (EventStream, MissingCovariate, NoControlAvailable, NotAtRisk,
                   PairTable, RiskSetPolicy)


class CovariatePanel(Protocol):
    names: tuple[str, ...]

    def values(self, event_index: np.ndarray, senders: np.ndarray,
               receivers: np.ndarray) -> np.ndarray:
        """Covariate rows X_sr(t_i), shape ``(len(event_index), p)``; NaN if unknown."""
        ...


class ArrayPanel:
    """Dense panel ``data[i, k, :]`` for event ``i`` and dyad ``k``.

    ``dyads`` lists the (sender, receiver) index of each column ``k``.  Dyads
    that are absent from ``dyads`` evaluate to NaN.
    """

    def __init__(self, data: np.ndarray, dyads: np.ndarray, n_receivers: int,
                 names: Sequence[str] | None = None):
        self.data = np.asarray(data, float)
        if self.data.ndim != 3:
            raise ValueError("panel data must have shape (n_events, n_dyads, p)")
        dyads = np.asarray(dyads, np.int64).reshape(-1, 2)
        if len(dyads) != self.data.shape[1]:
            raise ValueError("one dyad per panel column required")
        self.n_receivers = int(n_receivers)
        n_senders = int(dyads[:, 0].max()) + 1 if len(dyads) else 0
        self._column = np.full(n_senders * self.n_receivers, -1, np.int64)
        self._column[dyads[:, 0] * self.n_receivers + dyads[:, 1]] = np.arange(len(dyads))
        p = self.data.shape[2]
        self.names = tuple(names) if names else tuple(f"x{j + 1}" for j in range(p))

    @classmethod
    def from_sim(cls, sim) -> "ArrayPanel":
        return cls(sim.panel, sim.dyads, len(sim.stream.v2))

    def values(self, event_index, senders, receivers):
        flat = np.asarray(senders) * self.n_receivers + np.asarray(receivers)
        ok = (flat >= 0) & (flat < len(self._column))
        col = np.full(len(flat), -1, np.int64)
        col[ok] = self._column[flat[ok]]
        out = np.full((len(flat), self.data.shape[2]), np.nan)
        good = col >= 0
        out[good] = self.data[np.asarray(event_index)[good], col[good]]
        return out


def _uniform_excluding(rng, size: np.ndarray, position: np.ndarray) -> np.ndarray:
    """Uniform draw from ``{0..size-1} \\ {position}``, elementwise."""
    k = np.floor(rng.random(len(size)) * (size - 1)).astype(np.int64)
    return k + (k >= position)


def sample_controls(stream: EventStream, policy: RiskSetPolicy,
                    rng: np.random.Generator) -> np.ndarray:
    """Control dyad for every event, shape ``(n, 2)``."""
    s, r = stream.senders, stream.receivers
    n1, n2 = len(stream.v1), len(stream.v2)
    n = len(stream)
    if policy.mode == "all-dyads":
        if n1 * n2 < 2:
            raise NoControlAvailable("risk set has a single dyad")
        k = _uniform_excluding(rng, np.full(n, n1 * n2), s * n2 + r)
        return np.stack(np.divmod(k, n2), axis=1)

    if policy.mode == "all-dyads-no-self":
        # self-loops are dyads whose sender and receiver carry the same label
        recv_of = {v: j for j, v in enumerate(stream.v2)}
        self_col = np.array([recv_of.get(v, -1) for v in stream.v1], np.int64)
        has_self = self_col >= 0
        if np.any(has_self[s] & (self_col[s] == r)):
            k = int(np.argmax(has_self[s] & (self_col[s] == r)))
            raise NotAtRisk(f"event {k} is a self-loop, excluded by the risk set")
        width = n2 - has_self.astype(np.int64)
        if int(width.sum()) < 2:
            raise NoControlAvailable("risk set has a single dyad")
        offsets = np.concatenate([[0], np.cumsum(width)])
        # position of (s, r) in the enumeration that skips each sender's self column
        pos = offsets[s] + r - (has_self[s] & (r > self_col[s]))
        k = _uniform_excluding(rng, np.full(n, offsets[-1]), pos)
        cs = np.searchsorted(offsets, k, side="right") - 1
        cr = k - offsets[cs]
        cr = cr + (has_self[cs] & (cr >= self_col[cs]))
        return np.stack([cs, cr], axis=1)

    out = np.empty((n, 2), np.int64)
    for i in range(n):
        dyads = policy.window_at(stream.times[i])
        hit = np.flatnonzero((dyads[:, 0] == s[i]) & (dyads[:, 1] == r[i]))
        if len(hit) == 0:
            raise NotAtRisk(f"event {i} dyad not in its risk set")
        if len(dyads) < 2:
            raise NoControlAvailable(f"event {i}: risk set contains only the event dyad")
        k = _uniform_excluding(rng, np.array([len(dyads)]), hit[:1])[0]
        out[i] = dyads[k]
    return out


def sample_pairs(stream: EventStream, panel: CovariatePanel,
                 policy: RiskSetPolicy | None = None,
                 seed: int | np.random.Generator | None = 0) -> PairTable:
    """Pair every event with a control drawn uniformly from R(t_i) minus the event.

    Covariates of both dyads are read from ``panel`` at the event index.
    Controls are drawn with replacement across events.
    """
    policy = policy or RiskSetPolicy()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    controls = sample_controls(stream, policy, rng)
    idx = np.arange(len(stream))
    x_case = panel.values(idx, stream.senders, stream.receivers)
    x_ctrl = panel.values(idx, controls[:, 0], controls[:, 1])
    for x, who in ((x_case, "case"), (x_ctrl, "control")):
        bad = ~np.all(np.isfinite(x), axis=1)
        if np.any(bad):
            raise MissingCovariate(f"{who} covariates missing for event {int(np.argmax(bad))}")
    case = np.stack([stream.senders, stream.receivers], axis=1)
    return PairTable(idx, stream.times, case, controls, x_case, x_ctrl,
                     tuple(panel.names), stream.v1, stream.v2)
