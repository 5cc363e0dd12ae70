"""Gillespie-type generation of relational events from structural hazards.

Two structural equation presets are provided:

``two-cov``
    X1 ~ noise, hazard exp(X1); X2 is a child of the event indicator.
``seven-cov``
    X1 = e1, X2 = X1 + e2, X3 = X1 - 0.5 X2 + e3, X4 = X2 + e4, hazard
    exp(0.8 X2 - 0.9 X3); X5 and X6 are flip-masked copies of the event
    indicator plus Gaussian noise, X7 = X6 + e7.

Covariates are redrawn for every dyad at every event step, so they are
piecewise constant between events.  All dyads of ``{1..v}^2`` are at risk.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .core import EventStream, HazardOverflow

STRUCTURES = ("two-cov", "seven-cov")
CHILD_FLIP = 0.003


@dataclass(frozen=True)
class Noise:
    """Zero-centred noise: ``uniform`` on ``(-scale, scale)`` or ``normal`` with sd ``scale``."""

    kind: str
    scale: float

    def __post_init__(self):
        if self.kind not in ("uniform", "normal"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.scale < 0:
            raise ValueError("noise scale must be non-negative")

    def draw(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.scale == 0:
            return np.zeros(shape)
        if self.kind == "uniform":
            return rng.uniform(-self.scale, self.scale, size=shape)
        return rng.normal(0.0, self.scale, size=shape)


@dataclass(frozen=True)
class SemConfig:
    structure: str
    v: int
    n_events: int
    baseline: float
    coefficients: tuple[float, ...]
    noise: tuple[Noise, ...]
    flip_probs: tuple[float, ...]
    seed: int = 0

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ValueError(f"unknown structure {self.structure!r}")
        p = self.p
        if len(self.coefficients) != p or len(self.noise) != p:
            raise ValueError(f"{self.structure} needs {p} coefficients and noise terms")
        n_flip = 1 if self.structure == "two-cov" else 2
        if len(self.flip_probs) != n_flip:
            raise ValueError(f"{self.structure} needs {n_flip} flip probabilities")
        if not self.baseline > 0:
            raise ValueError("baseline hazard must be positive")
        if self.n_events < 1:
            raise ValueError("n_events must be at least 1")
        if self.v < 2:
            raise ValueError("need at least two vertices")
        if any(not 0 <= q < 0.5 for q in self.flip_probs):
            raise ValueError("flip probabilities must lie in [0, 0.5)")

    @property
    def p(self) -> int:
        return 2 if self.structure == "two-cov" else 7

    @property
    def truth(self) -> frozenset[int]:
        """True parent set, 1-based."""
        return frozenset(j + 1 for j, c in enumerate(self.coefficients) if c != 0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["noise"] = [asdict(n) for n in self.noise]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SemConfig":
        d = dict(d)
        d["noise"] = tuple(Noise(**n) for n in d["noise"])
        d["coefficients"] = tuple(d["coefficients"])
        d["flip_probs"] = tuple(d["flip_probs"])
        return cls(**d)

    def with_(self, **changes) -> "SemConfig":
        return replace(self, **changes)


def preset_two_cov(seed: int = 0, n_events: int = 10_000, v: int = 10) -> SemConfig:
    """X1 -> N -> X2 with hazard exp(x1) and constant unit baseline.

    The child is the event indicator with 0.3% of entries flipped plus N(0, 0.1^2)
    noise.
    """
    return SemConfig(
        structure="two-cov", v=v, n_events=n_events, baseline=1.0,
        coefficients=(1.0, 0.0),
        noise=(Noise("uniform", 1.0), Noise("normal", 0.1)),
        flip_probs=(CHILD_FLIP,), seed=seed,
    )


def preset_seven_cov(seed: int = 0, n_events: int = 10_000, v: int = 10) -> SemConfig:
    """Seven-covariate SEM with parents {X2, X3} and hazard exp(0.8 x2 - 0.9 x3).

    Children X5, X6 flip 0.3% of indicator entries and add N(0, 0.1^2) noise;
    X7 = X6 + N(0, 0.25^2).  With these settings the causal set is recovered
    in roughly 85% of replications at every n in 1e3..1e4.
    """
    return SemConfig(
        structure="seven-cov", v=v, n_events=n_events, baseline=1.0,
        coefficients=(0.0, 0.8, -0.9, 0.0, 0.0, 0.0, 0.0),
        noise=(Noise("uniform", 1.0), Noise("uniform", 0.5), Noise("uniform", 0.5),
               Noise("uniform", 1.0), Noise("normal", 0.1), Noise("normal", 0.1),
               Noise("normal", 0.25)),
        flip_probs=(CHILD_FLIP, CHILD_FLIP), seed=seed,
    )


PRESETS = {"two-cov": preset_two_cov, "seven-cov": preset_seven_cov}


@dataclass(frozen=True, eq=False)
class SimOutput:
    """Simulated stream with the covariate panel seen at each event time.

    ``panel[i, k]`` is the covariate vector of dyad ``dyads[k]`` at event ``i``;
    dyad ``k`` is ``(k // v, k % v)``.
    """

    stream: EventStream
    panel: np.ndarray
    dyads: np.ndarray
    truth: frozenset[int]
    config: SemConfig
    waiting_times: np.ndarray = field(repr=False, default=None)

    @property
    def event_dyad_index(self) -> np.ndarray:
        return self.stream.senders * len(self.stream.v2) + self.stream.receivers


def _draw_marks(rng: np.random.Generator, rates: np.ndarray) -> np.ndarray:
    """One categorical draw per row of ``rates`` with probabilities rates/rowsum."""
    cum = np.cumsum(rates, axis=1)
    u = rng.random(len(rates)) * cum[:, -1]
    idx = (cum <= u[:, None]).sum(axis=1)
    return np.minimum(idx, rates.shape[1] - 1)


def _flip_child(rng, indicator, flip_prob, noise: Noise) -> np.ndarray:
    flips = rng.random(indicator.shape) < flip_prob
    return np.where(flips, 1.0 - indicator, indicator) + noise.draw(rng, indicator.shape)


def _exogenous(config: SemConfig, rng, shape) -> np.ndarray:
    """Covariates upstream of N, shape ``shape + (p,)`` with children left at 0."""
    x = np.zeros(shape + (config.p,))
    e = config.noise
    if config.structure == "two-cov":
        x[..., 0] = e[0].draw(rng, shape)
    else:
        x[..., 0] = e[0].draw(rng, shape)
        x[..., 1] = x[..., 0] + e[1].draw(rng, shape)
        x[..., 2] = x[..., 0] - 0.5 * x[..., 1] + e[2].draw(rng, shape)
        x[..., 3] = x[..., 1] + e[3].draw(rng, shape)
    return x


def log_hazard(config: SemConfig, x: np.ndarray) -> np.ndarray:
    """log lambda_sr = log lambda_0 + f_PA(x) for covariate array ``x[..., p]``."""
    return np.log(config.baseline) + x @ np.asarray(config.coefficients)


def simulate(config: SemConfig, rng: np.random.Generator | None = None) -> SimOutput:
    """Generate ``config.n_events`` relational events.

    Each step draws the upstream covariates for all ``v**2`` dyads, sets the
    hazards, draws an exponential waiting time with the total rate and a mark
    with probability proportional to each dyad's hazard, then builds the child
    covariates from the resulting event indicator column.  Steps are
    independent given the SEM, so they are drawn as one batch.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    n, v = config.n_events, config.v
    m = v * v
    x = _exogenous(config, rng, (n, m))
    eta = log_hazard(config, x)
    with np.errstate(over="ignore"):
        rates = np.exp(eta)
    if not np.all(np.isfinite(rates)):
        raise HazardOverflow("hazard overflow; covariates too large for the coefficients")
    total = rates.sum(axis=1)
    assert np.all(total > 0)
    waits = rng.exponential(1.0 / total)
    marks = _draw_marks(rng, rates)

    indicator = np.zeros((n, m))
    indicator[np.arange(n), marks] = 1.0
    e = config.noise
    if config.structure == "two-cov":
        x[..., 1] = _flip_child(rng, indicator, config.flip_probs[0], e[1])
    else:
        x[..., 4] = _flip_child(rng, indicator, config.flip_probs[0], e[4])
        x[..., 5] = _flip_child(rng, indicator, config.flip_probs[1], e[5])
        x[..., 6] = x[..., 5] + e[6].draw(rng, (n, m))

    times = np.cumsum(waits)
    labels = tuple(str(i) for i in range(1, v + 1))
    stream = EventStream(times, marks // v, marks % v, labels, labels, float(times[-1]))
    dyads = np.stack(np.divmod(np.arange(m), v), axis=1)
    return SimOutput(stream, x, dyads, config.truth, config, waits)


def replication_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for replication ``keys`` under a master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


# -- synthetic station network ------------------------------------------------

@dataclass(frozen=True)
class StationNetworkConfig:
    """Bike-style one-mode network with endogenous repeat/return effects.

    log-hazard of s -> r (s != r) is ``competition_effect * comp_s +
    distance_effect * minutes(s, r) + repetition_effect * seen(s, r) +
    reciprocity_effect * seen(r, s)``, where ``seen`` flags any earlier event.
    """

    n_stations: int = 500
    n_events: int = 2000
    competition_effect: float = -0.4
    distance_effect: float = -0.25
    repetition_effect: float = 1.5
    reciprocity_effect: float = 1.0
    lat_range: tuple[float, float] = (38.85, 38.95)
    lon_range: tuple[float, float] = (-77.10, -76.95)
    speed_kmh: float = 15.0
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class StationNetwork:
    stream: EventStream
    lat: np.ndarray
    lon: np.ndarray
    config: StationNetworkConfig


def simulate_station_network(config: StationNetworkConfig,
                             rng: np.random.Generator | None = None) -> StationNetwork:
    """Exact Gillespie simulation; hazards change only on the two dyads touched by an event."""
    from .netstats import Stations, competition_all, distance_matrix_km

    if rng is None:
        rng = np.random.default_rng(config.seed)
    k = config.n_stations
    if k < 2:
        raise ValueError("need at least two stations")
    lat = rng.uniform(*config.lat_range, size=k)
    lon = rng.uniform(*config.lon_range, size=k)
    ids = tuple(f"S{i:04d}" for i in range(k))
    st = Stations(ids, lat, lon)
    comp = competition_all(st, config.speed_kmh)
    minutes = distance_matrix_km(st) / config.speed_kmh * 60.0

    base = config.competition_effect * comp[:, None] + config.distance_effect * minutes
    seen = np.zeros((k, k), dtype=bool)
    rates = np.exp(base)
    np.fill_diagonal(rates, 0.0)
    if not np.all(np.isfinite(rates)):
        raise HazardOverflow("station hazards overflow")
    row_tot = rates.sum(axis=1)

    def refresh(a, b):
        eta = base[a, b] + config.repetition_effect * seen[a, b] + config.reciprocity_effect * seen[b, a]
        new = np.exp(eta)
        row_tot[a] += new - rates[a, b]
        rates[a, b] = new

    n = config.n_events
    times = np.empty(n)
    senders = np.empty(n, np.int64)
    receivers = np.empty(n, np.int64)
    t = 0.0
    for i in range(n):
        total = row_tot.sum()
        t += rng.exponential(1.0 / total)
        s = int(min(np.searchsorted(np.cumsum(row_tot), rng.random() * total, side="right"), k - 1))
        row = rates[s]
        r = int(min(np.searchsorted(np.cumsum(row), rng.random() * row.sum(), side="right"), k - 1))
        times[i], senders[i], receivers[i] = t, s, r
        if not seen[s, r]:
            seen[s, r] = True
            refresh(s, r)
            refresh(r, s)
        # row totals drift from repeated updates; resync the touched rows
        row_tot[s] = rates[s].sum()
        row_tot[r] = rates[r].sum()
    stream = EventStream(times, senders, receivers, ids, ids, float(times[-1]))
    return StationNetwork(stream, lat, lon, config)
