"""Exhaustive subset search: fit, test dispersion, pick the min-BIC survivor.

For every non-empty subset S of the covariates the penalised degenerate
logistic model is fitted on the case-minus-control design, its Pearson risk
is tested against the two-sided chi-square band, and among the accepted
subsets the one with the smallest BIC is selected.  BIC ties go to the
smaller subset, then to the lexicographically smaller index tuple.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .basis import FittedBasis, fit_bases, penalty_matrix
from .core import CausalREMError, PairTable, SingularFit, SubsetModel
from .dispersion import DispersionVerdict, dispersion_test, pearson_risk
from .glmfit import FitResult, fit, fit_auto

log = logging.getLogger(__name__)

MAX_EXHAUSTIVE_P = 20
BIC_CONVENTION = "bic = -2*loglik + edf*log(n); edf = tr[(H + 2*lam*P)^-1 H]"
DF_CONVENTION = "df = n - edf"


class EmptyAcceptedSet(CausalREMError):
    pass


def all_subsets(p: int, max_size: int | None = None) -> list[tuple[int, ...]]:
    """Non-empty subsets of ``range(p)`` ordered by size, then lexicographically."""
    top = p if max_size is None else min(p, max_size)
    return [c for k in range(1, top + 1) for c in itertools.combinations(range(p), k)]


@dataclass
class SubsetResult:
    indices: tuple[int, ...]
    fit: FitResult | None
    verdict: DispersionVerdict | None
    status: str

    @property
    def label(self) -> str:
        return "{" + ",".join(str(i + 1) for i in self.indices) + "}"

    @property
    def accepted(self) -> bool:
        return self.status == "ok" and self.verdict is not None and self.verdict.accepted

    @property
    def bic(self) -> float:
        return self.fit.bic if self.fit is not None else float("nan")

    @property
    def risk(self) -> float:
        return self.fit.pearson_risk if self.fit is not None else float("nan")

    def sort_key(self):
        return (self.bic, len(self.indices), self.indices)

    def to_dict(self) -> dict:
        return {
            "subset": [i + 1 for i in self.indices],
            "status": self.status,
            "accepted": self.accepted,
            "fit": self.fit.to_dict() if self.fit is not None else None,
            "dispersion": self.verdict.to_dict() if self.verdict is not None else None,
        }


@dataclass
class DiscoveryReport:
    results: list[SubsetResult]
    names: tuple[str, ...]
    n: int
    alpha: float
    exhaustive: bool
    config: dict = field(default_factory=dict)

    @property
    def accepted(self) -> list[tuple[int, ...]]:
        return [r.indices for r in self.results if r.accepted]

    @property
    def selected_result(self) -> SubsetResult | None:
        cands = [r for r in self.results if r.accepted]
        return min(cands, key=SubsetResult.sort_key) if cands else None

    @property
    def selected(self) -> tuple[int, ...] | None:
        """0-based indices of the selected subset, or None."""
        best = self.selected_result
        return best.indices if best is not None else None

    @property
    def selected_labels(self) -> list[int] | None:
        sel = self.selected
        return None if sel is None else [i + 1 for i in sel]

    def require_selection(self) -> tuple[int, ...]:
        if self.selected is None:
            raise EmptyAcceptedSet("no subset passed the dispersion test")
        return self.selected

    @property
    def global_min_bic(self) -> SubsetResult | None:
        """Most predictive subset regardless of dispersion.

        Separated fits count: their BIC is that of the last iterate, where the
        log-likelihood has all but reached its supremum of 0.
        """
        fitted = [r for r in self.results if r.fit is not None and np.isfinite(r.bic)]
        return min(fitted, key=SubsetResult.sort_key) if fitted else None

    def result_for(self, indices) -> SubsetResult:
        key = tuple(sorted(indices))
        for r in self.results:
            if r.indices == key:
                return r
        raise KeyError(key)

    def flagged(self) -> list[SubsetResult]:
        return [r for r in self.results if r.status != "ok"]

    def bic_ranking(self) -> list[SubsetResult]:
        fitted = [r for r in self.results if r.fit is not None]
        return sorted(fitted, key=SubsetResult.sort_key)

    def risk_ranking(self) -> list[SubsetResult]:
        """Fitted subsets by Pearson risk, largest first."""
        fitted = [r for r in self.results if r.fit is not None]
        return sorted(fitted, key=lambda r: (-r.risk, r.indices))

    def rankings_rows(self) -> list[dict]:
        rows = []
        for r in self.bic_ranking():
            df = r.verdict.df if r.verdict is not None else float("nan")
            rows.append({"subset": " ".join(str(i + 1) for i in r.indices),
                         "bic": r.bic, "risk": r.risk, "df": df,
                         "accepted": int(r.accepted)})
        return rows

    def to_dict(self) -> dict:
        best = self.global_min_bic
        return {
            "header": {"bic": BIC_CONVENTION, "df": DF_CONVENTION, "alpha": self.alpha,
                       "n": self.n, "p": len(self.names), "names": list(self.names),
                       "exhaustive": self.exhaustive, "n_subsets": len(self.results)},
            "config": self.config,
            "selected": self.selected_labels,
            "accepted": [[i + 1 for i in s] for s in self.accepted],
            "global_min_bic": [i + 1 for i in best.indices] if best else None,
            "flagged": [{"subset": [i + 1 for i in r.indices], "status": r.status}
                        for r in self.flagged()],
            "subsets": [r.to_dict() for r in self.results],
        }


def _delta_blocks(pairs: PairTable, bases: tuple[FittedBasis, ...]) -> list[np.ndarray]:
    return [b.transform(pairs.x_case[:, j]) - b.transform(pairs.x_control[:, j])
            for j, b in enumerate(bases)]


def fit_subset(blocks, bases, indices, alpha: float = 0.05,
               lam: float | str = "auto") -> SubsetResult:
    model = SubsetModel(indices, tuple(bases[j] for j in indices))
    X = np.hstack([blocks[j] for j in model.indices])
    P = penalty_matrix(model)
    try:
        if lam == "auto":
            res = fit_auto(X, P)
        else:
            res = fit(X, P, float(lam))
    except SingularFit as exc:
        log.debug("subset %s singular: %s", model.label, exc)
        return SubsetResult(model.indices, None, None, "singular")
    verdict = dispersion_test(res, len(X), alpha)
    status = "ok" if res.converged else res.status
    return SubsetResult(model.indices, res, verdict, status)


def discover(pairs: PairTable, specs=None, alpha: float = 0.05,
             max_size: int | None = None, threads: int = 1,
             config: dict | None = None) -> DiscoveryReport:
    """Run the three-step search over every non-empty covariate subset.

    ``specs`` gives one :class:`~causalrem.basis.BasisSpec` per covariate
    (all linear when omitted).  ``max_size`` caps the subset cardinality,
    which makes the search non-exhaustive.
    """
    if len(pairs) == 0:
        raise ValueError("no case-control pairs")
    p = pairs.p
    if p > MAX_EXHAUSTIVE_P:
        raise ValueError(f"exhaustive search supports at most {MAX_EXHAUSTIVE_P} covariates")
    bases = fit_bases(pairs, specs)
    blocks = _delta_blocks(pairs, bases)
    subsets = all_subsets(p, max_size)

    def work(s):
        return fit_subset(blocks, bases, s, alpha)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(work, subsets))
    else:
        results = [work(s) for s in subsets]
    exhaustive = max_size is None or max_size >= p
    return DiscoveryReport(results, pairs.names, len(pairs), alpha, exhaustive,
                           dict(config or {}))


@dataclass
class RiskGrid:
    beta_i: np.ndarray
    beta_j: np.ndarray
    risk_over_n: np.ndarray
    mle: dict

    def rows(self):
        for a, bi in enumerate(self.beta_i):
            for b, bj in enumerate(self.beta_j):
                yield float(bi), float(bj), float(self.risk_over_n[a, b])


def risk_grid(pairs: PairTable, i: int, j: int, beta_i, beta_j=None) -> RiskGrid:
    """R(beta)/n over a grid of linear coefficients for covariates ``i`` and ``j`` (0-based).

    Also returns the unpenalised MLEs of the models {i, j}, {i} and {j}
    embedded in the same plane, keyed ``"full"``, ``"i"`` and ``"j"``.
    """
    beta_i = np.asarray(beta_i, float)
    beta_j = beta_i if beta_j is None else np.asarray(beta_j, float)
    D = pairs.x_case[:, [i, j]] - pairs.x_control[:, [i, j]]
    n = len(D)
    out = np.empty((len(beta_i), len(beta_j)))
    for a, bi in enumerate(beta_i):
        eta = bi * D[:, :1] + D[:, 1:2] * beta_j[None, :]
        out[a] = np.exp(-eta).sum(axis=0) / n

    mle = {}
    for key, cols in (("full", [0, 1]), ("i", [0]), ("j", [1])):
        res = fit(D[:, cols])
        point = np.zeros(2)
        point[cols] = res.beta
        mle[key] = {"beta": point.tolist(), "converged": res.converged,
                    "risk_over_n": pearson_risk(point, D) / n, "bic": res.bic}
    return RiskGrid(beta_i, beta_j, out, mle)


# -- replication study -------------------------------------------------------

@dataclass
class ReplicationRecord:
    n: int
    rep: int
    selected: tuple[int, ...] | None
    truth_accepted: bool
    global_min_bic: tuple[int, ...] | None
    truth_beta: list[float]
    bic: np.ndarray
    risk_over_n: np.ndarray
    accepted: np.ndarray


@dataclass
class ReplicationResult:
    truth: tuple[int, ...]
    subsets: list[tuple[int, ...]]
    records: list[ReplicationRecord]
    config: dict = field(default_factory=dict)

    def for_n(self, n: int) -> list[ReplicationRecord]:
        return [r for r in self.records if r.n == n]

    @property
    def n_values(self) -> list[int]:
        return sorted({r.n for r in self.records})

    def recovery(self, n: int) -> float:
        recs = self.for_n(n)
        return sum(r.selected == self.truth for r in recs) / len(recs)

    def recovery_table(self) -> list[dict]:
        rows = []
        for n in self.n_values:
            recs = self.for_n(n)
            hits = sum(r.selected == self.truth for r in recs)
            rows.append({"n": n, "reps": len(recs), "recovered": hits,
                         "recovery": hits / len(recs),
                         "truth_accepted": sum(r.truth_accepted for r in recs) / len(recs)})
        return rows

    def model_summary(self, n: int) -> list[dict]:
        """Per-subset BIC and R/n quartiles across replications (boxplot data)."""
        recs = self.for_n(n)
        bic = np.array([r.bic for r in recs])
        risk = np.array([r.risk_over_n for r in recs])
        acc = np.array([r.accepted for r in recs])
        rows = []
        for k, s in enumerate(self.subsets):
            qb = np.nanpercentile(bic[:, k], [25, 50, 75])
            qr = np.nanpercentile(risk[:, k], [25, 50, 75])
            rows.append({"n": n, "subset": " ".join(str(i + 1) for i in s),
                         "bic_q1": qb[0], "bic_median": qb[1], "bic_q3": qb[2],
                         "risk_q1": qr[0], "risk_median": qr[1], "risk_q3": qr[2],
                         "accept_rate": float(acc[:, k].mean())})
        return rows

    def selection_frequencies(self, n: int) -> dict[tuple[int, ...] | None, int]:
        counts: dict = {}
        for r in self.for_n(n):
            counts[r.selected] = counts.get(r.selected, 0) + 1
        return counts


def run_replication(config, n: int, rep: int, alpha: float = 0.05,
                    master_seed: int | None = None) -> ReplicationRecord:
    """Simulate one dataset, sample pairs and run :func:`discover`."""
    from .sampler import ArrayPanel, sample_pairs
    from .simengine import replication_rng, simulate

    seed = config.seed if master_seed is None else master_seed
    rng = replication_rng(seed, n, rep)
    cfg = config.with_(n_events=n)
    sim = simulate(cfg, rng)
    pairs = sample_pairs(sim.stream, ArrayPanel.from_sim(sim), seed=rng)
    report = discover(pairs, alpha=alpha)
    truth = tuple(sorted(i - 1 for i in cfg.truth))
    tres = report.result_for(truth)
    gmin = report.global_min_bic
    return ReplicationRecord(
        n=n, rep=rep, selected=report.selected, truth_accepted=tres.accepted,
        global_min_bic=gmin.indices if gmin else None,
        truth_beta=tres.fit.beta.tolist() if tres.fit is not None else [],
        bic=np.array([r.bic for r in report.results]),
        risk_over_n=np.array([r.risk / n for r in report.results]),
        accepted=np.array([r.accepted for r in report.results]),
    )


def replicate_study(config, n_values, n_reps: int, alpha: float = 0.05,
                    threads: int = 1, progress=None) -> ReplicationResult:
    """Recovery of the true parent set across replications and sample sizes.

    Replication ``rep`` at size ``n`` draws from its own generator seeded by
    ``(config.seed, n, rep)``, so results do not depend on ``threads``.
    """
    jobs = [(n, rep) for n in n_values for rep in range(n_reps)]
    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(threads) as pool:
            futs = [pool.submit(run_replication, config, n, rep, alpha) for n, rep in jobs]
            records = [f.result() for f in futs]
    else:
        records = []
        for n, rep in jobs:
            records.append(run_replication(config, n, rep, alpha))
            if progress is not None:
                progress(n, rep)
    truth = tuple(sorted(i - 1 for i in config.truth))
    return ReplicationResult(truth, all_subsets(config.p), records,
                             {"sem": config.to_dict(), "n_values": list(n_values),
                              "reps": n_reps, "alpha": alpha})
