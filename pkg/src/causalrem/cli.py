"""Command-line interface: simulate, pairs, fit, discover, riskgrid, replicate."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io
from .basis import LINEAR, delta_matrix, fit_bases, penalty_matrix
from .core import CausalREMError, SubsetModel
from .discovery import discover, replicate_study, risk_grid
from .dispersion import dispersion_test
from .glmfit import fit, fit_auto
from .sampler import sample_pairs
from .simengine import PRESETS, Noise, simulate

log = logging.getLogger("causalrem")


class UsageError(CausalREMError):
    pass


def _preset_config(args, n):
    cfg = PRESETS[args.preset](seed=args.seed, n_events=n, v=args.v)
    if args.flip_prob is not None:
        cfg = cfg.with_(flip_probs=(args.flip_prob,) * len(cfg.flip_probs))
    if args.child_noise is not None:
        noise = list(cfg.noise)
        children = (1,) if cfg.structure == "two-cov" else (4, 5, 6)
        for j in children:
            noise[j] = Noise("normal", args.child_noise)
        cfg = cfg.with_(noise=tuple(noise))
    return cfg


def _specs(args, p, names=None):
    if not getattr(args, "basis", None):
        return [LINEAR] * p, list(names or [f"x{j + 1}" for j in range(p)])
    specs = io.read_basis_specs(args.basis)
    if len(specs) != p:
        raise UsageError(f"basis file lists {len(specs)} covariates, pairs have {p}")
    labels = [s.name or (names[j] if names else f"x{j + 1}") for j, s in enumerate(specs)]
    return specs, labels


def _parse_subset(text: str, names) -> tuple[int, ...]:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if tok.isdigit():
            k = int(tok)
            if not 1 <= k <= len(names):
                raise UsageError(f"covariate index {k} outside 1..{len(names)}")
            out.append(k - 1)
        elif tok in names:
            out.append(list(names).index(tok))
        else:
            raise UsageError(f"unknown covariate {tok!r}; known: {', '.join(names)}")
    if not out:
        raise UsageError("empty subset")
    return tuple(sorted(set(out)))


def _parse_range(text: str) -> np.ndarray:
    try:
        lo, hi, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise UsageError(f"range must be lo:hi:step, got {text!r}") from None
    if step <= 0 or hi < lo:
        raise UsageError("range needs lo <= hi and a positive step")
    k = int(np.floor((hi - lo) / step + 1e-9))
    return np.round(lo + step * np.arange(k + 1), 12)


def _resolved(args) -> dict:
    skip = {"func", "command"}
    return {"command": args.command, "version": __version__,
            **{k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k not in skip}}


# -- subcommands --------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _preset_config(args, args.n)
    sim = simulate(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_events(out / "events.csv", sim.stream)
    io.write_panel(out / "panel.csv", sim)
    io.write_json(out / "truth.json", {"parents": sorted(sim.truth)})
    io.write_json(out / "config.json", {"cli": _resolved(args), "sem": cfg.to_dict()})
    print(f"wrote {len(sim.stream)} events to {out}")
    return 0


def cmd_pairs(args) -> int:
    stream = io.read_events(args.events)
    panel, stream = io.read_panel(args.panel, stream)
    policy = io.read_policy(args.policy, stream)
    pairs = sample_pairs(stream, panel, policy, seed=args.seed)
    io.write_pairs(args.out, pairs)
    io.write_json(io.sidecar(args.out), {"cli": _resolved(args), "names": list(panel.names)})
    print(f"wrote {len(pairs)} pairs to {args.out}")
    return 0


def cmd_fit(args) -> int:
    pairs = io.read_pairs(args.pairs)
    specs, names = _specs(args, pairs.p)
    subset = _parse_subset(args.subset, names)
    bases = fit_bases(pairs, specs)
    model = SubsetModel(subset, tuple(bases[j] for j in subset))
    X = delta_matrix(pairs, model)
    P = penalty_matrix(model)
    res = fit_auto(X, P) if args.lam == "auto" else fit(X, P, float(args.lam))
    verdict = dispersion_test(res, len(X), args.alpha)
    print(f"subset {model.label} ({', '.join(names[j] for j in subset)}): status={res.status}")
    print("beta = [" + ", ".join(f"{b:.6f}" for b in res.beta) + "]")
    print("se   = [" + ", ".join(f"{s:.6f}" for s in res.se) + "]")
    print(f"loglik={res.loglik:.6f} edf={res.edf:.4f} bic={res.bic:.4f} "
          f"R/n={res.pearson_risk / res.n:.6f} accepted={verdict.accepted}")
    if args.out:
        io.write_json(args.out, {"config": _resolved(args), "subset": [j + 1 for j in subset],
                                 "names": [names[j] for j in subset], "fit": res.to_dict(),
                                 "dispersion": verdict.to_dict()})
    return 0 if res.converged else 1


def cmd_discover(args) -> int:
    pairs = io.read_pairs(args.pairs)
    specs, names = _specs(args, pairs.p)
    pairs = pairs.with_columns(pairs.x_case, pairs.x_control, names)
    report = discover(pairs, specs, alpha=args.alpha, max_size=args.max_size,
                      threads=args.threads, config=_resolved(args))
    if args.report:
        io.write_json(args.report, report.to_dict())
    if args.rankings:
        io.write_rows(args.rankings, report.rankings_rows(), ["subset", "bic", "risk", "df", "accepted"])
        io.write_json(io.sidecar(args.rankings), {"cli": _resolved(args)})
    sel = report.selected
    if sel is None:
        print("no subset passed the dispersion test", file=sys.stderr)
        return 1
    print("selected: " + ", ".join(f"{j + 1}:{names[j]}" for j in sel))
    return 0


def cmd_riskgrid(args) -> int:
    pairs = io.read_pairs(args.pairs)
    p = pairs.p
    for k in (args.i, args.j):
        if not 1 <= k <= p:
            raise UsageError(f"covariate index {k} outside 1..{p}")
    if args.i == args.j:
        raise UsageError("--i and --j must differ")
    grid = _parse_range(args.range)
    res = risk_grid(pairs, args.i - 1, args.j - 1, grid)
    rows = ({"beta_i": a, "beta_j": b, "risk_over_n": r} for a, b, r in res.rows())
    io.write_rows(args.out, rows, ["beta_i", "beta_j", "risk_over_n"])
    io.write_json(io.sidecar(args.out), {"cli": _resolved(args), "mle": res.mle})
    for key, pt in res.mle.items():
        print(f"MLE {key}: beta=({pt['beta'][0]:.4f}, {pt['beta'][1]:.4f}) R/n={pt['risk_over_n']:.4f}")
    return 0


def cmd_replicate(args) -> int:
    try:
        n_list = [int(x) for x in args.n_list.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad --n-list {args.n_list!r}") from None
    cfg = _preset_config(args, max(n_list))

    def progress(n, rep):
        log.info("n=%d rep=%d done", n, rep)

    res = replicate_study(cfg, n_list, args.reps, alpha=args.alpha, threads=args.threads,
                          progress=progress)
    io.write_rows(args.out, res.recovery_table(), ["n", "reps", "recovered", "recovery", "truth_accepted"])
    meta = {"cli": _resolved(args), **res.config}
    io.write_json(io.sidecar(args.out), meta)
    if args.summary:
        rows = [row for n in res.n_values for row in res.model_summary(n)]
        io.write_rows(args.summary, rows, list(rows[0].keys()))
        io.write_json(io.sidecar(args.summary), meta)
    for row in res.recovery_table():
        print(f"n={row['n']}: recovered {row['recovered']}/{row['reps']} ({row['recovery']:.0%})")
    return 0


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="causalrem", description=__doc__, allow_abbrev=False)
    ap.add_argument("--version", action="version", version=f"causalrem {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def preset_args(p):
        p.add_argument("--preset", choices=sorted(PRESETS), default="seven-cov")
        p.add_argument("--v", type=int, default=10, help="number of vertices")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--flip-prob", type=float, default=None,
                       help="override the child flip-mask rate")
        p.add_argument("--child-noise", type=float, default=None,
                       help="override the sd of the Gaussian child noise")

    p = sub.add_parser("simulate", help="simulate events from a SEM preset")
    preset_args(p)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pairs", help="nested case-control sampling")
    p.add_argument("--events", required=True)
    p.add_argument("--panel", required=True)
    p.add_argument("--policy", default="all-dyads",
                   help="all-dyads, all-dyads-no-self, or a JSON file of explicit windows")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("fit", help="fit one covariate subset")
    p.add_argument("--pairs", required=True)
    p.add_argument("--subset", required=True, help="comma-separated 1-based indices or names")
    p.add_argument("--basis")
    p.add_argument("--lambda", dest="lam", default="auto")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("discover", help="exhaustive causal subset search")
    p.add_argument("--pairs", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--basis")
    p.add_argument("--max-size", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--report")
    p.add_argument("--rankings")
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("riskgrid", help="Pearson risk over a grid of two coefficients")
    p.add_argument("--pairs", required=True)
    p.add_argument("--i", type=int, required=True)
    p.add_argument("--j", type=int, required=True)
    p.add_argument("--range", default="-2:2:0.05")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_riskgrid)

    p = sub.add_parser("replicate", help="recovery rate across replications")
    preset_args(p)
    p.add_argument("--n-list", default="10000")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--summary", help="per-model BIC / risk quartiles CSV")
    p.set_defaults(func=cmd_replicate)
    return ap


def _join_dash_values(argv):
    # let "--range -2:2:0.05" through; argparse reads "-2:2:0.05" as an option
    out, it = [], iter(argv)
    for tok in it:
        if tok == "--range":
            nxt = next(it, None)
            out.append(tok if nxt is None else f"--range={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = _join_dash_values(sys.argv[1:] if argv is None else list(argv))
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"causalrem: error: {exc}", file=sys.stderr)
        return 2
    except (CausalREMError, ValueError, OSError) as exc:
        print(f"causalrem: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
