"""Command-line entry point: ``levy-ou <subcommand> --config PATH``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ScenarioConfig, parse_config
from .errors import ConstantsUnavailable, InfiniteRho, LevyOUError
from .inequalities import (ConstantsSpec, estimate_propagation_check, gamma, gradient_estimate_check,
                           harnack_check, jump_estimate_check, poincare_check, poincare_integrated, positive_kfunction,
                           random_real_kfunction)
from .measures import check_invariance, esm_char_fn, limit_triple, uniqueness_iteration
from .semigroup import (ExpTerm, KFunction, SpaceTimeMeasure, ergodic_average, generator_fd_check,
                        generator_L, modulation_defect, weak_limit_defect)
from .solution import char_fn, simulate_paths

SUBCOMMANDS = ("simulate", "charfn", "esm", "generator", "gamma", "poincare", "harnack", "ergodic")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_SEMANTIC = 0, 1, 2, 3


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


class Context:
    def __init__(self, cfg: ScenarioConfig, out_dir, workers=1, tol_scale=1.0):
        self.cfg = cfg
        self.out = Path(out_dir)
        self.workers = workers
        self.tol_scale = tol_scale
        self._scenario = None
        self._stm = None

    @property
    def sc(self):
        if self._scenario is None:
            self._scenario = self.cfg.scenario()
        return self._scenario

    @property
    def space_time(self):
        if self._stm is None:
            self._stm = SpaceTimeMeasure.build(self.sc)
        return self._stm

    def rng(self, stream):
        return np.random.default_rng(np.random.SeedSequence(self.cfg.master_seed, spawn_key=(100 + stream,)))

    def test_functions(self, n=5):
        rng = self.rng(0)
        d, T = self.sc.dim, self.sc.period
        return [random_real_kfunction(rng, d, T) for _ in range(n)]

    def probes(self, n=32, stream=1):
        rng = self.rng(stream)
        return rng.uniform(0, self.sc.period, n), rng.normal(size=(n, self.sc.dim))

    def constants(self):
        return self.cfg.constants() or ConstantsSpec.estimated(self.sc)


def check(name, value, threshold, passed):
    return {"name": name, "value": float(value), "threshold": float(threshold), "passed": bool(passed)}


def below(ctx, name, value, tol):
    tol = tol * ctx.tol_scale
    return check(name, value, tol, value <= tol)


def above(ctx, name, value, floor):
    floor = floor * ctx.tol_scale
    return check(name, value, floor, value >= floor)


def _unit(d):
    e = np.zeros(d)
    e[0] = 1.0
    return e


def cmd_simulate(ctx):
    sc, cfg = ctx.sc, ctx.cfg
    x = np.zeros(sc.dim)
    ens = simulate_paths(sc, 0.0, sc.period, x, cfg.dt, cfg.n_paths, workers=ctx.workers)
    ens.to_csv(ctx.out / "ensemble.csv")
    finite = bool(np.all(np.isfinite(ens.terminal)))
    return {"summary": ens.summary(), "checks": [check("simulate.finite", float(finite), 1.0, finite)]}


def cmd_charfn(ctx):
    sc, cfg = ctx.sc, ctx.cfg
    d, T = sc.dim, sc.period
    e = _unit(d)
    H = np.concatenate([np.outer(0.25 * np.arange(1, 9), e), np.full((1, d), 0.3), np.full((1, d), 0.6), -np.full((1, d), 0.75)])
    x = np.full(d, 0.5)
    ens = simulate_paths(sc, 0.0, T, x, cfg.dt, cfg.n_paths, workers=ctx.workers, stream=2)
    exact = char_fn(sc, 0.0, T, x, H)
    emp, se = ens.empirical_char_fn(H)
    rows, checks = [], []
    for k, (h, a, b, s) in enumerate(zip(H, exact, emp, se)):
        err = abs(a - b)
        rows.append([*h, a.real, a.imag, b.real, b.imag, s])
        checks.append(below(ctx, f"charfn.mc[{k}]", err / max(s, 1e-300), 3.0))
    checks.append(below(ctx, "charfn.modulus", float(np.max(np.abs(exact))) - 1.0, 1e-12))
    with open(ctx.out / "charfn.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"h{i}" for i in range(d)] + ["exact_re", "exact_im", "mc_re", "mc_im", "mc_se"])
        w.writerows([[repr(float(v)) for v in r] for r in rows])
    return {"checks": checks}


def cmd_esm(ctx):
    sc = ctx.sc
    T = sc.period
    H = ctx.rng(2).normal(size=(10, sc.dim))
    law = limit_triple(sc, 0.0)
    (ctx.out / "esm_law.json").write_text(json.dumps(_jsonable(law.to_dict()), sort_keys=True, indent=2) + "\n")
    nu0 = esm_char_fn(sc, 0.0, H)
    period_defect = float(np.max(np.abs(esm_char_fn(sc, T, H) - nu0)))
    inv = check_invariance(sc, 0.1 * T, 0.8 * T, H)
    uniq = max(abs(uniqueness_iteration(sc, 0.0, h)["value"] - v) for h, v in zip(H, nu0))
    triple = float(np.max(np.abs(law.char_fn(H) - nu0)))
    return {"law_metadata": law.metadata, "invariance": inv, "checks": [
        below(ctx, "esm.periodicity", period_defect, 1e-8),
        below(ctx, "esm.invariance", inv["max_defect"], 1e-7),
        below(ctx, "esm.uniqueness", uniq, 1e-8),
        below(ctx, "esm.triple_consistency", triple, 1e-8),
    ]}


def cmd_generator(ctx):
    sc = ctx.sc
    tp, xp = ctx.probes(8)
    rows, checks = [], []
    stm = ctx.space_time
    for j, u in enumerate(ctx.test_functions()):
        rep = generator_fd_check(sc, u, [1e-3, 5e-4], tp, xp)
        rows.append([j, *rep["errors"], rep["ratios"][0]])
        r = rep["ratios"][0]
        checks.append(check(f"generator.fd_ratio[{j}]", r, 2.0, 1.7 <= r <= 2.3))
        checks.append(below(ctx, f"generator.mean_zero[{j}]", abs(stm.integrate_L(u)), 1e-6))
        checks.append(below(ctx, f"generator.modulation[{j}]", modulation_defect(sc, u, 1, tp, xp), 1e-10))
    one = KFunction.constant(1.0, sc.dim, sc.period)
    l1 = float(np.max(np.abs(generator_L(sc, one)(tp, xp))))
    checks.append(check("generator.L_of_one", l1, 0.0, l1 == 0.0))
    with open(ctx.out / "generator.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["function", "err_tau_1e-3", "err_tau_5e-4", "ratio"])
        w.writerows([[r[0]] + [repr(float(v)) for v in r[1:]] for r in rows])
    return {"checks": checks}


def cmd_gamma(ctx):
    sc = ctx.sc
    tp, xp = ctx.probes(32)
    checks = []
    for j, u in enumerate(ctx.test_functions()):
        G = gamma(sc, u)(tp, xp)
        Lu = generator_L(sc, u)(tp, xp)
        Lu2 = generator_L(sc, u * u)(tp, xp)
        defect = float(np.max(np.abs(G - (Lu2 - 2 * u(tp, xp) * Lu))))
        checks.append(below(ctx, f"gamma.defect[{j}]", defect, 1e-8))
        checks.append(above(ctx, f"gamma.nonnegative[{j}]", float(G.min()), -1e-12))
    return {"checks": checks}


def cmd_poincare(ctx):
    sc = ctx.sc
    cons = ctx.constants()
    tp, xp = ctx.probes(16)
    cos1 = KFunction([ExpTerm.constant(1.0, _unit(sc.dim), sc.period)], sc.dim, "re")
    funcs = [cos1] + ctx.test_functions(2)
    checks, reports = [], []
    for tau in (0.5, 1.0, 2.0):
        for j, u in enumerate(funcs):
            rep = poincare_check(sc, u, tau, tp, xp, cons)
            reports.append({"tau": tau, "function": j, "min_slack": rep["min_slack"], "C_tau": rep["C_tau"]})
            checks.append(above(ctx, f"poincare.pointwise[tau={tau},u={j}]", rep["min_slack"], -1e-8))
    for j, u in enumerate(funcs):
        integ = poincare_integrated(sc, u, cons, ctx.space_time)
        reports.append({"function": j, "integrated": integ})
        checks.append(above(ctx, f"poincare.integrated[u={j}]", integ["slack"], -1e-8))
    tau = 1.0
    for j, u in enumerate(funcs):
        if np.any(sc.noise.covariance):
            rep = gradient_estimate_check(sc, u, tau, tp[:4], xp[:4], cons)
            checks.append(above(ctx, f"estimate.gradient[u={j}]", rep["min_slack"], -1e-8))
        if sc.noise.has_jumps:
            rep = jump_estimate_check(sc, u, tau, tp[:4], xp[:4], cons)
            checks.append(above(ctx, f"estimate.jump[u={j}]", rep["min_slack"], -1e-8))
        rep = estimate_propagation_check(sc, u, tau, tp[:4], xp[:4], cons)
        checks.append(above(ctx, f"estimate.gamma[u={j}]", rep["min_slack"], -1e-8))
    return {"constants": cons.to_dict(), "reports": reports, "checks": checks}


def cmd_harnack(ctx):
    sc = ctx.sc
    cons = ctx.constants()
    d, T = sc.dim, sc.period
    tau = 0.5 * np.log(2.0)
    x = np.zeros(d)
    y = _unit(d)
    v = KFunction([ExpTerm.constant(1.0, _unit(d), T)], d, "re")
    checks, reports = [], []
    try:
        rep = harnack_check(sc, positive_kfunction(v, 1e-3, T), tau, 0.0, x, y, cons)
    except InfiniteRho as exc:
        return {"vacuous": str(exc), "checks": []}
    reports.append(rep)
    checks.append(above(ctx, "harnack.cos_squared", rep["slack"], -1e-8))
    rng = ctx.rng(3)
    worst = np.inf
    for _ in range(50):
        u = positive_kfunction(random_real_kfunction(rng, d, T, n_terms=1), 1e-3, T)
        t0 = rng.uniform(0, T)
        worst = min(worst, harnack_check(sc, u, tau, t0, x, y, cons)["slack"])
    checks.append(above(ctx, "harnack.random_positive", worst, -1e-6))
    return {"reports": reports, "checks": checks}


def cmd_ergodic(ctx):
    sc = ctx.sc
    d = sc.dim
    h = _unit(d)
    x = np.full(d, 0.5)
    tau_max = max(50.0 * sc.period, 10.0 / sc.omega)
    rep = ergodic_average(sc, h, 0.0, x, tau_max)
    with open(ctx.out / "ergodic.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "average_re", "average_im"])
        for t, a in zip(rep["tau"], rep["average"]):
            w.writerow([repr(float(t)), repr(float(a.real)), repr(float(a.imag))])
    gap = abs(rep["average"][-1] - rep["target"])
    weak, n = weak_limit_defect(sc, h, 0.0, x)
    return {"target": rep["target"], "tail_periods": rep["tail_periods"], "weak_limit_periods": n,
            "checks": [below(ctx, "ergodic.cesaro", gap, 2e-2), below(ctx, "ergodic.weak_limit", weak, 1e-6)]}


COMMANDS = {name: globals()[f"cmd_{name}"] for name in SUBCOMMANDS}


def _write_report(ctx, name, body):
    body = dict(body)
    body["meta"] = {"config_sha256": ctx.cfg.sha256(), "tolerances": ctx.cfg.tolerances,
                    "version": f"levy_ou {__version__}", "subcommand": name,
                    "master_seed": ctx.cfg.master_seed, "workers": ctx.workers, "tol_scale": ctx.tol_scale}
    text = json.dumps(_jsonable(body), sort_keys=True, indent=2) + "\n"
    (ctx.out / f"{name}.json").write_text(text)


def run_scenario(cfg: ScenarioConfig, subcommand, out_dir=None, workers=1, tol_scale=1.0):
    """Run one subcommand (or ``all``); returns ``(exit_code, first_failing_check_or_None)``."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx = Context(cfg, out, workers, tol_scale)
    names = SUBCOMMANDS if subcommand == "all" else (subcommand,)
    summary = []
    first_fail = None
    for name in names:
        body = COMMANDS[name](ctx)
        _write_report(ctx, name, body)
        for c in body["checks"]:
            summary.append(c)
            if not c["passed"] and first_fail is None:
                first_fail = c["name"]
    if subcommand == "all":
        _write_report(ctx, "all", {"checks": summary, "passed": first_fail is None})
    return (EXIT_OK if first_fail is None else EXIT_CHECK_FAILED), first_fail


def build_parser():
    p = argparse.ArgumentParser(prog="levy-ou", description=__doc__)
    p.add_argument("subcommand", choices=SUBCOMMANDS + ("all",))
    p.add_argument("--config", required=True, help="scenario TOML file")
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--workers", type=int, default=1, help="simulation worker count")
    p.add_argument("--out", default=None, help="output directory (default: scenario.output_dir)")
    p.add_argument("--tol-scale", type=float, default=1.0, help="multiply every check threshold")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed", "must be nonnegative")
            cfg = cfg.with_seed(args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code, failed = run_scenario(cfg, args.subcommand, args.out, args.workers, args.tol_scale)
    except ConstantsUnavailable as exc:
        print(f"ConstantsUnavailable: {exc}", file=sys.stderr)
        return EXIT_SEMANTIC
    except (LevyOUError, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SEMANTIC
    if failed is not None:
        print(f"check failed: {failed}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
