"""Command-line entry point: config parsing, dispatch and CSV emitters.

Exit codes: 0 success, 1 flagged check violations (suppressed by
--warn-only), 2 invalid configuration, 3 capability or resource errors.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from importlib import resources

import numpy as np
from jsonschema import Draft202012Validator

from . import correction, hedging, oracle
from .bermudan import PricingJob, price_bermudan
from .cubature import gauss_1d_degree5, product_rule, verify_exactness, victoir_degree5
from .errors import CapabilityError, IterationError, PreconditionError, ResourceError
from .lattice import DEFAULT_NODE_BUDGET
from .model import BlackScholes, MertonJump1D, PayoffKind, PayoffSpec
from .perpetual import (Grid, averaging_operator, grid_margin, iterate_D, iterate_K_1d,
                        polyfix_H)

THREADS_ENV = "BERMCUB_THREADS"
EXIT_OK, EXIT_FLAGGED, EXIT_CONFIG, EXIT_RESOURCE = 0, 1, 2, 3

COMMANDS = ("cubature_check", "price_bermudan", "price_american", "perpetual",
            "correction_feller", "correction_exponent", "hedge_sim", "oracle_compare")


# ------------------------------------------------------------------ schema

_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_posint = {"type": "integer", "minimum": 1}
_prices = {"type": "array", "items": _pos, "minItems": 1}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


MODEL = _obj({
    "kind": {"enum": ["black_scholes", "merton"]},
    "rate": _pos,
    "sigma": {"oneOf": [_pos, {"type": "array", "items": _pos, "minItems": 1}]},
    "dim": _posint,
    "jump": {"type": "number"},
    "intensity": _nonneg,
}, ["rate", "sigma"])

PAYOFF = _obj({
    "kind": {"enum": [k.value for k in PayoffKind]},
    "strike": _nonneg,
    "weights": {"type": "array", "items": _nonneg},
}, ["kind", "strike"])

CUBATURE = _obj({
    "rule": {"enum": ["victoir", "product", "gauss1d"]},
    "dim": _posint,
    "max_degree": {"type": "integer", "minimum": 0, "maximum": 9},
    "tol": _pos,
})

ROW = _obj({
    "start_prices": _prices,
    "expected": {"type": "object", "additionalProperties": {"type": "number"}},
}, ["start_prices"])

PERPETUAL = _obj({
    "method": {"enum": ["d-operator", "harmonic1d", "polyfix"]},
    "mesh": _pos,
    "tol": _pos,
    "max_iter": _posint,
    "half_width": _pos,
    "step": _pos,
    "drift": {"type": "number"},
    "floor": {"type": "number"},
    "abscissas": _obj({"lo": {"type": "number"}, "hi": {"type": "number"}, "n": {"type": "integer", "minimum": 2}},
                      ["lo", "hi", "n"]),
    "degree": _posint,
    "seeds": {"type": "array", "items": {"type": "number"}, "minItems": 2},
}, ["method", "mesh"])

REGION = _obj({
    "kind": {"enum": [k.value for k in correction.RegionKind]},
    "slope": _pos,
    "anchor": {"type": "array", "items": {"type": "number"}},
})

CORRECTION = _obj({
    "meshes": {"type": "array", "items": _pos, "minItems": 1},
    "region": REGION,
    "strike": _pos,
    "eps": _pos,
    "slack": _nonneg,
}, ["meshes"])

HEDGE = _obj({
    "up": {"type": "array", "items": _pos, "minItems": 1},
    "down": {"type": "array", "items": _pos, "minItems": 1},
    "p": {"oneOf": [{"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                    {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0,
                                                "exclusiveMaximum": 1}}]},
    "bond_rate": {"type": "number", "minimum": 0},
    "steps": _posint,
    "paths": _posint,
    "start_prices": _prices,
    "strategies": {"type": "array", "items": {"enum": list(hedging.STRATEGIES)}, "minItems": 1},
    "subset_size": _posint,
    "cycle_subsets": {"type": "boolean"},
}, ["up", "down", "p", "steps", "paths", "start_prices"])

ORACLE = _obj({
    "checks": {"type": "array", "items": {"enum": ["tree", "first_passage"]}, "minItems": 1},
    "mesh": _pos,
    "paths": _posint,
})

BUDGETS = _obj({"nodes": _posint, "tree": _posint, "paths": _posint})
CHECKS = _obj({"rel_tol": _nonneg, "abs_tol": _nonneg, "warn_only": {"type": "boolean"}})

SCHEMA = _obj({
    "command": {"enum": list(COMMANDS)},
    "description": {"type": "string"},
    "model": MODEL,
    "payoff": PAYOFF,
    "cubature": CUBATURE,
    "maturity": _pos,
    "steps": _posint,
    "ladder": {"type": "array", "items": _posint, "minItems": 2},
    "alphas": {"type": "array", "items": _pos, "minItems": 1},
    "rows": {"type": "array", "items": ROW},
    "start_prices": _prices,
    "perpetual": PERPETUAL,
    "correction": CORRECTION,
    "hedge": HEDGE,
    "oracle": ORACLE,
    "seed": {"type": "integer", "minimum": 0},
    "output": {"type": "string"},
    "timing": {"type": "boolean"},
    "budgets": BUDGETS,
    "checks": CHECKS,
})

REQUIRED = {
    "cubature_check": [],
    "price_bermudan": ["model", "payoff", "maturity", "steps", "rows"],
    "price_american": ["model", "payoff", "maturity", "rows"],
    "perpetual": ["model", "payoff", "perpetual"],
    "correction_feller": ["model", "correction"],
    "correction_exponent": ["model", "correction"],
    "hedge_sim": ["payoff", "hedge"],
    "oracle_compare": ["model", "oracle"],
}


class ConfigError(ValueError):
    """All schema violations of one config, each as (dotted path, message)."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{p or '<root>'}: {m}" for p, m in self.errors))


def _dotted(parts) -> str:
    return ".".join(str(p) for p in parts)


def _schema_errors(cfg, schema):
    out = []
    for err in Draft202012Validator(schema).iter_errors(cfg):
        base = list(err.absolute_path)
        if err.validator == "additionalProperties" and isinstance(err.instance, dict):
            known = set(err.schema.get("properties", {}))
            for key in sorted(set(err.instance) - known):
                out.append((_dotted(base + [key]), "unknown key"))
        elif err.validator == "required" and isinstance(err.instance, dict):
            for key in err.validator_value:
                if key not in err.instance:
                    out.append((_dotted(base + [key]), "required key missing"))
        else:
            out.append((_dotted(base), err.message))
    return sorted(set(out))


@dataclass
class RunConfig:
    command: str
    raw: dict
    seed: int = 0
    timing: bool = False
    warn_only: bool = False
    rel_tol: float = 1e-3
    abs_tol: float = 1e-6
    budgets: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.raw[key]

    def get(self, key, default=None):
        return self.raw.get(key, default)


def parse_config(text: str, command: str | None = None) -> RunConfig:
    """Parse and validate a JSON run config; every violation is reported at once."""
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([("", f"invalid JSON: {exc}")]) from None
    if not isinstance(cfg, dict):
        raise ConfigError([("", "config must be an object")])
    cmd = command or cfg.get("command")
    errors = []
    if cmd is None:
        errors.append(("command", "required key missing"))
    elif cmd not in COMMANDS:
        errors.append(("command", f"unknown command {cmd!r}"))
    elif "command" in cfg and cfg["command"] != cmd:
        errors.append(("command", f"config is for {cfg['command']!r}, run as {cmd!r}"))
    schema = copy.deepcopy(SCHEMA)
    if cmd in REQUIRED:
        schema["required"] = REQUIRED[cmd]
    errors += _schema_errors(cfg, schema)
    if not errors:
        errors += _semantic_errors(cmd, cfg)
    if errors:
        raise ConfigError(errors)
    checks = cfg.get("checks", {})
    return RunConfig(cmd, cfg, seed=cfg.get("seed", 0), timing=cfg.get("timing", False),
                     warn_only=checks.get("warn_only", False),
                     rel_tol=checks.get("rel_tol", 1e-3), abs_tol=checks.get("abs_tol", 1e-6),
                     budgets=cfg.get("budgets", {}))


def _semantic_errors(cmd, cfg):
    errs = []
    m = cfg.get("model")
    if m is not None:
        if m.get("kind", "black_scholes") == "merton":
            for key in ("jump", "intensity"):
                if key not in m:
                    errs.append((f"model.{key}", "required for the jump model"))
            if isinstance(m["sigma"], list) and len(m["sigma"]) != 1:
                errs.append(("model.sigma", "jump model is one-dimensional"))
        else:
            for key in ("jump", "intensity"):
                if key in m:
                    errs.append((f"model.{key}", "only valid for the jump model"))
            dims = {len(r["start_prices"]) for r in cfg.get("rows", [])}
            if "start_prices" in cfg:
                dims.add(len(cfg["start_prices"]))
            d = len(m["sigma"]) if isinstance(m["sigma"], list) else m.get("dim", None)
            if d is None and len(dims) == 1:
                d = dims.pop()
                dims = {d}
            if d is None:
                d = 1
            if any(k != d for k in dims):
                errs.append(("rows", f"start prices must have {d} entries"))
    if "ladder" in cfg and len(set(cfg["ladder"])) != len(cfg["ladder"]):
        errs.append(("ladder", "step counts must be distinct"))
    if cmd == "hedge_sim":
        h = cfg["hedge"]
        d = len(h["up"])
        if len(h["down"]) != d or len(h["start_prices"]) != d:
            errs.append(("hedge", "up, down and start_prices need one entry per asset"))
        if isinstance(h["p"], list) and len(h["p"]) != d:
            errs.append(("hedge.p", f"need {d} probabilities"))
        if h.get("subset_size", 1) > d:
            errs.append(("hedge.subset_size", f"at most {d}"))
    if cmd == "correction_exponent" and len(cfg["correction"]["meshes"]) < 4:
        errs.append(("correction.meshes", "need at least four meshes"))
    return errs


def load_config(path: str | None, scenario: str | None, command: str) -> RunConfig:
    if scenario:
        text = scenario_text(scenario)
    elif path:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    elif command == "cubature_check":
        text = "{}"
    elif command is None:
        raise ConfigError([("", "a --config file or --scenario is required")])
    else:
        raise ConfigError([("", "a --config file or --scenario is required")])
    return parse_config(text, command)


def scenario_names() -> list:
    root = resources.files("bermcub") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def scenario_text(name: str) -> str:
    name = name[:-5] if name.endswith(".json") else name
    if name not in scenario_names():
        raise ConfigError([("scenario", f"unknown scenario {name!r}")])
    return (resources.files("bermcub") / "scenarios" / f"{name}.json").read_text(encoding="utf-8")


# ---------------------------------------------------------------- builders

def build_model(cfg):
    m = cfg["model"]
    sigma = m["sigma"]
    if m.get("kind", "black_scholes") == "merton":
        s = sigma[0] if isinstance(sigma, list) else sigma
        return MertonJump1D(m["rate"], s, m["jump"], m["intensity"])
    if not isinstance(sigma, list):
        d = m.get("dim")
        if d is None:
            rows = cfg.get("rows") or [{"start_prices": cfg.get("start_prices", [1.0])}]
            d = len(rows[0]["start_prices"])
        sigma = [sigma] * d
    return BlackScholes(m["rate"], tuple(sigma))


def build_payoff(cfg, d):
    p = cfg["payoff"]
    kind = PayoffKind(p["kind"])
    w = p.get("weights")
    if kind in (PayoffKind.PUT_ON_AVG, PayoffKind.CALL_ON_AVG) and w is None:
        return PayoffSpec.equal_average(kind, p["strike"], d)
    return PayoffSpec(kind, p["strike"], tuple(w) if w is not None else None)


def build_formula(cfg, d):
    c = cfg.get("cubature", {})
    rule = c.get("rule", "victoir")
    if rule == "gauss1d":
        if d != 1:
            raise CapabilityError("the one-dimensional rule needs d = 1")
        return gauss_1d_degree5()
    if rule == "product":
        return product_rule(gauss_1d_degree5(), d)
    return gauss_1d_degree5() if d == 1 else victoir_degree5(d)


# -------------------------------------------------------------- formatting

def fmt_sig(x, digits: int = 6) -> str:
    """Fixed significant digits, round-half-even on the exact binary value."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    d = Decimal(x)
    if d == 0:
        return "0." + "0" * (digits - 1)
    exp = d.adjusted()
    r = d.quantize(Decimal(1).scaleb(exp - digits + 1), rounding=ROUND_HALF_EVEN)
    if r.adjusted() > exp:
        r = d.quantize(Decimal(1).scaleb(exp - digits + 2), rounding=ROUND_HALF_EVEN)
    if -5 <= r.adjusted() < digits:
        return format(r, "f")
    return format(r, f".{digits - 1}e")


def fmt_prices(prices) -> str:
    return "(" + ",".join(format(float(p), "g") for p in prices) + ")"


def fmt_time(seconds, timing: bool) -> str:
    return f"{seconds:.2f}" if timing else "-"


TABLE_COLUMNS = ("start_prices", "bermudan_h3", "extrap_alpha_1.0", "extrap_alpha_0.5", "time_s")


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def emit_table(results, columns=TABLE_COLUMNS) -> str:
    """CSV of result rows (dicts keyed by column); numbers get 6 significant digits."""
    rows = []
    for res in results:
        row = []
        for col in columns:
            v = res.get(col, "")
            row.append(fmt_sig(v) if isinstance(v, (float, int, np.floating)) and not isinstance(v, bool) else v)
        rows.append(row)
    return _csv(columns, rows)


def american_columns(ladder, alphas) -> tuple:
    return (("start_prices", f"bermudan_h{max(ladder)}")
            + tuple(f"extrap_alpha_{float(a)}" for a in alphas) + ("time_s",))


# ----------------------------------------------------------------- running

@dataclass
class Outcome:
    csv: str
    flags: list = field(default_factory=list)
    diagnostics: str | None = None


def _check(flags, label, value, expected, cfg: RunConfig):
    if abs(value - expected) > max(cfg.abs_tol, cfg.rel_tol * abs(expected)):
        flags.append(f"{label}: got {fmt_sig(value)}, expected {fmt_sig(expected)}")


def run_cubature_check(cfg: RunConfig) -> Outcome:
    c = cfg.get("cubature", {})
    d = c.get("dim", 7)
    f = build_formula({"cubature": c}, d)
    tol = c.get("tol", 1e-10)
    rep = verify_exactness(f, c.get("max_degree", 5))
    rows = []
    for alpha, err in sorted(rep.errors.items(), key=lambda kv: (sum(kv[0]), kv[0])):
        rows.append([f.name, d, f.size, " ".join(map(str, alpha)), f"{err:.1e}"])
    flags = [] if rep.max_error <= tol else [f"max exactness error {rep.max_error:.3e} above {tol}"]
    return Outcome(_csv(("rule", "dim", "points", "monomial", "abs_error"), rows), flags)


def _rows(cfg):
    return cfg.get("rows") or [{"start_prices": cfg["start_prices"]}]


def _jobs(cfg):
    model = build_model(cfg.raw)
    payoff = build_payoff(cfg.raw, model.dim)
    formula = build_formula(cfg.raw, model.dim)
    return model, payoff, formula


def run_price_bermudan(cfg: RunConfig) -> Outcome:
    model, payoff, formula = _jobs(cfg)
    N = cfg["steps"]
    col = f"bermudan_h{N}"
    budget = cfg.budgets.get("nodes", DEFAULT_NODE_BUDGET)
    results, flags, diag = [], [], []
    for i, row in enumerate(_rows(cfg)):
        job = PricingJob.from_prices(model, payoff, row["start_prices"], cfg["maturity"], N, formula)
        res = price_bermudan(job, budget)
        results.append({"start_prices": fmt_prices(row["start_prices"]), col: res.price,
                        "time_s": fmt_time(res.wall_time, cfg.timing)})
        diag += [[i, k, n] for k, n in enumerate(res.node_counts)]
        for key, exp in row.get("expected", {}).items():
            if key == col:
                _check(flags, f"row {i} {key}", res.price, exp, cfg)
    return Outcome(emit_table(results, ("start_prices", col, "time_s")), flags,
                   _csv(("row", "level", "nodes"), diag))


def run_price_american(cfg: RunConfig) -> Outcome:
    model, payoff, formula = _jobs(cfg)
    ladder = tuple(cfg.get("ladder", (1, 2, 3)))
    alphas = tuple(cfg.get("alphas", (1.0, 0.5)))
    cols = american_columns(ladder, alphas)
    results, flags = [], []
    for i, row in enumerate(_rows(cfg)):
        job = PricingJob.from_prices(model, payoff, row["start_prices"], cfg["maturity"],
                                     max(ladder), formula)
        est = correction.price_american(job, ladder, alphas)
        out = {"start_prices": fmt_prices(row["start_prices"]),
               cols[1]: est.prices[ladder.index(max(ladder))],
               "time_s": fmt_time(est.wall_time, cfg.timing)}
        for a, col in zip(alphas, cols[2:-1]):
            out[col] = est.extrapolated[a]
        results.append(out)
        for key, exp in row.get("expected", {}).items():
            if key in out and key not in ("start_prices", "time_s"):
                _check(flags, f"row {i} {key}", out[key], exp, cfg)
    return Outcome(emit_table(results, cols), flags)


def run_perpetual(cfg: RunConfig) -> Outcome:
    p = cfg["perpetual"]
    model = build_model(cfg.raw)
    payoff = build_payoff(cfg.raw, model.dim)
    h = p["mesh"]
    tol = p.get("tol", 1e-10)
    max_iter = p.get("max_iter", 200_000)
    c = math.exp(-model.rate * h)
    flags = []
    start = np.log(np.asarray(_rows(cfg)[0]["start_prices"], float)) if (
        cfg.get("rows") or cfg.get("start_prices")) else np.full(model.dim, math.log(max(payoff.strike, 1e-300)))
    method = p["method"]
    if method == "d-operator":
        formula = build_formula(cfg.raw, model.dim)
        half = p.get("half_width", 3.0)
        grid = Grid.around(start, half, p.get("step", 0.01))
        A = averaging_operator(grid, formula, model, h)
        g = payoff.evaluate(grid.nodes(), clip=False)
        res = iterate_D(g, c, A, grid, tol=tol, max_iter=max_iter)
        diffs, ratios = res.diffs, res.ratios
        if not res.monotone:
            flags.append("iterates are not nondecreasing")
        bad = np.flatnonzero(ratios > c + 1e-12)
        if len(bad):
            flags.append(f"contraction ratio above e^(-rh) at step {int(bad[0]) + 2}")
        summary = [("value_at_start", res.q(start[None, :])[0]), ("iterations", res.iterations),
                   ("residual", res.residual), ("margin", grid_margin(formula, model, h))]
    elif method == "harmonic1d":
        if model.dim != 1:
            raise CapabilityError("harmonic1d is one-dimensional")
        mu = p.get("drift", float(model.drift[0]))
        sigma = float(model.vol[0])
        ab = p.get("abscissas", {"lo": start[0] - 1.5, "hi": start[0] + 1.5, "n": 31})
        a = np.linspace(ab["lo"], ab["hi"], ab["n"])
        is_call = payoff.kind in (PayoffKind.VANILLA_CALL,)
        g = lambda x: payoff.evaluate(np.asarray(x)[:, None], clip=False)
        dom = (lambda x: np.exp(x)) if is_call else (lambda x: np.full_like(np.asarray(x, float), payoff.strike))
        floor = p.get("floor", -payoff.strike if is_call else float(np.min(g(a))))
        res = iterate_K_1d(g, floor, dom, a, mu, sigma, model.rate, h, tol=tol, max_iter=max_iter)
        diffs = res.diffs
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = diffs[1:] / diffs[:-1]
        if not res.monotone:
            flags.append("iterates are not nondecreasing")
        if not res.bounded:
            flags.append("iterates exceed the dominating function")
        summary = [("value_at_start", float(res.spline(start)[0])), ("iterations", len(diffs))]
    else:
        if model.dim != 1:
            raise CapabilityError("polyfix is one-dimensional")
        mu = p.get("drift", float(model.drift[0]))
        m = p.get("degree", 2)
        seeds = p.get("seeds", list(np.linspace(-1.0, 1.0, m + 1)))
        if len(seeds) != m + 1:
            raise ConfigError([("perpetual.seeds", f"need {m + 1} seeds for degree {m}")])
        g = lambda x: payoff.evaluate(np.asarray(x)[:, None], clip=False)
        res = polyfix_H(g, m, seeds, h, mu, model.rate, tol=min(tol, 1e-12), max_iter=max_iter)
        diffs = np.array(res.diffs)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = diffs[1:] / diffs[:-1]
        if not res.converged:
            flags.append("no stable exercise configuration found")
        summary = [("value_at_start", float(res.state(start)[0])), ("iterations", res.iterations),
                   ("residual", res.residual)]
    rows = [[n + 1, fmt_sig(d), fmt_sig(ratios[n - 1]) if n >= 1 else "-"] for n, d in enumerate(diffs)]
    diag = _csv(("key", "value"), [[k, fmt_sig(v) if isinstance(v, float) else v] for k, v in summary])
    return Outcome(_csv(("n", "sup_diff", "ratio"), rows), flags, diag)


def _region(cfg):
    r = cfg["correction"].get("region", {})
    return correction.RegionSpec(r.get("kind", "half_line"), r.get("slope"),
                                 tuple(r["anchor"]) if "anchor" in r else None)


def run_correction_feller(cfg: RunConfig) -> Outcome:
    c = cfg["correction"]
    model = build_model(cfg.raw)
    region = _region(cfg)
    rows = []
    for s in c["meshes"]:
        spec = correction.FellerSeriesSpec(model, s, region, c.get("strike", 1.0), c.get("eps", 1e-12))
        res = correction.feller_series(spec)
        rows.append([fmt_sig(s), fmt_sig(res.gap), res.n_terms, f"{res.tail_bound:.1e}"])
    return Outcome(_csv(("s", "gap", "terms", "tail_bound"), rows))


def run_correction_exponent(cfg: RunConfig) -> Outcome:
    c = cfg["correction"]
    model = build_model(cfg.raw)
    fit = correction.exponent_estimate(model, c["meshes"], c.get("strike", 1.0), c.get("slack", 0.05))
    status = "flag" if fit.flagged else ("pass" if fit.case != "none" else "no-bound")
    lo = "-" if math.isnan(fit.lower) else fmt_sig(fit.lower)
    hi = "-" if math.isnan(fit.upper) else fmt_sig(fit.upper)
    rows = [[fmt_sig(s), fmt_sig(g), fmt_sig(fit.slope), lo, hi, fit.case, status]
            for s, g in zip(fit.meshes, fit.gaps)]
    flags = [f"slope {fmt_sig(fit.slope)} outside [{lo}, {hi}]"] if fit.flagged else []
    return Outcome(_csv(("s", "gap", "slope", "window_lo", "window_hi", "case", "status"), rows), flags)


def run_hedge_sim(cfg: RunConfig) -> Outcome:
    h = cfg["hedge"]
    market = hedging.BinomialMarket.independent(h["up"], h["down"], h["p"], h.get("bond_rate", 0.0))
    payoff = build_payoff(cfg.raw, market.dim)
    S0 = np.asarray(h["start_prices"], float)
    pricer = hedging.european_pricer(market, lambda S: float(payoff.evaluate(np.log(S))), S0, h["steps"])
    reps = hedging.simulate_hedge(market, pricer, S0, h["steps"], h["paths"], cfg.seed,
                                  tuple(h.get("strategies", hedging.STRATEGIES)),
                                  h.get("subset_size", 1), h.get("cycle_subsets", False))
    rows = [[r.strategy, fmt_sig(r.l1), fmt_sig(r.l2), fmt_sig(r.linf), r.paths, r.steps, r.seed]
            for r in reps]
    flags = [f"{r.strategy}: linf below l2/sqrt(n)" for r in reps
             if r.linf < r.l2 / math.sqrt(r.paths * r.steps) * (1 - 1e-12)]
    return Outcome(_csv(("strategy", "l1", "l2", "linf", "paths", "steps", "seed"), rows), flags)


def run_oracle_compare(cfg: RunConfig) -> Outcome:
    o = cfg["oracle"]
    model = build_model(cfg.raw)
    rows, flags = [], []
    for check in o.get("checks", ["tree"]):
        if check == "tree":
            payoff = build_payoff(cfg.raw, model.dim)
            formula = build_formula(cfg.raw, model.dim)
            for i, row in enumerate(_rows(cfg)):
                job = PricingJob.from_prices(model, payoff, row["start_prices"], cfg["maturity"],
                                             cfg["steps"], formula)
                v = price_bermudan(job).price
                ref = oracle.naive_tree_price(job, cfg.budgets.get("tree", oracle.DEFAULT_TREE_BUDGET))
                rows.append([f"lattice[{i}]", fmt_sig(v), fmt_sig(ref), f"{abs(v - ref):.1e}"])
                if abs(v - ref) > 1e-9:
                    flags.append(f"lattice row {i} differs from the naive tree by {abs(v - ref):.3e}")
        else:
            s = o.get("mesh", 1.0)
            spec = correction.FellerSeriesSpec(model, s)
            ref = 1.0 - correction.feller_gap(spec)
            dp = correction.first_passage_lhs(spec, "dp")
            rows.append(["first_passage_dp", fmt_sig(dp.xi), fmt_sig(ref), f"{abs(dp.xi - ref):.1e}"])
            if abs(dp.xi - ref) > 1e-3:
                flags.append("grid first passage differs from the series by more than 1e-3")
            mc = correction.first_passage_lhs(spec, "mc", paths=o.get("paths", 5000), seed=cfg.seed)
            rows.append(["first_passage_mc", fmt_sig(mc.mean), fmt_sig(ref), f"{abs(mc.mean - ref):.1e}"])
            if abs(mc.mean - ref) > 3 * mc.se:
                flags.append("Monte Carlo first passage more than 3 se from the series")
    return Outcome(_csv(("method", "value", "reference", "diff"), rows), flags)


RUNNERS = {
    "cubature_check": run_cubature_check,
    "price_bermudan": run_price_bermudan,
    "price_american": run_price_american,
    "perpetual": run_perpetual,
    "correction_feller": run_correction_feller,
    "correction_exponent": run_correction_exponent,
    "hedge_sim": run_hedge_sim,
    "oracle_compare": run_oracle_compare,
}


def run(cfg: RunConfig) -> Outcome:
    return RUNNERS[cfg.command](cfg)


def thread_budget(arg: int | None) -> int:
    """Thread hint: --threads, else the environment, else the CPU count."""
    if arg:
        return arg
    env = os.environ.get(THREADS_ENV)
    if env and env.isdigit() and int(env) > 0:
        return int(env)
    return os.cpu_count() or 1


# -------------------------------------------------------------------- argv

_SUB = {
    "cubature": ["check"],
    "price": ["bermudan", "american"],
    "perpetual": None,
    "correction": ["feller", "exponent"],
    "hedge": ["sim"],
    "oracle": ["compare"],
}


def _add_common(p):
    p.add_argument("--config", "-c", help="JSON run config")
    p.add_argument("--scenario", help="name of a shipped scenario")
    p.add_argument("--out", "-o", help="write CSV here instead of stdout")
    p.add_argument("--diagnostics", help="write diagnostics CSV here")
    p.add_argument("--threads", type=int, help=f"thread budget hint (default ${THREADS_ENV})")
    p.add_argument("--warn-only", action="store_true", help="report flags without failing")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bermcub", description="Cubature lattice pricing of Bermudan and American options.")
    top = parser.add_subparsers(dest="group", required=True)
    for group, subs in _SUB.items():
        gp = top.add_parser(group)
        if subs is None:
            _add_common(gp)
            gp.add_argument("--method", choices=["d-operator", "harmonic1d", "polyfix"],
                            help="override perpetual.method")
            continue
        sp = gp.add_subparsers(dest="action", required=True)
        for s in subs:
            _add_common(sp.add_parser(s))
    _add_common(top.add_parser("run", help="run a config, dispatching on its command key"))
    top.add_parser("scenarios", help="list shipped scenarios")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.group == "scenarios":
        print("\n".join(scenario_names()))
        return EXIT_OK
    if args.group == "run":
        command = None
    elif args.group == "perpetual":
        command = args.group
    else:
        command = f"{args.group}_{args.action}"
    try:
        cfg = load_config(args.config, args.scenario, command)
        if cfg.command == "perpetual" and getattr(args, "method", None):
            cfg.raw["perpetual"]["method"] = args.method
        cfg.budgets.setdefault("threads", thread_budget(args.threads))
        out = run(cfg)
    except ConfigError as exc:
        for path, msg in exc.errors:
            print(f"config error: {path or '<root>'}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (CapabilityError, ResourceError, PreconditionError, IterationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    target = args.out or cfg.get("output")
    if target:
        with open(target, "w", encoding="utf-8", newline="") as fh:
            fh.write(out.csv)
    else:
        sys.stdout.write(out.csv)
    if args.diagnostics and out.diagnostics is not None:
        with open(args.diagnostics, "w", encoding="utf-8", newline="") as fh:
            fh.write(out.diagnostics)
    for f in out.flags:
        print(f"flag: {f}", file=sys.stderr)
    if out.flags and not (args.warn_only or cfg.warn_only):
        return EXIT_FLAGGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
