"""Command-line front end.

Every command prints one JSON object carrying ``schema_version``. Exit codes:
0 success, 1 a property or numerical failure, 2 invalid input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import checks, config, meanfield as mf, sim, sweep
from .errors import AssumptionViolation, PriceBiasError
from .numerics import DEFAULT_TOL, Tolerances
from .pricing import region_class

EXIT_OK, EXIT_FAIL, EXIT_INVALID = 0, 1, 2
DEFAULT_LADDER = tuple(10.0**k for k in range(-4, 5))
DEFAULT_SIM_DELTA = 0.05


class InvalidInput(Exception):
    pass


def jsonable(x: Any) -> Any:
    """Plain JSON types; non-finite floats become null."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def dumps(obj: dict) -> str:
    return json.dumps(jsonable(obj), indent=2, allow_nan=False) + "\n"


# -- argument parsing ------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("global")
    g.add_argument("--config", metavar="PATH", help="JSON config file; flags override its values")
    g.add_argument("--out", metavar="PATH", help="output file (CSV for sweep/simulate, JSON otherwise)")
    g.add_argument("--seed", type=int, help="simulator seed")
    g.add_argument("--threads", type=int, default=1, help="worker threads for sweep/simulate")
    g.add_argument("--tol", type=float, help="solver residual/step tolerance (check: residual threshold)")
    m = p.add_argument_group("market")
    m.add_argument("--rho", type=float)
    m.add_argument("--lambda", dest="lam", type=float)
    m.add_argument("--tau", type=float)
    m.add_argument("--eps", type=float)
    m.add_argument("--c", dest="cost", type=float, help="unit cost")
    m.add_argument("--valuation", choices=["exponential", "linear", "expression"])
    m.add_argument("--V", type=float, help="exponential valuation exp(V - p)")
    m.add_argument("--a", type=float, help="linear valuation a - b p")
    m.add_argument("--b", type=float)
    m.add_argument("--expr", help="valuation formula in p, e.g. '1/p'")


def _point(p: argparse.ArgumentParser, designs: Sequence[str]) -> None:
    p.add_argument("--p", type=float, help="price")
    p.add_argument("--q", type=float, help="treatment fraction")
    p.add_argument("--design", choices=list(designs))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pricebias", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("steady", "steady-state availability at one price"),
        ("gte", "global treatment effects at one price"),
        ("bias", "naive-estimator bias and sign classification at one price"),
    ):
        sp = sub.add_parser(name, help=help_)
        _common(sp)
        _point(sp, mf.DESIGNS)

    sp = sub.add_parser("sweep", help="(price, market balance) grid to CSV")
    _common(sp)
    _point(sp, ("lr", "cr", "both"))
    sp.add_argument("--p-lo", type=float)
    sp.add_argument("--p-hi", type=float)
    sp.add_argument("--p-n", type=int)
    sp.add_argument("--axis2", choices=["lambda", "beta"])
    sp.add_argument("--axis2-lo", type=float)
    sp.add_argument("--axis2-hi", type=float)
    sp.add_argument("--axis2-n", type=int)
    sp.add_argument("--axis2-scale", choices=["linear", "log"])
    sp.add_argument("--outputs", help="comma list of gte,bias,estimator,region,elasticities")

    sp = sub.add_parser("limits", help="normalized GTE and biases along a market-balance ladder")
    _common(sp)
    sp.add_argument("--p", type=float)
    sp.add_argument("--ladder", help="comma list of beta values")

    sp = sub.add_parser("simulate", help="finite-market Monte Carlo")
    _common(sp)
    sp.add_argument("--design", choices=["global", "lr", "cr"])
    sp.add_argument("--p", "--p0", dest="p0", type=float, help="control (or global) price")
    sp.add_argument("--p1", type=float, help=f"treatment price (default p0 + {DEFAULT_SIM_DELTA})")
    sp.add_argument("--q", type=float)
    sp.add_argument("--n-listings", type=int)
    sp.add_argument("--horizon", type=float)
    sp.add_argument("--burn-in", type=float)
    sp.add_argument("--replications", type=int)

    sp = sub.add_parser("check", help="conformance properties for a market instance")
    _common(sp)
    sp.add_argument("--p-hi", type=float, help="upper end of the price grid")
    return parser


def _floats(text: str | None, what: str) -> list[float] | None:
    if text is None:
        return None
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise InvalidInput(f"--{what}: expected a comma-separated list of numbers") from exc


def resolve(args: argparse.Namespace) -> dict:
    """Config file merged with flags, then schema-validated."""
    doc = config.load(args.config)
    doc.setdefault("schema_version", config.SCHEMA_VERSION)
    val = {"family": args.valuation, "V": args.V, "a": args.a, "b": args.b, "expr": args.expr}
    market = {"rho": args.rho, "lambda": args.lam, "tau": args.tau, "eps": args.eps, "cost": args.cost}
    if any(v is not None for v in val.values()):
        market["valuation"] = val
    overrides: dict[str, dict] = {"market": market}
    cmd = args.command
    if cmd in ("steady", "gte", "bias"):
        overrides["point"] = {"p": args.p, "q": args.q, "design": args.design}
    elif cmd == "sweep":
        overrides["sweep"] = {
            "design": args.design,
            "q": args.q,
            "axis1": {"lo": args.p_lo, "hi": args.p_hi, "n": args.p_n},
            "axis2": {"name": args.axis2, "lo": args.axis2_lo, "hi": args.axis2_hi, "n": args.axis2_n, "scale": args.axis2_scale},
        }
        if args.outputs is not None:
            overrides["sweep"]["outputs"] = [t.strip() for t in args.outputs.split(",") if t.strip()]
    elif cmd == "limits":
        overrides["limits"] = {"p": args.p, "ladder": _floats(args.ladder, "ladder")}
    elif cmd == "simulate":
        overrides["simulate"] = {
            "design": args.design,
            "p0": args.p0,
            "p1": args.p1,
            "q": args.q,
            "n_listings": args.n_listings,
            "horizon": args.horizon,
            "burn_in": args.burn_in,
            "replications": args.replications,
            "seed": args.seed,
        }
    elif cmd == "check":
        overrides["check"] = {"price_hi": args.p_hi}
    doc = config.merge(doc, overrides)
    # drop sections left empty by unset flags so the schema sees only real input
    for key in [k for k, v in doc.items() if isinstance(v, dict) and not v]:
        del doc[key]
    for ax in ("axis1", "axis2"):
        if doc.get("sweep", {}).get(ax) == {}:
            del doc["sweep"][ax]
    return config.validate(doc)


def _tolerances(args) -> Tolerances:
    if args.tol is None:
        return DEFAULT_TOL
    if not args.tol > 0:
        raise InvalidInput(f"--tol must be > 0 (got {args.tol})")
    return Tolerances(residual_tol=args.tol, step_tol=args.tol)


def _emit(args, payload: dict, write_out: bool = True) -> None:
    text = dumps({"schema_version": config.SCHEMA_VERSION, "command": args.command, **payload})
    sys.stdout.write(text)
    if write_out and args.out:
        Path(args.out).write_text(text, encoding="utf-8")


# -- commands ---------------------------------------------------------------------


def point_report(params: mf.MarketParams, p: float, design: str, q: float, tol: Tolerances) -> dict:
    """All single-point quantities: steady state, GTEs, biases and the sign analysis."""
    st = mf.steady_state(params, p, tol)
    c = mf.classify_point(params, design, p, q)
    d0y, d1x = mf.cross_partials(params, design, q, p)
    return {
        "market": params.to_dict(),
        "beta": params.beta,
        "p": p,
        "q": q,
        "design": design,
        "s_star": st.s_star,
        "balance_residual": st.residual,
        "solver": st.solver,
        **c.as_dict(),
        "region_class": region_class(c.condition_a, c.condition_b),
        "cross_partials": {"D0y": d0y, "D1x": d1x},
    }


def cmd_point(args, doc: dict) -> int:
    params = config.market_from_dict(doc.get("market"))
    pt = doc.get("point", {})
    p = pt.get("p", 5.0)
    rep = point_report(params, p, pt.get("design", "lr"), pt.get("q", 0.5), _tolerances(args))
    if args.command == "steady":
        rep["s_star_price_derivative"] = mf.s_star_price_derivative(params, p)
        rep["s_star_beta_derivative"] = mf.s_star_beta_derivative(params, p)
    if args.command == "gte":
        rep["profit"] = (p - params.cost) * rep["demand"]
    _emit(args, rep)
    return EXIT_OK


def sweep_spec_from(doc: dict) -> sweep.SweepSpec:
    params = config.market_from_dict(doc.get("market"))
    sw = doc.get("sweep", {})
    a1 = {"lo": params.cost, "hi": 8.0, "n": 64, **sw.get("axis1", {})}
    a2 = {"name": "lambda", "lo": 1e-2, "hi": 1e2, "n": 64, "scale": "log", **sw.get("axis2", {})}
    return sweep.SweepSpec(
        params=params,
        axis1=sweep.Axis(a1["lo"], a1["hi"], a1["n"], "p"),
        axis2=sweep.Axis(a2["lo"], a2["hi"], a2["n"], a2["name"], a2["scale"]),
        design=sw.get("design", "both"),
        q=sw.get("q", 0.5),
        outputs=tuple(sw.get("outputs", sweep.OUTPUTS)),
    )


def cmd_sweep(args, doc: dict) -> int:
    if not args.out:
        raise InvalidInput("sweep needs --out PATH for the CSV")
    spec = sweep_spec_from(doc)
    cells = sweep.run_sweep(spec, threads=max(1, args.threads))
    sweep.write_csv(cells, args.out)
    _emit(
        args,
        {
            "csv": str(args.out),
            "rows": len(cells),
            "columns": list(sweep.COLUMNS),
            "spec": {
                "market": spec.params.to_dict(),
                "axis1": asdict(spec.axis1),
                "axis2": asdict(spec.axis2),
                "design": spec.design,
                "q": spec.q,
                "outputs": list(spec.outputs),
            },
            "summary": sweep.summarize(spec, cells),
        },
        write_out=False,
    )
    return EXIT_OK


def _gap(x: float, target: float) -> float:
    return abs(x - target) / abs(target) if target != 0 else abs(x)


def limits_report(params: mf.MarketParams, p: float, ladder: Sequence[float]) -> dict:
    """Normalized quantities along a beta ladder and their distance to both limits.

    Gaps are relative where the target is non-zero and absolute otherwise.
    """
    lim = mf.limit_values(params, p)
    rows = []
    for beta in ladder:
        prm = params.with_beta(beta)
        g, blr, bcr = mf.gte_profit_mf(prm, p), mf.bias_lr(prm, p), mf.bias_cr(prm, p)
        lam, tau = prm.lam, prm.tau
        rows.append(
            {
                "beta": beta,
                "lambda": lam,
                "gte_pi_per_lambda": g / lam,
                "bias_lr_per_lambda": blr / lam,
                "bias_cr_per_lambda": bcr / lam,
                "gte_pi_per_tau": g / tau,
                "bias_lr_per_tau": blr / tau,
                "bias_cr_per_tau": bcr / tau,
                "gap_small_beta": {
                    "gte_pi": _gap(g / lam, lim.gte0),
                    "bias_lr": _gap(blr / lam, lim.bias_lr0),
                    "bias_cr": _gap(bcr / lam, lim.bias_cr0),
                },
                "gap_large_beta": {
                    "gte_pi": _gap(g / tau, lim.gte_inf),
                    "bias_lr": _gap(blr / tau, lim.bias_lr_inf),
                    "bias_cr": _gap(bcr / tau, lim.bias_cr_inf),
                },
            }
        )
    return {"market": params.to_dict(), "p": p, "targets": lim.as_dict(), "ladder": rows}


def cmd_limits(args, doc: dict) -> int:
    params = config.market_from_dict(doc.get("market"))
    lim = doc.get("limits", {})
    _emit(args, limits_report(params, lim.get("p", 5.0), lim.get("ladder", DEFAULT_LADDER)))
    return EXIT_OK


def sim_config_from(doc: dict) -> sim.SimConfig:
    params = config.market_from_dict(doc.get("market"))
    s = dict(doc.get("simulate", {}))
    design = s.get("design", "global")
    p0 = s.get("p0", 5.0)
    p1 = s.get("p1", p0 + DEFAULT_SIM_DELTA if design != "global" else p0)
    return sim.SimConfig(
        n_listings=s.get("n_listings", 500),
        params=params,
        design=design,
        q=s.get("q", 0.5),
        p0=p0,
        p1=p1,
        horizon=s.get("horizon", 5000.0),
        burn_in=s.get("burn_in"),
        replications=s.get("replications", 20),
        seed=s.get("seed", 0),
    )


SIM_COLUMNS = (
    "replication",
    "design",
    "n_listings",
    "n0",
    "n1",
    "p0",
    "p1",
    "availability_fraction_0",
    "availability_fraction_1",
    "booking_rate_0",
    "booking_rate_1",
    "scaled_demand_0",
    "scaled_demand_1",
    "naive_estimator",
    "events",
    "mf_availability_fraction_0",
    "mf_availability_fraction_1",
    "mf_scaled_demand_0",
    "mf_scaled_demand_1",
    "mf_naive_estimator",
)


def simulation_csv(cfg: sim.SimConfig, outcome: sim.SimOutcome, prediction: dict) -> str:
    n0, n1 = outcome.group_sizes
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SIM_COLUMNS)
    for r in outcome.replications:
        row = {
            "replication": r.index,
            "design": cfg.design,
            "n_listings": cfg.n_listings,
            "n0": n0,
            "n1": n1,
            "p0": cfg.p0,
            "p1": cfg.p1 if cfg.design != "global" else None,
            "availability_fraction_0": r.mean_availability[0] / n0,
            "availability_fraction_1": r.mean_availability[1] / n1 if n1 else None,
            "booking_rate_0": r.booking_rate[0],
            "booking_rate_1": r.booking_rate[1] if cfg.design != "global" else None,
            "scaled_demand_0": r.scaled_demand[0],
            "scaled_demand_1": r.scaled_demand[1] if cfg.design != "global" else None,
            "naive_estimator": r.naive_estimator,
            "events": r.events,
            **{f"mf_{k}": v for k, v in prediction.items()},
        }
        w.writerow([sweep.format_value(row.get(c)) for c in SIM_COLUMNS])
    return buf.getvalue()


def cmd_simulate(args, doc: dict) -> int:
    cfg = sim_config_from(doc)
    outcome = sim.simulate(cfg, threads=max(1, args.threads))
    prediction = sim.mean_field_prediction(cfg)
    payload = {
        "config": {
            **{k: v for k, v in asdict(cfg).items() if k != "params"},
            "market": cfg.params.to_dict(),
            "burn_in": cfg.effective_burn_in,
        },
        "outcome": outcome.as_dict(),
        "mean_field": prediction,
    }
    if args.out:
        out = Path(args.out)
        out.write_text(simulation_csv(cfg, outcome, prediction), encoding="utf-8", newline="")
        payload["csv"] = str(out)
        out.with_suffix(".json").write_text(
            dumps({"schema_version": config.SCHEMA_VERSION, "command": "simulate", **payload}), encoding="utf-8"
        )
    _emit(args, payload, write_out=False)
    return EXIT_OK


def cmd_check(args, doc: dict) -> int:
    params = config.market_from_dict(doc.get("market"))
    p_hi = doc.get("check", {}).get("price_hi", 8.0)
    if not p_hi > params.cost:
        raise InvalidInput(f"check.price_hi must exceed cost ({p_hi} <= {params.cost})")
    results = checks.run_all(params, p_hi, tol=args.tol)
    passed = all(r.passed for r in results)
    _emit(args, {"market": params.to_dict(), "price_hi": p_hi, "passed": passed, "properties": [r.as_dict() for r in results]})
    return EXIT_OK if passed else EXIT_FAIL


COMMANDS = {
    "steady": cmd_point,
    "gte": cmd_point,
    "bias": cmd_point,
    "sweep": cmd_sweep,
    "limits": cmd_limits,
    "simulate": cmd_simulate,
    "check": cmd_check,
}


def _fail(command: str, code: int, kind: str, messages: list[str]) -> int:
    sys.stdout.write(
        dumps({"schema_version": config.SCHEMA_VERSION, "command": command, "error": {"type": kind, "messages": messages}})
    )
    for m in messages:
        print(f"pricebias {command}: {m}", file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = resolve(args)
        return COMMANDS[args.command](args, doc)
    except config.ConfigError as exc:
        return _fail(args.command, EXIT_INVALID, "ConfigError", exc.errors)
    except (AssumptionViolation, InvalidInput, ValueError, OSError) as exc:
        return _fail(args.command, EXIT_INVALID, type(exc).__name__, [str(exc)])
    except PriceBiasError as exc:
        return _fail(args.command, EXIT_FAIL, type(exc).__name__, [str(exc)])


if __name__ == "__main__":
    sys.exit(main())
