"""Acceptance suite: one test per criterion, each recording a pass/fail line."""

import math
import time
import warnings

import numpy as np

from pricebias import checks, cli, core, meanfield as mf, pricing, sim, sweep
from pricebias.errors import PriceBiasError

BASE = mf.MarketParams(rho=1.0, lam=1.0, tau=1.0, eps=1.0, cost=1.0, valuation=mf.ValuationSpec.exponential(5.0))
LOW_COST = mf.MarketParams(rho=1.0, lam=1.0, tau=1.0, eps=1.0, cost=0.5, valuation=mf.ValuationSpec.exponential(5.0))
GRID_P = np.linspace(0.5, 8.0, 64)
GRID_LAM = np.logspace(-2, 2, 64)


def test_criterion_01_bias_identity(record_criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240101)
    worst = 0.0
    for _ in range(200):
        p = float(rng.uniform(1.05, 8.0))
        beta = float(10 ** rng.uniform(-2, 2))
        q = float(rng.uniform(0.05, 0.95))
        prm = BASE.with_beta(beta)
        for design in mf.DESIGNS:
            system = mf.demand_system(prm, design).profit_metrics()
            gap = core.gte(system, p) - core.naive_estimator(system, p, q) - core.bias(system, p, q)
            worst = max(worst, abs(gap))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 30
    record_criterion(1, "gte - estimator - bias identity", ok, f"max gap {worst:.2e} over 400 evaluations, {elapsed:.1f}s")
    assert ok


def test_criterion_02_analytic_vs_oracle(record_criterion):
    ps = np.linspace(1.1, 8.0, 20)
    betas = np.logspace(-2, 2, 20)
    q = 0.3
    worst = {"s_p": 0.0, "D'": 0.0, "LR D0y": 0.0, "LR D1x": 0.0, "CR D0y": 0.0, "CR D1x": 0.0}
    residual = 0.0
    for b in betas:
        prm = BASE.with_beta(b)
        for p in ps:
            residual = max(residual, abs(mf.steady_state(prm, p).residual))
            worst["s_p"] = max(worst["s_p"], checks.rel_err(checks.fd_s_star_p(prm, p), mf.s_star_price_derivative(prm, p)))
            worst["D'"] = max(worst["D'"], checks.rel_err(checks.fd_demand_p(prm, p), mf.demand_price_derivative(prm, p)))
            for design in mf.DESIGNS:
                an = mf.cross_partials(prm, design, q, p)
                fd = checks.fd_cross(prm, design, q, p)
                for name, a, f in zip(("D0y", "D1x"), an, fd):
                    key = f"{design.upper()} {name}"
                    worst[key] = max(worst[key], checks.rel_err(f, a))
    ok = max(worst.values()) <= 1e-5 and residual <= 1e-10
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; balance residual {residual:.1e}"
    record_criterion(2, "analytic derivatives vs finite differences", ok, detail)
    assert ok


def test_criterion_03_underestimation(record_criterion):
    worst_analytic = 0.0
    worst_fd = 0.0
    for lam in GRID_LAM:
        prm = mf.MarketParams(lam=lam, cost=0.5)
        for design in mf.DESIGNS:
            system = mf.demand_system(prm, design)
            for p in GRID_P:
                bd = mf.bias_demand_lr(prm, p) if design == "lr" else mf.bias_demand_cr(prm, p)
                worst_analytic = min(worst_analytic, bd, (p - prm.cost) * bd)
                if p > prm.cost:  # finite differences need room below the price
                    bd_fd = pricing.bias_demand(system, p, 0.5)
                    worst_fd = min(worst_fd, bd_fd, (p - prm.cost) * bd_fd)
    ok = worst_analytic >= -1e-9 and worst_fd >= -1e-9
    record_criterion(
        3, "naive estimators underestimate", ok, f"min closed-form bias {worst_analytic:.1e}, min finite-difference bias {worst_fd:.1e}"
    )
    assert ok


def test_criterion_04_markup_order(record_criterion):
    worst = -math.inf
    succeeded = failed = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", pricing.AssumptionWarning)
        for lam in GRID_LAM:
            prm = mf.MarketParams(lam=lam, cost=0.5)
            for design in mf.DESIGNS:
                system = mf.demand_system(prm, design)
                for p in GRID_P:
                    for q in (0.25, 0.5, 0.75):
                        try:
                            c = pricing.classify_sign(system, float(p), q)
                        except PriceBiasError:
                            failed += 1
                            continue
                        succeeded += 1
                        worst = max(worst, c.markup_A - c.modified_markup_B)
    ok = worst <= 1e-9 and succeeded > 0
    record_criterion(4, "A <= B", ok, f"max A - B {worst:.2e} over {succeeded} classifications ({failed} refused at p = c)")
    assert ok


def test_criterion_05_q_independence(record_criterion):
    rng = np.random.default_rng(5)
    qs = [round(0.1 * k, 1) for k in range(1, 10)]
    spread_closed = spread_fd = 0.0
    for _ in range(50):
        p = float(rng.uniform(1.05, 8.0))
        prm = BASE.with_beta(float(10 ** rng.uniform(-2, 2)))
        for design in mf.DESIGNS:
            closed = [(p - prm.cost) * sum(mf.cross_partials(prm, design, q, p)) for q in qs]
            system = mf.demand_system(prm, design)
            fd = [pricing.bias_profit(system, p, q) for q in qs]
            spread_closed = max(spread_closed, max(closed) - min(closed))
            spread_fd = max(spread_fd, max(fd) - min(fd))
    ok = spread_closed <= 1e-8 and spread_fd <= 1e-8
    record_criterion(5, "bias independent of q", ok, f"spread closed-form {spread_closed:.1e}, finite-difference {spread_fd:.1e}")
    assert ok


def _ladder_gaps(p, ladder, value, target):
    return [abs(value(BASE.with_beta(b), p) - target) for b in ladder]


# ten prices around the worked instance, clear of p = c + 0.1
LIMIT_PRICES = np.linspace(1.5, 6.0, 10)


def test_criterion_06_demand_constrained_limits(record_criterion):
    prices = LIMIT_PRICES
    ladder = [1.0, 1e-1, 1e-2, 1e-3, 1e-4]
    worst_cr = worst_lr = 0.0
    monotone = True
    for p in prices:
        lim = mf.limit_values(BASE, p)
        prm = BASE.with_beta(1e-4)
        worst_cr = max(worst_cr, abs(mf.bias_cr(prm, p) / prm.lam))
        worst_lr = max(worst_lr, abs(mf.bias_lr(prm, p) / prm.lam - lim.bias_lr0) / abs(lim.bias_lr0))
        for fn, target in ((mf.bias_lr, lim.bias_lr0), (mf.bias_cr, lim.bias_cr0)):
            gaps = _ladder_gaps(p, ladder, lambda q, x: fn(q, x) / q.lam, target)
            monotone &= all(b < a for a, b in zip(gaps, gaps[1:]))
    ok = worst_cr <= 1e-3 and worst_lr <= 0.01 and monotone
    record_criterion(
        6, "beta -> 0 limits", ok, f"max |Bias_CR/lambda| {worst_cr:.1e}, max rel gap Bias_LR/lambda {worst_lr:.1e}, monotone={monotone}"
    )
    assert ok


def test_criterion_07_supply_constrained_limits(record_criterion):
    prices = LIMIT_PRICES
    worst_lr = worst_cr = worst_gte = 0.0
    for p in prices:
        lim = mf.limit_values(BASE, p)
        prm = BASE.with_beta(1e4)
        worst_lr = max(worst_lr, abs(mf.bias_lr(prm, p) / prm.tau))
        worst_cr = max(worst_cr, abs(mf.bias_cr(prm, p) / prm.tau - lim.bias_cr_inf) / abs(lim.bias_cr_inf))
        worst_gte = max(worst_gte, abs(mf.gte_profit_mf(prm, p) / prm.tau - prm.rho) / prm.rho)
    ok = worst_lr <= 1e-3 and worst_cr <= 0.01 and worst_gte <= 0.01
    record_criterion(
        7,
        "beta -> inf limits",
        ok,
        f"max |Bias_LR/tau| {worst_lr:.1e}, rel gap Bias_CR/tau {worst_cr:.1e}, rel gap GTE/tau {worst_gte:.1e}",
    )
    assert ok


# -- independent oracle for the worked instance: plain bisection + central differences


def _bisect(f, lo, hi, iters=200):
    flo = f(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _oracle_market(p, rho=1.0, lam=1.0, tau=1.0, eps=1.0, V=5.0):
    v = math.exp(V - p)
    s = _bisect(lambda x: tau * (rho - x) - lam * x * v / (eps + x * v), 0.0, rho)
    return s, tau * (rho - s)


def _oracle_lr_demands(p0, p1, q=0.5, rho=1.0, lam=1.0, tau=1.0, eps=1.0, V=5.0):
    v0, v1 = math.exp(V - p0), math.exp(V - p1)

    def groups(w):  # each group's balance is linear in its own availability once w is fixed
        return (1 - q) * rho * tau * w / (tau * w + lam * v0), q * rho * tau * w / (tau * w + lam * v1)

    w = _bisect(lambda w: eps + groups(w)[0] * v0 + groups(w)[1] * v1 - w, eps, eps + rho * max(v0, v1))
    s0, s1 = groups(w)
    return lam * s0 * v0 / w / (1 - q), lam * s1 * v1 / w / q


def _oracle_cr_demands(p0, p1, q=0.5, rho=1.0, lam=1.0, tau=1.0, eps=1.0, V=5.0):
    v0, v1 = math.exp(V - p0), math.exp(V - p1)
    s = _bisect(
        lambda x: tau * (rho - x) - lam * ((1 - q) * x * v0 / (eps + x * v0) + q * x * v1 / (eps + x * v1)), 0.0, rho
    )
    return lam * s * v0 / (eps + s * v0), lam * s * v1 / (eps + s * v1)


def _diff(f, x, h=1e-4):
    return (f(x + h) - f(x - h)) / (2 * h)


def test_criterion_08_worked_instance(record_criterion):
    p, c = 5.0, 1.0
    target = {"s_star": 0.6180340, "demand": 0.3819660, "gte_pi": -0.3013155, "bias_lr": 0.2609912, "bias_cr": 0.2609912}
    s_o, d_o = _oracle_market(p)
    oracle = {
        "s_star": s_o,
        "demand": d_o,
        "gte_pi": d_o + (p - c) * _diff(lambda x: _oracle_market(x)[1], p),
        "bias_lr": (p - c)
        * (_diff(lambda y: _oracle_lr_demands(p, y)[0], p) + _diff(lambda x: _oracle_lr_demands(x, p)[1], p)),
        "bias_cr": (p - c)
        * (_diff(lambda y: _oracle_cr_demands(p, y)[0], p) + _diff(lambda x: _oracle_cr_demands(x, p)[1], p)),
    }
    analytic = {
        "s_star": mf.steady_state(BASE, p).s_star,
        "demand": mf.demand(BASE, p),
        "gte_pi": mf.gte_profit_mf(BASE, p),
        "bias_lr": mf.bias_lr(BASE, p),
        "bias_cr": mf.bias_cr(BASE, p),
    }
    gap_target = max(abs(analytic[k] - target[k]) for k in target)
    gap_oracle_target = max(abs(oracle[k] - target[k]) for k in target)
    gap_oracle = max(abs(analytic[k] - oracle[k]) for k in target)
    ok = gap_target <= 1e-5 and gap_oracle_target <= 1e-5 and gap_oracle <= 1e-7
    record_criterion(
        8,
        "worked instance",
        ok,
        f"max |analytic - target| {gap_target:.1e}, |oracle - target| {gap_oracle_target:.1e}, |analytic - oracle| {gap_oracle:.1e}",
    )
    assert ok


def test_criterion_09_region_maps(record_criterion):
    t0 = time.perf_counter()
    spec = sweep.SweepSpec(
        LOW_COST, sweep.Axis(0.5, 8.0, 64, "p"), sweep.Axis(1e-2, 1e2, 64, "lambda", "log"), design="both", q=0.5
    )
    cells = sweep.run_sweep(spec)
    summary = sweep.summarize(spec, cells)
    elapsed = time.perf_counter() - t0
    lr, cr = summary["lr"]["slices"], summary["cr"]["slices"]
    close = lambda a, b: math.isclose(a, b, rel_tol=1e-9)  # noqa: E731
    lr_small = all(s["change_of_sign_cells"] > 0 for s in lr if s["lambda"] <= 0.1 or close(s["lambda"], 0.1))
    lr_large = all(s["change_of_sign_cells"] == 0 for s in lr if s["lambda"] >= 100 or close(s["lambda"], 100))
    cr_small = all(s["change_of_sign_cells"] == 0 for s in cr if s["lambda"] <= 0.01 or close(s["lambda"], 0.01))
    cr_large = all(s["change_of_sign_cells"] > 0 for s in cr if s["lambda"] >= 10 or close(s["lambda"], 10))
    contiguous = all(s["intervals"] <= 1 for s in lr + cr)
    failed = summary["failed_cells"]
    ok = lr_small and lr_large and cr_small and cr_large and contiguous and failed == 0 and elapsed < 120
    record_criterion(
        9,
        "change-of-sign region maps",
        ok,
        f"LR non-empty at small lambda={lr_small}, empty at large={lr_large}; CR empty at small={cr_small}, "
        f"non-empty at large={cr_large}; contiguous={contiguous}; {elapsed:.1f}s",
    )
    assert ok


def test_criterion_10_simulator(record_criterion):
    t0 = time.perf_counter()
    cfg = sim.SimConfig(n_listings=500, params=BASE, design="global", p0=5.0, horizon=5000.0, replications=20, seed=0)
    out = sim.simulate(cfg)
    frac, half = out.availability_fraction[0], out.ci_halfwidth
    target = mf.steady_state(BASE, 5.0).s_star / BASE.rho
    exact = sim.global_stationary_mean(500, BASE, 5.0)
    within_2pct = abs(frac - target) <= 0.02 * target
    in_ci = abs(frac - target) <= half

    lr_cfg = sim.SimConfig(n_listings=500, params=BASE, design="lr", q=0.5, p0=5.0, p1=5.05, horizon=5000.0, replications=20, seed=0)
    lr_out = sim.simulate(lr_cfg)
    analytic = sim.mean_field_prediction(lr_cfg)["naive_estimator"]
    lr_ok = abs(lr_out.naive_estimator_hat - analytic) <= lr_out.ci_halfwidth
    elapsed = time.perf_counter() - t0
    ok = within_2pct and in_ci and lr_ok and elapsed < 300
    record_criterion(
        10,
        "simulator vs mean field",
        ok,
        f"availability {frac:.6f} +/- {half:.6f} vs s*/rho {target:.6f} (exact finite-N {exact:.6f}); "
        f"LR estimator {lr_out.naive_estimator_hat:.4f} +/- {lr_out.ci_halfwidth:.4f} vs {analytic:.4f}; {elapsed:.0f}s",
    )
    assert ok


def test_criterion_11_determinism(record_criterion, tmp_path, capsys):
    outputs = []
    for run, threads in enumerate((1, 2)):
        d = tmp_path / f"sim{run}"
        d.mkdir()
        code = cli.main(
            ["simulate", "--design", "lr", "--n-listings", "60", "--horizon", "300", "--replications", "4",
             "--seed", "11", "--threads", str(threads), "--out", str(d / "sim.csv")]
        )
        assert code == 0
        outputs.append(((d / "sim.csv").read_bytes(), (d / "sim.json").read_bytes().replace(bytes(d), b"")))
    sim_same = outputs[0] == outputs[1]

    csvs = []
    for threads in (1, 2, 4):
        path = tmp_path / f"sweep{threads}.csv"
        code = cli.main(
            ["sweep", "--c", "0.5", "--p-lo", "0.5", "--p-n", "24", "--axis2-n", "16", "--threads", str(threads), "--out", str(path)]
        )
        assert code == 0
        csvs.append(path.read_bytes())
    capsys.readouterr()
    sweep_same = all(c == csvs[0] for c in csvs)
    ok = sim_same and sweep_same
    record_criterion(11, "determinism", ok, f"simulate byte-identical={sim_same}; sweep CSV identical over 1/2/4 threads={sweep_same}")
    assert ok
