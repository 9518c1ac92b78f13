"""Finite-market continuous-time simulation of the logit booking market.

``n_listings`` listings each carry mass ``rho / n_listings``. Customers
arrive as a Poisson process with ``lam * n_listings / rho`` arrivals per
unit time, so booked mass flows at the mean-field rate ``lam * book_prob``.
Each occupied listing frees independently at rate ``tau``. Trajectories are
exact (Gillespie): no time discretization.

Reported rates are per unit time in listing-mass units and so compare
directly with the mean-field demand.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Literal

import numba
import numpy as np
from scipy import stats

from .errors import DegenerateDelta
from .meanfield import (
    MarketParams,
    book_prob,
    cr_demands,
    cr_steady_state,
    lr_demands,
    lr_steady_state,
    steady_state,
)

SimDesign = Literal["global", "lr", "cr"]

_CHUNK = 3 * (1 << 18)

# integer state slots
_K0, _K1, _B0, _B1, _STARTED, _ENDED, _EVENTS = range(7)
# float state slots
_T, _AREA0, _AREA1 = range(3)


@numba.njit(cache=True, nogil=True)
def _advance(u, fs, ist, n0, n1, arrival_rate, tau, eps, v0, v1, unit, customer_side, q, burn, t_end):
    """Consume uniforms in triples until ``t_end`` or the chunk runs out.

    Returns True once the horizon is reached. State lives in ``fs``/``ist``
    so a trajectory can resume with the next chunk.
    """
    i = 0
    n = u.shape[0]
    while i + 3 <= n:
        k0 = ist[_K0]
        k1 = ist[_K1]
        occ0 = n0 - k0
        occ1 = n1 - k1
        free_rate = tau * (occ0 + occ1)
        total = arrival_rate + free_rate
        t = fs[_T]
        if total <= 0.0:
            t_new = t_end + 1.0
        else:
            t_new = t - math.log(1.0 - u[i]) / total
        stop = t_new >= t_end
        hi = t_end if stop else t_new
        lo = t if t > burn else burn
        if hi > lo:
            fs[_AREA0] += k0 * (hi - lo)
            fs[_AREA1] += k1 * (hi - lo)
        if stop:
            fs[_T] = t_end
            return True
        fs[_T] = t_new
        counted = t_new >= burn
        ist[_EVENTS] += 1
        x = u[i + 1] * total
        if x < arrival_rate:
            if customer_side:
                treated = x < q * arrival_rate
                s = k0 * unit
                w = s * (v1 if treated else v0)
                if u[i + 2] * (eps + w) < w:
                    ist[_K0] = k0 - 1
                    ist[_STARTED] += 1
                    if counted:
                        if treated:
                            ist[_B1] += 1
                        else:
                            ist[_B0] += 1
            else:
                w0 = k0 * unit * v0
                w1 = k1 * unit * v1
                y = u[i + 2] * (eps + w0 + w1)
                if y < w0:
                    ist[_K0] = k0 - 1
                    ist[_STARTED] += 1
                    if counted:
                        ist[_B0] += 1
                elif y < w0 + w1:
                    ist[_K1] = k1 - 1
                    ist[_STARTED] += 1
                    if counted:
                        ist[_B1] += 1
        else:
            if (x - arrival_rate) < tau * occ0:
                ist[_K0] = k0 + 1
            else:
                ist[_K1] = k1 + 1
            ist[_ENDED] += 1
        i += 3
    return False


@dataclass(frozen=True)
class SimConfig:
    n_listings: int = 500
    params: MarketParams = field(default_factory=MarketParams)
    design: SimDesign = "global"
    q: float = 0.5
    p0: float = 5.0
    p1: float = 5.0
    horizon: float = 5000.0
    burn_in: float | None = None
    replications: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.n_listings < 10:
            raise ValueError("n_listings must be >= 10")
        if self.design not in ("global", "lr", "cr"):
            raise ValueError(f"unknown design {self.design!r}")
        if self.design != "global" and not 0.0 < self.q < 1.0:
            raise ValueError("q must lie in (0, 1)")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not (self.horizon > self.effective_burn_in >= 0):
            raise ValueError("need horizon > burn_in >= 0")
        if self.seed < 0 or self.seed >= 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def effective_burn_in(self) -> float:
        if self.burn_in is not None:
            return self.burn_in
        return 10.0 / min(self.params.tau, self.params.lam)

    def group_sizes(self) -> tuple[int, int]:
        if self.design == "lr":
            n1 = int(round(self.q * self.n_listings))
            return self.n_listings - n1, n1
        return self.n_listings, 0


@dataclass
class Replication:
    index: int
    mean_availability: tuple[float, float]
    booking_rate: tuple[float, float]
    scaled_demand: tuple[float, float]
    naive_estimator: float | None
    bookings_started: int
    bookings_ended: int
    final_available: tuple[int, int]
    events: int


@dataclass
class SimOutcome:
    design: str
    n_listings: int
    group_sizes: tuple[int, int]
    mean_availability: tuple[float, float]
    availability_fraction: tuple[float, float]
    booking_rate: tuple[float, float]
    scaled_demand: tuple[float, float]
    naive_estimator_hat: float | None
    ci_halfwidth: float | None
    ci: dict[str, float | None]
    replication_count: int
    replications: list[Replication] = field(repr=False)

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("replications")
        return d


def _stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))


def _group_shares(cfg: SimConfig) -> tuple[float, float]:
    if cfg.design == "lr":
        n0, n1 = cfg.group_sizes()
        return n0 / cfg.n_listings, n1 / cfg.n_listings
    if cfg.design == "cr":
        return 1.0 - cfg.q, cfg.q
    return 1.0, 1.0


def finite_delta_estimator(cfg: SimConfig, d0: float, d1: float) -> float:
    """``(pi_1 - pi_0) / (p1 - p0)`` from scaled group demands."""
    if abs(cfg.p1 - cfg.p0) < 1e-9:
        raise DegenerateDelta("treatment and control prices coincide")
    c = cfg.params.cost
    return ((cfg.p1 - c) * d1 - (cfg.p0 - c) * d0) / (cfg.p1 - cfg.p0)


def simulate_replication(cfg: SimConfig, index: int) -> Replication:
    prm = cfg.params
    n0, n1 = cfg.group_sizes()
    unit = prm.rho / cfg.n_listings
    v0 = prm.valuation.v(cfg.p0)
    v1 = prm.valuation.v(cfg.p1) if cfg.design != "global" else 0.0
    burn = cfg.effective_burn_in
    fs = np.zeros(3)
    ist = np.zeros(7, dtype=np.int64)
    ist[_K0], ist[_K1] = n0, n1
    rng = _stream(cfg.seed, index)
    done = False
    while not done:
        u = rng.random(_CHUNK)
        done = _advance(
            u, fs, ist, n0, n1, prm.lam / unit, prm.tau, prm.eps, v0, v1, unit,
            cfg.design == "cr", cfg.q, burn, cfg.horizon,
        )
    span = cfg.horizon - burn
    occupied_change = (n0 + n1 - ist[_K0] - ist[_K1])
    if ist[_STARTED] - ist[_ENDED] != occupied_change:
        raise AssertionError("booking bookkeeping out of balance")
    avail = (fs[_AREA0] / span, fs[_AREA1] / span)
    rates = (ist[_B0] * unit / span, ist[_B1] * unit / span)
    share = _group_shares(cfg)
    scaled = (rates[0] / share[0], rates[1] / share[1] if cfg.design != "global" else 0.0)
    est = finite_delta_estimator(cfg, *scaled) if cfg.design != "global" else None
    return Replication(
        index=index,
        mean_availability=avail,
        booking_rate=rates,
        scaled_demand=scaled,
        naive_estimator=est,
        bookings_started=int(ist[_STARTED]),
        bookings_ended=int(ist[_ENDED]),
        final_available=(int(ist[_K0]), int(ist[_K1])),
        events=int(ist[_EVENTS]),
    )


def _mean_ci(values: list[float]) -> tuple[float, float | None]:
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    if arr.size < 2:
        return mean, None
    half = float(stats.t.ppf(0.975, arr.size - 1) * arr.std(ddof=1) / math.sqrt(arr.size))
    return mean, half


def simulate(cfg: SimConfig, threads: int = 1) -> SimOutcome:
    """Run all replications and aggregate them with t-based 95% intervals."""
    if cfg.design != "global" and abs(cfg.p1 - cfg.p0) < 1e-9:
        raise DegenerateDelta("treatment and control prices coincide")
    idx = range(cfg.replications)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reps = list(pool.map(lambda i: simulate_replication(cfg, i), idx))
    else:
        reps = [simulate_replication(cfg, i) for i in idx]
    n0, n1 = cfg.group_sizes()
    ci: dict[str, float | None] = {}
    means = {}
    for g, size in ((0, n0), (1, n1)):
        for name, vals in (
            (f"availability_fraction_{g}", [r.mean_availability[g] / size if size else 0.0 for r in reps]),
            (f"mean_availability_{g}", [r.mean_availability[g] for r in reps]),
            (f"booking_rate_{g}", [r.booking_rate[g] for r in reps]),
            (f"scaled_demand_{g}", [r.scaled_demand[g] for r in reps]),
        ):
            means[name], ci[name] = _mean_ci(vals)
    est = None
    if cfg.design != "global":
        est, ci["naive_estimator"] = _mean_ci([r.naive_estimator for r in reps])
    headline = ci.get("naive_estimator") if cfg.design != "global" else ci["availability_fraction_0"]
    return SimOutcome(
        design=cfg.design,
        n_listings=cfg.n_listings,
        group_sizes=(n0, n1),
        mean_availability=(means["mean_availability_0"], means["mean_availability_1"]),
        availability_fraction=(means["availability_fraction_0"], means["availability_fraction_1"]),
        booking_rate=(means["booking_rate_0"], means["booking_rate_1"]),
        scaled_demand=(means["scaled_demand_0"], means["scaled_demand_1"]),
        naive_estimator_hat=est,
        ci_halfwidth=headline,
        ci=ci,
        replication_count=len(reps),
        replications=reps,
    )


def estimate_naive(cfg: SimConfig, threads: int = 1) -> SimOutcome:
    """Simulated finite-difference naive profit estimator (LR or CR design)."""
    if cfg.design == "global":
        raise ValueError("the naive estimator needs an LR or CR design")
    return simulate(cfg, threads)


def mean_field_prediction(cfg: SimConfig) -> dict[str, float | None]:
    """Mean-field counterparts of the simulated quantities."""
    prm = cfg.params
    if cfg.design == "global":
        s = steady_state(prm, cfg.p0).s_star
        return {
            "availability_fraction_0": s / prm.rho,
            "scaled_demand_0": (prm.rho - s) * prm.tau,
            "naive_estimator": None,
        }
    q = cfg.q
    if cfg.design == "lr":
        q = cfg.group_sizes()[1] / cfg.n_listings
        st = lr_steady_state(prm, q, cfg.p0, cfg.p1)
        d0, d1 = lr_demands(prm, q, cfg.p0, cfg.p1)
        out = {
            "availability_fraction_0": st.s0_star / ((1 - q) * prm.rho),
            "availability_fraction_1": st.s1_star / (q * prm.rho),
        }
    else:
        st = cr_steady_state(prm, q, cfg.p0, cfg.p1)
        d0, d1 = cr_demands(prm, q, cfg.p0, cfg.p1)
        out = {"availability_fraction_0": st.s_star / prm.rho}
    out.update(scaled_demand_0=d0, scaled_demand_1=d1, naive_estimator=finite_delta_estimator(cfg, d0, d1))
    return out


def global_stationary_mean(n_listings: int, params: MarketParams, p: float) -> float:
    """Exact stationary mean of the available fraction for the finite global market.

    The available count is a birth-death chain: a listing frees at rate
    ``tau * (N - k)`` and a booking removes one at rate
    ``arrivals * book_prob(k * rho / N)``. Detailed balance gives the
    stationary law in closed form.
    """
    n = n_listings
    unit = params.rho / n
    v = params.valuation.v(p)
    arrivals = params.lam / unit
    k = np.arange(n + 1, dtype=float)
    logw = np.zeros(n + 1)
    for j in range(n):
        up = params.tau * (n - j)
        down = arrivals * book_prob((j + 1) * unit, v, params.eps)
        logw[j + 1] = logw[j] + math.log(up) - math.log(down)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    return float((w * k).sum() / n)
