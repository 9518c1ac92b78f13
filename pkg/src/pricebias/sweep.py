"""Grid sweeps over (price, market balance) with CSV output.

Each cell carries the market quantities, the LR/CR profit biases and
estimators, the two sign conditions per design and the region class. Cells
are computed in parallel but gathered in grid order, so the CSV bytes do
not depend on the thread count.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np

from . import meanfield as mf
from .errors import PriceBiasError
from .pricing import region_class

COLUMNS = (
    "p",
    "lambda",
    "beta",
    "s_star",
    "demand",
    "gte_pi",
    "bias_lr",
    "bias_cr",
    "est_lr",
    "est_cr",
    "cond_a",
    "cond_b_lr",
    "cond_b_cr",
    "class_lr",
    "class_cr",
    "bias_lr_per_lambda",
    "bias_lr_per_tau",
    "bias_cr_per_lambda",
    "bias_cr_per_tau",
    "status",
)

NA = "NA"
OUTPUTS = ("gte", "bias", "estimator", "region", "elasticities")


@dataclass(frozen=True)
class Axis:
    lo: float
    hi: float
    n: int
    name: str = "p"
    scale: Literal["linear", "log"] = "linear"

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"axis {self.name} needs n >= 2")
        if not self.lo < self.hi:
            raise ValueError(f"axis {self.name} needs lo < hi")
        if self.scale == "log" and not self.lo > 0:
            raise ValueError(f"log-scaled axis {self.name} needs lo > 0")
        if self.scale not in ("linear", "log"):
            raise ValueError(f"unknown axis scale {self.scale!r}")

    def values(self) -> np.ndarray:
        if self.scale == "log":
            return np.logspace(math.log10(self.lo), math.log10(self.hi), self.n)
        return np.linspace(self.lo, self.hi, self.n)


@dataclass(frozen=True)
class SweepSpec:
    params: mf.MarketParams
    axis1: Axis
    axis2: Axis
    design: Literal["lr", "cr", "both"] = "both"
    q: float = 0.5
    outputs: tuple[str, ...] = OUTPUTS

    def __post_init__(self):
        if self.axis1.name != "p":
            raise ValueError("axis1 must be the price axis 'p'")
        if self.axis2.name not in ("lambda", "beta"):
            raise ValueError("axis2 must be 'lambda' or 'beta'")
        if self.design not in ("lr", "cr", "both"):
            raise ValueError(f"unknown design {self.design!r}")
        if not 0.0 < self.q < 1.0:
            raise ValueError("q must lie in (0, 1)")
        bad = set(self.outputs) - set(OUTPUTS)
        if bad:
            raise ValueError(f"unknown outputs {sorted(bad)}")

    @property
    def designs(self) -> tuple[str, ...]:
        return mf.DESIGNS if self.design == "both" else (self.design,)

    def lambdas(self) -> np.ndarray:
        v = self.axis2.values()
        return v * self.params.tau if self.axis2.name == "beta" else v


@dataclass
class Cell:
    p: float
    lam: float
    beta: float
    values: dict = field(default_factory=dict)
    status: str = "ok"
    elasticity: dict = field(default_factory=dict)


def evaluate_cell(params: mf.MarketParams, p: float, designs: Sequence[str], q: float) -> Cell:
    cell = Cell(p=float(p), lam=params.lam, beta=params.beta)
    try:
        st = mf.steady_state(params, p)
        cell.values["s_star"] = st.s_star
        gte = None
        for design in designs:
            c = mf.classify_point(params, design, p, q)
            gte = c.gte_pi
            cell.values[f"bias_{design}"] = c.bias_pi
            cell.values[f"est_{design}"] = c.estimator_pi
            cell.values[f"cond_b_{design}"] = c.condition_b
            cell.values[f"class_{design}"] = region_class(c.condition_a, c.condition_b)
            cell.values[f"bias_{design}_per_lambda"] = c.bias_pi / params.lam
            cell.values[f"bias_{design}_per_tau"] = c.bias_pi / params.tau
            cell.values["demand"] = c.demand
            cell.values["cond_a"] = c.condition_a
            cell.elasticity[design] = (c.elasticity, c.experimental_elasticity)
        cell.values["gte_pi"] = gte
    except (PriceBiasError, ArithmeticError, ValueError) as exc:
        # keep the coordinates, drop the values
        cell.values = {}
        cell.elasticity = {}
        cell.status = f"error: {type(exc).__name__}: {exc}".replace("\n", " ")
    return cell


def run_sweep(spec: SweepSpec, threads: int = 1) -> list[Cell]:
    """All cells in row order: axis2 outer, axis1 inner."""
    prices = spec.axis1.values()
    lams = spec.lambdas()

    def row(lam: float) -> list[Cell]:
        prm = replace(spec.params, lam=float(lam))
        return [evaluate_cell(prm, float(p), spec.designs, spec.q) for p in prices]

    if threads <= 1:
        rows = [row(lam) for lam in lams]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(row, lams))
    return [c for r in rows for c in r]


def format_value(x) -> str:
    """CSV cell text: NA for missing, 1/0 for booleans, 12 significant digits for floats."""
    if x is None:
        return NA
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    return format(x, ".12g") if math.isfinite(x) else NA


def cell_row(cell: Cell) -> list[str]:
    base = {"p": cell.p, "lambda": cell.lam, "beta": cell.beta, "status": cell.status, **cell.values}
    return [format_value(base.get(col)) for col in COLUMNS]


def to_csv(cells: Sequence[Cell]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for c in cells:
        w.writerow(cell_row(c))
    return buf.getvalue()


def write_csv(cells: Sequence[Cell], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(to_csv(cells))


def _slices(spec: SweepSpec, cells: Sequence[Cell], design: str) -> list[dict]:
    """Per-axis2 summary of the change-of-sign cells as price intervals."""
    n1 = spec.axis1.n
    out = []
    for i in range(spec.axis2.n):
        row = cells[i * n1 : (i + 1) * n1]
        flags = [c.values.get(f"class_{design}") == "change_of_sign" for c in row]
        idx = [j for j, f in enumerate(flags) if f]
        runs = 0 if not idx else 1 + sum(1 for a, b in zip(idx, idx[1:]) if b != a + 1)
        out.append(
            {
                "lambda": row[0].lam,
                "beta": row[0].beta,
                "change_of_sign_cells": len(idx),
                "intervals": runs,
                "p_lo": row[idx[0]].p if idx else None,
                "p_hi": row[idx[-1]].p if idx else None,
            }
        )
    return out


def summarize(spec: SweepSpec, cells: Sequence[Cell]) -> dict:
    """JSON summary; ``spec.outputs`` selects which blocks are included."""
    ok = [c for c in cells if c.status == "ok"]
    out: dict = {"cells": len(cells), "failed_cells": len(cells) - len(ok), "designs": list(spec.designs)}

    def span(key):
        vals = [c.values[key] for c in ok if key in c.values]
        return {"min": min(vals), "max": max(vals)} if vals else None

    if "gte" in spec.outputs:
        out["gte_pi"] = span("gte_pi")
    for d in spec.designs:
        block = {}
        if "bias" in spec.outputs:
            block["bias_pi"] = span(f"bias_{d}")
        if "estimator" in spec.outputs:
            block["estimator_pi"] = span(f"est_{d}")
        if "region" in spec.outputs:
            classes = [c.values.get(f"class_{d}") for c in ok]
            block["class_counts"] = {k: classes.count(k) for k in ("change_of_sign", "cond_a_fails", "cond_b_fails", "both_fail")}
            block["slices"] = _slices(spec, cells, d)
        if "elasticities" in spec.outputs:
            e = [c.elasticity[d] for c in ok if d in c.elasticity]
            block["elasticity"] = {"min": min(x[0] for x in e), "max": max(x[0] for x in e)} if e else None
            block["experimental_elasticity"] = {"min": min(x[1] for x in e), "max": max(x[1] for x in e)} if e else None
        out[d] = block
    return out
