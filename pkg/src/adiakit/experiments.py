"""Drift measurement over horizons T ~ 1/ε, order fitting and reports.

For each ε on a descending grid the full system is integrated to T = c/ε and
the truncated invariant series of each order is sampled along the trajectory;
the reported drift is the max-norm deviation from the initial value (endpoint
values alias oscillatory components, the sup matches the order claim being
tested). Fitted log-log slopes against ε are the quantitative check that an
order-k truncation drifts like ε^k over these horizons.

Reports serialize deterministically: identical configurations produce
byte-identical CSV/JSON files, also under multi-process sweeps.
"""

from __future__ import annotations

import json
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import kernel as sk
from .circle import CircleAction
from .errors import SlopeUndefined
from .fixtures import get_fixture
from .integrators import IntegratorConfig, integrate
from .invariants import (DEFAULT_QUAD, QuadratureConfig, _f1_state, _f2_state,
                         f2 as f2_point, ty3_residual)
from .phase import DEFAULT_ENGINE, PhasePoint

__all__ = [
    "DriftConfig",
    "DriftCell",
    "SlopeFit",
    "DriftReport",
    "VariantReport",
    "measure_drift",
    "order_sweep",
    "compare_variants",
    "emit",
    "fit_slope",
]

SLOPE_WINDOWS = {0: (0.7, 1.3), 1: (1.7, 2.3), 2: (1.7, np.inf)}
F2_CHUNK = 64  # trajectory samples per nested-quadrature batch


@dataclass(frozen=True)
class DriftConfig:
    """Fully describes one drift study; picklable for worker processes."""

    fixture: str
    params: dict = field(default_factory=dict)
    initial: Optional[tuple] = None  # flat (y.., x.., p.., q..); fixture default if None
    eps_grid: tuple = (0.2, 0.1, 0.05, 0.025, 0.0125)
    horizon_c: float = 1.0
    samples: int = 512
    integrator: IntegratorConfig = IntegratorConfig(method="rk45", rtol=1e-11, atol=1e-13)
    orders: tuple = (0, 1, 2)
    variant: str = "auto"
    outer_nodes: int = 64
    inner_nodes: int = 32
    flow_mode: str = "analytic"
    workers: int = 1

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_grid)
        if len(set(eps)) != len(eps):
            raise ValueError("eps grid values must be distinct")
        if any(not 0.0 < e < 1.0 for e in eps):
            raise ValueError("eps grid values must lie in (0, 1)")
        object.__setattr__(self, "eps_grid", tuple(sorted(eps, reverse=True)))
        if self.samples < 2:
            raise ValueError("need at least two samples per trajectory")
        if self.variant not in ("auto", "ai3", "ty3"):
            raise ValueError(f"unknown F2 variant {self.variant!r}")

    @property
    def quad(self) -> QuadratureConfig:
        return QuadratureConfig(outer_nodes=self.outer_nodes, inner_nodes=self.inner_nodes)

    def build(self):
        fixture = get_fixture(self.fixture, **self.params)
        action = CircleAction(fixture.system, flow_mode=self.flow_mode,
                              nodes=self.outer_nodes)
        initial = (fixture.initial if self.initial is None
                   else fixture.system.point(self.initial))
        return fixture, action, initial


@dataclass(frozen=True)
class DriftCell:
    eps: float
    order: int
    drift: float
    h_drift: float
    valid: bool
    horizon: float
    samples: int


@dataclass(frozen=True)
class SlopeFit:
    order: int
    slope: float
    residual: float
    n_points: int
    excluded_eps: tuple = ()

    @property
    def in_window(self) -> bool:
        lo, hi = SLOPE_WINDOWS.get(self.order, (-np.inf, np.inf))
        return np.isfinite(self.slope) and lo <= self.slope <= hi


# ---------------------------------------------------------------------------
# trajectory machinery
# ---------------------------------------------------------------------------

def _full_field(system, eps: float):
    """Vector field of the perturbed system as a plain (t, y) -> dy callable.

    One multidual evaluation of H per call delivers the whole gradient.
    """
    r, k = system.r, system.k
    dim = 2 * r + 2 * k
    basis = np.eye(dim)
    H = system.H

    def rhs(t, y):
        tag = sk.fresh_tag()
        fast = [sk.Dual(y[i], basis[i], tag) for i in range(2 * r)]
        slow = [sk.Dual(y[2 * r + i], basis[2 * r + i], tag) for i in range(2 * k)]
        grad = sk.extract_partial(H(fast, slow), tag)
        out = np.empty(dim)
        out[:r] = -grad[r:2 * r]
        out[r:2 * r] = grad[:r]
        out[2 * r:2 * r + k] = -eps * grad[2 * r + k:]
        out[2 * r + k:] = eps * grad[2 * r:2 * r + k]
        return out

    return rhs


def _trajectory(system, initial: PhasePoint, eps: float, horizon_c: float,
                samples: int, integrator: IntegratorConfig):
    t_end = horizon_c / eps
    t_eval = np.linspace(0.0, t_end, samples)
    rhs = _full_field(system, eps)
    traj = integrate(rhs, initial.coords, t_end, integrator, t_eval=t_eval)
    return traj


def _series_terms(system, action, coords: np.ndarray, max_order: int,
                  variant: str, quad: QuadratureConfig):
    """(J, F1, F2) along a coordinate batch; higher orders cost more."""
    r, k = system.r, system.k
    fast = [coords[:, i] for i in range(2 * r)]
    slow = [coords[:, 2 * r + i] for i in range(2 * k)]
    j_vals = np.broadcast_to(
        np.asarray(sk.value(system.J(fast, slow)), dtype=float), coords.shape[:1]).copy()
    f1_vals = np.zeros_like(j_vals)
    f2_vals = np.zeros_like(j_vals)
    if max_order >= 1:
        f1_vals = _f1_state(system, action, fast, slow, quad.outer_nodes, DEFAULT_ENGINE)
    if max_order >= 2:
        for start in range(0, coords.shape[0], F2_CHUNK):
            sl = slice(start, min(start + F2_CHUNK, coords.shape[0]))
            f2_vals[sl] = _f2_state(system, action,
                                    [c[sl] for c in fast], [c[sl] for c in slow],
                                    variant, quad, DEFAULT_ENGINE, warn_noise=False)
    return j_vals, f1_vals, f2_vals


def _drift_from_terms(terms, eps: float, order: int) -> float:
    j_vals, f1_vals, f2_vals = terms
    series = j_vals.copy()
    if order >= 1:
        series += eps * f1_vals
    if order >= 2:
        series += 0.5 * eps * eps * f2_vals
    return float(np.max(np.abs(series - series[0])))


def _h_drift(system, coords: np.ndarray) -> float:
    r = system.r
    fast = [coords[:, i] for i in range(2 * r)]
    slow = [coords[:, 2 * r + i] for i in range(2 * system.k)]
    h_vals = np.asarray(sk.value(system.H(fast, slow)), dtype=float)
    return float(np.max(np.abs(h_vals - h_vals[0])))


def measure_drift(config: DriftConfig, eps: float, order: int,
                  variant: Optional[str] = None) -> DriftCell:
    """Max-norm drift of the order-k series along one trajectory at this ε."""
    fixture, action, initial = config.build()
    system = fixture.system
    var = variant or (config.variant if config.variant != "auto" else "ai3")
    traj = _trajectory(system, initial, eps, config.horizon_c,
                       config.samples, config.integrator)
    terms = _series_terms(system, action, traj.states, order, var, config.quad)
    drift = _drift_from_terms(terms, eps, order)
    h_drift = _h_drift(system, traj.states)
    valid = not (drift > 0.0 and h_drift >= 0.1 * drift)
    if not valid:
        warnings.warn(
            f"integrator energy drift {h_drift:.3e} exceeds 10% of invariant "
            f"drift {drift:.3e} at eps={eps}; measurement invalid", stacklevel=2)
    return DriftCell(eps=float(eps), order=int(order), drift=drift,
                     h_drift=h_drift, valid=valid,
                     horizon=config.horizon_c / eps, samples=config.samples)


def _sweep_job(payload: dict) -> dict:
    """One ε of a sweep: integrate once, evaluate every requested order."""
    config: DriftConfig = payload["config"]
    eps: float = payload["eps"]
    variants: tuple = payload["variants"]
    fixture, action, initial = config.build()
    system = fixture.system
    traj = _trajectory(system, initial, eps, config.horizon_c,
                       config.samples, config.integrator)
    h_drift = _h_drift(system, traj.states)
    out = {"eps": eps, "h_drift": h_drift, "orders": {}}
    max_order = max(config.orders)
    for variant in variants:
        terms = _series_terms(system, action, traj.states, max_order,
                              variant, config.quad)
        out["orders"][variant] = {
            order: _drift_from_terms(terms, eps, order) for order in config.orders
        }
    return out


def fit_slope(eps_values, drifts, order: int) -> SlopeFit:
    """Least-squares log-log slope with the pre-asymptotic exclusion rule.

    The largest ε is dropped when its fit residual exceeds three times the
    largest residual of the remaining points; the exclusion is recorded.
    """
    eps_values = np.asarray(eps_values, dtype=float)
    drifts = np.asarray(drifts, dtype=float)
    if eps_values.size < 2:
        raise SlopeUndefined("slope fit needs at least two distinct eps values")
    if np.any(drifts <= 0.0):
        return SlopeFit(order=order, slope=float("nan"), residual=float("nan"),
                        n_points=int(eps_values.size))

    def fit(idx):
        le, ld = np.log(eps_values[idx]), np.log(drifts[idx])
        slope, intercept = np.polyfit(le, ld, 1)
        resid = np.abs(ld - (slope * le + intercept))
        return slope, resid

    idx_all = np.arange(eps_values.size)
    slope, resid = fit(idx_all)
    excluded = ()
    if eps_values.size >= 4:
        i_big = int(np.argmax(eps_values))
        others = np.delete(idx_all, i_big)
        if resid[i_big] > 3.0 * np.max(resid[np.arange(resid.size) != i_big]):
            slope, resid = fit(others)
            excluded = (float(eps_values[i_big]),)
            idx_all = others
    return SlopeFit(order=order, slope=float(slope), residual=float(np.max(resid)),
                    n_points=int(idx_all.size), excluded_eps=excluded)


@dataclass
class DriftReport:
    """Per-ε drift maxima for each tracked order plus fitted slopes."""

    fixture: str
    params: dict
    initial: tuple
    variant: str
    eps_grid: tuple
    orders: tuple
    cells: list
    slopes: dict
    metadata: dict
    wall_time_s: float = 0.0  # informational only; never serialized

    def cell(self, eps: float, order: int) -> DriftCell:
        for c in self.cells:
            if c.eps == eps and c.order == order:
                return c
        raise KeyError((eps, order))

    def slope_contract_ok(self) -> bool:
        return all(self.slopes[o].in_window for o in self.orders if o in self.slopes)

    def monotone_ok(self, n_smallest: int = 3, strict: bool = True) -> bool:
        """drift_2 < drift_1 < drift_0 at the n smallest ε values."""
        if not {0, 1, 2} <= set(self.orders):
            return True
        eps_small = sorted(self.eps_grid)[:n_smallest]
        for eps in eps_small:
            d0, d1, d2 = (self.cell(eps, o).drift for o in (0, 1, 2))
            if strict and not (d2 < d1 < d0):
                return False
            if not strict and not (d2 <= d1 <= d0):
                return False
        return True

    def to_json_dict(self) -> dict:
        return {
            "fixture": self.fixture,
            "params": dict(sorted(self.params.items())),
            "initial": list(self.initial),
            "variant": self.variant,
            "eps_grid": list(self.eps_grid),
            "orders": list(self.orders),
            "cells": [asdict(c) for c in self.cells],
            "slopes": {str(o): asdict(s) for o, s in sorted(self.slopes.items())},
            "metadata": self.metadata,
        }

    def csv_rows(self):
        # fixed output order: eps descending, order ascending
        yield "eps,order,drift,horizon,samples"
        for cell in self.cells:
            yield (f"{cell.eps!r},{cell.order!r},{cell.drift!r},"
                   f"{cell.horizon!r},{cell.samples!r}")


def _resolve_variant(config: DriftConfig):
    if config.variant != "auto":
        return config.variant, None
    report = compare_variants(replace(config, variant="auto"), include_drift=False)
    if report.default_variant is None:
        raise SlopeUndefined("no F2 variant passes adjudication")  # pragma: no cover
    return report.default_variant, report


def order_sweep(config: DriftConfig) -> DriftReport:
    """Full ε×order drift grid with slope fits; deterministic given config."""
    started = time.perf_counter()
    if len(config.eps_grid) < 2:
        raise SlopeUndefined("slope fits need at least two eps grid values")
    variant, _ = _resolve_variant(config)
    payloads = [{"config": replace(config, variant=variant), "eps": eps,
                 "variants": (variant,)} for eps in config.eps_grid]
    results = _run_jobs(payloads, config.workers)

    cells = []
    for res in results:  # submission order == eps descending
        eps = res["eps"]
        for order in sorted(config.orders):
            drift = res["orders"][variant][order]
            valid = not (drift > 0.0 and res["h_drift"] >= 0.1 * drift)
            cells.append(DriftCell(eps=eps, order=order, drift=drift,
                                   h_drift=res["h_drift"], valid=valid,
                                   horizon=config.horizon_c / eps,
                                   samples=config.samples))

    slopes = {}
    for order in sorted(config.orders):
        eps_vals = [c.eps for c in cells if c.order == order]
        drifts = [c.drift for c in cells if c.order == order]
        slopes[order] = fit_slope(eps_vals, drifts, order)

    fixture, _, initial = config.build()
    report = DriftReport(
        fixture=config.fixture,
        params=fixture.params,
        initial=tuple(initial.coords.tolist()),
        variant=variant,
        eps_grid=config.eps_grid,
        orders=tuple(sorted(config.orders)),
        cells=cells,
        slopes=slopes,
        metadata={
            "integrator": asdict(config.integrator),
            "outer_nodes": config.outer_nodes,
            "inner_nodes": config.inner_nodes,
            "flow_mode": config.flow_mode,
            "horizon_c": config.horizon_c,
            "samples": config.samples,
        },
        wall_time_s=time.perf_counter() - started,
    )
    return report


def _run_jobs(payloads, workers: int):
    if workers <= 1 or len(payloads) <= 1:
        return [_sweep_job(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=min(workers, len(payloads))) as pool:
        return list(pool.map(_sweep_job, payloads))


@dataclass
class VariantReport:
    """Side-by-side adjudication of the second-order variants."""

    fixture: str
    point: tuple
    entries: dict  # variant -> {f2, closed_f2, closed_diff, ty3_residual, passes, drift2}
    default_variant: Optional[str]
    reason: str

    def to_json_dict(self) -> dict:
        return {
            "fixture": self.fixture,
            "point": list(self.point),
            "entries": {k: dict(v) for k, v in sorted(self.entries.items())},
            "default_variant": self.default_variant,
            "reason": self.reason,
        }


def compare_variants(config: DriftConfig, tol: float = 1e-4,
                     include_drift: bool = True) -> VariantReport:
    """Evaluate both F₂ variants and declare the default.

    A variant passes when its second-order homological residual stays below
    ``tol`` at the initial point and, when the fixture carries a closed-form
    second correction, when it reproduces that value to ``tol``. Exactly one
    passer becomes the default; ties fall back to ``"ai3"`` (the variants are
    indistinguishable on decoupled systems); no passer leaves the default
    unset.
    """
    fixture, action, initial = config.build()
    system = fixture.system
    quad = config.quad
    entries = {}
    for variant in ("ai3", "ty3"):
        f2_val = f2_point(system, action, initial, variant, quad)
        closed_val = None
        closed_diff = None
        if fixture.closed_f2 is not None:
            closed_val = float(sk.value(fixture.closed_f2(*initial.state())))
            closed_diff = abs(f2_val - closed_val)
        residual = ty3_residual(system, action, initial, variant, quad)
        passes = residual <= tol and (closed_diff is None or closed_diff <= tol)
        entries[variant] = {
            "f2": f2_val,
            "closed_f2": closed_val,
            "closed_diff": closed_diff,
            "ty3_residual": residual,
            "passes": bool(passes),
            "drift2": {},
        }

    if include_drift:
        payloads = [{"config": config, "eps": eps, "variants": ("ai3", "ty3")}
                    for eps in config.eps_grid]
        results = _run_jobs(payloads, config.workers)
        max_order = max(config.orders)
        for res in results:
            for variant in ("ai3", "ty3"):
                entries[variant]["drift2"][repr(res["eps"])] = \
                    res["orders"][variant][max_order]

    passers = [v for v in ("ai3", "ty3") if entries[v]["passes"]]
    if len(passers) == 1:
        default, reason = passers[0], "unique variant satisfying the adjudication"
    elif len(passers) == 2:
        default, reason = "ai3", "variants indistinguishable here; ai3 kept"
    else:
        default, reason = None, "NoVariantPasses"
    return VariantReport(fixture=config.fixture,
                         point=tuple(initial.coords.tolist()),
                         entries=entries, default_variant=default, reason=reason)


def emit(report, fmt: str, path) -> str:
    """Write a report to ``path`` as ``csv`` or ``json``; bytes are
    deterministic for a given configuration."""
    path = str(path)
    if fmt == "csv":
        if not hasattr(report, "csv_rows"):
            raise ValueError("this report has no CSV form")
        text = "\n".join(report.csv_rows()) + "\n"
    elif fmt == "json":
        text = json.dumps(report.to_json_dict(), sort_keys=True, indent=2,
                          allow_nan=True) + "\n"
    else:
        raise ValueError(f"unknown format {fmt!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return path
