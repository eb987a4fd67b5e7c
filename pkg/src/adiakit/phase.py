"""Phase-space model: points, systems, Poisson brackets and Hamiltonian fields.

Coordinate layout
-----------------
The fast block is ordered ``(y_1..y_r, x_1..x_r)`` and the slow block
``(p_1..p_k, q_1..q_k)``; flattened vectors use the block order
``(y.., x.., p.., q..)``. All vector-valued operations below follow these
offsets.

Oracles
-------
Scalar observables are callables ``f(fast, slow)`` where ``fast`` and ``slow``
are sequences of kernel scalars (floats, numpy arrays for batched points, or
:class:`~adiakit.kernel.Dual` numbers). Writing every oracle against the
kernel keeps a single source of truth for plain, batched and differentiated
evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernel as sk
from .errors import DomainError, NumericalError

__all__ = [
    "PhasePoint",
    "Box",
    "SlowFastSystem",
    "DiffEngine",
    "grad_fast",
    "grad_slow",
    "grad_full",
    "bracket0",
    "bracket1",
    "field_fast",
    "field_slow",
    "field_full",
]

#: central-difference base step, h = FD_BASE_STEP * max(1, |coordinate|)
FD_BASE_STEP = float(np.finfo(float).eps ** (1.0 / 3.0))


@dataclass(frozen=True)
class PhasePoint:
    """Immutable state: fast coordinates ``(y, x)`` and slow ``(p, q)``."""

    fast: np.ndarray
    slow: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "fast", np.atleast_1d(np.asarray(self.fast, dtype=float)))
        object.__setattr__(self, "slow", np.atleast_1d(np.asarray(self.slow, dtype=float)))
        if self.fast.ndim != 1 or self.slow.ndim != 1:
            raise ValueError("PhasePoint blocks must be one-dimensional")
        if self.fast.size % 2 or self.slow.size % 2:
            raise ValueError("fast and slow blocks must have even length")
        if not (np.all(np.isfinite(self.fast)) and np.all(np.isfinite(self.slow))):
            raise NumericalError("PhasePoint coordinates must be finite")

    def __eq__(self, other):
        if not isinstance(other, PhasePoint):
            return NotImplemented
        return (np.array_equal(self.fast, other.fast)
                and np.array_equal(self.slow, other.slow))

    def __hash__(self):
        return hash((self.fast.tobytes(), self.slow.tobytes()))

    @property
    def coords(self) -> np.ndarray:
        """Flat vector in block order (y.., x.., p.., q..)."""
        return np.concatenate([self.fast, self.slow])

    @classmethod
    def from_coords(cls, coords: Sequence[float], r: int, k: int) -> "PhasePoint":
        coords = np.asarray(coords, dtype=float)
        if coords.shape != (2 * r + 2 * k,):
            raise ValueError(f"expected {2 * r + 2 * k} coordinates, got {coords.shape}")
        return cls(coords[: 2 * r], coords[2 * r :])

    def state(self):
        """Kernel-state view: (list of fast scalars, list of slow scalars)."""
        return list(self.fast), list(self.slow)

    def replace(self, fast=None, slow=None) -> "PhasePoint":
        return PhasePoint(
            self.fast if fast is None else fast,
            self.slow if slow is None else slow,
        )


@dataclass(frozen=True)
class Box:
    """Per-coordinate validity box over the flat (y.., x.., p.., q..) layout."""

    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "low", np.asarray(self.low, dtype=float))
        object.__setattr__(self, "high", np.asarray(self.high, dtype=float))
        if self.low.shape != self.high.shape:
            raise ValueError("box bounds must have matching shapes")

    @classmethod
    def unbounded(cls, dim: int) -> "Box":
        return cls(np.full(dim, -np.inf), np.full(dim, np.inf))

    def contains(self, coords: np.ndarray) -> bool:
        coords = np.asarray(coords, dtype=float)
        return bool(np.all(coords >= self.low) and np.all(coords <= self.high))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Uniform points from the box (finite bounds required)."""
        if not (np.all(np.isfinite(self.low)) and np.all(np.isfinite(self.high))):
            raise ValueError("cannot sample from an unbounded box")
        return rng.uniform(self.low, self.high, size=(size, self.low.size))


@dataclass(frozen=True)
class SlowFastSystem:
    """Problem description: dimensions, oracles and validity region.

    ``H``, ``omega`` and ``J`` are kernel-generic scalar oracles
    ``f(fast, slow)``. ``fast_flow``, when provided, is the analytic
    unit-frequency flow of the fast dynamics: ``fast_flow(t, fast, slow)``
    returns the fast block advanced by phase ``t`` (slow block frozen), and
    must itself be kernel-generic so it can be differentiated by dual lifting.
    """

    r: int
    k: int
    H: Callable
    omega: Callable
    J: Optional[Callable] = None
    fast_flow: Optional[Callable] = None
    domain: Optional[Box] = None
    name: str = ""

    @property
    def dim(self) -> int:
        return 2 * self.r + 2 * self.k

    def point(self, coords: Sequence[float]) -> PhasePoint:
        return PhasePoint.from_coords(coords, self.r, self.k)

    def require_in_domain(self, m: PhasePoint) -> None:
        if self.domain is not None and not self.domain.contains(m.coords):
            raise DomainError(f"point {m.coords} lies outside the system domain")


@dataclass(frozen=True)
class DiffEngine:
    """Differentiation backend for all gradients.

    ``dual`` lifts one coordinate at a time to a dual number (exact to
    rounding); ``fd`` uses central differences with step
    ``fd_step * max(1, |coordinate|)`` and exists for oracles that cannot be
    dual-lifted (e.g. quadrature-defined quantities).
    """

    mode: str = "dual"
    fd_step: float = FD_BASE_STEP

    def __post_init__(self):
        if self.mode not in ("dual", "fd"):
            raise ValueError(f"unknown differentiation mode {self.mode!r}")
        if self.mode == "fd" and not self.fd_step > 0.0:
            raise ValueError("fd_step must be positive in fd mode")

    def partials(self, f: Callable, fast, slow, block: str):
        """List of partial derivatives of ``f`` along one coordinate block."""
        fast = list(fast)
        slow = list(slow)
        coords = fast if block == "fast" else slow
        out = []
        for i in range(len(coords)):
            if self.mode == "dual":
                out.append(_dual_partial(f, fast, slow, block, i))
            else:
                out.append(_fd_partial(f, fast, slow, block, i, self.fd_step))
        return out


DEFAULT_ENGINE = DiffEngine()


def _call_shifted(f, fast, slow, block, i, xi):
    if block == "fast":
        shifted = list(fast)
        shifted[i] = xi
        return f(shifted, slow)
    shifted = list(slow)
    shifted[i] = xi
    return f(fast, shifted)


def _dual_partial(f, fast, slow, block, i):
    coords = fast if block == "fast" else slow
    tag = sk.fresh_tag()
    out = _call_shifted(f, fast, slow, block, i, sk.Dual(coords[i], 1.0, tag))
    return sk.extract_partial(out, tag)


def _fd_partial(f, fast, slow, block, i, base_step):
    coords = fast if block == "fast" else slow
    xi = coords[i]
    h = base_step * np.maximum(1.0, np.abs(sk.value(xi)))
    hi = _call_shifted(f, fast, slow, block, i, xi + h)
    lo = _call_shifted(f, fast, slow, block, i, xi - h)
    return (hi - lo) / (2.0 * h)


def _stack(parts):
    arrays = np.broadcast_arrays(*[np.asarray(p, dtype=float) for p in parts])
    return np.stack(arrays, axis=-1)


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{what} produced a non-finite result")
    return arr


def grad_fast(system: SlowFastSystem, f: Callable, m: PhasePoint,
              engine: DiffEngine = DEFAULT_ENGINE) -> np.ndarray:
    """Fast-block gradient (∂f/∂y_1..y_r, ∂f/∂x_1..x_r) at ``m``."""
    system.require_in_domain(m)
    fast, slow = m.state()
    return _check_finite(_stack(engine.partials(f, fast, slow, "fast")), "grad_fast")


def grad_slow(system: SlowFastSystem, f: Callable, m: PhasePoint,
              engine: DiffEngine = DEFAULT_ENGINE) -> np.ndarray:
    """Slow-block gradient (∂f/∂p_1..p_k, ∂f/∂q_1..q_k) at ``m``."""
    system.require_in_domain(m)
    fast, slow = m.state()
    return _check_finite(_stack(engine.partials(f, fast, slow, "slow")), "grad_slow")


def grad_full(system: SlowFastSystem, f: Callable, m: PhasePoint,
              engine: DiffEngine = DEFAULT_ENGINE) -> np.ndarray:
    """Gradient over all 2r + 2k coordinates in flat layout order."""
    system.require_in_domain(m)
    fast, slow = m.state()
    parts = engine.partials(f, fast, slow, "fast") + engine.partials(f, fast, slow, "slow")
    return _check_finite(_stack(parts), "grad_full")


def _bracket(df: np.ndarray, dg: np.ndarray, n: int):
    # Canonical pairing over a block split as (momenta, positions).
    lead = df[..., :n] * dg[..., n:] - df[..., n:] * dg[..., :n]
    return lead.sum(axis=-1)


def bracket0(system: SlowFastSystem, f: Callable, g: Callable, m: PhasePoint,
             engine: DiffEngine = DEFAULT_ENGINE) -> float:
    """Fast Poisson bracket Σ_i (∂f/∂y_i ∂g/∂x_i − ∂f/∂x_i ∂g/∂y_i)."""
    df = grad_fast(system, f, m, engine)
    dg = grad_fast(system, g, m, engine)
    return float(_check_finite(_bracket(df, dg, system.r), "bracket0"))


def bracket1(system: SlowFastSystem, f: Callable, g: Callable, m: PhasePoint,
             engine: DiffEngine = DEFAULT_ENGINE) -> float:
    """Slow Poisson bracket Σ_i (∂f/∂p_i ∂g/∂q_i − ∂f/∂q_i ∂g/∂p_i)."""
    df = grad_slow(system, f, m, engine)
    dg = grad_slow(system, g, m, engine)
    return float(_check_finite(_bracket(df, dg, system.k), "bracket1"))


def field_fast(system: SlowFastSystem, m: PhasePoint,
               engine: DiffEngine = DEFAULT_ENGINE) -> np.ndarray:
    """Unperturbed Hamiltonian velocity (ẏ, ẋ) = (−∂H/∂x, ∂H/∂y)."""
    g = grad_fast(system, system.H, m, engine)
    r = system.r
    return np.concatenate([-g[..., r:], g[..., :r]], axis=-1)


def field_slow(system: SlowFastSystem, m: PhasePoint,
               engine: DiffEngine = DEFAULT_ENGINE) -> np.ndarray:
    """Perturbation velocity (ṗ, q̇) = (−∂H/∂q, ∂H/∂p), without the ε factor."""
    g = grad_slow(system, system.H, m, engine)
    k = system.k
    return np.concatenate([-g[..., k:], g[..., :k]], axis=-1)


def field_full(system: SlowFastSystem, m: PhasePoint, eps: float,
               engine: DiffEngine = DEFAULT_ENGINE) -> np.ndarray:
    """Full vector field: fast block plus ε times the slow block."""
    return np.concatenate(
        [field_fast(system, m, engine), eps * field_slow(system, m, engine)],
        axis=-1,
    )


# ---------------------------------------------------------------------------
# Kernel-state helpers shared by the quadrature pipeline. States are pairs of
# coordinate lists whose entries may be arrays (batched points) or duals.
# ---------------------------------------------------------------------------

def state_partials(f, fast, slow, block, engine: DiffEngine = DEFAULT_ENGINE):
    """Block partials of ``f`` on a raw kernel state (no domain checks)."""
    return engine.partials(f, fast, slow, block)


def state_bracket1(system, f, g, fast, slow, engine: DiffEngine = DEFAULT_ENGINE):
    """Slow bracket of two oracles on a raw kernel state (batch friendly)."""
    df = engine.partials(f, fast, slow, "slow")
    dg = engine.partials(g, fast, slow, "slow")
    k = system.k
    total = 0.0
    for i in range(k):
        total = total + df[i] * dg[k + i] - df[k + i] * dg[i]
    return total
