"""Volume-delay functions and the quantities Frank-Wolfe needs from them.

Every cost function exposes three things: the travel time ``c(x)``, its
derivative ``c'(x)`` and the integral ``int_0^x c(s) ds``.  The marginal cost
``c(x) + x c'(x)`` and its integral ``x c(x)`` follow from those.

The scalar dataclasses are convenient for tests and small computations; the
solver evaluates whole edge sets at once through :class:`CostTable`, which
shares the same kernels.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Sequence, Union

import numpy as np
from numba import njit

DEFAULT_ALPHA = 0.15
DEFAULT_BETA = 4
DEFAULT_LINEARIZE_AT = 5.0


class Transform(str, enum.Enum):
    """Which per-edge integrand the objective uses."""

    RAW = "raw"
    MARGINAL = "marginal"


def _bpr_kernel(x, phi, kappa, alpha, beta, threshold):
    """Value, slope and integral of a BPR curve, continued linearly past ``threshold``."""
    z = np.minimum(x, threshold)
    u = z / kappa
    ub = u**beta
    value = phi * (1.0 + alpha * ub)
    slope = phi * alpha * beta * u ** (beta - 1) / kappa
    integral = phi * (z + alpha * z * ub / (beta + 1))
    over = np.maximum(x - threshold, 0.0)
    integral = integral + value * over + 0.5 * slope * over * over
    value = value + slope * over
    return value, slope, integral


def _piecewise_kernel(x, phi, breakpoint, slope):
    over = np.maximum(x - breakpoint, 0.0)
    value = phi + slope * over
    # right-derivative at the breakpoint
    deriv = np.where(x >= breakpoint, slope, 0.0)
    integral = phi * x + 0.5 * slope * over * over
    return value, deriv, integral


class _Scalar:
    """Shared scalar API; subclasses implement ``_parts``."""

    def _parts(self, x: float):
        raise NotImplementedError

    def travel_time(self, x: float) -> float:
        return float(self._parts(x)[0])

    def derivative(self, x: float) -> float:
        return float(self._parts(x)[1])

    def integral(self, x: float) -> float:
        return float(self._parts(x)[2])

    def marginal(self, x: float) -> float:
        value, slope, _ = self._parts(x)
        return float(value + x * slope)


@dataclass(frozen=True)
class Bpr(_Scalar):
    """``free_flow * (1 + alpha * (x / capacity) ** beta)``.

    With ``linearize_at = t`` the curve is replaced beyond ``t * capacity`` by its
    tangent there, which keeps value and slope continuous.
    """

    free_flow: float
    capacity: float
    alpha: float = DEFAULT_ALPHA
    beta: int = DEFAULT_BETA
    linearize_at: float | None = None

    def __post_init__(self):
        if not self.free_flow > 0 or not self.capacity > 0:
            raise ValueError("BPR needs positive free-flow time and capacity")
        if self.alpha < 0 or int(self.beta) != self.beta or self.beta < 1:
            raise ValueError("BPR needs alpha >= 0 and integer beta >= 1")
        if self.linearize_at is not None and not self.linearize_at > 0:
            raise ValueError("linearize_at must be positive")

    @property
    def threshold(self) -> float:
        if self.linearize_at is None:
            return np.inf
        return self.linearize_at * self.capacity

    def _parts(self, x):
        return _bpr_kernel(x, self.free_flow, self.capacity, self.alpha, self.beta, self.threshold)


@dataclass(frozen=True)
class Constant(_Scalar):
    value: float

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("constant cost must be nonnegative")

    def _parts(self, x):
        return self.value, 0.0, self.value * x


@dataclass(frozen=True)
class PiecewiseAffine(_Scalar):
    """Flat at ``free_flow`` up to ``breakpoint``, then rising with ``slope``."""

    free_flow: float
    breakpoint: float
    slope: float

    def __post_init__(self):
        if self.free_flow < 0 or self.breakpoint < 0 or self.slope < 0:
            raise ValueError("piecewise-affine parameters must be nonnegative")

    def _parts(self, x):
        return _piecewise_kernel(x, self.free_flow, self.breakpoint, self.slope)


CostFunction = Union[Bpr, Constant, PiecewiseAffine]


@dataclass(frozen=True)
class Shifted(_Scalar):
    """View of ``fn`` evaluated at ``x + shift``.

    Integrals run over the endogenous flow only, from 0 to ``x``.
    """

    fn: CostFunction
    shift: float

    def _parts(self, x):
        value, slope, upper = self.fn._parts(x + self.shift)
        lower = self.fn._parts(self.shift)[2] if self.shift else 0.0
        return value, slope, upper - lower


def edge_travel_time(fn: _Scalar, flow: float) -> float:
    return fn.travel_time(flow)


def marginal_travel_time(fn: _Scalar, flow: float) -> float:
    return fn.marginal(flow)


def beckmann_term(fn: _Scalar, flow: float, transform: Transform = Transform.RAW) -> float:
    if Transform(transform) is Transform.MARGINAL:
        return flow * fn.travel_time(flow)
    return fn.integral(flow)


def shifted_cost(fn: CostFunction, exogenous: float) -> _Scalar:
    if exogenous < 0:
        raise ValueError("exogenous flow must be nonnegative")
    return Shifted(fn, float(exogenous))


def make_piecewise_affine_from_bpr(
    free_flow: float, capacity: float, alpha: float = DEFAULT_ALPHA, beta: int = DEFAULT_BETA
) -> PiecewiseAffine:
    """Two-piece stand-in for BPR: flat to capacity, then the secant to ``3 * capacity``."""
    if not free_flow > 0 or not capacity > 0:
        raise ValueError("free-flow time and capacity must be positive")
    at_three = Bpr(free_flow, capacity, alpha, beta).travel_time(3.0 * capacity)
    return PiecewiseAffine(free_flow, capacity, (at_three - free_flow) / (2.0 * capacity))


def exact(fn: CostFunction) -> CostFunction:
    """The same function with any BPR linearization removed."""
    if isinstance(fn, Bpr) and fn.linearize_at is not None:
        return replace(fn, linearize_at=None)
    return fn


def nominal_capacity(fn: CostFunction) -> float:
    """Capacity used to scale exogenous load; constants have none."""
    if isinstance(fn, Bpr):
        return fn.capacity
    if isinstance(fn, PiecewiseAffine):
        return fn.breakpoint
    return 0.0


_BPR, _CONSTANT, _PIECEWISE = 0, 1, 2


@njit(cache=True)
def _value_slope(kind, p0, p1, p2, alpha, beta, threshold, z):
    if kind == _BPR:
        zz = min(z, threshold)
        u = zz / p1
        value = p0 * (1.0 + alpha * u**beta)
        slope = p0 * alpha * beta * u ** (beta - 1.0) / p1
        if z > threshold:
            value += slope * (z - threshold)
        return value, slope
    if kind == _CONSTANT:
        return p0, 0.0
    if z >= p1:
        return p0 + p2 * (z - p1), p2
    return p0, 0.0


@njit(cache=True)
def _directional_slope(idx, kind, p0, p1, p2, alpha, beta, threshold, shift, x, d, marginal, a):
    total = 0.0
    for e in idx:
        xe = x[e] + a * d[e]
        value, slope = _value_slope(kind[e], p0[e], p1[e], p2[e], alpha[e], beta[e], threshold[e], xe + shift[e])
        g = value + xe * slope if marginal else value
        total += g * d[e]
    return total


@njit(cache=True)
def _bisect_step(idx, kind, p0, p1, p2, alpha, beta, threshold, shift, x, d, marginal, iterations):
    args = (idx, kind, p0, p1, p2, alpha, beta, threshold, shift, x, d, marginal)
    if _directional_slope(*args, 0.0) >= 0.0:
        return 0.0
    if _directional_slope(*args, 1.0) <= 0.0:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        g = _directional_slope(*args, mid)
        if g > 0.0:
            hi = mid
        elif g < 0.0:
            lo = mid
        else:
            return mid
    return 0.5 * (lo + hi)


class CostTable:
    """Struct-of-arrays form of a list of cost functions, with an optional shift."""

    def __init__(self, functions: Sequence[CostFunction], shift: np.ndarray | None = None):
        self.functions = tuple(functions)
        n = len(self.functions)
        self.kind = np.empty(n, dtype=np.int8)
        self.p0 = np.zeros(n)
        self.p1 = np.ones(n)
        self.p2 = np.zeros(n)
        self.alpha = np.zeros(n)
        self.beta = np.ones(n)
        self.threshold = np.full(n, np.inf)
        for e, fn in enumerate(self.functions):
            if isinstance(fn, Bpr):
                self.kind[e] = _BPR
                self.p0[e], self.p1[e] = fn.free_flow, fn.capacity
                self.alpha[e], self.beta[e] = fn.alpha, fn.beta
                self.threshold[e] = fn.threshold
            elif isinstance(fn, Constant):
                self.kind[e] = _CONSTANT
                self.p0[e] = fn.value
            elif isinstance(fn, PiecewiseAffine):
                self.kind[e] = _PIECEWISE
                self.p0[e], self.p1[e], self.p2[e] = fn.free_flow, fn.breakpoint, fn.slope
            else:
                raise TypeError(f"unsupported cost function {fn!r}")
        self._groups = [(k, np.flatnonzero(self.kind == k)) for k in (_BPR, _CONSTANT, _PIECEWISE)]
        self._groups = [(k, idx) for k, idx in self._groups if idx.size]
        if shift is None:
            self.shift = np.zeros(n)
        else:
            self.shift = np.asarray(shift, dtype=float).copy()
            if self.shift.shape != (n,) or (self.shift < 0).any():
                raise ValueError("shift must be a nonnegative per-edge vector")
        self._has_shift = bool(self.shift.any())
        self._base_integral = self._raw(self.shift)[2] if self._has_shift else None

    def __len__(self) -> int:
        return len(self.functions)

    def with_shift(self, shift: np.ndarray | None) -> "CostTable":
        return CostTable(self.functions, shift)

    def _raw(self, z: np.ndarray):
        value = np.empty_like(z)
        slope = np.empty_like(z)
        integral = np.empty_like(z)
        with np.errstate(over="ignore", invalid="ignore"):
            for kind, idx in self._groups:
                zi = z[idx]
                if kind == _BPR:
                    v, s, i = _bpr_kernel(
                        zi, self.p0[idx], self.p1[idx], self.alpha[idx], self.beta[idx], self.threshold[idx]
                    )
                elif kind == _CONSTANT:
                    v, s, i = self.p0[idx], 0.0, self.p0[idx] * zi
                else:
                    v, s, i = _piecewise_kernel(zi, self.p0[idx], self.p1[idx], self.p2[idx])
                value[idx], slope[idx], integral[idx] = v, s, i
        return value, slope, integral

    def evaluate(self, x: np.ndarray):
        """Return ``(c, c', int_0^x c)`` at endogenous flow ``x`` (shift applied)."""
        x = np.asarray(x, dtype=float)
        value, slope, integral = self._raw(x + self.shift)
        if self._has_shift:
            integral = integral - self._base_integral
        return value, slope, integral

    def travel_time(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate(x)[0]

    def marginal(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        value, slope, _ = self._raw(x + self.shift)
        return value + x * slope

    def gradient(self, x: np.ndarray, transform: Transform) -> np.ndarray:
        if Transform(transform) is Transform.MARGINAL:
            return self.marginal(x)
        return self.travel_time(x)

    def beckmann(self, x: np.ndarray, transform: Transform) -> np.ndarray:
        """Per-edge objective terms."""
        x = np.asarray(x, dtype=float)
        if Transform(transform) is Transform.MARGINAL:
            return x * self.travel_time(x)
        return self.evaluate(x)[2]

    def line_search(self, x: np.ndarray, y: np.ndarray, transform: Transform, iterations: int = 64) -> float:
        """Step in ``[0, 1]`` minimizing the objective on the segment ``x -> y``.

        Bisection on the sign of the directional derivative; 0 when ``y - x``
        is not a descent direction, 1 when the derivative is still negative at ``y``.
        """
        x = np.ascontiguousarray(x, dtype=float)
        d = np.ascontiguousarray(y, dtype=float) - x
        idx = np.flatnonzero(d)
        if idx.size == 0:
            return 0.0
        marginal = Transform(transform) is Transform.MARGINAL
        return float(_bisect_step(
            idx, self.kind, self.p0, self.p1, self.p2, self.alpha, self.beta, self.threshold,
            self.shift, x, d, marginal, int(iterations),
        ))

    def total_cost(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.sum(x * self.travel_time(x)))
