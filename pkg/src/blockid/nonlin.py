"""Static piecewise-linear maps on a breakpoint grid.

These represent the input/output nonlinearities of the block-oriented
models: continuous, linear between breakpoints, and continued linearly
beyond the end breakpoints (clamping would create zero-slope regions and
destroy invertibility, which Wiener-side identification relies on).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSegmentError, NonMonotonicError, SingularMatrixError

MIN_GAP = 1e-12
SLOPE_TOL = 1e-12


@dataclass(frozen=True)
class PwlFunction:
    """Continuous piecewise-linear function: node locations and values."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if b.ndim != 1 or b.shape != v.shape:
            raise ValueError("breakpoints and values must be 1-D and equal length")
        if len(b) < 2:
            raise ValueError("need at least 2 nodes")
        if np.any(np.diff(b) <= MIN_GAP):
            raise ValueError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)

    def __call__(self, x):
        return pwl_eval(self, x)


def identity_pwl(lo: float, hi: float, n_nodes: int = 8) -> PwlFunction:
    b = np.linspace(lo, hi, n_nodes)
    return PwlFunction(b, b.copy())


def _segment_index(f: PwlFunction, x: np.ndarray) -> np.ndarray:
    # clip so points beyond the node range use the end segments
    return np.clip(np.searchsorted(f.breakpoints, x, side="right") - 1, 0, len(f.breakpoints) - 2)


def pwl_eval(f: PwlFunction, x):
    """Evaluate with interior interpolation and end-segment extrapolation."""
    xs = np.asarray(x, dtype=float)
    scalar = xs.ndim == 0
    xs = np.atleast_1d(xs)
    j = _segment_index(f, xs)
    b, v = f.breakpoints, f.values
    slope = (v[j + 1] - v[j]) / (b[j + 1] - b[j])
    out = v[j] + slope * (xs - b[j])
    return float(out[0]) if scalar else out


def hat_design(breakpoints, x) -> np.ndarray:
    """N x m matrix H with pwl_eval == H @ values for fixed breakpoints.

    Each row has two nonzeros: the barycentric weights of the sample in its
    (clipped) segment; extrapolated samples get weights outside [0, 1] so
    the design stays consistent with the end-segment continuation rule.
    """
    b = np.asarray(breakpoints, dtype=float)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    m = len(b)
    j = np.clip(np.searchsorted(b, xs, side="right") - 1, 0, m - 2)
    t = (xs - b[j]) / (b[j + 1] - b[j])
    H = np.zeros((len(xs), m))
    H[np.arange(len(xs)), j] = 1.0 - t
    H[np.arange(len(xs)), j + 1] = t
    return H


def pwl_fit(xs, ys, breakpoints) -> PwlFunction:
    """Least-squares node values for a fixed breakpoint grid (hat basis).

    The problem is linear and convex; segments containing no samples make
    it singular, in which case the error names the starved segments.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    b = np.asarray(breakpoints, dtype=float)
    if len(xs) != len(ys):
        raise ValueError("xs and ys must have equal length")
    if len(xs) < len(b):
        raise ValueError("need at least as many samples as nodes")
    H = hat_design(b, xs)
    try:
        from .estimators import batch_least_squares

        vals = batch_least_squares(H, ys)
    except SingularMatrixError:
        j = np.clip(np.searchsorted(b, xs, side="right") - 1, 0, len(b) - 2)
        counts = np.bincount(j, minlength=len(b) - 1)
        starved = [
            f"[{b[i]:g}, {b[i + 1]:g}]" for i in range(len(b) - 1) if counts[i] == 0
        ]
        raise SingularMatrixError(
            "piecewise-linear fit is singular; starved segments: "
            + (", ".join(starved) if starved else "none (collinear data)")
        ) from None
    return PwlFunction(b, vals)


def is_monotonic(f: PwlFunction) -> str:
    """'increasing', 'decreasing', or 'non-monotonic' by strict segment slopes."""
    slopes = np.diff(f.values) / np.diff(f.breakpoints)
    if np.all(slopes > SLOPE_TOL):
        return "increasing"
    if np.all(slopes < -SLOPE_TOL):
        return "decreasing"
    return "non-monotonic"


def pwl_inverse(f: PwlFunction, y):
    """Invert a monotonic piecewise-linear map (exact on PWL images).

    Beyond the node range the end segments are continued, mirroring
    pwl_eval's extrapolation, so eval-then-invert round-trips everywhere.
    """
    direction = is_monotonic(f)
    if direction == "non-monotonic":
        raise NonMonotonicError("cannot invert a non-monotonic piecewise-linear map")
    ys = np.asarray(y, dtype=float)
    scalar = ys.ndim == 0
    ys = np.atleast_1d(ys)

    v = f.values if direction == "increasing" else -f.values
    targets = ys if direction == "increasing" else -ys
    j = np.clip(np.searchsorted(v, targets, side="right") - 1, 0, len(v) - 2)
    b = f.breakpoints
    slope = (f.values[j + 1] - f.values[j]) / (b[j + 1] - b[j])
    if np.any(np.abs(slope) < SLOPE_TOL):
        raise DegenerateSegmentError("inversion target lies on a zero-slope segment")
    out = b[j] + (ys - f.values[j]) / slope
    return float(out[0]) if scalar else out


def scale_values(f: PwlFunction, factor: float) -> PwlFunction:
    return PwlFunction(f.breakpoints.copy(), f.values * factor)


def scale_breakpoints(f: PwlFunction, factor: float) -> PwlFunction:
    b = f.breakpoints * factor
    v = f.values.copy()
    if factor < 0:
        b, v = b[::-1], v[::-1]
    return PwlFunction(b, v)
