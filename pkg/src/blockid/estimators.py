"""Parameter estimation: exponentially-weighted RLS, batch least squares,
ARX fitting, and pole selection for the Laguerre linear block."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalBreakdownError, SingularMatrixError
from .laguerre import build_network, state_trajectory

# Relative singular-value cutoff below which a regressor matrix is treated
# as rank deficient.
RANK_RTOL = 1e-10

# Snapshot cadence for coefficient-vector selection during recursive
# identification (a checkpoint every this many samples, plus the final one).
SNAPSHOT_STRIDE = 100


@dataclass
class RlsState:
    """Covariance-form recursive least squares state.

    ``theta`` holds the current estimates, ``covariance`` the matrix P
    (kept symmetric by explicit re-symmetrization each update), ``lam``
    the forgetting factor in (0, 1].
    """

    theta: np.ndarray
    covariance: np.ndarray
    lam: float
    count: int = 0


@dataclass
class ArxModel:
    """Linear difference equation yhat[k] = sum_i a[i] y[k-i] + sum_j b[j] u[k-delay-j+1]."""

    na: int
    nb: int
    delay: int
    a: np.ndarray
    b: np.ndarray

    def copy(self) -> "ArxModel":
        return ArxModel(self.na, self.nb, self.delay, self.a.copy(), self.b.copy())

    def simulate(self, u) -> np.ndarray:
        """Output-error simulation: the recursion runs on its own past outputs."""
        u = np.asarray(u, dtype=float)
        n = len(u)
        # fast path: a single IIR filter pass; on blow-up fall back to the
        # sample loop so the output is frozen at the first diverged value
        from scipy.signal import lfilter

        num = np.concatenate([np.zeros(self.delay), self.b])
        den = np.concatenate([[1.0], -np.asarray(self.a, dtype=float)])
        if len(num) == 0:
            num = np.zeros(1)
        with np.errstate(over="ignore", invalid="ignore"):
            y_fast = lfilter(num, den, u)
        if np.all(np.isfinite(y_fast)) and (n == 0 or np.max(np.abs(y_fast)) <= 1e30):
            return y_fast
        y = np.zeros(n)
        for k in range(n):
            acc = 0.0
            for i in range(1, self.na + 1):
                if k - i >= 0:
                    acc += self.a[i - 1] * y[k - i]
            for j in range(1, self.nb + 1):
                idx = k - self.delay - j + 1
                if 0 <= idx < n:
                    acc += self.b[j - 1] * u[idx]
            y[k] = acc
            if not np.isfinite(acc) or abs(acc) > 1e30:
                # freeze the blow-up so callers can flag divergence instead
                # of tripping float overflow warnings
                y[k:] = acc
                break
        return y

    def dc_gain(self) -> float:
        return float(np.sum(self.b) / (1.0 - np.sum(self.a)))


def rls_init(n: int, delta: float, lam: float) -> RlsState:
    """Diffuse-prior initialization: theta = 0, P = delta * I."""
    if n < 1:
        raise ValueError(f"parameter count must be >= 1, got {n}")
    if delta <= 0:
        raise ValueError(f"initial covariance scale must be positive, got {delta}")
    if not (0.0 < lam <= 1.0):
        raise ValueError(f"forgetting factor must be in (0, 1], got {lam}")
    return RlsState(theta=np.zeros(n), covariance=delta * np.eye(n), lam=lam)


def rls_update(state: RlsState, regressor, y: float) -> float:
    """One exponentially-weighted RLS step, in place; returns the a-priori error.

    gain k = P phi / (lam + phi^T P phi); theta += k e; P = (P - k phi^T P) / lam.
    """
    phi = np.asarray(regressor, dtype=float)
    if phi.shape != state.theta.shape:
        raise ValueError(
            f"regressor length {phi.shape} does not match state dimension {state.theta.shape}"
        )
    e = float(y - phi @ state.theta)
    Pphi = state.covariance @ phi
    denom = state.lam + float(phi @ Pphi)
    if denom <= 0.0:
        raise NumericalBreakdownError(
            f"covariance lost positive definiteness (denominator {denom})"
        )
    gain = Pphi / denom
    state.theta = state.theta + gain * e
    P = (state.covariance - gain[:, None] * Pphi[None, :]) / state.lam
    state.covariance = 0.5 * (P + P.T)
    state.count += 1
    return e


def batch_least_squares(regressors, y) -> np.ndarray:
    """Minimum-norm-free full-rank least squares via SVD.

    Rank deficiency (smallest singular value below RANK_RTOL times the
    largest) raises SingularMatrixError rather than silently
    pseudo-inverting.
    """
    A = np.asarray(regressors, dtype=float)
    y = np.asarray(y, dtype=float)
    if A.ndim != 2:
        raise ValueError("regressor matrix must be 2-D")
    n_rows, n_cols = A.shape
    if n_rows < n_cols:
        raise ValueError(f"need at least {n_cols} rows, got {n_rows}")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s[0] == 0.0 or s[-1] < RANK_RTOL * s[0]:
        raise SingularMatrixError(
            f"regressor matrix is rank deficient (singular values {s})"
        )
    return Vt.T @ ((U.T @ y) / s)


def rls_identify_laguerre(dataset, p: int, psi: float, lam: float, delta: float):
    """Estimate Laguerre output coefficients from ``dataset`` by RLS.

    Builds the state regressors L[k] by running the filter recursion over
    dataset.u, feeds (L[k], y[k]) through the recursive update, and keeps
    periodic snapshots of the coefficient vector.  Returns the snapshot
    with the smallest full-dataset simulation MSE (which for this
    structure equals the regression MSE) together with the per-sample
    prediction-error trace.
    """
    u = np.asarray(dataset.u, dtype=float)
    y = np.asarray(dataset.y, dtype=float)
    if len(u) == 0:
        raise ValueError("dataset is empty")
    net = build_network(p, psi)
    L = state_trajectory(net, u)

    state = rls_init(p, delta, lam)
    errors = np.empty(len(u))
    snapshots = []
    for k in range(len(u)):
        errors[k] = rls_update(state, L[k], y[k])
        if (k + 1) % SNAPSHOT_STRIDE == 0:
            snapshots.append(state.theta.copy())
    snapshots.append(state.theta.copy())

    best_c = None
    best_mse = np.inf
    for c in snapshots:
        m = float(np.mean((L @ c - y) ** 2))
        if m < best_mse:
            best_mse = m
            best_c = c
    return best_c, errors


def laguerre_regressors(u, p: int, psi: float) -> np.ndarray:
    """Convenience: the N x p regressor matrix used by rls_identify_laguerre."""
    return state_trajectory(build_network(p, psi), np.asarray(u, dtype=float))


def _arx_design(u, y, na, nb, delay):
    n = len(y)
    k0 = max(na, delay + nb - 1)
    if n <= k0:
        raise ValueError(f"need more than {k0} samples, got {n}")
    rows = np.empty((n - k0, na + nb))
    for k in range(k0, n):
        past_y = [y[k - i] for i in range(1, na + 1)]
        past_u = [u[k - delay - j + 1] for j in range(1, nb + 1)]
        rows[k - k0] = past_y + past_u
    return rows, y[k0:]


def fit_arx(dataset, na: int, nb: int, delay: int) -> ArxModel:
    """Equation-error least-squares ARX fit; rows lacking history are skipped."""
    if na < 0 or nb < 0 or (na == 0 and nb == 0):
        raise ValueError("orders must be >= 0 with at least one positive")
    u = np.asarray(dataset.u, dtype=float)
    y = np.asarray(dataset.y, dtype=float)
    A, target = _arx_design(u, y, na, nb, delay)
    theta = batch_least_squares(A, target)
    return ArxModel(na=na, nb=nb, delay=delay, a=theta[:na], b=theta[na:])


def select_psi(dataset, p: int, psi_grid, lam: float, delta: float):
    """Grid search for the Laguerre pole minimizing simulation MSE.

    Ties break toward the smaller pole; per-point estimator failures are
    tolerated unless every grid point fails.
    """
    grid = sorted(psi_grid)
    if not grid:
        raise ValueError("psi grid is empty")
    u = np.asarray(dataset.u, dtype=float)
    y = np.asarray(dataset.y, dtype=float)
    best = None
    last_err = None
    for psi in grid:
        try:
            c, _ = rls_identify_laguerre(dataset, p, psi, lam, delta)
            L = laguerre_regressors(u, p, psi)
            m = float(np.mean((L @ c - y) ** 2))
        except (NumericalBreakdownError, SingularMatrixError) as err:
            last_err = err
            continue
        if best is None or m < best[2]:
            best = (psi, c, m)
    if best is None:
        raise last_err
    return best
