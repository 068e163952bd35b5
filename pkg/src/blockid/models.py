"""Block-oriented model structures and their identification.

A BlockModel chains an optional static input map, a linear dynamic block
(Laguerre network or ARX difference equation), and an optional static
output map:

    hammerstein          N - L
    wiener               L - N
    hammerstein_wiener   N - L - N
    linear               L

Identification is alternating least squares: the linear coefficients and
the nonlinearity node values are each linear subproblems when the other
part is held fixed, with the recursive estimator doing the linear-part
work and best-iterate memory making the reported fit non-increasing.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np

from .config import IdentConfig
from .errors import (
    DegenerateSegmentError,
    NonMonotonicError,
    NormalizationError,
    NumericalBreakdownError,
    SensitivityError,
    SingularMatrixError,
)
from .estimators import ArxModel, fit_arx, rls_identify_laguerre, select_psi, batch_least_squares
from .laguerre import LaguerreNetwork, build_network, simulate_columns
from .nonlin import (
    PwlFunction,
    hat_design,
    identity_pwl,
    is_monotonic,
    pwl_fit,
    pwl_inverse,
    scale_breakpoints,
    scale_values,
)

GAIN_EPS = 1e-12


@dataclass
class LinearBlock:
    """Exactly one of ``laguerre`` / ``arx`` is populated, per ``kind``."""

    kind: str
    laguerre: LaguerreNetwork | None = None
    arx: ArxModel | None = None

    def __post_init__(self):
        if self.kind not in ("laguerre", "arx"):
            raise ValueError(f"unknown linear block kind {self.kind!r}")
        if (self.kind == "laguerre") != (self.laguerre is not None) or (
            self.kind == "arx"
        ) != (self.arx is not None):
            raise ValueError("exactly one linear-block variant must be populated")

    def copy(self) -> "LinearBlock":
        return LinearBlock(
            kind=self.kind,
            laguerre=self.laguerre.copy() if self.laguerre is not None else None,
            arx=self.arx.copy() if self.arx is not None else None,
        )

    def simulate(self, u) -> np.ndarray:
        """Zero-initial-condition simulation (deterministic)."""
        if self.kind == "laguerre":
            net = self.laguerre.copy()
            net.reset()
            return net.simulate(u)
        return self.arx.simulate(u)

    def simulate_matrix(self, U: np.ndarray) -> np.ndarray:
        """Filter each column of U independently (zero initial conditions)."""
        if self.kind == "laguerre":
            net = self.laguerre.copy()
            net.reset()
            return simulate_columns(net, U)
        return np.column_stack([self.arx.simulate(U[:, j]) for j in range(U.shape[1])])

    def dc_gain(self) -> float:
        if self.kind == "laguerre":
            return self.laguerre.dc_gain()
        return self.arx.dc_gain()

    def scaled(self, factor: float) -> "LinearBlock":
        out = self.copy()
        if out.kind == "laguerre":
            out.laguerre.c = out.laguerre.c * factor
        else:
            out.arx.b = out.arx.b * factor
        return out


@dataclass
class BlockModel:
    input_nl: PwlFunction | None
    linear: LinearBlock
    output_nl: PwlFunction | None
    structure: str
    normalized: bool = False
    warnings: list = field(default_factory=list)
    fit_mse: float | None = None
    iterations: int | None = None

    def __post_init__(self):
        expect = {
            "hammerstein": (True, False),
            "wiener": (False, True),
            "hammerstein_wiener": (True, True),
            "linear": (False, False),
        }
        if self.structure not in expect:
            raise ValueError(f"unknown structure {self.structure!r}")
        want_in, want_out = expect[self.structure]
        if (self.input_nl is not None) != want_in or (self.output_nl is not None) != want_out:
            raise ValueError(f"nonlinearity placement inconsistent with {self.structure!r}")


def simulate(model: BlockModel, u) -> np.ndarray:
    """Chain input map, linear block, output map over an input sequence."""
    u = np.asarray(u, dtype=float)
    v = model.input_nl(u) if model.input_nl is not None else u
    w = model.linear.simulate(v)
    return model.output_nl(w) if model.output_nl is not None else w


def normalize_model(model: BlockModel) -> BlockModel:
    """Rescale to unit steady-state linear gain without changing the map.

    The removed gain is absorbed by the input map's values when present,
    else by the output map's breakpoints.  A bare linear model has nowhere
    to push the gain, so it is returned unchanged.
    """
    if model.structure == "linear":
        return model
    g = model.linear.dc_gain()
    if abs(g) < GAIN_EPS:
        raise NormalizationError(f"linear block steady-state gain is ~0 ({g})")
    if abs(g - 1.0) < 1e-15:
        out = model
    elif model.input_nl is not None:
        out = BlockModel(
            input_nl=scale_values(model.input_nl, g),
            linear=model.linear.scaled(1.0 / g),
            output_nl=model.output_nl,
            structure=model.structure,
            warnings=list(model.warnings),
            fit_mse=model.fit_mse,
            iterations=model.iterations,
        )
    else:
        out = BlockModel(
            input_nl=None,
            linear=model.linear.scaled(1.0 / g),
            output_nl=scale_breakpoints(model.output_nl, 1.0 / g),
            structure=model.structure,
            warnings=list(model.warnings),
            fit_mse=model.fit_mse,
            iterations=model.iterations,
        )
    out.normalized = True
    return out


def _mse(a, b) -> float:
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if not np.all(np.isfinite(d)):
        return float("inf")
    return float(np.mean(d * d))


def _data_grid(signal, n_nodes, margin, explicit):
    if explicit is not None:
        return np.asarray(explicit, dtype=float)
    lo, hi = float(np.min(signal)), float(np.max(signal))
    if hi - lo < 1e-9:
        half = max(abs(lo), 1.0)
        lo, hi = lo - half, hi + half
    pad = margin * (hi - lo)
    return np.linspace(lo - pad, hi + pad, n_nodes)


def _fit_linear(u, target, cfg: IdentConfig, psi: float | None):
    """Linear-block fit on (u, target); returns (block, psi_used).

    For the Laguerre kind the pole is grid-selected on the first call and
    then held fixed across alternation iterations.
    """
    ds = SimpleNamespace(u=u, y=target)
    if cfg.linear_kind == "laguerre":
        if psi is None:
            if cfg.psi is not None:
                psi = cfg.psi
            else:
                psi, _, _ = select_psi(ds, cfg.p, cfg.psi_grid, cfg.rls_lambda, cfg.rls_delta)
        c, _ = rls_identify_laguerre(ds, cfg.p, psi, cfg.rls_lambda, cfg.rls_delta)
        net = build_network(cfg.p, psi)
        net.c = c
        return LinearBlock(kind="laguerre", laguerre=net), psi
    arx = fit_arx(ds, cfg.na, cfg.nb, cfg.delay)
    return LinearBlock(kind="arx", arx=arx), psi


def _unit_gain(block: LinearBlock) -> LinearBlock:
    g = block.dc_gain()
    if abs(g) < GAIN_EPS or not np.isfinite(g):
        return block
    return block.scaled(1.0 / g)


class _BestIterate:
    """Best-so-far model memory with relative-improvement convergence."""

    def __init__(self, tol):
        self.tol = tol
        self.best_mse = np.inf
        self.best_model = None
        self.iterations = 0

    def offer(self, model: BlockModel, mse: float) -> bool:
        """Record the iterate; True when improvement has stalled below tol."""
        self.iterations += 1
        prev = self.best_mse
        if mse < self.best_mse:
            self.best_mse = mse
            self.best_model = model
        if not np.isfinite(prev):
            return False
        return (prev - self.best_mse) <= self.tol * max(prev, 1e-300)

    def finish(self, converged: bool) -> BlockModel:
        model = self.best_model
        model.fit_mse = self.best_mse
        model.iterations = self.iterations
        if not converged:
            model.warnings.append("non-convergence")
        return model


def _finalize(model: BlockModel) -> BlockModel:
    if model.structure == "linear":
        return model
    g = model.linear.dc_gain()
    if abs(g) < GAIN_EPS or not np.isfinite(g):
        model.warnings.append("zero-gain")
        return model
    return normalize_model(model)


def identify_linear(dataset, cfg: IdentConfig) -> BlockModel:
    """Bare linear fit (no static maps) used as a baseline."""
    u = np.asarray(dataset.u, dtype=float)
    y = np.asarray(dataset.y, dtype=float)
    block, _ = _fit_linear(u, y, cfg, None)
    model = BlockModel(None, block, None, "linear")
    model.fit_mse = _mse(simulate(model, u), y)
    model.iterations = 1
    return model


def identify_hammerstein(dataset, cfg: IdentConfig) -> BlockModel:
    u = np.asarray(dataset.u, dtype=float)
    y = np.asarray(dataset.y, dtype=float)
    grid = _data_grid(u, cfg.input_nodes, cfg.grid_margin, cfg.input_breakpoints)
    input_nl = PwlFunction(grid, grid.copy())
    H = hat_design(grid, u)
    psi = None
    tracker = _BestIterate(cfg.tol)
    converged = False
    for _ in range(cfg.max_iters):
        v = input_nl(u)
        block, psi = _fit_linear(v, y, cfg, psi)
        try:
            vals = batch_least_squares(block.simulate_matrix(H), y)
            input_nl = PwlFunction(grid, vals)
        except SingularMatrixError:
            # zero/degenerate linear block: keep the current map and stop
            model = BlockModel(input_nl, block, None, "hammerstein")
            model.warnings.append("degenerate-input-refit")
            tracker.offer(model, _mse(simulate(model, u), y))
            converged = True
            break
        model = BlockModel(input_nl, block, None, "hammerstein")
        if tracker.offer(model, _mse(simulate(model, u), y)):
            converged = True
            break
    return _finalize(tracker.finish(converged))


def identify_wiener(dataset, cfg: IdentConfig) -> BlockModel:
    u = np.asarray(dataset.u, dtype=float)
    y = np.asarray(dataset.y, dtype=float)
    ygrid = _data_grid(y, cfg.output_nodes, cfg.grid_margin, None)
    output_nl = PwlFunction(ygrid, ygrid.copy())
    psi = None
    tracker = _BestIterate(cfg.tol)
    converged = False
    for it in range(1, cfg.max_iters + 1):
        z = pwl_inverse(output_nl, y)
        block, psi = _fit_linear(u, z, cfg, psi)
        if cfg.freeze_output_nl:
            model = BlockModel(None, block, output_nl, "wiener")
            tracker.offer(model, _mse(simulate(model, u), y))
            converged = True
            break
        block = _unit_gain(block)
        w = block.simulate(u)
        wgrid = _data_grid(w, cfg.output_nodes, cfg.grid_margin, cfg.output_breakpoints)
        fitted = _fit_output(w, y, wgrid, it)
        if is_monotonic(fitted) == "non-monotonic":
            raise SensitivityError(
                f"output nonlinearity lost monotonicity at iteration {it}", iteration=it
            )
        output_nl = fitted
        model = BlockModel(None, block, output_nl, "wiener")
        if tracker.offer(model, _mse(simulate(model, u), y)):
            converged = True
            break
    return _finalize(tracker.finish(converged))


def _initial_output_map(y, cfg: IdentConfig) -> PwlFunction:
    """Starting output map for Wiener-side alternation.

    Default: identity over the observed output range.  With an explicit
    output grid (which lives in linear-block output units) the identity
    would put the working signals on the wrong scale, so start from the
    affine map of that grid onto the observed output range instead; this
    anchors the gain split between the blocks to the grid's scale.
    """
    if cfg.output_breakpoints is None:
        grid = _data_grid(y, cfg.output_nodes, cfg.grid_margin, None)
        return PwlFunction(grid, grid.copy())
    grid = np.asarray(cfg.output_breakpoints, dtype=float)
    lo, hi = float(np.min(y)), float(np.max(y))
    if hi - lo < 1e-9:
        return PwlFunction(grid, grid.copy())
    return PwlFunction(grid, np.linspace(lo, hi, len(grid)))


def _quantile_grid(w, n_nodes):
    """Equal-occupancy breakpoint grid over w; None when w is too degenerate."""
    grid = np.quantile(w, np.linspace(0.0, 1.0, n_nodes))
    gap = max(1e-9 * float(np.ptp(w)), 1e-11)
    keep = [grid[0]]
    for g in grid[1:]:
        if g - keep[-1] > gap:
            keep.append(g)
    if len(keep) < 2:
        return None
    return np.asarray(keep)


def _supported_grid(samples, grid, min_count=3):
    """Merge grid cells until each holds at least ``min_count`` samples.

    Nearly empty cells make the corresponding hat columns negligible, and
    a column-equilibrated null-space solve then mistakes 'free node value'
    directions for structure; keeping every cell populated removes them.
    """
    g = np.asarray(grid, dtype=float)
    if len(g) < 2:
        return None
    counts = np.bincount(
        np.clip(np.searchsorted(g, samples, side="right") - 1, 0, len(g) - 2),
        minlength=len(g) - 1,
    )
    kept = [g[0]]
    acc = 0
    for i in range(len(g) - 1):
        acc += counts[i]
        if acc >= min_count and i < len(g) - 2:
            kept.append(g[i + 1])
            acc = 0
    kept.append(g[-1])
    if acc < min_count and len(kept) >= 3:
        kept.pop(-2)
    if len(kept) < 2:
        return None
    return np.asarray(kept)


def _fit_output(w, y, grid, iteration):
    from .nonlin import pwl_fit

    try:
        return pwl_fit(w, y, grid)
    except SingularMatrixError as err:
        raise SensitivityError(
            f"output-map refit became singular at iteration {iteration}: {err}",
            iteration=iteration,
        ) from err


def _gauge_search(w, y, grid):
    """Pick the gauge placement of w minimizing the output-map fit residual.

    Scaling the input map's values by alpha scales the linear block's
    output to alpha*w, and shifting them moves it by a constant, so the
    split of gain and offset between the two static maps is a free
    direction of the alternation.  With a fixed output grid that freedom
    matters (the map's kinks only align with the grid at one placement),
    so search it explicitly: for each scale candidate the offset is set
    to center the data within the grid, with coarse log-spaced scales
    followed by golden-section refinement.  Returns (alpha, beta, fit)
    for the placement alpha*w + beta; fit is None when no scale admits
    a well-posed output refit.
    """
    from .nonlin import pwl_fit

    g_lo, g_span = float(grid.min()), float(grid.max() - grid.min())

    def place(alpha):
        ws = alpha * w
        beta = g_lo - float(ws.min()) + 0.5 * (g_span - float(ws.max() - ws.min()))
        return ws + beta, beta

    def cost2(alpha, beta):
        ws = alpha * w + beta
        try:
            f = pwl_fit(ws, y, grid)
        except SingularMatrixError:
            return np.inf, None
        return _mse(f(ws), y), f

    def cost(alpha):
        ws, beta = place(alpha)
        c, f = cost2(alpha, beta)
        return c, beta, f

    invphi = (np.sqrt(5.0) - 1.0) / 2.0

    def golden(fun, lo, hi, iters):
        a, b = lo, hi
        x1, x2 = b - invphi * (b - a), a + invphi * (b - a)
        f1, f2 = fun(x1), fun(x2)
        for _ in range(iters):
            if f1 < f2:
                b, x2, f2 = x2, x1, f1
                x1 = b - invphi * (b - a)
                f1 = fun(x1)
            else:
                a, x1, f1 = x1, x2, f2
                x2 = a + invphi * (b - a)
                f2 = fun(x2)
        return 0.5 * (a + b)

    best_alpha, (best_cost, best_beta, best_fit) = 1.0, cost(1.0)
    for alpha in np.geomspace(0.2, 5.0, 25):
        c, bta, f = cost(alpha)
        if c < best_cost:
            best_alpha, best_cost, best_beta, best_fit = alpha, c, bta, f
    mid = golden(lambda al: cost(al)[0], best_alpha / 1.3, best_alpha * 1.3, 40)
    c, bta, f = cost(mid)
    if c < best_cost:
        best_alpha, best_cost, best_beta, best_fit = mid, c, bta, f
    # the centering heuristic only approximates the best offset; polish
    # offset and scale alternately on the exact fit objective
    for _ in range(2):
        beta = golden(
            lambda bt: cost2(best_alpha, bt)[0],
            best_beta - 0.125 * g_span,
            best_beta + 0.125 * g_span,
            50,
        )
        c, f = cost2(best_alpha, beta)
        if c < best_cost:
            best_cost, best_beta, best_fit = c, beta, f
        alpha = golden(
            lambda al: cost2(al, best_beta)[0],
            best_alpha / 1.05,
            best_alpha * 1.05,
            50,
        )
        c, f = cost2(alpha, best_beta)
        if c < best_cost:
            best_cost, best_alpha, best_fit = c, alpha, f
    return best_alpha, best_beta, best_fit


def _refit_output_init(input_nl, block, u, y, cfg, in_grid):
    """Given candidate input map and linear block, produce the best output
    map (and rescaled input map) plus the composite MSE; None on failure."""
    from .nonlin import pwl_fit

    best = None
    for sign in (1.0, -1.0):
        inl = PwlFunction(in_grid, sign * input_nl.values)
        w = block.simulate(inl(u))
        if not np.all(np.isfinite(w)):
            continue
        span = float(w.max() - w.min())
        if span <= 0:
            continue
        if cfg.output_breakpoints is not None:
            ob = np.asarray(cfg.output_breakpoints, dtype=float)
            scale = (ob.max() - ob.min()) / span
            inl = PwlFunction(in_grid, inl.values * scale)
            w = w * scale
            alpha, beta, fitted = _gauge_search(w, y, ob)
            if fitted is None:
                continue
            g = block.dc_gain()
            if abs(g) < GAIN_EPS:
                continue
            # fold the placement into the input map and re-simulate so the
            # reported fit reflects the actual (transient-including) signal
            inl = PwlFunction(in_grid, inl.values * alpha + beta / g)
            w = block.simulate(inl(u))
            try:
                fitted = pwl_fit(w, y, ob)
            except SingularMatrixError:
                continue
        else:
            try:
                fitted = pwl_fit(w, y, _data_grid(w, cfg.output_nodes, cfg.grid_margin, None))
            except SingularMatrixError:
                # a skewed intermediate signal can starve uniform segments;
                # fall back to an equal-occupancy grid (initializer only)
                grid = _quantile_grid(w, cfg.output_nodes)
                if grid is None:
                    continue
                try:
                    fitted = pwl_fit(w, y, grid)
                except SingularMatrixError:
                    continue
        m = _mse(fitted(w), y)
        if best is None or m < best[0]:
            best = (m, inl, fitted)
    return best


def _hw_joint_init(u, y, cfg: IdentConfig, in_grid, psi):
    """Joint overparameterized initializer for the N-L-N structure.

    Parametrizes the output map by its inverse D on a grid in output
    units, which turns the whole model equation into a homogeneous
    linear system in (D nodes, products of linear and input-map
    coefficients).  The smallest right singular vector gives the
    parameters up to scale; rank-one reduction separates the factors.
    The D grid is then refined by inserting the estimated kink
    locations of the forward map and re-solving, which removes the
    representation error of D on a uniform grid.

    Returns (input_nl, output_nl, block, psi) or None when the data do
    not support the solve (degenerate output range, divergent fit).
    """
    H = hat_design(in_grid, u)
    m1 = H.shape[1]
    n = len(u)
    y_lo, y_hi = float(y.min()), float(y.max())
    if y_hi - y_lo < 1e-9 or n < 4 * (m1 + cfg.output_nodes):
        return None

    # equal-occupancy grid for the inverse output map (an internal device
    # of the initializer, not the model's breakpoint grid): uniform spacing
    # can leave nearly empty cells whose free node values masquerade as
    # null-space structure
    base = _quantile_grid(y, max(25, 3 * cfg.output_nodes))
    if base is None:
        return None
    base = _supported_grid(y, base)
    if base is None or len(base) < 3:
        return None

    if cfg.linear_kind == "laguerre":
        from .laguerre import state_trajectory

        def traj_block(psi_val):
            cols = []
            for i in range(m1):
                net = build_network(cfg.p, psi_val)
                cols.append(state_trajectory(net, H[:, i]))
            return np.hstack(cols)

        def extract(x, nD, psi_val):
            # first differences across input nodes: the (approximate) null
            # direction of the offset gauge — constant added to d, every
            # per-node coefficient block shifted alike — cannot touch them
            d = x[:nD]
            if d[-1] < d[0]:
                x = -x
                d = x[:nD]
            W = x[nD:].reshape(m1, cfg.p)
            dW = np.diff(W, axis=0)
            Uw, sw, Vtw = np.linalg.svd(dW)
            v0 = np.concatenate([[0.0], np.cumsum(Uw[:, 0] * sw[0])])
            net = build_network(cfg.p, psi_val)
            net.c = Vtw[0]
            return v0, _unit_gain(LinearBlock("laguerre", laguerre=net))

        def candidate_score(x, nD, psi_val):
            """Data-fit MSE of the model implied by one null candidate."""
            try:
                v0, block = extract(x, nD, psi_val)
            except np.linalg.LinAlgError:
                return np.inf
            if not np.all(np.isfinite(v0)) or float(np.ptp(v0)) <= 0:
                return np.inf
            w = block.simulate(PwlFunction(in_grid, v0)(u))
            if not np.all(np.isfinite(w)):
                return np.inf
            grid = _quantile_grid(w, max(cfg.output_nodes, 8))
            if grid is None:
                return np.inf
            try:
                fit = pwl_fit(w, y, grid)
            except SingularMatrixError:
                return np.inf
            return _mse(fit(w), y)

        # With noise the offset gauge (approximately null through the hat
        # partition of unity) can edge out the structural solution in the
        # smallest-singular-vector contest, so score the two least-singular
        # candidates by actual data fit and keep the better one.
        def solve(Dgrid, R, psi_val=None):
            if psi_val is None:
                psi_val = psi
            Hy = hat_design(Dgrid, y)
            A = np.hstack([Hy, -R])
            nD = len(Dgrid)
            N, _ = _null_space(A, 2)
            best = None
            for i in range(N.shape[1]):
                score = candidate_score(N[:, i], nD, psi_val)
                if best is None or score < best[1]:
                    best = (N[:, i], score)
            return best, nD

        if psi is None:
            if cfg.psi is not None:
                psi = cfg.psi
            else:
                best_psi = None
                for cand in sorted(cfg.psi_grid):
                    (x, score), nD = solve(base, traj_block(cand), cand)
                    if best_psi is None or score < best_psi[1]:
                        best_psi = (cand, score)
                psi = best_psi[0]
        R = traj_block(psi)
    else:
        k0 = max(cfg.na, cfg.delay + cfg.nb - 1)
        if n <= k0 + m1 + cfg.output_nodes:
            return None

        # Every regressor block is a hat design matrix, and hat rows sum
        # to one, so constant offsets of d, of each lagged-d block, and of
        # each input block are exact null directions of the system (the
        # same offset freedoms the N-L-N structure itself has).  Deflate
        # that gauge subspace out of the numerical null space, then read
        # the coefficients off first differences, which the offsets
        # cannot touch.
        gauge_dim = cfg.na + cfg.nb

        def solve(Dgrid, _unused=None):
            Hy_full = hat_design(Dgrid, y)
            parts = [Hy_full[k0:]]
            for i in range(1, cfg.na + 1):
                parts.append(-Hy_full[k0 - i : n - i])
            for j in range(1, cfg.nb + 1):
                parts.append(-H[k0 - cfg.delay - j + 1 : n - cfg.delay - j + 1])
            A = np.hstack(parts)
            nD = len(Dgrid)
            N, resid = _null_space(A, gauge_dim + 1)
            S = np.zeros((A.shape[1], gauge_dim))
            for idx in range(gauge_dim):
                S[:nD, idx] = 1.0
                lo = nD * (1 + idx) if idx < cfg.na else nD * (1 + cfg.na) + m1 * (idx - cfg.na)
                width = nD if idx < cfg.na else m1
                S[lo : lo + width, idx] = 1.0
            Q, _ = np.linalg.qr(S)
            M = N - Q @ (Q.T @ N)
            Um, sm, _ = np.linalg.svd(M, full_matrices=False)
            return (Um[:, 0], resid), nD

        def extract(x, nD, _psi):
            d = x[:nD]
            if d[-1] < d[0]:
                x = -x
                d = x[:nD]
            E = x[nD : nD * (1 + cfg.na)].reshape(cfg.na, nD)
            B = x[nD * (1 + cfg.na) :].reshape(cfg.nb, m1)
            dd_diff = np.diff(d)
            denom = float(dd_diff @ dd_diff)
            if denom <= 0:
                raise np.linalg.LinAlgError("degenerate inverse-output estimate")
            a = np.array([float(np.diff(E[i]) @ dd_diff) / denom for i in range(cfg.na)])
            dB = np.diff(B, axis=1)
            Ub, sb, Vtb = np.linalg.svd(dB)
            b = Ub[:, 0] * sb[0]
            v0 = np.concatenate([[0.0], np.cumsum(Vtb[0])])
            arx = ArxModel(na=cfg.na, nb=cfg.nb, delay=cfg.delay, a=a, b=b)
            return v0, _unit_gain(LinearBlock("arx", arx=arx))

        R = None

    Dgrid = base
    best = None
    for _ in range(6):
        try:
            (x, _resid), nD = solve(Dgrid, R)
        except np.linalg.LinAlgError:
            break
        v0, block = extract(x, nD, psi)
        res = _refit_output_init(PwlFunction(in_grid, v0), block, u, y, cfg, in_grid)
        if res is None:
            break
        m, input_nl, output_nl = res
        if best is None or m < best[0]:
            best = (m, input_nl, output_nl, block)
        kinks = np.sort(np.asarray(output_nl.values, dtype=float))
        kinks = kinks[(kinks > y_lo + 1e-9) & (kinks < y_hi - 1e-9)]
        refined = np.sort(np.concatenate([base, kinks]))
        keep = [refined[0]]
        for val in refined[1:]:
            if val - keep[-1] > 1e-9:
                keep.append(val)
        Dgrid = _supported_grid(y, np.asarray(keep))
        if Dgrid is None or len(Dgrid) < 3:
            break
    if best is None:
        return None
    _, input_nl, output_nl, block = best
    if is_monotonic(output_nl) == "non-monotonic":
        output_nl = _monotone_repair(output_nl)
        if output_nl is None:
            return None
    return input_nl, output_nl, block, psi


def _monotone_repair(f: PwlFunction):
    """Project a PWL's node values onto the nearest monotone sequence.

    Used only on the initializer's output map: noise can put small dips
    into an otherwise clearly monotone estimate, and discarding the whole
    initialization for that is worse than starting the alternation from
    the isotonic projection.  (The alternation itself never repairs: a
    non-monotone refit there still aborts with a sensitivity error.)
    Returns None when the values carry no overall trend.
    """
    vals = np.asarray(f.values, dtype=float)
    span = float(vals.max() - vals.min())
    if span <= 0:
        return None
    sign = 1.0 if vals[-1] >= vals[0] else -1.0
    v = sign * vals
    # pool adjacent violators (unit weights)
    pooled = []  # (mean, count)
    for x in v:
        pooled.append((x, 1))
        while len(pooled) > 1 and pooled[-2][0] >= pooled[-1][0]:
            m2, c2 = pooled.pop()
            m1, c1 = pooled.pop()
            pooled.append(((m1 * c1 + m2 * c2) / (c1 + c2), c1 + c2))
    iso = np.concatenate([np.full(c, m) for m, c in pooled])
    # break ties so the result is strictly monotone (inversion-safe)
    iso = iso + 1e-6 * span * np.arange(len(iso)) / max(len(iso) - 1, 1)
    repaired = PwlFunction(f.breakpoints, sign * iso)
    if is_monotonic(repaired) == "non-monotonic":
        return None
    return repaired


def _null_vector(A):
    """Unit null-ish vector of A by column-equilibrated SVD; returns (x, resid)."""
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0] = 1.0
    _, s, Vt = np.linalg.svd(A / scale, full_matrices=False)
    return Vt[-1] / scale, s[-1]


def _null_space(A, dim):
    """The `dim` least-singular right directions of A (column-equilibrated).

    Returns (N, resid) where N has `dim` columns in the original (not
    equilibrated) coordinates and resid is the smallest singular value.
    """
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0] = 1.0
    _, s, Vt = np.linalg.svd(A / scale, full_matrices=False)
    return (Vt[-dim:] / scale).T, s[-1]


def _smooth_for_init(y):
    """Light Savitzky-Golay denoising of y for initializer use only.

    The joint initializer's regressors contain y itself, so output noise
    enters the homogeneous system on both sides and washes out the
    structural null direction well before the alternation itself breaks
    down.  A short quadratic filter removes most of that noise while
    leaving the dwell-scale transients intact; the alternation always
    refines against the raw data.
    """
    from scipy.signal import savgol_filter

    window = min(21, len(y) - (1 - len(y) % 2))
    if window < 5:
        return y
    return savgol_filter(y, window, 2)


def _hw_bootstrap_maps(u, y, cfg: IdentConfig, in_grid):
    """Initial static maps from a Hammerstein prefit plus one output fit.

    The Hammerstein alternation has no inverse-map step, so it stays
    well-posed at noise levels where the joint initializer's null-space
    structure is washed out; its input map and intermediate signal give
    a serviceable N-L-N starting point.  Returns None when the prefit or
    the output fit is degenerate.
    """
    try:
        ham = identify_hammerstein(SimpleNamespace(u=u, y=y), cfg)
    except (SingularMatrixError, SensitivityError, np.linalg.LinAlgError):
        return None
    if ham.input_nl is None:
        return None
    w = ham.linear.simulate(ham.input_nl(u))
    if not np.all(np.isfinite(w)) or float(np.ptp(w)) <= 0:
        return None
    grid = _data_grid(w, cfg.output_nodes, cfg.grid_margin, cfg.output_breakpoints)
    try:
        onl = pwl_fit(w, y, grid)
    except SingularMatrixError:
        return None
    if is_monotonic(onl) == "non-monotonic":
        onl = _monotone_repair(onl)
        if onl is None:
            return None
    return ham.input_nl, onl


def _hw_init_candidates(u, y, cfg: IdentConfig, in_grid):
    """Two tiers of starting points (input map, output map) for the N-L-N
    loop.

    Tier one holds the joint overparameterized initializers: on the raw
    data (exact when the data are noiseless) and on lightly denoised
    data (the raw solve loses the structural null direction at high
    noise); for the ARX kind the Laguerre-structured variants are also
    tried, since the static maps do not depend on the linear-block kind.
    Every tier-one run is scored and the best fit wins.  Tier two is the
    sequential fallback chain: the Hammerstein bootstrap, then identity
    maps.
    """
    import dataclasses as _dc

    cfgs = [cfg]
    if cfg.linear_kind == "arx":
        cfgs.append(_dc.replace(cfg, linear_kind="laguerre"))
    ys = _smooth_for_init(y)
    tier1 = []
    for c in cfgs:
        for data in (y, ys):
            try:
                init = _hw_joint_init(u, data, c, in_grid, None)
            except (SingularMatrixError, np.linalg.LinAlgError):
                init = None
            if init is not None:
                tier1.append((init[0], init[1]))
    tier2 = []
    boot = _hw_bootstrap_maps(u, y, cfg, in_grid)
    if boot is not None:
        tier2.append(boot)
    tier2.append((PwlFunction(in_grid, in_grid.copy()), _initial_output_map(y, cfg)))
    return tier1, tier2


def identify_hw(dataset, cfg: IdentConfig) -> BlockModel:
    u = np.asarray(dataset.u, dtype=float)
    y = np.asarray(dataset.y, dtype=float)
    in_grid = _data_grid(u, cfg.input_nodes, cfg.grid_margin, cfg.input_breakpoints)
    H = hat_design(in_grid, u)
    tier1, tier2 = _hw_init_candidates(u, y, cfg, in_grid)
    first_err = None
    model = None
    run_errors = (SensitivityError, SingularMatrixError, NumericalBreakdownError)
    for input_nl, output_nl in tier1:
        try:
            alt = _hw_alternation(u, y, cfg, H, in_grid, input_nl, output_nl)
        except run_errors as err:
            if first_err is None:
                first_err = err
            continue
        if model is None or alt.fit_mse < model.fit_mse:
            model = alt
    if model is None:
        for input_nl, output_nl in tier2:
            try:
                model = _hw_alternation(u, y, cfg, H, in_grid, input_nl, output_nl)
                break
            except run_errors as err:
                if first_err is None:
                    first_err = err
    if model is not None:
        return _hw_psi_polish(u, y, cfg, H, in_grid, model)
    frozen = _hw_frozen_output(u, y, cfg, tier1 + tier2)
    if frozen is not None:
        return frozen
    raise first_err


def _hw_psi_polish(u, y, cfg: IdentConfig, H, in_grid, model) -> BlockModel:
    """Warm restart the N-L-N alternation at the neighbouring pole-grid
    points and keep the best overall fit.

    The pole is chosen inside the loop from the inverse-transformed data,
    whose noise is warped by the output map; at high noise levels that
    criterion can prefer a neighbouring grid point even when the full
    model fits worse, so the final comparison is made on the output fit.
    """
    if cfg.linear_kind != "laguerre" or cfg.psi is not None:
        return model
    grid = sorted(cfg.psi_grid)
    for _ in range(4):
        psi0 = model.linear.laguerre.psi
        j = min(range(len(grid)), key=lambda i: abs(grid[i] - psi0))
        improved = False
        for jn in (j, j - 1, j + 1):
            if not 0 <= jn < len(grid):
                continue
            cfg_n = dataclasses.replace(cfg, psi=grid[jn])
            try:
                alt = _hw_alternation(u, y, cfg_n, H, in_grid, model.input_nl, model.output_nl)
            except SensitivityError:
                continue
            if alt.fit_mse < model.fit_mse * (1.0 - cfg.tol):
                model = alt
                improved = True
        if not improved:
            break
    return model


def _hw_frozen_output(u, y, cfg: IdentConfig, candidates):
    """Last-resort N-L-N fit with the output map frozen at an initializer
    estimate.

    When every three-way alternation aborts on monotonicity loss, the
    two-way (Hammerstein-style) alternation on the inverse-transformed
    output still terminates, because the frozen map is never refit.  The
    result is marked with a warning; returns None when no candidate map
    admits the transform.
    """
    best = None
    for _, output_nl in candidates:
        if is_monotonic(output_nl) == "non-monotonic":
            continue
        try:
            z = pwl_inverse(output_nl, y)
        except (NonMonotonicError, DegenerateSegmentError):
            continue
        if not np.all(np.isfinite(z)):
            continue
        try:
            ham = identify_hammerstein(SimpleNamespace(u=u, y=z), cfg)
        except (SingularMatrixError, np.linalg.LinAlgError):
            continue
        model = BlockModel(ham.input_nl, ham.linear, output_nl, "hammerstein_wiener")
        fit = _mse(simulate(model, u), y)
        if not np.isfinite(fit):
            continue
        if best is None or fit < best[0]:
            model.fit_mse = fit
            model.iterations = ham.iterations
            model.warnings.append("frozen-output-map")
            best = (fit, model)
    if best is None:
        return None
    return _finalize(best[1])


def _hw_alternation(u, y, cfg: IdentConfig, H, in_grid, input_nl, output_nl) -> BlockModel:
    """Three-way alternation from the given starting maps.

    The Laguerre pole is re-selected from the current inverse-transformed
    data until the choice repeats, then held fixed: early iterations see
    badly scaled intermediate signals and can prefer the wrong pole.
    """
    tracker = _BestIterate(cfg.tol)
    converged = False
    psi = None
    psi_stable = cfg.psi is not None
    for it in range(1, cfg.max_iters + 1):
        z = pwl_inverse(output_nl, y)
        v = input_nl(u)
        block, new_psi = _fit_linear(v, z, cfg, psi if psi_stable else None)
        if not psi_stable:
            psi_stable = new_psi == psi
            psi = new_psi
        block = _unit_gain(block)
        try:
            vals = batch_least_squares(block.simulate_matrix(H), z)
            input_nl = PwlFunction(in_grid, vals)
        except SingularMatrixError:
            model = BlockModel(input_nl, block, output_nl, "hammerstein_wiener")
            model.warnings.append("degenerate-input-refit")
            tracker.offer(model, _mse(simulate(model, u), y))
            converged = True
            break
        w = block.simulate(input_nl(u))
        if cfg.output_breakpoints is not None:
            ob = np.asarray(cfg.output_breakpoints, dtype=float)
            alpha, beta, fitted = _gauge_search(w, y, ob)
            if fitted is None:
                fitted = _fit_output(w, y, ob, it)
            else:
                # block has unit DC gain here, so the offset passes through
                input_nl = PwlFunction(in_grid, input_nl.values * alpha + beta)
                w = block.simulate(input_nl(u))
                fitted = _fit_output(w, y, ob, it)
        else:
            wgrid = _data_grid(w, cfg.output_nodes, cfg.grid_margin, None)
            fitted = _fit_output(w, y, wgrid, it)
        if is_monotonic(fitted) == "non-monotonic":
            raise SensitivityError(
                f"output nonlinearity lost monotonicity at iteration {it}", iteration=it
            )
        output_nl = fitted
        model = BlockModel(input_nl, block, output_nl, "hammerstein_wiener")
        if tracker.offer(model, _mse(simulate(model, u), y)):
            converged = True
            break
    return _finalize(tracker.finish(converged))


def identify(dataset, cfg: IdentConfig) -> BlockModel:
    """Dispatch on cfg.structure."""
    cfg.validate()
    return {
        "hammerstein": identify_hammerstein,
        "wiener": identify_wiener,
        "hammerstein_wiener": identify_hw,
        "linear": identify_linear,
    }[cfg.structure](dataset, cfg)


def hammerstein_overparam(dataset, p, psi, breakpoints):
    """Overparameterized Hammerstein fit, used as a cross-check oracle.

    Fits the full coefficient matrix W[j, i] on bilinear regressors (state
    trajectories of each hat-basis signal), then reduces to the nearest
    rank-one factorization c * values^T by SVD.  Exact on noiseless data
    from a true Hammerstein plant whose kinks sit on ``breakpoints``.
    """
    u = np.asarray(dataset.u, dtype=float)
    y = np.asarray(dataset.y, dtype=float)
    b = np.asarray(breakpoints, dtype=float)
    H = hat_design(b, u)
    m = H.shape[1]
    net = build_network(p, psi)
    cols = []
    for i in range(m):
        from .laguerre import state_trajectory

        net.reset()
        cols.append(state_trajectory(net, H[:, i]))
    R = np.hstack(cols)  # N x (m*p), block i holds states driven by hat_i
    theta = batch_least_squares(R, y)
    W = theta.reshape(m, p).T  # W[j, i] = c_j * value_i
    U, s, Vt = np.linalg.svd(W)
    c = U[:, 0] * s[0]
    vals = Vt[0]
    # fix the sign so the recovered map is increasing if possible
    if vals[-1] < vals[0]:
        c, vals = -c, -vals
    lin = build_network(p, psi)
    lin.c = c
    model = BlockModel(PwlFunction(b, vals), LinearBlock("laguerre", laguerre=lin), None, "hammerstein")
    return normalize_model(model)
