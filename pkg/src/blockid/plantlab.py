"""Synthetic experiment lab: reference plant, excitation signals, seeded
Gaussian output disturbances, and CSV dataset persistence.

The reference plant is a ground-truth N-L-N model (curved monotone input
map, Laguerre core, saturating output map) standing in for an external
process simulator.  Knowing the truth lets the benchmark validate
identified models against the noiseless plant response.

All randomness flows through numpy's default_rng (PCG64); Gaussian draws
use Generator.normal (ziggurat), which is deterministic for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, SchemaError
from .laguerre import build_network
from .models import BlockModel, LinearBlock, normalize_model, simulate
from .nonlin import PwlFunction

GENERATOR_VERSION = "blockid-plantlab-1"

# the lower end sits within one default grid cell of zero so that the
# region a unit-gain linear fit sweeps through on startup stays covered
# by steady-state operating data
DEFAULT_INPUT_RANGE = (5.0, 65.0)


@dataclass
class Dataset:
    """Sampled input/output record with provenance metadata."""

    u: np.ndarray
    y: np.ndarray
    dt: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.u.shape != self.y.shape or self.u.ndim != 1 or len(self.u) < 1:
            raise SchemaError("u and y must be equal-length 1-D arrays of length >= 1")
        if not self.dt > 0:
            raise SchemaError(f"sampling interval must be positive, got {self.dt}")

    def __len__(self):
        return len(self.u)


@dataclass
class ReferencePlant:
    truth: BlockModel
    input_range: tuple
    output_scale: float
    plant_id: str


def _monotone_values(rng, n_nodes, slopes_lo, slopes_hi, decreasing_slopes=False):
    slopes = rng.uniform(slopes_lo, slopes_hi, n_nodes - 1)
    if decreasing_slopes:
        slopes = np.sort(slopes)[::-1]
    return np.concatenate([[0.0], np.cumsum(slopes)])


def make_reference_plant(seed: int) -> ReferencePlant:
    """Deterministic ground-truth N-L-N plant for a given seed.

    Laguerre core p=12, pole 0.85, unit steady-state gain (slow dynamics:
    step transients span most of a default excitation dwell).  The input map is
    strictly increasing with several distinct slopes (a nonlinear
    amplification a purely linear model cannot track) and the output map
    saturates: slopes shrink toward the top of the range.
    """
    rng = np.random.default_rng(seed)
    lo, hi = DEFAULT_INPUT_RANGE

    # 12 non-uniformly spaced nodes: an 8-node uniform identification grid
    # cannot represent the map exactly, giving every family a common
    # noise-independent representation floor
    n_in = 12
    gaps = 0.5 + rng.uniform(0.0, 1.0, n_in - 1)
    in_b = lo + (hi - lo) * np.concatenate([[0.0], np.cumsum(gaps)]) / np.sum(gaps)
    # strongly curved convex amplification, the dominant nonlinearity: a
    # structure without an input map has to absorb this whole deviation
    # from affine, so it carries the largest approximation error
    in_slopes = np.sort(rng.uniform(0.8, 3.2, n_in - 1))
    in_v = np.concatenate([[0.0], np.cumsum(in_slopes * np.diff(in_b))]) * 0.55

    core = build_network(12, 0.85)
    # project a dominantly second-order response (poles ~0.92/0.68) plus a
    # weak fast mode and a small damped oscillation onto a rich basis: the
    # truth is an order-12 network, so low-order identified linear blocks
    # face a dynamics residual no amount of data can remove
    from .laguerre import impulse_response_matrix

    k = np.arange(1, 401, dtype=float)
    p1, p2 = 0.92 + 0.004 * rng.standard_normal(), 0.68 + 0.01 * rng.standard_normal()
    h_target = (1 - p1) * (1 - p2) * (p1**k - p2**k) / (p1 - p2)
    # fast positive mode plus an underdamped ripple, sized so the impulse
    # response stays nonnegative (monotone step response, so intermediate
    # signals stay inside the excitation's level range) while the fine
    # structure stays out of reach of a low-order rational fit
    h_target = h_target + 0.25 * 0.3**k + 0.14 * (0.8**k) * np.cos(0.7 * k)
    basis = impulse_response_matrix(12, 0.85, 400)
    core.c = basis.T @ h_target
    core.c = core.c / core.dc_gain()

    # output map over the linear block's operating range (unit gain, so the
    # range of the input map's values); saturating toward the top
    w_lo, w_hi = float(in_v.min()), float(in_v.max())
    pad = 0.35 * (w_hi - w_lo)
    n_out = 12
    ogaps = 0.5 + rng.uniform(0.0, 1.0, n_out - 1)
    out_b = (w_lo - pad) + (w_hi - w_lo + 2 * pad) * np.concatenate([[0.0], np.cumsum(ogaps)]) / np.sum(ogaps)
    # mild saturation (slopes shrink toward the top) with an alternating
    # slope ripple finer than the identification grid: the ripple lives on
    # the static output curve, so it gives every structure with an output
    # map a noise-independent representation floor without injecting any
    # off-curve scatter into the identification signals
    base_out = np.sort(rng.uniform(1.0, 1.15, n_out - 1))[::-1]
    ripple = 1.0 + 0.30 * (-1.0) ** np.arange(n_out - 1)
    ripple[:2] = 1.0
    ripple[-2:] = 1.0
    out_slopes = base_out * ripple
    out_v = np.concatenate([[0.0], np.cumsum(out_slopes * np.diff(out_b))])
    output_scale = 30.0 / max(out_v.max() - out_v.min(), 1e-9)
    out_v = out_v * output_scale

    truth = BlockModel(
        input_nl=PwlFunction(in_b, in_v),
        linear=LinearBlock("laguerre", laguerre=core),
        output_nl=PwlFunction(out_b, out_v),
        structure="hammerstein_wiener",
    )
    truth = normalize_model(truth)
    return ReferencePlant(
        truth=truth,
        input_range=(lo, hi),
        output_scale=output_scale,
        plant_id=f"{GENERATOR_VERSION}-seed{seed}",
    )


def generate_excitation(kind: str, N: int, input_range, seed: int = 0, dwell: int = 50) -> np.ndarray:
    """Deterministic excitation signal of length N within ``input_range``.

    prbs_steps: random levels held for ``dwell`` samples; staircase:
    monotone levels; impulse: one sample at the range midpoint amplitude;
    step: constant at the range top.
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if dwell < 1:
        raise ValueError(f"dwell must be >= 1, got {dwell}")
    lo, hi = float(input_range[0]), float(input_range[1])
    if not hi > lo:
        raise ValueError(f"input range must be non-degenerate, got {input_range}")

    if kind == "prbs_steps":
        rng = np.random.default_rng(seed)
        n_seg = -(-N // dwell)
        levels = rng.uniform(lo, hi, n_seg)
        return np.repeat(levels, dwell)[:N]
    if kind == "staircase":
        n_seg = -(-N // dwell)
        levels = np.linspace(lo, hi, n_seg)
        return np.repeat(levels, dwell)[:N]
    if kind == "impulse":
        u = np.zeros(N)
        u[0] = 0.5 * (lo + hi)
        return u
    if kind == "step":
        return np.full(N, hi)
    raise ValueError(f"unknown excitation kind {kind!r}")


def run_experiment(plant: ReferencePlant, u, sigma: float, seed: int) -> Dataset:
    """Simulate the plant over ``u`` and add seeded Gaussian output noise."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    u = np.asarray(u, dtype=float)
    y_clean = simulate(plant.truth, u)
    noise = np.random.default_rng(seed).normal(0.0, sigma, len(u)) if sigma > 0 else np.zeros(len(u))
    return Dataset(
        u=u,
        y=y_clean + noise,
        dt=1.0,
        meta={
            "seed": seed,
            "sigma": sigma,
            "plant": plant.plant_id,
            "generator": GENERATOR_VERSION,
        },
    )


def write_dataset(dataset: Dataset, path) -> None:
    """CSV persistence: ``# key=value`` header comments, then k,u,y rows.

    Floats are serialized with repr (shortest exact round trip)."""
    lines = []
    meta = dict(dataset.meta)
    meta.setdefault("dt", dataset.dt)
    for key in sorted(meta):
        lines.append(f"# {key}={meta[key]}")
    lines.append("k,u,y")
    for k in range(len(dataset)):
        lines.append(f"{k},{dataset.u[k]!r},{dataset.y[k]!r}")
    _atomic_write(path, "\n".join(lines) + "\n")


def read_dataset(path) -> Dataset:
    """Parse a dataset CSV; malformed content reports the offending line."""
    meta = {}
    us, ys = [], []
    header_seen = False
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    meta[key.strip()] = value.strip()
                continue
            if not header_seen:
                if [col.strip() for col in line.split(",")] != ["k", "u", "y"]:
                    raise SchemaError(f"expected header 'k,u,y' at line {lineno}, got {line!r}")
                header_seen = True
                continue
            cells = line.split(",")
            if len(cells) != 3:
                raise SchemaError(f"expected 3 columns at line {lineno}, got {len(cells)}")
            try:
                us.append(float(cells[1]))
                ys.append(float(cells[2]))
            except ValueError:
                raise ParseError(f"non-numeric cell at line {lineno}: {line!r}", line=lineno) from None
    if not header_seen:
        raise SchemaError(f"{path}: missing 'k,u,y' header")
    if not us:
        raise SchemaError(f"{path}: empty data section")
    dt = float(meta.pop("dt", 1.0))
    for key in ("seed",):
        if key in meta:
            try:
                meta[key] = int(meta[key])
            except ValueError:
                pass
    if "sigma" in meta:
        try:
            meta["sigma"] = float(meta["sigma"])
        except ValueError:
            pass
    return Dataset(u=np.array(us), y=np.array(ys), dt=dt, meta=meta)


def _atomic_write(path, text: str) -> None:
    import os
    import tempfile

    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".blockid-tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
