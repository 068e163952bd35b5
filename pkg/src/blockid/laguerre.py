"""Discrete-time Laguerre orthonormal basis-function network.

The network is a stable SISO state-space filter bank

    L[k+1] = Phi L[k] + Gamma u[k]
    y[k]   = c^T L[k]

whose p state components are the discrete Laguerre functions with shared
pole ``psi``.  With the normalization ``theta = 1 - psi**2`` the impulse
responses of the state components form an orthonormal family in l2, which
keeps coefficient regression well conditioned at small orders.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter


def _post_update_states(psi: float, p: int, u: np.ndarray) -> np.ndarray:
    """len(u) x p matrix of post-update states from zero initial state.

    Row k holds L[k+1], the state after u[0..k] have entered.  The bank is
    a cascade of identical first-order all-pass sections behind one
    low-pass front end, so each state component is one extra ``lfilter``
    pass over the previous one.
    """
    theta = 1.0 - psi * psi
    out = np.empty((len(u), p))
    s = lfilter([np.sqrt(theta)], [1.0, -psi], u)
    out[:, 0] = s
    for i in range(1, p):
        s = lfilter([-psi, 1.0], [1.0, -psi], s)
        out[:, i] = s
    return out


@dataclass
class LaguerreNetwork:
    """State-space Laguerre filter bank of order ``p`` with pole ``psi``.

    ``phi`` is lower triangular with ``psi`` on the diagonal, so the
    spectral radius equals ``psi`` and stability holds for 0 <= psi < 1.
    ``state`` mutates on :meth:`step`; everything else is fixed at build
    time except the output coefficients ``c``, which estimators overwrite.
    """

    p: int
    psi: float
    phi: np.ndarray
    gamma: np.ndarray
    c: np.ndarray
    state: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.state is None:
            self.state = np.zeros(self.p)

    def copy(self) -> "LaguerreNetwork":
        return LaguerreNetwork(
            p=self.p,
            psi=self.psi,
            phi=self.phi.copy(),
            gamma=self.gamma.copy(),
            c=np.asarray(self.c, dtype=float).copy(),
            state=self.state.copy(),
        )

    def reset(self) -> None:
        self.state = np.zeros(self.p)

    def step(self, u: float) -> float:
        """Advance one sample; returns the output for the pre-update state."""
        y = float(self.c @ self.state)
        self.state = self.phi @ self.state + self.gamma * u
        return y

    def simulate(self, u) -> np.ndarray:
        """Run the filter over ``u`` from the stored state (default zero)."""
        u = np.asarray(u, dtype=float)
        if len(u) and not np.any(self.state):
            states = _post_update_states(self.psi, self.p, u)
            y = np.empty(len(u))
            y[0] = 0.0
            y[1:] = states[:-1] @ np.asarray(self.c, dtype=float)
            self.state = states[-1].copy()
            return y
        y = np.empty(len(u))
        for k in range(len(u)):
            y[k] = self.step(u[k])
        return y

    def dc_gain(self) -> float:
        """Steady-state gain c^T (I - Phi)^-1 Gamma."""
        return float(self.c @ np.linalg.solve(np.eye(self.p) - self.phi, self.gamma))


def build_network(p: int, psi: float) -> LaguerreNetwork:
    """Construct an order-``p`` Laguerre network with pole ``psi``.

    Raises ``ValueError`` for p < 1 or psi outside [0, 1) (the stability
    range).  Output coefficients and state start at zero.
    """
    if p < 1:
        raise ValueError(f"model order must be >= 1, got {p}")
    if not (0.0 <= psi < 1.0):
        raise ValueError(f"scaling factor must be in [0, 1) for stability, got {psi}")

    theta = 1.0 - psi * psi
    phi = np.zeros((p, p))
    for i in range(p):
        phi[i, i] = psi
        for j in range(i):
            phi[i, j] = (-psi) ** (i - j - 1) * theta
    gamma = np.sqrt(theta) * (-psi) ** np.arange(p)
    return LaguerreNetwork(p=p, psi=psi, phi=phi, gamma=gamma, c=np.zeros(p))


def simulate_linear(net: LaguerreNetwork, u) -> np.ndarray:
    """Simulate ``net`` over the input sequence, mutating its state."""
    return net.simulate(u)


def state_trajectory(net: LaguerreNetwork, u) -> np.ndarray:
    """N x p matrix of pre-update states L[k] seen while filtering ``u``.

    Row k is the regressor that pairs with observation y[k]; the stored
    state is left consistent with len(u) steps.
    """
    u = np.asarray(u, dtype=float)
    if len(u) and not np.any(net.state):
        states = _post_update_states(net.psi, net.p, u)
        traj = np.empty((len(u), net.p))
        traj[0] = 0.0
        traj[1:] = states[:-1]
        net.state = states[-1].copy()
        return traj
    traj = np.empty((len(u), net.p))
    for k in range(len(u)):
        traj[k] = net.state
        net.state = net.phi @ net.state + net.gamma * u[k]
    return traj


def simulate_columns(net: LaguerreNetwork, U: np.ndarray) -> np.ndarray:
    """Filter each column of ``U`` through the bare linear block of ``net``.

    Zero initial state for every column; returns an array of the same
    shape.  Used to build least-squares designs that are linear in an
    upstream static map's node values.
    """
    U = np.asarray(U, dtype=float)
    n, m = U.shape
    if n == 0:
        return np.empty((0, m))
    c = np.asarray(net.c, dtype=float)
    theta = 1.0 - net.psi * net.psi
    s = lfilter([np.sqrt(theta)], [1.0, -net.psi], U, axis=0)
    total = c[0] * s
    for i in range(1, net.p):
        s = lfilter([-net.psi, 1.0], [1.0, -net.psi], s, axis=0)
        total = total + c[i] * s
    Y = np.empty((n, m))
    Y[0] = 0.0
    Y[1:] = total[:-1]
    return Y


def impulse_response_matrix(p: int, psi: float, N: int) -> np.ndarray:
    """N x p matrix whose column j is the impulse response of state l_j.

    Row k holds L[k+1] under a unit impulse at k=0 from zero initial state,
    i.e. the first N state vectors after the impulse has entered.  For a
    valid psi the Gram matrix M^T M converges to the identity as N grows
    (l2 orthonormality of the Laguerre family).
    """
    if N < 1:
        raise ValueError(f"horizon must be >= 1, got {N}")
    net = build_network(p, psi)
    M = np.empty((N, p))
    L = net.gamma.copy()
    for k in range(N):
        M[k] = L
        L = net.phi @ L
    return M
