"""Block-matrix lifting of the linear dynamics over an N-step horizon.

Stacking convention: X stacks x_0..x_N (length (N+1)n), U stacks u_0..u_{N-1}
(length Nm), W stacks w_0..w_N (length (N+1)d). The dynamics expand as
x_k = A^k x_0 + sum_{i<k} A^(k-1-i) (B u_i + G w_i), so the lifted control and
disturbance blocks are strictly lower triangular in time and the trailing
disturbance w_N never influences the state.
"""

from dataclasses import dataclass

import numpy as np

from . import field as field_mod
from .mathutil import assert_psd, symmetrize

__all__ = [
    "LtiModel",
    "BlockModel",
    "NominalTrajectory",
    "FeedbackPolicy",
    "build_triple_integrator",
    "lift",
    "rollout_nominal",
    "open_loop_covariance",
    "closed_loop_covariances",
    "mean_trajectory",
    "gain_from_L",
    "causal_mask",
]


@dataclass(frozen=True)
class LtiModel:
    """Discrete-time model x_{k+1} = A x_k + B u_k + G w_k."""

    A: np.ndarray
    B: np.ndarray
    G: np.ndarray
    dt: float

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        G = np.asarray(self.G, dtype=float)
        n = A.shape[0]
        if A.shape != (n, n) or B.shape[0] != n or G.shape[0] != n:
            raise ValueError("inconsistent A/B/G shapes")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "G", G)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def d(self):
        return self.G.shape[1]


def build_triple_integrator(dt):
    """Planar triple integrator: position/velocity/acceleration states,
    jerk control, disturbance entering the position rate."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    I2 = np.eye(2)
    Z2 = np.zeros((2, 2))
    A = np.block(
        [
            [I2, dt * I2, 0.5 * dt**2 * I2],
            [Z2, I2, dt * I2],
            [Z2, Z2, I2],
        ]
    )
    B = np.vstack([Z2, Z2, dt * I2])
    G = np.vstack([dt * I2, Z2, Z2])
    return LtiModel(A=A, B=B, G=G, dt=dt)


@dataclass(frozen=True)
class BlockModel:
    """Lifted N-step matrices and time selectors."""

    model: LtiModel
    N: int
    A_blk: np.ndarray
    B_blk: np.ndarray
    G_blk: np.ndarray

    @property
    def n(self):
        return self.model.n

    @property
    def m(self):
        return self.model.m

    @property
    def d(self):
        return self.model.d

    @property
    def nx(self):
        """Length of the stacked state vector."""
        return (self.N + 1) * self.n

    @property
    def nu(self):
        return self.N * self.m

    @property
    def nw(self):
        return (self.N + 1) * self.d

    def x_slice(self, k):
        if not 0 <= k <= self.N:
            raise IndexError(f"state index {k} outside 0..{self.N}")
        return slice(k * self.n, (k + 1) * self.n)

    def u_slice(self, k):
        if not 0 <= k < self.N:
            raise IndexError(f"control index {k} outside 0..{self.N - 1}")
        return slice(k * self.m, (k + 1) * self.m)

    def E_x(self, k):
        """Selector with E_x(k) @ X = x_k."""
        E = np.zeros((self.n, self.nx))
        E[:, self.x_slice(k)] = np.eye(self.n)
        return E

    def E_u(self, k):
        E = np.zeros((self.m, self.nu))
        E[:, self.u_slice(k)] = np.eye(self.m)
        return E

    def states(self, x_stacked):
        """Reshape a stacked state vector to (N+1, n) rows."""
        return np.asarray(x_stacked, dtype=float).reshape(self.N + 1, self.n)


def lift(model, N):
    """Build the lifted matrices for an N-step horizon."""
    if N < 1:
        raise ValueError(f"horizon must be >= 1, got {N}")
    n, m, d = model.n, model.m, model.d
    powers = [np.eye(n)]
    for _ in range(N):
        powers.append(model.A @ powers[-1])

    A_blk = np.vstack(powers)
    B_blk = np.zeros(((N + 1) * n, N * m))
    G_blk = np.zeros(((N + 1) * n, (N + 1) * d))
    for k in range(1, N + 1):
        for i in range(k):
            B_blk[k * n : (k + 1) * n, i * m : (i + 1) * m] = powers[k - 1 - i] @ model.B
            G_blk[k * n : (k + 1) * n, i * d : (i + 1) * d] = powers[k - 1 - i] @ model.G
    return BlockModel(model=model, N=N, A_blk=A_blk, B_blk=B_blk, G_blk=G_blk)


@dataclass(frozen=True)
class NominalTrajectory:
    """Fixed point of the nominal rollout through the disturbance mean."""

    x_nom: np.ndarray
    u_nom: np.ndarray
    residual: float
    converged: bool


def stacked_field_mean(blk, field, x_stacked):
    """Disturbance mean interpolated at every step position of a stacked state."""
    positions = field_mod.phi(blk.states(x_stacked))
    return field_mod.interpolate_mean(field, positions).reshape(-1)


def rollout_nominal(blk, field, mu0, u_guess, tol=1e-9, max_iter=50):
    """Iterate X <- A_blk mu0 + B_blk U + G_blk Wbar(X) to a fixed point.

    Starts from the disturbance-free rollout. Never raises on
    non-convergence; the caller inspects ``converged``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    mu0 = np.asarray(mu0, dtype=float).reshape(blk.n)
    u = np.asarray(u_guess, dtype=float).reshape(blk.nu)
    base = blk.A_blk @ mu0 + blk.B_blk @ u
    x = base.copy()
    converged = False
    for _ in range(max_iter):
        x_next = base + blk.G_blk @ stacked_field_mean(blk, field, x)
        change = float(np.max(np.abs(x_next - x)))
        x = x_next
        if change <= tol:
            converged = True
            break
    residual = float(
        np.max(np.abs(x - (base + blk.G_blk @ stacked_field_mean(blk, field, x))))
    )
    return NominalTrajectory(x_nom=x, u_nom=u, residual=residual, converged=converged)


def open_loop_covariance(blk, sigma0, w_cov):
    """S = A_blk sigma0 A_blk^T + G_blk w_cov G_blk^T."""
    sigma0 = np.asarray(sigma0, dtype=float)
    w_cov = np.asarray(w_cov, dtype=float)
    assert_psd(sigma0, tol=1e-8, name="sigma0")
    assert_psd(w_cov, tol=1e-8, name="w_cov")
    return symmetrize(blk.A_blk @ sigma0 @ blk.A_blk.T + blk.G_blk @ w_cov @ blk.G_blk.T)


def causal_mask(N, n, m):
    """Boolean mask of allowed entries for the state-history gain.

    Row block k (the gain for u_k) may touch states x_0..x_k only.
    """
    mask = np.zeros((N * m, (N + 1) * n), dtype=bool)
    for k in range(N):
        mask[k * m : (k + 1) * m, : (k + 1) * n] = True
    return mask


def _check_causal(blk, L):
    mask = causal_mask(blk.N, blk.n, blk.m)
    if L.shape != mask.shape:
        raise ValueError(f"L must be {mask.shape}, got {L.shape}")
    if np.any(np.abs(L[~mask]) > 1e-12):
        raise ValueError("L violates the block-lower-triangular (causality) pattern")


def closed_loop_covariances(blk, L, S):
    """State and control covariance under the disturbance-feedback gain L.

    Computed through a factor of S: squaring after applying the closed-loop
    map keeps the result accurate even when the gain entries are orders of
    magnitude larger than the covariances (the direct sandwich product
    cancels catastrophically there).
    """
    from .mathutil import psd_factor

    L = np.asarray(L, dtype=float)
    S = np.asarray(S, dtype=float)
    _check_causal(blk, L)
    if S.shape != (blk.nx, blk.nx):
        raise ValueError(f"S must be {(blk.nx, blk.nx)}, got {S.shape}")
    # the truncated factor matters: roundoff-level eigencolumns of S are not
    # exactly annihilated by L and get amplified into visible garbage
    factor = psd_factor(S)
    closed_factor = factor + blk.B_blk @ (L @ factor)
    gain_factor = L @ factor
    sigma_x = symmetrize(closed_factor @ closed_factor.T)
    sigma_u = symmetrize(gain_factor @ gain_factor.T)
    return sigma_x, sigma_u


def mean_trajectory(blk, mu0, V, w_mean):
    """Closed-loop mean: X = A_blk mu0 + B_blk V + G_blk w_mean."""
    mu0 = np.asarray(mu0, dtype=float).reshape(blk.n)
    V = np.asarray(V, dtype=float).reshape(blk.nu)
    w_mean = np.asarray(w_mean, dtype=float).reshape(blk.nw)
    return blk.A_blk @ mu0 + blk.B_blk @ V + blk.G_blk @ w_mean


def gain_from_L(blk, L):
    """Recover the state-history gain K = L (I + B_blk L)^{-1}.

    The closed-loop matrix has unit block-triangular structure so the
    inverse exists, but it can be arbitrarily ill-conditioned for large
    gains; a least-squares fallback keeps the conversion defined.
    """
    L = np.asarray(L, dtype=float)
    _check_causal(blk, L)
    closed = np.eye(blk.nx) + blk.B_blk @ L
    try:
        K = np.linalg.solve(closed.T, L.T).T
    except np.linalg.LinAlgError:
        K = np.linalg.lstsq(closed.T, L.T, rcond=None)[0].T
    # triangular algebra keeps the causal pattern; scrub roundoff
    K[~causal_mask(blk.N, blk.n, blk.m)] = 0.0
    return K


def L_from_gain(blk, K):
    """Inverse map L = K (I - B_blk K)^{-1}."""
    K = np.asarray(K, dtype=float)
    _check_causal(blk, K)
    closed = np.eye(blk.nx) - blk.B_blk @ K
    L = np.linalg.solve(closed.T, K.T).T
    L[~causal_mask(blk.N, blk.n, blk.m)] = 0.0
    return L


@dataclass(frozen=True)
class FeedbackPolicy:
    """Edge feedback law: disturbance-feedback form L, feedforward V, and the
    state-history gain K acting on deviations from the planned mean."""

    L: np.ndarray
    V: np.ndarray
    K: np.ndarray
    x_mean: np.ndarray

    @classmethod
    def from_solution(cls, blk, L, V, w_mean, mu0):
        L = np.asarray(L, dtype=float)
        x_mean = mean_trajectory(blk, mu0, V, w_mean)
        return cls(L=L, V=np.asarray(V, dtype=float).reshape(-1), K=gain_from_L(blk, L), x_mean=x_mean)
