"""Spatially correlated planar disturbance field.

The field is sampled on a regular grid. Each grid node carries a 2-vector
mean (a rotational flow by default) and a scalar variance; the covariance
between nodes follows a distance kernel, applied independently to each of the
two disturbance components. Queries off the grid use bilinear interpolation,
which also propagates the node covariance to arbitrary trajectories.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from .mathutil import project_psd, psd_factor, symmetrize

__all__ = [
    "KernelSpec",
    "VarianceBox",
    "FieldConfig",
    "FieldGrid",
    "FieldModel",
    "DisturbanceStats",
    "FieldRealization",
    "phi",
    "build_wind_field",
    "kernel_value",
    "bilinear_weights",
    "interpolate_mean",
    "discretize_along",
    "sample_realization",
    "evaluate_realization",
]


class FieldConfigError(ValueError):
    """Raised for malformed field configuration."""


@dataclass(frozen=True)
class KernelSpec:
    """Distance correlation kernel max(0, base - d / length_scale)."""

    base: float = 0.3
    length_scale: float = 10.0 * np.sqrt(2.0)

    def __call__(self, dist):
        return np.maximum(0.0, self.base - np.asarray(dist, dtype=float) / self.length_scale)


@dataclass(frozen=True)
class VarianceBox:
    """Axis-aligned override: variance ``value`` for nodes with lo <= p <= hi."""

    lo: tuple
    hi: tuple
    value: float


@dataclass(frozen=True)
class FieldConfig:
    """Construction parameters for the gridded disturbance field.

    ``flow_center``/``flow_gain`` parameterize the rotational mean flow
    gain * [(cy - y), (x - cx)]. ``variance`` is the uniform node variance,
    optionally overridden inside ``variance_boxes``.
    """

    origin: tuple = (0.0, 0.0)
    extent: tuple = (10.0, 10.0)
    spacing: float = 1.0
    flow_center: tuple = (5.0, 5.0)
    flow_gain: float = 0.25
    variance: float = 0.2
    variance_boxes: tuple = ()
    kernel: KernelSpec = dc_field(default_factory=KernelSpec)

    def validate(self):
        if self.spacing <= 0:
            raise FieldConfigError(f"spacing must be positive, got {self.spacing}")
        if self.variance < 0:
            raise FieldConfigError(f"variance must be nonnegative, got {self.variance}")
        for box in self.variance_boxes:
            lo, hi = np.asarray(box.lo, dtype=float), np.asarray(box.hi, dtype=float)
            if lo.shape != (2,) or hi.shape != (2,) or np.any(hi < lo):
                raise FieldConfigError(f"malformed variance box {box}")
            if box.value < 0:
                raise FieldConfigError(f"negative box variance {box.value}")
        nx = int(round(self.extent[0] / self.spacing)) + 1
        ny = int(round(self.extent[1] / self.spacing)) + 1
        if nx < 2 or ny < 2:
            raise FieldConfigError("grid must have at least 2 nodes per axis")
        return nx, ny


@dataclass(frozen=True)
class FieldGrid:
    """Regular grid of disturbance samples.

    Node ``i = iy * nx + ix`` sits at ``origin + spacing * (ix, iy)``.
    ``mean_samples`` is (nx*ny, 2); ``variance_samples`` is (nx*ny,).
    """

    origin: np.ndarray
    spacing: float
    nx: int
    ny: int
    mean_samples: np.ndarray
    variance_samples: np.ndarray
    kernel: KernelSpec

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float).reshape(2))
        object.__setattr__(self, "mean_samples", np.asarray(self.mean_samples, dtype=float))
        object.__setattr__(
            self, "variance_samples", np.asarray(self.variance_samples, dtype=float)
        )
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid needs nx, ny >= 2")
        if self.spacing <= 0:
            raise ValueError("grid spacing must be positive")
        n = self.nx * self.ny
        if self.mean_samples.shape != (n, 2):
            raise ValueError(f"mean_samples must be ({n}, 2)")
        if self.variance_samples.shape != (n,):
            raise ValueError(f"variance_samples must be ({n},)")
        if np.any(self.variance_samples < 0):
            raise ValueError("variance_samples must be nonnegative")

    @property
    def n_nodes(self):
        return self.nx * self.ny

    def node_positions(self):
        ix, iy = np.meshgrid(np.arange(self.nx), np.arange(self.ny))
        return self.origin + self.spacing * np.column_stack([ix.ravel(), iy.ravel()])

    @property
    def upper(self):
        return self.origin + self.spacing * np.array([self.nx - 1, self.ny - 1])


class FieldModel:
    """Grid plus the (2*nx*ny)^2 node covariance, PSD-projected.

    ``psd_shift`` records the magnitude of the eigenvalue clip applied when
    projecting the assembled covariance onto the PSD cone.
    """

    def __init__(self, grid, grid_cov, psd_shift):
        self.grid = grid
        self.grid_cov = symmetrize(np.asarray(grid_cov, dtype=float))
        self.psd_shift = float(psd_shift)
        m = 2 * grid.n_nodes
        if self.grid_cov.shape != (m, m):
            raise ValueError(f"grid_cov must be ({m}, {m})")
        self._sampling_factor = None

    def sampling_factor(self):
        """Factor F with F F^T = grid_cov, cached for realization draws."""
        if self._sampling_factor is None:
            self._sampling_factor = psd_factor(self.grid_cov)
        return self._sampling_factor


@dataclass(frozen=True)
class DisturbanceStats:
    """Disturbance mean and covariance stacked along an (N+1)-step trajectory."""

    w_mean: np.ndarray
    w_cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w_mean", np.asarray(self.w_mean, dtype=float).reshape(-1))
        object.__setattr__(self, "w_cov", symmetrize(np.asarray(self.w_cov, dtype=float)))
        n = self.w_mean.size
        if self.w_cov.shape != (n, n):
            raise ValueError("w_cov shape does not match w_mean")
        low = np.linalg.eigvalsh(self.w_cov)[0]
        if low < -1e-9:
            raise ValueError(f"w_cov not PSD (min eigenvalue {low:.3e})")


@dataclass(frozen=True)
class FieldRealization:
    """One ground-truth draw of the field, sampled per grid node."""

    realized_samples: np.ndarray
    source_seed: int

    def __post_init__(self):
        object.__setattr__(
            self, "realized_samples", np.asarray(self.realized_samples, dtype=float)
        )
        if self.realized_samples.ndim != 2 or self.realized_samples.shape[1] != 2:
            raise ValueError("realized_samples must be (n_nodes, 2)")


def phi(state):
    """Position components (first two entries) of a state vector."""
    state = np.asarray(state, dtype=float)
    if state.shape[-1] < 2:
        raise ValueError(f"state dimension must be >= 2, got {state.shape[-1]}")
    return state[..., :2]


def _node_variances(cfg, positions):
    var = np.full(positions.shape[0], cfg.variance, dtype=float)
    for box in cfg.variance_boxes:
        lo = np.asarray(box.lo, dtype=float)
        hi = np.asarray(box.hi, dtype=float)
        inside = np.all((positions >= lo - 1e-12) & (positions <= hi + 1e-12), axis=1)
        var[inside] = box.value
    return var


def build_wind_field(cfg):
    """Assemble a FieldModel from configuration.

    The node covariance between distinct nodes i != j is
    min(kernel(d_ij), sqrt(var_i * var_j)); the diagonal is var_i. Each of
    the two disturbance components gets this covariance independently (no
    cross-component correlation). The assembled matrix is then projected to
    the PSD cone, recording the clip magnitude in ``psd_shift``.
    """
    nx, ny = cfg.validate()
    grid = FieldGrid(
        origin=cfg.origin,
        spacing=cfg.spacing,
        nx=nx,
        ny=ny,
        mean_samples=np.zeros((nx * ny, 2)),
        variance_samples=np.zeros(nx * ny),
        kernel=cfg.kernel,
    )
    pos = grid.node_positions()
    cx, cy = cfg.flow_center
    mean = cfg.flow_gain * np.column_stack([cy - pos[:, 1], pos[:, 0] - cx])
    var = _node_variances(cfg, pos)
    grid = FieldGrid(
        origin=cfg.origin,
        spacing=cfg.spacing,
        nx=nx,
        ny=ny,
        mean_samples=mean,
        variance_samples=var,
        kernel=cfg.kernel,
    )

    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    cov_nodes = np.minimum(cfg.kernel(dist), np.sqrt(np.outer(var, var)))
    np.fill_diagonal(cov_nodes, var)
    raw = np.kron(cov_nodes, np.eye(2))
    projected, shift = project_psd(raw)
    return FieldModel(grid, projected, shift)


def kernel_value(model, p1, p2):
    """Kernel covariance between two positions (clamps at 0 by construction)."""
    d = float(np.linalg.norm(np.asarray(p1, dtype=float) - np.asarray(p2, dtype=float)))
    return float(model.grid.kernel(d))


def bilinear_weights(grid, points):
    """Bilinear interpolation stencils for query points.

    Points outside the grid extent are clamped to the boundary cell. Returns
    ``(idx, w)`` with shapes (B, 4): node indices and nonnegative weights
    summing to 1, corner order (lower-left, lower-right, upper-left,
    upper-right).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    rel = (pts - grid.origin) / grid.spacing
    rel[:, 0] = np.clip(rel[:, 0], 0.0, grid.nx - 1)
    rel[:, 1] = np.clip(rel[:, 1], 0.0, grid.ny - 1)
    ix = np.minimum(rel[:, 0].astype(int), grid.nx - 2)
    iy = np.minimum(rel[:, 1].astype(int), grid.ny - 2)
    fx = rel[:, 0] - ix
    fy = rel[:, 1] - iy
    base = iy * grid.nx + ix
    idx = np.column_stack([base, base + 1, base + grid.nx, base + grid.nx + 1])
    w = np.column_stack([(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy])
    return idx, w


def _interp(grid, samples, points):
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    idx, w = bilinear_weights(grid, pts)
    out = np.einsum("bk,bkc->bc", w, samples[idx])
    return out[0] if single else out


def interpolate_mean(model, p):
    """Bilinear blend of the four surrounding node means."""
    return _interp(model.grid, model.grid.mean_samples, p)


def _weight_matrix(grid, positions):
    """Rows of bilinear weights over all nodes, expanded to both components."""
    idx, w = bilinear_weights(grid, positions)
    k = positions.shape[0]
    wm = np.zeros((k, grid.n_nodes))
    np.put_along_axis(wm, idx, w, axis=1)
    # interleave onto the stacked (node, component) ordering
    full = np.zeros((2 * k, 2 * grid.n_nodes))
    full[0::2, 0::2] = wm
    full[1::2, 1::2] = wm
    return full


def discretize_along(model, nominal_states):
    """Disturbance statistics along a nominal trajectory.

    The stacked mean interpolates the node means at each step position; the
    covariance propagates the node covariance through the (fixed) bilinear
    weights, so revisited positions come out perfectly correlated.
    """
    states = np.atleast_2d(np.asarray(nominal_states, dtype=float))
    positions = phi(states)
    wmat = _weight_matrix(model.grid, positions)
    w_mean = wmat @ model.grid.mean_samples.reshape(-1)
    w_cov = symmetrize(wmat @ model.grid_cov @ wmat.T)
    w_cov, _ = project_psd(w_cov)
    return DisturbanceStats(w_mean=w_mean, w_cov=w_cov)


def sample_realization(model, seed):
    """Draw one field realization; deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    fac = model.sampling_factor()
    z = rng.standard_normal(fac.shape[1])
    flat = model.grid.mean_samples.reshape(-1) + fac @ z
    return FieldRealization(realized_samples=flat.reshape(-1, 2), source_seed=int(seed))


def evaluate_realization(realization, model, p):
    """Bilinear interpolation of realized samples (same weights as the mean)."""
    return _interp(model.grid, realization.realized_samples, p)
