"""Projections onto geodesics, 1D Wasserstein, and the sliced estimators.

The estimator family follows one template: project both empirical measures
onto each of L slicing directions, compute the closed-form 1D Wasserstein
distance between the projected samples, and average over directions.  What
varies is the projection map (geodesic coordinate, plain Frobenius inner
product, or horospherical coordinate) and the law of the directions.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateDirection,
    DimensionMismatch,
    EmptyMeasure,
    NotUnitNorm,
)
from .linalg import (
    SpdMatrix,
    SymMatrix,
    as_spd,
    as_sym,
    log_stack,
    sym_exp,
    symmetrize,
    udu_stack,
)
from .sampling import ProjectionBasis, RngState, build_projection_basis

# Eigenvalue gap below which a slicing direction is treated as degenerate
# for the horospherical coordinate (the sorted eigenbasis is ill defined).
DEGENERATE_GAP = 1e-9

# Stream offset for redrawing degenerate directions, far away from the
# offsets any experiment uses for its own substreams.
_RESAMPLE_STREAM_OFFSET = 2**48


class EmpiricalSymMeasure:
    """Uniformly weighted points in the space of symmetric matrices."""

    __slots__ = ("points", "_logs")

    def __init__(self, points):
        pts = symmetrize(np.asarray(points, dtype=float))
        if pts.ndim != 3 or pts.shape[1] != pts.shape[2]:
            raise DimensionMismatch(f"expected an (n, d, d) stack, got shape {pts.shape}")
        if pts.shape[0] < 1:
            raise EmptyMeasure("an empirical measure needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        pts.flags.writeable = False
        self.points = pts
        self._logs = None

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]


class EmpiricalSpdMeasure(EmpiricalSymMeasure):
    """Uniformly weighted SPD matrices, with the matrix logs of the support
    computed once and cached (every slicing operation reuses them)."""

    __slots__ = ()

    @property
    def logs(self) -> np.ndarray:
        """Stack of matrix logarithms, (n, d, d).  Validates positive
        definiteness on first access; the fill is idempotent."""
        if self._logs is None:
            logs = log_stack(self.points)
            logs.flags.writeable = False
            self._logs = logs
        return self._logs

    def log_pushforward(self) -> EmpiricalSymMeasure:
        """The measure pushed to the log space (shares the cached logs)."""
        out = EmpiricalSymMeasure.__new__(EmpiricalSymMeasure)
        out.points = self.logs
        out._logs = None
        return out

    @classmethod
    def from_matrices(cls, mats) -> "EmpiricalSpdMeasure":
        arrays = [m.array if isinstance(m, SymMatrix) else np.asarray(m, float) for m in mats]
        return cls(np.stack(arrays))


@dataclass(frozen=True)
class ProjectedMeasure:
    """One-dimensional pushforward of an empirical measure."""

    coords: np.ndarray

    @property
    def sorted_view(self) -> np.ndarray:
        return np.sort(self.coords)


@dataclass(frozen=True)
class DiscrepancyReport:
    """Value and metadata emitted by every distance computation.

    ``value`` is the raw estimator W_p^p (the p-th power), matching the
    return of the sliced algorithms; use :attr:`root` for the distance.
    """

    value: float
    estimator: str
    order_p: float
    num_projections: int | None = None
    seed: RngState | None = None
    wall_time_seconds: float = 0.0
    degenerate_resampled: int = 0
    converged: bool | None = None  # entropic solvers only

    def __post_init__(self):
        if not (self.value >= 0.0 and math.isfinite(self.value)):
            raise ValueError(f"discrepancy value must be finite and nonnegative, got {self.value}")

    @property
    def root(self) -> float:
        """The distance, value^(1/p)."""
        return self.value ** (1.0 / self.order_p)


def _check_unit_direction(a: SymMatrix) -> SymMatrix:
    if abs(np.linalg.norm(a.array) - 1.0) > 1e-10:
        raise NotUnitNorm("direction must have unit Frobenius norm (1e-10)")
    return a


def geodesic_project(a, m) -> SpdMatrix:
    """Projection of M onto the geodesic {exp(tA)} through the identity,
    exp(<A, log M>_F A)."""
    a = _check_unit_direction(as_sym(a))
    m = as_spd(m)
    if a.dim != m.dim:
        raise DimensionMismatch(f"dimensions differ: {a.dim} vs {m.dim}")
    t = float(np.sum(a.array * m.log.array))
    return sym_exp(t * a.array)


def geodesic_coordinate(a, m) -> float:
    """Signed coordinate <A, log M>_F of M along the geodesic {exp(tA)}."""
    a = _check_unit_direction(as_sym(a))
    m = as_spd(m)
    if a.dim != m.dim:
        raise DimensionMismatch(f"dimensions differ: {a.dim} vs {m.dim}")
    return float(np.sum(a.array * m.log.array))


def _sorted_descending_eigenbasis(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, q = np.linalg.eigh(a)
    return w[::-1], q[:, ::-1]


def busemann_coordinate_ai(a, m) -> float:
    """Horospherical (Busemann) coordinate of M along the affine-invariant
    geodesic through the identity with direction A.

    Diagonalize A = P diag(theta) P^T with theta sorted descending, move M
    to that basis, UDU-factor it, and return -sum_i theta_i log D_ii.
    """
    a = _check_unit_direction(as_sym(a))
    m = as_spd(m)
    if a.dim != m.dim:
        raise DimensionMismatch(f"dimensions differ: {a.dim} vs {m.dim}")
    theta, p = _sorted_descending_eigenbasis(a.array)
    if a.dim > 1 and np.min(theta[:-1] - theta[1:]) < DEGENERATE_GAP:
        raise DegenerateDirection("direction has (near-)repeated eigenvalues")
    m_tilde = p.T @ m.array @ p
    _, diag = udu_stack(m_tilde[None])
    return -float(theta @ np.log(diag[0]))


# -- 1D Wasserstein ----------------------------------------------------------


def _merged_quantile_grid(n: int, m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Interval lengths and atom indices of the merged quantile grid of two
    uniform empirical measures of sizes n and m (exact integer arithmetic)."""
    common = math.lcm(n, m)
    bx = np.arange(1, n + 1, dtype=np.int64) * (common // n)
    by = np.arange(1, m + 1, dtype=np.int64) * (common // m)
    qs = np.union1d(bx, by)
    lens = np.diff(np.concatenate(([np.int64(0)], qs))) / common
    ix = np.searchsorted(bx, qs)
    iy = np.searchsorted(by, qs)
    return lens, ix, iy


def _wpp_rows_equal(xs: np.ndarray, ys: np.ndarray, p: float) -> np.ndarray:
    diff = np.abs(xs - ys)
    if p == 2.0:
        return np.mean(diff * diff, axis=-1)
    if p == 1.0:
        return np.mean(diff, axis=-1)
    return np.mean(diff**p, axis=-1)


def _wpp_rows_unequal(xs: np.ndarray, ys: np.ndarray, p: float, grid) -> np.ndarray:
    lens, ix, iy = grid
    diff = np.abs(xs[..., ix] - ys[..., iy])
    if p == 2.0:
        return (diff * diff) @ lens
    if p == 1.0:
        return diff @ lens
    return (diff**p) @ lens


def _wpp_rows(xs_sorted: np.ndarray, ys_sorted: np.ndarray, p: float) -> np.ndarray:
    """W_p^p along the last axis of pre-sorted coordinate rows."""
    n, m = xs_sorted.shape[-1], ys_sorted.shape[-1]
    if n == m:
        return _wpp_rows_equal(xs_sorted, ys_sorted, p)
    return _wpp_rows_unequal(xs_sorted, ys_sorted, p, _merged_quantile_grid(n, m))


def wasserstein_1d(x, y, p: float = 2.0) -> float:
    """W_p^p between two uniform empirical measures on the line.

    Equal sizes reduce to the sorted matching; unequal sizes evaluate the
    quantile-function integral exactly on the merged quantile grid.
    Returns the p-th power.
    """
    if p < 1.0:
        raise ValueError("order p must be >= 1")
    x = np.sort(np.asarray(x, dtype=float).ravel())
    y = np.sort(np.asarray(y, dtype=float).ravel())
    if x.size == 0 or y.size == 0:
        raise EmptyMeasure("1D Wasserstein needs nonempty samples")
    return float(_wpp_rows(x[None], y[None], p)[0])


# -- Sliced estimators -------------------------------------------------------


def _check_pair(mu: EmpiricalSymMeasure, nu: EmpiricalSymMeasure, basis: ProjectionBasis, p: float):
    if p < 1.0:
        raise ValueError("order p must be >= 1")
    if mu.dim != nu.dim or mu.dim != basis.dim:
        raise DimensionMismatch(
            f"dimensions differ: mu {mu.dim}, nu {nu.dim}, basis {basis.dim}"
        )


def _sliced_mean(coords_mu: np.ndarray, coords_nu: np.ndarray, p: float) -> float:
    coords_mu = np.sort(coords_mu, axis=-1)
    coords_nu = np.sort(coords_nu, axis=-1)
    return float(np.mean(_wpp_rows(coords_mu, coords_nu, p)))


def spdsw(mu: EmpiricalSpdMeasure, nu: EmpiricalSpdMeasure, basis: ProjectionBasis, p: float = 2.0) -> DiscrepancyReport:
    """Sliced discrepancy between SPD-valued measures: average over the
    basis directions of W_p^p between geodesic-coordinate pushforwards."""
    t0 = time.perf_counter()
    _check_pair(mu, nu, basis, p)
    value = _sliced_mean(basis.project_symmetric(mu.logs), basis.project_symmetric(nu.logs), p)
    return DiscrepancyReport(
        value=value,
        estimator="spdsw",
        order_p=p,
        num_projections=basis.count,
        seed=basis.seed,
        wall_time_seconds=time.perf_counter() - t0,
    )


def sym_sw(mu_log: EmpiricalSymMeasure, nu_log: EmpiricalSymMeasure, basis: ProjectionBasis, p: float = 2.0) -> DiscrepancyReport:
    """Sliced discrepancy between measures of symmetric matrices, slicing
    through the Frobenius inner product <A, B>."""
    t0 = time.perf_counter()
    _check_pair(mu_log, nu_log, basis, p)
    value = _sliced_mean(
        basis.project_symmetric(mu_log.points), basis.project_symmetric(nu_log.points), p
    )
    return DiscrepancyReport(
        value=value,
        estimator="symsw",
        order_p=p,
        num_projections=basis.count,
        seed=basis.seed,
        wall_time_seconds=time.perf_counter() - t0,
    )


def log_sw(mu: EmpiricalSpdMeasure, nu: EmpiricalSpdMeasure, basis: ProjectionBasis, p: float = 2.0) -> DiscrepancyReport:
    """Euclidean sliced Wasserstein on the log-mapped measures, with
    directions drawn uniformly on the sphere of the isometric
    vectorization (``vec_sphere`` basis)."""
    t0 = time.perf_counter()
    if basis.sampler_kind != "vec_sphere":
        raise ValueError("log_sw requires a vec_sphere basis")
    _check_pair(mu, nu, basis, p)
    value = _sliced_mean(basis.project_symmetric(mu.logs), basis.project_symmetric(nu.logs), p)
    return DiscrepancyReport(
        value=value,
        estimator="logsw",
        order_p=p,
        num_projections=basis.count,
        seed=basis.seed,
        wall_time_seconds=time.perf_counter() - t0,
    )


def _busemann_coords_stack(points: np.ndarray, p_tilde: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Horospherical coordinates of a stack of SPD matrices for one sorted
    direction eigenbasis."""
    m_tilde = p_tilde.T @ points @ p_tilde
    _, diag = udu_stack(m_tilde)
    return -(np.log(diag) @ theta)


def hspdsw(mu: EmpiricalSpdMeasure, nu: EmpiricalSpdMeasure, basis: ProjectionBasis, p: float = 2.0) -> DiscrepancyReport:
    """Horospherical sliced discrepancy under the affine-invariant geometry.

    Each direction is diagonalized with eigenvalues sorted descending; both
    measures are rotated into that basis, UDU-factored, and projected via
    the Busemann coordinate.  Directions with (near-)repeated eigenvalues
    are redrawn from a reserved substream of the basis seed and counted.
    """
    t0 = time.perf_counter()
    if basis.sampler_kind != "eig_uniform":
        raise ValueError("hspdsw requires an eig_uniform basis")
    _check_pair(mu, nu, basis, p)

    eigvals, eigvecs = np.linalg.eigh(basis.directions)
    resampled = 0
    values = np.empty(basis.count)
    for i in range(basis.count):
        theta, vecs = eigvals[i][::-1], eigvecs[i][:, ::-1]
        while mu.dim > 1 and np.min(theta[:-1] - theta[1:]) < DEGENERATE_GAP:
            if basis.seed is None:
                raise DegenerateDirection(
                    f"direction {i} has (near-)repeated eigenvalues and the basis "
                    "carries no seed to redraw from"
                )
            redraw = build_projection_basis(
                basis.seed.substream(_RESAMPLE_STREAM_OFFSET + resampled), mu.dim, 1, "eig_uniform"
            )
            theta, vecs = _sorted_descending_eigenbasis(redraw.directions[0])
            resampled += 1
        cm = np.sort(_busemann_coords_stack(mu.points, vecs, theta))
        cn = np.sort(_busemann_coords_stack(nu.points, vecs, theta))
        values[i] = _wpp_rows(cm[None], cn[None], p)[0]
    return DiscrepancyReport(
        value=float(np.mean(values)),
        estimator="hspdsw",
        order_p=p,
        num_projections=basis.count,
        seed=basis.seed,
        wall_time_seconds=time.perf_counter() - t0,
        degenerate_resampled=resampled,
    )


ESTIMATOR_FUNCS = {
    "spdsw": spdsw,
    "logsw": log_sw,
    "hspdsw": hspdsw,
}


def mc_error_estimate(
    mu: EmpiricalSpdMeasure,
    nu: EmpiricalSpdMeasure,
    p: float,
    L_values,
    repetitions: int,
    rng: RngState,
    L_star: int = 10_000,
    sampler_kind: str = "eig_uniform",
) -> list[dict]:
    """Monte Carlo error of the sliced estimator versus the number of
    projections.

    The reference value uses a fixed basis of ``L_star`` directions drawn
    from ``rng`` itself; each (L, repetition) estimate uses a fresh basis
    on its own substream.  Requesting L == L_star reuses the reference
    basis (the estimate is the reference, error exactly zero).
    """
    reference_basis = build_projection_basis(rng, mu.dim, L_star, sampler_kind)
    reference = spdsw(mu, nu, reference_basis, p).value

    mu_logs, nu_logs = mu.logs, nu.logs
    rows = []
    for k, L in enumerate(L_values):
        if L == L_star:
            errors = np.zeros(1)
        else:
            errors = np.empty(repetitions)
            for r in range(repetitions):
                basis = build_projection_basis(
                    rng.substream(1 + r * len(L_values) + k), mu.dim, L, sampler_kind
                )
                est = _sliced_mean(
                    basis.project_symmetric(mu_logs), basis.project_symmetric(nu_logs), p
                )
                errors[r] = abs(est - reference)
        half_ci = 1.96 * errors.std(ddof=1) / np.sqrt(errors.size) if errors.size > 1 else 0.0
        rows.append(
            {
                "L": int(L),
                "mean_abs_error": float(errors.mean()),
                "ci95_low": float(errors.mean() - half_ci),
                "ci95_high": float(errors.mean() + half_ci),
                "repetitions": int(errors.size),
            }
        )
    return rows
