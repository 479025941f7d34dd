"""Symmetric/SPD matrix primitives.

Everything here reduces to one numerical kernel: the eigendecomposition of a
real symmetric matrix (delegated to LAPACK through ``numpy.linalg.eigh``).
Matrix log/exp, the two geodesic distances, the Daleckii-Krein derivative of
the log, and the UDU factorization are built on top of it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite

# Relative positive-definiteness threshold: an SPD matrix must have
# min(eig) > PD_TOLERANCE_FACTOR * max(|eig|).
PD_TOLERANCE_FACTOR = 1e-12

# Largest eigenvalue admitted by the matrix exponential; log(float64 max)
# is ~709.78, kept with a safety margin.
EXP_CAP = 700.0

# Relative eigenvalue gap below which the first divided difference of the
# log switches to its limit value 1/lambda.
LOEWNER_GAP_FACTOR = 1e-10


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Return (A + A^T)/2, batched over leading axes."""
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + np.swapaxes(a, -2, -1))


def pd_tolerance(eigenvalues: np.ndarray) -> np.ndarray:
    """Positive-definiteness threshold relative to the spectral radius."""
    scale = np.max(np.abs(eigenvalues), axis=-1)
    return PD_TOLERANCE_FACTOR * scale


@dataclass(frozen=True)
class EigenPair:
    """Eigendecomposition M = Q diag(w) Q^T with w sorted ascending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        q = self.eigenvectors
        return (q * self.eigenvalues) @ q.T


class SymMatrix:
    """A real symmetric d x d matrix.

    Inputs are symmetrized on construction ((M + M^T)/2): covariance
    estimators routinely produce tiny asymmetries, so rejecting them would
    be hostile. The stored array is immutable.
    """

    __slots__ = ("array", "dim")

    def __init__(self, entries):
        a = np.asarray(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
        a = symmetrize(a)
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix entries must be finite")
        a.flags.writeable = False
        object.__setattr__(self, "array", a)
        object.__setattr__(self, "dim", a.shape[0])

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.array))

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


class SpdMatrix(SymMatrix):
    """A symmetric positive definite d x d matrix.

    The eigendecomposition is computed at construction (it both validates
    positive definiteness and backs every subsequent operation). The matrix
    log is cached on first use; the cache fill is idempotent and therefore
    race-safe.
    """

    __slots__ = ("eig", "_log")

    def __init__(self, entries, _eig: EigenPair | None = None):
        super().__init__(entries)
        if _eig is None:
            w, q = np.linalg.eigh(self.array)
            _eig = EigenPair(w, q)
        tol = pd_tolerance(_eig.eigenvalues)
        if _eig.eigenvalues[0] <= tol:
            raise NotPositiveDefinite(
                f"smallest eigenvalue {_eig.eigenvalues[0]:.3e} is at or below "
                f"tolerance {tol:.3e}"
            )
        object.__setattr__(self, "eig", _eig)
        object.__setattr__(self, "_log", None)

    @property
    def log(self) -> SymMatrix:
        """Matrix logarithm, computed once and cached."""
        cached = object.__getattribute__(self, "_log")
        if cached is None:
            w, q = self.eig.eigenvalues, self.eig.eigenvectors
            cached = SymMatrix((q * np.log(w)) @ q.T)
            object.__setattr__(self, "_log", cached)
        return cached


def as_sym(x) -> SymMatrix:
    return x if isinstance(x, SymMatrix) and not isinstance(x, SpdMatrix) else SymMatrix(
        x.array if isinstance(x, SymMatrix) else x
    )


def as_spd(x) -> SpdMatrix:
    return x if isinstance(x, SpdMatrix) else SpdMatrix(x.array if isinstance(x, SymMatrix) else x)


def _check_same_dim(x: SymMatrix, y: SymMatrix) -> None:
    if x.dim != y.dim:
        raise DimensionMismatch(f"dimensions differ: {x.dim} vs {y.dim}")


def sym_log(m) -> SymMatrix:
    """Matrix logarithm of an SPD matrix, Q diag(log w) Q^T."""
    return as_spd(m).log


def sym_exp(s) -> SpdMatrix:
    """Matrix exponential of a symmetric matrix, positive definite by construction."""
    s = as_sym(s)
    w, q = np.linalg.eigh(s.array)
    if w[-1] > EXP_CAP:
        raise OverflowError(
            f"eigenvalue {w[-1]:.3e} exceeds the exponential cap {EXP_CAP}"
        )
    ew = np.exp(w)
    return SpdMatrix((q * ew) @ q.T, _eig=EigenPair(ew, q))


def dist_log_euclidean(x, y) -> float:
    """Log-Euclidean geodesic distance ||log X - log Y||_F."""
    x, y = as_spd(x), as_spd(y)
    _check_same_dim(x, y)
    return float(np.linalg.norm(x.log.array - y.log.array))


def dist_affine_invariant(x, y) -> float:
    """Affine-invariant geodesic distance, computed stably as
    ||log(X^{-1/2} Y X^{-1/2})||_F."""
    x, y = as_spd(x), as_spd(y)
    _check_same_dim(x, y)
    wx, qx = x.eig.eigenvalues, x.eig.eigenvectors
    inv_sqrt = (qx / np.sqrt(wx)) @ qx.T
    inner = symmetrize(inv_sqrt @ y.array @ inv_sqrt)
    w = np.linalg.eigh(inner)[0]
    if w[0] <= pd_tolerance(w):
        raise NotPositiveDefinite("whitened matrix lost positive definiteness")
    return float(np.sqrt(np.sum(np.log(w) ** 2)))


def _log_divided_differences(w: np.ndarray) -> np.ndarray:
    """Loewner matrix of the log: G_ij = (log w_i - log w_j)/(w_i - w_j),
    with the limit 1/w_i on (near-)coincident eigenvalues.

    Computed through log1p of the relative gap, which avoids the
    cancellation of log w_i - log w_j for close eigenvalues. Batched over
    leading axes of ``w``.
    """
    wi = w[..., :, None]
    wj = w[..., None, :]
    gap = wi - wj
    near = np.abs(gap) < LOEWNER_GAP_FACTOR * np.maximum(np.abs(wi), np.abs(wj))
    safe_gap = np.where(near, 1.0, gap)
    g = np.log1p(safe_gap / wj) / safe_gap
    return np.where(near, 1.0 / wi, g)


def _exp_divided_differences(w: np.ndarray) -> np.ndarray:
    """Loewner matrix of the exp: (e^{w_i} - e^{w_j})/(w_i - w_j), via
    expm1 of the gap (stable for all gaps), limit e^{w_i} on the diagonal."""
    wi = w[..., :, None]
    wj = w[..., None, :]
    gap = wi - wj
    zero = gap == 0.0
    safe_gap = np.where(zero, 1.0, gap)
    g = np.exp(wj) * (np.expm1(safe_gap) / safe_gap)
    return np.where(zero, np.exp(wi), g)


def log_frechet_derivative(m, h) -> SymMatrix:
    """Directional derivative of the matrix log at M along symmetric H
    (Daleckii-Krein first divided differences)."""
    m, h = as_spd(m), as_sym(h)
    _check_same_dim(m, h)
    w, q = m.eig.eigenvalues, m.eig.eigenvectors
    inner = q.T @ h.array @ q
    return SymMatrix(q @ (_log_divided_differences(w) * inner) @ q.T)


def exp_frechet_sym(s, h) -> SymMatrix:
    """Directional derivative of the matrix exp at symmetric S along
    symmetric H. Same divided-difference scheme as the log derivative."""
    s, h = as_sym(s), as_sym(h)
    _check_same_dim(s, h)
    w, q = np.linalg.eigh(s.array)
    inner = q.T @ h.array @ q
    return SymMatrix(q @ (_exp_divided_differences(w) * inner) @ q.T)


def udu_decompose(m) -> tuple[np.ndarray, np.ndarray]:
    """Factor M = U D U^T with U unit upper triangular and D positive diagonal.

    Returns ``(U, D)`` with D as a length-d vector of diagonal entries.
    Raises NotPositiveDefinite on a nonpositive pivot.
    """
    m = as_spd(m)
    u, d = udu_stack(m.array[None, :, :])
    return u[0], d[0]


def udu_stack(mats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched UDU^T factorization of a stack of SPD matrices (b, d, d).

    Backward (bottom-right first) analogue of the LDL^T elimination; each
    column update is vectorized over the batch.
    """
    m = np.asarray(mats, dtype=float)
    b, d, _ = m.shape
    u = np.broadcast_to(np.eye(d), (b, d, d)).copy()
    diag = np.zeros((b, d))
    for j in range(d - 1, -1, -1):
        tail = slice(j + 1, d)
        diag[:, j] = m[:, j, j] - np.sum(u[:, j, tail] ** 2 * diag[:, tail], axis=-1)
        if np.any(diag[:, j] <= 0.0):
            raise NotPositiveDefinite(f"nonpositive pivot in column {j}")
        if j > 0:
            acc = np.einsum("bik,bk,bk->bi", u[:, :j, tail], diag[:, tail], u[:, j, tail])
            u[:, :j, j] = (m[:, :j, j] - acc) / diag[:, j, None]
    return u, diag


def eigh_stack(mats: np.ndarray, require_pd: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Batched eigendecomposition of symmetric matrices (b, d, d)."""
    w, q = np.linalg.eigh(np.asarray(mats, dtype=float))
    if require_pd:
        tol = pd_tolerance(w)
        bad = w[..., 0] <= tol
        if np.any(bad):
            k = int(np.argmax(bad))
            raise NotPositiveDefinite(
                f"matrix {k} in the stack has smallest eigenvalue "
                f"{w[k, 0]:.3e} at or below tolerance"
            )
    return w, q


def log_stack(mats: np.ndarray) -> np.ndarray:
    """Matrix logarithms of a stack of SPD matrices (b, d, d)."""
    w, q = eigh_stack(mats)
    return np.einsum("bik,bk,bjk->bij", q, np.log(w), q)


def exp_stack(mats: np.ndarray) -> np.ndarray:
    """Matrix exponentials of a stack of symmetric matrices (b, d, d)."""
    w, q = np.linalg.eigh(symmetrize(mats))
    if np.any(w > EXP_CAP):
        raise OverflowError("eigenvalue exceeds the exponential cap")
    return np.einsum("bik,bk,bjk->bij", q, np.exp(w), q)


def log_frechet_stack(w: np.ndarray, q: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Batched Dlog at matrices given by their eigendecompositions (w, q),
    applied along the stack of symmetric directions ``h``."""
    inner = np.einsum("bki,bkl,blj->bij", q, h, q)
    g = _log_divided_differences(w)
    return np.einsum("bik,bkl,bjl->bij", q, g * inner, q)


# Isometric vectorization of symmetric matrices: off-diagonal entries are
# scaled by sqrt(2) so the Euclidean norm of the vector equals the
# Frobenius norm of the matrix.


def sym_dim(d: int) -> int:
    """Dimension d(d+1)/2 of the space of symmetric d x d matrices."""
    return d * (d + 1) // 2


def vech_isometric(mats: np.ndarray) -> np.ndarray:
    """Map symmetric matrices (..., d, d) to vectors (..., d(d+1)/2)
    preserving the Frobenius inner product."""
    m = np.asarray(mats, dtype=float)
    d = m.shape[-1]
    iu = np.triu_indices(d, k=1)
    diag = m[..., np.arange(d), np.arange(d)]
    off = m[..., iu[0], iu[1]] * np.sqrt(2.0)
    return np.concatenate([diag, off], axis=-1)


def unvech_isometric(vecs: np.ndarray) -> np.ndarray:
    """Inverse of :func:`vech_isometric`."""
    v = np.asarray(vecs, dtype=float)
    n = v.shape[-1]
    d = int(round((np.sqrt(8 * n + 1) - 1) / 2))
    if sym_dim(d) != n:
        raise DimensionMismatch(f"vector length {n} is not a triangular number")
    out = np.zeros(v.shape[:-1] + (d, d))
    idx = np.arange(d)
    out[..., idx, idx] = v[..., :d]
    iu = np.triu_indices(d, k=1)
    off = v[..., d:] / np.sqrt(2.0)
    out[..., iu[0], iu[1]] = off
    out[..., iu[1], iu[0]] = off
    return out
