"""Shared dense linear-algebra helpers for PSD matrices."""

import numpy as np

__all__ = [
    "symmetrize",
    "project_psd",
    "psd_sqrt",
    "psd_factor",
    "min_eigenvalue",
    "assert_psd",
]


def symmetrize(mat):
    """Return the symmetric part (M + M^T) / 2."""
    return 0.5 * (mat + mat.T)


def project_psd(mat, clip=0.0):
    """Nearest-PSD projection in Frobenius norm.

    Symmetric eigendecomposition with eigenvalues below ``clip`` raised to
    ``clip``. Returns the projected matrix and the magnitude of the largest
    clip applied (0 when the input was already PSD).
    """
    sym = symmetrize(np.asarray(mat, dtype=float))
    vals, vecs = np.linalg.eigh(sym)
    shift = max(0.0, float(clip - vals.min()))
    clipped = np.maximum(vals, clip)
    return symmetrize((vecs * clipped) @ vecs.T), shift


def psd_sqrt(mat):
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues are clamped at 0 before taking the root, so slightly
    indefinite inputs (roundoff) are tolerated.
    """
    sym = symmetrize(np.asarray(mat, dtype=float))
    vals, vecs = np.linalg.eigh(sym)
    root = np.sqrt(np.maximum(vals, 0.0))
    return symmetrize((vecs * root) @ vecs.T)


def psd_factor(mat, rank=None, tol=1e-12):
    """Thin factor F with F F^T = mat (PSD input assumed).

    Built from the symmetric eigendecomposition, keeping the columns whose
    eigenvalue exceeds ``tol`` times the largest. When ``rank`` is given the
    factor is zero-padded (or truncated, never dropping significant columns)
    to exactly that many columns so downstream problem shapes stay fixed.

    Any factor with F F^T = mat is interchangeable inside quadratic forms, so
    this is value-equivalent to the full symmetric square root wherever only
    F F^T matters.
    """
    sym = symmetrize(np.asarray(mat, dtype=float))
    vals, vecs = np.linalg.eigh(sym)
    vals = np.maximum(vals, 0.0)
    # eigh returns ascending order; keep the significant tail
    cutoff = tol * max(vals[-1], tol)
    keep = vals > cutoff
    fac = vecs[:, keep] * np.sqrt(vals[keep])
    # deterministic column order: descending eigenvalue
    fac = fac[:, ::-1]
    if fac.shape[1] == 0:
        # zero matrix: keep one explicit zero column so shapes stay usable
        fac = np.zeros((sym.shape[0], 1))
    if rank is not None:
        k = fac.shape[1]
        if k > rank:
            raise ValueError(f"factor needs {k} columns, only {rank} allowed")
        if k < rank:
            fac = np.hstack([fac, np.zeros((fac.shape[0], rank - k))])
    return fac


def min_eigenvalue(mat):
    """Smallest eigenvalue of the symmetric part."""
    return float(np.linalg.eigvalsh(symmetrize(np.asarray(mat, dtype=float)))[0])


def assert_psd(mat, tol=1e-9, name="matrix"):
    """Raise ValueError if the symmetric part has an eigenvalue below -tol."""
    low = min_eigenvalue(mat)
    if low < -tol:
        raise ValueError(f"{name} is not PSD (min eigenvalue {low:.3e})")
