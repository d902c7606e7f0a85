"""Dense float64 matrix kernels: deterministic SVD, symmetric eigendecomposition,
and pseudo-inverse matrix square roots.

All factorizations use a fixed sign convention (the largest-magnitude entry of
each factor column is non-negative) so that repeated runs produce bit-identical
matrices. LAPACK output is deterministic for fixed inputs; the convention removes
the remaining sign ambiguity.
"""

import numpy as np

from .errors import NotPSDError, NumericalError

SYM_TOL = 1e-9


def _as_matrix(m, name="matrix"):
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise NumericalError(f"{name} must be 2-D, got {a.ndim}-D")
    if not np.all(np.isfinite(a)):
        raise NumericalError(f"{name} contains non-finite entries")
    return a


def _column_signs(columns):
    """Signs that make the largest-magnitude entry of each column non-negative."""
    if columns.shape[1] == 0:
        return np.ones(0)
    picks = np.argmax(np.abs(columns), axis=0)
    signs = np.sign(columns[picks, np.arange(columns.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def svd(m):
    """Full SVD m = u @ S @ vt with S the rows x cols rectangular diagonal of s.

    u is rows x rows, vt is cols x cols, s is descending and non-negative.
    Sign fixing: paired columns of u/v (the first min(rows, cols)) are flipped
    together, so the product is unchanged; trailing null-space columns are
    flipped independently.
    """
    a = _as_matrix(m)
    u, s, vt = np.linalg.svd(a, full_matrices=True)
    k = min(a.shape)
    signs = _column_signs(u[:, :k])
    u[:, :k] *= signs
    vt[:k, :] *= signs[:, None]
    if u.shape[1] > k:
        u[:, k:] *= _column_signs(u[:, k:])
    if vt.shape[0] > k:
        vt[k:, :] *= _column_signs(vt[k:, :].T)[:, None]
    return u, s, vt


def sym_eig(m):
    """Eigendecomposition of a symmetric matrix.

    Returns (eigenvalues descending, eigenvector matrix with orthonormal
    columns), with the same sign convention as `svd`. The input must be
    symmetric within a 1e-9 relative tolerance; it is symmetrized exactly
    before factorization.
    """
    a = _as_matrix(m)
    n, c = a.shape
    if n != c:
        raise NumericalError(f"matrix must be square, got {n}x{c}")
    scale = np.max(np.abs(a)) if a.size else 0.0
    if np.max(np.abs(a - a.T), initial=0.0) > SYM_TOL * max(scale, np.finfo(np.float64).tiny):
        raise NumericalError("matrix is not symmetric within tolerance")
    w, v = np.linalg.eigh((a + a.T) / 2.0)
    w = w[::-1].copy()
    v = v[:, ::-1].copy()
    v *= _column_signs(v)
    return w, v


def _psd_power(m, power, eps_rel, name):
    if eps_rel <= 0:
        raise NumericalError("eps_rel must be positive")
    w, v = sym_eig(m)
    lam_max = w[0] if w.size else 0.0
    if np.any(w < -eps_rel * lam_max):
        raise NotPSDError(
            f"{name}: eigenvalue {w[-1]:.3e} below PSD tolerance {-eps_rel * lam_max:.3e}"
        )
    kept = w > eps_rel * lam_max
    f = np.zeros_like(w)
    f[kept] = w[kept] ** power
    return (v * f) @ v.T


def inv_sqrt_psd(m, eps_rel=1e-10):
    """Pseudo-inverse square root of a PSD matrix.

    Eigenvalues above eps_rel * lambda_max map to lambda**-0.5, the rest to 0.
    For full-rank m the result r satisfies r @ m @ r = identity.
    """
    return _psd_power(m, -0.5, eps_rel, "inv_sqrt_psd")


def sqrt_psd(m, eps_rel=1e-10):
    """Pseudo square root of a PSD matrix (lambda**0.5 above the same floor).

    This is the Moore-Penrose-consistent inverse of `inv_sqrt_psd` and is what
    the de-whitening step uses for the inverse of the whitening map.
    """
    return _psd_power(m, 0.5, eps_rel, "sqrt_psd")
