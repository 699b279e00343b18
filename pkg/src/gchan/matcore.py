"""Dense Hermitian linear-algebra kernels.

Matrices are plain ``numpy`` arrays; a "Hermitian matrix" is any square array
equal to its conjugate transpose within :data:`HERMITIAN_RTOL`.
"""
from __future__ import annotations

import numpy as np

HERMITIAN_RTOL = 1e-12
PSD_RTOL = 1e-10


class SymmetryError(ValueError):
    """Input matrix is not Hermitian within tolerance."""


class PSDError(ValueError):
    """Input matrix has a negative eigenvalue beyond the clamp tolerance."""


def _scale(H) -> float:
    H = np.asarray(H)
    return float(np.linalg.norm(H, 2)) if H.size else 0.0


def as_hermitian(H, rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    """Validate ``H`` and return its exactly symmetrized copy."""
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise SymmetryError(f"expected a square matrix, got shape {H.shape}")
    skew = float(np.linalg.norm(H - H.conj().T, 2)) if H.size else 0.0
    scale = _scale(H)
    if skew > rtol * max(scale, 1e-300):
        raise SymmetryError(
            f"matrix is not Hermitian: ||H - H*|| = {skew:.3e} vs ||H|| = {scale:.3e} "
            f"(rtol {rtol:g})"
        )
    return 0.5 * (H + H.conj().T)


def eig_hermitian(H) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian matrix.

    Returns
    -------
    eigenvalues : ndarray
        Real eigenvalues in ascending order.
    U : ndarray
        Unitary whose columns are the matching eigenvectors, so that
        ``U @ diag(eigenvalues) @ U.conj().T`` reconstructs ``H``.
    """
    H = as_hermitian(H)
    w, U = np.linalg.eigh(H)
    return w, U


def _psd_eigenvalues(w: np.ndarray, scale: float) -> np.ndarray:
    floor = -PSD_RTOL * scale
    if w.size and w[0] < floor:
        raise PSDError(
            f"matrix is not positive semidefinite: smallest eigenvalue {w[0]:.6e} "
            f"below clamp floor {floor:.3e}"
        )
    return np.clip(w, 0.0, None)


def psd_power(H, p: float) -> np.ndarray:
    """Raise a positive semidefinite matrix to a real power ``p >= 0``.

    Eigenvalues in ``[-1e-10 ||H||, 0)`` are clamped to zero first; ``0**0`` is 1.
    """
    if p < 0:
        raise ValueError(f"power must be nonnegative, got {p}")
    w, U = eig_hermitian(H)
    w = _psd_eigenvalues(w, _scale(H))
    wp = np.power(w, p)
    return (U * wp) @ U.conj().T


def det_psd(H) -> float:
    """Determinant of a PSD matrix as the product of its clamped eigenvalues."""
    w, _ = eig_hermitian(H)
    w = _psd_eigenvalues(w, _scale(H))
    return float(np.prod(w))


def is_psd(H, rtol: float = PSD_RTOL) -> bool:
    w, _ = eig_hermitian(H)
    return bool(w.size == 0 or w[0] >= -rtol * max(_scale(H), 1.0))
