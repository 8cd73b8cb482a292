"""Dense complex-matrix helpers used by the scattering-matrix optimizers.

Everything here is a pure function of its inputs. Random generators take an
explicit seed or ``numpy.random.Generator``.
"""

from typing import NamedTuple, Optional, Union

import numpy as np

TOL_UNITARY = 1e-8
TOL_RECON = 1e-8
TOL_SYM = 1e-8

SeedLike = Union[int, np.random.Generator, np.random.SeedSequence, None]


class ContractError(ValueError):
    """An input violates a structural precondition (symmetry, skewness...)."""


class TakagiFactors(NamedTuple):
    q: np.ndarray
    sigma: np.ndarray


def vec(a: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(a).reshape(-1, order="F")


def unvec(r: np.ndarray, m: int) -> np.ndarray:
    return np.asarray(r).reshape(m, m, order="F")


def _check_dim(m: int) -> int:
    if int(m) != m or m < 1:
        raise ValueError(f"dimension must be a positive integer, got {m!r}")
    return int(m)


def transpose_permutation(m: int) -> np.ndarray:
    """Index map ``perm`` with ``vec(A.T) == vec(A)[perm]``."""
    m = _check_dim(m)
    idx = np.arange(m * m).reshape(m, m, order="F")
    return vec(idx.T)


def commutation_matrix(m: int) -> np.ndarray:
    """The m^2 x m^2 permutation P with ``P @ vec(A) == vec(A.T)``."""
    perm = transpose_permutation(m)
    return np.eye(m * m)[perm, :]


def symmetric_index_pairs(m: int):
    """Index pairs (i, j), i <= j, in the column order used by the basis."""
    m = _check_dim(m)
    return [(i, j) for j in range(m) for i in range(j + 1)]


def symmetric_nullspace_basis(m: int) -> np.ndarray:
    """Orthonormal basis of the symmetric subspace of vec(C^{m x m}).

    Built directly from index pairs (i <= j): a column is ``e_ii`` on the
    diagonal and ``(e_ij + e_ji)/sqrt(2)`` off it. Columns span the null
    space of ``I - P``.
    """
    pairs = symmetric_index_pairs(m)
    basis = np.zeros((m * m, len(pairs)))
    for col, (i, j) in enumerate(pairs):
        if i == j:
            basis[i + j * m, col] = 1.0
        else:
            basis[i + j * m, col] = basis[j + i * m, col] = 1.0 / np.sqrt(2.0)
    return basis


def symmetric_from_coords(x: np.ndarray, m: int) -> np.ndarray:
    """``unvec(N @ x)`` without forming N."""
    theta = np.zeros((m, m), dtype=complex)
    iu = np.triu_indices(m)
    # triu_indices is row-major; reorder to the basis column order (by j, then i)
    order = np.lexsort((iu[0], iu[1]))
    rows, cols = iu[0][order], iu[1][order]
    scale = np.where(rows == cols, 1.0, 1.0 / np.sqrt(2.0))
    theta[rows, cols] = x * scale
    theta[cols, rows] = x * scale
    return theta


def _fro(a: np.ndarray) -> float:
    return float(np.linalg.norm(a))


def _require_symmetric(a: np.ndarray, tol: float = TOL_SYM) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {a.shape}")
    if _fro(a - a.T) > tol * max(1.0, _fro(a)):
        raise ContractError("matrix is not complex symmetric")
    return a


def _phase_clusters(sigma: np.ndarray, rtol: float):
    """Group (descending) singular values whose gaps are below ``rtol``."""
    scale = max(float(sigma[0]) if sigma.size else 0.0, np.finfo(float).tiny)
    clusters, start = [], 0
    for i in range(1, sigma.size + 1):
        if i == sigma.size or sigma[i - 1] - sigma[i] > rtol * scale:
            clusters.append((start, i))
            start = i
    return clusters, scale


def _unitary_sqrt(z: np.ndarray) -> np.ndarray:
    """Primary square root of a normal, (near) unitary matrix.

    The branch cut is placed in the widest gap between eigenvalue phases so
    that clustered eigenvalues receive the same root; the result is then a
    polynomial in ``z`` and inherits its symmetry.
    """
    if z.shape[0] == 1:
        return np.exp(0.5j * np.angle(z))
    from scipy.linalg import schur

    t, w = schur(z, output="complex")
    lam = np.diag(t)
    phases = np.sort(np.mod(np.angle(lam), 2 * np.pi))
    gaps = np.diff(np.concatenate([phases, [phases[0] + 2 * np.pi]]))
    i = int(np.argmax(gaps))
    cut = phases[i] + gaps[i] / 2
    # angles measured on (cut - 2pi, cut]
    ang = cut - np.mod(cut - np.angle(lam), 2 * np.pi)
    return (w * np.exp(0.5j * ang)) @ w.conj().T


def takagi(a: np.ndarray, cluster_rtol: float = 1e-9) -> TakagiFactors:
    """Takagi factorization ``a = q @ diag(sigma) @ q.T`` of a complex symmetric matrix.

    Uses the SVD ``a = U S V^H``. For symmetric ``a`` the coupling
    ``Z = U^H conj(V)`` is block diagonal over clusters of equal singular
    values, each block symmetric unitary, and ``q = U @ sqrt(Z)``. The null
    cluster is left at the identity.
    """
    a = _require_symmetric(a)
    m = a.shape[0]
    u, s, vh = np.linalg.svd(a)
    z = u.conj().T @ vh.T
    clusters, scale = _phase_clusters(s, cluster_rtol)
    root = np.zeros((m, m), dtype=complex)
    for lo, hi in clusters:
        if s[lo] <= cluster_rtol * scale or s[lo] == 0.0:
            root[lo:hi, lo:hi] = np.eye(hi - lo)
            continue
        block = z[lo:hi, lo:hi]
        block = 0.5 * (block + block.T)
        # re-unitarize the block before taking the root
        bu, _, bvh = np.linalg.svd(block)
        root[lo:hi, lo:hi] = _unitary_sqrt(bu @ bvh)
    return TakagiFactors(u @ root, s)


def takagi_reconstruct(f: TakagiFactors) -> np.ndarray:
    return (f.q * f.sigma) @ f.q.T


def expm_skew_hermitian(b: np.ndarray, tol: float = TOL_SYM) -> np.ndarray:
    """Matrix exponential of a skew-Hermitian matrix via ``eigh(-1j * b)``."""
    b = np.asarray(b, dtype=complex)
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {b.shape}")
    if _fro(b + b.conj().T) > tol * max(1.0, _fro(b)):
        raise ContractError("matrix is not skew-Hermitian")
    h = -1j * b
    lam, w = np.linalg.eigh(0.5 * (h + h.conj().T))
    return (w * np.exp(1j * lam)) @ w.conj().T


def project_to_unitary(theta: np.ndarray) -> np.ndarray:
    """Nearest symmetric unitary matrix, ``Q Q^T`` from the Takagi factors."""
    q = takagi(theta).q
    out = q @ q.T
    return 0.5 * (out + out.T)


def project_to_unitary_svd(theta: np.ndarray, rank_rtol: float = 1e-10) -> np.ndarray:
    """Same projection through the SVD partition ``[U_d, conj(V_{M-d})] V^H``.

    Kept as an independent cross-check of :func:`project_to_unitary`.
    """
    theta = _require_symmetric(theta)
    u, s, vh = np.linalg.svd(theta)
    v = vh.conj().T
    d = int(np.sum(s > rank_rtol * max(s[0], np.finfo(float).tiny))) if s.size else 0
    left = np.hstack([u[:, :d], v[:, d:].conj()])
    return left @ vh


def as_generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def complex_gaussian(shape, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. CN(0, 1) entries."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_unitary(m: int, seed: SeedLike = None) -> np.ndarray:
    """Haar-distributed unitary from the QR of a complex Gaussian matrix."""
    m = _check_dim(m)
    rng = as_generator(seed)
    q, r = np.linalg.qr(complex_gaussian((m, m), rng))
    d = np.diag(r)
    ph = np.where(np.abs(d) > 0, d / np.where(np.abs(d) > 0, np.abs(d), 1.0), 1.0)
    return q * ph


def unitarity_error(q: np.ndarray) -> float:
    return _fro(q.conj().T @ q - np.eye(q.shape[1]))


def symmetry_error(a: np.ndarray) -> float:
    return _fro(a - a.T)


def orthonormal_columns(a: np.ndarray, n: Optional[int] = None) -> np.ndarray:
    """Orthonormal basis (via thin SVD) for the column span of ``a``."""
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    if n is None:
        n = a.shape[1]
    return u[:, :n]
