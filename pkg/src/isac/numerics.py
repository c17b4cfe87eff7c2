"""Complex dense linear algebra and spectral primitives."""

# %% Imports
import numpy as np
from scipy import linalg

from isac.config import HERMITIAN_TOLERANCE, RANK_TOLERANCE

# 2-D complex128 array, rows × cols
ComplexMatrix = np.ndarray
# 3-D complex128 array, channels × height × width (optionally with a leading batch axis)
ComplexTensor = np.ndarray


# %%
def dft_matrix(n: int) -> ComplexMatrix:
    """Unnormalised N-point DFT matrix, entry (n1, n2) = exp(-j2π·n1·n2/N).

    Args:
        n: Number of points (at least 1)

    Returns:
        n × n complex matrix

    Raises:
        ValueError: If n is below 1

    >>> np.allclose(dft_matrix(1), [[1]])
    True
    >>> np.allclose(dft_matrix(2), [[1, 1], [1, -1]])
    True
    >>> complex(np.round(dft_matrix(4)[1, 1], 12))
    -1j
    >>> dft_matrix(0)
    Traceback (most recent call last):
        ...
    ValueError: DFT size must be at least 1, got 0

    """
    if n < 1:
        raise ValueError(f"DFT size must be at least 1, got {n}")
    index = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(index, index) / n)


# %%
def fft_cols(m: ComplexMatrix) -> ComplexMatrix:
    """Apply the unnormalised DFT to every column, i.e. ``F_N @ m``.

    Stacked input is transformed matrix by matrix along the second-to-last axis.

    >>> bool(fft_cols(np.zeros((4, 2), dtype=complex)).any())
    False
    >>> fft_cols(np.array([[1], [0], [0], [0]], dtype=complex)).ravel().real.tolist()
    [1.0, 1.0, 1.0, 1.0]
    >>> np.allclose(fft_cols(np.ones((4, 1))).ravel(), [4, 0, 0, 0])
    True
    >>> m = np.random.default_rng(0).normal(size=(6, 3)) + 0j
    >>> np.allclose(fft_cols(m), dft_matrix(6) @ m, rtol=1e-10, atol=1e-12)
    True

    """
    return np.fft.fft(np.asarray(m, dtype=complex), axis=-2)


def ifft_rows(m: ComplexMatrix) -> ComplexMatrix:
    """Apply the unnormalised inverse DFT along every row, i.e. ``m @ F_N^H``.

    No 1/N factor is applied; callers needing a unitary pair scale explicitly.

    >>> m = np.random.default_rng(1).normal(size=(2, 5)) + 1j
    >>> n = m.shape[1]
    >>> np.allclose(ifft_rows(m), m @ dft_matrix(n).conj().T, rtol=1e-10)
    True
    >>> np.allclose(ifft_rows(fft_cols(m.T).T) / n, m, rtol=1e-10)
    True

    """
    return np.fft.ifft(np.asarray(m, dtype=complex), axis=-1, norm="forward")


# %%
def herm_eig(m: ComplexMatrix) -> tuple[np.ndarray, ComplexMatrix]:
    """Eigendecomposition of a Hermitian matrix, eigenvalues in descending order.

    The input is symmetrised as ``(m + m^H)/2`` before decomposition.

    Args:
        m: Square matrix, Hermitian within 1e-9

    Returns:
        Tuple of (real eigenvalues descending, matrix of orthonormal eigenvector columns)

    Raises:
        ValueError: If m is not square or not Hermitian within tolerance

    >>> values, vectors = herm_eig(np.eye(3))
    >>> values.tolist()
    [1.0, 1.0, 1.0]
    >>> values, vectors = herm_eig(np.diag([1.0, 5.0, 2.0]))
    >>> values.tolist()
    [5.0, 2.0, 1.0]
    >>> np.abs(vectors).round(12).tolist()
    [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]

    # Rank-1 outer product of an 8-element steering vector
    >>> a = np.exp(1j * np.pi * np.arange(8) * np.sin(np.radians(30)))
    >>> values, _ = herm_eig(np.outer(a, a.conj()))
    >>> np.allclose(values, [8, 0, 0, 0, 0, 0, 0, 0], atol=1e-10)
    True

    # Reconstruction of a random Hermitian matrix
    >>> rng = np.random.default_rng(7)
    >>> x = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    >>> h = x + x.conj().T
    >>> values, vectors = herm_eig(h)
    >>> bool(np.linalg.norm(vectors @ np.diag(values) @ vectors.conj().T - h)
    ...      <= 1e-8 * np.linalg.norm(h))
    True
    >>> bool(np.linalg.norm(vectors.conj().T @ vectors - np.eye(8)) <= 1e-8)
    True

    # Error case: non-square input
    >>> herm_eig(np.ones((2, 3)))
    Traceback (most recent call last):
        ...
    ValueError: Eigendecomposition needs a square matrix, got shape (2, 3)

    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:  # noqa: PLR2004 # matrices only
        raise ValueError(f"Eigendecomposition needs a square matrix, got shape {m.shape}")
    scale = max(float(np.abs(m).max()), 1.0)
    if np.abs(m - m.conj().T).max() > HERMITIAN_TOLERANCE * scale:
        raise ValueError("Matrix is not Hermitian within tolerance")
    values, vectors = linalg.eigh((m + m.conj().T) / 2)
    order = np.argsort(values)[::-1]
    return values[order], vectors[:, order]


# %%
def pinv(m: ComplexMatrix) -> ComplexMatrix:
    """Moore–Penrose pseudo-inverse of a full-column-rank matrix.

    Args:
        m: Matrix whose smallest singular value exceeds 1e-10 of the largest

    Returns:
        The pseudo-inverse, shape transposed relative to m

    Raises:
        numpy.linalg.LinAlgError: If m is rank-deficient within tolerance

    >>> np.allclose(pinv(np.eye(3)), np.eye(3))
    True
    >>> a = np.array([[3.0], [4.0j]])
    >>> np.allclose(pinv(a), a.conj().T / 25)
    True

    # Two steering vectors at the scene angles
    >>> angles = np.radians([30.0, 59.5])
    >>> steer = np.exp(1j * np.pi * np.outer(np.arange(8), np.sin(angles)))
    >>> bool(np.abs(pinv(steer) @ steer - np.eye(2)).max() <= 1e-8)
    True
    >>> np.allclose(pinv(pinv(steer)), steer, atol=1e-8)
    True

    # Error case: rank-deficient input
    >>> try:
    ...     pinv(np.array([[1.0, 2.0], [2.0, 4.0]]))
    ... except np.linalg.LinAlgError as err:
    ...     print(str(err)[:24])
    Matrix is rank-deficient

    """
    m = np.asarray(m, dtype=complex)
    u, s, vh = linalg.svd(m, full_matrices=False)
    ratio = s.min() / s.max() if s.size and s.max() > 0 else 0.0
    if ratio < RANK_TOLERANCE:
        raise np.linalg.LinAlgError(
            "Matrix is rank-deficient "
            f"(singular value ratio {ratio:.3g} < {RANK_TOLERANCE:g})"
        )
    return (vh.conj().T / s) @ u.conj().T
