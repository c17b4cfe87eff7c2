"""Angle-delay transform of CSI matrices and its inverse.

The forward transform takes an unnormalised DFT across antennas and a
1/N_c-scaled inverse DFT across subcarriers; the inverse undoes both, so the
pair round-trips exactly. All functions act on the last two axes, so a C × P × N_c
tensor is transformed channel by channel.
"""

# %% Imports
import numpy as np

from isac.numerics import ComplexMatrix, fft_cols, ifft_rows


# %%
def isac_transform(h: ComplexMatrix) -> ComplexMatrix:
    """Map CSI (antenna × subcarrier) to the angle-delay domain.

    >>> bool(isac_transform(np.zeros((8, 16), dtype=complex)).any())
    False

    # A 30° path on a half-wavelength array peaks at angle bin 2,
    # a delay of exactly 5 bins peaks at delay bin 5
    >>> p, nc = 8, 64
    >>> antenna = np.exp(1j * np.pi * np.arange(p) * np.sin(np.radians(30)))
    >>> delay = np.exp(-2j * np.pi * np.arange(nc) * 5 / nc)
    >>> t = isac_transform(np.outer(antenna, delay))
    >>> tuple(int(i) for i in np.unravel_index(np.abs(t).argmax(), t.shape))
    (2, 5)

    # Energy scales by P / N_c
    >>> h = np.random.default_rng(0).normal(size=(8, 64)) + 0j
    >>> bool(np.isclose(np.linalg.norm(isac_transform(h)) ** 2,
    ...                 8 / 64 * np.linalg.norm(h) ** 2))
    True

    """
    h = np.asarray(h, dtype=complex)
    return ifft_rows(fft_cols(h)) / h.shape[-1]


def isac_inverse(t: ComplexMatrix) -> ComplexMatrix:
    """Map angle-delay coefficients back to CSI.

    >>> rng = np.random.default_rng(1)
    >>> h = rng.normal(size=(8, 64)) + 1j * rng.normal(size=(8, 64))
    >>> scale = 1e-10 * np.linalg.norm(h)
    >>> bool(np.linalg.norm(isac_inverse(isac_transform(h)) - h) <= scale)
    True
    >>> bool(np.linalg.norm(isac_transform(isac_inverse(h)) - h) <= scale)
    True
    >>> bool(isac_inverse(np.zeros((8, 64), dtype=complex)).any())
    False

    """
    return np.fft.fft(np.fft.ifft(t, axis=-2), axis=-1)


# %%
def transform_adjoint(g: ComplexMatrix) -> ComplexMatrix:
    """Conjugate-transpose of ``isac_transform``, equal to (P/N_c)·T⁻¹.

    >>> rng = np.random.default_rng(2)
    >>> x = rng.normal(size=(4, 8)) + 1j * rng.normal(size=(4, 8))
    >>> y = rng.normal(size=(4, 8)) + 1j * rng.normal(size=(4, 8))
    >>> bool(np.isclose(np.vdot(y, isac_transform(x)), np.vdot(transform_adjoint(y), x)))
    True

    """
    p, nc = g.shape[-2:]
    return isac_inverse(g) * (p / nc)


def inverse_adjoint(g: ComplexMatrix) -> ComplexMatrix:
    """Conjugate-transpose of ``isac_inverse``, equal to (N_c/P)·T.

    >>> rng = np.random.default_rng(3)
    >>> x = rng.normal(size=(2, 4, 8)) + 1j * rng.normal(size=(2, 4, 8))
    >>> y = rng.normal(size=(2, 4, 8)) + 1j * rng.normal(size=(2, 4, 8))
    >>> bool(np.isclose(np.vdot(y, isac_inverse(x)), np.vdot(inverse_adjoint(y), x)))
    True

    """
    p, nc = g.shape[-2:]
    return isac_transform(g) * (nc / p)
