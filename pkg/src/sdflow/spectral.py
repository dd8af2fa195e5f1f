"""Fourier tools on uniform periodic grids.

All routines act along the last axis. Periods may be a scalar or an array
broadcastable against the leading axes, so several closed components of
different lengths can be differentiated in one call.
"""

import numpy as np


def wavenumbers(n, period):
    """Angular wavenumbers of ``np.fft.rfft`` output for ``n`` samples.

    Returns an array of shape ``period.shape + (n//2 + 1,)``.
    """
    period = np.asarray(period, dtype=float)
    k = np.fft.rfftfreq(n, d=1.0 / n)
    return 2.0 * np.pi * k / period[..., None]


def derivative(f, period, order=1):
    """Spectral derivative of periodic samples ``f`` of the given order."""
    f = np.asarray(f, dtype=float)
    if order == 0:
        return f.copy()
    n = f.shape[-1]
    kappa = wavenumbers(n, period)
    mult = (1j * kappa) ** order
    if order % 2 == 1 and n % 2 == 0:
        # odd derivatives of the Nyquist mode are not representable on the grid
        mult[..., -1] = 0.0
    return np.fft.irfft(np.fft.rfft(f, axis=-1) * mult, n=n, axis=-1)


def resample(f, m):
    """Trigonometric interpolation of periodic samples onto ``m`` points.

    ``m`` must be a multiple of the input length (upsampling only).
    """
    f = np.asarray(f, dtype=float)
    n = f.shape[-1]
    if m == n:
        return f.copy()
    if m < n or m % n:
        raise ValueError(f"cannot resample {n} samples onto {m} points")
    fh = np.fft.rfft(f, axis=-1)
    if n % 2 == 0:
        fh[..., -1] *= 0.5  # split Nyquist energy symmetrically
    out = np.zeros(f.shape[:-1] + (m // 2 + 1,), dtype=complex)
    out[..., : fh.shape[-1]] = fh
    return np.fft.irfft(out, n=m, axis=-1) * (m / n)


def lowpass(f, kmax):
    """Zero every Fourier mode with index ``|k| > kmax``."""
    f = np.asarray(f, dtype=float)
    n = f.shape[-1]
    fh = np.fft.rfft(f, axis=-1)
    fh[..., int(kmax) + 1 :] = 0.0
    return np.fft.irfft(fh, n=n, axis=-1)


def periodic_mean(f):
    """Grid mean; equals (1/L) times the trapezoid integral on a periodic grid."""
    return np.mean(f, axis=-1)
