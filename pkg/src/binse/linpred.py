"""Linear prediction toolbox: Levinson-Durbin, LSF conversions, AR envelopes.

AR coefficients are stored in prediction form throughout the package:
``s(n) = sum_i a_i s(n-i) + u(n)``, so the inverse (analysis) filter is
``A(z) = 1 - a_1 z^-1 - ... - a_P z^-P``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt


class NumericalDegeneracyError(ArithmeticError):
    """Raised when a recursion hits a numerically invalid configuration."""


@dataclass(frozen=True)
class ArModel:
    """AR coefficients (prediction form) plus excitation variance."""

    coefficients: npt.NDArray[np.float64]
    excitation_variance: float = 1.0

    def __post_init__(self):
        coeffs = np.asarray(self.coefficients, dtype=np.float64)
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("AR coefficients must be finite")
        if not np.isfinite(self.excitation_variance) or self.excitation_variance < 0:
            raise ValueError("excitation variance must be finite and >= 0")
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def order(self) -> int:
        return len(self.coefficients)

    def inverse_filter(self) -> npt.NDArray[np.float64]:
        """Analysis filter [1, -a_1, ..., -a_P]."""
        return np.concatenate(([1.0], -self.coefficients))

    def is_stable(self, margin: float = 0.0) -> bool:
        if self.order == 0:
            return True
        roots = np.roots(self.inverse_filter())
        return bool(np.all(np.abs(roots) < 1.0 - margin))


@dataclass(frozen=True)
class LsfVector:
    """Line spectral frequencies: strictly increasing, each in (0, pi)."""

    frequencies: npt.NDArray[np.float64]

    def __post_init__(self):
        freqs = np.asarray(self.frequencies, dtype=np.float64)
        if len(freqs) and not (
            np.all(freqs > 0.0)
            and np.all(freqs < np.pi)
            and np.all(np.diff(freqs) > 0.0)
        ):
            raise ValueError("LSFs must be strictly increasing within (0, pi)")
        object.__setattr__(self, "frequencies", freqs)

    @property
    def order(self) -> int:
        return len(self.frequencies)


def levinson_durbin(autocorr: npt.NDArray[np.float64]) -> ArModel:
    """Fit an AR model of order len(autocorr)-1 by the Levinson-Durbin recursion.

    Parameters
    ----------
    autocorr : array of r(0..P)

    Returns
    -------
    ArModel with the forward predictor coefficients and the final
    prediction-error variance.
    """
    r = np.asarray(autocorr, dtype=np.float64)
    if r[0] <= 0:
        raise ValueError("autocorrelation r(0) must be positive")
    order = len(r) - 1
    a = np.zeros(order)
    err = r[0]
    for i in range(1, order + 1):
        acc = r[i] - np.dot(a[: i - 1], r[i - 1 : 0 : -1])
        k = acc / err
        if abs(k) >= 1.0:
            raise NumericalDegeneracyError(
                f"reflection coefficient magnitude {abs(k):.6g} >= 1 at order {i}"
            )
        a_new = a.copy()
        a_new[i - 1] = k
        a_new[: i - 1] = a[: i - 1] - k * a[: i - 1][::-1]
        a = a_new
        err *= 1.0 - k * k
    return ArModel(a, float(err))


def _sym_poly_real_eval(coeffs: npt.NDArray[np.float64], omega: npt.NDArray[np.float64]):
    """Evaluate a palindromic even-degree polynomial on the unit circle.

    For symmetric coeffs of length 2m+1, P(e^{-jw}) e^{jwm} is real:
    c_m + 2 sum_{k<m} c_k cos((m-k) w).
    """
    n = len(coeffs)
    m = (n - 1) // 2
    out = np.full_like(omega, coeffs[m], dtype=np.float64)
    for k in range(m):
        out += 2.0 * coeffs[k] * np.cos((m - k) * omega)
    return out


def _unit_circle_roots(coeffs, n_grid=4096, tol=1e-12):
    """Angles in (0, pi) where the palindromic polynomial vanishes."""
    grid = np.linspace(0.0, np.pi, n_grid + 1)
    vals = _sym_poly_real_eval(coeffs, grid)
    roots = []
    for i in range(n_grid):
        lo, hi = grid[i], grid[i + 1]
        flo, fhi = vals[i], vals[i + 1]
        if flo == 0.0:
            if 0.0 < lo < np.pi:
                roots.append(lo)
            continue
        if flo * fhi < 0.0:
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                fmid = _sym_poly_real_eval(coeffs, np.array([mid]))[0]
                if flo * fmid <= 0.0:
                    hi = mid
                else:
                    lo, flo = mid, fmid
            roots.append(0.5 * (lo + hi))
    return np.array(roots)


def ar_to_lsf(model: ArModel) -> LsfVector:
    """Convert a stable AR model to line spectral frequencies."""
    if not model.is_stable():
        raise ValueError("AR model must be stable for LSF conversion")
    p = model.order
    a_ext = np.concatenate((model.inverse_filter(), [0.0]))  # degree P+1
    p_poly = a_ext + a_ext[::-1]
    q_poly = a_ext - a_ext[::-1]
    # Deflate the fixed roots at z = +/-1 so both polynomials become
    # palindromic with even degree.
    q_poly = np.polydiv(q_poly, np.array([1.0, -1.0]))[0]
    if p % 2 == 0:
        p_poly = np.polydiv(p_poly, np.array([1.0, 1.0]))[0]
    else:
        q_poly = np.polydiv(q_poly, np.array([1.0, 1.0]))[0]
    freqs = np.sort(np.concatenate((_unit_circle_roots(p_poly), _unit_circle_roots(q_poly))))
    if len(freqs) != p:
        raise NumericalDegeneracyError(
            f"expected {p} line spectral frequencies, found {len(freqs)}"
        )
    return LsfVector(freqs)


def lsf_to_ar(lsf: LsfVector) -> ArModel:
    """Reconstruct the AR model (unit excitation variance) from its LSFs."""
    p = lsf.order
    freqs = lsf.frequencies
    # Interleaved ascending: even positions belong to the symmetric
    # polynomial, odd positions to the antisymmetric one.
    p_freqs = freqs[0::2]
    q_freqs = freqs[1::2]

    def from_angles(angles):
        poly = np.array([1.0])
        for w in angles:
            poly = np.convolve(poly, np.array([1.0, -2.0 * np.cos(w), 1.0]))
        return poly

    p_poly = from_angles(p_freqs)
    q_poly = from_angles(q_freqs)
    if p % 2 == 0:
        p_poly = np.convolve(p_poly, np.array([1.0, 1.0]))
        q_poly = np.convolve(q_poly, np.array([1.0, -1.0]))
    else:
        q_poly = np.convolve(q_poly, np.array([1.0, -1.0]))
        q_poly = np.convolve(q_poly, np.array([1.0, 1.0]))
    inverse = 0.5 * (p_poly + q_poly)[: p + 1]
    return ArModel(-inverse[1:], 1.0)


def ar_envelope(model: ArModel, dft_len: int) -> npt.NDArray[np.float64]:
    """Spectral envelope 1/|A(k)|^2 of the AR inverse filter over dft_len bins.

    A flat (zero-coefficient) model yields an all-ones envelope, consistent
    with a unit-variance white process whose periodogram has unit mean.
    """
    if dft_len < model.order + 1:
        raise ValueError("dft_len must be at least order+1")
    if not model.is_stable():
        raise ValueError("AR model must be stable")
    a_fft = np.fft.fft(model.inverse_filter(), n=dft_len)
    return 1.0 / np.abs(a_fft) ** 2
