"""Post-processing of history matrices: truncated SVD, unitary Fourier and
orthonormal Haar transforms of the time axis, and folded power spectra.

Sign convention for singular vectors: in every left vector the entry of
largest magnitude is made positive (first index wins ties), and the paired
right vector is flipped with it.  This pins the otherwise arbitrary SVD
signs so exports are reproducible across platforms.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ValidationError
from .lde import HistoryMatrix, NormalizedHistory

WINDOW_KINDS = ("none", "trunc_tail", "trunc_head", "zero_pad")

# dense transform matrices get impractical well before this
MAX_HAAR_LENGTH = 8192


@dataclass(frozen=True)
class WindowPolicy:
    """How to reconcile a sample count with the transform's length needs.

    ``trunc_tail`` / ``trunc_head`` drop trailing / leading samples down to
    the largest power of two; ``zero_pad`` extends with zeros up to the next
    power of two; ``none`` leaves the data alone (the Haar transform then
    requires the length to already be dyadic).
    """

    kind: str = "none"

    def __post_init__(self):
        if self.kind not in WINDOW_KINDS:
            raise ValidationError(f"unknown window policy '{self.kind}', expected {WINDOW_KINDS}")

    def apply(self, arr: np.ndarray) -> np.ndarray:
        """Window along the last axis."""
        length = arr.shape[-1]
        if self.kind == "none" or length < 2:
            return arr
        if self.kind == "trunc_tail":
            return arr[..., : _floor_pow2(length)]
        if self.kind == "trunc_head":
            return arr[..., length - _floor_pow2(length) :]
        target = _ceil_pow2(length)
        if target == length:
            return arr
        pad = [(0, 0)] * (arr.ndim - 1) + [(0, target - length)]
        return np.pad(arr, pad)

    def describe(self) -> str:
        return self.kind


def _floor_pow2(n: int) -> int:
    return 1 << (int(n).bit_length() - 1)


def _ceil_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


@dataclass
class SVDResult:
    """Truncated decomposition X ~ left @ diag(singular_values) @ right.T.

    ``left`` columns are state-space profiles (N x R), ``right`` columns
    their temporal weight curves ((T+1) x R).
    """

    singular_values: np.ndarray
    left: np.ndarray
    right: np.ndarray

    @property
    def rank(self) -> int:
        return self.singular_values.size

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.singular_values) @ self.right.T


@dataclass
class Spectrum:
    """Transform coefficients along the time axis.

    ``coefficients`` keeps the leading axes of the input (states, or vector
    index for right-vector transforms) and replaces the time axis by
    transform bins.  ``axis`` holds bin frequencies in cycles per unit time
    for the Fourier kind and wavelet indices for the Haar kind.
    """

    kind: str
    coefficients: np.ndarray
    axis: np.ndarray
    window: WindowPolicy
    sample_spacing: float


@dataclass
class PowerSpectrum:
    """One-sided squared-magnitude totals; conjugate bins are folded together."""

    frequencies: np.ndarray
    power: np.ndarray
    window: WindowPolicy
    sample_spacing: float


def _history_array(x) -> tuple[np.ndarray, float]:
    if isinstance(x, HistoryMatrix):
        return x.data, x.h
    if isinstance(x, NormalizedHistory):
        return x.data, x.h
    return np.asarray(x, dtype=np.float64), 1.0


def svd_history(x, rank: int | None = None) -> SVDResult:
    """Singular value decomposition of a history matrix, deterministic signs.

    ``rank`` keeps only the leading components; a request beyond
    min(N, T+1) is clamped with a warning.
    """
    data, _ = _history_array(x)
    if data.size == 0 or not np.any(data):
        raise ValidationError("cannot decompose an empty or all-zero matrix")
    left, sigma, right_t = np.linalg.svd(data, full_matrices=False)
    full = sigma.size
    if rank is not None:
        if rank < 1:
            raise ValidationError(f"rank must be >= 1, got {rank}")
        if rank > full:
            warnings.warn(f"requested rank {rank} exceeds matrix rank bound {full}; clamping")
            rank = full
        left, sigma, right_t = left[:, :rank], sigma[:rank], right_t[:rank]
    # deterministic signs: dominant entry of each left vector positive
    anchor = np.argmax(np.abs(left), axis=0)
    flip = np.sign(left[anchor, np.arange(left.shape[1])])
    flip[flip == 0] = 1.0
    return SVDResult(sigma, left * flip, right_t.T * flip)


def scaled_singular_vectors(svd: SVDResult) -> tuple[np.ndarray, np.ndarray]:
    """Left and right vectors with column j scaled by sqrt(sigma_j)."""
    root = np.sqrt(svd.singular_values)
    return svd.left * root, svd.right * root


@lru_cache(maxsize=8)
def haar_matrix(n: int) -> np.ndarray:
    """Orthonormal Haar matrix, rows ordered coarse to fine.

    Row 0 is the constant function; row 1 the full-width step; rows
    2**s .. 2**(s+1)-1 share the same shape at support n / 2**s and are
    translated copies of each other.  Each wavelet is +amp on the first half
    of its support and -amp on the second.
    """
    if n < 1 or n & (n - 1):
        raise ValidationError(f"Haar matrix size must be a power of two, got {n}")
    if n > MAX_HAAR_LENGTH:
        raise ValidationError(f"Haar matrix size {n} exceeds the dense cap {MAX_HAAR_LENGTH}")
    out = np.zeros((n, n))
    out[0] = 1.0 / np.sqrt(n)
    row = 1
    scale = 1
    while scale < n:
        support = n // scale
        half = support // 2
        amp = np.sqrt(scale / n)
        for k in range(scale):
            start = k * support
            out[row, start : start + half] = amp
            out[row, start + half : start + support] = -amp
            row += 1
        scale *= 2
    out.setflags(write=False)
    return out


def fourier_matrix(n: int) -> np.ndarray:
    """Unitary DFT matrix U[k, j] = exp(-2 pi i j k / n) / sqrt(n)."""
    j, k = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return np.exp(-2j * np.pi * j * k / n).T / np.sqrt(n)


def fourier_time(x, window: WindowPolicy = WindowPolicy("none"), sample_spacing: float | None = None) -> Spectrum:
    """Norm-preserving discrete Fourier transform along the time axis.

    Any sample count is accepted.  Frequencies are reported in cycles per
    unit time, k / (T' * h) for T' retained samples, with the conventional
    negative-frequency labeling of the upper half bins.
    """
    data, h = _history_array(x)
    if sample_spacing is not None:
        h = sample_spacing
    windowed = window.apply(data)
    n = windowed.shape[-1]
    if n < 2:
        raise ValidationError("need at least 2 samples after windowing")
    coeff = np.fft.fft(windowed, axis=-1) / np.sqrt(n)
    freqs = np.fft.fftfreq(n, d=h)
    return Spectrum("fourier", coeff, freqs, window, h)


def haar_time(x, window: WindowPolicy = WindowPolicy("trunc_tail"), sample_spacing: float | None = None) -> Spectrum:
    """Orthonormal Haar transform along the time axis (dyadic length only)."""
    data, h = _history_array(x)
    if sample_spacing is not None:
        h = sample_spacing
    windowed = window.apply(data)
    n = windowed.shape[-1]
    if n < 1 or n & (n - 1):
        raise ValidationError(
            f"Haar transform needs a power-of-two sample count, got {n}; "
            "pick a window policy (trunc_tail, trunc_head, zero_pad) to fix the length"
        )
    coeff = windowed @ haar_matrix(n).T
    return Spectrum("haar", coeff, np.arange(n), window, h)


def inverse_transform(spectrum: Spectrum) -> np.ndarray:
    """Invert :func:`fourier_time` / :func:`haar_time` (windowed length)."""
    n = spectrum.coefficients.shape[-1]
    if spectrum.kind == "fourier":
        return np.fft.ifft(spectrum.coefficients, axis=-1) * np.sqrt(n)
    if spectrum.kind == "haar":
        return spectrum.coefficients @ haar_matrix(n)
    raise ValidationError(f"unknown spectrum kind '{spectrum.kind}'")


def transform_right_vectors(
    svd: SVDResult,
    kind: str = "fourier",
    window: WindowPolicy | None = None,
    sample_spacing: float = 1.0,
) -> Spectrum:
    """Apply the chosen time-axis unitary to each right singular vector.

    Row j of the result holds the coefficients of right vector j.  Because
    the transform acts on the time register only, these coefficients agree
    (up to the sigma weights) with transforming the history matrix directly
    and projecting onto the left vectors.
    """
    vectors = svd.right.T  # (R, T+1)
    if kind == "fourier":
        return fourier_time(vectors, window or WindowPolicy("none"), sample_spacing)
    if kind == "haar":
        return haar_time(vectors, window or WindowPolicy("trunc_tail"), sample_spacing)
    raise ValidationError(f"unknown transform kind '{kind}', expected 'fourier' or 'haar'")


def power_spectrum(history: NormalizedHistory, window: WindowPolicy = WindowPolicy("none")) -> PowerSpectrum:
    """Per-frequency squared magnitude summed over states, folded one-sided.

    Conjugate bins k and T'-k carry identical power for real input and are
    folded into the nonnegative-frequency bin, so a peak at +/- f shows up
    once at f.  For a unit-norm history (and a non-truncating window) the
    totals sum to 1.
    """
    spec = fourier_time(history, window)
    per_bin = np.abs(spec.coefficients) ** 2
    if per_bin.ndim > 1:
        per_bin = per_bin.sum(axis=tuple(range(per_bin.ndim - 1)))
    n = per_bin.size
    half = n // 2
    power = np.zeros(half + 1)
    power[0] = per_bin[0]
    for k in range(1, half + 1):
        mirror = n - k
        power[k] = per_bin[k] + (per_bin[mirror] if mirror != k else 0.0)
    freqs = np.arange(half + 1) / (n * spec.sample_spacing)
    return PowerSpectrum(freqs, power, window, spec.sample_spacing)
