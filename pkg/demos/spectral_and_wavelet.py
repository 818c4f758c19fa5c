"""Frequency- and wavelet-domain views of the epidemic history.

The time register of the normalized history is pushed through the unitary
Fourier transform (any length) and the orthonormal Haar transform (dyadic
length via a window policy).  Slowly relaxing dynamics concentrate near the
zero-frequency bin and the zeroth (constant) wavelet; the same transforms
applied to individual right singular vectors separate the steady component
from the transition components.
"""

import numpy as np

from chainhist import (
    WindowPolicy,
    haar_time,
    normalize_history,
    power_spectrum,
    svd_history,
    transform_right_vectors,
)
from svd_compression import solve_window


def main():
    _, window = solve_window()
    normalized = normalize_history(window)

    spectrum = power_spectrum(normalized)
    print("folded power spectrum, first six bins (cycles per day):")
    for k in range(6):
        print(f"  f = {spectrum.frequencies[k]:7.3f}  power = {spectrum.power[k]:.3e}")
    print(f"zero-frequency share: {spectrum.power[0]:.4f} of 1.0")

    wavelets = haar_time(normalized, WindowPolicy("trunc_tail"))
    power = (wavelets.coefficients**2).sum(axis=0)
    print(f"\nHaar window: {window.data.shape[1]} samples truncated to {power.size}")
    print("wavelet power, first eight indices (0 = constant wavelet):")
    for k in range(8):
        print(f"  w{k}: {power[k]:.3e}")

    decomposition = svd_history(window, rank=4)
    vector_spectra = transform_right_vectors(decomposition, "fourier")
    magnitudes = np.abs(vector_spectra.coefficients)
    print("\nzero-frequency magnitude of each right singular vector:")
    for j in range(4):
        share = magnitudes[j, 0] ** 2 / (magnitudes[j] ** 2).sum()
        print(f"  vector {j}: {share:.4f} of its energy at f = 0")
    print("(the steady component lives at zero frequency; later vectors carry")
    print(" their energy in low but nonzero frequencies: the transition speed)")

    vector_wavelets = transform_right_vectors(decomposition, "haar", WindowPolicy("trunc_tail"))
    wmags = np.abs(vector_wavelets.coefficients)
    print("\ndominant Haar wavelet per right singular vector:")
    for j in range(4):
        print(f"  vector {j}: wavelet {int(np.argmax(wmags[j]))}")


if __name__ == "__main__":
    main()
