"""Classical dithering baseline: anisotropic vertical blur followed by
spatially adaptive Gaussian noise.

The blur kernel averages each pixel with its vertical neighbors only
(weights alpha above and below, 1 at the center, normalized by 1/(1+2a)),
smearing horizontal stripes while leaving vertical structure alone. The
noise variance at each pixel is a constant times the median of the
(blurred) image over an 11x11 neighborhood, so noisy bright regions get
proportionally more dither. Images are expected normalized to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


class DitherError(Exception):
    pass


@dataclass
class DitherParams:
    alpha: float = 0.125      # clinically usable blur strength
    noise_c: float = 0.03     # noise constant selected for clinical use
    window: int = 11
    seed: int = 0

    def validate(self) -> None:
        if self.alpha < 0:
            raise DitherError(f"alpha must be >= 0, got {self.alpha}")
        if self.noise_c < 0:
            raise DitherError(f"noise_c must be >= 0, got {self.noise_c}")
        if self.window % 2 == 0:
            raise DitherError(f"median window must be odd, got {self.window}")


def blur_kernel(alpha: float) -> np.ndarray:
    norm = 1.0 / (1.0 + 2.0 * alpha)
    return norm * np.array([[0.0, alpha, 0.0],
                            [0.0, 1.0, 0.0],
                            [0.0, alpha, 0.0]])


def blur_anisotropic(image: np.ndarray, alpha: float) -> np.ndarray:
    """3x3 vertical-only blur with replicate-edge padding."""
    if alpha < 0:
        raise DitherError(f"alpha must be >= 0, got {alpha}")
    image = np.asarray(image, dtype=np.float64)
    if alpha == 0:
        return image.copy()
    return ndimage.convolve(image, blur_kernel(alpha), mode="nearest")


def adaptive_noise(image: np.ndarray, noise_c: float, window: int = 11,
                   seed: int = 0) -> np.ndarray:
    """Add zero-mean Gaussian noise with per-pixel variance
    noise_c * median(11x11 neighborhood), replicate padding."""
    if window % 2 == 0:
        raise DitherError(f"median window must be odd, got {window}")
    image = np.asarray(image, dtype=np.float64)
    if np.any(image < 0):
        raise DitherError("adaptive noise expects a nonnegative image")
    if noise_c == 0:
        return image.copy()
    med = ndimage.median_filter(image, size=window, mode="nearest")
    std = np.sqrt(noise_c * med)
    rng = np.random.default_rng([seed, 29])
    return image + std * rng.standard_normal(image.shape)


def dither(image: np.ndarray, params: DitherParams) -> np.ndarray:
    """Blur, then noise (the median is taken over the blurred image)."""
    params.validate()
    blurred = blur_anisotropic(image, params.alpha)
    return adaptive_noise(blurred, params.noise_c, params.window, params.seed)
