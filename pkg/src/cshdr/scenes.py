"""Bundled synthetic scene generators so experiments and tests run without
external HDR datasets: a log-ramp + step-edge + light-source HDR scene, a
high-contrast step-edge scene, and natural-ish training rasters.
"""

import numpy as np
from scipy import ndimage

from .imagery import RadianceImage


def _smooth_noise(rng, shape, sigma):
    n = ndimage.gaussian_filter(rng.normal(size=shape), sigma, mode="wrap")
    return n / max(np.abs(n).max(), 1e-12)


def synthetic_hdr_scene(width=128, height=128, stops=10, seed=0):
    """Grayscale HDR test scene spanning exactly `stops` f-stops.

    Composed in log2 space: a horizontal log ramp, constant panels with
    step edges against the ramp, a bright disk light source with a dark
    counterpart, and mild multiplicative texture. The slight blur keeps
    edge transitions about one pixel wide, like a focused optical image.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    yy, xx = np.mgrid[0:height, 0:width]
    g = (stops - 2.0) * xx / max(width - 1, 1)

    def rect(r0, r1, c0, c1, value):
        g[int(r0 * height):int(r1 * height), int(c0 * width):int(c1 * width)] = value

    rect(0.15, 0.40, 0.20, 0.45, stops - 2.5)   # bright panel on the dark side
    rect(0.60, 0.85, 0.55, 0.80, 1.0)           # dark panel on the bright side
    rect(0.47, 0.53, 0.10, 0.90, stops - 3.0)   # long bright bar
    rect(0.70, 0.78, 0.05, 0.20, -1.0)          # deep shadow patch

    cy, cx, r = 0.22 * height, 0.82 * width, 0.09 * width
    disk = (yy - cy) ** 2 + (xx - cx) ** 2 <= r ** 2
    g[disk] = stops - 1.0                       # light source

    g = g + 0.06 * _smooth_noise(rng, g.shape, 2.0) * stops / 10.0
    g = ndimage.gaussian_filter(g, 0.6, mode="reflect")
    g = (g - g.min()) * (stops / (g.max() - g.min()))
    return RadianceImage(np.exp2(g).astype(np.float32))


def step_edge_scene(width=96, height=96, stops=6, seed=0):
    """Sharp vertical step edge of `stops` f-stops at column width // 2."""
    rng = np.random.Generator(np.random.Philox(seed))
    g = np.zeros((height, width))
    g[:, width // 2:] = stops
    g = g + 0.05 * _smooth_noise(rng, g.shape, 3.0)
    g = (g - g.min()) * (stops / (g.max() - g.min()))
    return RadianceImage(np.exp2(g).astype(np.float32))


def training_rasters(n=10, size=96, seed=0):
    """Natural-ish grayscale rasters for filter learning: multi-scale smooth
    shading plus randomly oriented step edges, bars, and blobs."""
    rng = np.random.Generator(np.random.Philox(seed))
    out = []
    for _ in range(n):
        img = _smooth_noise(rng, (size, size), 6.0)
        img = img + 0.4 * _smooth_noise(rng, (size, size), 2.0)
        img = img + 0.15 * _smooth_noise(rng, (size, size), 1.0)

        yy, xx = np.mgrid[0:size, 0:size]
        for _ in range(3):  # oriented step edges
            theta = rng.uniform(0, np.pi)
            off = rng.uniform(0.3, 0.7) * size
            side = (np.cos(theta) * xx + np.sin(theta) * yy) > off
            img = img + rng.uniform(0.5, 1.0) * rng.choice([-1, 1]) * side
        for _ in range(2):  # rectangles
            r0, c0 = rng.integers(0, size - 16, 2)
            h, w = rng.integers(8, size // 3, 2)
            img[r0:r0 + h, c0:c0 + w] += rng.uniform(0.4, 0.9) * rng.choice([-1, 1])
        cy, cx = rng.uniform(0.2, 0.8, 2) * size
        rad = rng.uniform(0.05, 0.15) * size
        img = img + 0.8 * ((yy - cy) ** 2 + (xx - cx) ** 2 <= rad ** 2)

        img = img - img.min()
        img = img / max(img.max(), 1e-12)
        out.append(img)
    return out
