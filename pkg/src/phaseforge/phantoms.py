"""Procedural grayscale test images.

The benchmark accepts arbitrary user-supplied images; these generators
exist so the test suite and the quickstart need no binary fixtures.  All
phantoms are deterministic in ``seed`` and returned in [0, 255].
"""

from __future__ import annotations

import numpy as np

from .rng import RngStream

KINDS = ("blobs", "bars", "disks", "clouds", "noise")


def _normalize(img: np.ndarray) -> np.ndarray:
    lo, hi = float(img.min()), float(img.max())
    if hi == lo:
        return np.zeros_like(img)
    return 255.0 * (img - lo) / (hi - lo)


def phantom(kind: str, size: int, seed: int = 0) -> np.ndarray:
    """Generate a ``size`` x ``size`` test image of the given kind."""
    rng = RngStream(seed, stream=0xF0)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    if kind == "blobs":
        img = np.zeros((size, size))
        for _ in range(6):
            cy, cx = rng.uniform(0.2 * size, 0.8 * size, 2)
            width = rng.uniform(0.05 * size, 0.25 * size)
            amp = rng.uniform(0.3, 1.0)
            img += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width ** 2))
        return _normalize(img)
    if kind == "bars":
        period = max(2, int(rng.uniform(size / 12, size / 4)))
        angle = rng.uniform(0, np.pi)
        t = np.cos(angle) * xx + np.sin(angle) * yy
        img = 0.5 * (1 + np.sin(2 * np.pi * t / period))
        ramp = xx / size
        return _normalize(img + 0.5 * ramp)
    if kind == "disks":
        img = np.zeros((size, size))
        for _ in range(4):
            cy, cx = rng.uniform(0.15 * size, 0.85 * size, 2)
            radius = rng.uniform(0.08 * size, 0.3 * size)
            level = rng.uniform(0.3, 1.0)
            img = np.where((yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2, img + level, img)
        return _normalize(img)
    if kind == "clouds":
        # power-law spectrum ~ 1/f^1.5, the closest of the phantoms to a natural image
        white = rng.standard_normal((size, size))
        fy = np.fft.fftfreq(size)[:, None]
        fx = np.fft.fftfreq(size)[None, :]
        radius = np.sqrt(fy ** 2 + fx ** 2)
        radius[0, 0] = 1.0
        img = np.fft.ifft2(np.fft.fft2(white) / radius ** 1.5).real
        return _normalize(img)
    if kind == "noise":
        return rng.uniform(0.0, 255.0, (size, size))
    raise ValueError(f"unknown phantom kind {kind!r}; choose from {KINDS}")


def phantom_suite(size: int, base_seed: int = 0) -> dict[str, np.ndarray]:
    """Six distinct phantoms keyed by id, for small benchmark matrices."""
    return {
        "blobs_a": phantom("blobs", size, base_seed),
        "clouds_a": phantom("clouds", size, base_seed + 1),
        "bars_a": phantom("bars", size, base_seed + 2),
        "disks_a": phantom("disks", size, base_seed + 3),
        "clouds_b": phantom("clouds", size, base_seed + 4),
        "blobs_b": phantom("blobs", size, base_seed + 5),
    }
