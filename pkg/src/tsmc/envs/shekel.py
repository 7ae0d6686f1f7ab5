"""Negative Shekel energy with three wells."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..targets import as_batch


def _default_centers():
    return np.array([[2.0, 2.0], [-2.0, 2.0], [0.0, -2.5]])


def _default_widths():
    return np.array([0.5, 0.5, 1.2])


@dataclass
class ShekelEnergy:
    """``E(theta) = -sum_i 1 / (|theta - c_i|^2 + s_i)``."""

    centers: np.ndarray = field(default_factory=_default_centers)
    widths: np.ndarray = field(default_factory=_default_widths)

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float)
        self.widths = np.asarray(self.widths, dtype=float)
        if np.any(self.widths <= 0):
            raise ValueError("widths must be positive")

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def energy(self, thetas):
        x, single = as_batch(thetas)
        diff = x[:, None, :] - self.centers
        E = -np.sum(1.0 / (np.sum(diff**2, axis=2) + self.widths), axis=1)
        return E[0] if single else E

    def energy_and_grad(self, thetas):
        x, single = as_batch(thetas)
        diff = x[:, None, :] - self.centers
        denom = np.sum(diff**2, axis=2) + self.widths
        E = -np.sum(1.0 / denom, axis=1)
        G = np.sum(2.0 * diff / denom[..., None] ** 2, axis=1)
        return (E[0], G[0]) if single else (E, G)

    def nearest_center(self, thetas) -> np.ndarray:
        x, _ = as_batch(thetas)
        return np.argmin(np.sum((x[:, None, :] - self.centers) ** 2, axis=2), axis=1)


def grid_minimum(energy: ShekelEnergy, lo: float = -4.0, hi: float = 4.0, spacing: float = 0.01):
    """Brute-force minimum over a square grid; returns ``(point, value)``."""
    ticks = np.linspace(lo, hi, int(round((hi - lo) / spacing)) + 1)
    gx, gy = np.meshgrid(ticks, ticks, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    vals = energy.energy(pts)
    i = int(np.argmin(vals))
    return pts[i], float(vals[i])
