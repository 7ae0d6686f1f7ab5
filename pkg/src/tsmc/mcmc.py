"""Rejuvenation kernels: HMC with leapfrog integration, and MALA.

Kernels act row-wise on a batch of parameters.  Each row consumes its own
generator (see :mod:`tsmc.rng`), so a batch split into chunks produces the
same result as the whole batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .rng import as_row_rngs
from .targets import PotentialEvaluator, as_batch

DIVERGENCE_THRESHOLD = 1000.0


class LeapfrogResult(NamedTuple):
    theta: np.ndarray
    momentum: np.ndarray
    potential: np.ndarray
    diverged: np.ndarray


class KernelResult(NamedTuple):
    theta: np.ndarray
    accepted: np.ndarray
    accept_prob: np.ndarray
    diverged: np.ndarray


@dataclass
class HmcConfig:
    step_size: float = 0.1
    max_leapfrog_steps: int = 10
    length_strategy: str = "jittered"
    mass_diag: np.ndarray | None = None

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.max_leapfrog_steps < 1:
            raise ValueError("max_leapfrog_steps must be >= 1")
        if self.length_strategy not in ("fixed", "jittered"):
            raise ValueError(f"unknown length_strategy {self.length_strategy!r}")
        if self.mass_diag is not None:
            self.mass_diag = np.asarray(self.mass_diag, dtype=float)
            if np.any(self.mass_diag <= 0):
                raise ValueError("mass entries must be positive")

    def mass(self, dim: int) -> np.ndarray:
        if self.mass_diag is None:
            return np.ones(dim)
        return np.broadcast_to(self.mass_diag, (dim,))


def _finite_rows(*arrays):
    ok = None
    for a in arrays:
        f = np.isfinite(a) if a.ndim == 1 else np.all(np.isfinite(a), axis=1)
        ok = f if ok is None else ok & f
    return ok


def leapfrog(theta, momentum, step_size, n_steps, potential: PotentialEvaluator, inv_mass=None,
             start=None) -> LeapfrogResult:
    """Integrate Hamiltonian dynamics with ``n_steps`` leapfrog steps.

    ``n_steps`` may be an integer or one count per row.  ``start`` optionally
    supplies ``(V, grad V)`` at ``theta`` to save an evaluation.  Rows that hit
    a non-finite state stop integrating and are flagged as diverged.
    """
    th, single = as_batch(theta)
    th = th.copy()
    r = np.array(momentum, dtype=float).reshape(th.shape)
    n = len(th)
    inv_m = np.ones(th.shape[1]) if inv_mass is None else np.asarray(inv_mass, dtype=float)
    steps = np.broadcast_to(np.asarray(n_steps, dtype=int), (n,))

    with np.errstate(over="ignore", invalid="ignore"):
        V, g = potential.value_and_grad(th) if start is None else start
        V, g = np.array(V, dtype=float), np.array(g, dtype=float)
        diverged = ~_finite_rows(V, g)
        for s in range(int(steps.max(initial=0))):
            idx = np.flatnonzero((s < steps) & ~diverged)
            if idx.size == 0:
                break
            r_half = r[idx] - 0.5 * step_size * g[idx]
            th_new = th[idx] + step_size * inv_m * r_half
            V_new, g_new = potential.rows(idx).value_and_grad(th_new)
            r_new = r_half - 0.5 * step_size * g_new
            ok = _finite_rows(th_new, r_new, V_new, g_new)
            good, bad = idx[ok], idx[~ok]
            th[good], r[good], V[good], g[good] = th_new[ok], r_new[ok], V_new[ok], g_new[ok]
            diverged[bad] = True

    if single:
        return LeapfrogResult(th[0], r[0], V[0], diverged[0])
    return LeapfrogResult(th, r, V, diverged)


def hmc_step(theta, potential: PotentialEvaluator, config: HmcConfig, rng) -> KernelResult:
    """One HMC transition per row.

    Per row the generator supplies, in order: the momentum, the jittered
    trajectory length (if enabled) and the acceptance uniform.  Rejected and
    diverged rows return their input bit-exactly.
    """
    th, single = as_batch(theta)
    n, d = th.shape
    rngs = as_row_rngs(rng, n)
    mass = config.mass(d)
    inv_mass = 1.0 / mass

    r0 = np.empty((n, d))
    steps = np.full(n, config.max_leapfrog_steps)
    log_u = np.empty(n)
    for i, gen in enumerate(rngs):
        r0[i] = gen.standard_normal(d) * np.sqrt(mass)
        if config.length_strategy == "jittered":
            steps[i] = gen.integers(1, config.max_leapfrog_steps + 1)
        log_u[i] = np.log(gen.random())

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        V0, g0 = potential.value_and_grad(th)
        res = leapfrog(th, r0, config.step_size, steps, potential, inv_mass, start=(V0, g0))
        H0 = V0 + 0.5 * np.sum(r0 * r0 * inv_mass, axis=1)
        H1 = res.potential + 0.5 * np.sum(res.momentum**2 * inv_mass, axis=1)
        dH = H1 - H0
        diverged = res.diverged | ~np.isfinite(dH) | (dH > DIVERGENCE_THRESHOLD)
        log_alpha = np.where(diverged, -np.inf, np.minimum(0.0, -dH))
    accepted = log_u < log_alpha
    new = np.where(accepted[:, None], res.theta, th)
    out = KernelResult(new, accepted, np.exp(log_alpha), diverged)
    return KernelResult(*(a[0] for a in out)) if single else out


def mala_step(theta, potential: PotentialEvaluator, step_size: float, rng) -> KernelResult:
    """Metropolis-adjusted Langevin step with proposal
    ``theta - h grad V + sqrt(2h) xi``."""
    th, single = as_batch(theta)
    n, d = th.shape
    rngs = as_row_rngs(rng, n)
    xi = np.empty((n, d))
    log_u = np.empty(n)
    for i, gen in enumerate(rngs):
        xi[i] = gen.standard_normal(d)
        log_u[i] = np.log(gen.random())

    h = float(step_size)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        V0, g0 = potential.value_and_grad(th)
        prop = th - h * g0 + np.sqrt(2.0 * h) * xi
        V1, g1 = potential.value_and_grad(prop)
        fwd = -np.sum((prop - th + h * g0) ** 2, axis=1) / (4.0 * h)
        rev = -np.sum((th - prop + h * g1) ** 2, axis=1) / (4.0 * h)
        log_alpha = np.minimum(0.0, -V1 + V0 + rev - fwd)
        diverged = ~(_finite_rows(prop, g1) & np.isfinite(log_alpha))
        log_alpha = np.where(diverged, -np.inf, log_alpha)
    accepted = log_u < log_alpha
    new = np.where(accepted[:, None], prop, th)
    out = KernelResult(new, accepted, np.exp(log_alpha), diverged)
    return KernelResult(*(a[0] for a in out)) if single else out


@dataclass
class HMC:
    """Jittered- or fixed-length HMC kernel."""

    config: HmcConfig = field(default_factory=HmcConfig)
    name = "hmc"

    def __call__(self, thetas, potential, rngs) -> KernelResult:
        return hmc_step(thetas, potential, self.config, rngs)


@dataclass
class MALA:
    step_size: float = 0.01
    name = "mala"

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")

    def __call__(self, thetas, potential, rngs) -> KernelResult:
        return mala_step(thetas, potential, self.step_size, rngs)
