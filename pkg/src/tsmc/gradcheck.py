"""Central finite differences for batched functions, and gradient audits."""

from __future__ import annotations

import numpy as np

from .rollout import ControlProblem, batch_costs


def relative_error(a, b, floor: float = 1e-12) -> float:
    """Normwise ``|a - b| / max(|a|, |b|, floor)``."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / scale)


def step_sizes(x, base: float = 1e-6) -> np.ndarray:
    return base * (1.0 + np.abs(np.asarray(x, dtype=float)))


def central_difference(fn, x, base: float = 1e-6) -> np.ndarray:
    """Jacobian of ``fn`` at ``x`` by central differences.

    ``fn`` maps a batch ``(R, d)`` to outputs ``(R, ...)``; all ``2d``
    perturbed points are evaluated in a single call.  Returns ``(..., d)``.
    """
    x = np.asarray(x, dtype=float)
    d = x.size
    h = step_sizes(x, base)
    pts = np.repeat(x[None], 2 * d, axis=0)
    pts[np.arange(d), np.arange(d)] += h
    pts[d + np.arange(d), np.arange(d)] -= h
    out = np.asarray(fn(pts), dtype=float)
    diff = (out[:d] - out[d:]) / (2.0 * h).reshape((d,) + (1,) * (out.ndim - 1))
    return np.moveaxis(diff, 0, -1)


def rollout_gradient_errors(problem: ControlProblem, thetas, x0s, base: float = 1e-6) -> np.ndarray:
    """Relative error of the adjoint gradient against finite differences,
    one entry per ``(theta, x0)`` pair."""
    errors = []
    for theta, x0 in zip(np.atleast_2d(thetas), np.atleast_2d(x0s)):
        J, G, bad = batch_costs(problem, theta[None], x0[None])
        if bad[0, 0] >= 0:
            raise FloatingPointError("rollout diverged at a gradient-check point")

        def cost(pts, x0=x0):
            return batch_costs(problem, pts, x0[None], with_grad=False)[0][:, 0]

        errors.append(relative_error(G[0], central_difference(cost, theta, base)))
    return np.array(errors)


def random_check_points(task, n_points: int, rng: np.random.Generator, scale: float = 1.0):
    """Parameters from the task prior (shrunk by ``scale``) and initial states
    from its distribution (or a jittered copy of the point start).

    Finite differences stop being a usable reference once a rollout is
    chaotic enough for gradient norms to reach ~1e8, so long-horizon systems
    are checked with ``scale < 1``.
    """
    thetas = scale * np.stack([task.prior.sample(rng) for _ in range(n_points)])
    dist = task.distribution
    x0s = np.stack([dist.sample(rng) for _ in range(n_points)])
    if task.has_point_start:
        x0s = x0s + 0.3 * rng.standard_normal(x0s.shape)
    return thetas, x0s
