"""Analytic-vs-finite-difference gradient checks for the Gaussian weight and attention."""

from __future__ import annotations

import numpy as np

from ..attention import AttentionSpec, TokenSequence, attention_forward, attention_vjp_q
from ..gaussian import LocalGaussian, symmetric_eigvals
from ..temporal import PhiSpec, TemporalScale
from ..uggc import KernelSpec, gaussian_weight, gaussian_weight_grad


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = max(np.linalg.norm(numeric), np.linalg.norm(analytic), 1e-300)
    return float(np.linalg.norm(analytic - numeric) / denom)


def random_gaussian(rng: np.random.Generator) -> LocalGaussian:
    a = rng.standard_normal((3, 3))
    reg = a @ a.T + 0.5 * np.eye(3)
    eig = symmetric_eigvals(reg)
    return LocalGaussian(rng.standard_normal(3), reg, reg, eig, float(eig[0] / eig[2]), 0)


def weight_gradcheck(instances: int = 100, seed: int = 0, step: float = 1e-5,
                     kernel_form: str = "gaussian_rbf") -> list[float]:
    """Relative gradient errors of the Gaussian weight over random instances."""
    rng = np.random.default_rng(seed)
    kernel = KernelSpec(kernel_form=kernel_form)
    errors = []
    for _ in range(instances):
        g = random_gaussian(rng)
        sigma = rng.uniform(0.3, 2.0)
        x = g.mean + 0.7 * rng.standard_normal(3)
        analytic = gaussian_weight_grad(x, g, kernel, sigma)
        numeric = np.empty(3)
        for i in range(3):
            e = np.zeros(3)
            e[i] = step
            numeric[i] = (gaussian_weight(x + e, g, kernel, sigma)
                          - gaussian_weight(x - e, g, kernel, sigma)) / (2 * step)
        errors.append(_relative_error(analytic, numeric))
    return errors


def attention_gradcheck(instances: int = 100, seed: int = 0, step: float = 1e-5,
                        shape: tuple = (2, 2, 8), heads: int = 2) -> list[float]:
    """Relative errors of d(sum(G * attention))/dq over random token instances."""
    rng = np.random.default_rng(seed)
    errors = []
    for _ in range(instances):
        spec = AttentionSpec(model_dim=shape[-1], head_count=heads,
                             beta=tuple(rng.uniform(0.0, 2.0, heads)), phi=PhiSpec("linear"))
        scale = TemporalScale(float(rng.uniform(0.2, 3.0)))
        q, k, v = (rng.standard_normal(shape) for _ in range(3))
        cot = rng.standard_normal(shape)
        ks, vs = TokenSequence.from_grid(k), TokenSequence.from_grid(v)

        def loss(qq):
            return float((attention_forward(qq, ks, vs, spec, scale).tokens * cot).sum())

        analytic = attention_vjp_q(q, ks, vs, spec, scale, cot)
        numeric = np.empty_like(q)
        for idx in np.ndindex(q.shape):
            qp, qm = q.copy(), q.copy()
            qp[idx] += step
            qm[idx] -= step
            numeric[idx] = (loss(qp) - loss(qm)) / (2 * step)
        errors.append(_relative_error(analytic, numeric))
    return errors
