"""Time stepping for the truncated spectral system and its derivative flow.

The default scheme is the exponential (mild-form) Euler: the exact linear
factor e^{-lambda dt} is applied per mode and the nonlinear coefficients are
frozen over the step,

    x_{k+1,i} = e^{-lambda_i dt} (x_k + b(x_k) dt + sigma(x_k) dW)_i.

A plain Euler-Maruyama scheme is kept for cross-validation.  The derivative
flow (pathwise linearization along a direction v) is integrated jointly with
the state using the same noise draws and the same exponential factor.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .noise import NoiseStream
from .spectral import GalerkinState

SCHEMES = ("exponential_euler", "euler_maruyama")

# cap on floats per noise chunk, to bound memory for long runs
_CHUNK_FLOAT_BUDGET = 24_000_000


class SimulationError(RuntimeError):
    """Numerical failure (non-finite state) with the offending step index."""


@dataclass(frozen=True)
class SchemeConfig:
    """Step size, horizon, and scheme choice.

    The step count is t_end/dt rounded to the nearest integer (at least one
    step for t_end > 0); ``realized_dt`` is the dt actually used.
    """

    dt: float
    t_end: float
    scheme: str = "exponential_euler"

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")

    @property
    def n_steps(self) -> int:
        if self.t_end == 0:
            return 0
        return max(1, round(self.t_end / self.dt))

    @property
    def realized_dt(self) -> float:
        k = self.n_steps
        return self.t_end / k if k else self.dt


def default_dt(lambdas, scheme: str = "exponential_euler") -> float:
    """Default step size policy.

    Euler-Maruyama must resolve the stiffest retained mode (0.1/lambda_max);
    the exponential scheme treats the linear part exactly, so it only needs
    to resolve the nonlinearity.
    """
    if scheme == "euler_maruyama":
        return min(1e-3, 0.1 / float(np.max(lambdas)))
    return 1e-3


@dataclass(frozen=True)
class CallbackBundle:
    """Galerkin coefficient maps for drift, diffusion, and their linearizations.

    All callables act on batches: states have shape (B, n) and return (B, n).
    ``diffusion_apply(x, dw)`` are the coefficients of the projected noise
    action sigma(x) dW; the jacobian maps are directional derivatives along a
    coefficient perturbation h.
    """

    drift: Callable | None = None
    diffusion_apply: Callable | None = None
    drift_jacobian_apply: Callable | None = None
    diffusion_jacobian_apply: Callable | None = None

    @property
    def has_jacobians(self) -> bool:
        return (self.drift_jacobian_apply is not None
                and self.diffusion_jacobian_apply is not None)


def diagonal_constant_diffusion(phi0: float) -> CallbackBundle:
    """b = 0, sigma = phi0 * Id: the exactly-solvable OU reference model."""
    return CallbackBundle(
        drift=lambda x: np.zeros_like(x),
        diffusion_apply=lambda x, dw: phi0 * dw,
        drift_jacobian_apply=lambda x, h: np.zeros_like(h),
        diffusion_jacobian_apply=lambda x, h, dw: np.zeros_like(h),
    )


def _check_finite(x: np.ndarray, step: int):
    if not np.all(np.isfinite(x)):
        bad = np.where(~np.isfinite(x).all(axis=-1))[0]
        raise SimulationError(
            f"non-finite state at step {step} (batch rows {bad[:5].tolist()}...)")


def step(x: np.ndarray, dt: float, lambdas: np.ndarray, cb: CallbackBundle,
         dw: np.ndarray, scheme: str = "exponential_euler") -> np.ndarray:
    """One scheme step for a batch of states (B, n) with noise increment dw."""
    x = np.atleast_2d(x)
    dw = np.atleast_2d(dw)
    if x.shape[-1] != lambdas.size or dw.shape != x.shape:
        raise ValueError("state / spectrum / noise dimension mismatch")
    b = cb.drift(x) if cb.drift is not None else 0.0
    s = cb.diffusion_apply(x, dw) if cb.diffusion_apply is not None else dw
    if scheme == "exponential_euler":
        return np.exp(-lambdas * dt) * (x + b * dt + s)
    return x + (-lambdas * x + b) * dt + s


def _chunk_sizes(n_steps: int, batch: int, width: int):
    chunk = max(1, _CHUNK_FLOAT_BUDGET // max(1, batch * width))
    done = 0
    while done < n_steps:
        size = min(chunk, n_steps - done)
        yield done, size
        done += size


class _FlowTracker:
    """Joint state + linearization stepping with shared noise."""

    def __init__(self, v: np.ndarray, cb: CallbackBundle):
        if not cb.has_jacobians:
            raise ValueError(
                "derivative flow needs drift/diffusion jacobian callbacks; "
                "use finite differences (coupled pairs) for non-smooth models")
        self.j = v
        self.cb = cb

    def advance(self, x, dt, lambdas, dw, scheme):
        db = self.cb.drift_jacobian_apply(x, self.j)
        ds = self.cb.diffusion_jacobian_apply(x, self.j, dw)
        if scheme == "exponential_euler":
            self.j = np.exp(-lambdas * dt) * (self.j + db * dt + ds)
        else:
            self.j = self.j + (-lambdas * self.j + db) * dt + ds


def simulate_batch(x0: np.ndarray, path_ids, cfg: SchemeConfig, lambdas: np.ndarray,
                   cb: CallbackBundle, noise: NoiseStream, *,
                   y0: np.ndarray | None = None, v: np.ndarray | None = None,
                   checkpoint_steps=(), record: Callable | None = None):
    """Integrate a batch of paths; the workhorse behind every estimator.

    Modes (combinable): plain state, coupled second state ``y0`` fed the same
    noise, derivative flow started at ``v``.  ``checkpoint_steps`` collects
    state snapshots (dict step -> (B, n) array); ``record`` is called as
    ``record(step, t, x)`` after every step (and at step 0) for trajectory
    dumps.

    Returns dict with keys 'x' and optionally 'y', 'flow', 'checkpoints'.
    """
    path_ids = np.asarray(path_ids, dtype=np.int64)
    n = lambdas.size
    B = path_ids.size
    x = np.broadcast_to(np.asarray(x0, dtype=float), (B, n)).copy()
    y = None if y0 is None else np.broadcast_to(np.asarray(y0, dtype=float), (B, n)).copy()
    flow = None if v is None else _FlowTracker(
        np.broadcast_to(np.asarray(v, dtype=float), (B, n)).copy(), cb)

    K = cfg.n_steps
    dt = cfg.realized_dt
    sqdt = np.sqrt(dt)
    checkpoint_steps = set(int(s) for s in checkpoint_steps)
    snaps = {}
    if 0 in checkpoint_steps:
        snaps[0] = x.copy()
    if record is not None:
        record(0, 0.0, x)

    reader = noise.open(path_ids)
    k = 0
    for _, size in _chunk_sizes(K, B, noise.width):
        z = reader.draw(size, n)
        for j in range(size):
            dw = sqdt * z[:, j, :]
            if flow is not None:
                flow.advance(x, dt, lambdas, dw, cfg.scheme)
            x_new = step(x, dt, lambdas, cb, dw, cfg.scheme)
            if y is not None:
                y = step(y, dt, lambdas, cb, dw, cfg.scheme)
            x = x_new
            k += 1
            if k in checkpoint_steps:
                snaps[k] = x.copy()
            if record is not None:
                record(k, k * dt, x)
        _check_finite(x, k)
        if flow is not None:
            _check_finite(flow.j, k)

    out = {"x": x}
    if y is not None:
        out["y"] = y
    if flow is not None:
        out["flow"] = flow.j
    if checkpoint_steps:
        out["checkpoints"] = snaps
    return out


# -- single-path conveniences --------------------------------------------------

def simulate_path(x0: GalerkinState, cfg: SchemeConfig, lambdas, cb: CallbackBundle,
                  noise: NoiseStream, path_id: int) -> GalerkinState:
    """One path to t_end; bit-deterministic in (seed, path_id, scheme, model)."""
    res = simulate_batch(x0.coeffs, [path_id], cfg, np.asarray(lambdas, float), cb, noise)
    return GalerkinState(res["x"][0])


def derivative_flow(x0: GalerkinState, v: GalerkinState, cfg: SchemeConfig, lambdas,
                    cb: CallbackBundle, noise: NoiseStream, path_id: int):
    """Jointly integrate the state and its linearization along v."""
    res = simulate_batch(x0.coeffs, [path_id], cfg, np.asarray(lambdas, float), cb,
                         noise, v=v.coeffs)
    return GalerkinState(res["x"][0]), GalerkinState(res["flow"][0])


def coupled_pair(x0: GalerkinState, y0: GalerkinState, cfg: SchemeConfig, lambdas,
                 cb: CallbackBundle, noise: NoiseStream, path_id: int):
    """Two starts driven by identical noise draws (common random numbers)."""
    res = simulate_batch(x0.coeffs, [path_id], cfg, np.asarray(lambdas, float), cb,
                         noise, y0=y0.coeffs)
    return GalerkinState(res["x"][0]), GalerkinState(res["y"][0])


def ou_exact(x0, t: float, lambdas, phi0: float):
    """Exact transition moments for b = 0, sigma = phi0 * Id.

    mean_i = e^{-lambda_i t} x0_i,
    var_i  = phi0^2 (1 - e^{-2 lambda_i t}) / (2 lambda_i)   (phi0^2 t at lambda = 0).
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    lam = np.asarray(lambdas, dtype=float)
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), lam.shape)
    mean = np.exp(-lam * t) * x0
    with np.errstate(divide="ignore", invalid="ignore"):
        var = np.where(lam > 0,
                       phi0**2 * -np.expm1(-2.0 * lam * t) / np.where(lam > 0, 2.0 * lam, 1.0),
                       phi0**2 * t)
    return mean, var


def scheme_variance(t: float, dt: float, lam: float, phi0: float) -> float:
    """Exact per-mode variance produced by the exponential Euler chain itself."""
    K = max(1, round(t / dt))
    h = t / K
    e = np.exp(-2.0 * lam * h)
    if lam == 0:
        return phi0**2 * t
    return phi0**2 * h * e * (1.0 - e**K) / (1.0 - e)
