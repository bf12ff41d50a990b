"""Stochastic reaction-diffusion model on a rectangle.

The equation has drift b(u)(xi) = psi(u(xi)) and pointwise-multiplication
noise {sigma(u) x}(xi) = phi(u(xi)) x(xi) for Lipschitz scalar functions
psi, phi.  This module turns that model into Galerkin coefficient callbacks
(pseudo-spectral: synthesize on a tensor sine-quadrature grid, apply the
scalar function pointwise, project back) and derives its exact regularity
profile: K_b is the constant kernel from the drift Lipschitz constant, and
K_sigma is the explicit per-mode series

    K_sigma(t) = c_phi^2 * prod_i (2/L_i) * sum_m e^{-2 lambda_m t},

using the rectangle's exact eigenvalues and the uniform eigenfunction bound
(|e_m|_inf^2 = prod_i 2/L_i on rectangles).

The noise enters only through its projected mode coordinates; no pointwise
sheet sampling happens anywhere.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import fft as sp_fft

from .kernels import ConstantKernel, ModeSeriesKernel, RegularityProfile
from .montecarlo import MonteCarlo, plateau_verdict
from .noise import NoiseStream
from .spectral import DomainError, EigenSpectrum, RectDomain


@dataclass(frozen=True)
class ScalarFunctionSpec:
    """A scalar coefficient function with its declared analytic bounds.

    ``inf_sq``/``sup_sq`` bound the squared function over the reals (they feed
    the ellipticity constants); ``growth_sq_slope`` is limsup g(s)^2/s^2,
    used by the quadratic-growth condition.
    """

    name: str
    fn: Callable
    deriv: Callable | None
    lipschitz: float
    inf_sq: float
    sup_sq: float
    growth_sq_slope: float = 0.0

    def __call__(self, s):
        return self.fn(s)

    @classmethod
    def affine(cls, a: float, b: float) -> "ScalarFunctionSpec":
        return cls(name=f"affine({a:g},{b:g})",
                   fn=lambda s: a * s + b,
                   deriv=lambda s: np.full_like(np.asarray(s, float), a),
                   lipschitz=abs(a),
                   inf_sq=0.0 if a != 0 else b**2,
                   sup_sq=math.inf if a != 0 else b**2,
                   growth_sq_slope=a**2)

    @classmethod
    def sin_perturbed(cls, c0: float, amp: float, freq: float) -> "ScalarFunctionSpec":
        lo, hi = c0 - abs(amp), c0 + abs(amp)
        inf_sq = 0.0 if lo <= 0.0 <= hi else min(lo**2, hi**2)
        return cls(name=f"sin_perturbed({c0:g},{amp:g},{freq:g})",
                   fn=lambda s: c0 + amp * np.sin(freq * s),
                   deriv=lambda s: amp * freq * np.cos(freq * s),
                   lipschitz=abs(amp * freq),
                   inf_sq=inf_sq,
                   sup_sq=max(lo**2, hi**2))

    @classmethod
    def atan_scaled(cls, a: float) -> "ScalarFunctionSpec":
        half_pi = math.pi / 2.0
        return cls(name=f"atan_scaled({a:g})",
                   fn=lambda s: a * np.arctan(s),
                   deriv=lambda s: a / (1.0 + np.asarray(s, float) ** 2),
                   lipschitz=abs(a),
                   inf_sq=0.0,
                   sup_sq=(a * half_pi) ** 2)

    @classmethod
    def custom(cls, fn, lipschitz, inf_sq, sup_sq, deriv=None,
               growth_sq_slope=0.0, name="custom") -> "ScalarFunctionSpec":
        return cls(name=name, fn=fn, deriv=deriv, lipschitz=lipschitz,
                   inf_sq=inf_sq, sup_sq=sup_sq, growth_sq_slope=growth_sq_slope)


def spot_check_lipschitz(spec: ScalarFunctionSpec, rng=None, samples: int = 10_000,
                         scale: float = 10.0, rtol: float = 1e-9) -> bool:
    """Sample pairs and test |g(r)-g(s)| <= L |r-s| (declared constant honest?)."""
    rng = np.random.default_rng(0) if rng is None else rng
    r = rng.normal(scale=scale, size=samples)
    s = rng.normal(scale=scale, size=samples)
    lhs = np.abs(np.asarray(spec.fn(r)) - np.asarray(spec.fn(s)))
    return bool(np.all(lhs <= spec.lipschitz * np.abs(r - s) * (1.0 + rtol) + 1e-15))


def spot_check_square_bounds(spec: ScalarFunctionSpec, lo: float = -50.0,
                             hi: float = 50.0, points: int = 20_001,
                             rtol: float = 1e-9) -> bool:
    s = np.linspace(lo, hi, points)
    g2 = np.asarray(spec.fn(s)) ** 2
    ok_low = np.all(g2 >= spec.inf_sq * (1.0 - rtol) - 1e-15)
    ok_high = spec.sup_sq == math.inf or np.all(g2 <= spec.sup_sq * (1.0 + rtol) + 1e-15)
    return bool(ok_low and ok_high)


@dataclass(frozen=True)
class ReactionDiffusionModel:
    """Rectangle, fractional power, scalar coefficients, and truncation sizes."""

    domain: RectDomain
    alpha: float
    psi: ScalarFunctionSpec
    phi: ScalarFunctionSpec
    n: int
    quad_points: int

    def __post_init__(self):
        if self.alpha <= self.domain.d / 2.0:
            raise DomainError(
                f"alpha = {self.alpha} must exceed d/2 = {self.domain.d / 2} "
                "for the rectangle model to be well-posed")
        if self.quad_points < 2 * self.n:
            raise DomainError("quad_points must be >= 2n per dimension (dealiasing)")

    @cached_property
    def spectrum(self) -> EigenSpectrum:
        return EigenSpectrum.synthesize(self.domain, self.alpha, self.n)


class _SineTransform:
    """Tensor DST-I synthesis/projection on the interior quadrature grid.

    The grid has q interior points per dimension at xi_j = a + L (j+1)/(q+1).
    The transform pair is exact for fields band-limited below the grid size,
    which is what makes the affine-coefficient case reproduce the analytic
    projection to rounding error.
    """

    def __init__(self, domain: RectDomain, modes: np.ndarray, q: int):
        self.domain = domain
        self.q = q
        self.d = domain.d
        self.L = domain.lengths
        self.shape = (q,) * self.d
        if np.any(modes > q):
            raise DomainError("quadrature grid too coarse for the retained modes")
        self.flat_idx = np.ravel_multi_index(tuple((modes - 1).T), self.shape)
        # synthesis factor 0.5 sqrt(2/L) and projection factor sqrt(L/2)/(q+1) per axis
        self.synth_factor = float(np.prod(0.5 * np.sqrt(2.0 / self.L)))
        self.proj_factor = float(np.prod(np.sqrt(self.L / 2.0) / (q + 1)))

    def grid(self) -> np.ndarray:
        """Quadrature points, shape (q^d, d)."""
        axes = [a + (b - a) * (np.arange(1, self.q + 1) / (self.q + 1))
                for a, b in self.domain.sides]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        """(B, n) mode coefficients -> (B, q^d) pointwise field values."""
        B = coeffs.shape[0]
        full = np.zeros((B, int(np.prod(self.shape))))
        full[:, self.flat_idx] = coeffs
        full = full.reshape((B,) + self.shape)
        for ax in range(1, self.d + 1):
            full = sp_fft.dst(full, type=1, axis=ax)
        return self.synth_factor * full.reshape(B, -1)

    def project(self, field: np.ndarray) -> np.ndarray:
        """(B, q^d) field values -> (B, n) coefficients by sine quadrature."""
        B = field.shape[0]
        full = field.reshape((B,) + self.shape)
        for ax in range(1, self.d + 1):
            full = sp_fft.dst(full, type=1, axis=ax)
        return self.proj_factor * full.reshape(B, -1)[:, self.flat_idx]


class ReactionCallbacks:
    """Pseudo-spectral coefficient maps; duck-typed like a CallbackBundle."""

    def __init__(self, model: ReactionDiffusionModel):
        self._model = model
        self._tf = _SineTransform(model.domain, model.spectrum.modes, model.quad_points)
        # per-thread scratch: parallel workers integrate disjoint path blocks
        self._local = threading.local()
        has_derivs = model.psi.deriv is not None and model.phi.deriv is not None
        self.drift = self._drift
        self.diffusion_apply = self._diffusion_apply
        self.drift_jacobian_apply = self._drift_jac if has_derivs else None
        self.diffusion_jacobian_apply = self._diffusion_jac if has_derivs else None

    @property
    def has_jacobians(self) -> bool:
        return (self.drift_jacobian_apply is not None
                and self.diffusion_jacobian_apply is not None)

    # Field synthesis is reused across the drift/diffusion/jacobian calls that
    # the stepper makes with one and the same state (or noise) array.  Holding
    # the key array alive keeps its identity stable.
    def _field(self, x):
        loc = self._local
        if getattr(loc, "x_key", None) is not x:
            loc.x_key = x
            loc.x_field = self._tf.synthesize(x)
        return loc.x_field

    def _noise_field(self, dw):
        loc = self._local
        if getattr(loc, "w_key", None) is not dw:
            loc.w_key = dw
            loc.w_field = self._tf.synthesize(dw)
        return loc.w_field

    def _drift(self, x):
        return self._tf.project(self._model.psi.fn(self._field(x)))

    def _diffusion_apply(self, x, dw):
        u = self._field(x)
        w = self._noise_field(dw)
        return self._tf.project(self._model.phi.fn(u) * w)

    def _drift_jac(self, x, h):
        if self._model.psi.deriv is None:
            raise ValueError("psi has no derivative; use finite differences instead")
        return self._tf.project(self._model.psi.deriv(self._field(x)) * self._tf.synthesize(h))

    def _diffusion_jac(self, x, h, dw):
        if self._model.phi.deriv is None:
            raise ValueError("phi has no derivative; use finite differences instead")
        u = self._field(x)
        w = self._noise_field(dw)
        return self._tf.project(self._model.phi.deriv(u) * self._tf.synthesize(h) * w)

    def field_on_grid(self, coeffs: np.ndarray):
        """(grid points (q^d, d), field values) for dumping u(xi)."""
        vals = self._tf.synthesize(np.atleast_2d(coeffs))
        return self._tf.grid(), vals[0] if coeffs.ndim == 1 else vals


def build_callbacks(model: ReactionDiffusionModel) -> ReactionCallbacks:
    return ReactionCallbacks(model)


def exact_Ksigma(model: ReactionDiffusionModel, n_modes: int = 4096) -> ModeSeriesKernel:
    """Exact per-mode diffusion-smoothing kernel for the rectangle.

    K_sigma(t) = sum_m w_m e^{-r_m t} with w_m = c_phi^2 prod_i (2/L_i)
    (the squared sup-norm of every rectangle eigenfunction) and r_m = 2 lambda_m.
    """
    c = model.phi.lipschitz
    w0 = c**2 * float(np.prod(2.0 / model.domain.lengths))
    n_modes = max(n_modes, 4 * model.n)
    if model.domain.d == 1:
        L = float(model.domain.lengths[0])
        m = np.arange(1, n_modes + 1, dtype=float)
        rates = 2.0 * (m * np.pi / L) ** (2.0 * model.alpha)
    else:
        spec = EigenSpectrum.synthesize(model.domain, model.alpha, n_modes)
        rates = 2.0 * spec.lambdas
    return ModeSeriesKernel(weights=np.full(n_modes, w0), rates=rates,
                            rate_exponent=2.0 * model.alpha / model.domain.d)


def build_profile(model: ReactionDiffusionModel) -> RegularityProfile:
    """Kernels, ellipticity bounds, and t0 for the reaction-diffusion model."""
    lambda_bar = model.phi.sup_sq if math.isfinite(model.phi.sup_sq) else None
    return RegularityProfile(
        Kb=ConstantKernel(model.psi.lipschitz),
        Ksigma=exact_Ksigma(model),
        lambda_sigma=model.phi.inf_sq,
        lambda_bar_sigma=lambda_bar,
    )


def check_growth_condition(model: ReactionDiffusionModel, eps0: float, C0: float) -> bool:
    """Does |phi(s)|^2 + |psi(s)|^2 <= eps0 s^2 + C0 hold on the real line?

    Checked on a symmetric log-spaced grid plus the declared asymptotic
    slopes of the squared coefficients.
    """
    if eps0 <= 0 or C0 <= 0:
        raise DomainError("growth condition needs eps0, C0 > 0")
    if model.phi.growth_sq_slope + model.psi.growth_sq_slope > eps0:
        return False
    mags = np.logspace(-3, 3, 400)
    s = np.concatenate([-mags[::-1], [0.0], mags])
    lhs = np.asarray(model.phi.fn(s)) ** 2 + np.asarray(model.psi.fn(s)) ** 2
    return bool(np.all(lhs <= eps0 * s**2 + C0 + 1e-12))


def moment_harness(model: ReactionDiffusionModel, t_end: float, checkpoints, M: int,
                   noise: NoiseStream, dt: float = 1e-2,
                   scheme: str = "exponential_euler", threads: int = 1,
                   x0=None, growth: tuple[float, float] | None = None):
    """Second-moment curve E|u_t|^2 at checkpoints plus a plateau verdict.

    ``growth = (eps0, C0)`` gates the run on the quadratic-growth condition.
    Returns (rows, verdict) with rows of (t, estimate, stderr).
    """
    if growth is not None and not check_growth_condition(model, *growth):
        raise DomainError(
            f"coefficient growth condition fails for eps0={growth[0]}, C0={growth[1]}")
    cb = build_callbacks(model)
    mc = MonteCarlo(model.spectrum.lambdas, cb, noise, dt=dt, scheme=scheme,
                    threads=threads)
    x0 = np.zeros(model.n) if x0 is None else np.asarray(x0, dtype=float)
    rows = mc.second_moment_curve(x0, t_end, checkpoints, M)
    return rows, plateau_verdict(rows)
