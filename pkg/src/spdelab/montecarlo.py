"""Monte Carlo estimation of semigroup quantities and inequality checks.

Estimates P_t f, directional derivatives of P_t f (via the pathwise
derivative flow or coupled finite differences), and variances, then verifies
the gradient / log-Harnack / variance / Poincare bounds statistically: an
inequality "passes" if

    lhs_hat - k * lhs_se <= rhs_hat + k * rhs_se

with slack multiplier k (default 4).  The bounds under test are inequalities
between exact expectations, so Monte Carlo can only refute with slack; k = 4
keeps the false-alarm rate per check below 1e-4.

Paths are split into fixed-size blocks by path id; blocks may run on any
number of threads but partial sums are always combined in ascending block
order, so every result is bit-reproducible for a given seed regardless of
worker count.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict

import numpy as np

from . import kernels
from .functionals import Functional
from .noise import NoiseStream
from .simulate import CallbackBundle, SchemeConfig, simulate_batch


class EstimationError(RuntimeError):
    """Non-finite sample values or an estimate unusable for the check."""


@dataclass(frozen=True)
class Stats:
    """Sample mean/variance with delta-method standard errors."""

    mean: float
    se: float
    var: float
    se_var: float
    count: int


def _stats_from_sums(s1: float, s2: float, s3: float, s4: float, m: int) -> Stats:
    mean = s1 / m
    m2 = max(s2 / m - mean**2, 0.0)
    var = m2 * m / (m - 1) if m > 1 else 0.0
    se = math.sqrt(var / m) if m > 1 else 0.0
    m4 = s4 / m - 4 * mean * s3 / m + 6 * mean**2 * s2 / m - 3 * mean**4
    se_var = math.sqrt(max(m4 - m2**2, 0.0) / m) if m > 1 else 0.0
    return Stats(mean=mean, se=se, var=var, se_var=se_var, count=m)


@dataclass
class CheckReport:
    """One inequality verification record."""

    inequality: str
    lhs_hat: float
    lhs_se: float
    rhs_hat: float
    rhs_se: float
    constant_used: float
    slack: float
    passed: bool
    M: int
    dt: float
    n: int
    seed: int
    t: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        d = self.to_dict()
        for key in ("lhs_hat", "lhs_se", "rhs_hat", "rhs_se", "constant_used", "dt", "t"):
            d[key] = float(f"{d[key]:.17g}")
        d["slack"] = float(f"{d['slack']:.17g}")
        d["passed"] = bool(d["passed"])
        for key in ("M", "n", "seed"):
            d[key] = int(d[key])
        return json.dumps(d, sort_keys=True)


def _passes(lhs_hat, lhs_se, rhs_hat, rhs_se, k) -> bool:
    # the roundoff guard keeps degenerate equality cases (both sides the same
    # constant, zero stderr) from failing by one ulp of summation noise
    guard = 8 * np.finfo(float).eps * max(abs(lhs_hat), abs(rhs_hat))
    return lhs_hat - k * lhs_se <= rhs_hat + k * rhs_se + guard


class MonteCarlo:
    """Estimator bundle for one model (spectrum + coefficient callbacks)."""

    def __init__(self, lambdas, callbacks: CallbackBundle, noise: NoiseStream,
                 dt: float = 1e-3, scheme: str = "exponential_euler",
                 threads: int = 1, batch_size: int = 2048):
        self.lambdas = np.asarray(lambdas, dtype=float)
        self.callbacks = callbacks
        self.noise = noise
        self.dt = dt
        self.scheme = scheme
        self.threads = max(1, threads)
        self.batch_size = batch_size
        if noise.width < self.lambdas.size:
            raise ValueError("noise stream width is smaller than the mode count")

    @property
    def n(self) -> int:
        return self.lambdas.size

    def _cfg(self, t: float) -> SchemeConfig:
        return SchemeConfig(dt=self.dt, t_end=t, scheme=self.scheme)

    def _blocks(self, M: int):
        if M < 1:
            raise ValueError("need at least one path")
        return [np.arange(i, min(i + self.batch_size, M), dtype=np.int64)
                for i in range(0, M, self.batch_size)]

    def _map_blocks(self, worker, blocks):
        if self.threads == 1 or len(blocks) == 1:
            return [worker(b) for b in blocks]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(worker, blocks))

    def _sample(self, x0, t: float, M: int, evaluators: dict, *,
                v=None, y0=None) -> dict[str, Stats]:
        """Run M paths; evaluators map the result dict to per-path values."""
        cfg = self._cfg(t)
        blocks = self._blocks(M)
        names = list(evaluators)

        def worker(block):
            res = simulate_batch(x0, block, cfg, self.lambdas, self.callbacks,
                                 self.noise, v=v, y0=y0)
            sums = {}
            for name in names:
                vals = evaluators[name](res)
                if not np.all(np.isfinite(vals)):
                    bad = block[~np.isfinite(vals)]
                    raise EstimationError(
                        f"non-finite values of {name!r} on paths {bad[:5].tolist()}")
                sums[name] = np.array([vals.sum(), (vals**2).sum(),
                                       (vals**3).sum(), (vals**4).sum()])
            return sums

        partials = self._map_blocks(worker, blocks)
        out = {}
        for name in names:
            acc = np.zeros(4)
            for p in partials:  # fixed ascending block order
                acc += p[name]
            out[name] = _stats_from_sums(*acc, M)
        return out

    # -- expectations ----------------------------------------------------------

    def expect(self, f: Functional, x0, t: float, M: int) -> tuple[float, float]:
        """(sample mean, standard error) of f(X_t) over M independent paths."""
        if t == 0:
            x = np.broadcast_to(np.asarray(x0, float), (1, self.n))
            return float(f.eval(x)[0]), 0.0
        st = self._sample(x0, t, M, {"f": lambda r: f.eval(r["x"])})["f"]
        return st.mean, st.se

    def grad_via_flow(self, f: Functional, x0, v, t: float, M: int):
        """Estimate of the directional derivative d/d eps P_t f(x + eps v)."""
        st = self.flow_stats(f, x0, v, t, M)
        return st["pair"].mean, st["pair"].se

    def flow_stats(self, f: Functional, x0, v, t: float, M: int) -> dict[str, Stats]:
        """One derivative-flow pass: pairing <grad f(X), J>, |grad f|^2, f, |J|^2."""
        v = np.asarray(v, dtype=float)
        evaluators = {
            "pair": lambda r: np.sum(f.grad(r["x"]) * r["flow"], axis=-1),
            "gradsq": lambda r: f.grad_norm_sq(r["x"]),
            "f": lambda r: f.eval(r["x"]),
            "flowsq": lambda r: np.sum(r["flow"] ** 2, axis=-1),
        }
        if t == 0:
            x = np.broadcast_to(np.asarray(x0, float), (1, self.n))
            res = {"x": x, "flow": np.broadcast_to(v, (1, self.n))}
            return {k: Stats(float(ev(res)[0]), 0.0, 0.0, 0.0, M)
                    for k, ev in evaluators.items()}
        return self._sample(x0, t, M, evaluators, v=v)

    def grad_via_fd(self, f: Functional, x0, v, eps: float, t: float, M: int):
        """Coupled finite-difference derivative (f(X^{x+eps v}) - f(X^x))/eps."""
        if eps <= 0:
            raise ValueError("eps must be positive")
        x0 = np.asarray(x0, dtype=float)
        y0 = x0 + eps * np.asarray(v, dtype=float)
        if t == 0:
            xa = np.broadcast_to(x0, (1, self.n))
            ya = np.broadcast_to(y0, (1, self.n))
            return float((f.eval(ya)[0] - f.eval(xa)[0]) / eps), 0.0
        st = self._sample(x0, t, M, {
            "fd": lambda r: (f.eval(r["y"]) - f.eval(r["x"])) / eps,
        }, y0=y0)["fd"]
        return st.mean, st.se

    # -- inequality checks -----------------------------------------------------

    def _report(self, name, lhs, lhs_se, rhs, rhs_se, const, k, t, M) -> CheckReport:
        return CheckReport(
            inequality=name, lhs_hat=lhs, lhs_se=lhs_se, rhs_hat=rhs, rhs_se=rhs_se,
            constant_used=const, slack=k, passed=_passes(lhs, lhs_se, rhs, rhs_se, k),
            M=M, dt=self._cfg(t).realized_dt if t > 0 else 0.0, n=self.n,
            seed=self.noise.seed, t=t)

    def check_gradient_bound(self, f: Functional, x0, v, t: float, t0: float,
                             M: int, k: float = 4.0) -> CheckReport:
        """|d_v P_t f|^2 / |v|^2 <= 6^{1+t/t0} P_t |grad f|^2."""
        st = self.flow_stats(f, x0, v, t, M)
        v2 = float(np.sum(np.asarray(v, float) ** 2))
        g, se_g = st["pair"].mean, st["pair"].se
        lhs, lhs_se = g**2 / v2, 2.0 * abs(g) * se_g / v2
        const = kernels.gradient_constant(t, t0)
        rhs, rhs_se = const * st["gradsq"].mean, const * st["gradsq"].se
        return self._report("gradient", lhs, lhs_se, rhs, rhs_se, const, k, t, M)

    def check_log_harnack(self, f: Functional, x, y, t: float, t0: float,
                          lambda_sigma: float, M: int, k: float = 4.0) -> CheckReport:
        """P_t log f(y) <= log P_t f(x) + C(t) |x - y|^2 for strictly positive f."""
        if not f.strictly_positive:
            raise ValueError("log-Harnack check needs a strictly positive functional")
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        st = self._sample(x, t, M, {
            "f_x": lambda r: f.eval(r["x"]),
            "logf_y": lambda r: np.log(f.eval(r["y"])),
        }, y0=y)
        fx = st["f_x"]
        if fx.mean - 4.0 * fx.se <= 0.0:
            raise EstimationError("P_t f estimate not positive beyond noise; log undefined")
        const = kernels.logharnack_constant(t, t0, lambda_sigma)
        dist2 = float(np.sum((x - y) ** 2))
        lhs, lhs_se = st["logf_y"].mean, st["logf_y"].se
        rhs = math.log(fx.mean) + const * dist2
        rhs_se = fx.se / fx.mean
        return self._report("logharnack", lhs, lhs_se, rhs, rhs_se, const, k, t, M)

    def check_variance_gradient(self, f: Functional, x0, v, t: float, t0: float,
                                lambda_sigma: float, M: int, k: float = 4.0) -> CheckReport:
        """|d_v P_t f|^2 / |v|^2 <= C(t) (P_t f^2 - (P_t f)^2), same C as log-Harnack."""
        st = self.flow_stats(f, x0, v, t, M)
        v2 = float(np.sum(np.asarray(v, float) ** 2))
        g, se_g = st["pair"].mean, st["pair"].se
        lhs, lhs_se = g**2 / v2, 2.0 * abs(g) * se_g / v2
        const = kernels.logharnack_constant(t, t0, lambda_sigma)
        rhs, rhs_se = const * st["f"].var, const * st["f"].se_var
        return self._report("variance_gradient", lhs, lhs_se, rhs, rhs_se, const, k, t, M)

    def check_poincare(self, f: Functional, x0, t: float, t0: float,
                       lambda_bar: float, M: int, k: float = 4.0) -> CheckReport:
        """P_t f^2 - (P_t f)^2 <= C(t) P_t |grad f|^2 (needs the upper bound on sigma)."""
        if lambda_bar is None:
            raise ValueError("Poincare check needs the upper ellipticity bound lambda_bar")
        const = kernels.poincare_constant(t, t0, lambda_bar)
        if t == 0:
            x = np.broadcast_to(np.asarray(x0, float), (1, self.n))
            rhs = const * float(f.grad_norm_sq(x)[0])
            return self._report("poincare", 0.0, 0.0, rhs, 0.0, const, k, t, M)
        st = self._sample(x0, t, M, {
            "f": lambda r: f.eval(r["x"]),
            "gradsq": lambda r: f.grad_norm_sq(r["x"]),
        })
        lhs, lhs_se = st["f"].var, st["f"].se_var
        rhs, rhs_se = const * st["gradsq"].mean, const * st["gradsq"].se
        return self._report("poincare", lhs, lhs_se, rhs, rhs_se, const, k, t, M)

    def check_flow_bound(self, x0, v, t: float, t0: float, M: int,
                         k: float = 4.0) -> CheckReport:
        """E |J_t|^2 <= 6^{(t+t0)/t0} |v|^2 for the derivative flow J started at v."""
        st = self.flow_stats(_dummy_functional(self.n), x0, v, t, M)
        v2 = float(np.sum(np.asarray(v, float) ** 2))
        const = kernels.gradient_constant(t, t0)
        return self._report("flow_bound", st["flowsq"].mean, st["flowsq"].se,
                            const * v2, 0.0, const, k, t, M)

    # -- moment curves and Galerkin convergence --------------------------------

    def second_moment_curve(self, x0, t_end: float, checkpoints, M: int):
        """Rows (t, E|X_t|^2 estimate, stderr) at the requested checkpoint times."""
        cfg = self._cfg(t_end) if t_end > 0 else None
        if t_end == 0:
            x0_arr = np.asarray(x0, dtype=float)
            return [(0.0, float(np.sum(x0_arr**2)), 0.0)]
        dt = cfg.realized_dt
        steps = sorted({min(cfg.n_steps, max(0, round(tc / dt))) for tc in checkpoints})
        blocks = self._blocks(M)

        def worker(block):
            res = simulate_batch(x0, block, cfg, self.lambdas, self.callbacks,
                                 self.noise, checkpoint_steps=steps)
            out = {}
            for s, snap in res["checkpoints"].items():
                if not np.all(np.isfinite(snap)):
                    raise EstimationError(f"moment blow-up by t = {s * dt:g}")
                q = np.sum(snap**2, axis=-1)
                out[s] = np.array([q.sum(), (q**2).sum(), (q**3).sum(), (q**4).sum()])
            return out

        partials = self._map_blocks(worker, blocks)
        rows = []
        for s in steps:
            acc = np.zeros(4)
            for p in partials:
                acc += p[s]
            st = _stats_from_sums(*acc, M)
            rows.append((s * dt, st.mean, st.se))
        return rows

    def convergence_study(self, build, n_list, N: int, x0_full, t: float, M: int):
        """Mean squared gap E|X_t^n - X_t^N|^2 per truncation level n.

        ``build(n)`` returns (lambdas, callbacks) for the n-mode system.  All
        levels consume identical noise addresses (one stream, width >= N), so
        mode i sees the same draws at every truncation.
        """
        n_list = list(n_list)
        if any(b <= a for a, b in zip(n_list, n_list[1:])):
            raise ValueError("n_list must be strictly ascending")
        if n_list and n_list[-1] > N:
            raise ValueError("all truncation levels must be <= N")
        if self.noise.width < N:
            raise ValueError("noise stream width must cover the reference level N")
        levels = [lv for lv in n_list if lv < N]
        systems = {lv: build(lv) for lv in levels + [N]}
        cfg = self._cfg(t)
        x0_full = np.asarray(x0_full, dtype=float)
        blocks = self._blocks(M)

        def worker(block):
            finals = {}
            for lv, (lams, cb) in systems.items():
                res = simulate_batch(x0_full[:lv], block, cfg, np.asarray(lams, float),
                                     cb, self.noise)
                finals[lv] = res["x"]
            ref = finals[N]
            sums = {}
            for lv in levels:
                pad = np.zeros_like(ref)
                pad[:, :lv] = finals[lv]
                d = np.sum((pad - ref) ** 2, axis=-1)
                sums[lv] = np.array([d.sum(), (d**2).sum(), (d**3).sum(), (d**4).sum()])
            return sums

        partials = self._map_blocks(worker, blocks)
        rows = []
        for lv in n_list:
            if lv == N:
                rows.append((lv, 0.0, 0.0))
                continue
            acc = np.zeros(4)
            for p in partials:
                acc += p[lv]
            st = _stats_from_sums(*acc, M)
            rows.append((lv, st.mean, st.se))
        return rows


def _dummy_functional(n: int) -> Functional:
    z = Functional(name="zero", eval=lambda x: np.zeros(x.shape[0]),
                   grad=lambda x: np.zeros_like(x), bounded=True, grad_bound=0.0)
    return z


def plateau_verdict(rows, window: int = 3) -> str:
    """Heuristic boundedness verdict: last `window` estimates within 2 stderr.

    A desk-scale stand-in for sup_t E|X_t|^2 < inf, not a proof.
    """
    if len(rows) < window:
        return "inconclusive"
    tail = rows[-window:]
    for i in range(len(tail)):
        for j in range(i + 1, len(tail)):
            _, mi, si = tail[i]
            _, mj, sj = tail[j]
            if abs(mi - mj) > 2.0 * math.hypot(si, sj):
                return "inconclusive"
    return "bounded"
