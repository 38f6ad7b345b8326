"""Monte Carlo engine for noisy orbits x_{n+1} = f(x_n) + sigma xi_{n+1}.

Noise families with closed-form moments, reproducible counter-based
per-sample streams, linearized noise accumulated along the deterministic
orbit, interval guard and outlier truncation masks, and the normalized
processes used in the central limit experiments.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import io
import json
import math
import os

import numpy as np
from scipy import special

from . import lyapunov as ly
from . import stats
from .errors import AllSamplesGuarded, DegenerateVariance, MissingRho

#: golden mean, base of the circle-map time scale
_BETA = (math.sqrt(5.0) - 1.0) / 2.0

#: samples processed per vectorized block
CHUNK = 2048

_FAMILIES = ("uniform_pm1", "gaussian", "rademacher", "truncated_gaussian")


@dataclasses.dataclass(frozen=True)
class NoiseModel:
    """Zero-mean iid noise family with analytic moments.

    `p` is the declared moment order used in the truncation analysis;
    `b` is the support bound of the truncated gaussian; `scale` is an
    optional per-step scale sequence (constant 1 when omitted).
    """

    family: str
    p: float = 4.0
    b: float = float("nan")
    scale: tuple | None = None

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}")
        if self.family == "truncated_gaussian" and not self.b > 0.0:
            raise ValueError("truncated_gaussian needs a bound b > 0")
        if not self.p > 2.0:
            raise ValueError("declared moment order p must exceed 2")

    @property
    def compact_support(self) -> bool:
        return self.family != "gaussian"

    @property
    def support_bound(self) -> float:
        return {"uniform_pm1": 1.0, "rademacher": 1.0,
                "truncated_gaussian": self.b,
                "gaussian": float("inf")}[self.family]

    def abs_moment(self, s: float) -> float:
        """E[|xi|^s] in closed form."""
        if self.family == "uniform_pm1":
            return 1.0 / (s + 1.0)
        if self.family == "rademacher":
            return 1.0
        full = 2.0 ** (s / 2.0) * special.gamma((s + 1.0) / 2.0) \
            / math.sqrt(math.pi)
        if self.family == "gaussian":
            return float(full)
        # gaussian conditioned on |xi| <= b: normalized incomplete moment
        frac = special.gammainc((s + 1.0) / 2.0, self.b ** 2 / 2.0)
        return float(full * frac / special.erf(self.b / math.sqrt(2.0)))

    def norm(self, s: float) -> float:
        """L^s norm ||xi||_s."""
        return self.abs_moment(s) ** (1.0 / s)

    @property
    def c_lower(self) -> float:
        return self.norm(2.0)

    @property
    def c_upper(self) -> float:
        return self.norm(self.p)

    def max_abs_norm(self, n: int) -> float:
        """Analytic bound on || max_{j<=n} |xi_j| ||_p."""
        return n ** (1.0 / self.p) * self.c_upper

    def step_scales(self, n: int) -> np.ndarray:
        if self.scale is None:
            return np.ones(n)
        sc = np.asarray(self.scale, float)
        if sc.size < n:
            raise ValueError(f"scale sequence shorter than n = {n}")
        return sc[:n]

    def sample(self, seed: int, index: int, n: int) -> np.ndarray:
        """Length-n stream for one sample, from a counter-based key.

        The stream depends only on (seed, index), never on how samples
        are batched, so ensembles are reproducible under any chunking.
        """
        rng = np.random.Generator(
            np.random.Philox(key=(int(seed) << 64) + int(index)))
        if self.family == "uniform_pm1":
            out = rng.uniform(-1.0, 1.0, n)
        elif self.family == "gaussian":
            out = rng.standard_normal(n)
        elif self.family == "rademacher":
            out = rng.integers(0, 2, n) * 2.0 - 1.0
        else:
            lo = stats.std_normal_cdf(-self.b)
            hi = stats.std_normal_cdf(self.b)
            out = special.ndtri(lo + rng.random(n) * (hi - lo))
        return out * self.step_scales(n)


def _deriv(f):
    if hasattr(f, "deriv"):
        return f.deriv
    return f.derivative()


def second_derivative_norm(f, halfwidth: float, samples: int = 2001) -> float:
    """sup |f''| on [-halfwidth, halfwidth], from the first derivative.

    Differentiates f' by central differences on a dense grid; exact for
    the polynomial maps used here up to grid resolution.
    """
    x = np.linspace(-halfwidth, halfwidth, samples)
    d1 = np.asarray(_deriv(f)(x), float)
    return float(np.max(np.abs(np.gradient(d1, x))))


@dataclasses.dataclass(frozen=True)
class EnsembleResult:
    """One noisy ensemble: endpoints, linearization, and truncation masks.

    `in_outliers` is True on samples outside B_k (noise maximum above
    a_k); `in_guard` is True on samples the interval guard excludes.
    """

    orbit: np.ndarray
    dev: np.ndarray
    endpoints: np.ndarray
    linearized: np.ndarray
    max_noise: np.ndarray
    in_outliers: np.ndarray
    in_guard: np.ndarray
    sigma: float
    seed: int
    x0: float
    n: int
    noise: NoiseModel
    var_l: float
    hat_lambda: float
    f2_norm: float
    a_k: float
    shadow_violations: int

    @property
    def guard_fraction(self) -> float:
        return float(np.mean(self.in_guard))

    @property
    def outlier_fraction(self) -> float:
        return float(np.mean(self.in_outliers))

    def deviations(self) -> np.ndarray:
        """x_n - f^n(x0) on the guard-conditioned ensemble."""
        return self.dev[~self.in_guard]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("sample_id,x_n,L_n,in_Bk,in_guard\n")
        for i in range(self.endpoints.size):
            buf.write("%d,%.17g,%.17g,%d,%d\n"
                      % (i, self.endpoints[i], self.linearized[i],
                         0 if self.in_outliers[i] else 1,
                         1 if self.in_guard[i] else 0))
        return buf.getvalue()

    def summary_json(self) -> str:
        w = normalized_processes(self, "w")
        k2, k3, k4 = stats.k_statistics(w)
        return json.dumps({
            "n": self.n, "sigma": self.sigma, "varL": self.var_l,
            "var_eff": float(np.var(self.deviations())),
            "ks": stats.ks_distance(w),
            "skew": k3 / k2 ** 1.5, "kurt": k4 / k2 ** 2,
        }, indent=2, sort_keys=True)


def _run_chunk(f, noise, sigma, seed, lo, hi, n, orbit, hw):
    """Deviation-form ensemble block.

    The scheduled noise levels drop far below the machine epsilon of
    the O(1) orbit values, so the deviation u_j = x_j - f^j(x0) is
    propagated directly instead of subtracting absolute positions.
    Maps may supply an exact `increment(xbar, u)`; otherwise
    f(xbar+u) - f(xbar) is expanded to second order along the
    deterministic orbit, which is exact for the quadratic family.
    """
    m = hi - lo
    inc = getattr(f, "increment", None)
    d1 = _deriv(f)
    derivs = np.asarray(d1(orbit[:n]), float)
    if inc is None:
        step = 1e-6
        second = (np.asarray(d1(orbit[:n] + step), float)
                  - np.asarray(d1(orbit[:n] - step), float)) / (2.0 * step)
    u = np.zeros(m)
    lin = np.zeros(m)
    mx = np.zeros(m)
    xi = np.empty((m, n))
    for i in range(m):
        xi[i] = noise.sample(seed, lo + i, n)
    for j in range(n):
        col = xi[:, j]
        if inc is not None:
            u = inc(orbit[j], u) + sigma * col
        else:
            u = derivs[j] * u + 0.5 * second[j] * u * u + sigma * col
        if hw is not None:
            # only samples the guard already excludes can reach the clip
            np.clip(u, -hw - orbit[j + 1], hw - orbit[j + 1], out=u)
        lin = derivs[j] * lin + col
        np.maximum(mx, np.abs(col), out=mx)
    return u, lin, mx


def simulate(f, x0: float, n: int, sigma: float, noise: NoiseModel,
             M: int, seed: int, padding: float | None = None,
             f2_norm: float | None = None,
             threads: int | None = None) -> EnsembleResult:
    """Ensemble of M noisy orbits with linearized noise accumulation.

    The deterministic orbit and its derivative products are computed
    once; each sample's linear term L_n follows the recurrence
    L_{j+1} = f'(f^j(x0)) L_j + xi_{j+1}.  For interval maps (padding
    a > 0, taken from the map when not passed) samples whose noise
    maximum exceeds a/sigma are marked by the guard mask and excluded
    from the conditioned process.
    """
    if sigma < 0.0 or M < 1 or n < 1:
        raise ValueError("need sigma >= 0, M >= 1, n >= 1")
    if padding is None:
        padding = getattr(f, "padding", None)

    orbit = np.empty(n + 1)
    orbit[0] = x0
    for j in range(n):
        orbit[j + 1] = float(f(orbit[j]))
    derivs = np.asarray(_deriv(f)(orbit[:n]), float)

    hw = float(getattr(f, "domain_halfwidth", lambda: 0.0)())
    if f2_norm is None:
        f2_norm = second_derivative_norm(
            f, hw if hw > 0.0 else float(np.max(np.abs(orbit))) + 1.0)

    if threads is None:
        threads = int(os.environ.get("RENOISE_THREADS", "1"))
    bounds = [(lo, min(lo + CHUNK, M)) for lo in range(0, M, CHUNK)]
    args = [(f, noise, sigma, seed, lo, hi, n, orbit,
             hw if hw > 0.0 else None) for lo, hi in bounds]
    if threads > 1 and len(bounds) > 1:
        with concurrent.futures.ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda a: _run_chunk(*a), args))
    else:
        parts = [_run_chunk(*a) for a in args]
    dev = np.concatenate([p[0] for p in parts])
    linearized = np.concatenate([p[1] for p in parts])
    max_noise = np.concatenate([p[2] for p in parts])

    ev = ly.lambda_direct(f, x0, n, 2.0)
    hat = ev.hat
    m2 = noise.abs_moment(2.0)
    # (f^{n-j})' o f^j(x0) for j = 1..n; the last step has weight 1
    weights = np.append(np.cumprod(derivs[:0:-1])[::-1], 1.0)
    scales = noise.step_scales(n)
    var_l = float(np.sum(weights ** 2 * scales ** 2 * m2))

    if f2_norm > 0.0:
        a_k = hat ** -2.0 * (sigma ** -0.5 if sigma > 0 else np.inf) \
            / (4.0 * f2_norm)
    else:
        a_k = np.inf
    in_outliers = max_noise > a_k

    if padding is not None and padding > 0.0:
        in_guard = sigma * max_noise > padding
    else:
        in_guard = np.zeros(M, bool)
    if np.mean(in_guard) > 0.99:
        raise AllSamplesGuarded(
            f"guard excluded {np.mean(in_guard):.1%} of samples")

    # endpoint form of the shadowing bound, on samples where the
    # contraction precondition ||Delta|| ||f''|| hat^2 <= 1/4 holds
    pre_ok = sigma * max_noise * f2_norm * hat ** 2 <= 0.25
    bound = sigma ** 2 * f2_norm * hat ** 3 * max_noise ** 2
    gap = np.abs(dev - sigma * linearized)
    viol = int(np.sum(pre_ok & ~in_guard & (gap > bound * (1 + 1e-9) + 1e-13)))

    return EnsembleResult(orbit=orbit, dev=dev, endpoints=orbit[-1] + dev,
                          linearized=linearized, max_noise=max_noise,
                          in_outliers=in_outliers, in_guard=in_guard,
                          sigma=sigma, seed=seed, x0=x0, n=n, noise=noise,
                          var_l=var_l, hat_lambda=hat, f2_norm=f2_norm,
                          a_k=float(a_k), shadow_violations=viol)


def normalized_processes(E: EnsembleResult, variant: str = "w") -> np.ndarray:
    """Normalized endpoint deviations, one value per kept sample.

    w scales by the exact linearized standard deviation; w_tilde and
    w_hat zero out the outlier samples (B_k and the weaker shadowing
    event respectively) and renormalize by the truncated ensemble
    standard deviation.
    """
    if E.var_l <= 0.0:
        raise DegenerateVariance("var[L_n] vanished")
    keep = ~E.in_guard
    dev = E.dev[keep]
    if variant == "w":
        return dev / (E.sigma * math.sqrt(E.var_l))
    if variant == "w_tilde":
        mask = ~E.in_outliers[keep]
    elif variant == "w_hat":
        pre = E.sigma * E.f2_norm * E.hat_lambda ** 2 * E.max_noise
        mask = (pre <= 0.25)[keep]
    else:
        raise ValueError(f"unknown variant {variant!r}")
    truncated = dev * mask
    std = float(np.std(truncated))
    if std <= 0.0:
        raise DegenerateVariance("truncated ensemble variance vanished")
    return truncated / std


def variance_comparison(E: EnsembleResult, resamples: int = 200) -> dict:
    """Effective-vs-linearized variance ratio with a bootstrap interval.

    Conditions on the interval guard only; the outlier mask is reported
    separately on the result and applied by the w_tilde normalization.
    """
    keep = ~E.in_guard
    if int(np.sum(keep)) < 10 ** 3:
        raise ValueError("need at least 1000 kept samples")
    dev = E.dev[keep]
    sigma2_varl = E.sigma ** 2 * E.var_l
    ratio = float(np.var(dev)) / sigma2_varl
    rng = np.random.Generator(np.random.Philox(key=(int(E.seed) << 64) + 1))
    boots = np.empty(resamples)
    for i in range(resamples):
        pick = rng.integers(0, dev.size, dev.size)
        boots[i] = np.var(dev[pick]) / sigma2_varl
    lo, hi = np.percentile(boots, [2.5, 97.5])
    return {"var_effective": float(np.var(dev)),
            "sigma2_varL": sigma2_varl, "ratio": ratio,
            "ci_low": float(lo), "ci_high": float(hi)}


def sigma_schedule(kind: str, n: int, constants) -> float:
    """Noise level sigma_n for the scheduled experiments.

    Exponents combine the measured per-level growth rates
    r_p = |lambda|^p rho_p (period doubling, base-2 logs) or
    r_p = |lambda|^{2kp} rho_p (circle, base-1/beta logs), with a 0.05
    margin on top of the strict inequality the theory requires.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    grid = [float(p) for p in constants.p_grid]
    try:
        rho = {p: constants.rho[grid.index(p)] for p in (1.0, 2.0, 3.0)}
    except ValueError as exc:
        raise MissingRho("schedule needs rho at p = 1, 2, 3") from exc
    lam = abs(constants.lam)
    k = constants.k
    circle = kind.startswith("circle")
    if circle:
        r = {p: lam ** (2 * k * p) * rho[p] for p in rho}
        base = 1.0 / _BETA
    else:
        r = {p: lam ** p * rho[p] for p in rho}
        base = 2.0
    gamma = math.log(r[1.0] ** 3 / math.sqrt(r[2.0]), base) + 0.05
    if kind in ("pd_clt", "circle_clt"):
        exponent = gamma + 1.0
    elif kind in ("pd_be", "circle_be"):
        exponent = gamma + math.log(r[2.0] ** 3 / r[3.0], base) + 1.0
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    return float(n) ** -exponent


@dataclasses.dataclass(frozen=True)
class CumulantSeries:
    """Skewness and excess kurtosis of w_n along a time schedule."""

    n_values: np.ndarray
    skewness: np.ndarray
    kurtosis: np.ndarray
    skew_rate: float      # fitted per-step geometric factor
    kurt_rate: float

    def to_csv(self) -> str:
        lines = ["n,skewness,kurtosis"]
        for n, s, k in zip(self.n_values, self.skewness, self.kurtosis):
            lines.append("%d,%.17g,%.17g" % (n, s, k))
        return "\n".join(lines) + "\n"


def _geometric_rate(values: np.ndarray) -> float:
    mag = np.abs(values)
    if np.any(mag == 0.0):
        return float("nan")
    slope = np.polyfit(np.arange(mag.size), np.log(mag), 1)[0]
    return float(np.exp(slope))


def cumulant_decay(f, x0: float, noise: NoiseModel, schedule,
                   m_range, M: int = 10 ** 4, seed: int = 0,
                   **sim_kwargs) -> CumulantSeries:
    """Cumulant ratios of w_n at the times in m_range.

    `schedule` maps n to sigma_n.  The fitted rates are the geometric
    factors per schedule step from a log-magnitude regression.
    """
    if noise.p < 4.0:
        raise ValueError("cumulant decay needs 4 finite moments")
    ns = [int(n) for n in m_range]
    skews, kurts = [], []
    for n in ns:
        E = simulate(f, x0, n, float(schedule(n)), noise, M, seed,
                     **sim_kwargs)
        k2, k3, k4 = stats.k_statistics(normalized_processes(E, "w"))
        skews.append(k3 / k2 ** 1.5)
        kurts.append(k4 / k2 ** 2)
    skews = np.asarray(skews)
    kurts = np.asarray(kurts)
    return CumulantSeries(n_values=np.asarray(ns), skewness=skews,
                          kurtosis=kurts,
                          skew_rate=_geometric_rate(skews),
                          kurt_rate=_geometric_rate(kurts))
