"""Orbit functionals controlling linearized noise moments.

Lambda_p(x, n) sums the p-th powers of the derivative products that
propagate a perturbation injected at step j to the end of the orbit; the
hat variant takes the max over prefixes and the signed variant keeps the
derivative signs (cumulants).  All products are carried in log-magnitude
plus sign form, with log-sum-exp accumulation, so no intermediate value
can overflow.  The module also provides the binary and Fibonacci block
decompositions with their propagation weights, used as an independent
oracle for the direct evaluation.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math

import numpy as np
from scipy.special import logsumexp

from .errors import ReconstructionMismatch

#: floor on |f'| inside log products; an exact zero erases all earlier
#: noise, which the floor renders as an underflow instead of a NaN
DERIV_FLOOR = 1e-300


@dataclasses.dataclass(frozen=True)
class SimpleMap:
    """Callable pair (f, f') usable wherever an orbit map is expected."""

    fn: object
    dfn: object

    def __call__(self, x):
        return self.fn(np.asarray(x, float))

    def deriv(self, x):
        return self.dfn(np.asarray(x, float))


def _deriv_callable(f):
    if hasattr(f, "deriv"):
        return f.deriv
    if hasattr(f, "derivative"):
        return f.derivative()
    raise TypeError("map must expose deriv(x) or derivative()")


def _orbit_logs(f, x, n):
    """Orbit x_0..x_n with log|f'(x_i)| and sign(f'(x_i)) for i < n."""
    df = _deriv_callable(f)
    xs = np.empty(n + 1)
    xs[0] = x
    for i in range(n):
        xs[i + 1] = float(f(xs[i]))
    d = np.asarray(df(xs[:n]), float)
    logd = np.log(np.maximum(np.abs(d), DERIV_FLOOR))
    neg = (d < 0).astype(np.int64)
    return xs, logd, neg


def _suffix(arr):
    """suffix[j] = sum(arr[j:]); length len(arr)+1 with suffix[-1] = 0."""
    out = np.zeros(len(arr) + 1)
    out[:-1] = np.cumsum(arr[::-1])[::-1]
    return out


def _hat_logs(logd, n):
    """log of the running prefix sums A_i, i = 0..n, via the recurrence
    A_i = |f'(x_{i-1})| A_{i-1} + 1 with A_0 = 1."""
    out = np.empty(n + 1)
    out[0] = 0.0
    acc = 0.0
    for i in range(1, n + 1):
        acc = np.logaddexp(logd[i - 1] + acc, 0.0)
        out[i] = acc
    return out


@dataclasses.dataclass(frozen=True)
class LyapunovEval:
    """One evaluation of the orbit functionals at (x, n, p)."""

    x: float
    n: int
    p: float
    value: float
    log_value: float
    hat: float
    log_hat: float
    signed: float
    method: str


def lambda_direct(f, x: float, n: int, p: float) -> LyapunovEval:
    """All three functionals in one backward-product pass along the orbit.

    The signed value is populated only for integer p (NaN otherwise).
    n = 0 returns the empty-sum conventions: value 0, hat 1.
    """
    if n < 0:
        raise ValueError("orbit length must be nonnegative")
    if n == 0:
        return LyapunovEval(x=float(x), n=0, p=float(p), value=0.0,
                            log_value=-np.inf, hat=1.0, log_hat=0.0,
                            signed=0.0 if p == int(p) else float("nan"),
                            method="direct")
    _, logd, neg = _orbit_logs(f, x, n)
    # log |(f^{n-j})' o f^j(x)| for j = 1..n; the j = n product is empty
    S = _suffix(logd)[1:]
    log_value = float(logsumexp(p * S))
    log_hat = float(np.max(_hat_logs(logd, n)))
    if p == int(p):
        signs = (-1.0) ** (_suffix(neg)[1:] * int(p) % 2)
        val, sgn = logsumexp(p * S, b=signs, return_sign=True)
        with np.errstate(over="ignore"):
            signed = float(sgn * np.exp(val))
    else:
        signed = float("nan")
    with np.errstate(over="ignore"):
        # the linear-scale fields may saturate to inf; log fields never do
        return LyapunovEval(x=float(x), n=int(n), p=float(p),
                            value=float(np.exp(log_value)),
                            log_value=log_value,
                            hat=float(np.exp(log_hat)), log_hat=log_hat,
                            signed=signed, method="direct")


def chain_rule_identity_check(f, x: float, n: int, m: int, p: float) -> dict:
    """Relative residual of the additive split at (n, n+m).

    Checks Lambda_p(x, n+m) = |(f^m)' o f^n(x)|^p Lambda_p(x, n)
    + Lambda_p(f^n(x), m), and its signed analogue for integer p.
    """
    xs, logd, neg = _orbit_logs(f, x, n + m)
    whole = lambda_direct(f, x, n + m, p)
    head = lambda_direct(f, x, n, p)
    tail = lambda_direct(f, xs[n], m, p)
    log_dm = float(np.sum(logd[n:]))
    rhs_log = np.logaddexp(p * log_dm + head.log_value, tail.log_value)
    residual = float(abs(np.expm1(rhs_log - whole.log_value))) \
        if np.isfinite(whole.log_value) else float(np.exp(rhs_log))
    out = {"residual": residual}
    if p == int(p):
        sdm = (-1.0) ** (int(np.sum(neg[n:])) * int(p) % 2)
        rhs = sdm * math.exp(p * log_dm) * head.signed + tail.signed
        scale = max(abs(whole.signed), whole.value, 1e-300)
        out["signed_residual"] = abs(whole.signed - rhs) / scale
    return out


def fibonacci_numbers(limit: int) -> list:
    """Q_1, Q_2, ... with Q_1 = Q_2 = 1, up to the last value <= limit."""
    qs = [1, 1]
    while qs[-1] + qs[-2] <= limit:
        qs.append(qs[-1] + qs[-2])
    return qs


def decompose(n: int, scheme: str = "binary") -> tuple:
    """Strictly decreasing exponents (binary) or indices (zeckendorf).

    Binary: n = sum of 2^m over the returned m.  Zeckendorf: n = sum of
    Q_m over the returned 1-based indices, pairwise gaps >= 2 (greedy
    choice, which never selects consecutive indices).
    """
    if n < 1:
        raise ValueError("n must be positive")
    if scheme == "binary":
        return tuple(m for m in range(n.bit_length() - 1, -1, -1)
                     if n >> m & 1)
    if scheme == "zeckendorf":
        qs = fibonacci_numbers(n)
        out = []
        rem = n
        idx = len(qs)
        while rem > 0:
            while qs[idx - 1] > rem:
                idx -= 1
            out.append(idx)
            rem -= qs[idx - 1]
            idx -= 2     # greedy step skips the adjacent index
        return tuple(out)
    raise ValueError(f"unknown scheme {scheme!r}")


def block_lengths(exponents, scheme: str) -> tuple:
    if scheme == "binary":
        return tuple(1 << m for m in exponents)
    all_q = fibonacci_numbers(10 ** 9)
    return tuple(all_q[m - 1] for m in exponents)


@dataclasses.dataclass(frozen=True)
class BlockDecomposition:
    """Lambda_p split over binary or Fibonacci blocks with weights."""

    n: int
    p: float
    x: float
    scheme: str
    exponents: tuple
    lengths: tuple
    weights_log: np.ndarray      # log |Psi_j|
    weights_sign: np.ndarray
    block_log_values: np.ndarray
    return_points: tuple         # upsilon_0 .. upsilon_r
    direct_log_value: float
    blocks_log_value: float
    rel_error: float

    @property
    def weights(self) -> np.ndarray:
        return self.weights_sign * np.exp(self.weights_log)

    @property
    def block_values(self) -> np.ndarray:
        return np.exp(self.block_log_values)


def lambda_blocks(f, x: float, n: int, p: float,
                  scheme: str = "binary",
                  tol: float = 1e-9) -> BlockDecomposition:
    """Evaluate Lambda_p block-by-block and verify against the direct sum.

    The orbit is cut into blocks of length 2^m (or Q_m), largest first;
    each block contributes its own Lambda_p at the block's entry point
    (the return points upsilon_j), weighted by the p-th power of the
    derivative of the remaining steps.
    """
    exps = decompose(n, scheme)
    lengths = block_lengths(exps, scheme)
    xs, logd, neg = _orbit_logs(f, x, n)
    starts = np.concatenate([[0], np.cumsum(lengths)]).astype(int)
    cums = np.concatenate([[0.0], np.cumsum(logd)])
    cumn = np.concatenate([[0], np.cumsum(neg)])

    w_log, w_sign, blk_log, points = [], [], [], []
    for j, L in enumerate(lengths):
        a, b = starts[j], starts[j + 1]
        # within-block suffix products start at the second block point
        seg = logd[a:b]
        S = _suffix(seg)[1:]
        blk_log.append(float(logsumexp(p * S)))
        w_log.append(float(cums[n] - cums[b]))
        w_sign.append((-1.0) ** (int(cumn[n] - cumn[b]) % 2))
        points.append(float(xs[b]))

    w_log = np.asarray(w_log)
    blk_log = np.asarray(blk_log)
    blocks_log = float(logsumexp(p * w_log + blk_log))
    direct = lambda_direct(f, x, n, p)
    rel = float(abs(np.expm1(blocks_log - direct.log_value)))
    if rel > tol:
        raise ReconstructionMismatch(
            f"block total differs from direct value by {rel:.3g} relative",
            direct=direct.value, blocks=float(np.exp(blocks_log)))
    return BlockDecomposition(
        n=n, p=float(p), x=float(x), scheme=scheme, exponents=exps,
        lengths=lengths, weights_log=w_log,
        weights_sign=np.asarray(w_sign), block_log_values=blk_log,
        return_points=tuple(points), direct_log_value=direct.log_value,
        blocks_log_value=blocks_log, rel_error=rel)


@dataclasses.dataclass(frozen=True)
class RatioCurve:
    """Lyapunov-condition diagnostics along a time schedule."""

    p: float
    schedule: str
    n_values: np.ndarray
    log_lambda2: np.ndarray
    log_lambda3: np.ndarray
    log_lambda4: np.ndarray
    log_hat: np.ndarray
    log_ratio: np.ndarray         # Lambda_p / Lambda_2^{p/2}
    log_weak_noise: np.ndarray    # hat^3 / sqrt(Lambda_2)
    per_step_factor: float        # geometric fit of the ratio sequence
    decreasing_fraction: float

    def ratio(self) -> np.ndarray:
        return np.exp(self.log_ratio)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL,
                            lineterminator="\n")
        writer.writerow(["n", "Lambda2", "Lambda3", "Lambda4", "LambdaHat",
                         "ratio3", "ratio4", "weak_noise_factor"])
        r3 = self.log_lambda3 - 1.5 * self.log_lambda2
        r4 = self.log_lambda4 - 2.0 * self.log_lambda2
        for i, n in enumerate(self.n_values):
            writer.writerow([
                int(n),
                f"{np.exp(self.log_lambda2[i]):.10g}",
                f"{np.exp(self.log_lambda3[i]):.10g}",
                f"{np.exp(self.log_lambda4[i]):.10g}",
                f"{np.exp(self.log_hat[i]):.10g}",
                f"{np.exp(r3[i]):.10g}",
                f"{np.exp(r4[i]):.10g}",
                f"{np.exp(self.log_weak_noise[i]):.10g}"])
        return buf.getvalue()


def _schedule(kind: str, n_max: int) -> np.ndarray:
    if kind == "all_n":
        return np.arange(1, n_max + 1)
    if kind == "powers_of_2":
        return 2 ** np.arange(1, int(math.log2(n_max)) + 1)
    if kind == "fibonacci":
        return np.asarray(sorted(set(fibonacci_numbers(n_max))))
    raise ValueError(f"unknown schedule {kind!r}")


def lyapunov_ratio_curve(f, x: float, p: float, n_max: int,
                         schedule: str = "powers_of_2") -> RatioCurve:
    """Lambda_p / Lambda_2^{p/2} and the weak-noise factor over a schedule.

    One orbit to n_max is shared across all evaluation times.  The
    per-step geometric factor is fitted by log-regression of the ratio
    against the schedule index (so for powers_of_2 it is the
    per-doubling factor).
    """
    if p <= 2:
        raise ValueError("the ratio is informative only for p > 2")
    ns = _schedule(schedule, n_max)
    _, logd, _ = _orbit_logs(f, x, int(ns[-1]))
    cums = np.concatenate([[0.0], np.cumsum(logd)])
    hat_running = _hat_logs(logd, int(ns[-1]))
    hat_max = np.maximum.accumulate(hat_running)

    cols = {q: np.empty(len(ns)) for q in (2.0, 3.0, 4.0, p)}
    for i, n in enumerate(ns):
        S = cums[n] - cums[1:n + 1]
        for q in cols:
            cols[q][i] = logsumexp(q * S)
    log_hat = hat_max[ns]
    log_ratio = cols[p] - (p / 2.0) * cols[2.0]
    log_weak = 3.0 * log_hat - 0.5 * cols[2.0]

    steps = np.diff(log_ratio)
    slope = float(np.polyfit(np.arange(len(ns)), log_ratio, 1)[0]) \
        if len(ns) > 1 else 0.0
    return RatioCurve(
        p=float(p), schedule=schedule, n_values=ns,
        log_lambda2=cols[2.0], log_lambda3=cols[3.0],
        log_lambda4=cols[4.0], log_hat=log_hat, log_ratio=log_ratio,
        log_weak_noise=log_weak,
        per_step_factor=float(np.exp(slope)),
        decreasing_fraction=float(np.mean(steps < 0)) if len(steps) else 1.0)


def sandwich_constants(g, eps: float = 0.05) -> dict:
    """Constants for the return-point and weight-derivative bounds.

    From the fixed point g of order 2k: G = g(lam) - eps,
    c = |g'(lam) lam^{1-2k}| - eps, d = |2k h'(0)| + eps where g = h(t^2k);
    their combination satisfies 1 < c G^{2k-1} < d.
    """
    lam, k = g.lam, g.k
    h_prime0 = float(g.h.derivative()(0.0))
    G = float(g(lam)) - eps
    c = abs(float(g.deriv(lam)) * lam ** (1 - 2 * k)) - eps
    d = abs(2 * k * h_prime0) + eps
    combo = c * G ** (2 * k - 1)
    return {"G": G, "c": c, "d": d, "combo": combo,
            "combo_ok": 1.0 < combo < d}


def growth_bounds_report(f, x: float, exponents, constants: dict) -> dict:
    """Check the return-point and block-derivative sandwiches.

    For return points upsilon_j generated by blocks 2^{m_j} from x
    (|x| <= |Gamma_{m_0 + 1}| required):
    G |Gamma_{m_j}| <= |upsilon_j| <= |Gamma_{m_j}|, and the block
    derivative at upsilon_{j-1} lies within [c G^{2k-1}, d] times
    |Gamma_{m_{j-1}} / Gamma_{m_j}|^{2k-1}.
    """
    exps = tuple(exponents)
    k = f.k
    # Gamma_m = f^(2^m)(0) by doubling the orbit of 0
    gammas = {}
    y = 0.0
    step = 0
    for m in range(max(exps) + 1):
        target = 1 << m
        while step < target:
            y = float(f(y))
            step += 1
        gammas[m] = y

    df = _deriv_callable(f)
    G, c, d = constants["G"], constants["c"], constants["d"]
    cg = c * G ** (2 * k - 1)
    ups = []
    derivs = []
    y = float(x)
    for m in exps:
        dlog = 0.0
        for _ in range(1 << m):
            dlog += math.log(max(abs(float(df(y))), DERIV_FLOOR))
            y = float(f(y))
        ups.append(y)
        derivs.append(dlog)

    point_ok, deriv_ok = [], []
    for j, m in enumerate(exps):
        gm = abs(gammas[m])
        point_ok.append(G * gm <= abs(ups[j]) <= gm)
        if j >= 1:
            ratio = abs(gammas[exps[j - 1]] / gammas[m]) ** (2 * k - 1)
            dv = math.exp(derivs[j])
            deriv_ok.append(cg * ratio <= dv <= d * ratio)
    return {"return_points": tuple(ups),
            "point_bounds_ok": all(point_ok),
            "deriv_bounds_ok": all(deriv_ok) if deriv_ok else True,
            "point_flags": tuple(point_ok),
            "deriv_flags": tuple(deriv_ok)}
