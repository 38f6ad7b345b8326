"""Golden-mean circle maps and their Fibonacci renormalizations.

Lifts F with F(x+1) = F(x)+1 are iterated with the integer part carried
separately (exact compensation), so the small quantities
f^(Q_n)(0) - Q_{n-1} survive hundreds of iterations.  Tuning the family
offset to the golden rotation number is a nested bisection on the order
conditions at successive Fibonacci times; the rescaled renormalizations
f_n then converge to a universal map whose self-similarity identities
are evaluated as residuals.
"""

from __future__ import annotations

import dataclasses
import json
import math

import numpy as np

from . import funcspace as fs
from .errors import BracketLost, NonFiniteSample, NonMonotone, NotRenormalizable

#: golden mean, the target rotation number
BETA = (math.sqrt(5.0) - 1.0) / 2.0

#: default half-width of the fit interval for rescaled maps
FIT_HALFWIDTH = 1.6

TWO_PI = 2.0 * math.pi


def fibonacci(n: int) -> list:
    """Q_1..Q_n with Q_1 = Q_2 = 1."""
    qs = [1, 1]
    while len(qs) < n:
        qs.append(qs[-1] + qs[-2])
    return qs[:n]


@dataclasses.dataclass(frozen=True)
class CircleLift:
    """Cubic critical family x + omega - sin(2 pi x) / (2 pi).

    The sine term removes the first and second derivatives at 0, making
    the circle map critical of cubic type (k = 1).
    """

    omega: float
    k: int = 1

    def __call__(self, x):
        x = np.asarray(x, float)
        return x + self.omega - np.sin(TWO_PI * x) / TWO_PI

    def deriv(self, x):
        return 1.0 - np.cos(TWO_PI * np.asarray(x, float))

    def frac_step(self, y: float) -> float:
        """One step of the fractional part (the lift commutes with x+1)."""
        return y + self.omega - math.sin(TWO_PI * y) / TWO_PI

    def increment(self, x, u):
        """f(x+u) - f(x) without cancellation, for tiny deviations u."""
        u = np.asarray(u, float)
        return u - np.cos(TWO_PI * x + math.pi * u) \
            * np.sin(math.pi * u) / math.pi

    @property
    def critical(self) -> bool:
        return True


@dataclasses.dataclass(frozen=True)
class RigidRotation:
    """Linear lift x + alpha; no critical point."""

    alpha: float

    def __call__(self, x):
        return np.asarray(x, float) + self.alpha

    def deriv(self, x):
        return np.ones_like(np.asarray(x, float))

    def frac_step(self, y: float) -> float:
        return y + self.alpha

    def increment(self, x, u):
        return np.asarray(u, float)

    @property
    def critical(self) -> bool:
        return False


def _iterate(F, steps: int) -> float:
    """F^steps(0) with the integer part carried exactly."""
    y = 0.0
    m = 0
    for _ in range(steps):
        y = F.frac_step(y)
        shift = math.floor(y)
        m += shift
        y -= shift
    return m + y


@dataclasses.dataclass(frozen=True)
class RotationEstimate:
    value: float
    error: float

    def __float__(self):
        return self.value


def rotation_number(F, iters: int = 10 ** 5) -> RotationEstimate:
    """Orbit-average rotation number, accelerated at Fibonacci times.

    Runs the orbit of 0 for `iters` steps, forms (F^n(0))/n at the
    Fibonacci times (where the oscillating error term is smallest) and
    Aitken-extrapolates the last three estimates.  The attached error is
    the gap between the extrapolation and the last raw estimate.
    """
    if iters < 1000:
        raise ValueError("need at least 1000 iterations")
    probe = np.linspace(0.0, 1.0, 257)
    if np.min(F.deriv(probe)) < -1e-12:
        raise NonMonotone("lift derivative negative on the circle")

    marks = [q for q in fibonacci(40) if q <= iters]
    ests = []
    y, m = 0.0, 0
    step = 0
    for q in marks:
        while step < q:
            y = F.frac_step(y)
            shift = math.floor(y)
            m += shift
            y -= shift
            step += 1
        ests.append((m + y) / q)
    e0, e1, e2 = ests[-3], ests[-2], ests[-1]
    denom = (e2 - e1) - (e1 - e0)
    if abs(denom) > 1e-300:
        accel = e2 - (e2 - e1) ** 2 / denom
    else:
        accel = e2
    return RotationEstimate(value=float(accel), error=float(abs(accel - e2)))


def _order_gap(F, n: int, qs) -> float:
    """f^(Q_n)(0) - Q_{n-1}; its sign at golden parameters is (-1)^(n-1)."""
    q_prev = qs[n - 2] if n >= 2 else 0
    return _iterate(F, qs[n - 1]) - q_prev


def golden_bracket(family, depth: int = 20,
                   bracket=(0.0, 1.0), width: float = 1e-12) -> tuple:
    """Nested bracket of the golden offset from the order conditions.

    `family` maps an offset to a lift.  For each Fibonacci index n up to
    `depth`, the zero of f^(Q_n)(0) - Q_{n-1} (increasing in the offset)
    is located and becomes the new lower or upper end of the bracket,
    depending on the sign the golden parameter must have there.  Returns
    (lo, hi); the loop stops early once the bracket is below `width`.
    """
    qs = fibonacci(depth + 1)
    lo, hi = bracket
    for n in range(3, depth + 1):
        glo = _order_gap(family(lo), n, qs)
        ghi = _order_gap(family(hi), n, qs)
        if not glo < 0 < ghi:
            raise BracketLost(
                f"order condition at index {n} not bracketed on "
                f"[{lo}, {hi}] (gaps {glo:.3g}, {ghi:.3g})")
        a, b = lo, hi
        while b - a > width:
            mid = 0.5 * (a + b)
            if _order_gap(family(mid), n, qs) < 0:
                a = mid
            else:
                b = mid
        root = 0.5 * (a + b)
        # at the golden offset the gap has sign (-1)^(n-1)
        if n % 2 == 1:
            lo = root
        else:
            hi = root
        if hi - lo < width:
            break
    return lo, hi


def tune_to_golden(family, depth: int = 20,
                   bracket=(0.0, 1.0), width: float = 1e-12):
    """Family member at the midpoint of the golden-offset bracket."""
    lo, hi = golden_bracket(family, depth, bracket, width)
    return family(0.5 * (lo + hi))


@dataclasses.dataclass(frozen=True)
class FibRenorm:
    """Fibonacci renormalization data for a tuned lift."""

    omega: float
    k: int
    Q: tuple
    lambdas: tuple            # lambda_(n) = f^(Q_n)(0) - Q_{n-1}
    alphas: tuple             # alpha_n = lambda_(n) / lambda_(n-1), n >= 2
    rescaled_maps: tuple      # f_n on [-B, B], aligned with alphas
    fit_halfwidth: float

    def to_json(self) -> str:
        res = circle_fixed_identities(self)
        return json.dumps({
            "Omega": self.omega,
            "lambdas": list(self.lambdas),
            "alphas": list(self.alphas),
            "identity_residuals": res,
        }, indent=2, sort_keys=True)


def fib_renormalize(F, n_max: int = 14, degree: int = 40,
                    halfwidth: float = FIT_HALFWIDTH) -> FibRenorm:
    """Rescaled renormalizations f_n(x) = f_(n)(lambda_(n-1) x)/lambda_(n-1).

    f_(n) = f^(Q_n) - Q_{n-1} is evaluated by direct iteration with the
    integer part carried exactly; each f_n is fitted on [-B, B].
    """
    if not getattr(F, "critical", False):
        raise NotRenormalizable(
            "map has no critical point on the circle", failed="criticality")
    if n_max < 3:
        raise ValueError("need n_max >= 3")
    qs = fibonacci(n_max)
    lambdas = [_order_gap(F, n, qs) for n in range(1, n_max + 1)]
    for n, lam in enumerate(lambdas, start=1):
        if (-1.0) ** (n - 1) * lam <= 0:
            raise NotRenormalizable(
                f"renormalized offset at index {n} has the wrong sign "
                f"({lam:.3g}); the lift is not tuned deep enough",
                failed="sign alternation")
    alphas = [lambdas[i] / lambdas[i - 1] for i in range(1, n_max)]

    dom = fs.Interval(-halfwidth, halfwidth)
    maps = []
    for n in range(2, n_max + 1):
        scale = lambdas[n - 2]
        q, q_prev = qs[n - 1], qs[n - 2]

        def f_n(x, scale=scale, q=q, q_prev=q_prev):
            y = scale * x
            shift = math.floor(y)
            y -= shift
            m = shift
            for _ in range(q):
                y = F.frac_step(y)
                s = math.floor(y)
                m += s
                y -= s
            return (m + y - q_prev) / scale

        fit = fs.fit(f_n, dom, degree)
        if not np.all(np.isfinite(np.asarray(fit.coeffs))):
            raise NonFiniteSample("rescaled map fit produced non-finite data")
        maps.append(fit)
    return FibRenorm(omega=float(getattr(F, "omega", float("nan"))),
                     k=getattr(F, "k", 1), Q=tuple(qs),
                     lambdas=tuple(lambdas), alphas=tuple(alphas),
                     rescaled_maps=tuple(maps), fit_halfwidth=halfwidth)


def growth_condition(R: FibRenorm, rho_by_p: dict,
                     x_floor: float = 0.05) -> dict:
    """Block-weight growth condition for the deepest rescaled map.

    With H(x) = f'(x)/x^(2k) and s = inf H, u = sup H over |x| <= lam^2,
    checks (s lam^(6k))^p lam^(2kp) rho_p > 1 for each p in rho_by_p.
    The ratio H is evaluated for x_floor <= |x| <= lam^2 only: near 0
    both f'(x) and x^(2k) vanish and the quotient is dominated by fit
    noise, while H itself extends continuously (H -> f'''(0)/2 for
    k = 1, about 3.79 here, inside the sampled range).
    """
    f = R.rescaled_maps[-1]
    lam = R.alphas[-1]
    k = R.k
    df = f.derivative()
    top = lam * lam
    if not x_floor < top:
        raise ValueError("x_floor must be below lambda^2")
    x = np.concatenate([np.linspace(-top, -x_floor, 400),
                        np.linspace(x_floor, top, 400)])
    ratio = np.asarray(df(x)) / x ** (2 * k)
    s, u = float(np.min(ratio)), float(np.max(ratio))
    out = {"s_k": s, "u_k": u, "lam": lam, "values": {}, "margins": {},
           "holds": {}}
    for p, rho in rho_by_p.items():
        val = (s * abs(lam) ** (6 * k)) ** p * abs(lam) ** (2 * k * p) * rho
        out["values"][p] = val
        out["margins"][p] = val - 1.0
        out["holds"][p] = bool(val > 1.0)
    out["all_hold"] = all(out["holds"].values())
    return out


def circle_fixed_identities(R: FibRenorm) -> dict:
    """Self-similarity residuals of the deepest rescaled map.

    Uses f_(n_max) as proxy for the universal map and alpha_(n_max) for
    the universal scaling ratio; the four identities pin the values and
    derivatives at 1 and at lambda^2.
    """
    if len(R.rescaled_maps) < 9:
        raise ValueError("need renormalization depth n_max >= 10")
    f = R.rescaled_maps[-1]
    lam = R.alphas[-1]
    k = R.k
    df = f.derivative()
    return {
        "value_at_1": abs(float(f(1.0)) - lam ** 2),
        "value_at_lam2": abs(float(f(lam ** 2)) - lam ** 3),
        "deriv_at_1": abs(float(df(1.0)) * lam ** (4 * k) - 1.0),
        "deriv_at_lam2": abs(float(df(lam ** 2)) * lam ** (2 * k) - 1.0),
    }
