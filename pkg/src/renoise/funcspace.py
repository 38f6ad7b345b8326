"""Truncated Chebyshev series on real intervals.

This is the function-representation engine the rest of the package builds
on: maps, renormalization fixed points and operator eigenfunctions are all
stored as `AnalyticFn` values (Chebyshev-T coefficients on an interval),
evaluated with Clenshaw recurrences via numpy's chebyshev module.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from numpy.polynomial import chebyshev as C

from .errors import DomainEscape, NonFiniteSample, RangeEscape

#: default threshold for the coefficient-decay diagnostic
TAIL_TOL = 1e-10

#: slack allowed when checking that a point lies inside a domain
EDGE_TOL = 1e-12


@dataclasses.dataclass(frozen=True)
class Interval:
    """Closed real interval [lo, hi] with lo < hi."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ValueError("interval endpoints must be finite")
        if not self.lo < self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    def to_unit(self, x):
        """Affine map of this interval onto [-1, 1]."""
        return (2.0 * np.asarray(x) - (self.lo + self.hi)) / (self.hi - self.lo)

    def from_unit(self, u):
        """Inverse of `to_unit`."""
        return 0.5 * ((self.hi - self.lo) * np.asarray(u) + self.lo + self.hi)

    def contains(self, x, tol=EDGE_TOL):
        x = np.asarray(x)
        return np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol)

    @property
    def width(self):
        return self.hi - self.lo


def chebyshev_nodes(domain: Interval, n: int) -> np.ndarray:
    """n Chebyshev (first kind) nodes mapped into `domain`, increasing."""
    return domain.from_unit(np.sort(C.chebpts1(n)))


@dataclasses.dataclass(frozen=True)
class AnalyticFn:
    """Function represented by Chebyshev-T coefficients on an interval.

    Immutable; all operations return new instances.  `coeffs[j]` multiplies
    T_j of the affinely rescaled variable.
    """

    domain: Interval
    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.atleast_1d(np.asarray(self.coeffs, float)))
        if not np.all(np.isfinite(self.coeffs)):
            raise NonFiniteSample("non-finite coefficient in series")
        self.coeffs.setflags(write=False)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def tail_ok(self, tail_tol: float = TAIL_TOL) -> bool:
        """True when the last 10% of coefficients have decayed below tail_tol.

        The analyticity of everything this package represents shows up as
        geometric coefficient decay; a False value flags a function that the
        current truncation does not resolve (reported, never raised).
        """
        n = len(self.coeffs)
        tail = self.coeffs[max(1, n - max(1, n // 10)):]
        if len(tail) == 0:
            return True
        scale = max(1.0, float(np.max(np.abs(self.coeffs))))
        return bool(np.max(np.abs(tail)) <= tail_tol * scale)

    def __call__(self, x, check_domain: bool = True):
        x = np.asarray(x, float)
        if check_domain and not self.domain.contains(x):
            bad = x[~((x >= self.domain.lo - EDGE_TOL) & (x <= self.domain.hi + EDGE_TOL))] \
                if x.ndim else x
            raise DomainEscape(
                f"evaluation at {bad} outside [{self.domain.lo}, {self.domain.hi}]")
        return C.chebval(self.domain.to_unit(x), self.coeffs)

    def derivative(self) -> "AnalyticFn":
        """Exact derivative of the truncated polynomial (degree drops by one)."""
        dc = C.chebder(self.coeffs) * (2.0 / self.domain.width)
        if len(dc) == 0:
            dc = np.zeros(1)
        return AnalyticFn(self.domain, dc)


def fit(sampler, domain: Interval, n: int) -> AnalyticFn:
    """Interpolate `sampler` at the n+1 Chebyshev nodes of `domain`.

    The returned series reproduces the samples to near machine precision;
    for functions analytic on a neighbourhood of the interval the
    coefficients decay geometrically.
    """
    if n < 1:
        raise ValueError("degree must be >= 1")
    u = np.sort(C.chebpts1(n + 1))
    x = domain.from_unit(u)
    vals = np.asarray([sampler(float(xi)) for xi in x], float)
    if not np.all(np.isfinite(vals)):
        bad = x[~np.isfinite(vals)]
        raise NonFiniteSample(f"sampler returned non-finite value at {bad}")
    # Gauss-Chebyshev orthogonality: exact interpolation at the nodes.
    V = C.chebvander(u, n)
    coeffs = (V.T @ vals) * (2.0 / (n + 1))
    coeffs[0] *= 0.5
    out = AnalyticFn(domain, coeffs)
    return out


def fit_values(values, domain: Interval) -> AnalyticFn:
    """Series through values given at the Chebyshev nodes of `domain`.

    `values` must be listed at `chebyshev_nodes(domain, len(values))`.
    """
    vals = np.asarray(values, float)
    n = len(vals) - 1
    u = np.sort(C.chebpts1(n + 1))
    V = C.chebvander(u, n)
    coeffs = (V.T @ vals) * (2.0 / (n + 1))
    coeffs[0] *= 0.5
    return AnalyticFn(domain, coeffs)


def compose(outer: AnalyticFn, inner, out_domain: Interval, n: int,
            margin: float = 1e-10) -> AnalyticFn:
    """Refit x -> outer(inner(x)) at the Chebyshev nodes of `out_domain`.

    `inner` may be an AnalyticFn or any callable.  The range of `inner`
    over the nodes must stay inside outer.domain (up to `margin`).
    """
    nodes = chebyshev_nodes(out_domain, n + 1)
    inner_vals = np.asarray([float(inner(x)) for x in nodes])
    lo, hi = outer.domain.lo, outer.domain.hi
    escape = (inner_vals < lo - margin) | (inner_vals > hi + margin)
    if np.any(escape):
        bad = nodes[escape][0]
        raise RangeEscape(
            f"inner({bad}) = {inner_vals[escape][0]} outside outer domain "
            f"[{lo}, {hi}]", node=float(bad))
    clipped = np.clip(inner_vals, lo, hi)
    return fit_values(outer(clipped), out_domain)


def sup_norm(f: AnalyticFn, samples: int = 256) -> float:
    """Upper-biased sup of |f| on its domain.

    Maximizes over a dense Chebyshev grid and adds the magnitude of the
    coefficient tail, so the result is a (slight) overestimate whenever the
    series has converged.
    """
    if samples < 64:
        raise ValueError("need at least 64 samples")
    grid = [chebyshev_nodes(f.domain, samples),
            np.array([f.domain.lo, f.domain.hi])]
    # interior extrema: real roots of the derivative inside the domain
    if f.degree >= 2:
        roots = C.chebroots(C.chebder(f.coeffs))
        roots = roots[np.abs(roots.imag) < 1e-9].real
        roots = f.domain.from_unit(roots[(roots >= -1) & (roots <= 1)])
        grid.append(roots)
    grid = np.concatenate(grid)
    grid_max = float(np.max(np.abs(f(grid))))
    n = len(f.coeffs)
    # bias upward by the converged tail; structural (large) coefficients
    # are already captured by the grid maximum
    tail = np.abs(f.coeffs[max(1, n - max(1, n // 10)):])
    scale = max(1.0, float(np.max(np.abs(f.coeffs))))
    tail = tail[tail <= TAIL_TOL * scale]
    return grid_max + float(np.sum(tail))


def identity_fn(domain: Interval) -> AnalyticFn:
    """The function x -> x as a degree-1 series on `domain`."""
    mid = 0.5 * (domain.lo + domain.hi)
    half = 0.5 * domain.width
    return AnalyticFn(domain, np.array([mid, half]))


def constant_fn(domain: Interval, value: float, degree: int = 0) -> AnalyticFn:
    coeffs = np.zeros(degree + 1)
    coeffs[0] = value
    return AnalyticFn(domain, coeffs)
