"""Transfer operators for noise-moment growth and their spectra.

Operators are discretized by Chebyshev collocation: the dense matrix maps
the coefficient vector of h to the coefficient vector of the transformed
function, with `chebvander` interpolation realizing the compositions.
Spectral radii come from positive power iteration cross-checked against a
dense eigensolve, and the convexity/monotonicity verdicts are evaluated on
a grid of moment exponents p.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json

import numpy as np
import scipy.linalg
from numpy.polynomial import chebyshev as C

from . import funcspace as fs
from .errors import (CrossCheckFailed, DomainEscape, NegativeEigenfunction,
                     NotConverged, PositivityViolated, RangeEscape)

#: default collocation degree for single-interval operators
PD_DEGREE = 48

#: default collocation degree per block for the two-component operators
CIRCLE_DEGREE = 64


@dataclasses.dataclass(frozen=True)
class TransferOp:
    """Dense collocation matrix acting on coefficient vectors.

    For the two-component kinds the matrix is a 2x2 arrangement of
    (degree+1)-square blocks and vectors stack the two components.
    """

    matrix: np.ndarray
    p: float
    kind: str        # pd_unsigned | pd_signed_cumulant | circle_K | circle_Khat
    source: str
    domain: fs.Interval
    degree: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("non-finite entries in operator matrix")
        self.matrix.setflags(write=False)

    @property
    def blocks(self) -> int:
        return self.matrix.shape[0] // (self.degree + 1)

    def apply(self, coeffs: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(coeffs, float)

    def node_values(self, coeffs: np.ndarray) -> np.ndarray:
        """Values of a (stacked) coefficient vector at the collocation nodes."""
        n1 = self.degree + 1
        u = np.sort(C.chebpts1(n1))
        V = C.chebvander(u, self.degree)
        c = np.asarray(coeffs, float)
        return np.concatenate([V @ c[j * n1:(j + 1) * n1]
                               for j in range(self.blocks)])

    def functions(self, coeffs: np.ndarray):
        n1 = self.degree + 1
        c = np.asarray(coeffs, float)
        return tuple(fs.AnalyticFn(self.domain, c[j * n1:(j + 1) * n1])
                     for j in range(self.blocks))


def _coeff_matrix(n: int) -> np.ndarray:
    """Node values at the n+1 Chebyshev nodes -> Chebyshev coefficients."""
    u = np.sort(C.chebpts1(n + 1))
    F = C.chebvander(u, n).T * (2.0 / (n + 1))
    F[0] *= 0.5
    return F


def build_pd_operator(f, p: float, signed: bool = False,
                      degree: int = PD_DEGREE) -> TransferOp:
    """Coefficient-space operator for a map in the doubling cone.

    Unsigned: h(z) -> (-lam)^-p [ (-f'(f(lam z)))^p h(lam z) + h(f(lam z)) ].
    Signed (integer p): prefactor 1/lam^p with the derivative kept signed;
    coincides with the unsigned operator for even p.
    """
    if signed and p != int(p):
        raise ValueError("signed cumulant operator requires integer p")
    dom = fs.Interval(-1.0, 1.0)
    n = degree
    z = fs.chebyshev_nodes(dom, n + 1)
    lam = f.lam
    inner = lam * z
    if np.max(np.abs(inner)) > 1.0 + 1e-12:
        bad = int(np.argmax(np.abs(inner)))
        raise RangeEscape(f"lam*z = {inner[bad]} leaves [-1, 1]",
                          node=float(z[bad]))
    fi = np.asarray(f(inner), float)
    if np.max(np.abs(fi)) > 1.0 + 1e-12:
        bad = int(np.argmax(np.abs(fi)))
        raise RangeEscape(f"f(lam z) = {fi[bad]} leaves [-1, 1]",
                          node=float(z[bad]))
    fi = np.clip(fi, -1.0, 1.0)
    dvals = np.asarray(f.deriv(fi), float)
    if not signed:
        w = -dvals
        if np.any(w <= 0):
            bad = int(np.argmin(w))
            raise PositivityViolated(
                f"-f'(f(lam z)) = {w[bad]:.3g} at node {z[bad]:.6g}",
                node=float(z[bad]), value=float(w[bad]))
        weight = w ** p
        prefac = (-lam) ** (-p)
    else:
        weight = dvals ** int(p)
        prefac = lam ** (-float(int(p)))
    V1 = C.chebvander(inner, n)
    V2 = C.chebvander(fi, n)
    mat = prefac * (_coeff_matrix(n) @ (weight[:, None] * V1 + V2))
    kind = "pd_signed_cumulant" if signed else "pd_unsigned"
    return TransferOp(mat, p, kind, f"pd(k={f.k})", dom, n)


def build_circle_operator(f_a: fs.AnalyticFn, f_b: fs.AnalyticFn,
                          alpha_a: float, alpha_b: float, p: float,
                          hat: bool = False,
                          degree: int = CIRCLE_DEGREE) -> TransferOp:
    """Two-component operator from consecutive rescaled circle maps.

    `f_a`, `alpha_a` belong to the most recent renormalization level and
    `f_b`, `alpha_b` to the one before.  The pair of functions the operator
    acts on lives on the common fit interval of the two proxies; every
    composite argument must stay inside it.  The lower-left identity block
    is a degree truncation (by 4), the compactness device keeping spurious
    high modes damped.
    """
    if f_a.domain != f_b.domain:
        raise ValueError("proxy maps must share a fit interval")
    dom = f_a.domain
    n = degree
    z = fs.chebyshev_nodes(dom, n + 1)

    def guard(args, name):
        over = np.maximum(args - dom.hi, dom.lo - args)
        if np.max(over) > 1e-10:
            bad = int(np.argmax(over))
            raise DomainEscape(
                f"{name} argument {args[bad]:.6g} outside fit interval "
                f"[{dom.lo}, {dom.hi}] at node {z[bad]:.6g}")
        return np.clip(args, dom.lo, dom.hi)

    fa_prime = f_a.derivative()
    fb_prime = f_b.derivative()
    F = _coeff_matrix(n)

    def interp(args):
        return C.chebvander(dom.to_unit(args), n)

    if not hat:
        # top row: R h(z) = h(alpha_b^-1 f_b(alpha_a alpha_b z)),
        #          T_p q(z) = [f_a'(same point)]^p q(alpha_a alpha_b z)
        arg_in = guard(alpha_a * alpha_b * z, "T inner")
        mid = guard(np.asarray(f_b(arg_in), float) / alpha_b, "R image")
        w = np.asarray(fa_prime(mid), float)
        wp = w ** p if p != 0 else np.ones_like(w)
        top_h = F @ interp(mid)
        top_q = F @ (wp[:, None] * interp(arg_in))
        kind = "circle_K"
    else:
        # top row: U_p h(z) = [f_b'(alpha_b f_a(alpha_a z))]^p h(alpha_a z),
        #          P q(z)   = q(alpha_b f_a(alpha_a z))
        arg_in = guard(alpha_a * z, "U inner")
        mid = guard(alpha_b * np.asarray(f_a(arg_in), float), "P image")
        w = np.asarray(fb_prime(mid), float)
        wp = w ** p if p != 0 else np.ones_like(w)
        top_h = F @ (wp[:, None] * interp(arg_in))
        top_q = F @ interp(mid)
        kind = "circle_Khat"
    if p != 0 and np.any(w <= 0):
        bad = int(np.argmin(w))
        raise PositivityViolated(
            f"derivative weight {w[bad]:.3g} at node {z[bad]:.6g}",
            node=float(z[bad]), value=float(w[bad]))

    # identity block as a coefficient truncation by 4 degrees
    ident = np.eye(n + 1)
    ident[-4:, -4:] = 0.0

    mat = np.zeros((2 * (n + 1), 2 * (n + 1)))
    mat[:n + 1, :n + 1] = top_h
    mat[:n + 1, n + 1:] = top_q
    mat[n + 1:, :n + 1] = ident
    return TransferOp(mat, p, kind, "circle", dom, n)


def spectral_radius(op: TransferOp, tol: float = 1e-12,
                    max_iter: int = 20000) -> dict:
    """Dominant eigenvalue by positive power iteration, dense cross-check.

    Starts from the constant function 1 (both components for the block
    kinds), normalizes in sup over nodes, stops when successive Rayleigh
    estimates agree to `tol`.
    """
    n1 = op.degree + 1
    c = np.zeros(op.matrix.shape[0])
    for j in range(op.blocks):
        c[j * n1] = 1.0
    rho_prev = np.inf
    iters = 0
    for iters in range(1, max_iter + 1):
        w = op.matrix @ c
        rho = float(np.max(np.abs(op.node_values(w))))
        if rho == 0.0:
            raise NotConverged("operator annihilated the iterate", iters=iters)
        c = w / rho
        if abs(rho - rho_prev) < tol * max(1.0, rho):
            break
        rho_prev = rho
    else:
        raise NotConverged(
            f"power iteration not settled after {max_iter} steps",
            iters=max_iter)

    vals = op.node_values(c)
    if vals[np.argmax(np.abs(vals))] < 0:
        c, vals = -c, -vals
    if np.any(vals <= 0):
        raise NegativeEigenfunction(
            f"dominant eigenfunction non-positive at "
            f"{int(np.sum(vals <= 0))} nodes")

    dense = scipy.linalg.eigvals(op.matrix)
    rho_dense = float(np.max(np.abs(dense)))
    if abs(rho - rho_dense) > 1e-6 * rho_dense:
        raise CrossCheckFailed(
            f"power iteration {rho} vs dense eigensolve {rho_dense}")

    return {"rho": rho, "rho_dense": rho_dense,
            "eigfn": op.functions(c), "iters": iters}


@dataclasses.dataclass
class SpectralReport:
    """Spectral radii over a p-grid with monotonicity and convexity verdicts."""

    p_grid: np.ndarray
    rho: np.ndarray
    eigenfunctions: tuple
    lam: float
    k: int
    kind: str
    monotone_ok: bool = False
    logconvex_ok: bool = False
    logrho_over_p_decreasing_ok: bool = False
    bounds_ok: bool = False
    margins: dict = dataclasses.field(default_factory=dict)
    gamma: float = float("nan")
    gamma_unscaled: float = float("nan")
    two_resolution_max_diff: float = float("nan")

    def to_json(self) -> str:
        data = dataclasses.asdict(self)
        data["p_grid"] = list(map(float, self.p_grid))
        data["rho"] = list(map(float, self.rho))
        data.pop("eigenfunctions")
        return json.dumps(data, indent=2, sort_keys=True, default=float)

    def rho_csv(self) -> str:
        """Grid as CSV: p, rho, log_rho, logrho_over_p, bound_lo, bound_hi."""
        buf = io.StringIO()
        writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
        writer.writerow(["p", "rho", "log_rho", "logrho_over_p",
                         "bound_lo", "bound_hi"])
        e = 2 * self.k
        for p, r in zip(self.p_grid, self.rho):
            lo = abs(self.lam) ** (-e * p)
            hi = (1.0 + abs(self.lam) ** ((e - 1) * p)) * lo
            writer.writerow([f"{p:.10g}", f"{r:.12g}", f"{np.log(r):.12g}",
                             f"{np.log(r) / p:.12g}", f"{lo:.12g}",
                             f"{hi:.12g}"])
        return buf.getvalue()


def _rho_grid(build, p_grid, degree):
    rhos, eigs = [], []
    for p in p_grid:
        rec = spectral_radius(build(p, degree))
        rhos.append(rec["rho"])
        eigs.append(rec["eigfn"])
    return np.asarray(rhos), tuple(eigs)


def convexity_report(f, p_grid, degree: int = PD_DEGREE,
                     agreement_tol: float = 1e-7,
                     max_degree: int = 256) -> SpectralReport:
    """Spectral radii of the doubling-cone operator over `p_grid`.

    Computes each rho at two truncations (degree and degree+16),
    escalating until they agree to `agreement_tol`, then evaluates
    monotonicity, midpoint log-convexity, decrease of log(rho)/p, and the
    two-sided bounds, each with a margin.  The moment growth exponent
    gamma is the base-2 logarithm of r_1^3 / sqrt(r_2), where
    r_p = |lam|^p rho_p is the per-doubling growth rate of the p-th
    moment aggregate; gamma_unscaled uses the bare radii instead.
    """
    p_grid = np.asarray(sorted(p_grid), float)
    if len(p_grid) < 4 or np.any(p_grid <= 0):
        raise ValueError("need at least 4 positive p values")

    def build(p, deg):
        return build_pd_operator(f, p, degree=deg)

    # gamma needs p = 1, 2 regardless of the grid
    p_all = np.unique(np.concatenate((p_grid, [1.0, 2.0])))
    deg = degree
    while True:
        rho_a, eigs = _rho_grid(build, p_all, deg)
        rho_b, _ = _rho_grid(build, p_all, deg + 16)
        diff = float(np.max(np.abs(rho_a - rho_b) / rho_b))
        if diff <= agreement_tol:
            break
        deg *= 2
        if deg > max_degree:
            raise CrossCheckFailed(
                f"two-resolution agreement {diff:.3g} not reached "
                f"by degree {deg}")

    sel = np.isin(p_all, p_grid)
    rho = rho_a[sel]
    eigenfunctions = tuple(e for e, s in zip(eigs, sel) if s)
    lam = f.lam
    e = 2 * f.k

    mono_margin = float(np.min(np.diff(rho)))
    # midpoint convexity on consecutive triples of the (possibly
    # nonuniform) grid: chord value minus interior value must be positive
    convex_margins = []
    for i in range(1, len(p_grid) - 1):
        t = (p_grid[i] - p_grid[i - 1]) / (p_grid[i + 1] - p_grid[i - 1])
        chord = (1 - t) * np.log(rho[i - 1]) + t * np.log(rho[i + 1])
        convex_margins.append(chord - np.log(rho[i]))
    convex_margin = float(np.min(convex_margins))
    over_p = np.log(rho) / p_grid
    overp_margin = float(np.min(-np.diff(over_p)))

    scaled = np.abs(lam) ** (e * p_grid) * rho
    s1_lower = float(np.min(scaled - 1.0))
    s1_upper = float(np.min(1.0 + np.abs(lam) ** ((e - 1) * p_grid) - scaled))
    compa_lower = float(np.min(rho - np.abs(lam) ** (-e * p_grid)))

    rho1 = rho_a[np.searchsorted(p_all, 1.0)]
    rho2 = rho_a[np.searchsorted(p_all, 2.0)]
    r1 = abs(lam) * rho1
    r2 = lam * lam * rho2
    gamma = float(np.log2(r1 ** 3 / np.sqrt(r2)))
    gamma_unscaled = float(np.log2(rho1 ** 3 / np.sqrt(rho2)))

    return SpectralReport(
        p_grid=p_grid, rho=rho, eigenfunctions=eigenfunctions,
        lam=lam, k=f.k, kind="pd_unsigned",
        monotone_ok=mono_margin > 0,
        logconvex_ok=convex_margin > 0,
        logrho_over_p_decreasing_ok=overp_margin > 0,
        bounds_ok=min(s1_lower, s1_upper, compa_lower) > 0,
        margins={
            "monotone": mono_margin,
            "logconvex": convex_margin,
            "logrho_over_p": overp_margin,
            "bound_lower": s1_lower,
            "bound_upper": s1_upper,
            "bound_derivative_power": compa_lower,
        },
        gamma=gamma, gamma_unscaled=gamma_unscaled,
        two_resolution_max_diff=diff)


def product_growth(maps, p: float, n: int, rho_p: float,
                   degree: int = PD_DEGREE) -> dict:
    """Chain of operators along a renormalization trajectory applied to 1.

    `maps` is the trajectory (f, Tf, T^2 f, ...); the j-th step applies
    the operator of the j-th map.  Returns the per-step functions, the
    per-step ratio extremes of k^(j+1) / (rho_p k^(j)) over the nodes
    (approaching 1 as the trajectory settles), and the alignment extremes
    of sup k^(j) / rho_p^j over the chain.
    """
    if len(maps) < n:
        raise ValueError("trajectory shorter than requested chain length")
    dom = fs.Interval(-1.0, 1.0)
    c = np.zeros(degree + 1)
    c[0] = 1.0
    funcs = []
    ratios = []
    log_offset = 0.0   # running log of extracted factors, keeps c O(1)
    levels = []
    for j in range(n):
        op = build_pd_operator(maps[j], p, degree=degree)
        w = op.matrix @ c
        ratio = op.node_values(w) / (rho_p * op.node_values(c))
        ratios.append((float(np.min(ratio)), float(np.max(ratio))))
        scale = float(np.max(np.abs(op.node_values(w))))
        log_offset += np.log(scale)
        c = w / scale
        funcs.append(fs.AnalyticFn(dom, c))
        levels.append(log_offset - (j + 1) * np.log(rho_p))
    levels = np.exp(levels)   # sup of k^(j) / rho_p^j
    return {
        "functions": tuple(funcs),
        "step_ratios": ratios,
        "alignment_sup": float(np.max(levels)),
        "alignment_inf": float(np.min(levels)),
        "alignment_levels": levels,
    }


def circle_product_growth(ops, rho_p: float) -> dict:
    """Chain of two-component operators applied to the pair (1, 1)."""
    if not ops:
        raise ValueError("empty operator chain")
    n1 = ops[0].degree + 1
    c = np.zeros(ops[0].matrix.shape[0])
    c[0] = 1.0
    c[n1] = 1.0
    log_offset = 0.0
    levels = []
    for j, op in enumerate(ops):
        c = op.matrix @ c
        scale = float(np.max(np.abs(op.node_values(c))))
        log_offset += np.log(scale)
        c = c / scale
        levels.append(log_offset - (j + 1) * np.log(rho_p))
    levels = np.exp(levels)
    return {
        "alignment_sup": float(np.max(levels)),
        "alignment_inf": float(np.min(levels)),
        "alignment_levels": levels,
    }
