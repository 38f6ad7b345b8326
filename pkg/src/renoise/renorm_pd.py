"""Period-doubling renormalization for even unimodal maps.

Maps of criticality order 2k are stored through their even representation
f(x) = h(x^{2k}); the doubling operator acts on h as

    (T h)(t) = h( h(lambda^{2k} t)^{2k} ) / lambda,     lambda = h(1),

and its fixed point is solved by damped Newton on the Chebyshev
coefficients of h.  The module also provides the quadratic test family
1 - mu x^2, its superstable-parameter cascade, and the closest-approach
scaling oracle used to cross-check the fixed-point multiplier.
"""

from __future__ import annotations

import dataclasses
import json

import numpy as np
from numpy.polynomial import chebyshev as C

from . import funcspace as fs
from .errors import (BracketLost, CrossCheckFailed, NewtonDiverged,
                     NotRenormalizable, SingularJacobian)


@dataclasses.dataclass(frozen=True)
class UnimodalMap:
    """Even unimodal map f(x) = h(x^{2k}) with f(0) = 1.

    `padding` is the margin a >= 0 by which the domain of h extends past
    t = 1, so that f is defined on [-1-a, 1+a] for noisy orbits.
    """

    k: int
    h: fs.AnalyticFn
    padding: float = 0.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("criticality order k must be >= 1")
        if abs(self.h(0.0) - 1.0) > 1e-7:
            raise ValueError(f"h(0) = {self.h(0.0)}, expected 1 (normalization)")
        lam = self.lam
        if not -1.0 < lam < 0.0:
            raise ValueError(f"lambda = f(1) = {lam} outside (-1, 0)")
        # strict decrease of f on (0, 1]: f'(x) = 2k x^(2k-1) h'(x^2k) < 0
        t = np.linspace(1e-3, 1.0, 41) ** (2 * self.k)
        if np.any(self.h.derivative()(t) >= 0):
            raise ValueError("f is not strictly decreasing on (0, 1]")

    @property
    def lam(self) -> float:
        """lambda_f = f(1)."""
        return float(self.h(1.0))

    @property
    def b(self) -> float:
        """b_f = f(lambda_f)."""
        return float(self.h(self.lam ** (2 * self.k)))

    def __call__(self, x):
        x = np.asarray(x, float)
        return self.h(x ** (2 * self.k))

    def deriv(self, x):
        x = np.asarray(x, float)
        p = 2 * self.k
        return p * x ** (p - 1) * self.h.derivative()(x ** p)

    def domain_halfwidth(self) -> float:
        return 1.0 + self.padding


def _h_domain(k: int, padding: float) -> fs.Interval:
    return fs.Interval(0.0, (1.0 + padding) ** (2 * k))


def make_unimodal(k: int, h_of_t, degree: int, padding: float = 0.0) -> UnimodalMap:
    """Fit h(t) on [0, (1+padding)^{2k}] and wrap it as a UnimodalMap."""
    h = fs.fit(h_of_t, _h_domain(k, padding), degree)
    return UnimodalMap(k=k, h=h, padding=padding)


def quadratic_map(mu: float, padding: float = 0.0) -> UnimodalMap:
    """Member 1 - mu x^2 of the quadratic family (k = 1)."""
    return make_unimodal(1, lambda t: 1.0 - mu * t, 2, padding=padding)


def check_renormalizable(f: UnimodalMap) -> None:
    """Raise NotRenormalizable unless P4 (0<|lam|<b) and P5 (0<f(b)<|lam|) hold."""
    lam, b = f.lam, f.b
    if not 0.0 < abs(lam) < b:
        raise NotRenormalizable(
            f"P4 fails: need 0 < |lambda|={abs(lam):.6g} < b={b:.6g}", failed="P4")
    fb = float(f(b))
    if not 0.0 < fb < abs(lam):
        raise NotRenormalizable(
            f"P5 fails: need 0 < f(b)={fb:.6g} < |lambda|={abs(lam):.6g}", failed="P5")


def renormalize(f: UnimodalMap, degree: int | None = None) -> UnimodalMap:
    """Apply the doubling operator T once, staying in the h(x^{2k}) form.

    Internal arithmetic runs in extended precision: roundoff introduced
    here is amplified by the unstable multiplier of T (about 4.67 per
    level) along a renormalization trajectory, so the per-application
    noise floor must sit below double precision.
    """
    check_renormalizable(f)
    n = max(degree if degree is not None else f.h.degree, 2)
    coeffs = _apply_t_coeffs(f.h.coeffs, f.h.domain, f.k, n)
    h_new = fs.AnalyticFn(_h_domain(f.k, 0.0), coeffs.astype(float))
    return UnimodalMap(k=f.k, h=h_new, padding=0.0)


def _apply_t_coeffs(c_in, domain: fs.Interval, k: int, n: int,
                    project: bool = True) -> np.ndarray:
    """Coefficients (longdouble) of T h on [0, 1] at truncation degree n."""
    ld = np.longdouble
    p = 2 * k
    c_in = np.asarray(c_in).astype(ld)
    lo, hi = domain.lo, domain.hi

    def heval(t):
        u = (2.0 * t - (lo + hi)) / (hi - lo)
        return C.chebval(u, c_in)

    lam = heval(ld(1.0))
    if not -1.0 < lam < 0.0:
        raise NotRenormalizable(f"lambda = {float(lam)} outside (-1, 0)")
    u_nodes = np.sort(C.chebpts1(n + 1)).astype(ld)
    t_nodes = 0.5 * (u_nodes + 1.0)
    inner = heval(np.minimum(lam ** p * t_nodes, ld(hi)))
    vals = heval(np.minimum(inner ** p, ld(hi))) / lam
    # project back onto the normalization slice h(0) = 1 (pure roundoff
    # otherwise accumulates in the scaling coordinate)
    c0 = heval(np.minimum(heval(ld(0.0)) ** p, ld(hi))) / lam
    V = C.chebvander(u_nodes, n)
    coeffs = (V.T @ vals) * (ld(2.0) / (n + 1))
    coeffs[0] *= 0.5
    if project and abs(c0 - 1.0) > 1e-18:
        scaled = np.minimum(c0 ** p * t_nodes, ld(1.0))
        vals = C.chebval(2.0 * scaled - 1.0, coeffs) / c0
        coeffs = (V.T @ vals) * (ld(2.0) / (n + 1))
        coeffs[0] *= 0.5
    return coeffs


def _residual(coeffs: np.ndarray, k: int, n: int) -> np.ndarray:
    """Coefficient residual of Th = h plus the normalization h(0) = 1.

    One equation longer than the unknown vector; solved in the
    least-squares sense (both parts vanish at the true fixed point).
    Extended precision throughout: leftover residual is amplified by the
    unstable multiplier of T along renormalization trajectories.
    """
    dom = _h_domain(k, 0.0)
    tc = _apply_t_coeffs(coeffs, dom, k, n, project=False)
    norm_row = C.chebval(np.longdouble(-1.0), np.asarray(coeffs)) - 1.0
    return np.concatenate(([norm_row], tc - coeffs))


def solve_fixed_point(k: int, degree: int, seed: UnimodalMap | None = None,
                      tol: float = 1e-12, max_iter: int = 60) -> UnimodalMap:
    """Solve Tg = g by Newton with a finite-difference Jacobian.

    Escalates the truncation through 20 -> 30 -> ... -> degree, reusing each
    converged solution as the next seed.
    """
    if tol < 1e-13:
        raise ValueError("tol below attainable double precision")
    if seed is None:
        # slope 1.4 for k >= 2: shallower seeds leave the Newton basin
        slope = 1.5 if k == 1 else 1.4
        seed = make_unimodal(k, lambda t: 1.0 - slope * t, min(20, degree))

    ladder = sorted({min(20, degree), min(30, degree), min(40, degree), degree})
    coeffs = np.asarray(seed.h.coeffs, float)
    for n in ladder:
        coeffs = _newton_at_degree(coeffs, k, n, tol, max_iter)
    dom = _h_domain(k, 0.0)
    g = UnimodalMap(k=k, h=fs.AnalyticFn(dom, coeffs), padding=0.0)
    res = fixed_point_residual(g)
    if res > 10 * max(tol, 1e-12):
        raise NewtonDiverged(f"converged in coefficients but |Tg-g| = {res:.3g}")
    return g


def _newton_at_degree(coeffs, k, n, tol, max_iter, fd_step=1e-7):
    c = np.zeros(n + 1, dtype=np.longdouble)
    c[:min(len(coeffs), n + 1)] = coeffs[:n + 1]
    res = _residual(c, k, n)
    best = float(np.max(np.abs(res)))
    bad_steps = 0
    # polish past tol to the extended-precision floor: leftover error is
    # amplified geometrically under repeated renormalization downstream
    floor = 1e-16
    for _ in range(max_iter):
        if best < floor:
            break
        jac = np.empty((n + 2, n + 1))
        for j in range(n + 1):
            cp = c.copy()
            cp[j] += fd_step
            jac[:, j] = ((_residual(cp, k, n) - res) / fd_step).astype(float)
        try:
            step, _, rank, _ = np.linalg.lstsq(jac, -res.astype(float), rcond=None)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian(str(exc)) from exc
        if rank < n + 1:
            raise SingularJacobian(f"Jacobian rank {rank} < {n + 1}")
        if not np.all(np.isfinite(step)):
            raise SingularJacobian("non-finite Newton step")
        # damped line search: halve until the residual drops
        scale = 1.0
        for _ in range(8):
            trial = c + scale * step.astype(np.longdouble)
            try:
                tres = _residual(trial, k, n)
            except NotRenormalizable:
                scale *= 0.5
                continue
            tnorm = float(np.max(np.abs(tres)))
            if tnorm < best:
                c, res, best = trial, tres, tnorm
                bad_steps = 0
                break
            scale *= 0.5
        else:
            bad_steps += 1
            if best < tol:
                break
            if bad_steps >= 5:
                raise NewtonDiverged(
                    f"no residual decrease for {bad_steps} steps at |res|={best:.3g}")
    if best < tol:
        return c
    raise NewtonDiverged(f"residual {best:.3g} after {max_iter} iterations")


def fixed_point_residual(g: UnimodalMap, samples: int = 201) -> float:
    """Sup norm of Tg - g on [-1, 1]."""
    tg = renormalize(g)
    x = np.linspace(-1.0, 1.0, samples)
    return float(np.max(np.abs(tg(x) - g(x))))


@dataclasses.dataclass(frozen=True)
class RenormTrajectory:
    """Orbit of a map under T together with the closest-approach sequence."""

    maps: tuple
    gammas: np.ndarray            # Gamma_n = prod_{j<n} lambda_{T^j f}, n = 1..n_max
    gammas_direct: np.ndarray     # Gamma_n = f^{2^n}(0), same indexing
    max_discrepancy: float
    lambda_limit: float
    rate: float                   # geometric contraction estimate for lambda_{T^n f}


def gamma_sequence(f: UnimodalMap, n_max: int, degree: int | None = None,
                   cross_tol: float = 1e-6) -> RenormTrajectory:
    """Gamma_n two ways: multiplier products and direct 2^n-fold iteration.

    The product over renormalization multipliers is the primary value; the
    direct orbit of 0 is the cross-check.
    """
    if n_max > 20:
        raise ValueError("n_max above 20 is not supported (2^n orbit length)")
    # renormalization chain carried in extended precision: errors in the
    # chained representations grow with the unstable multiplier of T, so
    # quantizing to double at each level would dominate the cross-check
    deg = max(degree if degree is not None else f.h.degree, 2)
    maps = [f]
    lams = [np.longdouble(f.lam)]
    cl = f.h.coeffs.astype(np.longdouble)
    dom_cur = f.h.domain
    for _ in range(n_max - 1):
        check_renormalizable(maps[-1])
        cl = _apply_t_coeffs(cl, dom_cur, f.k, deg)
        dom_cur = _h_domain(f.k, 0.0)
        maps.append(UnimodalMap(
            k=f.k, h=fs.AnalyticFn(dom_cur, cl.astype(float))))
        lams.append(C.chebval(np.longdouble(1.0), cl))
    gammas = np.cumprod(lams).astype(float)
    lams = [float(l) for l in lams]

    ld = np.longdouble
    direct = np.empty(n_max)
    x = ld(0.0)
    u_scale = ld(2.0) / (f.h.domain.hi - f.h.domain.lo)
    u_off = ld(f.h.domain.lo + f.h.domain.hi) / (f.h.domain.hi - f.h.domain.lo)
    cf = f.h.coeffs.astype(ld)
    p = 2 * f.k
    step = 0
    for n in range(1, n_max + 1):
        target = 1 << n
        while step < target:
            x = C.chebval(u_scale * x ** p - u_off, cf)
            step += 1
        direct[n - 1] = float(x)

    rel = np.abs(direct - gammas) / np.abs(gammas)
    disc = float(np.max(rel))
    if disc > cross_tol:
        raise CrossCheckFailed(
            f"Gamma product vs direct orbit disagree: rel error {disc:.3g}")

    lam_inf = lams[-1]
    resid = np.abs(np.asarray(lams[:-1]) - lam_inf)
    usable = resid > 1e-14
    rate = float(np.exp(np.mean(np.diff(np.log(resid[usable]))))) \
        if np.sum(usable) >= 3 else float("nan")
    return RenormTrajectory(tuple(maps), gammas, direct, disc, lam_inf, rate)


def feigenbaum_constants(k: int, degree: int = 30) -> dict:
    """Fixed-point constants of order 2k with internal consistency residuals."""
    g = solve_fixed_point(k, degree)
    lam = g.lam
    gp1 = float(g.deriv(1.0))
    return {
        "k": k,
        "lambda_k": lam,
        "gprime_at_1": gp1,
        "b_f": g.b,
        "residual_fixed_point": fixed_point_residual(g),
        # g'(1) = lambda^(1-2k)
        "residual_derivative_identity": abs(gp1 - lam ** (1 - 2 * k)),
    }


def serialize_fixed_point(g: UnimodalMap) -> str:
    """JSON form of a solved fixed point (coefficients of h plus metadata)."""
    return json.dumps({
        "k": g.k,
        "N": g.h.degree,
        "domain": [g.h.domain.lo, g.h.domain.hi],
        "coeffs": list(map(float, g.h.coeffs)),
        "lambda": g.lam,
        "residual": fixed_point_residual(g),
    }, indent=2, sort_keys=True)


def load_fixed_point(text: str) -> UnimodalMap:
    data = json.loads(text)
    h = fs.AnalyticFn(fs.Interval(*data["domain"]), np.asarray(data["coeffs"]))
    return UnimodalMap(k=data["k"], h=h)


# ---------------------------------------------------------------------------
# quadratic family: superstable cascade and derived constants


def _orbit_from_zero(mu: float, steps: int) -> float:
    x = 0.0
    for _ in range(steps):
        x = 1.0 - mu * x * x
    return x


def _orbit_from_zero_grid(mus: np.ndarray, steps: int) -> np.ndarray:
    x = np.zeros_like(mus)
    for _ in range(steps):
        x = 1.0 - mus * x * x
    return x


def superstable_parameters(n_levels: int) -> np.ndarray:
    """Parameters mu_n with f_mu^(2^n)(0) = 0, for n = 1..n_levels.

    mu_1 = 1 exactly.  Level n has a single sign change of f^(2^n)(0)
    between mu_(n-1) and the accumulation point, located by a fine scan
    of a window sized from the previous gap and refined by bisection.
    """
    mus = [1.0]
    gap = 0.45
    for n in range(2, n_levels + 1):
        steps = 1 << n
        grid = np.linspace(mus[-1] + 0.01 * gap, mus[-1] + gap, 600)
        vals = _orbit_from_zero_grid(grid, steps)
        flips = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
        if len(flips) == 0:
            raise BracketLost(f"no superstable bracket at level {n}")
        i = flips[0]
        lo, hi, flo = grid[i], grid[i + 1], vals[i]
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            fmid = _orbit_from_zero(mid, steps)
            if fmid * flo < 0:
                hi = mid
            else:
                lo, flo = mid, fmid
        mu = 0.5 * (lo + hi)
        # gaps contract by the unstable multiplier of T (about 4.67);
        # half the previous gap comfortably covers the next one
        gap = 0.5 * (mu - mus[-1])
        mus.append(mu)
    return np.asarray(mus)


def accumulation_parameter(n_levels: int = 13) -> float:
    """Feigenbaum accumulation parameter of 1 - mu x^2 (Richardson on mu_n)."""
    mus = superstable_parameters(n_levels)
    d = np.diff(mus)
    delta = d[-2] / d[-1]
    return float(mus[-1] + d[-1] / (delta - 1.0))


def lambda1_closest_approach_oracle(n_levels: int = 13) -> float:
    """Independent oracle for lambda_1 from the superstable cascade.

    d_n = f_{mu_n}^{2^(n-1)}(0) is the closest non-zero approach of the
    superstable 2^n-cycle to the critical point; the ratios d_n / d_(n+1)
    tend to the universal alpha with lambda_1 = 1/alpha.  Aitken
    extrapolation accelerates the geometric transient.
    """
    mus = superstable_parameters(n_levels)
    d = np.array([_orbit_from_zero(mus[n - 1], 1 << (n - 1))
                  for n in range(1, n_levels + 1)])
    alpha = d[:-1] / d[1:]
    for _ in range(2):
        if len(alpha) < 3:
            break
        num = alpha[2:] * alpha[:-2] - alpha[1:-1] ** 2
        den = alpha[2:] - 2 * alpha[1:-1] + alpha[:-2]
        keep = np.abs(den) > 1e-13
        if not np.any(keep):
            break
        alpha = num[keep] / den[keep]
    return float(1.0 / alpha[-1])
