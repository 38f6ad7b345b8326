"""Command line front end orchestrating the experiment pipelines.

Every subcommand resolves its configuration from built-in defaults, an
optional TOML file and explicit flags (later sources win), writes a
manifest.json capturing (command, config, seed, code version) into the
output directory, and emits its numbers as pretty-printed JSON plus CSV
where a series is involved.  With --check the run also evaluates its
pass/fail conditions and exits 4 if any fails; configuration problems
exit 2 and numerical failures surfaced by the library exit 3.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import pathlib
import sys
import types

try:
    import tomllib
except ModuleNotFoundError:      # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import lyapunov as ly
from . import noise_sim as nsim
from . import renorm_circle as rc
from . import renorm_pd as rp
from . import stats
from . import transfer as tr
from .errors import MissingManifest, RenoiseError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_CHECK = 4

_NOISE_ALIASES = {
    "uniform": "uniform_pm1",
    "uniform_pm1": "uniform_pm1",
    "gaussian": "gaussian",
    "rademacher": "rademacher",
    "truncated_gaussian": "truncated_gaussian",
}


def _version() -> str:
    try:
        from importlib.metadata import version
        return version("renoise")
    except Exception:
        return "unknown"


def _pretty(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, default=float) + "\n"


def parse_grid(text) -> tuple:
    """Float grid from 'start:stop:step' (inclusive) or a comma list."""
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    text = str(text)
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid {text!r} is not start:stop:step")
        a, b, s = (float(v) for v in parts)
        if s <= 0 or b < a:
            raise ValueError(f"grid {text!r} is empty")
        count = int(round((b - a) / s)) + 1
        return tuple(a + i * s for i in range(count))
    return tuple(float(v) for v in text.split(","))


def _noise_model(cfg) -> nsim.NoiseModel:
    family = _NOISE_ALIASES.get(str(cfg["noise"]))
    if family is None:
        raise ValueError(f"unknown noise family {cfg['noise']!r}")
    kw = {}
    if family == "truncated_gaussian":
        kw["b"] = float(cfg.get("noise_b", 2.0))
    return nsim.NoiseModel(family, p=float(cfg.get("noise_p", 4.0)), **kw)


def _check(checks, name, value, limit, passed) -> None:
    checks.append({"name": name, "value": value, "limit": limit,
                   "passed": bool(passed)})


def _series_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# shared building blocks

def _fixed_point(cfg):
    return rp.solve_fixed_point(int(cfg.get("k", 1)), int(cfg.get("N", 30)))


def _pd_rho(g, p: float, degree: int = tr.PD_DEGREE) -> float:
    return tr.spectral_radius(tr.build_pd_operator(g, p, degree=degree))["rho"]


def _accumulation_map(padding: float = 0.1) -> rp.UnimodalMap:
    return rp.quadratic_map(rp.accumulation_parameter(), padding=padding)


def _tuned_omega(cfg) -> float:
    if cfg.get("omega") is not None:
        return float(cfg["omega"])
    lo, hi = rc.golden_bracket(rc.CircleLift, depth=int(cfg["depth"]),
                               width=float(cfg.get("width", 1e-12)))
    return 0.5 * (lo + hi)


def _circle_spectrum_data(omega: float, cfg) -> dict:
    R = rc.fib_renormalize(rc.CircleLift(omega),
                           n_max=int(cfg.get("n_max", 14)),
                           degree=int(cfg.get("degree", 40)),
                           halfwidth=float(cfg.get("halfwidth",
                                                   rc.FIT_HALFWIDTH)))
    f_a, f_b = R.rescaled_maps[-1], R.rescaled_maps[-2]
    a_a, a_b = R.alphas[-1], R.alphas[-2]
    rho = {}
    for p in (1.0, 2.0, 3.0):
        op = tr.build_circle_operator(f_a, f_b, a_a, a_b, p, hat=True,
                                      degree=int(cfg.get("op_degree",
                                                         tr.CIRCLE_DEGREE)))
        rho[p] = tr.spectral_radius(op)["rho"]
    return {"renorm": R, "lam": a_a, "rho": rho}


# ---------------------------------------------------------------------------
# subcommand handlers; each returns {"result", "checks", "files"}

def cmd_fixed_point(cfg):
    k = int(cfg["k"])
    g = _fixed_point(cfg)
    residual = rp.fixed_point_residual(g)
    identity_gap = abs(float(g.deriv(1.0)) * g.lam ** (2 * k - 1) - 1.0)
    checks = []
    result = {"k": k, "N": int(cfg["N"]), "lambda": g.lam, "b": g.b,
              "residual": residual, "derivative_identity_gap": identity_gap}
    _check(checks, "fixed_point_residual", residual, "< 1e-10",
           residual < 1e-10)
    _check(checks, "derivative_identity", identity_gap, "< 1e-8",
           identity_gap < 1e-8)
    if k == 1:
        oracle = rp.lambda1_closest_approach_oracle()
        gap = abs(g.lam - oracle)
        result["oracle_lambda"] = oracle
        result["oracle_gap"] = gap
        _check(checks, "lambda_vs_orbit_oracle", gap, "< 1e-7", gap < 1e-7)
    return {"result": result, "checks": checks,
            "files": {"fixed_point.json": rp.serialize_fixed_point(g)}}


def _spectral_report(cfg):
    g = _fixed_point(cfg)
    grid = parse_grid(cfg["p_grid"])
    return tr.convexity_report(g, grid, degree=int(cfg.get("N",
                                                           tr.PD_DEGREE)))


def cmd_spectrum(cfg):
    rep = _spectral_report(cfg)
    checks = []
    for name in ("bound_lower", "bound_upper", "bound_derivative_power"):
        _check(checks, name, rep.margins[name], ">= 1e-6",
               rep.margins[name] >= 1e-6)
    result = {"p_grid": list(map(float, rep.p_grid)),
              "rho": list(map(float, rep.rho)),
              "lambda": rep.lam, "margins": rep.margins}
    return {"result": result, "checks": checks,
            "files": {"rho.csv": rep.rho_csv(),
                      "spectral.json": rep.to_json()}}


def cmd_convexity(cfg):
    rep = _spectral_report(cfg)
    checks = []
    _check(checks, "rho_increasing", rep.margins["monotone"], "> 0",
           rep.monotone_ok)
    _check(checks, "log_rho_midpoint_convex", rep.margins["logconvex"],
           "> 0", rep.logconvex_ok)
    _check(checks, "log_rho_over_p_decreasing", rep.margins["logrho_over_p"],
           "> 0", rep.logrho_over_p_decreasing_ok)
    _check(checks, "two_sided_bounds",
           min(rep.margins["bound_lower"], rep.margins["bound_upper"],
               rep.margins["bound_derivative_power"]),
           "> 0", rep.bounds_ok)
    if cfg.get("check"):
        _check(checks, "gamma", rep.gamma, "3.8836 +/- 0.01",
               abs(rep.gamma - 3.8836) <= 0.01)
        _check(checks, "two_resolution_agreement",
               rep.two_resolution_max_diff, "<= 1e-7",
               rep.two_resolution_max_diff <= 1e-7)
    result = {"gamma": rep.gamma, "gamma_unscaled": rep.gamma_unscaled,
              "p_grid": list(map(float, rep.p_grid)),
              "rho": list(map(float, rep.rho)),
              "lambda": rep.lam, "margins": rep.margins,
              "two_resolution_max_diff": rep.two_resolution_max_diff}
    return {"result": result, "checks": checks,
            "files": {"rho.csv": rep.rho_csv(),
                      "spectral.json": rep.to_json()}}


def cmd_product_growth(cfg):
    seed = int(cfg["seed"])
    rng = np.random.default_rng(seed)
    f = _accumulation_map()
    n_cap = int(cfg.get("n_max", 2000))

    rel_binary = []
    for _ in range(int(cfg.get("cases", 200))):
        x = float(rng.uniform(-1.0, 1.0))
        n = int(rng.integers(1, n_cap + 1))
        p = float(rng.uniform(0.5, 4.0))
        rel_binary.append(ly.lambda_blocks(f, x, n, p,
                                           scheme="binary").rel_error)

    omega = _tuned_omega({"omega": cfg.get("omega"),
                          "depth": int(cfg.get("depth", 20))})
    F = rc.CircleLift(omega)
    rel_fib = []
    for _ in range(int(cfg.get("fib_cases", 50))):
        x = float(rng.uniform(0.0, 1.0))
        n = int(rng.integers(1, n_cap + 1))
        p = float(rng.uniform(0.5, 4.0))
        rel_fib.append(ly.lambda_blocks(F, x, n, p,
                                        scheme="zeckendorf").rel_error)

    g = _fixed_point({"k": 1, "N": 30})
    p_chain = float(cfg.get("p", 2.0))
    rho_p = _pd_rho(g, p_chain)
    n_chain = int(cfg.get("chain", 6))
    traj = rp.gamma_sequence(f, n_max=n_chain + 1, degree=24)
    chain = tr.product_growth(traj.maps, p_chain, n_chain, rho_p)

    checks = []
    _check(checks, "binary_block_reconstruction", float(np.max(rel_binary)),
           "<= 1e-9", np.max(rel_binary) <= 1e-9)
    _check(checks, "fibonacci_block_reconstruction", float(np.max(rel_fib)),
           "<= 1e-9", np.max(rel_fib) <= 1e-9)
    result = {"cases": len(rel_binary), "fib_cases": len(rel_fib),
              "max_rel_error_binary": float(np.max(rel_binary)),
              "max_rel_error_fibonacci": float(np.max(rel_fib)),
              "omega": omega, "p": p_chain, "rho_p": rho_p,
              "chain_alignment_sup": chain["alignment_sup"],
              "chain_alignment_inf": chain["alignment_inf"]}
    return {"result": result, "checks": checks, "files": {}}


def cmd_lyapunov_curve(cfg):
    f = _accumulation_map(float(cfg.get("padding", 0.1)))
    g = _fixed_point({"k": 1, "N": 30})
    lam = g.lam
    rho2 = _pd_rho(g, 2.0)
    rho3 = _pd_rho(g, 3.0)
    n_lo, n_hi = int(cfg.get("n_lo", 5)), int(cfg.get("n_hi", 13))
    curve = ly.lyapunov_ratio_curve(f, float(cfg.get("x0", 0.0)), 3.0,
                                    2 ** n_hi, schedule="powers_of_2")
    exps = np.log2(curve.n_values).astype(int)
    sel = (exps >= n_lo) & (exps <= n_hi)
    e = exps[sel]

    # band of Lambda_2 lambda^{2n} / rho_2^n as printed; the growth-rate
    # reading divides by (lambda^2 rho_2)^n instead and is reported too
    log_band = curve.log_lambda2[sel] + 2 * e * math.log(abs(lam)) \
        - e * math.log(rho2)
    spread = float(np.exp(np.max(log_band) - np.min(log_band)))
    log_band_rate = curve.log_lambda2[sel] - 2 * e * math.log(abs(lam)) \
        - e * math.log(rho2)
    spread_rate = float(np.exp(np.max(log_band_rate) - np.min(log_band_rate)))

    sel_fit = (exps >= n_lo + 1) & (exps <= n_hi)
    log2_ratio = (curve.log_lambda3[sel_fit]
                  - 1.5 * curve.log_lambda2[sel_fit]) / math.log(2.0)
    slope = float(np.polyfit(exps[sel_fit], log2_ratio, 1)[0])
    target = math.log2(rho3 / rho2 ** 1.5)

    checks = []
    _check(checks, "lambda2_band_spread", spread, "< 10", spread < 10.0)
    _check(checks, "ratio3_decay_per_doubling", slope,
           f"{target:.6g} +/- 10%", abs(slope - target) <= 0.1 * abs(target))
    rows = [(int(n), f"{v:.12g}", f"{w:.12g}") for n, v, w in
            zip(curve.n_values[sel], np.exp(log_band), np.exp(log_band_rate))]
    result = {"lambda": lam, "rho2": rho2, "rho3": rho3,
              "band_spread": spread, "band_spread_growth_rate": spread_rate,
              "ratio3_slope_log2": slope, "ratio3_target_log2": target}
    return {"result": result, "checks": checks,
            "files": {"ratio_curve.csv": curve.to_csv(),
                      "band.csv": _series_csv(
                          ["n_exponent", "band", "band_growth_rate"], rows)}}


def _ks_series(f, x0, ns, sigmas, noise, M, seed):
    rows = []
    for n, sigma in zip(ns, sigmas):
        E = nsim.simulate(f, x0, int(n), float(sigma), noise, M, seed)
        w = nsim.normalized_processes(E, "w")
        k2, k3, k4 = stats.k_statistics(w)
        rows.append({"n": int(n), "sigma": float(sigma),
                     "ks": stats.ks_distance(w),
                     "skew": k3 / k2 ** 1.5, "kurt": k4 / k2 ** 2,
                     "outlier_fraction": E.outlier_fraction,
                     "guard_fraction": E.guard_fraction})
    return rows


def _ks_rows_csv(rows) -> str:
    return _series_csv(
        ["n", "sigma", "ks", "skew", "kurt"],
        [(r["n"], f"{r['sigma']:.12g}", f"{r['ks']:.12g}",
          f"{r['skew']:.12g}", f"{r['kurt']:.12g}") for r in rows])


def cmd_clt(cfg):
    if str(cfg.get("map", "pd")) != "pd":
        raise ValueError("clt supports the pd map; use circle-clt otherwise")
    f = _accumulation_map()
    rep = _spectral_report({"k": 1, "N": tr.PD_DEGREE, "p_grid": (1, 2, 3, 4)})
    n_top = int(cfg.get("n", 4096))
    e_top = int(math.log2(n_top))
    ns = [2 ** e for e in range(6, e_top + 1, 2)]
    if len(ns) < 2:
        raise ValueError("n must allow at least two grid points above 2^6")
    kind = str(cfg.get("schedule", "pd_clt"))
    sigmas = [nsim.sigma_schedule(kind, n, rep) for n in ns]
    noise = _noise_model(cfg)
    rows = _ks_series(f, float(cfg.get("x0", 0.0)), ns, sigmas, noise,
                      int(cfg["M"]), int(cfg["seed"]))

    ks = np.array([r["ks"] for r in rows])
    kurt = np.array([r["kurt"] for r in rows])
    kurt_target = float(rep.rho[-1] / rep.rho[1] ** 2)
    if np.all(kurt != 0.0):
        kurt_slope = float(np.polyfit(np.log2(ns), np.log(np.abs(kurt)),
                                      1)[0])
        kurt_rate = math.exp(kurt_slope)
    else:
        kurt_rate = float("nan")
    checks = []
    _check(checks, "ks_decreasing_all_steps", [float(v) for v in ks],
           "strictly decreasing", bool(np.all(np.diff(ks) < 0)))
    _check(checks, "ks_final_halved", float(ks[-1]), "< ks_first / 2",
           ks[-1] < ks[0] / 2.0)
    _check(checks, "kurtosis_decay_rate", kurt_rate,
           f"{kurt_target:.6g} +/- 25%",
           abs(kurt_rate - kurt_target) <= 0.25 * kurt_target)
    result = {"n_grid": ns, "schedule": kind, "series": rows,
              "kurtosis_rate": kurt_rate, "kurtosis_target": kurt_target,
              "skew_values": [r["skew"] for r in rows],
              "skew_note": "symmetric noise has zero skewness; no rate fit"}
    return {"result": result, "checks": checks,
            "files": {"ks_series.csv": _ks_rows_csv(rows)}}


def cmd_berry_esseen(cfg):
    which = str(cfg.get("map", "rotation"))
    noise = _noise_model(cfg)
    M = int(cfg["M"])
    seed = int(cfg["seed"])
    if which == "rotation":
        F = rc.RigidRotation(alpha=rc.BETA)
        e_lo, e_hi = int(cfg.get("n_lo", 4)), int(cfg.get("n_hi", 10))
        ns = [2 ** e for e in range(e_lo, e_hi + 1)]
        sigma = float(cfg.get("sigma", 1e-3))
        rows = []
        for n in ns:
            E = nsim.simulate(F, 0.0, n, sigma, noise, M, seed, f2_norm=0.0)
            w = nsim.normalized_processes(E, "w")
            rows.append({"n": n, "sigma": sigma,
                         "ks": stats.ks_distance(w), "skew": 0.0, "kurt": 0.0,
                         "outlier_fraction": E.outlier_fraction})
    elif which == "pd":
        f = _accumulation_map()
        rep = _spectral_report({"k": 1, "N": tr.PD_DEGREE,
                                "p_grid": (1, 2, 3, 4)})
        ns = [2 ** e for e in range(6, int(math.log2(
            int(cfg.get("n", 4096)))) + 1, 2)]
        sigmas = [nsim.sigma_schedule("pd_be", n, rep) for n in ns]
        rows = _ks_series(f, 0.0, ns, sigmas, noise, M, seed)
    else:
        raise ValueError(f"unknown map {which!r}")

    fit = stats.be_rate_fit([(r["n"], r["ks"]) for r in rows],
                            [(r["n"], r["n"] ** -0.5) for r in rows])
    checks = []
    if which == "rotation":
        out_max = max(r["outlier_fraction"] for r in rows)
        _check(checks, "outliers_empty", out_max, "== 0", out_max == 0.0)
        _check(checks, "ks_slope_classical", fit["ks_slope"],
               "-0.5 +/- 0.1", abs(fit["ks_slope"] + 0.5) <= 0.1)
    _check(checks, "ks_within_rhs_rate", fit["ks_slope"],
           f"<= {fit['rhs_slope']:.3g} + 0.15", fit["verdict"])
    result = {"map": which, "n_grid": [r["n"] for r in rows],
              "ks_slope": fit["ks_slope"], "rhs_slope": fit["rhs_slope"],
              "series": rows}
    return {"result": result, "checks": checks,
            "files": {"ks_series.csv": _ks_rows_csv(rows)}}


def cmd_circle_tune(cfg):
    depth = int(cfg.get("depth", 26))
    lo, hi = rc.golden_bracket(rc.CircleLift, depth=depth,
                               width=float(cfg.get("width", 1e-12)))
    omega = 0.5 * (lo + hi)
    F = rc.CircleLift(omega)
    rot = rc.rotation_number(F, iters=int(cfg.get("iters", 10 ** 7)))
    gap = abs(rot.value - rc.BETA)
    n_max = int(cfg.get("n_max", 13))
    R = rc.fib_renormalize(F, n_max=n_max)
    alpha_gap = abs(R.alphas[-1] - R.alphas[-2])
    ident = rc.circle_fixed_identities(R)

    checks = []
    _check(checks, "rotation_number_golden", gap, "<= 1e-9", gap <= 1e-9)
    _check(checks, "alpha_two_depth_agreement", alpha_gap, "<= 1e-3",
           alpha_gap <= 1e-3)
    for name, val in ident.items():
        _check(checks, f"identity_{name}", val, "< 5e-3", val < 5e-3)
    result = {"omega": omega, "bracket_width": hi - lo, "depth": depth,
              "rotation_number": rot.value, "rotation_error": rot.error,
              "rotation_gap": gap, "alpha": R.alphas[-1],
              "alpha_two_depth_gap": alpha_gap, "identities": ident}
    return {"result": result, "checks": checks,
            "files": {"circle.json": R.to_json()}}


def cmd_circle_spectrum(cfg):
    omega = _tuned_omega(cfg)
    data = _circle_spectrum_data(omega, cfg)
    lam, rho = data["lam"], data["rho"]
    growth = rc.growth_condition(data["renorm"], rho)

    checks = []
    for p in sorted(rho):
        val = abs(lam) ** (2 * p) * rho[p]
        _check(checks, f"k1_bound_p{p:g}", val, "> 1", val > 1.0)
    margins_finite = all(math.isfinite(v)
                         for v in growth["margins"].values())
    _check(checks, "growth_condition_evaluated",
           {str(p): v for p, v in growth["margins"].items()},
           "finite margins reported", margins_finite)
    result = {"omega": omega, "lambda": lam,
              "rho_hat": {str(p): v for p, v in rho.items()},
              "scaled_bounds": {str(p): abs(lam) ** (2 * p) * rho[p]
                                for p in rho},
              "growth_condition": {
                  "s_k": growth["s_k"], "u_k": growth["u_k"],
                  "values": {str(p): v for p, v in growth["values"].items()},
                  "margins": {str(p): v
                              for p, v in growth["margins"].items()},
                  "holds": {str(p): v for p, v in growth["holds"].items()},
                  "all_hold": growth["all_hold"]}}
    return {"result": result, "checks": checks, "files": {}}


def cmd_circle_clt(cfg):
    omega = _tuned_omega(cfg)
    if all(cfg.get(k) is not None for k in ("rho1", "rho2", "rho3")):
        lam = float(cfg["lam"]) if cfg.get("lam") is not None else None
        rho = {1.0: float(cfg["rho1"]), 2.0: float(cfg["rho2"]),
               3.0: float(cfg["rho3"])}
        if lam is None:
            raise ValueError("explicit rho values need --lam as well")
    else:
        data = _circle_spectrum_data(omega, cfg)
        lam, rho = data["lam"], data["rho"]
    consts = types.SimpleNamespace(p_grid=(1.0, 2.0, 3.0),
                                   rho=(rho[1.0], rho[2.0], rho[3.0]),
                                   lam=lam, k=1)
    qs = rc.fibonacci(int(cfg.get("q_hi", 14)))
    ns = [qs[i - 1] for i in range(int(cfg.get("q_lo", 8)),
                                   int(cfg.get("q_hi", 14)) + 1, 2)]
    sigmas = [nsim.sigma_schedule("circle_clt", n, consts) for n in ns]
    noise = _noise_model(cfg)
    rows = _ks_series(rc.CircleLift(omega), 0.0, ns, sigmas, noise,
                      int(cfg["M"]), int(cfg["seed"]))
    ks = np.array([r["ks"] for r in rows])
    dec = int(np.sum(np.diff(ks) < 0))
    checks = []
    _check(checks, "ks_decreasing_steps", dec, f">= {len(ns) - 2}",
           dec >= len(ns) - 2)
    result = {"omega": omega, "lambda": lam,
              "rho_hat": {str(p): v for p, v in rho.items()},
              "fibonacci_times": ns, "series": rows,
              "decreasing_steps": dec}
    return {"result": result, "checks": checks,
            "files": {"ks_series.csv": _ks_rows_csv(rows)}}


def cmd_example2(cfg):
    f = ly.SimpleMap(lambda x: 2.0 * x, lambda x: 2.0 * np.ones_like(x))
    M = int(cfg["M"])
    seed = int(cfg["seed"])
    n_top = int(cfg.get("n", 20))
    band = 1.63 / math.sqrt(M)
    sigma = float(cfg.get("sigma", 0.05))

    ks_gauss = []
    gauss = nsim.NoiseModel("gaussian")
    for n in range(1, n_top + 1):
        E = nsim.simulate(f, 0.0, n, sigma, gauss, M, seed, f2_norm=0.0)
        ks_gauss.append(stats.ks_distance(nsim.normalized_processes(E, "w")))

    uni = nsim.NoiseModel("uniform_pm1")
    E = nsim.simulate(f, 0.0, n_top, sigma, uni, M, seed, f2_norm=0.0)
    w = nsim.normalized_processes(E, "w")
    ks_uni = stats.ks_distance(w)

    z = np.linspace(0.5, 5.0, 10)
    emp = np.array([np.mean(np.exp(1j * zz * w)) for zz in z])
    j = np.arange(1, 61)
    theory = np.array([np.prod(np.sinc(3.0 * 2.0 ** -j * zz / math.pi))
                       for zz in z])
    char_err = float(np.max(np.abs(emp - theory)))

    checks = []
    _check(checks, "gaussian_ks_in_band", float(np.max(ks_gauss)),
           f"< {band:.6g} for all n", float(np.max(ks_gauss)) < band)
    _check(checks, "uniform_ks_exceeds_band", ks_uni,
           f"> {3 * band:.6g} at n = {n_top}", ks_uni > 3 * band)
    _check(checks, "characteristic_function_match", char_err, "<= 0.01",
           char_err <= 0.01)
    rows = [(n, f"{v:.12g}") for n, v in enumerate(ks_gauss, start=1)]
    result = {"M": M, "sigma": sigma, "band": band,
              "ks_gaussian_max": float(np.max(ks_gauss)),
              "ks_uniform_at_n": ks_uni, "char_function_max_err": char_err,
              "z_points": list(map(float, z)),
              "char_empirical_real": [float(v.real) for v in emp],
              "char_theory": list(map(float, theory))}
    return {"result": result, "checks": checks,
            "files": {"ks_gaussian.csv": _series_csv(["n", "ks"], rows)}}


def cmd_report(cfg):
    run_dir = pathlib.Path(cfg["run"])
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.is_file():
        raise MissingManifest(f"no manifest.json in {run_dir}")
    manifest = json.loads(manifest_path.read_text())
    result_path = run_dir / "result.json"
    result = json.loads(result_path.read_text()) if result_path.is_file() \
        else {}
    checks = result.get("checks", [])

    lines = [f"# renoise run: {manifest.get('command', '?')}", "",
             f"- seed: {manifest.get('seed')}",
             f"- version: {manifest.get('version')}", ""]
    if checks:
        lines += ["| check | value | limit | verdict |",
                  "| --- | --- | --- | --- |"]
        for c in checks:
            val = c["value"]
            if isinstance(val, float):
                val = f"{val:.6g}"
            verdict = "pass" if c["passed"] else "FAIL"
            lines.append(f"| {c['name']} | {val} | {c['limit']} "
                         f"| {verdict} |")
    else:
        lines.append("(no verdicts recorded in this run)")
    lines.append("")
    summary = "\n".join(lines)
    n_fail = sum(1 for c in checks if not c["passed"])
    return {"result": {"run": str(run_dir), "n_checks": len(checks),
                       "n_failed": n_fail},
            "checks": [], "files": {"summary.md": summary}}


# ---------------------------------------------------------------------------
# argument parsing, config resolution and the driver

_HANDLERS = {
    "fixed-point": cmd_fixed_point,
    "spectrum": cmd_spectrum,
    "convexity": cmd_convexity,
    "product-growth": cmd_product_growth,
    "lyapunov-curve": cmd_lyapunov_curve,
    "clt": cmd_clt,
    "berry-esseen": cmd_berry_esseen,
    "circle-tune": cmd_circle_tune,
    "circle-spectrum": cmd_circle_spectrum,
    "circle-clt": cmd_circle_clt,
    "example2": cmd_example2,
    "report": cmd_report,
}


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="renoise")
    sub = top.add_subparsers(dest="command", required=True)

    def add(name, **flags):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--check", action="store_true", default=None)
        for flag, typ in flags.items():
            p.add_argument("--" + flag.replace("_", "-"), dest=flag,
                           type=typ, default=None)
        return p

    add("fixed-point", k=int, N=int)
    add("spectrum", k=int, N=int, p_grid=str)
    add("convexity", k=int, N=int, p_grid=str)
    add("product-growth", cases=int, fib_cases=int, n_max=int, p=float,
        chain=int, depth=int, omega=float)
    add("lyapunov-curve", n_lo=int, n_hi=int, padding=float, x0=float)
    add("clt", map=str, n=int, noise=str, M=int, schedule=str, x0=float,
        noise_b=float, noise_p=float)
    add("berry-esseen", map=str, n=int, n_lo=int, n_hi=int, noise=str,
        M=int, sigma=float, noise_b=float, noise_p=float)
    add("circle-tune", depth=int, iters=int, n_max=int, width=float)
    add("circle-spectrum", omega=float, depth=int, n_max=int, degree=int,
        halfwidth=float, op_degree=int, width=float)
    add("circle-clt", omega=float, depth=int, n_max=int, degree=int,
        halfwidth=float, op_degree=int, width=float, q_lo=int, q_hi=int,
        noise=str, M=int, rho1=float, rho2=float, rho3=float, lam=float,
        noise_b=float, noise_p=float)
    add("example2", M=int, n=int, sigma=float)
    rep = add("report")
    rep.add_argument("run")
    return top


_DEFAULTS = {
    "fixed-point": {"k": 1, "N": 30},
    "spectrum": {"k": 1, "N": tr.PD_DEGREE, "p_grid": "1:4:1"},
    "convexity": {"k": 1, "N": tr.PD_DEGREE, "p_grid": "0.5:4:0.5"},
    "product-growth": {"cases": 200, "fib_cases": 50, "n_max": 2000,
                       "p": 2.0, "chain": 6, "depth": 20},
    "lyapunov-curve": {"n_lo": 5, "n_hi": 13, "padding": 0.1, "x0": 0.0},
    "clt": {"map": "pd", "n": 4096, "noise": "uniform", "M": 20000,
            "schedule": "pd_clt", "x0": 0.0},
    "berry-esseen": {"map": "rotation", "n": 4096, "n_lo": 4, "n_hi": 10,
                     "noise": "rademacher", "M": 20000, "sigma": 1e-3},
    "circle-tune": {"depth": 26, "iters": 10 ** 7, "n_max": 13,
                    "width": 1e-12},
    "circle-spectrum": {"depth": 26, "n_max": 14, "degree": 40,
                        "halfwidth": rc.FIT_HALFWIDTH,
                        "op_degree": tr.CIRCLE_DEGREE, "width": 1e-12},
    "circle-clt": {"depth": 26, "n_max": 14, "degree": 40,
                   "halfwidth": rc.FIT_HALFWIDTH,
                   "op_degree": tr.CIRCLE_DEGREE, "width": 1e-12,
                   "q_lo": 8, "q_hi": 14, "noise": "uniform", "M": 20000},
    "example2": {"M": 100000, "n": 20, "sigma": 0.05},
    "report": {},
}


def resolve_config(args: argparse.Namespace) -> dict:
    """Layer defaults, TOML file and explicit flags (later sources win)."""
    command = args.command
    cfg = dict(_DEFAULTS[command])
    cfg["seed"] = 0
    cfg["check"] = False
    if args.config is not None:
        raw = tomllib.loads(pathlib.Path(args.config).read_text())
        table = dict(raw)
        for key in (command, command.replace("-", "_")):
            sub = table.pop(key, None)
            if isinstance(sub, dict):
                table.update(sub)
        table = {k: v for k, v in table.items()
                 if not isinstance(v, dict)}
        cfg.update(table)
    for key, val in vars(args).items():
        if key in ("command", "config") or val is None:
            continue
        cfg[key] = val
    return cfg


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    try:
        cfg = resolve_config(args)
        out_dir = pathlib.Path(cfg.get("out") or f"renoise-{args.command}")
    except (OSError, ValueError, tomllib.TOMLDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        outcome = _HANDLERS[args.command](cfg)
    except (ValueError, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RenoiseError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return EXIT_NUMERICAL

    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"command": args.command, "seed": int(cfg["seed"]),
                "version": _version(),
                "config": {k: v for k, v in sorted(cfg.items())
                           if k not in ("out", "check")}}
    (out_dir / "manifest.json").write_text(_pretty(manifest))
    payload = dict(outcome["result"])
    payload["checks"] = outcome["checks"]
    (out_dir / "result.json").write_text(_pretty(payload))
    for name, text in outcome["files"].items():
        (out_dir / name).write_text(text)

    failed = [c for c in outcome["checks"] if not c["passed"]]
    for c in outcome["checks"]:
        status = "PASS" if c["passed"] else "FAIL"
        val = c["value"]
        if isinstance(val, float):
            val = f"{val:.6g}"
        print(f"[{status}] {c['name']}: {val} (want {c['limit']})")
    if cfg.get("check") and failed:
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
