"""Finite-size-scaling crossing fits and threshold extraction.

xi/L curves for several system sizes are fit jointly to a quadratic
scaling function of x = L^(1/nu) (T - T_c); the transition temperature
is where the curves cross. Thresholds come from intersecting the fitted
phase boundary T_c(p) with the Nishimori temperature of the noise
family. Confidence intervals propagate by percentile bootstrap over
disorder realisations at every stage.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from ..codes import build_toric_code, toric_eta_pairs
from ..mapping import build_statmech_model
from ..noise import (
    EtaModelSpec,
    eta_field,
    eta_model,
    eta_pair_coupling,
    sample_errors,
)
from ..pauli import PauliOperator
from .kernel import (
    compile_kernel_model,
    derive_seeds,
    disorder_signs,
    run_ensemble,
)
from .observables import equilibration_check, xi_over_l_estimate


@dataclass
class FssEstimate:
    crossed: bool
    t_c: float | None = None
    t_c_ci: tuple | None = None
    nu: float | None = None
    nu_ci: tuple | None = None
    residual: float | None = None
    curves: list = field(default_factory=list)
    bootstrap: np.ndarray | None = None
    note: str = ""


def _quadratic_rss(tc, nu, curves):
    """Weighted residual sum of squares with the quadratic scaling
    polynomial profiled out by linear least squares."""
    xs, ys, ws = [], [], []
    for c in curves:
        x = c["L"] ** (1.0 / nu) * (np.asarray(c["T"]) - tc)
        xs.append(x)
        ys.append(np.asarray(c["xi_over_l"], dtype=np.float64))
        ws.append(1.0 / np.asarray(c["se"], dtype=np.float64))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    w = np.concatenate(ws)
    good = np.isfinite(y) & np.isfinite(w)
    x, y, w = x[good], y[good], w[good]
    if len(x) < 5:
        return 1e12
    design = np.stack([np.ones_like(x), x, x * x], axis=1) * w[:, None]
    coeff, _, _, _ = np.linalg.lstsq(design, y * w, rcond=None)
    resid = design @ coeff - y * w
    return float(resid @ resid)


def _fit_point(curves, tc0, nu0, t_lo, t_hi):
    def objective(theta):
        tc, log_nu = theta
        nu = np.exp(log_nu)
        if not (t_lo - 0.5 <= tc <= t_hi + 0.5) or not (0.2 <= nu <= 6.0):
            return 1e12
        return _quadratic_rss(tc, nu, curves)

    best = None
    for nu_init in (nu0, 1.0, 1.5):
        res = minimize(objective, [tc0, np.log(nu_init)],
                       method="Nelder-Mead",
                       options={"xatol": 1e-6, "fatol": 1e-12,
                                "maxiter": 2000})
        if best is None or res.fun < best.fun:
            best = res
    return float(best.x[0]), float(np.exp(best.x[1])), float(best.fun)


def _pairwise_crossing(curve_a, curve_b):
    """Linear-interpolation crossing of two xi/L curves on their common
    temperature window; None when the difference never changes sign."""
    ts = np.asarray(curve_a["T"])
    if not np.array_equal(ts, np.asarray(curve_b["T"])):
        lo = max(ts.min(), np.asarray(curve_b["T"]).min())
        hi = min(ts.max(), np.asarray(curve_b["T"]).max())
        ts = np.linspace(lo, hi, 32)
        ya = np.interp(ts, curve_a["T"], curve_a["xi_over_l"])
        yb = np.interp(ts, curve_b["T"], curve_b["xi_over_l"])
    else:
        ya = np.asarray(curve_a["xi_over_l"])
        yb = np.asarray(curve_b["xi_over_l"])
    diff = ya - yb
    sign = np.sign(diff)
    for i in range(len(ts) - 1):
        if sign[i] != 0 and sign[i + 1] != 0 and sign[i] != sign[i + 1]:
            frac = diff[i] / (diff[i] - diff[i + 1])
            return float(ts[i] + frac * (ts[i + 1] - ts[i]))
    return None


def _separated_everywhere(curve_a, curve_b):
    ts = np.asarray(curve_a["T"])
    ya = np.asarray(curve_a["xi_over_l"])
    yb = np.interp(ts, curve_b["T"], curve_b["xi_over_l"])
    sea = np.asarray(curve_a["se"])
    seb = np.interp(ts, curve_b["T"], curve_b["se"])
    diff = ya - yb
    gap = np.abs(diff) - 2.0 * np.hypot(sea, seb)
    return bool(np.all(gap > 0)) and (np.all(diff > 0) or np.all(diff < 0))


def _resample_curves(curves, rng):
    out = []
    for c in curves:
        if "m0sq" not in c:
            se = np.asarray(c["se"])
            y = np.asarray(c["xi_over_l"]) + rng.standard_normal(len(se)) * se
            out.append({**c, "xi_over_l": y})
            continue
        m0 = np.asarray(c["m0sq"])          # (nT, ndis)
        mk = np.asarray(c["mksq"])
        nt, nd = m0.shape
        ys = np.empty(nt)
        for t in range(nt):
            idx = rng.integers(0, nd, nd)
            chi0 = m0[t, idx].mean()
            chik = mk[t, idx].mean()
            ratio = chi0 / chik - 1.0
            ys[t] = (np.sqrt(max(ratio, 0.0))
                     / (2 * np.sin(np.pi / c["L"])) / c["L"])
        out.append({**c, "xi_over_l": ys})
    return out


def crossing_fit(curves, resamples=300, rng=None) -> FssEstimate:
    """Joint quadratic scaling fit of per-size xi/L curves.

    Each curve is a dict with keys L, T, xi_over_l, se and optionally the
    per-disorder thermal means m0sq, mksq (shape (nT, n_disorder)) for a
    full bootstrap; without them the bootstrap draws Gaussian
    pseudo-samples from the quoted errors.
    """
    if len(curves) < 2:
        raise ValueError("need at least two system sizes")
    for c in curves:
        if len(c["T"]) < 4:
            raise ValueError("need at least four temperatures per size")
    curves = sorted(curves, key=lambda c: c["L"])
    if rng is None:
        rng = np.random.default_rng(0)

    small, large = curves[0], curves[-1]
    tc0 = _pairwise_crossing(small, large)
    if tc0 is None:
        if _separated_everywhere(small, large):
            return FssEstimate(
                crossed=False, curves=curves,
                note="curves are CI-separated over the whole window; "
                     "no transition in range",
            )
        tc0 = float(np.median(np.concatenate([c["T"] for c in curves])))

    t_all = np.concatenate([np.asarray(c["T"]) for c in curves])
    tc, nu, rss = _fit_point(curves, tc0, 1.0, t_all.min(), t_all.max())
    npoints = sum(len(c["T"]) for c in curves)
    dof = max(npoints - 5, 1)

    draws = np.empty((resamples, 2))
    for b in range(resamples):
        fake = _resample_curves(curves, rng)
        draws[b, 0], draws[b, 1], _ = _fit_point(
            fake, tc, nu, t_all.min(), t_all.max())
    t_ci = (float(np.quantile(draws[:, 0], 0.025)),
            float(np.quantile(draws[:, 0], 0.975)))
    nu_ci = (float(np.quantile(draws[:, 1], 0.025)),
             float(np.quantile(draws[:, 1], 0.975)))
    return FssEstimate(True, tc, t_ci, nu, nu_ci, rss / dof, curves, draws)


# -- ensemble drivers ----------------------------------------------------


def nishimori_temperature(p, eta=1.0):
    """Temperature of the Nishimori point in unit-edge-coupling units."""
    return 1.0 / eta_field(p, eta)


_STRUCTURE_CACHE = {}


def _toric_kernel(L, eta, p_structure=0.1):
    key = (L, round(eta, 12))
    if key not in _STRUCTURE_CACHE:
        code = build_toric_code(L)
        spec = EtaModelSpec(p_structure, eta if eta != 1.0 else 1.0,
                            toric_eta_pairs(code))
        noise = eta_model(spec)
        model = build_statmech_model(code, noise,
                                     PauliOperator.identity(code.n))
        _STRUCTURE_CACHE[key] = (code, compile_kernel_model(model))
    return _STRUCTURE_CACHE[key]


def _coupling4(p, eta):
    """Four-spin over two-spin coupling ratio of the eta family."""
    return eta_pair_coupling(p, eta) / eta_field(p, eta)


def sample_disorder(L, p, eta, n_disorder, rng):
    """X-error patterns drawn from the eta noise model, as an
    (n_disorder, n_sites) bit array."""
    code = build_toric_code(L)
    noise = eta_model(EtaModelSpec(p, eta, toric_eta_pairs(code)))
    patterns = sample_errors(noise, rng, n_disorder)
    return patterns[:, :, 0] % 2


def measure_point(L, T, p, eta, n_disorder, sweeps_log2, seed,
                  pure=False):
    """xi/L with CI at one (p, T, L) point of the toric eta family.

    `pure` replaces the sampled disorder with the clean all-plus
    configuration (the p -> 0 ferromagnet) while keeping unit couplings.
    Returns a dict with the estimate, per-disorder raw means of the last
    bin, and the logarithmic-bin equilibration report.
    """
    code, km = _toric_kernel(L, eta)
    rng = np.random.default_rng(seed)
    if pure:
        x = np.zeros((n_disorder, code.n), dtype=np.int64)
        j4 = 0.0
    else:
        x = sample_disorder(L, p, eta, n_disorder, rng)
        j4 = _coupling4(p, eta)
    signs2, signs4 = disorder_signs(km, x)
    km_run = km
    if abs(j4 - km.coupling4) > 1e-12:
        km_run = replace(km, coupling4=j4)
    seeds = derive_seeds(rng.integers(0, 2 ** 62), n_disorder)
    out = run_ensemble(km_run, signs2, signs4, 1.0 / T, sweeps_log2, seeds)
    m0, mk = out["m0sq"], out["mksq"]
    point, ci = xi_over_l_estimate(m0[:, -1], mk[:, -1], L,
                                   resamples=2000, rng=rng)
    bins = []
    for b in range(max(sweeps_log2 - 3, 0), sweeps_log2):
        xi_b, ci_b = xi_over_l_estimate(m0[:, b], mk[:, b], L,
                                        resamples=400, rng=rng)
        bins.append((xi_b, ci_b[0], ci_b[1]))
    if len(bins) >= 3:
        equil, report = equilibration_check(bins)
    else:
        equil, report = True, {"bins": bins}
    return {
        "L": L, "T": T, "p": p, "eta": eta,
        "xi_over_l": point, "ci": ci,
        "se": (ci[1] - ci[0]) / 4.0 if np.isfinite(ci[0]) else np.inf,
        "m0sq": m0[:, -1], "mksq": mk[:, -1],
        "equilibrated": equil, "bins": report["bins"],
    }


def _point_key(p, T, L, n_disorder, sweeps_log2):
    return (f"p={p:.6g};T={T:.6g};L={L};"
            f"n={n_disorder};s={sweeps_log2}")


def _load_checkpoint(checkpoint):
    done = {}
    path = Path(checkpoint) if checkpoint else None
    if path is not None and path.exists():
        for line in path.read_text().splitlines():
            row = json.loads(line)
            done[row["key"]] = row
    return done, path


def _cached_point(done, path, key, seed, measure):
    """Fetch a finished point from the checkpoint or measure and append
    it. The per-point seed mixes the run seed with the key hash so the
    result is independent of scan order."""
    if key in done:
        return done[key]
    point_seed = (seed * 1000003 + zlib.crc32(key.encode())) % (2 ** 62)
    res = measure(point_seed)
    row = {
        "key": key, "xi_over_l": res["xi_over_l"], "se": res["se"],
        "m0sq": list(map(float, res["m0sq"])),
        "mksq": list(map(float, res["mksq"])),
        "equilibrated": bool(res["equilibrated"]),
    }
    if path is not None:
        with path.open("a") as fh:
            fh.write(json.dumps(row) + "\n")
    done[key] = row
    return row


def scan_curves(p, eta, L_values, T_grid, n_disorder, sweeps_log2, seed,
                checkpoint=None, pure=False):
    """Measure xi/L curves for one p over all sizes and temperatures.

    With a checkpoint path, finished points are appended as JSON lines
    and already-present keys are skipped on resume (raw per-disorder
    means included, so restarts reproduce identical fits).
    """
    done, path = _load_checkpoint(checkpoint)
    curves = []
    for L in L_values:
        curve = {"L": L, "T": [], "xi_over_l": [], "se": [],
                 "m0sq": [], "mksq": [], "equilibrated": []}
        for T in T_grid:
            row = _cached_point(
                done, path, _point_key(p, T, L, n_disorder, sweeps_log2),
                seed,
                lambda ps, L=L, T=T: measure_point(
                    L, float(T), p, eta, n_disorder, sweeps_log2, ps,
                    pure=pure),
            )
            curve["T"].append(float(T))
            curve["xi_over_l"].append(row["xi_over_l"])
            curve["se"].append(row["se"])
            curve["m0sq"].append(row["m0sq"])
            curve["mksq"].append(row["mksq"])
            curve["equilibrated"].append(row["equilibrated"])
        curve["T"] = np.array(curve["T"])
        curve["xi_over_l"] = np.array(curve["xi_over_l"])
        curve["se"] = np.array(curve["se"])
        curve["m0sq"] = np.array(curve["m0sq"])
        curve["mksq"] = np.array(curve["mksq"])
        curves.append(curve)
    return curves


def threshold_scan(eta, p_grid, L_values, t_grids, n_disorder,
                   sweeps_log2, seed, resamples=300, checkpoint=None):
    """Threshold of the toric eta family against the Nishimori line.

    t_grids maps each p to its temperature grid (a dict, or one callable
    p -> grid). Fits T_c(p) per column, then solves T_c(p) = T_N(p) by
    linear interpolation in p; the CI comes from re-solving with
    bootstrap draws of every T_c.
    """
    per_p = []
    for p in p_grid:
        grid = t_grids(p) if callable(t_grids) else t_grids[p]
        curves = scan_curves(p, eta, L_values, grid, n_disorder,
                             sweeps_log2, seed, checkpoint=checkpoint)
        fit = crossing_fit(curves, resamples=resamples,
                           rng=np.random.default_rng(seed + 17))
        per_p.append({"p": float(p), "fit": fit,
                      "t_n": nishimori_temperature(p, eta)})

    ps = np.array([row["p"] for row in per_p])
    fitted = [row for row in per_p if row["fit"].crossed]
    if len(fitted) < 2:
        return {"status": "out-of-range", "per_p": per_p,
                "note": "fewer than two columns produced a crossing"}
    gs = np.array([row["fit"].t_c - row["t_n"] for row in fitted])
    pf = np.array([row["p"] for row in fitted])

    def root(gvals):
        for i in range(len(pf) - 1):
            if gvals[i] == 0:
                return float(pf[i])
            if gvals[i] > 0 > gvals[i + 1] or gvals[i] < 0 < gvals[i + 1]:
                frac = gvals[i] / (gvals[i] - gvals[i + 1])
                return float(pf[i] + frac * (pf[i + 1] - pf[i]))
        return None

    p_t = root(gs)
    if p_t is None:
        return {"status": "out-of-range", "per_p": per_p,
                "note": "phase boundary does not meet the Nishimori line "
                        "inside the scanned p range"}
    rng = np.random.default_rng(seed + 29)
    n_draws = min(len(row["fit"].bootstrap) for row in fitted)
    roots = []
    for b in range(n_draws):
        draw = np.array([
            row["fit"].bootstrap[b, 0] - row["t_n"] for row in fitted
        ])
        r = root(draw)
        if r is not None:
            roots.append(r)
    if len(roots) < max(10, n_draws // 4):
        ci = (float("nan"), float("nan"))
    else:
        ci = (float(np.quantile(roots, 0.025)),
              float(np.quantile(roots, 0.975)))
    return {"status": "ok", "p_t": p_t, "ci": ci, "per_p": per_p,
            "roots": np.array(roots), "rng_draws": n_draws}


def nishimori_scan(eta, p_grid, L_values, n_disorder, sweeps_log2, seed,
                   checkpoint=None):
    """xi/L curves measured along the Nishimori line, one point per p.

    Every point sits at its own Nishimori temperature T_N(p), so the
    curve abscissa is p (stored under the "T" key the crossing fit
    expects). This is the scan that locates the threshold directly: the
    phase boundary is close to vertical below the multicritical point,
    so fitting T_c(p) per column and intersecting with T_N(p) loses the
    bracket exactly where the answer lives, while the p-crossings of
    these curves sit at p_t itself.
    """
    done, path = _load_checkpoint(checkpoint)
    curves = []
    for L in L_values:
        curve = {"L": L, "T": [], "xi_over_l": [], "se": [],
                 "m0sq": [], "mksq": [], "equilibrated": []}
        for p in p_grid:
            t_n = nishimori_temperature(p, eta)
            key = (f"nline;eta={eta:.6g};"
                   + _point_key(p, t_n, L, n_disorder, sweeps_log2))
            row = _cached_point(
                done, path, key, seed,
                lambda ps, L=L, p=p, t_n=t_n: measure_point(
                    L, t_n, float(p), eta, n_disorder, sweeps_log2, ps),
            )
            curve["T"].append(float(p))
            curve["xi_over_l"].append(row["xi_over_l"])
            curve["se"].append(row["se"])
            curve["m0sq"].append(row["m0sq"])
            curve["mksq"].append(row["mksq"])
            curve["equilibrated"].append(row["equilibrated"])
        curve["T"] = np.array(curve["T"])
        curve["xi_over_l"] = np.array(curve["xi_over_l"])
        curve["se"] = np.array(curve["se"])
        curve["m0sq"] = np.array(curve["m0sq"])
        curve["mksq"] = np.array(curve["mksq"])
        curves.append(curve)
    return curves


def threshold_on_nishimori_line(eta, p_grid, L_values, n_disorder,
                                sweeps_log2, seed, resamples=300,
                                checkpoint=None) -> FssEstimate:
    """Threshold p_t of the toric eta family from Nishimori-line
    p-crossings; the returned estimate's t_c field holds p_t."""
    curves = nishimori_scan(eta, p_grid, L_values, n_disorder,
                            sweeps_log2, seed, checkpoint=checkpoint)
    return crossing_fit(curves, resamples=resamples,
                        rng=np.random.default_rng(seed + 11))


def pure_ising_fit(L_values, T_grid, n_chains, sweeps_log2, seed,
                   resamples=300, checkpoint=None):
    """Clean-lattice control: crossing fit of the zero-disorder toric
    star model, whose exact transition sits at 2/log(1+sqrt(2))."""
    curves = scan_curves(0.0, 1.0, L_values, T_grid, n_chains,
                         sweeps_log2, seed, checkpoint=checkpoint,
                         pure=True)
    return crossing_fit(curves, resamples=resamples,
                        rng=np.random.default_rng(seed + 3))


# -- production protocols ------------------------------------------------
#
# Single source of truth for the long-run parameters, shared by the
# batch driver, the CLI defaults, and the checks that refit committed
# checkpoints. 384 disorder samples per point keeps the bootstrap
# intervals tight enough to separate the eta=1 and eta=2 thresholds;
# 2^16 sweeps is double the budget at which the L=16 equilibration bins
# already agree on the Nishimori line.

ISING_CONTROL_PROTOCOL = dict(
    L_values=(8, 12, 16),
    T_grid=tuple(round(2.10 + 0.04 * k, 2) for k in range(9)),
    n_chains=384, sweeps_log2=16, seed=7)

THRESHOLD_PROTOCOLS = {
    1.0: dict(p_grid=(0.085, 0.095, 0.105, 0.115, 0.125),
              L_values=(8, 12, 16), n_disorder=384, sweeps_log2=16, seed=7),
    2.0: dict(p_grid=(0.075, 0.085, 0.095, 0.105, 0.115),
              L_values=(8, 12, 16), n_disorder=384, sweeps_log2=16, seed=7),
}
