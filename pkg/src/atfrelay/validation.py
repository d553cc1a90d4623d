"""Self-checks: module properties and end-to-end oracle comparisons.

Every check returns a :class:`CheckResult`; ``quick`` shrinks sample
counts and widens only the tolerances that depend on them.
"""

from __future__ import annotations

import functools
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import channel as ch
from . import distributions as dist
from . import markov as mk
from . import simulator as sm

REFERENCE_SIGNAL_DBM = (25.0, 30.0, 35.0, 40.0, 45.0)
SWEEP_GRID_DBM = (10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0)
SWEEP_MID_DBM = (20.0, 25.0, 30.0, 35.0, 40.0)
BASELINE_GRID_DBM = (30.0, 35.0, 40.0)
BASELINE_RATES = (1.0, 2.0, 3.0)
FULL_LEVELS = 90
DESK_LEVELS = 20


@dataclass
class CheckResult:
    name: str
    passed: bool
    observed: float
    bound: float
    detail: str = ""
    seconds: float = 0.0
    extra: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.name}: observed={self.observed:.6g} bound={self.bound:.6g}"
                f" ({self.seconds:.1f}s){' ' + self.detail if self.detail else ''}")


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def reference_config(source_dbm: float = 30.0, interferer_dbm: float | None = 20.0,
                     rate: float = 1.0) -> ch.SystemConfig:
    """Reference geometry and radio parameters with the given transmit powers."""
    n_int = 0 if interferer_dbm is None else 3
    budget = ch.LinkBudget(
        source_power=ch.dbm_to_watts(source_dbm),
        interferer_powers=(ch.dbm_to_watts(interferer_dbm),) * n_int if n_int else (),
        efficiency=0.5, nakagami_m=2, antennas=4,
        noise_relay=ch.dbm_to_watts(-80.0), noise_dest=ch.dbm_to_watts(-80.0), rate=rate,
    )
    topo = ch.Topology(d_ir=(12.0, 13.0, 14.0)[:n_int])
    return ch.config_from_topology(budget, topo)


def random_corpus(n: int, seed: int = 2024):
    """Randomised ``(SystemConfig, BatteryModel)`` pairs spanning the validated ranges."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        n_int = int(rng.integers(0, 5))
        budget = ch.LinkBudget(
            source_power=ch.dbm_to_watts(rng.uniform(10, 50)),
            interferer_powers=tuple(ch.dbm_to_watts(rng.uniform(0, 40)) for _ in range(n_int)),
            efficiency=float(rng.uniform(0.2, 1.0)),
            nakagami_m=int(rng.integers(1, 5)),
            antennas=int(rng.integers(1, 7)),
            noise_relay=ch.dbm_to_watts(-80.0), noise_dest=ch.dbm_to_watts(-80.0),
            rate=float(rng.uniform(0.25, 3.0)),
        )
        topo = ch.Topology(d_sd=20.0, d_sr=float(rng.uniform(2, 15)),
                           d_ir=tuple(rng.uniform(5, 25, n_int)),
                           pathloss_exponent=float(rng.uniform(2, 4)))
        battery = mk.BatteryModel(capacity=float(rng.uniform(0.1, 1.0)),
                                  levels=int(rng.integers(1, 51)))
        out.append((ch.config_from_topology(budget, topo), battery))
    return out


# ---------------------------------------------------------------------------
# acceptance criteria
# ---------------------------------------------------------------------------

@_timed
def check_row_stochastic(n_configs: int = 200, tol: float = 1e-9) -> CheckResult:
    worst = 0.0
    for k, (cfg, b) in enumerate(random_corpus(n_configs)):
        try:
            z = mk.build_transition_matrix(mk.model_inputs(cfg), b)
        except mk.TransitionMatrixError as exc:
            return CheckResult("row-stochastic transition matrix", False, abs(exc.total - 1.0), tol,
                               f"config {k} (Q={b.levels}): row {exc.row} sums to {exc.total!r}",
                               extra={"row": exc.row, "config": k})
        worst = max(worst, float(np.max(np.abs(z.sum(axis=1) - 1.0))))
    return CheckResult("row-stochastic transition matrix", worst <= tol, worst, tol,
                       f"{n_configs} configs")


@_timed
def check_stationary(n_configs: int = 200, tol: float = 1e-9) -> CheckResult:
    resid = mass = 0.0
    most_negative = 0.0
    for cfg, b in random_corpus(n_configs):
        z = mk.build_transition_matrix(mk.model_inputs(cfg), b)
        pi = mk.stationary_distribution(z)
        resid = max(resid, float(np.max(np.abs(z.T @ pi - pi))))
        mass = max(mass, abs(float(pi.sum()) - 1.0))
        most_negative = min(most_negative, float(pi.min()))
    ok = resid <= tol and mass <= tol and most_negative >= -1e-12
    return CheckResult("stationary solve", ok, max(resid, mass), tol,
                       f"residual={resid:.3g} mass_err={mass:.3g} min_pi={most_negative:.3g}")


def _sim_vs_analytic(fidelity: str, blocks: int, seed: int, rate: float = 1.0):
    b = mk.BatteryModel(0.5, DESK_LEVELS)
    rows = []
    for k, ps in enumerate(REFERENCE_SIGNAL_DBM):
        cfg = reference_config(ps, 20.0, rate)
        ana = mk.analytic_pipeline(cfg, b)
        rep = sm.simulate_atf(cfg, b, sm.SimConfig(blocks, seed + k, fidelity, "discrete"))
        tv = sm.empirical_vs_analytic(rep.level_histogram, ana.pi).tv_distance
        rows.append((ps, ana.throughput, rep.empirical_throughput, rep.throughput_stderr, tv))
    return rows


@_timed
def check_analytic_vs_simulation(blocks: int = 10**6, seed: int = 11, quick: bool = False) -> CheckResult:
    """Scalar-fidelity simulation against the Markov analysis at five source powers."""
    rate = 1.0
    floor, tv_tol = (0.02, 0.05) if quick else (0.01, 0.02)
    rows = _sim_vs_analytic("scalar", blocks, seed, rate)
    ok = True
    worst_ratio = 0.0
    parts = []
    for ps, ana, emp, se, tv in rows:
        tol = max(floor * rate, 4.0 * se)
        gap = abs(ana - emp)
        ok &= gap <= tol and tv <= tv_tol
        worst_ratio = max(worst_ratio, gap / tol, tv / tv_tol)
        parts.append(f"{ps:g}dBm:|d|={gap:.2e}/tol={tol:.2e},tv={tv:.2e}")
    return CheckResult("analytic vs scalar simulation", ok, worst_ratio, 1.0, "; ".join(parts),
                       extra={"rows": rows})


@_timed
def check_dependence_gap(blocks: int = 10**6, seed: int = 23) -> CheckResult:
    """Vector-fidelity gap to the analysis (product-form approximation error)."""
    rate = 1.0
    rows = _sim_vs_analytic("vector", blocks, seed, rate)
    gap = max(abs(a - e) for _, a, e, _, _ in rows)
    parts = [f"{ps:g}dBm:gap={abs(a - e):.2e},tv={tv:.2e}" for ps, a, e, _, tv in rows]
    return CheckResult("dependence gap (vector fidelity)", gap <= 0.05 * rate, gap, 0.05 * rate,
                       "; ".join(parts), extra={"rows": rows})


def _exact_eh_samples(cfg, stream, n):
    e = 0.5 * cfg.efficiency * cfg.source_power * dist.sample_gamma(
        stream, cfg.nakagami_m * cfg.antennas, cfg.antennas * cfg.source_gain, n)
    for p, g in zip(cfg.interferer_powers, cfg.interferer_gains):
        e += cfg.efficiency * p * dist.sample_gamma(stream, cfg.antennas, cfg.antennas * g, n)
    return e


@_timed
def check_cdf_oracles(samples: int = 10**7, seed: int = 5) -> CheckResult:
    """Relay-power CDF, harvested-energy moments and first-hop outage against sampling."""
    cfg = reference_config(30.0, 20.0)
    fails = []
    worst = 0.0

    # relay-power CDF on a grid spanning its bulk
    stream = dist.RngStream(seed, 0)
    g2 = dist.sample_gamma(stream, cfg.antennas, cfg.antennas * cfg.destination_gain, samples)
    p_r = np.sort(cfg.threshold * cfg.noise_dest / g2)
    grid = np.quantile(p_r, np.linspace(0.05, 0.95, 10))
    for x in grid:
        f = ch.cdf_required_power(x, cfg)
        emp = np.searchsorted(p_r, x, side="right") / samples
        sig = math.sqrt(f * (1 - f) / samples)
        z = abs(emp - f) / sig
        worst = max(worst, z / 3.0)
        if z > 3.0:
            fails.append(f"F_PR({x:.3g}) z={z:.2f}")

    # first two moments of the EH energy against its gamma fit
    e = _exact_eh_samples(cfg, dist.RngStream(seed, 1), samples)
    fit = ch.eh_energy_gamma_params(cfg)
    terms = ch.eh_energy_summands(cfg)
    m2 = dist.sum_raw_moment(terms, 2)
    m4 = dist.sum_raw_moment(terms, 4)
    sd_mean = math.sqrt(fit.variance / samples)
    sd_m2 = math.sqrt((m4 - m2 ** 2) / samples)
    fit_m2 = fit.variance + fit.mean ** 2
    for label, emp, ref, sd in (("mean", e.mean(), fit.mean, sd_mean),
                                ("second moment", np.mean(e * e), fit_m2, sd_m2)):
        z = abs(emp - ref) / sd
        worst = max(worst, z / 3.0)
        if z > 3.0:
            fails.append(f"E_I {label} z={z:.2f}")

    # first-hop outage: closed vs sampling vs quadrature
    closed = dist.first_hop_outage_prob(cfg, "closed")
    quad = dist.first_hop_outage_prob(cfg, "quadrature")
    mc = dist.first_hop_outage_prob(cfg, "montecarlo", n_samples=samples,
                                    stream=dist.RngStream(seed, 2))
    sig = math.sqrt(max(closed * (1 - closed), 1.0 / samples) / samples)
    z = abs(mc - closed) / sig
    worst = max(worst, z / 3.0, abs(closed - quad) / 1e-6)
    if z > 3.0:
        fails.append(f"outage MC z={z:.2f}")
    if abs(closed - quad) > 1e-6:
        fails.append(f"outage closed-quadrature {abs(closed - quad):.2e}")
    detail = "; ".join(fails) if fails else (f"outage closed={closed:.4e} quad={quad:.4e} mc={mc:.4e}")
    return CheckResult("closed-form CDF oracles", not fails, worst, 1.0, detail)


def power_sweep_curves(levels: int = DESK_LEVELS):
    b = mk.BatteryModel(0.5, levels)
    curves = {}
    for label, p_int in (("none", None), ("20dBm", 20.0), ("40dBm", 40.0)):
        curves[label] = [mk.analytic_pipeline(reference_config(ps, p_int), b).throughput
                         for ps in SWEEP_GRID_DBM]
    return curves


@_timed
def check_power_sweep_shape(levels: int = DESK_LEVELS, rate: float = 1.0) -> CheckResult:
    """Saturation, interference benefit at 20 dBm and harm at 40 dBm."""
    c = power_sweep_curves(levels)
    idx = {ps: k for k, ps in enumerate(SWEEP_GRID_DBM)}
    sat = c["20dBm"][idx[50.0]] - c["20dBm"][idx[40.0]]
    benefit = min(a - b for a, b in zip(c["20dBm"], c["none"]))
    harm = max(c["40dBm"][idx[p]] - c["20dBm"][idx[p]] for p in SWEEP_MID_DBM)
    ok_sat = sat <= 0.02 * rate
    ok_benefit = benefit >= -1e-9      # round-off guard for saturated, equal points
    ok_harm = harm < 0
    detail = (f"saturation={sat:.4f}{'' if ok_sat else ' FAIL'}; "
              f"min(CCI20-noCCI)={benefit:.3e}{'' if ok_benefit else ' FAIL'}; "
              f"max(CCI40-CCI20) mid-range={harm:.4f}{'' if ok_harm else ' FAIL'}")
    return CheckResult(f"power-sweep shape (Q={levels})", ok_sat and ok_benefit and ok_harm,
                       sat, 0.02 * rate, detail, extra={"curves": c})


@functools.lru_cache(maxsize=8)
def baseline_table(blocks: int = 10**6, seed: int = 31, levels: int = DESK_LEVELS,
               grid=BASELINE_GRID_DBM, rates=BASELINE_RATES):
    """``{rate: [(P_s, ATF throughput, baseline throughput, baseline stderr)]}`` at 35 dBm interference."""
    b = mk.BatteryModel(0.5, levels)
    table = {}
    for r_idx, rate in enumerate(rates):
        rows = []
        for k, ps in enumerate(grid):
            cfg = reference_config(ps, 35.0, rate)
            atf = mk.analytic_pipeline(cfg, b).throughput
            base = sm.simulate_baseline_no_accumulation(
                cfg, sm.SimConfig(blocks, seed + 100 * r_idx + k, "scalar"))
            rows.append((ps, atf, base.empirical_throughput, base.throughput_stderr))
        table[rate] = rows
    return table


@_timed
def check_baseline_gain(blocks: int = 10**6, seed: int = 31, levels: int = DESK_LEVELS) -> CheckResult:
    """ATF throughput strictly above the three-slot baseline at every grid point and rate."""
    table = baseline_table(blocks, seed, levels)
    margins = [atf - base for rows in table.values() for _, atf, base, _ in rows]
    worst = min(margins)
    detail = "; ".join(f"R={r:g}: " + ",".join(f"{ps:g}dBm {a:.4f}>{bb:.4f}" for ps, a, bb, _ in rows)
                       for r, rows in table.items())
    return CheckResult(f"ATF beats baseline (Q={levels})", worst > 0, worst, 0.0, detail,
                       extra={"table": table})


@_timed
def check_gain_growth(blocks: int = 10**6, seed: int = 31, levels: int = DESK_LEVELS) -> CheckResult:
    """Throughput gain over the baseline non-decreasing in rate at every grid point."""
    table = baseline_table(blocks, seed, levels)
    rates = sorted(table)
    worst = math.inf
    parts = []
    for k, ps in enumerate(BASELINE_GRID_DBM):
        gaps = [table[r][k][1] - table[r][k][2] for r in rates]
        steps = [b - a for a, b in zip(gaps, gaps[1:])]
        worst = min(worst, *steps)
        parts.append(f"{ps:g}dBm gaps=" + "/".join(f"{g:.4f}" for g in gaps))
    return CheckResult(f"gain grows with rate (Q={levels})", worst >= 0, worst, 0.0, "; ".join(parts),
                       extra={"table": table})


def _hand_q1(fe1, fe2, fx, po):
    t00 = fe1[1]
    t11 = (1 - fx[1]) + fx[1] * po
    return np.array([[t00, 1 - fe1[1]], [(1 - po) * fx[1], t11]])


def _hand_q2(fe1, fe2, fx, po):
    # rows written out case by case for Q = 2
    return np.array([
        [fe1[1], fe1[2] - fe1[1], 1 - fe1[2]],
        [(1 - po) * fx[1],
         (1 - fx[1]) * fe1[1] + fx[1] * fe2[1] * po,
         (1 - fx[1]) * (1 - fe1[1]) + po * fx[1] * (1 - fe2[1])],
        [(1 - po) * (fx[2] - fx[1]), (1 - po) * fx[1], (1 - fx[2]) + po * fx[2]],
    ])


def _tree_stationary(z):
    """Stationary law of a 2- or 3-state chain by the Markov chain tree theorem."""
    if z.shape[0] == 2:
        a, b = z[0, 1], z[1, 0]
        return np.array([b, a]) / (a + b)
    w = np.array([
        z[1, 0] * z[2, 0] + z[1, 0] * z[2, 1] + z[1, 2] * z[2, 0],
        z[0, 1] * z[2, 1] + z[0, 1] * z[2, 0] + z[0, 2] * z[2, 1],
        z[0, 2] * z[1, 2] + z[0, 2] * z[1, 0] + z[0, 1] * z[1, 2],
    ])
    return w / w.sum()


@_timed
def check_small_instances(tol: float = 1e-12) -> CheckResult:
    worst = 0.0
    for cfg in (reference_config(30.0, 20.0), reference_config(35.0, 40.0, 2.0),
                reference_config(20.0, None)):
        inputs = mk.model_inputs(cfg)
        for q, hand in ((1, _hand_q1), (2, _hand_q2)):
            b = mk.BatteryModel(0.05, q)
            grid = b.energies()
            fe1 = inputs.eh_dist.cdf(grid)
            fe2 = inputs.cci_dist.cdf(grid)
            fx = np.asarray(inputs.power_cdf(2 * grid))
            fx[0] = 0.0
            z = mk.build_transition_matrix(inputs, b)
            worst = max(worst, float(np.max(np.abs(z - hand(fe1, fe2, fx, inputs.first_hop_outage)))))
            pi = mk.stationary_distribution(z)
            worst = max(worst, float(np.max(np.abs(pi - _tree_stationary(z)))))
    return CheckResult("small-instance brute force (Q=1,2)", worst <= tol, worst, tol)


# ---------------------------------------------------------------------------
# module properties
# ---------------------------------------------------------------------------

@_timed
def check_incomplete_gamma(tol: float = 1e-10) -> CheckResult:
    worst = 0.0
    for a in (0.5, 1.0, 2.5, 8.0, 24.0, 47.3):
        for x in (0.01, 0.5, 1.0, a, a + 1.0, 2 * a + 3, 60.0):
            ref, _ = integrate.quad(lambda t: math.exp((a - 1) * math.log(t) - t - math.lgamma(a)),
                                    0.0, x, epsabs=0, epsrel=1e-13, limit=500)
            val = dist.regularized_lower_gamma(a, x)
            worst = max(worst, abs(val - ref) / max(ref, 1e-300))
    return CheckResult("incomplete gamma vs quadrature", worst <= tol, worst, tol)


@_timed
def check_moment_matching(tol: float = 1e-12) -> CheckResult:
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(200):
        terms = [dist.GammaParams(float(rng.uniform(0.5, 10)), float(rng.uniform(0.01, 5)))
                 for _ in range(int(rng.integers(1, 11)))]
        fit = dist.moment_match_gamma_sum(terms)
        m1 = dist.sum_raw_moment(terms, 1)
        var = dist.sum_raw_moment(terms, 2) - m1 ** 2
        worst = max(worst, abs(fit.mean - m1) / m1, abs(fit.variance - var) / var)
    return CheckResult("moment matching exact to two moments", worst <= 1e-9, worst, 1e-9,
                       "raw-moment route carries its own round-off")


@_timed
def check_outage_routes(tol: float = 1e-6) -> CheckResult:
    worst = 0.0
    for cfg, _ in random_corpus(20, seed=77):
        if cfg.num_interferers and dist.HypoExpParams(
                [p * g for p, g in zip(cfg.interferer_powers, cfg.interferer_gains)]).distinct():
            a = dist.first_hop_outage_prob(cfg, "closed")
            b = dist.first_hop_outage_prob(cfg, "quadrature")
            worst = max(worst, abs(a - b))
    return CheckResult("first-hop outage closed vs quadrature", worst <= tol, worst, tol)


@_timed
def check_outage_free_power(tol: float = 1e-12) -> CheckResult:
    cfg = reference_config(30.0, 20.0, 1.5)
    draw = ch.draw_channel(dist.RngStream(9), cfg, 1000)
    p_r = ch.required_relay_power(draw, cfg)
    err = float(np.max(np.abs(ch.destination_snr(draw, cfg, p_r) / cfg.threshold - 1.0)))
    return CheckResult("destination SNR at outage-free power", err <= tol, err, tol)


@_timed
def check_sampler_reproducible() -> CheckResult:
    cfg = reference_config()
    a = ch.draw_channel(dist.RngStream(42, 3), cfg, 64)
    b = ch.draw_channel(dist.RngStream(42, 3), cfg, 64)
    same = all(np.array_equal(x, y) for x, y in ((a.h0, b.h0), (a.g0, b.g0), (a.h_int, b.h_int)))
    return CheckResult("sampler reproducibility", same, float(same), 1.0)


def all_checks(quick: bool = False):
    """``(module, callable)`` pairs run by the ``validate`` command."""
    blocks = 10**5 if quick else 10**6
    samples = 10**6 if quick else 10**7
    corpus = 50 if quick else 200
    return [
        ("distributions", check_incomplete_gamma),
        ("distributions", check_moment_matching),
        ("distributions", check_outage_routes),
        ("distributions", check_sampler_reproducible),
        ("channel", check_outage_free_power),
        ("markov", lambda: check_row_stochastic(corpus)),
        ("markov", lambda: check_stationary(corpus)),
        ("markov", check_small_instances),
        ("distributions", lambda: check_cdf_oracles(samples)),
        ("simulator", lambda: check_analytic_vs_simulation(blocks, quick=quick)),
        ("simulator", lambda: check_dependence_gap(blocks)),
        ("markov", check_power_sweep_shape),
        ("simulator", lambda: check_baseline_gain(blocks)),
        ("simulator", lambda: check_gain_growth(blocks)),
    ]
