"""End-to-end acceptance checks; each prints one PASS/FAIL line."""
import filecmp
import math
import time
from dataclasses import replace

import numpy as np
from scipy.integrate import quad

from bermcub import cli
from bermcub.bermudan import (PricingJob, dyadic_refinement_gap, gap_constant_R, one_step_gap,
                              price_bermudan)
from bermcub.correction import (FellerSeriesSpec, exponent_estimate, feller_gap, first_passage_lhs,
                                price_american)
from bermcub.cubature import gauss_1d_degree5, product_rule, verify_exactness, victoir_degree5
from bermcub.hedging import (BinomialMarket, european_pricer, hedge_step,
                             simulate_hedge, trim)
from bermcub.model import BlackScholes, PayoffKind, PayoffSpec
from bermcub.oracle import naive_tree_price
from bermcub.perpetual import (Grid, HarmonicSpline1D, averaging_operator, gaussian_convolve_poly,
                               iterate_D, iterate_K_1d, polyfix_det_m2)
from frozen import MIN_PUT_SIGMA_04_AT_100

R6 = 0.06


class Clock:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.s = time.perf_counter() - self.t0


def test_1_cubature_exactness(acceptance):
    with Clock() as c:
        f1, f7 = gauss_1d_degree5(), victoir_degree5(7)
        err = max(verify_exactness(f1, 5).max_error, verify_exactness(f7, 5).max_error)
    ok = err <= 1e-10 and f7.size == 57 and c.s < 1.0
    acceptance(1, "degree-5 exactness, 57 points in d=7", ok,
               f"max err {err:.1e}, {f7.size} points, {c.s:.2f}s")
    assert ok


def test_2_recombination_equivalence(acceptance):
    worst = 0.0
    payoff = PayoffSpec(PayoffKind.PUT_ON_MIN, 100.0)
    with Clock() as c:
        for d in (1, 2, 3):
            m = BlackScholes(R6, tuple(0.2 + 0.1 * i for i in range(d)))
            f = gauss_1d_degree5() if d == 1 else product_rule(gauss_1d_degree5(), d)
            for N in range(1, 5):
                job = PricingJob.from_prices(m, payoff, [100.0 - 3 * i for i in range(d)], 0.5, N, f)
                worst = max(worst, abs(price_bermudan(job).price - naive_tree_price(job)))
    ok = worst <= 1e-9 and c.s < 30
    acceptance(2, "lattice equals naive tree, d<=3, N<=4", ok, f"max diff {worst:.1e}, {c.s:.1f}s")
    assert ok


def test_3_min_put_table_row(acceptance):
    m = BlackScholes(R6, (0.4,) * 7)
    payoff = PayoffSpec(PayoffKind.PUT_ON_MIN, 100.0)
    with Clock() as c:
        job = PricingJob.from_prices(m, payoff, [100.0] * 7, 0.5, 3, victoir_degree5(7))
        est = price_american(job, (1, 2, 3), (1.0, 0.5))
        got = (est.prices[-1], est.extrapolated[1.0], est.extrapolated[0.5])
        prod = price_bermudan(replace(job, formula=product_rule(gauss_1d_degree5(), 7))).price
    rel = [abs(g / e - 1) for g, e in zip(got, MIN_PUT_SIGMA_04_AT_100)]
    cross = abs(prod / got[0] - 1)
    ok = max(rel) <= 1e-3 and cross <= 1e-2 and c.s < 300
    acceptance(3, "d=7 min put row and product-rule cross-check", ok,
               f"{got[0]:.4f}/{got[1]:.4f}/{got[2]:.4f}, product {prod:.4f}, {c.s:.1f}s")
    assert ok


def test_4_immediate_exercise_rows(acceptance):
    vals = []
    for sigma, S, exp in ((0.6, 80.0, 20.0), (0.4, 90.0, 10.0)):
        m = BlackScholes(R6, (sigma,) * 7)
        job = PricingJob.from_prices(m, PayoffSpec.equal_average(PayoffKind.PUT_ON_AVG, 100.0, 7),
                                     [S] * 7, 0.5, 3, victoir_degree5(7))
        vals.append((price_bermudan(job).price, exp))
    ok = all(abs(v - e) <= 1e-6 for v, e in vals)
    acceptance(4, "deep in-the-money average puts equal payoff", ok,
               ", ".join(cli.fmt_sig(v) for v, _ in vals))
    assert ok


def test_5_perpetual_contraction(acceptance):
    h, K, tol = 0.1, 100.0, 1e-9
    with Clock() as c:
        m = BlackScholes(R6, (0.4,))
        grid = Grid.around([math.log(K)], 3.0, 0.01)
        A = averaging_operator(grid, gauss_1d_degree5(), m, h)
        g = PayoffSpec(PayoffKind.VANILLA_PUT, K).evaluate(grid.nodes(), clip=False)
        res = iterate_D(g, math.exp(-R6 * h), A, grid, tol=tol)
    cr = math.exp(-R6 * h)
    ok = res.monotone and bool(np.all(res.ratios <= cr + 1e-12)) and res.residual < tol and c.s < 10
    acceptance(5, "perpetual put iteration contracts at e^{-rh}", ok,
               f"max ratio {np.max(res.ratios):.6f} vs {cr:.6f}, residual {res.residual:.1e}, {c.s:.1f}s")
    assert ok


def test_6_first_passage_identity(acceptance):
    with Clock() as c:
        spec = FellerSeriesSpec(BlackScholes(R6, (math.sqrt(2 * R6),)), 1.0)
        gap = feller_gap(spec)
        closed = math.sqrt(1 - math.exp(-R6))
        dp = first_passage_lhs(spec, "dp")
        mc = first_passage_lhs(spec, "mc", paths=4000, seed=1)
    e1, e2, e3 = abs(gap - closed), abs(1 - dp.xi - gap), abs(1 - mc.mean - gap)
    ok = e1 <= 1e-6 and e2 <= 1e-3 and e3 <= 3 * mc.se and c.s < 60
    acceptance(6, "series, grid and Monte Carlo first passage agree", ok,
               f"closed {e1:.1e}, grid {e2:.1e}, mc {e3:.1e} (se {mc.se:.1e}), {c.s:.1f}s")
    assert ok


def test_7_scaling_exponents(acceptance):
    ladder = [0.1 * 2.0 ** -k for k in range(11)]
    with Clock() as c:
        up = exponent_estimate(BlackScholes(R6, (0.2,)), ladder)
        flat = exponent_estimate(BlackScholes(R6, (math.sqrt(2 * R6),)), ladder)
    lo, hi = 1 / (2 * math.sqrt(2)) - 0.05, 0.5 + 0.05
    ok = lo <= up.slope <= hi and abs(flat.slope - 0.5) <= 0.01 and c.s < 60
    acceptance(7, "log-log gap slopes", ok,
               f"upward drift {up.slope:.4f}, driftless {flat.slope:.4f}, {c.s:.1f}s")
    assert ok


def test_8_dyadic_gap_bound(acceptance):
    n = 7
    with Clock() as c:
        job = PricingJob.from_prices(BlackScholes(R6, (1.0,)), PayoffSpec(PayoffKind.VANILLA_PUT, 100.0),
                                     [100.0], 1.0, 1, gauss_1d_degree5())
        R = gap_constant_R(replace(job, steps=2 ** n))
        grid = np.linspace(math.log(100.0) - 1, math.log(100.0) + 1, 401)
        gaps = [(s, one_step_gap(job, s, n, grid)) for s in (2 ** n, 2 ** (n - 1), 2 ** (n - 2))]
        tab = dyadic_refinement_gap(job, n)
    h = 1.0 / 2 ** n
    bounded = all(0 <= gap <= R * s * h / 2 for s, gap in gaps)
    ok = bounded and abs(tab.ratio - 0.5) <= 0.1 and c.s < 120
    acceptance(8, "one-step dyadic gaps below R s/2, L1 decay near 1/2", ok,
               "gaps " + "/".join(f"{g:.3f}<={R * s * h / 2:.3f}" for s, g in gaps)
               + f", ratio {tab.ratio:.3f}, {c.s:.1f}s")
    assert ok


def test_9_harmonic_solver(acceptance):
    mu, sig = -0.5, 1.0
    a = np.linspace(-1.5, 1.5, 31)
    x = np.linspace(a[0], a[-1], 1201)
    with Clock() as c:
        res = iterate_K_1d(lambda y: np.exp(y) - 1.0, -1.0, np.exp, a, mu, sig, 0.05, 0.1, tol=1e-10)
        last = [HarmonicSpline1D.interpolate(a, v, mu, sig)(x) for v in res.history[-2:]]
        uniform = float(np.abs(last[1] - last[0]).max())
        repro = float(np.abs(HarmonicSpline1D.interpolate(a, 2 - 3 * np.exp(a), mu, sig)(x)
                             - (2 - 3 * np.exp(x))).max())
        rng = np.random.default_rng(0)
        dom = True
        for _ in range(50):
            cs = rng.uniform(0, 2, 4)
            p, q = rng.uniform(-3, 3, 2)
            f = lambda y: p + q * np.exp(y) + sum(ci * np.exp(k * y) for ci, k in zip(cs, (-2, -1, 2, 3)))
            dom &= bool(np.all(HarmonicSpline1D.interpolate(a, f(a), mu, sig)(x)
                               >= f(x) - 1e-10 * max(1.0, np.abs(f(x)).max())))
    ok = res.monotone and res.bounded and uniform < 1e-9 and repro <= 1e-12 and dom and c.s < 30
    acceptance(9, "harmonic interpolation solver", ok,
               f"{len(res.diffs)} iterations, uniform step {uniform:.1e}, reproduction {repro:.1e}, {c.s:.1f}s")
    assert ok


def test_10_polynomial_smoothing(acceptance):
    rng = np.random.default_rng(3)
    worst = 0.0
    with Clock() as c:
        for deg in range(7):
            for _ in range(5):
                coeffs = rng.uniform(-3, 3, deg + 1)
                mu, h, x0 = rng.uniform(-1, 1), rng.uniform(1e-3, 0.5), rng.uniform(-2, 2)
                got = np.polynomial.polynomial.polyval(x0, gaussian_convolve_poly(coeffs, mu, h))
                m, s = x0 + mu * h, math.sqrt(h)
                ref = quad(lambda z: np.polynomial.polynomial.polyval(m + s * z, coeffs)
                           * math.exp(-z * z / 2) / math.sqrt(2 * math.pi), -40, 40,
                           epsabs=1e-13, epsrel=1e-13, limit=200)[0]
                worst = max(worst, abs(got - ref))
        shift = all(np.array_equal(gaussian_convolve_poly([0.0, 1.0], mu, h), [mu * h, 1.0])
                    for mu, h in ((0.3, 0.1), (-1.7, 0.013), (2.0, 1e-4)))
        ratios = [abs(polyfix_det_m2(-1, 0, 1, R6, h)) / h ** 1.5 for h in (1e-2, 1e-3, 1e-4)]
    spread = max(ratios) / min(ratios) - 1
    ok = worst <= 1e-9 and shift and spread <= 0.02 and c.s < 10
    acceptance(10, "polynomial smoothing and determinant order", ok,
               f"quad diff {worst:.1e}, det ratio spread {spread:.2%}, {c.s:.1f}s")
    assert ok


def test_11_hedging_properties(acceptance):
    rng = np.random.default_rng(11)
    with Clock() as c:
        m1 = BinomialMarket.independent([1.15], [0.9], 0.45, 0.01)
        pr = european_pricer(m1, lambda S: max(S[0] - 1.0, 0.0), [1.0], 6)
        complete = max(r.linf for r in simulate_hedge(m1, pr, [1.0], 6, 30, seed=5))
        sizes, retained, invariant, solved = [], 0.0, True, 0
        for d in range(2, 7):
            for _ in range(6):
                up = 1 + rng.uniform(0.02, 0.5, d)
                down = 1 - rng.uniform(0.02, 0.5, d)
                pmf = rng.uniform(0.05, 1.0, 2 ** d)
                m = BinomialMarket(tuple(up), tuple(down), pmf / pmf.sum(), 0.01)
                tm = trim(m)
                sizes.append(len(tm.states) == d + 1)
                invariant &= all(trim(m, rho_scale=k).states == tm.states for k in (1e-6, 3.7, 1e8))
                S = np.ones(d)
                vals = {s: max(float(np.mean(S * m.factors(s))) - 1.0, 0.0) ** 1.5 for s in m.states()}
                try:
                    port = hedge_step(tm, vals, S)
                except ValueError:
                    continue
                solved += 1
                retained = max(retained, max(abs(port.residuals[s]) for s in tm.states))
    ok = complete <= 1e-12 and all(sizes) and retained <= 1e-10 and invariant and solved > 0 and c.s < 30
    acceptance(11, "hedging residuals, trim size, scale invariance", ok,
               f"complete {complete:.1e}, retained {retained:.1e} over {solved} solvable trims, {c.s:.1f}s")
    assert ok


def test_12_scenarios_are_deterministic(acceptance, tmp_path):
    names = cli.scenario_names()
    bad = []
    for name in names:
        outs = []
        for rep in range(2):
            out = tmp_path / f"{name}.{rep}.csv"
            rc = cli.main(["run", "--scenario", name, "--out", str(out)])
            outs.append(out)
            if rc != 0:
                bad.append(f"{name} rc={rc}")
        if not filecmp.cmp(outs[0], outs[1], shallow=False):
            bad.append(f"{name} differs")
    ok = not bad
    acceptance(12, "shipped scenarios reproduce byte for byte", ok,
               f"{len(names)} scenarios" + ("" if ok else ": " + ", ".join(bad)))
    assert ok
