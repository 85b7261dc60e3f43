"""Acceptance criteria, one reported PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v``; the lines are collected in
``RESULTS`` and printed in the terminal summary (see ``conftest.py``).  The
file can also be executed directly with ``python3 tests/test_acceptance.py``.
Set ``VARRAMSEY_LONG=1`` to include the N = 362 clock row.
"""

import itertools
import math
import os
import time

import numpy as np
import pytest
from scipy import special, stats
from test_circuits import full_space_probabilities, random_params

from varramsey.circuits import CircuitParams, css, outcome_table
from varramsey.clock import allan_comparison
from varramsey.lab import FreqExperimentConfig, NoiseModel, ScanSpec, design_slope, empirical_cost, \
    run_frequency_experiment
from varramsey.metrology import (Estimator, Prior, bmse, build_estimator, circuit_cost, gauss_hermite, hl_bmse,
                                 psl_bmse, sql_bmse)
from varramsey.oqi import oqi_bound, oqi_curve, oqi_minimum
from varramsey.spin import apply_rotation, apply_twist, coherent_state, gate_matrix
from varramsey.theory import IdealCost, optimize_theory
from varramsey.varopt import (Constraints, DirectConfig, IdealEvaluator, LabEvaluator, SearchBox, box_from_theory,
                              constrained_optimizer, constrained_theory, optimize)

RESULTS = {}
LONG = os.environ.get("VARRAMSEY_LONG") == "1"


def report(key, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}"
    RESULTS[key] = line
    print(line)
    return ok


def within(value, target, tol):
    return abs(value - target) <= tol


# -- 1: estimator comparison ------------------------------------------------

def test_1_estimator_comparison():
    t0 = time.perf_counter()
    target = {"linear": -4.01, "arcsine": -3.94, "mbmse": -4.20}
    got = {k: circuit_cost(css(), 16, 0.79, k).db for k in target}
    elapsed = time.perf_counter() - t0
    ok = all(within(got[k], target[k], 0.05) for k in target) and elapsed < 5
    detail = ", ".join(f"{k} {got[k]:.4f} dB (target {target[k]})" for k in target)
    assert report("1", ok, f"{detail}; {elapsed:.2f} s"), RESULTS["1"]


# -- 2: slopes of the optimized circuits ------------------------------------

def test_2_slope_table():
    target = {(0, 0): 4.745, (1, 0): 4.378, (0, 2): 3.001, (1, 2): 2.963}
    got = {(0, 0): abs(1 / IdealCost(12, (0, 0), 1.0).slope(np.zeros(0)))}
    for shape in [(1, 0), (0, 2), (1, 2)]:
        got[shape] = abs(1 / optimize_theory(12, shape, 1.0, starts=60).slope)
    ok = all(abs(got[s] / target[s] - 1) <= 0.02 for s in target)
    detail = ", ".join(f"{s} 1/a={got[s]:.4f} (target {target[s]})" for s in target)
    assert report("2", ok, detail), RESULTS["2"]


# -- 3: OQI minima ------------------------------------------------------------

def test_3_oqi_minima():
    target = {12: -5.86, 26: -8.36}
    parts, ok = [], True
    for n, value in target.items():
        grid = oqi_curve(n, np.arange(0.2, 1.2001, 0.05), max_iter=500)
        worst = max(s.iterations for s in grid)
        width, sol = oqi_minimum(n)
        ok &= within(sol.db, value, 0.05) and worst < 500 and sol.iterations < 500
        parts.append(f"N={n} {sol.db:.4f} dB at {width:.4f} (target {value}), max iterations {worst}")
    assert report("3", ok, "; ".join(parts)), RESULTS["3"]


# -- 4: optimizer fidelity against reference theory angles --------------------

REFERENCE_ANGLES = {
    (1, 0): [0.0551, 0.0, -1.0699],
    (1, 2): [0.0626, 0.0, -1.2725, 0.0631, 0.0196, 0.6938, 0.0, 0.0196, -0.6518],
}


def test_4_optimizer_fidelity():
    n, width, evals = 26, 0.7403, 3000
    parts, ok = [], True
    for shape, angles in REFERENCE_ANGLES.items():
        reference = IdealCost(n, shape, width, form="experimental")(np.array(angles))
        evaluator = IdealEvaluator(n, shape, width, form="experimental")
        box = box_from_theory(angles, seed=3)
        res = optimize(evaluator, box, shape, n, Constraints(), budget=evals * evaluator.nominal_shots,
                       config=DirectConfig(max_evaluations=evals, seed=3))
        ratio = res.cost / reference
        ok &= ratio <= 1.01
        parts.append(f"{shape} best {res.cost:.6f} vs reference {reference:.6f} (ratio {ratio:.4f})")
    assert report("4", ok, "; ".join(parts)), RESULTS["4"]


# -- 5: Allan gains -------------------------------------------------------------

ALLAN_ROWS = {
    12: ((1.49, 2.13, 0.04), 0.05),
    26: ((2.12, 2.70, 0.80), 0.05),
    362: ((4.53, 7.50, 1.47), 0.1),
}


@pytest.mark.slow
@pytest.mark.parametrize("n", [12, 26, 362])
def test_5_allan_gains(n):
    if n == 362 and not LONG:
        RESULTS[f"5 (N={n})"] = f"[SKIP] criterion 5 (N={n}): optional long run, set VARRAMSEY_LONG=1"
        pytest.skip("optional long-running row")
    (g10, g12, gap), tol = ALLAN_ROWS[n]
    # flicker exponent 2, circuits restricted to the hardware twisting window
    res = allan_comparison(n, np.arange(0.3, 1.4001, 0.05), alpha=2.0, starts=60,
                           optimizer=constrained_optimizer())
    got = (res.gains[(1, 0)], res.gains[(1, 2)], res.gap_to_oqc)
    flags = [within(v, t, tol) for v, t in zip(got, (g10, g12, gap))]
    detail = ", ".join(f"{name} {v:.3f} dB (target {t}{'' if f else ', off'})"
                       for name, v, t, f in zip(("gain (1,0)", "gain (1,2)", "gap to OQC"), got,
                                                (g10, g12, gap), flags))
    assert report(f"5 (N={n})", all(flags), detail), RESULTS[f"5 (N={n})"]


# -- 6: bound formulas and ordering ------------------------------------------

def test_6_bounds():
    worst = 0.0
    for n in (1, 4, 12, 26):
        for width in (0.2, 0.5, 0.79, 1.3, 2.0):
            sql = 1.0 / (n + width**-2)
            hl = 1.0 / (n * n + width**-2)
            slip = 2 * stats.norm.sf(math.pi / width)
            psl = (2 * math.pi) ** 2 * slip * width**2 / ((2 * math.pi) ** 2 * slip + width**2)
            assert math.isclose(slip, special.erfc(math.pi / (math.sqrt(2) * width)), rel_tol=1e-12)
            for got, want in ((sql_bmse(n, width), sql), (hl_bmse(n, width), hl), (psl_bmse(width), psl)):
                worst = max(worst, abs(got - want) / want)
    ordering = []
    for n in (4, 12):
        for width in (0.3, 0.6, 1.0):
            best = min(optimize_theory(n, s, width, starts=8).cost for s in [(0, 0), (1, 0), (1, 2)])
            ordering.append(hl_bmse(n, width) <= oqi_bound(n, width).bmse <= best + 1e-12)
    ok = worst <= 1e-12 and all(ordering)
    detail = f"max relative formula error {worst:.2e}; HL <= OQI <= best circuit at {sum(ordering)}/{len(ordering)}"
    assert report("6", ok, detail), RESULTS["6"]


# -- 7: property suites ----------------------------------------------------------

def test_7a_unitarity():
    rng = np.random.default_rng(1)
    err = 0.0
    for n in (1, 5, 12, 40):
        for kind, axis in itertools.product("RT", "xyz"):
            u = gate_matrix(kind, axis, rng.uniform(-np.pi, np.pi), n)
            err = max(err, np.abs(u.conj().T @ u - np.eye(n + 1)).max())
        state = coherent_state(n, rng.uniform(0, np.pi), rng.uniform(-np.pi, np.pi))
        for _ in range(20):
            state = apply_twist(apply_rotation(state, "x", rng.normal()), "z", rng.normal())
        err = max(err, abs(np.linalg.norm(state.amplitudes) - 1))
    assert report("7a", err <= 1e-12, f"max unitarity/norm deviation {err:.2e}"), RESULTS["7a"]


def test_7b_tensor_product_oracle():
    err = 0.0
    for n in (1, 2, 3, 4):
        for k, shape in enumerate([(0, 0), (1, 0), (0, 2), (1, 2), (2, 1)]):
            params = random_params(shape, 100 * n + k)
            for phase in (-2.0, 0.3, 1.1):
                diff = outcome_table(params, n, [phase]).probs[0] - full_space_probabilities(params, n, phase)
                err = max(err, np.abs(diff).max())
    assert report("7b", err <= 1e-9, f"max deviation from 2^N simulation {err:.2e}"), RESULTS["7b"]


def test_7c_quadrature_agreement():
    rng = np.random.default_rng(3)
    worst = 0.0
    for k in range(12):
        shape = [(0, 0), (1, 0), (0, 2), (1, 2)][k % 4]
        params = random_params(shape, int(rng.integers(2**31)))
        n, width = int(rng.integers(2, 17)), float(rng.uniform(0.2, 1.2))
        gh = circuit_cost(params, n, width, scheme="gauss-hermite", nodes=96).bmse
        si = circuit_cost(params, n, width, scheme="simpson", nodes=4001).bmse
        worst = max(worst, abs(gh - si) / gh)
    assert report("7c", worst <= 1e-6, f"max relative difference {worst:.2e}"), RESULTS["7c"]


def test_7d_estimator_ordering():
    rng = np.random.default_rng(4)
    good = 0
    trials = 30
    for k in range(trials):
        shape = [(0, 0), (1, 0), (0, 2), (1, 2)][k % 4]
        params = random_params(shape, int(rng.integers(2**31)))
        n, width = int(rng.integers(2, 17)), float(rng.uniform(0.2, 1.5))
        quad = gauss_hermite(Prior(width), 64)
        table = outcome_table(params, n, quad.phases)
        cost = {kind: bmse(table, build_estimator(kind, table, quad), quad).bmse
                for kind in ("linear", "arcsine", "mbmse")}
        # worst case: ignore the data and report the prior mean
        trivial = bmse(table, Estimator.linear(0.0), quad).bmse
        tol = 1e-12 * width**2
        good += (cost["mbmse"] <= cost["linear"] + tol and cost["mbmse"] <= cost["arcsine"] + tol
                 and cost["linear"] <= trivial + tol)
    ok = good == trials
    assert report("7d", ok, f"MBMSE <= linear <= trivial and MBMSE <= arcsine on {good}/{trials} random circuits"), \
        RESULTS["7d"]


def test_7e_shot_scaling():
    params = CircuitParams.from_vector((1, 0), [0.08, 0.0, -0.9])
    n, width = 10, 0.6
    slope = design_slope(params, n, width)
    quad = gauss_hermite(Prior(width), 96)
    truth = bmse(outcome_table(params, n, quad.phases), Estimator.linear(slope), quad).bmse
    rms = {}
    for shots in (100, 10_000):
        errs = [empirical_cost(params, n, width, ScanSpec(10, shots), rng=np.random.default_rng(s),
                               slope=slope).bmse - truth for s in range(100)]
        rms[shots] = float(np.sqrt(np.mean(np.square(errs))))
    factor = rms[100] / rms[10_000]
    # 1/sqrt(shots) predicts a factor of 10
    ok = 5 <= factor <= 20 and rms[10_000] < rms[100]
    assert report("7e", ok, f"rms error {rms[100]:.2e} -> {rms[10_000]:.2e}, factor {factor:.2f} (expected 10)"), \
        RESULTS["7e"]


def test_7f_seeded_determinism():
    def lab_run():
        ev = LabEvaluator(6, (1, 0), 0.6, slope=-0.4, noise=NoiseModel(twist_scale=1.05, refreeze_probability=0.05),
                          spec=ScanSpec(6, 20), seed=9)
        return optimize(ev, SearchBox([0, 0, -1.5], [0.3, 0.2, 0]), (1, 0), 6, budget=20_000,
                        config=DirectConfig(seed=9))

    def freq_run():
        cfg = FreqExperimentConfig(n_particles=6, samples_per_time=30, shots_per_sample=10,
                                   ramsey_times=(1e-3, 2e-3), bootstrap=30)
        return run_frequency_experiment(cfg, seed=9, keep_records=True)

    a, b = lab_run(), lab_run()
    same_trace = [r.as_dict() for r in a.trace] == [r.as_dict() for r in b.trace]
    fa, fb = freq_run(), freq_run()
    same_freq = fa.points == fb.points and fa.records == fb.records
    detail = f"optimizer trace identical: {same_trace}; frequency experiment identical: {same_freq}"
    assert report("7f", same_trace and same_freq, detail), RESULTS["7f"]


# -- 8: frequency experiment ------------------------------------------------------

@pytest.mark.slow
def test_8_frequency_experiment():
    width = 0.6893
    optimized = constrained_theory(12, (1, 2), width, starts=60, form="experimental").params
    config = FreqExperimentConfig(n_particles=12, optimized_params=optimized, design_width=width,
                                  detuning_spread=2 * np.pi * 40.0, truncation=2.0, samples_per_time=200)
    res = run_frequency_experiment(config, NoiseModel(), seed=0)
    z = [abs(p.std - p.theory) / p.bootstrap_error for p in res.points]
    (css_times, css_std, _, _), (opt_times, opt_std, _, _) = res.curve("css"), res.curve("optimized")
    below = bool(np.array_equal(css_times, opt_times) and np.all(opt_std < css_std))
    ok = max(z) <= 3 and below
    detail = f"max |std - theory| = {max(z):.2f} bootstrap sigma over {len(z)} points; (1,2) below (0,0) at every T_R: {below}"
    assert report("8", ok, detail), RESULTS["8"]


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
