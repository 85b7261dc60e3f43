import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg, optimize

from varramsey.circuits import css
from varramsey.errors import ConvergenceFailure, InvalidArgument
from varramsey.metrology import Prior, circuit_cost, gauss_hermite, hl_bmse
from varramsey.oqi import _Moments, oqi_bound, oqi_curve
from varramsey.spin import projections
from varramsey.theory import optimize_theory


def lyapunov_cost(psi, n, width):
    """Optimal-measurement BMSE of a pure input via an independent Lyapunov solve."""
    quad = gauss_hermite(Prior(width), 60)
    jz = np.diag(projections(n))
    rho = np.outer(psi, psi.conj())
    rho_bar = np.zeros_like(rho)
    rho_prime = np.zeros_like(rho)
    for phi, w in zip(quad.phases, quad.weights):
        u = linalg.expm(-1j * phi * jz)
        r = u @ rho @ u.conj().T
        rho_bar += w * r
        rho_prime += w * phi * r
    gen = linalg.solve_continuous_lyapunov(rho_bar + 1e-13 * np.eye(n + 1), 2 * rho_prime)
    return width**2 - np.trace(rho_prime @ gen).real


@pytest.mark.parametrize("n, width", [(3, 0.5), (6, 0.9)])
def test_moments_match_explicit_averaging(n, width):
    rng = np.random.default_rng(n)
    psi = rng.normal(size=n + 1) + 1j * rng.normal(size=n + 1)
    psi /= np.linalg.norm(psi)
    mom = _Moments(n, width)
    rho_bar, rho_prime = mom.averaged(psi)
    quad = gauss_hermite(Prior(width), 60)
    jz = np.diag(projections(n))
    ref_bar = sum(w * linalg.expm(-1j * p * jz) @ np.outer(psi, psi.conj()) @ linalg.expm(1j * p * jz)
                  for p, w in zip(quad.phases, quad.weights))
    ref_prime = sum(w * p * linalg.expm(-1j * p * jz) @ np.outer(psi, psi.conj()) @ linalg.expm(1j * p * jz)
                    for p, w in zip(quad.phases, quad.weights))
    assert np.abs(rho_bar - ref_bar).max() < 1e-12
    assert np.abs(rho_prime - ref_prime).max() < 1e-12
    cost, _ = mom.solve(psi)
    assert cost == pytest.approx(lyapunov_cost(psi, n, width), abs=1e-9)


@pytest.mark.parametrize("n, width", [(2, 0.6), (3, 1.0)])
def test_matches_brute_force_over_states(n, width):
    def cost(z):
        psi = z[: n + 1] + 1j * z[n + 1:]
        return lyapunov_cost(psi / np.linalg.norm(psi), n, width)

    rng = np.random.default_rng(0)
    best = min(optimize.minimize(cost, rng.normal(size=2 * n + 2), method="Nelder-Mead",
                                 options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 20000}).fun
               for _ in range(6))
    assert oqi_bound(n, width).bmse == pytest.approx(best, rel=1e-6)


@settings(max_examples=15)
@given(n=st.integers(1, 16), width=st.floats(0.15, 1.5))
def test_sandwich_between_heisenberg_and_coherent_state(n, width):
    sol = oqi_bound(n, width)
    assert hl_bmse(n, width) <= sol.bmse * (1 + 1e-9)
    assert sol.bmse <= circuit_cost(css(), n, width, "mbmse").bmse * (1 + 1e-9)
    assert sol.iterations < 500
    assert abs(np.linalg.norm(sol.state.amplitudes) - 1) < 1e-12


@pytest.mark.parametrize("n, width", [(8, 0.7), (12, 0.4)])
def test_below_optimized_circuits(n, width):
    sol = oqi_bound(n, width)
    for shape in [(1, 0), (1, 2)]:
        circuit = optimize_theory(n, shape, width, starts=8)
        assert sol.bmse <= circuit.cost * (1 + 1e-9)


def test_history_is_monotone_without_presolve():
    sol = oqi_bound(10, 0.6, presolve=False)
    hist = np.array(sol.history)
    assert hist.size > 2
    assert np.all(np.diff(hist) <= 1e-12)


def test_presolve_agrees_with_plain_alternation():
    fast = oqi_bound(10, 0.8)
    slow = oqi_bound(10, 0.8, presolve=False, max_iter=5000)
    assert fast.bmse <= slow.bmse + 1e-10
    assert fast.bmse == pytest.approx(slow.bmse, rel=1e-6)


def test_convergence_failure_carries_best():
    with pytest.raises(ConvergenceFailure) as info:
        oqi_bound(12, 0.3, presolve=False, max_iter=2, restarts=1)
    assert info.value.best is not None
    assert info.value.best.iterations == 2


def test_curve_is_consistent():
    widths = [0.4, 0.6, 0.8]
    sols = oqi_curve(8, widths)
    assert [s.prior_width for s in sols] == widths
    for s in sols:
        assert s.bmse <= oqi_bound(8, s.prior_width).bmse + 1e-12


def test_validation():
    with pytest.raises(InvalidArgument):
        oqi_bound(0, 0.5)
    with pytest.raises(InvalidArgument):
        oqi_bound(4, -0.5)
    with pytest.raises(InvalidArgument):
        oqi_bound(4, 0.5, tol=0)
