import numpy as np
import pytest
from conftest import collective_full, dicke_isometry
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from varramsey.circuits import (
    CircuitParams,
    LayerAngles,
    css,
    expectation_jz,
    outcome_table,
    parameter_names,
    ramsey_state,
)
from varramsey.errors import InvalidArgument
from varramsey.spin import projections

shapes = st.sampled_from([(0, 0), (1, 0), (0, 1), (1, 1), (1, 2), (2, 1)])
seeds = st.integers(0, 2**31)


def random_params(shape, seed, form="canonical", twist=0.4):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-np.pi, np.pi, 3 * sum(shape))
    x[np.tile([True, True, False], sum(shape))] *= twist / np.pi
    return CircuitParams.from_vector(shape, x, form)


def full_space_probabilities(params, n, phase):
    """Canonical sequence built gate by gate on the 2^N qubit space."""
    j = {a: collective_full(a, n) for a in "xyz"}
    rot = lambda a, t: expm(-1j * t * j[a])
    tw = lambda a, t: expm(-1j * t * j[a] @ j[a])
    psi = np.zeros(2**n, dtype=complex)
    psi[-1] = 1.0  # all spins down
    psi = rot("y", np.pi / 2) @ psi
    for layer in params.entangling:
        psi = rot("x", layer.rotation) @ tw("x", layer.twist_2) @ tw("z", layer.twist_1) @ psi
    psi = rot("z", phase) @ psi
    for layer in params.decoding:
        psi = tw("z", layer.twist_1) @ tw("x", layer.twist_2) @ rot("x", layer.rotation) @ psi
    psi = rot("x", np.pi / 2) @ psi
    amps = dicke_isometry(n).conj().T @ psi
    return np.abs(amps) ** 2


@pytest.mark.parametrize("n", [1, 2, 3, 4])
@given(shape=shapes, seed=seeds, phase=st.floats(-3, 3))
def test_matches_tensor_product_simulation(n, shape, seed, phase):
    params = random_params(shape, seed)
    expected = full_space_probabilities(params, n, phase)
    got = outcome_table(params, n, [phase]).probs[0]
    assert np.abs(got - expected).max() < 1e-9


def test_single_spin_closed_form():
    phases = np.linspace(-np.pi, np.pi, 41)
    table = outcome_table(css(), 1, phases)
    # Bloch vector: -z -> -x (R_y) -> (-cos, -sin, 0) (R_z) -> (-cos, 0, -sin) (R_x)
    assert np.allclose(table.probs[:, 1], (1 - np.sin(phases)) / 2, atol=1e-12)
    assert np.allclose(table.mean_m(), -np.sin(phases) / 2, atol=1e-12)


def test_single_spin_at_quarter_turn_is_deterministic():
    probs = outcome_table(css(), 1, [np.pi / 2]).probs[0]
    assert probs[0] > 1 - 1e-12


@given(shape=shapes, seed=seeds, n=st.integers(1, 14))
def test_experimental_form_mirrors_phase(shape, seed, n):
    x = random_params(shape, seed).to_vector()
    phases = np.linspace(-2, 2, 9)
    can = outcome_table(CircuitParams.from_vector(shape, x, "canonical"), n, -phases).probs[::-1]
    exp = outcome_table(CircuitParams.from_vector(shape, x, "experimental"), n, phases).probs
    assert np.abs(can - exp).max() < 1e-10


@given(shape=shapes, seed=seeds, n=st.integers(1, 14), form=st.sampled_from(["canonical", "experimental"]))
def test_outcome_mirror_symmetry(shape, seed, n, form):
    params = random_params(shape, seed, form)
    phases = np.linspace(0.1, 2.5, 7)
    plus = outcome_table(params, n, phases).probs
    minus = outcome_table(params, n, -phases).probs[::-1]
    assert np.abs(minus - plus[:, ::-1]).max() < 1e-10


@pytest.mark.parametrize("n", [5, 6, 11, 12])
def test_angle_periodicity(n, rng):
    shape = (1, 2)
    params = random_params(shape, 7)
    base = outcome_table(params, n, [0.3, -0.8]).probs
    twist_period = np.pi if n % 2 else 2 * np.pi
    for k in range(params.n_params):
        x = params.to_vector()
        x[k] += twist_period if params.is_twist()[k] else 2 * np.pi
        shifted = outcome_table(params.with_vector(x), n, [0.3, -0.8]).probs
        assert np.abs(shifted - base).max() < 1e-9


def test_even_n_twist_half_period_is_not_a_symmetry():
    params = CircuitParams.from_vector((1, 0), [0.1, 0.05, 0.4])
    x = params.to_vector()
    x[0] += np.pi
    a = outcome_table(params, 6, [0.5]).probs
    b = outcome_table(params.with_vector(x), 6, [0.5]).probs
    assert np.abs(a - b).max() > 1e-3


@given(shape=shapes, seed=seeds, n=st.integers(1, 20))
def test_rows_are_distributions(shape, seed, n):
    table = outcome_table(random_params(shape, seed), n, np.linspace(-4, 4, 5))
    assert np.allclose(table.probs.sum(axis=1), 1, atol=1e-12)
    assert table.probs.min() >= 0


def test_vector_round_trip_and_names():
    x = np.arange(9.0) / 10
    params = CircuitParams.from_vector((1, 2), x, "experimental")
    assert np.array_equal(params.to_vector(), x)
    assert params.decoding[1] == LayerAngles(0.6, 0.7, 0.8)
    assert parameter_names((1, 1)) == ["en1.Tz", "en1.Tx", "en1.Rx", "de1.Tz", "de1.Tx", "de1.Rx"]
    assert params.parameter_names()[0] == "en1.Ty"
    assert params.with_form("canonical").form == "canonical"


def test_state_and_expectation_agree():
    params = random_params((1, 1), 3)
    state = ramsey_state(params, 8, 0.4)
    assert np.isclose(state.probabilities @ projections(8), expectation_jz(params, 8, 0.4))


def test_validation():
    with pytest.raises(InvalidArgument):
        CircuitParams(1, 0, entangling=((0, 0, 0), (0, 0, 0)))
    with pytest.raises(InvalidArgument):
        CircuitParams(form="lab")
    with pytest.raises(InvalidArgument):
        CircuitParams.from_vector((1, 1), np.zeros(5))
    with pytest.raises(InvalidArgument):
        outcome_table(css(), 0, [0.0])
    with pytest.raises(InvalidArgument):
        outcome_table(css(), 3, [np.inf])
