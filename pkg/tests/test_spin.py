import numpy as np
import pytest
from conftest import collective_full, dicke_isometry
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from varramsey.errors import InvalidArgument
from varramsey.spin import (
    DickeVector,
    apply_rotation,
    apply_twist,
    coherent_state,
    collective_operator,
    gate_matrix,
    projections,
    spectral_cache,
    spin_moments,
)

angles = st.floats(-2 * np.pi, 2 * np.pi, allow_nan=False)
sizes = st.integers(1, 24)
axes = st.sampled_from("xyz")


def taylor_expm(mat, terms=80):
    """Plain power series, independent of any eigendecomposition."""
    out = np.eye(mat.shape[0], dtype=complex)
    term = np.eye(mat.shape[0], dtype=complex)
    for k in range(1, terms):
        term = term @ mat / k
        out = out + term
    return out


@pytest.mark.parametrize("n", [1, 2, 3, 5, 12, 26])
def test_commutators(n):
    jx, jy, jz = (collective_operator(a, n).matrix for a in "xyz")
    for a, b, c in ((jx, jy, jz), (jy, jz, jx), (jz, jx, jy)):
        assert np.abs(a @ b - b @ a - 1j * c).max() < 1e-10
    casimir = jx @ jx + jy @ jy + jz @ jz
    j = n / 2
    assert np.allclose(casimir, j * (j + 1) * np.eye(n + 1), atol=1e-10)


def test_projection_order():
    assert np.array_equal(projections(3), [-1.5, -0.5, 0.5, 1.5])
    assert np.array_equal(np.diag(collective_operator("z", 4).matrix).real, projections(4))


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_operators_match_tensor_product(n):
    iso = dicke_isometry(n)
    for axis in "xyz":
        reduced = iso.conj().T @ collective_full(axis, n) @ iso
        assert np.abs(reduced - collective_operator(axis, n).matrix).max() < 1e-12


@pytest.mark.parametrize("n", [1, 2, 3, 4])
@given(angle=angles, axis=axes)
def test_gates_match_tensor_product(n, angle, axis):
    iso = dicke_isometry(n)
    full = collective_full(axis, n)
    rot = iso.conj().T @ expm(-1j * angle * full) @ iso
    twist = iso.conj().T @ expm(-1j * angle * full @ full) @ iso
    assert np.abs(gate_matrix("R", axis, angle, n) - rot).max() < 1e-9
    assert np.abs(gate_matrix("T", axis, angle, n) - twist).max() < 1e-9


@given(n=st.integers(1, 10), angle=st.floats(-3, 3), axis=axes)
def test_gates_match_power_series(n, angle, axis):
    j = collective_operator(axis, n).matrix
    assert np.abs(gate_matrix("R", axis, angle, n) - taylor_expm(-1j * angle * j)).max() < 1e-10
    small = angle / n  # keep the series well conditioned
    assert np.abs(gate_matrix("T", axis, small, n) - taylor_expm(-1j * small * j @ j)).max() < 1e-10


@given(n=sizes, a=angles, b=angles, axis=axes)
def test_unitarity_and_group_law(n, a, b, axis):
    eye = np.eye(n + 1)
    for kind in "RT":
        u = gate_matrix(kind, axis, a, n)
        assert np.abs(u.conj().T @ u - eye).max() < 1e-12
        composed = gate_matrix(kind, axis, a, n) @ gate_matrix(kind, axis, b, n)
        assert np.abs(composed - gate_matrix(kind, axis, a + b, n)).max() < 1e-10


@given(n=sizes, a=angles, axis=axes, seed=st.integers(0, 2**31))
def test_state_gates_keep_norm(n, a, axis, seed):
    rng = np.random.default_rng(seed)
    amps = rng.normal(size=n + 1) + 1j * rng.normal(size=n + 1)
    state = DickeVector(n, amps / np.linalg.norm(amps))
    out = apply_twist(apply_rotation(state, axis, a), axis, a / 3)
    assert isinstance(out, DickeVector)
    assert abs(np.vdot(out.amplitudes, out.amplitudes).real - 1) < 1e-12


def test_batched_rotation_matches_columns(rng):
    n = 6
    batch = rng.normal(size=(n + 1, 4)) + 0j
    out = apply_rotation(batch, "x", 0.7)
    for k in range(4):
        assert np.allclose(out[:, k], apply_rotation(batch[:, k], "x", 0.7))


def test_spectral_cache_eigenvalues_are_half_integers():
    cache = spectral_cache("x", 7)
    assert np.allclose(np.sort(cache.eigenvalues), projections(7))
    assert np.allclose(cache.reconstruct(), collective_operator("x", 7).matrix, atol=1e-12)


@pytest.mark.parametrize("n", [1, 4, 9])
def test_coherent_state_points_along_axis(n):
    mean, cov = spin_moments(coherent_state(n, np.pi / 2, 0.0))
    assert np.allclose(mean, [n / 2, 0, 0], atol=1e-12)
    # a coherent state has variance N/4 transverse to its mean spin
    assert np.allclose([cov[1, 1], cov[2, 2]], [n / 4, n / 4], atol=1e-12)
    down = coherent_state(n, np.pi, 0.0)
    assert np.allclose(down.amplitudes, DickeVector.spin_down(n).amplitudes, atol=1e-12)


def test_validation():
    with pytest.raises(InvalidArgument):
        DickeVector(2, [1, 1, 0])
    with pytest.raises(InvalidArgument):
        DickeVector(2, [1, 0])
    with pytest.raises(InvalidArgument):
        DickeVector.basis(3, 1.0)
    with pytest.raises(InvalidArgument):
        projections(0)
    with pytest.raises(InvalidArgument):
        apply_rotation(DickeVector.spin_down(2), "w", 0.1)
    with pytest.raises(InvalidArgument):
        gate_matrix("Q", "x", 0.1, 2)
    with pytest.raises(InvalidArgument):
        apply_rotation(DickeVector.spin_down(2), "x", np.nan)
