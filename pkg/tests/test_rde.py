import numpy as np
import pytest

from roughmag import matops, rde
from roughmag.errors import (DimensionMismatch, SingularSystem, StepRejected,
                             UnsupportedRepresentation)
from roughmag.homogenize import ExperimentConfig
from roughmag.ousim import GridPath, ModelParams

from conftest import J2, example_M

E12 = np.array([[0.0, 1.0], [0.0, 0.0]])
E21 = E12.T


def _linear_set(*mats, drift=None):
    e = mats[0].shape[0]
    V0 = rde.PolyField.linear(np.zeros((e, e)) if drift is None else drift)
    return rde.VectorFieldSet(V0, tuple(rde.PolyField.linear(A) for A in mats))


def test_polyfield_evaluation_and_jacobian():
    g = np.random.default_rng(0)
    c0, c1, c2 = g.standard_normal(3), g.standard_normal((3, 3)), g.standard_normal((3, 3, 3))
    f = rde.PolyField(c0, c1, c2)
    y = g.standard_normal(3)
    assert np.allclose(f(y), c0 + c1 @ y + np.einsum("ijk,j,k->i", c2, y, y))
    h = 1e-6
    fd = np.stack([(f(y + h * e) - f(y - h * e)) / (2 * h) for e in np.eye(3)], axis=1)
    assert np.allclose(f.jacobian(y), fd, atol=1e-8)
    assert f.representation == "polynomial-degree-2"
    assert rde.PolyField(c0, c1, np.zeros((3, 3, 3))).representation == "affine"
    with pytest.raises(DimensionMismatch):
        rde.PolyField(c0, np.eye(2))


@pytest.mark.parametrize("M, Minv", [
    (np.eye(2), np.eye(2)),
    (2 * np.eye(2), 0.5 * np.eye(2)),
    (np.eye(2) - J2, 0.5 * (np.eye(2) + J2)),
])
def test_tilde_fields(M, Minv):
    A = [np.array([[1.0, 2.0], [0.0, 1.0]]), np.array([[0.0, -1.0], [3.0, 0.5]])]
    vt = rde.tilde_fields(_linear_set(*A), M)
    for j in range(2):
        expect = sum(A[i] * Minv[i, j] for i in range(2))
        assert np.allclose(vt.V[j].c1, expect, atol=1e-14)


def test_tilde_fields_errors():
    with pytest.raises(DimensionMismatch):
        rde.tilde_fields(_linear_set(E12, E21), np.eye(3))
    with pytest.raises(SingularSystem):
        rde.tilde_fields(_linear_set(E12, E21), np.array([[1.0, 1.0], [1.0, 1.0]]))


def test_drift_with_constant_fields_is_v0():
    V0 = rde.PolyField.constant([1.0, -2.0])
    vf = rde.VectorFieldSet(V0, (rde.PolyField.constant([1.0, 0.0]),
                                 rde.PolyField.constant([0.0, 1.0])))
    d = rde.corrected_drift(vf, example_M(1.5))
    y = np.array([[0.3, 0.4], [5.0, -1.0]])
    assert np.allclose(d(y), [[1.0, -2.0], [1.0, -2.0]])


def test_linear_bracket_formula():
    g = np.random.default_rng(1)
    A, B = g.standard_normal((2, 3, 3))
    U, V = rde.PolyField.linear(A), rde.PolyField.linear(B)
    y = g.standard_normal(3)
    assert np.allclose(rde.lie_bracket(U, V, y), (B @ A - A @ B) @ y)
    assert np.allclose(rde.lie_bracket(U, V, y), -rde.lie_bracket(V, U, y))


def test_area_drift_sign_from_taylor_expansion():
    # with a level-2 shift G the step expansion y + sum A_j A_i y XX^{ij} gives the drift
    # sum_{ij} G_ij A_j A_i y; for the example fields this is diag(-1, 1) y / 2 at M = I - J
    M = example_M(1.0)
    vf = rde.example_fields(M)
    vt = rde.tilde_fields(vf, M)
    A = [f.c1 for f in vt.V]
    G = matops.area_correction_W(M)
    expect = sum(G[i, j] * A[j] @ A[i] for i in range(2) for j in range(2))
    d = rde.corrected_drift(vf, M)
    Ad, b = d.as_affine()
    ito = 0.5 * sum(a @ a for a in A)
    assert np.allclose(Ad, ito + expect, atol=1e-13) and np.allclose(b, 0)
    assert np.allclose(Ad, np.diag([-0.5, 0.5]), atol=1e-13)
    plain, _ = rde.corrected_drift(vf, M, corrected=False).as_affine()
    assert np.allclose(plain, 0, atol=1e-13)


def test_symmetric_M_has_no_area_drift():
    M = np.array([[2.0, 0.5], [0.5, 1.0]])
    vf = _linear_set(E12, E21)
    a, _ = rde.corrected_drift(vf, M).as_affine()
    b, _ = rde.corrected_drift(vf, M, corrected=False).as_affine()
    assert np.allclose(a, b, atol=1e-13)


def test_driven_ode_area_from_small_loops():
    # loops of radius r at frequency k carry area r^2 k / 2 per unit time; linear fields
    # E12, E21 then feel the drift g (E21 E12 - E12 E21) = g diag(-1, 1)
    g_rate, r = 0.5, 0.02
    k = 2 * g_rate / r**2
    t = np.linspace(0, 1, 60001)
    X = GridPath(t, np.stack([r * (np.cos(k * t) - 1), r * np.sin(k * t)], -1))
    y = rde.solve_driven_ode(_linear_set(E12, E21), X, [1.0, 1.0], tol=None).values[-1]
    assert np.allclose(y, [np.exp(-g_rate), np.exp(g_rate)], rtol=0.05)


def test_heun_linear_drift_matches_expm():
    A = np.array([[-1.0, 2.0], [-2.0, -0.5]])
    t = np.linspace(0, 1, 1001)
    X = GridPath(t, np.zeros((1001, 1)))
    vf = rde.VectorFieldSet(rde.PolyField.linear(A), (rde.PolyField.linear(np.zeros((2, 2))),))
    y = rde.solve_driven_ode(vf, X, [1.0, 0.5], tol=1e-9).values[-1]
    assert np.allclose(y, matops.expm(A) @ [1.0, 0.5], atol=1e-8)


def test_scalar_linear_driver_solved_exactly():
    # dy = s y dX has y_T = y_0 exp(s X_T) for any continuous driver
    g = np.random.default_rng(4)
    t = np.linspace(0, 1, 2001)
    X = GridPath(t, np.concatenate([[0.0], np.cumsum(g.standard_normal(2000) * 0.02)])[:, None])
    vf = rde.VectorFieldSet(rde.PolyField.linear([[0.0]]), (rde.PolyField.linear([[0.7]]),))
    y = rde.solve_driven_ode(vf, X, [2.0], tol=1e-6).values
    assert np.allclose(y[:, 0], 2.0 * np.exp(0.7 * X.values[:, 0]), rtol=1e-4)


def test_zero_fields_keep_initial_value():
    t = np.linspace(0, 1, 11)
    X = GridPath(t, np.random.default_rng(0).standard_normal((11, 2)))
    vf = _linear_set(np.zeros((3, 3)), np.zeros((3, 3)))
    y = rde.solve_driven_ode(vf, X, [1.0, 2.0, 3.0]).values
    assert np.all(y == [1.0, 2.0, 3.0])


def test_affine_mean_scalar_closed_form():
    # dY = s Y o dX, X -> W / m: Ito drift s^2 / (2 m^2) Y, mean y0 exp(s^2 T / (2 m^2))
    vf = rde.VectorFieldSet(rde.PolyField.linear([[0.0]]), (rde.PolyField.linear([[0.6]]),))
    d = rde.corrected_drift(vf, [[2.0]])
    assert rde.affine_mean(d, [1.5], 2.0)[0] == pytest.approx(1.5 * np.exp(0.36 / 8 * 2.0))


def test_euler_maruyama_mean_against_affine_mean():
    g = np.random.default_rng(8)
    M = example_M(1.0)
    vf = rde.example_fields(M)
    vt = rde.tilde_fields(vf, M)
    d = rde.corrected_drift(vf, M)
    P, N = 20000, 200
    t = np.linspace(0, 1, N + 1)
    W = GridPath(t, np.concatenate([np.zeros((P, 1, 2)),
                                    np.cumsum(g.standard_normal((P, N, 2)) * np.sqrt(1 / N), 1)], 1))
    y = rde.solve_limit_sde(vt, d, W, [1.0, 1.0]).values[:, -1]
    m, se = y.mean(0), y.std(0) / np.sqrt(P)
    # Euler bias is O(1/N); allow it on top of 4 SE
    assert np.all(np.abs(m - rde.affine_mean(d, [1.0, 1.0], 1.0)) < 4 * se + 0.02)


def test_step_rejected_on_blow_up():
    c2 = np.zeros((1, 1, 1))
    c2[0, 0, 0] = 1.0
    vf = rde.VectorFieldSet(rde.PolyField([0.0], [[0.0]], c2), (rde.PolyField.linear([[0.0]]),))
    t = np.linspace(0, 3, 4)
    with pytest.raises(StepRejected):
        rde.solve_driven_ode(vf, GridPath(t, np.zeros((4, 1))), [1.0], tol=1e-6)


def test_unsupported_representations():
    class Opaque:
        e = 2

        def __call__(self, y):
            return y

    vf = rde.VectorFieldSet(Opaque(), (Opaque(), Opaque()))
    with pytest.raises(UnsupportedRepresentation):
        rde.corrected_drift(vf, np.eye(2))
    c2 = np.zeros((2, 2, 2))
    c2[0, 1, 1] = 1.0
    quad = rde.VectorFieldSet(rde.PolyField([0.0, 0.0], np.zeros((2, 2)), c2),
                              (rde.PolyField.linear(E12), rde.PolyField.linear(E21)))
    with pytest.raises(UnsupportedRepresentation):
        rde.corrected_drift(quad, np.eye(2)).as_affine()


def test_dimension_mismatch_driver():
    t = np.linspace(0, 1, 3)
    with pytest.raises(DimensionMismatch):
        rde.solve_driven_ode(_linear_set(E12, E21), GridPath(t, np.zeros((3, 3))), [1.0, 1.0])


def test_rde_experiment_smoke():
    p = ModelParams.from_eps(example_M(1.0), 0.3)
    cfg = ExperimentConfig(p, eps_list=(0.3,), n_paths=300, grid_steps=16, seed=3)
    rep = rde.rde_experiment(cfg)
    assert set(rep.criteria) == {"matches_corrected_within_3se", "differs_from_uncorrected_3se"}
    assert np.allclose(rep.details["exact_corrected_mean"], [np.exp(-0.5), np.exp(0.5)])
    assert len(rep.details["z_corrected"]) == 2
