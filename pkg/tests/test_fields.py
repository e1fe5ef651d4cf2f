"""Field abstractions: grids, conjugation, norms, moments, probes."""

import os

import numpy as np
import pytest

from rotstokes import fields as fl

RNG = np.random.default_rng(11)
J = np.array([[0.0, -1.0], [1.0, 0.0]])


def gauss_vec(x):
    e = np.exp(-np.sum(x**2, axis=-1))
    return np.stack([e, 0.0 * e], axis=-1)


# ------------------------------------------------------------------ grid


def test_grid_validation():
    with pytest.raises(ValueError):
        fl.PolarLogGrid(2.0, 1.0, 16, 16)
    with pytest.raises(ValueError):
        fl.PolarLogGrid(0.1, 1.0, 4, 16)


def test_grid_nodes_reproducible():
    g1 = fl.PolarLogGrid(0.1, 10.0, 33, 16)
    g2 = fl.PolarLogGrid(**g1.params())
    assert np.array_equal(g1.r, g2.r) and np.array_equal(g1.theta, g2.theta)
    assert g1 == g2


def test_grid_quadrature_gaussian():
    g = fl.PolarLogGrid(0.01, 12.0, 160, 32)
    pts, w = g.points(), g.weights()
    got = np.sum(w * np.exp(-np.sum(pts**2, axis=-1)))
    exact = np.pi * (np.exp(-g.r_min**2) - np.exp(-g.r_max**2))
    assert abs(got - exact) < 1e-6


# ------------------------------------------------------- sampled backend


def test_sampled_round_trip():
    def fn(x):
        e = np.exp(-0.1 * np.sum(x**2, axis=-1))
        return np.stack([np.sin(x[..., 0]) * e, np.cos(x[..., 1]) * e], axis=-1)

    g = fl.PolarLogGrid(0.1, 10.0, 160, 192)
    F = fl.SpatialField.from_function(fn, 1, g, decay=4.0)
    probe = RNG.uniform(-7, 7, size=(400, 2))
    probe = probe[np.hypot(probe[:, 0], probe[:, 1]) > 0.12]
    err = np.max(np.abs(F(probe) - fn(probe))) / np.max(np.abs(fn(probe)))
    assert err < 1e-6


def test_extrapolation_uses_decay_class_and_flags():
    def fn(x):
        r = np.hypot(x[..., 0], x[..., 1])
        return ((1.0 + r) ** -2.5)[..., None]

    g = fl.PolarLogGrid(0.1, 10.0, 64, 32)
    F = fl.SpatialField.from_function(fn, 0, g, decay=2.5)
    assert F.n_extrapolated == 0
    far = np.array([[40.0, 0.0]])
    got = F(far)[0, 0]
    assert F.n_extrapolated == 1
    assert abs(got - fn(far)[0, 0]) < 1e-6 * fn(far)[0, 0]


def test_extrapolation_without_decay_class_raises():
    g = fl.PolarLogGrid(0.1, 10.0, 64, 32)
    F = fl.SpatialField.from_function(lambda x: x, 1, g)
    with pytest.raises(ValueError):
        F(np.array([[20.0, 0.0]]))


def test_csv_round_trip(tmp_path):
    g = fl.PolarLogGrid(0.2, 5.0, 16, 16)
    F = fl.SpatialField.from_function(gauss_vec, 1, g, decay=9.0, name="g")
    p = os.path.join(tmp_path, "field.csv")
    F.to_csv(p)
    G = fl.SpatialField.from_csv(p)
    assert np.array_equal(G.samples, F.samples)
    assert G.rank == 1 and G.decay == 9.0 and G.grid == F.grid and G.name == "g"


# ------------------------------------------------------------ conjugation


def test_rotation_matrix_orthogonal():
    for ang in (0.0, 0.3, -2.0, 11.0):
        Q = fl.rotation(ang)
        assert np.allclose(Q.T @ Q, np.eye(2), atol=1e-15)
        assert abs(np.linalg.det(Q) - 1.0) < 1e-15


def test_conjugate_identity_at_t0():
    V = fl.SpatialField.analytic(gauss_vec, 1, decay=9.0)
    C = fl.rotate_conjugate(V, 0.0, 1.7)
    x = RNG.normal(size=(30, 2))
    assert np.allclose(C(x), V(x), atol=1e-15)


def test_conjugate_radial_equivariance():
    U = fl.SpatialField.analytic(
        lambda x: x * np.exp(-np.sum(x**2, axis=-1))[..., None], 1, decay=9.0
    )
    x = RNG.normal(size=(30, 2))
    for t in (0.3, 1.1, 4.0):
        assert np.allclose(fl.rotate_conjugate(U, t, 1.3)(x), U(x), atol=1e-14)


def test_conjugate_norm_preservation_and_inverse():
    def fn(x):
        return np.stack([x[..., 0] ** 2, np.sin(x[..., 1])], axis=-1)

    V = fl.SpatialField.analytic(fn, 1)
    x = RNG.normal(size=(40, 2))
    C = fl.rotate_conjugate(V, 0.7, 1.3)
    Q = fl.rotation(1.3 * 0.7)
    assert np.allclose(
        np.linalg.norm(C(x), axis=-1), np.linalg.norm(fn(x @ Q), axis=-1), atol=1e-14
    )
    back = fl.rotate_conjugate(C, 0.7, 1.3, inverse=True)
    assert np.allclose(back(x), V(x), atol=1e-13)


def test_conjugate_scalar_rejected():
    S = fl.SpatialField.analytic(lambda x: x[..., :1], 0)
    with pytest.raises(ValueError):
        fl.rotate_conjugate(S, 0.1, 1.0)


def test_conjugate_tensor_route():
    A = np.array([[1.0, 2.0], [-0.5, 0.3]])

    def fn(x):
        e = np.exp(-np.sum(x**2, axis=-1))
        return e[..., None] * A.reshape(4)

    G = fl.SpatialField.analytic(fn, 2, decay=9.0)
    C = fl.rotate_conjugate(G, 0.9, 1.0)
    x = np.array([[1.2, -0.4]])
    Q = fl.rotation(0.9)
    want = np.exp(-np.sum((x @ Q) ** 2)) * (Q @ A @ Q.T)
    assert np.allclose(C.as_matrix(x)[0], want, atol=1e-14)


def test_conjugation_average_of_gaussian_e1_vanishes():
    h0 = fl.SpatialField.analytic(gauss_vec, 1, decay=9.0)
    hb = fl.conjugation_average(h0)
    x = RNG.normal(size=(20, 2))
    assert np.max(np.abs(hb(x))) < 1e-14


def test_time_average():
    g = fl.PolarLogGrid(0.1, 5.0, 16, 16)
    base = fl.SpatialField.from_function(gauss_vec, 1, g, decay=9.0)
    n_t = 8
    slices = []
    for m in range(n_t):
        c = np.sin(2 * np.pi * m / n_t)
        slices.append(
            fl.SpatialField(1, grid=g, samples=base.samples * (1.0 + c), decay=9.0)
        )
    w = fl.TimePeriodicField(2.0, slices)
    avg = w.time_average()
    assert np.allclose(avg.samples, base.samples, atol=1e-15)
    with pytest.raises(ValueError):
        fl.TimePeriodicField(2.0, slices[:3])


# ---------------------------------------------------------------- norms


def test_weighted_norm_exact_cancellation():
    for log_flag in (False, True):
        def fn(x, log_flag=log_flag):
            r = np.hypot(x[..., 0], x[..., 1])
            v = (1.0 + r) ** -1.3
            if log_flag:
                v = v / np.log(np.e + r)
            return v[..., None]

        F = fl.SpatialField.analytic(fn, 0, decay=1.3)
        rep = fl.weighted_norm(F, 1.3, log_weight=log_flag)
        assert abs(rep.value - 1.0) < 1e-12


def test_weighted_norm_circular_profile():
    U = fl.SpatialField.analytic(
        lambda x: fl.perp(x) / np.sum(x**2, axis=-1)[..., None], 1
    )
    g = fl.PolarLogGrid(0.05, 100.0, 48, 32)
    rep = fl.weighted_norm(U, 1.0, grid=g)
    assert abs(rep.value - (1.0 + g.r_min) / g.r_min) < 1e-10
    assert abs(np.hypot(*rep.argmax) - g.r_min) < 1e-12


# -------------------------------------------------------------- moments


def test_moments_gaussian():
    f = fl.SpatialField.analytic(gauss_vec, 1, decay=9.0)
    m = fl.moments(f, fl.PolarLogGrid(1e-5, 15.0, 200, 64))
    assert abs(m.alpha[0] - np.pi) < 1e-9 and abs(m.alpha[1]) < 1e-15
    assert np.max(np.abs(m.beta)) < 1e-12
    assert abs(m.rot) < 1e-12
    assert m.tail_bound < 1e-20


def test_moments_divergence_warning():
    f = fl.SpatialField.analytic(gauss_vec, 1, decay=2.5)
    with pytest.warns(fl.MomentTailWarning):
        m = fl.moments(f, fl.PolarLogGrid(1e-4, 10.0, 64, 32))
    assert m.tail_bound == np.inf


def test_rotation_average_first_moment_identity():
    # averaging the conjugation over a full turn turns the outer moment into
    # (1/2)(mean dot moment) I + (1/2)(rotational moment) J
    def f0(x):
        e = np.exp(-np.sum((x - np.array([0.8, -0.3])) ** 2, axis=-1))
        return np.stack([1.3 * e, 0.4 * e], axis=-1)

    F = fl.SpatialField.analytic(f0, 1, decay=9.0)
    grid = fl.PolarLogGrid(1e-5, 20.0, 220, 96)
    m0 = fl.moments(F, grid)
    hb = fl.conjugation_average(F, n_angle=64)
    lhs = fl.moments(hb, grid).outer
    rhs = 0.5 * np.trace(m0.outer) * np.eye(2) + 0.5 * m0.rot * J
    assert np.max(np.abs(lhs - rhs)) < 1e-8


def test_rotation_average_tensor_identity():
    A = np.array([[0.7, -1.1], [0.4, 0.2]])

    def G(x):
        e = np.exp(-np.sum((x - np.array([0.5, 0.2])) ** 2, axis=-1))
        return e[..., None] * A.reshape(4)

    F = fl.SpatialField.analytic(G, 2, decay=9.0)
    grid = fl.PolarLogGrid(1e-5, 20.0, 220, 96)
    intG = fl.moments(F, grid).alpha
    Hb = fl.conjugation_average(F, n_angle=64)
    lhs = fl.moments(Hb, grid).alpha
    rhs = 0.5 * np.trace(intG) * np.eye(2) - 0.5 * (intG[0, 1] - intG[1, 0]) * J
    assert np.max(np.abs(lhs - rhs)) < 1e-8


def test_moments_invariant_under_adding_divergence():
    # alpha moments ignore div(T) for compactly supported T (FD divergence)
    def T(x):
        b = np.exp(-2.0 * np.sum((x - np.array([0.5, 0.0])) ** 2, axis=-1))
        return np.stack([b, 0.3 * b, -0.2 * b, 0.5 * b], axis=-1)

    h = 1e-5

    def divT(x):
        x = np.asarray(x, dtype=float)
        e0 = np.zeros(2); e0[0] = h
        e1 = np.zeros(2); e1[1] = h
        d0 = (T(x + e0) - T(x - e0)) / (2 * h)
        d1 = (T(x + e1) - T(x - e1)) / (2 * h)
        return np.stack(
            [d0[..., 0] + d1[..., 1], d0[..., 2] + d1[..., 3]], axis=-1
        )

    f = fl.SpatialField.analytic(gauss_vec, 1, decay=9.0)
    fpd = fl.SpatialField.analytic(lambda x: f(x) + divT(x), 1, decay=9.0)
    grid = fl.PolarLogGrid(1e-5, 14.0, 220, 64)
    a1 = fl.moments(f, grid).alpha
    a2 = fl.moments(fpd, grid).alpha
    assert np.max(np.abs(a1 - a2)) < 1e-8


# ------------------------------------------------------------ decay fit


def test_decay_fit_exact_homogeneity():
    U = fl.SpatialField.analytic(
        lambda x: fl.perp(x) / np.sum(x**2, axis=-1)[..., None], 1
    )
    fit = fl.decay_fit(U, (0.5, 50.0))
    assert abs(fit.exponent - 1.0) < 0.01


def test_decay_fit_algebraic():
    F = fl.SpatialField.analytic(
        lambda x: ((1.0 + np.hypot(x[..., 0], x[..., 1])) ** -2.3)[..., None], 0
    )
    fit = fl.decay_fit(F, (10.0, 1000.0))
    assert abs(fit.exponent - 2.3) < 0.05


def test_decay_fit_dominant_term():
    def fn(x):
        r = np.hypot(x[..., 0], x[..., 1])
        return (1.0 / r + 5.0 / r**2)[..., None]

    F = fl.SpatialField.analytic(fn, 0)
    fit = fl.decay_fit(F, (100.0, 10000.0))
    assert abs(fit.exponent - 1.0) < 0.02


def test_decay_fit_window_validation():
    F = fl.SpatialField.analytic(lambda x: x[..., :1], 0)
    with pytest.raises(ValueError):
        fl.decay_fit(F, (1.0, 5.0))


# ------------------------------------------------------ circle integrals


def test_circulation_and_flux_of_circular_profile():
    M = 4 * np.pi * 1.7
    U = fl.SpatialField.analytic(
        lambda x: (M / (4 * np.pi)) * fl.perp(x) / np.sum(x**2, axis=-1)[..., None], 1
    )
    vals = [fl.circulation(U, r) for r in (0.1, 1.0, 10.0)]
    assert np.max(np.abs(np.array(vals) - M / 2)) < 1e-10
    assert np.max(np.abs(np.array(vals) - vals[0])) < 1e-8  # r-independence
    fx = [fl.flux(U, r) for r in (0.1, 1.0, 10.0)]
    assert np.max(np.abs(fx)) < 1e-12


def test_flux_carrier_unit_flux():
    F = fl.SpatialField.analytic(
        lambda x: -x / (2 * np.pi * np.sum(x**2, axis=-1)[..., None]), 1
    )
    for r in (0.3, 3.0, 30.0):
        assert abs(fl.flux(F, r) - (-1.0)) < 1e-12
