"""Convolution engine: steady/periodic kernels, plans, expansion remainder."""

import warnings

import numpy as np
import pytest

from rotstokes import fields as fl
from rotstokes import kernels as kn
from rotstokes import manufactured as mf
from rotstokes import quad as qd

RNG = np.random.default_rng(23)


def gauss_vec(x, scale=1.5, amps=(1.0, -0.4)):
    prof = np.exp(-np.sum(x**2, axis=-1) / scale**2)
    return prof[..., None] * np.asarray(amps, dtype=float)


def analytic_vec(fn, decay=50.0, log_weight=True):
    return fl.SpatialField.analytic(fn, 1, decay=decay, log_weight=log_weight)


# ------------------------------------------------------------------ plans


def test_plan_rejects_targets_outside_source_annulus():
    src = fl.PolarLogGrid(1e-3, 20.0, 64, 48)
    with pytest.raises(ValueError):
        qd.ConvolutionPlan(source=src, targets=fl.PolarLogGrid(1e-3, 10.0, 8, 8))
    with pytest.raises(ValueError):
        qd.ConvolutionPlan(source=src, targets=fl.PolarLogGrid(1.0, 25.0, 8, 8))
    with pytest.raises(ValueError):
        qd.ConvolutionPlan(source=src, targets=fl.PolarLogGrid(1.0, 10.0, 8, 8),
                           patch_cells=0.0)


def test_plan_patch_radius_stays_clear_of_inner_boundary():
    src = fl.PolarLogGrid(0.05, 30.0, 48, 32)
    plan = qd.ConvolutionPlan.offset(src, 12, 8, 0.1, 25.0, patch_cells=50.0)
    r = np.exp(np.linspace(np.log(0.1), np.log(25.0), 200))
    rho = plan.patch_radius(r)
    assert np.all(rho < 0.5 * (r - src.r_min))
    assert np.all(rho <= 0.45 * r + 1e-15)
    assert np.all(rho > 0)


def test_plan_reproducible_from_params():
    src = fl.PolarLogGrid(1e-3, 20.0, 64, 48)
    plan = qd.ConvolutionPlan.offset(src, 12, 8, 2.0, 10.0, n_patch_radial=9)
    p = plan.params()
    again = qd.ConvolutionPlan(
        source=fl.PolarLogGrid(**p["source"]),
        targets=fl.PolarLogGrid(**p["targets"]),
        patch_cells=p["patch_cells"], n_patch_radial=p["n_patch_radial"],
        n_patch_panels=p["n_patch_panels"], n_patch_angular=p["n_patch_angular"],
        tol=p["tol"])
    assert again.params() == p
    r = np.array([2.5, 5.0, 9.0])
    assert np.array_equal(plan.patch_radius(r), again.patch_radius(r))


# ------------------------------------------------- steady convolution


def test_manufactured_solution_recovered():
    # f = -lap(v) + grad(q) for a compactly supported divergence-free v;
    # the convolution must reproduce v itself in the annulus [2, 20].
    bump = mf.StreamBump(center=(1.0, -0.5), scale=2.0, amp=1.0)
    pres = mf.PressureBump(center=(-0.8, 0.3), scale=1.5, amp=0.7)
    f = mf.stokes_forcing(bump, pres)
    src = fl.PolarLogGrid(3e-4, 40.0, 160, 128)
    plan = qd.ConvolutionPlan.offset(src, 24, 16, 2.0, 20.0)
    u = qd.convolve_stokeslet(f, plan)
    pts = plan.targets.points().reshape(-1, 2)
    truth = bump.velocity(pts)
    err = np.max(np.abs(u(pts) - truth)) / np.max(np.abs(truth))
    assert err < 1e-4


def test_linearity_is_exact():
    fa = analytic_vec(lambda x: gauss_vec(x, 1.2, (1.0, 0.3)))
    fb = analytic_vec(lambda x: gauss_vec(x, 1.8, (-0.5, 1.1)))
    fc = analytic_vec(lambda x: 2.5 * gauss_vec(x, 1.2, (1.0, 0.3))
                      - 1.25 * gauss_vec(x, 1.8, (-0.5, 1.1)))
    src = fl.PolarLogGrid(1e-3, 20.0, 64, 48)
    plan = qd.ConvolutionPlan.offset(src, 10, 8, 2.0, 10.0)
    ua, ub, uc = (qd.convolve_stokeslet(f, plan) for f in (fa, fb, fc))
    lhs = uc.samples
    rhs = 2.5 * ua.samples - 1.25 * ub.samples
    assert np.max(np.abs(lhs - rhs)) < 1e-12 * np.max(np.abs(lhs))


def test_translation_equivariance():
    shift = np.array([0.3, -0.2])
    f0 = analytic_vec(lambda x: gauss_vec(x, 1.5))
    fs = analytic_vec(lambda x: gauss_vec(x - shift, 1.5))
    src = fl.PolarLogGrid(1e-3, 30.0, 128, 96)
    plan = qd.ConvolutionPlan.offset(src, 16, 12, 2.0, 15.0)
    u0 = qd.convolve_stokeslet(f0, plan)
    us = qd.convolve_stokeslet(fs, plan)
    th = np.linspace(0, 2 * np.pi, 12, endpoint=False)
    ring = 5.0 * np.stack([np.cos(th), np.sin(th)], axis=-1)
    diff = us(ring + shift) - u0(ring)
    assert np.max(np.abs(diff)) < 2e-3 * np.max(np.abs(u0(ring)))


def test_mirror_symmetry_of_axis_aligned_forcing():
    # Radial profile in the first component only: u1 even and u2 odd
    # across the x2 = 0 axis, exactly at the discrete level.
    f = analytic_vec(lambda x: np.stack(
        [np.exp(-np.sum(x**2, axis=-1)), np.zeros(x.shape[:-1])], axis=-1))
    src = fl.PolarLogGrid(1e-3, 20.0, 64, 48)
    plan = qd.ConvolutionPlan.offset(src, 10, 12, 2.0, 10.0)
    u = qd.convolve_stokeslet(f, plan)
    s = u.samples
    n = plan.targets.n_theta
    mirror = (-np.arange(n)) % n
    assert np.allclose(s[:, :, 0], s[:, mirror, 0], atol=1e-12)
    assert np.allclose(s[:, :, 1], -s[:, mirror, 1], atol=1e-12)


def test_decay_class_gates():
    src = fl.PolarLogGrid(1e-3, 20.0, 64, 48)
    plan = qd.ConvolutionPlan.offset(src, 10, 8, 2.0, 10.0)
    weak = fl.SpatialField.analytic(gauss_vec, 1, decay=2.5)
    with pytest.raises(qd.DecayClassError):
        qd.convolve_stokeslet(weak, plan)
    weak2 = fl.SpatialField.analytic(
        lambda x: np.repeat(gauss_vec(x), 2, axis=-1), 2, decay=1.5)
    with pytest.raises(qd.DecayClassError):
        qd.convolve_stokeslet_grad(weak2, plan)
    borderline = fl.SpatialField.analytic(gauss_vec, 1, decay=3.1, log_weight=True)
    with pytest.raises(qd.DecayClassError):
        qd.expansion_remainder(f=borderline, delta=0.3, plan=plan)


def test_log_hypothesis_warning_and_report_flag():
    src = fl.PolarLogGrid(1e-3, 20.0, 64, 48)
    plan = qd.ConvolutionPlan.offset(src, 10, 8, 2.0, 10.0)
    plain = fl.SpatialField.analytic(gauss_vec, 1, decay=50.0, log_weight=False)
    with pytest.warns(qd.QuadratureBudgetWarning):
        _, rep = qd.convolve_stokeslet(plain, plan, report=True)
    assert not rep.certified_log_hypothesis
    certified = analytic_vec(gauss_vec)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        _, rep = qd.convolve_stokeslet(certified, plan, report=True)
    assert rep.certified_log_hypothesis


def test_grad_convolution_matches_divergence_route():
    # Independent oracle: apply the gradient kernel to F, and the plain
    # kernel to div F computed analytically; integration by parts says equal.
    F, divF = mf.tensor_bump(center=(0.0, 0.0), scale=2.0,
                             matrix=np.array([[1.0, -0.4], [0.7, 0.3]]))
    src = fl.PolarLogGrid(3e-4, 30.0, 256, 192)
    plan = qd.ConvolutionPlan.offset(src, 10, 8, 3.0, 12.0)
    a = qd.convolve_stokeslet_grad(F, plan)
    b = qd.convolve_stokeslet(divF, plan)
    pts = plan.targets.points().reshape(-1, 2)
    diff = np.max(np.abs(a(pts) - b(pts))) / np.max(np.abs(b(pts)))
    assert diff < 1e-6


def test_grad_convolution_zero_tensor():
    zero = fl.SpatialField.analytic(
        lambda x: np.zeros(x.shape[:-1] + (4,)), 2, decay=10.0, log_weight=True)
    src = fl.PolarLogGrid(1e-3, 20.0, 64, 48)
    plan = qd.ConvolutionPlan.offset(src, 10, 8, 2.0, 10.0)
    u = qd.convolve_stokeslet_grad(zero, plan)
    assert np.array_equal(u.samples, np.zeros_like(u.samples))


def test_quadrature_convergence_order():
    # Halving both grid spacings must cut the manufactured error by >= 4x.
    bump = mf.StreamBump(center=(0.0, 0.0), scale=2.0, amp=1.0)
    pres = mf.PressureBump(center=(0.0, 0.0), scale=1.5, amp=0.7)
    f = mf.stokes_forcing(bump, pres)
    errs = []
    for nr, nt, kw in [
        (80, 64, dict(n_patch_radial=6, n_patch_panels=3, n_patch_angular=12)),
        (160, 128, {}),
    ]:
        src = fl.PolarLogGrid(3e-4, 40.0, nr, nt)
        plan = qd.ConvolutionPlan.offset(src, 12, 12, 2.0, 20.0, **kw)
        u = qd.convolve_stokeslet(f, plan)
        pts = plan.targets.points().reshape(-1, 2)
        truth = bump.velocity(pts)
        errs.append(np.max(np.abs(u(pts) - truth)) / np.max(np.abs(truth)))
    assert errs[0] / errs[1] >= 4.0


# ------------------------------------------------- expansion remainder


def _remainder_setup(n_r, n_theta):
    f = analytic_vec(lambda x: gauss_vec(x, 1.5, (1.0, -0.4)))
    src = fl.PolarLogGrid(3e-4, 40.0, n_r, n_theta)
    plan = qd.ConvolutionPlan.offset(src, 20, 12, 2.0, 20.0)
    return f, plan


def test_remainder_sup_finite_and_grid_stable():
    f, plan = _remainder_setup(128, 96)
    _, _, sup = qd.expansion_remainder(f=f, delta=0.3, plan=plan)
    f2, plan2 = _remainder_setup(192, 144)
    _, _, sup2 = qd.expansion_remainder(f=f2, delta=0.3, plan=plan2)
    assert np.isfinite(sup.value) and sup.value > 0
    assert abs(sup.value - sup2.value) < 0.05 * sup2.value
    assert sup.certified_log_hypothesis


def test_remainder_bounds_leading_term_error_pointwise():
    f, plan = _remainder_setup(128, 96)
    leading, rem, sup = qd.expansion_remainder(f=f, delta=0.3, plan=plan)
    pts = plan.targets.points().reshape(-1, 2)
    r = np.hypot(pts[:, 0], pts[:, 1])
    sel = r >= np.e
    conv = qd.convolve_stokeslet(f, plan)
    lead = np.einsum("pil,l->pi", kn.stokeslet(pts), leading["alpha"])
    lead += np.einsum("pilj,lj->pi", kn.stokeslet_grad(pts),
                      leading["beta"] + leading["tensor_mean"])
    gap = np.hypot(*(conv(pts) - lead)[sel].T)
    assert np.all(gap <= sup.value * r[sel] ** (-1.3) * (1 + 1e-12))
    assert np.max(np.abs(rem(pts)[sel] - (conv(pts) - lead)[sel])) < 1e-12


def test_remainder_moment_free_forcing():
    # Odd-in-both-coordinates forcing: all printed moments vanish and the
    # convolution itself already decays faster than 1 + delta.
    def odd(x):
        prof = x[..., 0] * x[..., 1] * np.exp(-np.sum(x**2, axis=-1) / 2.25)
        return np.stack([prof, np.zeros_like(prof)], axis=-1)

    f = analytic_vec(odd)
    src = fl.PolarLogGrid(3e-4, 40.0, 128, 96)
    plan = qd.ConvolutionPlan.offset(src, 22, 12, 2.0, 26.0)
    leading, rem, _ = qd.expansion_remainder(f=f, delta=0.3, plan=plan)
    assert np.max(np.abs(leading["alpha"])) < 1e-12
    assert np.max(np.abs(leading["beta"])) < 1e-12
    fit = fl.decay_fit(rem, (2.3, 24.0))
    assert fit.exponent >= 1.3


def test_remainder_zero_forcing():
    zero = fl.SpatialField.analytic(
        lambda x: np.zeros_like(x), 1, decay=10.0, log_weight=True)
    src = fl.PolarLogGrid(1e-3, 20.0, 64, 48)
    plan = qd.ConvolutionPlan.offset(src, 10, 8, 3.0, 10.0)
    leading, rem, sup = qd.expansion_remainder(f=zero, delta=0.3, plan=plan)
    assert np.all(leading["alpha"] == 0) and np.all(leading["beta"] == 0)
    assert np.array_equal(rem.samples, np.zeros_like(rem.samples))
    assert sup.value == 0.0


# ------------------------------------------------- periodic building blocks


def test_band_kernel_decomposition_identity():
    # The k-th time-frequency kernel splits exactly into the sawtooth
    # spatial factor plus the scaled Bessel residual.
    pts = RNG.uniform(-3, 3, size=(40, 2))
    pts = pts[np.hypot(pts[:, 0], pts[:, 1]) > 0.2]
    for k, T in [(1, 1.0), (2, 0.9), (3, 4.0)]:
        full = kn.resolvent_kernel(k / T, pts)
        shat = 1.0 / (2j * np.pi * k)
        split = T * shat * qd._saw_space(pts) + qd._btilde(pts, k, T)
        assert np.max(np.abs(full - split)) < 1e-12


def test_periodic_band_gradients_match_finite_differences():
    pts = RNG.uniform(-2.5, 2.5, size=(25, 2))
    pts = pts[np.hypot(pts[:, 0], pts[:, 1]) > 0.4]
    h = 1e-6
    ex, ey = np.array([h, 0.0]), np.array([0.0, h])
    for fn, grad in [(qd._saw_space, qd._saw_space_grad),
                     (lambda x: qd._btilde(x, 2, 0.7),
                      lambda x: qd._btilde_grad(x, 2, 0.7))]:
        gx = (fn(pts + ex) - fn(pts - ex)) / (2 * h)
        gy = (fn(pts + ey) - fn(pts - ey)) / (2 * h)
        got = grad(pts)
        scale = np.max(np.abs(gx))
        assert np.max(np.abs(got[..., 0] - gx)) < 1e-6 * scale
        assert np.max(np.abs(got[..., 1] - gy)) < 1e-6 * scale


def test_saw_time_convolve_matches_dense_quadrature():
    T = 0.7
    n_t = 6
    prof = RNG.normal(size=(n_t, 3))
    t_eval = np.array([0.0, 0.13, 0.35, 0.69]) * T
    got = qd.saw_time_convolve(prof, T, t_eval)
    # dense midpoint rule against the piecewise-linear interpolant of prof
    m = 400000
    sig = (np.arange(m) + 0.5) * T / m
    pos = sig / T * n_t
    i0 = np.floor(pos).astype(int) % n_t
    lam = pos - np.floor(pos)
    pl = (1 - lam)[:, None] * prof[i0] + lam[:, None] * prof[(i0 + 1) % n_t]
    saw = lambda tau: 0.5 - np.mod(tau, 1.0)
    for j, t in enumerate(t_eval):
        ref = np.sum(saw((t - sig) / T)[:, None] * pl, axis=0) * (T / m)
        assert np.max(np.abs(got[j] - ref)) < 1e-8 * np.max(np.abs(prof))


# ------------------------------------------------- periodic convolution


def _cos_band_input(g, rank, T, n_t=4):
    slices = []
    for m in range(n_t):
        c = np.cos(2 * np.pi * m / n_t)
        fn = (lambda cc: lambda x: cc * g(x))(c)
        slices.append(fl.SpatialField.analytic(fn, rank, decay=50.0,
                                               log_weight=True))
    return fl.TimePeriodicField(T, slices)


def test_tp_zero_input_gives_zero():
    zero = fl.SpatialField.analytic(
        lambda x: np.zeros_like(x), 1, decay=10.0, log_weight=True)
    h = fl.TimePeriodicField(0.8, [zero] * 4)
    src = fl.PolarLogGrid(1e-3, 20.0, 64, 48)
    plan = qd.ConvolutionPlan.offset(src, 8, 8, 2.0, 10.0)
    w = qd.convolve_tp(h, plan=plan)
    assert all(np.array_equal(s.samples, np.zeros_like(s.samples))
               for s in w.slices)


def test_tp_input_validation():
    src = fl.PolarLogGrid(1e-3, 20.0, 64, 48)
    plan = qd.ConvolutionPlan.offset(src, 8, 8, 2.0, 10.0)
    nodecay = fl.SpatialField.analytic(gauss_vec, 1)
    with pytest.raises(qd.DecayClassError):
        qd.convolve_tp(fl.TimePeriodicField(1.0, [nodecay] * 4), plan=plan)
    ok = analytic_vec(gauss_vec)
    with pytest.raises(ValueError):
        qd.convolve_tp(fl.TimePeriodicField(1.0, [ok] * 4), T=2.0, plan=plan)


def test_tp_output_is_purely_periodic():
    # The periodic kernel annihilates time means: feeding data with a large
    # steady component must still return a zero-mean output.
    def g(x):
        return gauss_vec(x, 1.3, (0.7, 0.4))

    slices = []
    n_t = 4
    for m in range(n_t):
        c = 2.0 + np.cos(2 * np.pi * m / n_t)   # nonzero time average
        fn = (lambda cc: lambda x: cc * g(x))(c)
        slices.append(analytic_vec(fn))
    h = fl.TimePeriodicField(0.8, slices)
    src = fl.PolarLogGrid(1e-3, 30.0, 96, 64)
    plan = qd.ConvolutionPlan.offset(src, 12, 8, 2.0, 15.0)
    w = qd.convolve_tp(h, plan=plan)
    mean = w.time_average().samples
    scale = max(np.max(np.abs(s.samples)) for s in w.slices)
    assert np.max(np.abs(mean)) < 1e-12 * scale


def test_assembled_solution_satisfies_heat_stokes_system():
    # Assemble steady + periodic parts of the solution for a smooth compact
    # forcing and check the governing system band by band with 5-point
    # stencils: (i 2 pi k / T) W_k - lap W_k + grad P_k = h_k.
    T, n_t = 0.9, 8
    b1 = mf.StreamBump(center=(0.0, 0.0), scale=2.5, amp=1.0)

    def b2v(x):
        return np.exp(-np.sum(x**2, axis=-1) / 2.5**2)[..., None] * np.array([0.4, -0.9])

    def band(k):
        def fk(x):
            acc = 0.0
            for m in range(n_t):
                c1 = 1.0 + np.cos(2 * np.pi * m / n_t)
                c2 = np.sin(4 * np.pi * m / n_t)
                acc = acc + np.exp(-2j * np.pi * k * m / n_t) * (
                    c1 * b1.velocity(x) + c2 * b2v(x))
            return acc / n_t * np.sinc(k / n_t) ** 2
        return fk

    src = fl.PolarLogGrid(1e-3, 25.0, 192, 144)
    plan = qd.ConvolutionPlan.offset(src, 8, 8, 2.2, 8.0)
    probes = np.array([[2.5, 0.6], [-1.8, 2.2], [1.4, -2.6]])
    hstep = 1e-2
    offsets = np.array([[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1]], dtype=float)
    sten = (probes[:, None, :] + hstep * offsets[None]).reshape(-1, 2)
    sp = src.points().reshape(-1, 2)

    worst = 0.0
    for k in (0, 1, 2):
        fk = band(k)
        fsrc = fk(sp)
        if k == 0:
            W, _ = qd._apply_kernel(qd._kernel_stokeslet(), fk, fsrc, plan, sten)
            lam = 0.0
        else:
            U, _ = qd._apply_kernel(qd._kernel_btilde(k, T), fk, fsrc, plan, sten)
            S, _ = qd._apply_kernel(qd._kernel_saw(), fk, fsrc, plan, sten)
            W = U + T / (2j * np.pi * k) * S
            lam = 2j * np.pi * k / T
        P, _ = qd._apply_kernel(qd._kernel_pressure(), fk, fsrc, plan, sten)
        W = W.reshape(len(probes), 5, 2)
        P = P.reshape(len(probes), 5)
        lap = (W[:, 1] + W[:, 2] + W[:, 3] + W[:, 4] - 4 * W[:, 0]) / hstep**2
        gp = np.stack([(P[:, 1] - P[:, 2]) / (2 * hstep),
                       (P[:, 3] - P[:, 4]) / (2 * hstep)], axis=-1)
        resid = lam * W[:, 0] - lap + gp - fk(probes)
        worst = max(worst, np.max(np.abs(resid)) / np.max(np.abs(fk(probes))))
    assert worst < 1e-3
