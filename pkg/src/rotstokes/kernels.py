r"""Fundamental-solution kernels of the planar Stokes system.

Three kernels, all vectorized over trailing point axes:

* the steady logarithmic kernel (``stokeslet`` and derivatives), which is
  what the zero-frequency content of any time-periodic problem couples to;
* the frequency-``eta`` resolvent kernel (``resolvent_kernel``/``_grad``),
  a combination of modified Bessel factors from :mod:`rotstokes.specfun`;
* the purely periodic kernel (``tp_kernel``/``_grad``), the sum of the
  resolvent kernels over all nonzero integer frequencies.  Summed naively
  the series converges like O(1/k); the algebraic z^{-2} tails of the
  Bessel factors are therefore resummed in closed form (a sawtooth profile
  in time times a rank-one-ish matrix in space), leaving a remainder that
  decays like exp(-sqrt(pi k)|x|) and is truncated by that bound.

Conventions: for a field with values ``out[..., i, j]``, the spatial
derivative index is appended last, so gradients are ``out[..., i, j, m]``
= d/dx_m of entry (i, j) and hessians end with ``..., m, n``.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import specfun as sf

FOURPI_INV = 1.0 / (4.0 * np.pi)
TWOPI_INV = 1.0 / (2.0 * np.pi)

#: minimum |x|/sqrt(T) for purely periodic kernel evaluation; below this the
#: truncation index explodes and callers are expected to split integrals.
X_MIN_EVAL = 1e-3

_I2 = np.eye(2)


class SingularityError(ValueError):
    """Kernel evaluated at (or too close to) its singular point."""


class TruncationCapWarning(UserWarning):
    """The Fourier truncation index hit the configured cap."""


@dataclass(frozen=True)
class KernelSeriesConfig:
    """Truncation and sampling parameters for the periodic kernel."""

    tol: float = 1e-10
    k_cap: int = 100_000
    n_t: int = 256

    def __post_init__(self):
        if not 0.0 < self.tol < 1.0:
            raise ValueError("tol must lie in (0, 1)")
        if self.k_cap < 1:
            raise ValueError("k_cap must be >= 1")
        if self.n_t < 4 or self.n_t % 2:
            raise ValueError("n_t must be even and >= 4")


DEFAULT_CFG = KernelSeriesConfig()


def _points(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise ValueError("points must have trailing dimension 2")
    r2 = x[..., 0] ** 2 + x[..., 1] ** 2
    if np.any(r2 == 0.0):
        raise SingularityError("kernel evaluated at x = 0")
    return x, r2


def stokeslet(x):
    r"""Steady kernel (1/4pi)(delta_ij ln(1/|x|) + x_i x_j / |x|^2)."""
    x, r2 = _points(x)
    xx = np.einsum("...i,...j->...ij", x, x)
    ln = np.log(r2)[..., None, None]
    return FOURPI_INV * (-0.5 * ln * _I2 + xx / r2[..., None, None])


def stokeslet_grad(x):
    """First derivatives of :func:`stokeslet`; out[..., i, j, m] = d_m G_ij."""
    x, r2 = _points(x)
    xr = x / r2[..., None]
    t1 = -np.einsum("ij,...m->...ijm", _I2, xr)
    t2 = np.einsum("im,...j->...ijm", _I2, xr) + np.einsum("jm,...i->...ijm", _I2, xr)
    t3 = -2.0 * np.einsum("...i,...j,...m->...ijm", xr, xr, x)
    return FOURPI_INV * (t1 + t2 + t3)


def stokeslet_hess(x):
    """Second derivatives; out[..., i, j, m, n], symmetric in (m, n)."""
    x, r2 = _points(x)
    r2e = r2[..., None]
    xr = x / r2e
    dmn = np.einsum("ij,mn->ijmn", _I2, _I2)
    t1 = -dmn / r2[..., None, None, None, None] + 2.0 * np.einsum(
        "ij,...m,...n->...ijmn", _I2, xr, xr
    )
    t2 = (np.einsum("im,jn->ijmn", _I2, _I2) + np.einsum("jm,in->ijmn", _I2, _I2)) / r2[
        ..., None, None, None, None
    ]
    t3 = -2.0 * (
        np.einsum("im,...j,...n->...ijmn", _I2, xr, xr)
        + np.einsum("jm,...i,...n->...ijmn", _I2, xr, xr)
        + np.einsum("in,...j,...m->...ijmn", _I2, xr, xr)
        + np.einsum("jn,...i,...m->...ijmn", _I2, xr, xr)
        + np.einsum("mn,...i,...j->...ijmn", _I2, xr, xr)
    )
    t4 = 8.0 * np.einsum("...i,...j,...m,...n->...ijmn", xr, xr, xr, x)
    return FOURPI_INV * (t1 + t2 + t3 + t4)


def stokeslet_pressure(x):
    """Pressure vector paired with the steady kernel: x_j / (2 pi |x|^2)."""
    x, r2 = _points(x)
    return TWOPI_INV * x / r2[..., None]


def _freq_root(eta):
    """sqrt(i 2 pi eta) with nonnegative real part (numpy principal branch)."""
    if eta == 0:
        raise SingularityError("zero frequency has no resolvent kernel")
    return np.sqrt(1j * 2.0 * np.pi * eta)


def resolvent_kernel(eta, x):
    r"""Frequency-``eta`` kernel (1/2pi)[e1(z) I + e2(z) xhat xhat], z = sqrt(i2pi eta)|x|."""
    x, r2 = _points(x)
    r = np.sqrt(r2)
    z = _freq_root(eta) * r
    e1, e2 = sf.e_pair(z)
    xh = x / r[..., None]
    xx = np.einsum("...i,...j->...ij", xh, xh)
    return TWOPI_INV * (e1[..., None, None] * _I2 + e2[..., None, None] * xx)


def resolvent_grad(eta, x):
    """Spatial gradient of :func:`resolvent_kernel`; out[..., i, j, m]."""
    x, r2 = _points(x)
    r = np.sqrt(r2)
    c = _freq_root(eta)
    z = c * r
    _, e2 = sf.e_pair(z)
    d1, d2 = sf.e_pair_prime(z)
    xh = x / r[..., None]
    xx = np.einsum("...i,...j->...ij", xh, xh)
    radial = c * (
        d1[..., None, None] * _I2 + d2[..., None, None] * xx
    )  # (e1' I + e2' xhat xhat) dz/dx_m with dz/dx_m = c xhat_m
    out = np.einsum("...ij,...m->...ijm", radial, xh)
    angular = (
        np.einsum("im,...j->...ijm", _I2, xh)
        + np.einsum("jm,...i->...ijm", _I2, xh)
        - 2.0 * np.einsum("...i,...j,...m->...ijm", xh, xh, xh)
    ) / r[..., None, None, None]
    out += e2[..., None, None, None] * angular
    return TWOPI_INV * out


def truncation_index(r_scaled, tol, k_cap):
    """Smallest K with exp(-sqrt(pi K) r) < tol, clipped to [1, k_cap].

    Returns (K, capped) where capped flags entries clipped at k_cap.
    """
    r = np.asarray(r_scaled, dtype=float)
    raw = np.ceil(np.log(1.0 / tol) ** 2 / (np.pi * r * r))
    capped = raw > k_cap
    k = np.clip(raw, 1, k_cap).astype(np.int64)
    return k, capped


def _tp_scaled_args(t, x, T):
    if T <= 0.0:
        raise ValueError("period must be positive")
    x, r2 = _points(np.asarray(x, dtype=float) / np.sqrt(T))
    r = np.sqrt(r2)
    if np.any(r < X_MIN_EVAL):
        raise SingularityError(
            "purely periodic kernel evaluated at |x|/sqrt(T) < %g; "
            "split the integral instead" % X_MIN_EVAL
        )
    tp = np.broadcast_to(np.asarray(t, dtype=float) / T, r.shape)
    return tp, x, r


def _bessel_sum(r, tp, cfg, want_grad):
    """Accumulate the exponentially convergent remainder of the k-series.

    Returns scalar coefficient arrays: (A, B) with the value part equal to
    A*I + B*xhat xhat, and additionally (P1, P2, P3) for the gradient part
    P1*xhat_m delta_ij + P2*xhat_i xhat_j xhat_m + P3*(delta_im xhat_j +
    delta_jm xhat_i) when requested.
    """
    kk, capped = truncation_index(r, cfg.tol, cfg.k_cap)
    if np.any(capped):
        warnings.warn(
            "Fourier truncation index capped at k_cap=%d for %d point(s)"
            % (cfg.k_cap, int(np.count_nonzero(capped))),
            TruncationCapWarning,
            stacklevel=3,
        )
    kmax = int(kk.max())
    A = np.zeros_like(r)
    B = np.zeros_like(r)
    P1 = P2 = P3 = None
    if want_grad:
        P1 = np.zeros_like(r)
        P2 = np.zeros_like(r)
        P3 = np.zeros_like(r)
    block = 256
    for k0 in range(1, kmax + 1, block):
        ks = np.arange(k0, min(k0 + block, kmax + 1))
        # ragged edge: points whose truncation index ends inside this block
        # only receive their own leading terms (mask below)
        sel = kk >= ks[0]
        if not np.any(sel):
            break
        rsel = r[sel]
        tsel = tp[sel]
        c = np.sqrt(1j * 2.0 * np.pi * ks)  # (nk,)
        z = c[:, None] * rsel[None, :]
        mask = ks[:, None] <= kk[sel][None, :]
        k0v, k1v = sf.bessel_k01(np.where(mask, z, 1.0))
        zi = 1.0 / z
        b1 = (k0v + zi * k1v) * mask
        b2 = (k0v + 2.0 * zi * k1v) * mask
        phase = np.exp((2j * np.pi) * ks[:, None] * tsel[None, :])
        A[sel] += TWOPI_INV * 2.0 * np.sum((phase * b1).real, axis=0)
        B[sel] -= TWOPI_INV * 2.0 * np.sum((phase * b2).real, axis=0)
        if want_grad:
            db1 = (-k1v - zi * k0v - 2.0 * zi * zi * k1v) * mask
            db2 = (-k1v - 2.0 * zi * k0v - 4.0 * zi * zi * k1v) * mask
            cphase = c[:, None] * phase
            P1[sel] += TWOPI_INV * 2.0 * np.sum((cphase * db1).real, axis=0)
            P2[sel] -= TWOPI_INV * 2.0 * np.sum((cphase * db2).real, axis=0)
            bsum = 2.0 * np.sum((phase * b2).real, axis=0)
            P2[sel] += TWOPI_INV * 2.0 * bsum / rsel
            P3[sel] -= TWOPI_INV * bsum / rsel
    return A, B, P1, P2, P3


def tp_kernel(t, x, T=1.0, cfg=DEFAULT_CFG):
    """Purely periodic kernel at scaled arguments (t/T, x/sqrt(T)).

    Output is real of shape (..., 2, 2); its average over one period
    vanishes entrywise.
    """
    tp, xs, r = _tp_scaled_args(t, x, T)
    A, B, _, _, _ = _bessel_sum(r, tp, cfg, want_grad=False)
    s = sf.sawtooth(tp)
    w = TWOPI_INV * s / (r * r)
    A = A - w
    B = B + 2.0 * w
    xh = xs / r[..., None]
    xx = np.einsum("...i,...j->...ij", xh, xh)
    return A[..., None, None] * _I2 + B[..., None, None] * xx


def tp_kernel_grad(t, x, T=1.0, cfg=DEFAULT_CFG):
    """d/dx_m of :func:`tp_kernel`; out[..., i, j, m] (real)."""
    tp, xs, r = _tp_scaled_args(t, x, T)
    _, _, P1, P2, P3 = _bessel_sum(r, tp, cfg, want_grad=True)
    s = sf.sawtooth(tp)
    w = TWOPI_INV * s / (r * r * r)
    P1 = P1 + 2.0 * w
    P2 = P2 - 8.0 * w
    P3 = P3 + 2.0 * w
    xh = xs / r[..., None]
    out = np.einsum("...,...m,ij->...ijm", P1, xh, _I2)
    out += np.einsum("...,...i,...j,...m->...ijm", P2, xh, xh, xh)
    out += np.einsum("...,im,...j->...ijm", P3, _I2, xh)
    out += np.einsum("...,jm,...i->...ijm", P3, _I2, xh)
    # chain rule for the x -> x/sqrt(T) substitution
    return out / np.sqrt(T)


def _tp_coeffs_on_period(r, cfg, want_grad):
    """Scalar coefficient series at t_m = m/n_t, m = 0..n_t, for one modulus.

    Folds the k-series into residues mod n_t and evaluates all time samples
    with one inverse FFT per scalar channel; the jump of the sawtooth at the
    period seam is represented one-sidedly (s = +1/2 at t=0+, -1/2 at t=1-).
    """
    n_t = cfg.n_t
    kk, capped = truncation_index(r, cfg.tol, cfg.k_cap)
    if capped:
        warnings.warn(
            "Fourier truncation index capped at k_cap=%d" % cfg.k_cap,
            TruncationCapWarning,
            stacklevel=3,
        )
    kmax = int(kk)
    ks = np.arange(1, kmax + 1)
    c = np.sqrt(1j * 2.0 * np.pi * ks)
    z = c * r
    k0v, k1v = sf.bessel_k01(z)
    zi = 1.0 / z
    chans = {
        "b1": k0v + zi * k1v,
        "b2": k0v + 2.0 * zi * k1v,
    }
    if want_grad:
        chans["cdb1"] = c * (-k1v - zi * k0v - 2.0 * zi * zi * k1v)
        chans["cdb2"] = c * (-k1v - 2.0 * zi * k0v - 4.0 * zi * zi * k1v)
    out = {}
    for name, coef in chans.items():
        bins = np.zeros(n_t, dtype=complex)
        np.add.at(bins, ks % n_t, coef)
        # value at t_m equals sum_k coef_k e^{2pi i k m/n_t} = n_t * ifft(bins)
        vals = n_t * np.fft.ifft(bins)
        series = TWOPI_INV * 2.0 * np.concatenate([vals, vals[:1]]).real
        out[name] = series
    s = 0.5 - np.arange(n_t + 1) / n_t  # one-sided: +1/2 at 0, -1/2 at 1
    s[0] = 0.5
    s[-1] = -0.5
    out["saw"] = s
    return out


def _decay_validate(gamma, p):
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    if not 1.0 < p < 1.0 / (1.0 - gamma):
        raise ValueError("p must lie in (1, 1/(1-gamma))")


def tp_decay_norm(x, gamma, p, cfg=DEFAULT_CFG, grad=False):
    """Weighted L^p-in-time norm of the unit-period kernel at one point.

    Returns |x|^(2 gamma) ||G(., x)||_{L^p(0,1)} (Frobenius norm pointwise
    in t, trapezoid rule with the sawtooth jump split at the period seam),
    or the gradient variant weighted by |x|^(1 + 2 gamma).
    """
    _decay_validate(gamma, p)
    x = np.asarray(x, dtype=float).reshape(2)
    r = float(np.hypot(x[0], x[1]))
    if r < X_MIN_EVAL:
        raise SingularityError("evaluation point below the minimum radius")
    ch = _tp_coeffs_on_period(r, cfg, want_grad=grad)
    xh = x / r
    if not grad:
        w = TWOPI_INV * ch["saw"] / (r * r)
        A = ch["b1"] - w
        B = -ch["b2"] + 2.0 * w
        mats = A[:, None, None] * _I2 + B[:, None, None] * np.outer(xh, xh)
        fnorm = np.sqrt(np.sum(mats**2, axis=(1, 2)))
        weight = r ** (2.0 * gamma)
    else:
        w = TWOPI_INV * ch["saw"] / (r * r * r)
        P1 = ch["cdb1"] + 2.0 * w
        P2 = -ch["cdb2"] - 8.0 * w + 2.0 * ch["b2"] / r
        P3 = -ch["b2"] / r + 2.0 * w
        tens = np.einsum("t,m,ij->tijm", P1, xh, _I2)
        tens += np.einsum("t,i,j,m->tijm", P2, xh, xh, xh)
        tens += np.einsum("t,im,j->tijm", P3, _I2, xh)
        tens += np.einsum("t,jm,i->tijm", P3, _I2, xh)
        fnorm = np.sqrt(np.sum(tens**2, axis=(1, 2, 3)))
        weight = r ** (1.0 + 2.0 * gamma)
    integrand = fnorm**p
    integral = np.trapezoid(integrand, dx=1.0 / cfg.n_t)
    return weight * integral ** (1.0 / p)


def frequency_cutoff(eta):
    """Smooth chi with chi = 0 on |eta| < 1/2 and chi = 1 on |eta| >= 1."""
    return sf.smoothstep(2.0 * np.abs(np.asarray(eta, dtype=float)) - 1.0)


def multiplier_branch_bound(eta, r, gamma):
    """Closed-form branch estimates for |eta|^gamma |grad resolvent|(x).

    Small branch (sqrt(2 pi |eta|) |x| <= 1): |eta|^g (1+|ln beta|)/|x|;
    large branch: |eta|^(g-1) |x|^-3 beta^(2(1-g)), beta = sqrt(2pi|eta|)|x|.
    """
    eta = np.abs(np.asarray(eta, dtype=float))
    beta = np.sqrt(2.0 * np.pi * eta) * r
    small = eta**gamma * (1.0 + np.abs(np.log(beta))) / r
    large = eta ** (gamma - 1.0) / r**3 * beta ** (2.0 * (1.0 - gamma))
    return np.where(beta <= 1.0, small, large)


def multiplier_scan(x, gamma, eta_grid):
    """Empirical Marcinkiewicz-condition scan for the weighted multiplier.

    Evaluates M(eta) = chi(eta) |eta|^gamma * (gradient of the resolvent
    kernel at x), differentiates in eta by central differences on the given
    grid, and reports the sup of (|M| + |eta dM/deta|) |x|^(1+2 gamma)
    together with a cross-check ratio against the closed-form branch bounds.
    """
    x = np.asarray(x, dtype=float).reshape(2)
    r = float(np.hypot(x[0], x[1]))
    eta_grid = np.asarray(eta_grid, dtype=float)
    if eta_grid.ndim != 1 or eta_grid.size < 3:
        raise ValueError("eta_grid must be a 1-d grid with >= 3 nodes")
    chi = frequency_cutoff(eta_grid)
    M = np.zeros((eta_grid.size, 2, 2, 2), dtype=complex)
    live = (chi > 0.0) & (eta_grid != 0.0)
    for i in np.nonzero(live)[0]:
        M[i] = (
            chi[i]
            * np.abs(eta_grid[i]) ** gamma
            * resolvent_grad(float(eta_grid[i]), x)
        )
    fro = np.sqrt(np.sum(np.abs(M) ** 2, axis=(1, 2, 3)))
    dM = np.zeros_like(M)
    dM[1:-1] = (M[2:] - M[:-2]) / (eta_grid[2:] - eta_grid[:-2])[:, None, None, None]
    dM[0] = (M[1] - M[0]) / (eta_grid[1] - eta_grid[0])
    dM[-1] = (M[-1] - M[-2]) / (eta_grid[-1] - eta_grid[-2])
    dfro = np.abs(eta_grid) * np.sqrt(np.sum(np.abs(dM) ** 2, axis=(1, 2, 3)))
    weight = r ** (1.0 + 2.0 * gamma)
    bound = multiplier_branch_bound(eta_grid, r, gamma)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(live, fro / (chi * bound + (~live)), 0.0)
    return {
        "sup_weighted": float(np.max((fro + dfro) * weight)),
        "sup_value": float(np.max(fro * weight)),
        "sup_eta_derivative": float(np.max(dfro * weight)),
        "branch_ratio_max": float(np.max(ratio)),
        "n_eta": int(eta_grid.size),
    }
