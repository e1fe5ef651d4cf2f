"""Closed-form flow scenarios used to validate the solvers.

Every family here carries analytic derivatives, so convolution and solver
output can be compared against exact values instead of a second quadrature.
"""

from __future__ import annotations

import numpy as np

from . import fields


class StreamBump:
    """Divergence-free velocity from a Gaussian stream function.

    psi(x) = amp * exp(-|x - c|^2 / scale^2),  v = (-d2 psi, d1 psi).
    Numerically compact: psi < 1e-70 beyond ~13 scales.
    """

    def __init__(self, center=(0.0, 0.0), scale=1.0, amp=1.0):
        self.center = np.asarray(center, dtype=float)
        self.scale = float(scale)
        self.amp = float(amp)

    def psi(self, x):
        d = np.asarray(x, dtype=float) - self.center
        return self.amp * np.exp(-np.sum(d**2, axis=-1) / self.scale**2)

    def grad_psi(self, x):
        d = np.asarray(x, dtype=float) - self.center
        return (-2.0 / self.scale**2) * d * self.psi(x)[..., None]

    def velocity(self, x):
        g = self.grad_psi(x)
        return np.stack([-g[..., 1], g[..., 0]], axis=-1)

    def lap_psi(self, x):
        d = np.asarray(x, dtype=float) - self.center
        rho2 = np.sum(d**2, axis=-1)
        s2 = self.scale**2
        return (-4.0 / s2 + 4.0 * rho2 / s2**2) * self.psi(x)

    def grad_lap_psi(self, x):
        d = np.asarray(x, dtype=float) - self.center
        rho2 = np.sum(d**2, axis=-1)
        s2 = self.scale**2
        p = self.psi(x)
        a = (8.0 / s2**2) * d * p[..., None]
        b = (-4.0 / s2 + 4.0 * rho2 / s2**2)[..., None] * (-2.0 / s2) * d * p[..., None]
        return a + b

    def lap_velocity(self, x):
        g = self.grad_lap_psi(x)
        return np.stack([-g[..., 1], g[..., 0]], axis=-1)

    def grad_velocity(self, x):
        """dv_i/dx_j as (..., 2, 2)."""
        d = np.asarray(x, dtype=float) - self.center
        p = self.psi(x)
        s2 = self.scale**2
        # hessian of psi
        h = (4.0 / s2**2) * np.einsum("...i,...j->...ij", d, d) * p[..., None, None]
        h -= (2.0 / s2) * p[..., None, None] * np.eye(2)
        out = np.empty(h.shape)
        out[..., 0, :] = -h[..., 1, :]
        out[..., 1, :] = h[..., 0, :]
        return out


class PressureBump:
    """Compact scalar pressure q(x) = amp * exp(-|x - c|^2 / scale^2)."""

    def __init__(self, center=(0.0, 0.0), scale=1.0, amp=1.0):
        self.center = np.asarray(center, dtype=float)
        self.scale = float(scale)
        self.amp = float(amp)

    def value(self, x):
        d = np.asarray(x, dtype=float) - self.center
        return self.amp * np.exp(-np.sum(d**2, axis=-1) / self.scale**2)

    def grad(self, x):
        d = np.asarray(x, dtype=float) - self.center
        return (-2.0 / self.scale**2) * d * self.value(x)[..., None]


def stokes_forcing(bump: StreamBump, pressure: PressureBump | None = None):
    """f = -lap(v) + grad(q) so that v solves the steady system with force f."""

    def fn(x):
        f = -bump.lap_velocity(x)
        if pressure is not None:
            f = f + pressure.grad(x)
        return f

    return fields.SpatialField.analytic(fn, 1, decay=50.0, log_weight=True,
                                        name="stokes-forcing")


def tensor_bump(center=(0.0, 0.0), scale=1.0, matrix=None):
    """Compact tensor field b(x) * A with analytic divergence closure."""
    c = np.asarray(center, dtype=float)
    A = np.eye(2) if matrix is None else np.asarray(matrix, dtype=float)
    s2 = float(scale) ** 2

    def profile(x):
        d = np.asarray(x, dtype=float) - c
        return np.exp(-np.sum(d**2, axis=-1) / s2)

    def field_fn(x):
        return profile(x)[..., None] * A.reshape(4)

    def div_fn(x):
        # (div F)_l = d_j F_lj = A_lj d_j(profile)
        d = np.asarray(x, dtype=float) - c
        gp = (-2.0 / s2) * d * profile(x)[..., None]
        return np.einsum("lj,...j->...l", A, gp)

    F = fields.SpatialField.analytic(field_fn, 2, decay=50.0, log_weight=True,
                                 name="tensor-bump")
    divF = fields.SpatialField.analytic(div_fn, 1, decay=50.0, log_weight=True,
                                    name="div-bump")
    return F, divF


class AnnulusHarmonicStream:
    """Stream function with exact annulus support and one angular harmonic.

    psi(r, theta) = amp * B(tau) * (1 + wob * cos(m*(theta - theta0))),
    tau = (r - mid)/half, B(tau) = (1 - tau^2)^p inside |tau| < 1 and zero
    outside, so the velocity v = grad^perp psi vanishes identically off the
    annulus r_in < r < r_out.  A polynomial bridge keeps the third
    derivatives on the scale of the band itself (flat-edge bridges pile them
    into thin boundary layers that practical grids cannot resolve), and the
    finite angular band keeps every frame conjugation of the derived forcing
    band-limited in time, which the time-periodic convolution then resolves
    exactly.
    """

    def __init__(self, amp=1.0, m=3, wob=0.4, theta0=0.0, r_in=1.0,
                 r_out=3.0, p=6):
        if not 0.0 < r_in < r_out:
            raise ValueError("need 0 < r_in < r_out")
        if p < 4:
            raise ValueError("need p >= 4 so the forcing stays C^1")
        self.amp = float(amp)
        self.m = int(m)
        self.wob = float(wob)
        self.theta0 = float(theta0)
        self.r_in = float(r_in)
        self.r_out = float(r_out)
        self.p = int(p)
        self.mid = 0.5 * (r_in + r_out)
        self.half = 0.5 * (r_out - r_in)

    def _radial(self, r):
        """B and its first three r-derivatives (zero outside the annulus)."""
        tau = (np.asarray(r, dtype=float) - self.mid) / self.half
        B = np.zeros_like(tau)
        d1 = np.zeros_like(tau)
        d2 = np.zeros_like(tau)
        d3 = np.zeros_like(tau)
        inside = np.abs(tau) < 1.0
        t = tau[inside]
        p = self.p
        u = 1.0 - t * t
        B[inside] = u**p
        d1[inside] = -2.0 * p * t * u ** (p - 1) / self.half
        d2[inside] = (-2.0 * p * u ** (p - 1)
                      + 4.0 * p * (p - 1) * t**2 * u ** (p - 2)) / self.half**2
        d3[inside] = (12.0 * p * (p - 1) * t * u ** (p - 2)
                      - 8.0 * p * (p - 1) * (p - 2) * t**3 * u ** (p - 3)
                      ) / self.half**3
        return B, d1, d2, d3

    def _angular(self, theta):
        """g = 1 + wob*cos(m(theta-theta0)) and three derivatives."""
        ph = self.m * (np.asarray(theta, dtype=float) - self.theta0)
        c, s = np.cos(ph), np.sin(ph)
        g = 1.0 + self.wob * c
        g1 = -self.wob * self.m * s
        g2 = -self.wob * self.m**2 * c
        g3 = self.wob * self.m**3 * s
        return g, g1, g2, g3

    @staticmethod
    def _frames(x):
        x = np.asarray(x, dtype=float)
        r = np.hypot(x[..., 0], x[..., 1])
        theta = np.arctan2(x[..., 1], x[..., 0])
        er = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        et = np.stack([-np.sin(theta), np.cos(theta)], axis=-1)
        return r, theta, er, et

    def psi(self, x):
        r, theta, _, _ = self._frames(x)
        B, _, _, _ = self._radial(r)
        g, _, _, _ = self._angular(theta)
        return self.amp * B * g

    def velocity(self, x):
        """grad^perp psi = psi_r e_theta - (psi_theta / r) e_r."""
        r, theta, er, et = self._frames(x)
        B, B1, _, _ = self._radial(r)
        g, g1, _, _ = self._angular(theta)
        rr = np.maximum(r, 1e-300)
        p = self.amp * B1 * g
        q = -self.amp * B * g1 / rr
        return p[..., None] * et + q[..., None] * er

    def forcing(self, a, pressure: PressureBump | None = None):
        """f = -lap v - a(x^perp . grad v - v^perp) + grad q, closed form.

        Both rotation-frame terms collapse through grad^perp: with
        Phi = -lap psi - a psi_theta the force is grad^perp Phi (+ grad q),
        so only radial/angular derivatives of psi up to third order enter.
        """
        amp, half = self.amp, self.half

        def fn(x):
            r, theta, er, et = self._frames(x)
            rr = np.maximum(r, 1e-300)
            B, B1, B2, B3 = self._radial(r)
            g, g1, g2, g3 = self._angular(theta)
            # Phi = -(psi_rr + psi_r/r + psi_tt/r^2) - a*psi_t
            Phi_r = -amp * (B3 * g + B2 * g / rr - B1 * g / rr**2
                            + B1 * g2 / rr**2 - 2.0 * B * g2 / rr**3) \
                - a * amp * B1 * g1
            Phi_t = -amp * (B2 * g1 + B1 * g1 / rr + B * g3 / rr**2) \
                - a * amp * B * g2
            out = Phi_r[..., None] * et - (Phi_t / rr)[..., None] * er
            if pressure is not None:
                out = out + pressure.grad(x)
            return out

        return fields.SpatialField.analytic(fn, 1, decay=50.0, log_weight=True,
                                            name="annulus-forcing")
