"""Fields on the plane (and the time torus), polar-log grids, weighted norms.

Everything downstream works with smooth fields that are singular at worst at
the origin and decay algebraically, so the natural chart is (ln r, theta):
geometric radii, uniform angles, bicubic interpolation for sampled data and
declared-decay extrapolation beyond the grid.

Norm convention: ``X_alpha`` is sup (1+|x|)^alpha |f(x)|, with an optional
log(e+|x|) factor for the log-weighted variant.  Point values of vectors use
the Euclidean norm, matrices the Frobenius norm.
"""

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline


class MomentTailWarning(UserWarning):
    """Declared decay class too weak for a requested moment to converge."""


def rotation(angle):
    """Counterclockwise rotation matrix for one angle (or an array of them)."""
    angle = np.asarray(angle, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    return np.stack(
        [np.stack([c, -s], axis=-1), np.stack([s, c], axis=-1)], axis=-2
    )


def perp(x):
    """x -> x^perp = (-x2, x1), the generator of rotations applied to x."""
    x = np.asarray(x, dtype=float)
    return np.stack([-x[..., 1], x[..., 0]], axis=-1)


class PolarLogGrid:
    """Geometric radii times uniform angles, with area-quadrature weights."""

    def __init__(self, r_min, r_max, n_r, n_theta):
        if not 0.0 < r_min < r_max:
            raise ValueError("need 0 < r_min < r_max")
        if n_r < 8 or n_theta < 8:
            raise ValueError("need n_r, n_theta >= 8")
        self.r_min = float(r_min)
        self.r_max = float(r_max)
        self.n_r = int(n_r)
        self.n_theta = int(n_theta)
        self.r = np.geomspace(self.r_min, self.r_max, self.n_r)
        self.theta = 2.0 * np.pi * np.arange(self.n_theta) / self.n_theta

    def points(self):
        """Node coordinates, shape (n_r, n_theta, 2)."""
        c, s = np.cos(self.theta), np.sin(self.theta)
        return np.stack(
            [self.r[:, None] * c[None, :], self.r[:, None] * s[None, :]], axis=-1
        )

    def weights(self):
        """Area weights for integrals over the annulus: r^2 dlnr dtheta."""
        h = np.log(self.r_max / self.r_min) / (self.n_r - 1)
        wr = np.full(self.n_r, h)
        wr[0] = wr[-1] = 0.5 * h  # trapezoid in ln r
        return (wr * self.r**2)[:, None] * (2.0 * np.pi / self.n_theta)

    def params(self):
        return {
            "r_min": self.r_min,
            "r_max": self.r_max,
            "n_r": self.n_r,
            "n_theta": self.n_theta,
        }

    def __eq__(self, other):
        return isinstance(other, PolarLogGrid) and self.params() == other.params()


def _comp_count(rank):
    return {0: 1, 1: 2, 2: 4}[rank]


def _point_norm(values, rank):
    if rank == 0:
        return np.abs(values[..., 0])
    return np.sqrt(np.sum(values**2, axis=-1))


class SpatialField:
    """A rank-0/1/2 field on R^2, analytic or grid-sampled.

    Components are flattened on the trailing axis (tensors row-major, so a
    matrix value is reshaped to 4).  ``decay`` is the claimed X_alpha class,
    used to extrapolate sampled fields beyond their grid.
    """

    def __init__(self, rank, fn=None, grid=None, samples=None, decay=None,
                 log_weight=False, name=""):
        if rank not in (0, 1, 2):
            raise ValueError("rank must be 0, 1 or 2")
        self.rank = rank
        self.fn = fn
        self.grid = grid
        self.decay = decay
        self.log_weight = bool(log_weight)
        self.name = name
        self.n_extrapolated = 0
        self._splines = None
        if fn is None:
            if grid is None or samples is None:
                raise ValueError("sampled field needs grid and samples")
            samples = np.asarray(samples, dtype=float)
            want = (grid.n_r, grid.n_theta, _comp_count(rank))
            if samples.shape != want:
                raise ValueError("samples must have shape %s" % (want,))
            self.samples = samples
            self._build_splines()
        else:
            self.samples = None

    # -- construction helpers -------------------------------------------

    @classmethod
    def analytic(cls, fn, rank, decay=None, log_weight=False, name=""):
        return cls(rank, fn=fn, decay=decay, log_weight=log_weight, name=name)

    @classmethod
    def from_function(cls, fn, rank, grid, decay=None, log_weight=False, name=""):
        """Sample an analytic field onto a grid (the storage format)."""
        pts = grid.points()
        vals = np.asarray(fn(pts.reshape(-1, 2)), dtype=float)
        vals = vals.reshape(grid.n_r, grid.n_theta, _comp_count(rank))
        return cls(rank, grid=grid, samples=vals, decay=decay,
                   log_weight=log_weight, name=name)

    def _build_splines(self):
        g = self.grid
        lnr = np.log(g.r)
        # Wide periodic padding: a clamped cubic spline feels its end
        # conditions with weight ~0.27 per knot, so a dozen wrapped columns
        # push the seam artifact below round-off and keep interpolation
        # commuting with grid rotations (slice-consistency depends on it).
        pad = min(g.n_theta, 12)
        th = np.concatenate(
            [g.theta[-pad:] - 2 * np.pi, g.theta, g.theta[:pad] + 2 * np.pi]
        )
        data = np.concatenate(
            [self.samples[:, -pad:], self.samples, self.samples[:, :pad]], axis=1
        )
        self._splines = [
            RectBivariateSpline(lnr, th, data[:, :, c], kx=3, ky=3)
            for c in range(data.shape[-1])
        ]

    # -- evaluation ------------------------------------------------------

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        flat = x.reshape(-1, 2)
        if self.fn is not None:
            vals = np.asarray(self.fn(flat), dtype=float)
            vals = vals.reshape(len(flat), _comp_count(self.rank))
            return vals.reshape(shape + (_comp_count(self.rank),))
        g = self.grid
        r = np.hypot(flat[:, 0], flat[:, 1])
        th = np.mod(np.arctan2(flat[:, 1], flat[:, 0]), 2 * np.pi)
        rc = np.clip(r, g.r_min, g.r_max)
        out = np.stack([s.ev(np.log(rc), th) for s in self._splines], axis=-1)
        # Tolerate round-off when a caller feeds back the grid's own nodes:
        # hypot(exp(log r), ...) can land an ulp past r_max.
        above = r > g.r_max * (1.0 + 1e-12)
        if np.any(above):
            self.n_extrapolated += int(np.count_nonzero(above))
            if self.decay is None:
                raise ValueError(
                    "field %r evaluated beyond its grid without a decay class"
                    % self.name
                )
            fac = ((1.0 + g.r_max) / (1.0 + r[above])) ** self.decay
            if self.log_weight:
                fac *= np.log(np.e + g.r_max) / np.log(np.e + r[above])
            out[above] *= fac[:, None]
        return out.reshape(shape + (out.shape[-1],))

    def as_matrix(self, x):
        """Rank-2 evaluation reshaped to (..., 2, 2)."""
        if self.rank != 2:
            raise ValueError("not a tensor field")
        v = self(x)
        return v.reshape(v.shape[:-1] + (2, 2))

    # -- serialization ---------------------------------------------------

    def to_csv(self, path):
        if self.samples is None:
            raise ValueError("only sampled fields serialize; use from_function")
        g = self.grid
        rr = np.repeat(g.r, g.n_theta)
        tt = np.tile(g.theta, g.n_r)
        cols = [rr, tt] + [self.samples[:, :, c].ravel() for c in
                           range(self.samples.shape[-1])]
        header = "r,theta," + ",".join(
            "c%d" % c for c in range(self.samples.shape[-1])
        )
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=header,
                   comments="", fmt="%.17g")
        meta = {
            "rank": self.rank,
            "decay": self.decay,
            "log_weight": self.log_weight,
            "name": self.name,
            "grid": g.params(),
        }
        with open(str(path) + ".json", "w") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_csv(cls, path):
        with open(str(path) + ".json") as fh:
            meta = json.load(fh)
        g = PolarLogGrid(**meta["grid"])
        raw = np.loadtxt(path, delimiter=",", skiprows=1)
        samples = raw[:, 2:].reshape(g.n_r, g.n_theta, -1)
        return cls(meta["rank"], grid=g, samples=samples, decay=meta["decay"],
                   log_weight=meta["log_weight"], name=meta["name"])


class TimePeriodicField:
    """Uniform time slices of spatial fields over one period."""

    def __init__(self, period, slices):
        if len(slices) % 2 or len(slices) < 2:
            raise ValueError("need an even number of slices")
        ranks = {s.rank for s in slices}
        if len(ranks) != 1:
            raise ValueError("slices must share one rank")
        grids = {id(s.grid) for s in slices if s.grid is not None}
        if len(grids) > 1:
            raise ValueError("sampled slices must share one grid")
        self.period = float(period)
        self.slices = list(slices)
        self.rank = slices[0].rank

    @property
    def n_t(self):
        return len(self.slices)

    def times(self):
        return self.period * np.arange(self.n_t) / self.n_t

    def time_average(self):
        """Mean over the period (uniform samples = periodic trapezoid)."""
        s0 = self.slices[0]
        if s0.samples is not None:
            avg = np.mean([s.samples for s in self.slices], axis=0)
            return SpatialField(self.rank, grid=s0.grid, samples=avg,
                                decay=s0.decay, name="avg:" + s0.name)
        slices = self.slices
        return SpatialField.analytic(
            lambda x: np.mean([s(x) for s in slices], axis=0),
            self.rank, decay=s0.decay, name="avg:" + s0.name,
        )


def rotate_conjugate(f, t, a, inverse=False):
    """Frame change x -> Q f(Q^T x) (vectors) or x -> Q F(Q^T x) Q^T (tensors).

    Q is the rotation by angle a*t; ``inverse=True`` applies the transpose
    conjugation (the change back to the rotating frame).
    """
    if f.rank == 0:
        raise ValueError("conjugation needs a vector or tensor field")
    Q = rotation(-a * t if inverse else a * t)

    if f.rank == 1:
        def fn(x):
            return np.einsum("ij,...j->...i", Q, f(x @ Q))
    else:
        def fn(x):
            F = f.as_matrix(x @ Q)
            return np.einsum("ij,...jk,lk->...il", Q, F, Q).reshape(
                x.shape[:-1] + (4,)
            )

    return SpatialField.analytic(fn, f.rank, decay=f.decay,
                                 name="conj:" + f.name)


def conjugation_average(f, n_angle=64):
    """Average of the conjugation over a full turn (the a-independent form).

    For vector f this is (1/2pi) \\int Q(s) f(Q(s)^T x) ds, evaluated by the
    periodic trapezoid rule (spectrally accurate); tensors analogously.
    """
    if f.rank == 0:
        raise ValueError("conjugation needs a vector or tensor field")
    angles = 2.0 * np.pi * np.arange(n_angle) / n_angle
    Qs = rotation(angles)

    if f.rank == 1:
        def fn(x):
            acc = 0.0
            for Q in Qs:
                acc = acc + np.einsum("ij,...j->...i", Q, f(x @ Q))
            return acc / n_angle
    else:
        def fn(x):
            acc = 0.0
            for Q in Qs:
                F = f.as_matrix(x @ Q)
                acc = acc + np.einsum("ij,...jk,lk->...il", Q, F, Q)
            return (acc / n_angle).reshape(x.shape[:-1] + (4,))

    return SpatialField.analytic(fn, f.rank, decay=f.decay,
                                 name="conjavg:" + f.name)


@dataclass
class WeightedNormReport:
    value: float
    argmax: np.ndarray
    alpha: float
    log_weight: bool
    n_probes: int


def _default_probe_grid(f):
    if f.grid is not None:
        return f.grid
    return PolarLogGrid(0.05, 200.0, 64, 64)


def weighted_norm(f, alpha, log_weight=False, grid=None, n_rays=8):
    """sup of (1+|x|)^alpha [log(e+|x|)] |f| over grid nodes + dyadic rays."""
    g = grid or _default_probe_grid(f)
    pts = [g.points().reshape(-1, 2)]
    # dyadic ray samples give deterministic maximizers out to the rim
    k = int(np.floor(np.log2(g.r_max / g.r_min)))
    radii = g.r_min * 2.0 ** np.arange(k + 1)
    ang = 2.0 * np.pi * np.arange(n_rays) / n_rays
    rays = radii[:, None, None] * np.stack(
        [np.cos(ang), np.sin(ang)], axis=-1
    )[None, :, :]
    pts.append(rays.reshape(-1, 2))
    pts = np.concatenate(pts, axis=0)
    r = np.hypot(pts[:, 0], pts[:, 1])
    w = (1.0 + r) ** alpha
    if log_weight:
        w = w * np.log(np.e + r)
    mag = _point_norm(f(pts), f.rank)
    vals = w * mag
    i = int(np.argmax(vals))
    return WeightedNormReport(float(vals[i]), pts[i].copy(), float(alpha),
                              bool(log_weight), len(pts))


@dataclass
class Moments:
    alpha: np.ndarray | None = None      # integral of f (vector) / of F (tensor)
    beta: np.ndarray | None = None       # beta_lj = integral of (-y_j) f_l
    rot: float | None = None             # integral of y^perp . f
    outer: np.ndarray | None = None      # integral of f tensor y
    tail_bound: float = 0.0


def moments(f, grid=None):
    """Area integrals of a field with declared decay (polar-log quadrature)."""
    g = grid or _default_probe_grid(f)
    pts = g.points()
    w = g.weights()
    vals = f(pts)
    decay = f.decay if f.decay is not None else 0.0
    edge = float(np.max(_point_norm(vals[-1], f.rank)))
    out = Moments()
    if f.rank == 1:
        out.alpha = np.einsum("rt,rtc->c", w, vals)
        out.outer = np.einsum("rt,rtc,rtj->cj", w, vals, pts)
        out.beta = -out.outer
        out.rot = float(np.einsum("rt,rtc,rtc->", w, vals, perp(pts)))
        if decay <= 3.0:
            warnings.warn(
                "first moments need decay class > 3 (declared %g)" % decay,
                MomentTailWarning,
            )
            out.tail_bound = np.inf
        else:
            c = edge * (1.0 + g.r_max) ** decay
            out.tail_bound = 2 * np.pi * c * g.r_max ** (3.0 - decay) / (decay - 3.0)
    else:
        out.alpha = np.einsum("rt,rtc->c", w, vals).reshape(
            (2, 2) if f.rank == 2 else (1,)
        )
        if f.rank == 2 and decay > 2.0:
            c = edge * (1.0 + g.r_max) ** decay
            out.tail_bound = 2 * np.pi * c * g.r_max ** (2.0 - decay) / (decay - 2.0)
        elif f.rank == 2:
            warnings.warn(
                "tensor mean needs decay class > 2 (declared %g)" % decay,
                MomentTailWarning,
            )
            out.tail_bound = np.inf
    return out


@dataclass
class DecayFit:
    exponent: float
    prefactor: float
    residual: float
    r_window: tuple
    n_circles: int


def decay_fit(f, r_window, n_circles=24, n_theta=128, floor=0.0):
    """Fit max_theta |f| ~ C r^-exponent on log-spaced circles."""
    lo, hi = float(r_window[0]), float(r_window[1])
    if hi < 10.0 * lo * (1.0 - 1e-12):
        raise ValueError("fit window must span at least one decade")
    rs = np.geomspace(lo, hi, n_circles)
    ang = 2.0 * np.pi * np.arange(n_theta) / n_theta
    ring = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    m = np.array(
        [np.max(_point_norm(f(r * ring), f.rank)) for r in rs]
    )
    keep = m > floor
    if np.count_nonzero(keep) < 4:
        raise ValueError("window values at or below the noise floor")
    A = np.stack([np.log(rs[keep]), np.ones(int(keep.sum()))], axis=-1)
    b = np.log(m[keep])
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    resid = float(np.max(np.abs(A @ sol - b)))
    return DecayFit(float(-sol[0]), float(np.exp(sol[1])), resid, (lo, hi),
                    int(keep.sum()))


def circulation(f, r, n=512):
    """Counterclockwise line integral of f . dx on the circle |x| = r."""
    ang = 2.0 * np.pi * np.arange(n) / n
    ring = r * np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    tang = np.stack([-np.sin(ang), np.cos(ang)], axis=-1)
    vals = f(ring)
    return float(np.sum(vals * tang) * (2.0 * np.pi * r / n))


def flux(f, r, n=512):
    """Outward-from-origin flux of f through the circle |x| = r.

    Exterior-domain boundary terms often use the normal pointing out of the
    fluid (into the obstacle), which is the negative of this value.
    """
    ang = 2.0 * np.pi * np.arange(n) / n
    ring = r * np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    vals = f(ring)
    return float(np.sum(vals * ring / r) * (2.0 * np.pi * r / n))
