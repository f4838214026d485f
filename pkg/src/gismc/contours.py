"""Reference contours and contouring error.

Task 1 is a circle of radius 0.02 m centred at (0, -0.02); Task 2 is a
cardioid-like curve

    x_d = psi sin^3(th),
    y_d = a cos(th) - b cos(2 th) - c cos(3 th) - d cos(4 th) - rho,   th = 0.5 pi t.

Writing ``nu = (x/psi)^(2/3) = sin^2(th)`` and expanding the multiple angles,
the cardioid satisfies ``Omega^2 - Xi^2 (1 - nu) = 0`` with

    Omega = y + b (1 - 2 nu) + d (2 (1 - 2 nu)^2 - 1) + rho
    Xi    = a + 3 c - 4 c (1 - nu)

``nu`` uses ``|x|`` so ``f`` is real on the whole plane and even in ``x``.
The x-derivative of ``nu`` is singular at ``x = 0`` (the two cusps), where
the first-order contour error falls back to a closest-point search.
"""

import importlib
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

CIRCLE = "circle_t1"
CARDIOID = "cardioid_t2"
CUSTOM = "custom"
KINDS = (CIRCLE, CARDIOID, CUSTOM)

GRAD_FLOOR = 1e-12
FALLBACK_GRAD = 1e-6

CIRCLE_DEFAULTS = {"radius": 0.02, "center_y": -0.02}
CARDIOID_DEFAULTS = {"a": 0.065, "b": 0.025, "c": 0.01, "d": 0.005, "rho": 0.025, "psi": 0.06}


class ContourDomainError(ValueError):
    """The implicit contour gradient is degenerate at the queried point."""


@dataclass
class ContourSpec:
    kind: str = CIRCLE
    period: Optional[float] = None
    constants: dict = field(default_factory=dict)
    # cardioid: |x| below this uses the closest-point error (m)
    cusp_band: float = 2e-3
    # custom contours
    table: Optional[np.ndarray] = None
    implicit: Optional[str] = None
    allow_plugin: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"task.kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == CIRCLE:
            self.constants = {**CIRCLE_DEFAULTS, **self.constants}
            if self.period is None:
                self.period = 1.0
        elif self.kind == CARDIOID:
            self.constants = {**CARDIOID_DEFAULTS, **self.constants}
            if self.period is None:
                self.period = 4.0
        else:
            if self.table is None:
                raise ValueError("custom contour requires a sampled (t, x_d, y_d) table")
            tab = np.asarray(self.table, dtype=float)
            if tab.ndim != 2 or tab.shape[1] != 3 or tab.shape[0] < 4:
                raise ValueError("custom contour table must be (N >= 4, 3): t, x_d, y_d")
            self.table = tab
            if self.period is None:
                self.period = float(tab[-1, 0] - tab[0, 0])
        if not (self.period > 0 and np.isfinite(self.period)):
            raise ValueError("task.period must be finite and > 0")
        for k, v in self.constants.items():
            if not np.isfinite(v):
                raise ValueError(f"task.constants.{k} must be finite")
        self._spline = None
        self._tree = None

    @property
    def omega(self) -> float:
        return 2.0 * math.pi / self.period

    def spline(self):
        if self._spline is None:
            t, x, y = self.table.T
            closed = np.allclose(self.table[0, 1:], self.table[-1, 1:], atol=1e-12)
            bc = "periodic" if closed else "not-a-knot"
            self._spline = CubicSpline(t - t[0], np.column_stack([x, y]), bc_type=bc)
        return self._spline


class ReferenceSample(NamedTuple):
    t: np.ndarray
    x_d: np.ndarray
    y_d: np.ndarray
    x_d_dot: np.ndarray
    y_d_dot: np.ndarray
    x_d_ddot: np.ndarray
    y_d_ddot: np.ndarray

    @property
    def r(self) -> np.ndarray:
        """Per-carriage reference (x_d, x_d, y_d), shape (N, 3)."""
        return np.column_stack([self.x_d, self.x_d, self.y_d])

    @property
    def r_dot(self) -> np.ndarray:
        return np.column_stack([self.x_d_dot, self.x_d_dot, self.y_d_dot])


def reference(spec: ContourSpec, t) -> ReferenceSample:
    """Desired contour position, velocity and acceleration at time(s) t."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise ValueError("reference time must be >= 0")
    w = spec.omega
    if spec.kind == CIRCLE:
        R = spec.constants["radius"]
        cy = spec.constants["center_y"]
        ph = w * t
        s, c = np.sin(ph), np.cos(ph)
        return ReferenceSample(t, R * s, R * c + cy, R * w * c, -R * w * s,
                               -R * w * w * s, -R * w * w * c)
    if spec.kind == CARDIOID:
        k = spec.constants
        th = w * t
        s, c = np.sin(th), np.cos(th)
        x = k["psi"] * s ** 3
        xd = 3 * k["psi"] * s * s * c * w
        xdd = 3 * k["psi"] * w * w * (2 * s * c * c - s ** 3)
        y = (k["a"] * c - k["b"] * np.cos(2 * th) - k["c"] * np.cos(3 * th)
             - k["d"] * np.cos(4 * th) - k["rho"])
        yd = w * (-k["a"] * s + 2 * k["b"] * np.sin(2 * th) + 3 * k["c"] * np.sin(3 * th)
                  + 4 * k["d"] * np.sin(4 * th))
        ydd = w * w * (-k["a"] * c + 4 * k["b"] * np.cos(2 * th) + 9 * k["c"] * np.cos(3 * th)
                       + 16 * k["d"] * np.cos(4 * th))
        return ReferenceSample(t, x, y, xd, yd, xdd, ydd)
    sp = spec.spline()
    tt = np.mod(t, spec.period)
    p0, p1, p2 = sp(tt), sp(tt, 1), sp(tt, 2)
    return ReferenceSample(t, p0[:, 0], p0[:, 1], p1[:, 0], p1[:, 1], p2[:, 0], p2[:, 1])


def _cardioid_f(k, x, y):
    ax = np.abs(x) / k["psi"]
    nu = ax ** (2.0 / 3.0)
    q = 1.0 - 2.0 * nu
    Om = y + k["b"] * q + k["d"] * (2.0 * q * q - 1.0) + k["rho"]
    Xi = k["a"] + 3.0 * k["c"] - 4.0 * k["c"] * (1.0 - nu)
    return Om, Xi, nu


def contour_value(spec: ContourSpec, x, y):
    """Implicit contour function f(x, y); zero on the contour, positive outside."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if spec.kind == CIRCLE:
        R = spec.constants["radius"]
        return x * x + (y - spec.constants["center_y"]) ** 2 - R * R
    if spec.kind == CARDIOID:
        Om, Xi, nu = _cardioid_f(spec.constants, x, y)
        return Om * Om - Xi * Xi * (1.0 - nu)
    return _plugin(spec)(x, y)[0]


def contour_value_and_gradient(spec: ContourSpec, x, y, check: bool = True):
    """Return ``(f, f_x, f_y)`` at the actual point(s).

    With ``check`` a ``ContourDomainError`` is raised where the gradient norm
    is below 1e-12 or not finite.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if spec.kind == CIRCLE:
        cy = spec.constants["center_y"]
        R = spec.constants["radius"]
        f = x * x + (y - cy) ** 2 - R * R
        fx = 2.0 * x
        fy = 2.0 * (y - cy)
    elif spec.kind == CARDIOID:
        k = spec.constants
        Om, Xi, nu = _cardioid_f(k, x, y)
        f = Om * Om - Xi * Xi * (1.0 - nu)
        q = 1.0 - 2.0 * nu
        dOm_dnu = -2.0 * k["b"] - 8.0 * k["d"] * q
        dXi_dnu = 4.0 * k["c"]
        df_dnu = 2.0 * Om * dOm_dnu - 2.0 * Xi * dXi_dnu * (1.0 - nu) + Xi * Xi
        with np.errstate(divide="ignore", invalid="ignore"):
            dnu_dx = (2.0 / 3.0) * np.sign(x) * np.abs(x) ** (-1.0 / 3.0) / k["psi"] ** (2.0 / 3.0)
        fx = df_dnu * dnu_dx
        fy = 2.0 * Om
    else:
        f, fx, fy = _plugin(spec)(x, y)
        f, fx, fy = np.asarray(f, float), np.asarray(fx, float), np.asarray(fy, float)
    if check:
        g = np.hypot(fx, fy)
        bad = ~np.isfinite(g) | (g < GRAD_FLOOR)
        if np.any(bad):
            raise ContourDomainError(
                f"contour gradient degenerate at {int(np.count_nonzero(bad))} point(s)")
    return f, fx, fy


def _plugin(spec: ContourSpec) -> Callable:
    if spec.kind != CUSTOM or spec.implicit is None:
        raise ContourDomainError("contour has no implicit function")
    if not spec.allow_plugin:
        raise ContourDomainError("implicit-function plugins are disabled (task.allow_plugin = false)")
    mod, _, name = spec.implicit.partition(":")
    return getattr(importlib.import_module(mod), name)


def _dense_curve(spec: ContourSpec, n: int = 20000):
    if spec._tree is None:
        t = np.linspace(0.0, spec.period, n, endpoint=False)
        ref = reference(spec, t)
        pts = np.column_stack([ref.x_d, ref.y_d])
        spec._tree = (t, pts, cKDTree(pts))
    return spec._tree


def closest_point_distance(spec: ContourSpec, x, y, refine_steps: int = 8):
    """Unsigned distance to the parameterized contour (dense search + Newton)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    t_grid, _, tree = _dense_curve(spec)
    _, idx = tree.query(np.column_stack([x, y]))
    t = t_grid[idx]
    dt_grid = t_grid[1] - t_grid[0]
    for _ in range(refine_steps):
        r = reference(spec, t)
        dx, dy = r.x_d - x, r.y_d - y
        g = dx * r.x_d_dot + dy * r.y_d_dot
        hss = r.x_d_dot ** 2 + r.y_d_dot ** 2 + dx * r.x_d_ddot + dy * r.y_d_ddot
        step = np.where(hss > 0, -g / np.where(hss > 0, hss, 1.0), 0.0)
        step = np.clip(step, -dt_grid, dt_grid)
        t = np.mod(t + step, spec.period)
    r = reference(spec, t)
    d_ref = np.hypot(r.x_d - x, r.y_d - y)
    # never worse than the grid point
    d_grid, _ = tree.query(np.column_stack([x, y]))
    return np.minimum(d_ref, d_grid)


def _signed_fallback(spec: ContourSpec, x, y):
    d = closest_point_distance(spec, x, y)
    if spec.kind in (CIRCLE, CARDIOID) or (spec.implicit and spec.allow_plugin):
        sgn = np.sign(contour_value(spec, x, y))
    else:
        # custom sampled contour: positive outside, whatever the direction of travel
        t_grid, pts, tree = _dense_curve(spec)
        _, idx = tree.query(np.column_stack([x, y]))
        tang = pts[(idx + 1) % len(pts)] - pts[idx - 1]
        rel = np.column_stack([x, y]) - pts[idx]
        area = np.sum(pts[:, 0] * np.roll(pts[:, 1], -1) - np.roll(pts[:, 0], -1) * pts[:, 1])
        left = np.sign(tang[:, 0] * rel[:, 1] - tang[:, 1] * rel[:, 0])
        sgn = -np.sign(area) * left
    return sgn * d


def contour_error(spec: ContourSpec, x, y, return_fallback_mask: bool = False):
    """Signed contouring error ``f / |grad f|`` (metres).

    Points where the first-order formula is undefined or unreliable (gradient
    norm below 1e-6 or not finite, or inside the cardioid cusp band) get the
    signed closest-point distance instead.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    scalar = x.ndim == 0 and y.ndim == 0
    xb, yb = np.broadcast_arrays(np.atleast_1d(x), np.atleast_1d(y))
    xb, yb = xb.astype(float).ravel(), yb.astype(float).ravel()
    if spec.kind == CUSTOM and not (spec.implicit and spec.allow_plugin):
        ec = _signed_fallback(spec, xb, yb)
        mask = np.ones(xb.shape, dtype=bool)
    else:
        f, fx, fy = contour_value_and_gradient(spec, xb, yb, check=False)
        g = np.hypot(fx, fy)
        mask = ~np.isfinite(g) | (g < FALLBACK_GRAD)
        if spec.kind == CARDIOID:
            mask |= np.abs(xb) < spec.cusp_band
        ec = np.empty_like(xb)
        ok = ~mask
        ec[ok] = f[ok] / g[ok]
        if np.any(mask):
            ec[mask] = _signed_fallback(spec, xb[mask], yb[mask])
    ec = ec.reshape(np.broadcast(x, y).shape) if not scalar else ec[0]
    if return_fallback_mask:
        return ec, mask.reshape(np.shape(ec)) if not scalar else bool(mask[0])
    return ec


def self_check(n: int = 20001) -> dict:
    """Residual of the implicit form along each built-in parameterization."""
    out = {}
    for kind, tol in ((CIRCLE, 1e-12), (CARDIOID, 1e-9)):
        spec = ContourSpec(kind)
        ref = reference(spec, np.linspace(0.0, spec.period, n))
        res = float(np.max(np.abs(contour_value(spec, ref.x_d, ref.y_d))))
        if res > tol:
            raise AssertionError(f"{kind}: implicit/parametric residual {res:.3g} > {tol:g}")
        out[kind] = res
    return out
