"""Hiemenz stagnation-point flow.

The similarity profile solves ``f''' + f f'' + 1 - f'^2 = 0`` with
``f(0) = f'(0) = 0`` and ``f'(inf) = 1``.  It is computed by shooting on
``f''(0)`` with a fixed-step RK4 integrator, then tabulated and interpolated
with cubic Hermite splines.  Beyond the truncation point the profile is
continued by its asymptote ``f = eta - beta``.

Velocity, pressure, velocity gradient and the convective forcing
``-(u . grad) u`` are exposed as vectorized functions of ``(x, y)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline


class ShootingError(RuntimeError):
    """The shooting iteration could not bracket or converge."""


def _rhs(f, fp, fpp):
    return fp, fpp, -f * fpp - 1.0 + fp * fp


def _integrate(s: float, h: float, n: int, keep: bool = False):
    """RK4 from eta = 0 with f''(0) = s.  Returns ``f'(n h) - 1`` (and the trajectory)."""
    f, fp, fpp = 0.0, 0.0, s
    traj = [(f, fp, fpp)] if keep else None
    for _ in range(n):
        k1 = _rhs(f, fp, fpp)
        k2 = _rhs(f + 0.5 * h * k1[0], fp + 0.5 * h * k1[1], fpp + 0.5 * h * k1[2])
        k3 = _rhs(f + 0.5 * h * k2[0], fp + 0.5 * h * k2[1], fpp + 0.5 * h * k2[2])
        k4 = _rhs(f + h * k3[0], fp + h * k3[1], fpp + h * k3[2])
        f += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        fp += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        fpp += h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        if keep:
            traj.append((f, fp, fpp))
        elif not -1.0 < fp < 2.0:
            # diverging shot: the sign of the residual is decided
            break
    return fp - 1.0, traj


def _find_root(h, n, tol, guess=None, max_iter=200):
    def res(s):
        return _integrate(s, h, n)[0]

    if guess is not None:
        # secant from a nearby converged value
        s0, s1 = guess, guess * (1.0 + 1e-6)
        r0, r1 = res(s0), res(s1)
        for _ in range(max_iter):
            if abs(r1) < tol:
                return s1
            if r1 == r0:
                break
            s0, s1, r0 = s1, s1 - r1 * (s1 - s0) / (r1 - r0), r1
            r1 = res(s1)
        # fall through to the bracketed search

    lo, hi = None, None
    for a, b in ((1.0, 1.5), (0.5, 2.0), (0.1, 5.0)):
        ra, rb = res(a), res(b)
        if ra < 0.0 < rb:
            lo, hi, rlo, rhi = a, b, ra, rb
            break
    if lo is None:
        raise ShootingError("residual does not change sign over the initial guesses")

    it = 0
    while hi - lo > 1e-4:
        mid = 0.5 * (lo + hi)
        rm = res(mid)
        it += 1
        if rm < 0.0:
            lo, rlo = mid, rm
        else:
            hi, rhi = mid, rm
    s0, s1, r0, r1 = lo, hi, rlo, rhi
    while it < max_iter:
        s2 = s1 - r1 * (s1 - s0) / (r1 - r0)
        if not lo <= s2 <= hi:
            s2 = 0.5 * (lo + hi)
        r2 = res(s2)
        it += 1
        if abs(r2) < tol:
            return s2
        if r2 < 0.0:
            lo = s2
        else:
            hi = s2
        s0, s1, r0, r1 = s1, s2, r1, r2
        if r1 == r0 or hi - lo < 1e-16:
            return s2
    raise ShootingError(f"no convergence within {max_iter} iterations")


@dataclass(frozen=True)
class HiemenzProfile:
    """Tabulated similarity profile.

    ``table`` has columns ``eta, f, f', f''`` at spacing ``step``.
    ``beta`` is the displacement constant ``lim (eta - f(eta))``.
    """

    eta_max: float
    step: float
    table: np.ndarray
    fpp0: float
    beta: float
    residual: float
    fpp0_coarse: float
    _splines: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        eta, f, fp, fpp = self.table.T
        fppp = -f * fpp - 1.0 + fp * fp
        splines = (
            CubicHermiteSpline(eta, f, fp),
            CubicHermiteSpline(eta, fp, fpp),
            CubicHermiteSpline(eta, fpp, fppp),
        )
        object.__setattr__(self, "_splines", splines)


def solve_profile(
    eta_max: float = 10.0, tol: float = 1e-10, h0: float = 0.05
) -> HiemenzProfile:
    """Shoot on ``f''(0)`` and halve the RK4 step until ``f''(0)`` is stable to ``tol``.

    Raises
    ------
    ValueError
        For ``eta_max < 8`` or ``tol < 1e-12``.
    ShootingError
        If the residual cannot be bracketed or the iteration does not converge.
    """
    if eta_max < 8.0:
        raise ValueError(f"eta_max={eta_max} too small, need >= 8")
    if tol < 1e-12:
        raise ValueError(f"tol={tol} below 1e-12")
    n = max(1, math.ceil(eta_max / h0))
    h = eta_max / n
    s_prev = _find_root(h, n, tol)
    for _ in range(20):
        n *= 2
        h = eta_max / n
        s = _find_root(h, n, tol, guess=s_prev)
        if abs(s - s_prev) < tol:
            break
        s_prev = s
    else:
        raise ShootingError("f''(0) not stable under step halving")
    residual, traj = _integrate(s, h, n, keep=True)
    vals = np.array(traj)
    eta = h * np.arange(n + 1)
    eta[-1] = eta_max
    table = np.column_stack([eta, vals])
    beta = float(eta_max - vals[-1, 0])
    return HiemenzProfile(
        eta_max=float(eta_max),
        step=h,
        table=table,
        fpp0=float(s),
        beta=beta,
        residual=float(residual),
        fpp0_coarse=float(s_prev),
    )


def eval_profile(profile: HiemenzProfile, eta):
    """Return ``(f, f', f'')`` at ``eta`` (scalar or array, ``eta >= 0``)."""
    eta = np.asarray(eta, dtype=float)
    if np.any(eta < 0.0):
        raise ValueError("eta must be non-negative")
    inside = eta <= profile.eta_max
    e = np.minimum(eta, profile.eta_max)
    sf, sfp, sfpp = profile._splines
    f = np.where(inside, sf(e), eta - profile.beta)
    fp = np.where(inside, sfp(e), 1.0)
    fpp = np.where(inside, sfpp(e), 0.0)
    if f.ndim == 0:
        return float(f), float(fp), float(fpp)
    return f, fp, fpp


@dataclass(frozen=True)
class FlowParams:
    nu: float = 1e-4
    a: float = 1.0
    p0: float = 0.0

    def __post_init__(self):
        if not self.nu > 0.0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not self.a > 0.0:
            raise ValueError(f"a must be positive, got {self.a}")


@dataclass(frozen=True)
class ExactFields:
    params: FlowParams
    profile: HiemenzProfile

    @property
    def delta(self) -> float:
        """Boundary layer width ``2.4 sqrt(nu / a)``."""
        return 2.4 * math.sqrt(self.params.nu / self.params.a)

    @property
    def scale(self) -> float:
        """``sqrt(a / nu)``, maps wall distance to the similarity variable."""
        return math.sqrt(self.params.a / self.params.nu)

    def _profile(self, y):
        return eval_profile(self.profile, self.scale * np.asarray(y, dtype=float))

    def velocity(self, x, y):
        return exact_velocity(self, x, y)

    def pressure(self, x, y):
        return exact_pressure(self, x, y)

    def gradient(self, x, y):
        return exact_gradient(self, x, y)

    def forcing(self, x, y):
        return forcing(self, x, y)


def exact_velocity(fields: ExactFields, x, y) -> np.ndarray:
    """Velocity ``(a x f', -sqrt(a nu) f)``, shape ``broadcast(x, y).shape + (2,)``."""
    a, nu = fields.params.a, fields.params.nu
    x = np.asarray(x, dtype=float)
    f, fp, _ = fields._profile(y)
    return np.stack(np.broadcast_arrays(a * x * fp, -math.sqrt(a * nu) * f), axis=-1)


def exact_pressure(fields: ExactFields, x, y):
    a, nu, p0 = fields.params.a, fields.params.nu, fields.params.p0
    x = np.asarray(x, dtype=float)
    f, fp, _ = fields._profile(y)
    return p0 - 0.5 * a * a * (x * x + 2.0 * nu / a * (fp + 0.5 * f * f))


def exact_gradient(fields: ExactFields, x, y) -> np.ndarray:
    """Velocity Jacobian ``J[i, j] = d u_i / d x_j``, shape ``(..., 2, 2)``."""
    a = fields.params.a
    x = np.asarray(x, dtype=float)
    _, fp, fpp = fields._profile(y)
    x, fp, fpp = np.broadcast_arrays(x, fp, fpp)
    g = np.zeros(x.shape + (2, 2))
    g[..., 0, 0] = a * fp
    g[..., 0, 1] = a * x * fpp * fields.scale
    g[..., 1, 1] = -a * fp
    return g


def forcing(fields: ExactFields, x, y) -> np.ndarray:
    """Convective forcing ``-(u . grad) u`` in closed form."""
    a, nu = fields.params.a, fields.params.nu
    x = np.asarray(x, dtype=float)
    f, fp, fpp = fields._profile(y)
    f1 = -a * a * x * (fp * fp - f * fpp)
    f2 = -a * math.sqrt(a * nu) * f * fp
    return np.stack(np.broadcast_arrays(f1, f2), axis=-1)


def make_fields(
    nu: float = 1e-4, a: float = 1.0, p0: float = 0.0, eta_max: float = 10.0, tol: float = 1e-10
) -> ExactFields:
    return ExactFields(FlowParams(nu, a, p0), solve_profile(eta_max, tol))
