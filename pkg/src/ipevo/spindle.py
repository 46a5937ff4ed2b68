"""Squared Bessel machinery: transitions, bridges, absorption, spindles.

BESQ(d) started at x is 2t * Gamma(d/2 + N) at time t with N ~ Poisson(x/2t)
for d >= 0 (the atom at zero appears for d = 0, N = 0).  BESQ(-2a) is
absorbed at an InverseGamma(1 + a, x/2) time, and conditionally on that
time the path is a BESQ(4 + 2a) bridge to zero.  The same bridge, started
at zero, is a spindle of the excursion measure given its lifetime.
"""

from __future__ import annotations

import bisect
import csv
import io
import math

import numpy as np
from scipy import optimize
from scipy.special import gammaln, ive

from .randkit import InvalidInput, RandomStream, _rng


class NumericError(RuntimeError):
    """Raised when a sampler fails to converge; carries diagnostics."""


# -- constants of the excursion measure and the scaffolding ----------------


def stable_constant(alpha):
    """1 / (2^a Gamma(1-a) Gamma(1+a))."""
    return math.exp(-alpha * math.log(2) - math.lgamma(1 - alpha) - math.lgamma(1 + alpha))


def lifetime_tail(alpha, z):
    """nu{lifetime >= z}."""
    return alpha * stable_constant(alpha) * np.asarray(z, dtype=float) ** (-1 - alpha)


def levy_density(alpha, x):
    """Density of the scaffolding Levy measure."""
    return alpha * (1 + alpha) * stable_constant(alpha) * np.asarray(x, dtype=float) ** (-2 - alpha)


def compensator_slope(alpha, z):
    """Mean of the jumps above z per unit time; the drift of the truncated scaffolding."""
    return (1 + alpha) * stable_constant(alpha) * z ** (-alpha)


def laplace_exponent(alpha, lam):
    return np.asarray(lam, dtype=float) ** (1 + alpha) / (2**alpha * math.gamma(1 + alpha))


def laplace_exponent_inverse(alpha, theta):
    """psi^{-1}(theta), the Laplace exponent of the first-passage subordinator."""
    c = (2**alpha * math.gamma(1 + alpha)) ** (1 / (1 + alpha))
    return c * np.asarray(theta, dtype=float) ** (1 / (1 + alpha))


def small_spindle_mass_rate(alpha, z):
    """Expected skewer mass per unit local time from spindles of lifetime <= z."""
    return (2 + alpha) * alpha * (1 + alpha) * stable_constant(alpha) * z ** (1 - alpha) / (3 * (1 - alpha))


# -- transitions ------------------------------------------------------------


def besq_step(rng, d, x, t):
    """Exact BESQ(d) transition over time t for d >= 0 (vectorized in x, t)."""
    x, t = np.broadcast_arrays(np.atleast_1d(np.asarray(x, dtype=float)), np.asarray(t, dtype=float))
    n = rng.poisson(x / (2 * t))
    shape = d / 2 + n
    out = np.zeros(np.shape(shape))
    pos = shape > 0
    out[pos] = 2 * t[pos] * rng.gamma(shape[pos])
    return out


def bridge_to_zero_step(rng, d, x, tau, h):
    """BESQ(d) bridge ending at zero after time tau; value after time h < tau."""
    x = np.asarray(x, dtype=float)
    tau = np.asarray(tau, dtype=float)
    h = np.asarray(h, dtype=float)
    rest = tau - h
    n = rng.poisson(x * rest / (2 * h * tau))
    return rng.gamma(d / 2 + n) * (2 * h * rest / tau)


def absorption_time(rng, alpha, z, size=None):
    """Absorption time of BESQ(-2a) from z: z / (2 Gamma(1 + a))."""
    z = np.asarray(z, dtype=float)
    return z / (2 * rng.gamma(1 + alpha, size=z.shape if size is None else size))


def besq_neg_marginal(rng, alpha, z, t):
    """Value at time t of BESQ(-2a) from z (zero once absorbed)."""
    z = np.asarray(z, dtype=float)
    t = np.broadcast_to(np.asarray(t, dtype=float), z.shape)
    zeta = absorption_time(rng, alpha, z, size=z.shape)
    out = np.zeros(z.shape)
    alive = zeta > t
    if np.any(alive):
        out[alive] = bridge_to_zero_step(rng, 4 + 2 * alpha, z[alive], zeta[alive], t[alive])
    return out


def besq_marginal(rng, d, z, t):
    """BESQ(d) at time t from z, d in {-2a, 0, 2a, 4+2a}; negative d is absorbed."""
    if d < 0:
        return besq_neg_marginal(rng, -d / 2, z, t)
    return besq_step(rng, d, z, t)


# -- densities ---------------------------------------------------------------


def _log_iv(nu, z):
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore"):
        return np.log(ive(nu, z)) + z


def besq0_density(b, c, y):
    """Density on (0, inf) of BESQ(0) at time y from b (mass 1 - e^{-b/2y})."""
    c = np.asarray(c, dtype=float)
    z = np.sqrt(b * c) / y
    return np.exp(-np.log(2 * y) + 0.5 * np.log(b / c) - (b + c) / (2 * y) + _log_iv(1, z))


def besq_neg_density(alpha, b, c, y):
    """Density on (0, inf) of BESQ(-2a) at time y from b, before absorption."""
    c = np.asarray(c, dtype=float)
    nu = 1 + alpha
    z = np.sqrt(b * c) / y
    return np.exp(-np.log(2 * y) + 0.5 * nu * np.log(b / c) - (b + c) / (2 * y) + _log_iv(nu, z))


def log_transition_density(d, t, v, w):
    """log q_t(v, w) for BESQ(d), d > 0, as a function of the start v >= 0."""
    nu = d / 2 - 1
    v = np.asarray(v, dtype=float)
    z = np.sqrt(v * w) / t
    small = z < 1e-10
    zs = np.where(small, 1.0, z)
    vs = np.where(small, 1.0, v)
    out = -np.log(2 * t) + 0.5 * nu * (np.log(w) - np.log(vs)) - (v + w) / (2 * t) + _log_iv(nu, zs)
    lim = -np.log(2 * t) + nu * np.log(w) - nu * np.log(2 * t) - gammaln(nu + 1) - (v + w) / (2 * t)
    return np.where(small, lim, out)


def _bridge_interior(rng, d, t0, x, t1, w, u, max_tries=100000):
    """BESQ(d) bridge value at u in (t0, t1) between x at t0 and w at t1.

    Proposal from the transition off the nearer endpoint; acceptance by the
    transition density towards the farther one, normalized by its maximum.
    """
    h_near, h_far = (u - t0, t1 - u) if u - t0 <= t1 - u else (t1 - u, u - t0)
    near, far = (x, w) if u - t0 <= t1 - u else (w, x)
    if far == 0:
        def logw(v):
            return -v / (2 * h_far)
        log_max = 0.0
    else:
        def logw(v):
            return log_transition_density(d, h_far, v, far)
        hi = far + 50 * h_far + 10 * math.sqrt(far * h_far) + 1e-12
        res = optimize.minimize_scalar(lambda v: -float(logw(v)), bounds=(0.0, hi), method="bounded",
                                       options={"xatol": 1e-12 * max(hi, 1e-300)})
        log_max = max(-res.fun, float(logw(0.0)), float(logw(far)))
    for _ in range(max_tries // 64):
        v = besq_step(rng, d, np.full(64, near), h_near)
        accept = np.log(rng.uniform(size=64)) < logw(v) - log_max
        if np.any(accept):
            return float(v[np.argmax(accept)])
    raise NumericError(
        f"bridge refinement failed: d={d}, x={x}, w={w}, t0={t0}, t1={t1}, u={u}"
    )


# -- spindles -----------------------------------------------------------------


class SpindleRealization:
    """A path on an adaptive time grid with an exact lifetime.

    Values between known knots are filled in lazily by exact bridge
    sampling, so queries at several heights stay mutually consistent.
    """

    def __init__(self, lifetime, initial_value=0.0, dimension=None, stream=None, alpha=None, terminal_value=0.0):
        if not lifetime > 0:
            raise InvalidInput("lifetime must be positive")
        self.lifetime = float(lifetime)
        self.initial_value = float(initial_value)
        self.alpha = alpha
        self.dimension = dimension if dimension is not None else 4 + 2 * alpha
        self.stream = stream if stream is not None else RandomStream(0, ("spindle",))
        self.times = [0.0, self.lifetime]
        self.values = [self.initial_value, float(terminal_value)]
        self._draws = 0
        self.frozen = False

    @property
    def grid(self):
        return list(zip(self.times, self.values))

    def _next_rng(self):
        self._draws += 1
        return self.stream.child(self._draws).generator()

    def value_at(self, u) -> float:
        u = float(u)
        if u < 0 or u > self.lifetime:
            return 0.0
        k = bisect.bisect_left(self.times, u)
        if k < len(self.times) and self.times[k] == u:
            return self.values[k]
        if self.frozen:
            raise InvalidInput("spindle is frozen; cannot refine")
        t0, x = self.times[k - 1], self.values[k - 1]
        t1, w = self.times[k], self.values[k]
        rng = self._next_rng()
        if w == 0.0:
            v = float(bridge_to_zero_step(rng, self.dimension, x, t1 - t0, u - t0))
        else:
            v = _bridge_interior(rng, self.dimension, t0, x, t1, w, u)
        self.times.insert(k, u)
        self.values.insert(k, v)
        return v

    def values_at(self, us):
        return np.array([self.value_at(u) for u in us])

    def refine(self, grid):
        for u in sorted(grid):
            self.value_at(u)
        return self

    def freeze(self):
        self.frozen = True
        return self

    def check(self, tol=0.0):
        ts = np.asarray(self.times)
        vs = np.asarray(self.values)
        assert ts[0] == 0 and ts[-1] == self.lifetime and np.all(np.diff(ts) > 0)
        assert np.all(vs[1:-1] > tol)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "value"])
        for t, v in self.grid:
            w.writerow([repr(t), repr(v)])
        return buf.getvalue()


def sample_excursion_lifetime_tail(stream, alpha, z_cutoff, size=None):
    """Lifetime from nu(. | lifetime > z_cutoff): a Pareto(1 + a) tail."""
    if not z_cutoff > 0:
        raise InvalidInput("z_cutoff must be positive")
    u = 1.0 - _rng(stream).uniform(size=size)
    return z_cutoff * u ** (-1.0 / (1 + alpha))


def sample_spindle_given_lifetime(stream, alpha, zeta, grid=()):
    """A spindle of lifetime zeta: BESQ(4+2a) bridge from 0 to 0."""
    if not zeta > 0:
        raise InvalidInput("lifetime must be positive")
    f = SpindleRealization(zeta, 0.0, 4 + 2 * alpha, stream, alpha)
    return f.refine([u for u in grid if 0 < u < zeta])


def sample_besq_neg_spindle(stream, alpha, z, grid=()):
    """Broken spindle: BESQ(-2a) from z with its exact absorption time."""
    if not z > 0:
        raise InvalidInput("initial value must be positive")
    zeta = float(absorption_time(stream.child("lifetime").generator(), alpha, z))
    f = SpindleRealization(zeta, z, 4 + 2 * alpha, stream.child("path"), alpha)
    return f.refine([u for u in grid if 0 < u < zeta])


def sample_clade_leftmost_spindle_given_overshoot(stream, alpha, y, grid=()):
    """Initial broken spindle of a clade given overshoot y.

    A ~ Exponential(1/2y), then a first-passage bridge from A to 0 in time y.
    """
    if not y > 0:
        raise InvalidInput("overshoot must be positive")
    a = float(stream.child("mass").generator().exponential(2 * y))
    f = SpindleRealization(y, a, 4 + 2 * alpha, stream.child("path"), alpha)
    return a, f.refine([u for u in grid if 0 < u < y])


def besq_path(stream, delta, z0, grid, absorb_at_zero=True, method="exact", **euler_opts):
    """BESQ(delta) sampled on a grid of times.

    Returns a SpindleRealization whose knots include the grid.  For
    delta > 0 the lifetime is the last grid time (the path is not absorbed);
    for delta <= 0 the lifetime is the absorption time.
    """
    grid = np.sort(np.asarray(grid, dtype=float))
    if delta <= 0 and not absorb_at_zero:
        raise InvalidInput("delta <= 0 requires absorb_at_zero")
    if z0 < 0 or (delta <= 0 and z0 == 0):
        raise InvalidInput("need z0 > 0 for delta <= 0 and z0 >= 0 otherwise")
    if delta < 0 and method == "exact":
        alpha = -delta / 2
        f = sample_besq_neg_spindle(stream, alpha, z0)
        return f.refine([u for u in grid if 0 < u < f.lifetime])
    if delta < 0:
        return _euler_path(stream, delta, z0, grid, **euler_opts)
    rng = stream.generator()
    horizon = float(grid[-1]) if len(grid) and grid[-1] > 0 else 1.0
    f = SpindleRealization(horizon, z0, delta, stream, None)
    f.times, f.values = [0.0], [float(z0)]
    t, v = 0.0, float(z0)
    for u in grid:
        if u <= t:
            continue
        v = float(besq_step(rng, delta, v, u - t)[0])
        t = u
        f.times.append(u)
        f.values.append(v)
        if v == 0.0 and delta == 0:
            f.lifetime = u
            break
    f.frozen = True
    return f


def _euler_path(stream, delta, z0, grid, **opts):
    zeta, vals, tt, vv = euler_absorption(stream, delta, np.array([z0]), query_times=np.asarray(grid)[None, :],
                                          keep_path=True, **opts)
    f = SpindleRealization(float(zeta[0]), z0, 4 - delta, stream, -delta / 2)
    keep = [(a, b) for a, b in zip(tt, vv) if a < zeta[0] and (b > 0 or a == 0)]
    f.times = [a for a, _ in keep] + [float(zeta[0])]
    f.values = [b for _, b in keep] + [0.0]
    f.frozen = True
    return f


def euler_absorption(stream, delta, z0, rel_step=0.002, dt_max=None, switch=1e-4, query_times=None,
                     keep_path=False, max_steps=10**7):
    """Euler-Maruyama for BESQ(delta), delta < 0, on value coordinates.

    Vectorized over starting values ``z0``.  The step is ``rel_step * Z``
    (capped by ``dt_max``) so the relative noise per step is bounded.  Once
    a path falls below ``switch * z0`` its remaining absorption time is
    drawn from the exact InverseGamma law; a step crossing zero is
    absorbed at the linearly interpolated crossing time.

    Returns absorption times and, when ``query_times`` (one row of times
    per path) is given, the path values at those times.
    """
    if delta >= 0:
        raise InvalidInput("euler_absorption needs delta < 0")
    rng = _rng(stream)
    alpha = -delta / 2
    z0 = np.asarray(z0, dtype=float)
    n = len(z0)
    dt_max = float(np.max(z0)) * 0.05 if dt_max is None else dt_max
    z = z0.copy()
    t = np.zeros(n)
    zeta = np.full(n, np.nan)
    active = np.arange(n)
    floor = switch * z0
    q = None if query_times is None else np.asarray(query_times, dtype=float)
    qv = None if q is None else np.zeros(q.shape)
    qi = None if q is None else np.zeros(n, dtype=int)
    path_t, path_v = ([0.0], [float(z0[0])]) if keep_path else (None, None)
    steps = 0
    while active.size:
        steps += 1
        if steps > max_steps:
            raise NumericError(f"Euler scheme did not absorb {active.size} paths in {max_steps} steps")
        za, ta = z[active], t[active]
        dt = np.minimum(rel_step * za, dt_max)
        xi = rng.standard_normal(active.size)
        zn = za + delta * dt + 2.0 * np.sqrt(za * dt) * xi
        crossed = zn <= 0
        frac = np.where(crossed, za / np.where(crossed, za - zn, 1.0), 1.0)
        tn = ta + dt * frac
        zn = np.where(crossed, 0.0, zn)
        low = ~crossed & (zn < floor[active])
        end = np.where(crossed, tn, np.nan)
        if np.any(low):
            end[low] = tn[low] + absorption_time(rng, alpha, zn[low])
        if q is not None:
            _record(q, qv, qi, active, ta, za, tn, zn, end, low)
        if keep_path:
            path_t.append(float(tn[0]))
            path_v.append(float(zn[0]))
        done = crossed | low
        zeta[active[done]] = end[done]
        z[active] = zn
        t[active] = tn
        active = active[~done]
    if keep_path:
        return zeta, qv, path_t, path_v
    return zeta, qv


def _record(q, qv, qi, active, ta, za, tn, zn, end, low):
    """Linear interpolation of the Euler path at query times inside a step."""
    for k in range(q.shape[1]):
        row = q[active, k]
        inside = (row > ta) & (row <= tn)
        if np.any(inside):
            w = (row[inside] - ta[inside]) / (tn[inside] - ta[inside])
            qv[active[inside], k] = za[inside] + w * (zn[inside] - za[inside])
        tail = low & (row > tn)
        if np.any(tail):
            e = end[tail]
            w = np.clip((e - row[tail]) / (e - tn[tail]), 0.0, 1.0)
            qv[active[tail], k] = np.where(row[tail] < e, w * zn[tail], 0.0)
