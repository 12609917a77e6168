"""
Momentum-space diagnostics of a two-band quench.

Loschmidt rate function and DQPT times, fixed momenta and the dynamical
Chern number (closed form and by direct integration of the solid-angle
density), and the Zak phase of the parent lower band.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .bloch import (
    DEFAULT_NK,
    GAP_TOL,
    QuenchProtocol,
    momentum_grid,
    norm,
    parent_bloch,
    parent_bloch_dt,
    period_at,
    unit,
    wrap_momentum,
)
from .errors import ConfigurationError, GaplessError, NearFixedMomentumWarning, SingularPointWarning

# integrand values below this are grid coincidences with an exact zero
SINGULAR_FLOOR = 1e-24
FIXED_TOL = 1e-10
FIXED_WARN_TOL = 1e-6
ZERO_TOL = 1e-13


def _alignment(q: QuenchProtocol, k):
    """n(k) . n'(k)."""
    n = unit(q.pre(k), "pre-quench Bloch vector")
    n_post = unit(q.post(k), "post-quench Bloch vector")
    return np.sum(n * n_post, axis=-1)


def gamma(q: QuenchProtocol, k):
    """gamma(k) = [n(k) . n'(k)]^2, symmetric in pre and post."""
    return _alignment(q, k) ** 2


@dataclass
class RateCurve:
    times: np.ndarray
    values: np.ndarray
    singular: np.ndarray = field(default=None)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.singular is None:
            self.singular = np.zeros(self.times.shape, dtype=bool)

    def peaks(self):
        """Times of interior local maxima (candidate cusps)."""
        f = self.values
        i = np.flatnonzero((f[1:-1] > f[:-2]) & (f[1:-1] >= f[2:])) + 1
        return self.times[i]


def _rate_values(q, times, n_k):
    k = momentum_grid(n_k)
    g = gamma(q, k)
    w = norm(q.post(k))
    times = np.atleast_1d(np.asarray(times, dtype=float))
    phase = np.outer(times, w)
    integrand = np.cos(phase) ** 2 + g * np.sin(phase) ** 2
    bad = integrand < SINGULAR_FLOOR
    logs = np.log(np.where(bad, 1.0, integrand))
    values = -np.sum(logs, axis=1) / n_k
    flagged = np.any(bad, axis=1)
    if np.any(flagged):
        warnings.warn(
            f"excluded {int(bad.sum())} quadrature node(s) sitting on a zero of the "
            "Loschmidt integrand",
            SingularPointWarning,
            stacklevel=3,
        )
    return times, np.maximum(values, 0.0), flagged


def rate_function(q: QuenchProtocol, t: float, n_k: int = DEFAULT_NK) -> float:
    """Rate function f(t) per unit cell by the periodic trapezoid rule.

    Nodes where the integrand is zero to machine precision are skipped and a
    ``SingularPointWarning`` is emitted.
    """
    _, values, _ = _rate_values(q, [t], n_k)
    return float(values[0])


def rate_curve(q: QuenchProtocol, times, n_k: int = DEFAULT_NK) -> RateCurve:
    times, values, flagged = _rate_values(q, times, n_k)
    return RateCurve(times, values, flagged)


def _sign_change_roots(func, n_k):
    """Transversal zeros of a periodic function sampled on the momentum grid."""
    k = momentum_grid(n_k)
    g = func(k)
    # round-off residue of a touching zero must not fake a sign change
    s = np.where(np.abs(g) < ZERO_TOL, 0.0, np.sign(g))
    dk = 2 * np.pi / n_k
    roots = []
    for i in range(n_k):
        j = (i + 1) % n_k
        if s[i] == 0:
            if s[i - 1] * s[j] < 0:
                roots.append(k[i])
        elif s[i] * s[j] < 0:
            a = k[i]
            roots.append(brentq(func, a, a + dk, xtol=1e-14, rtol=4 * np.finfo(float).eps))
    return sorted(float(x) for x in wrap_momentum(roots))


def dqpt_times(q: QuenchProtocol, t_max: float, n_k: int = DEFAULT_NK):
    """Critical (k*, t*) pairs with t* = (2n+1) pi / (2 |d'(k*)|) <= t_max.

    k* are the sign changes of n . n'; tangential zeros are not reported.
    """
    if not t_max > 0:
        raise ConfigurationError(f"t_max must be positive, got {t_max}")
    roots = _sign_change_roots(lambda k: _alignment(q, k), n_k)
    out = []
    for ks in roots:
        w = float(norm(q.post(ks)))
        n = 0
        while True:
            ts = (2 * n + 1) * np.pi / (2 * w)
            if ts > t_max:
                break
            out.append((ks, ts))
            n += 1
    out.sort(key=lambda p: (p[1], p[0]))
    return out


@dataclass(frozen=True)
class FixedMomentum:
    k: float
    parallel: bool

    @property
    def cos_theta(self) -> float:
        return 1.0 if self.parallel else -1.0


def fixed_momenta(q: QuenchProtocol, n_k: int = DEFAULT_NK, tol: float = FIXED_TOL):
    """Momenta where n(k) and n'(k) are parallel or antiparallel.

    Candidates are local minima of |n x n'| on the grid, refined by bounded
    scalar minimization.  A candidate is accepted when 1 - |n . n'| < tol;
    near misses within ``FIXED_WARN_TOL`` trigger a warning.  If the vectors are
    collinear on the entire grid (pre == post) no isolated fixed momenta exist
    and an empty list is returned.
    """
    k = momentum_grid(n_k)
    dk = 2 * np.pi / n_k

    def cross(x):
        n = unit(q.pre(x), "pre-quench Bloch vector")
        n_post = unit(q.post(x), "post-quench Bloch vector")
        return norm(np.cross(n, n_post))

    c = cross(k)
    if np.all(1.0 - np.abs(_alignment(q, k)) < tol):
        return []
    cand = np.flatnonzero((c <= np.roll(c, 1)) & (c <= np.roll(c, -1)) & (c < np.roll(c, 1) + np.roll(c, -1)))
    found = []
    for i in cand:
        res = minimize_scalar(
            lambda x: float(cross(x)),
            bounds=(k[i] - dk, k[i] + dk),
            method="bounded",
            options={"xatol": 1e-13},
        )
        ks = float(res.x)
        dot = float(_alignment(q, ks))
        miss = 1.0 - abs(dot)
        if miss < tol:
            ks = float(wrap_momentum(ks))
            if ks > np.pi - 1e-9:
                ks = -np.pi
            if all(abs(np.angle(np.exp(1j * (ks - f.k)))) > 1e-8 for f in found):
                found.append(FixedMomentum(ks, dot > 0))
        elif miss < FIXED_WARN_TOL:
            warnings.warn(
                f"n and n' nearly collinear at k={ks:.8g} (1-|n.n'|={miss:.2e}); "
                "protocol is close to a change of fixed-momentum structure",
                NearFixedMomentumWarning,
                stacklevel=2,
            )
    return sorted(found, key=lambda f: f.k)


@dataclass
class DcnSegment:
    k_lo: float
    k_hi: float
    numeric: float
    analytic: float


@dataclass
class DcnResult:
    segments: list
    fixed_momenta: list

    @property
    def total(self) -> float:
        return float(sum(s.analytic for s in self.segments))

    def max_abs(self) -> float:
        return max((abs(s.analytic) for s in self.segments), default=0.0)


def dcn_analytic(q: QuenchProtocol, fixed=None, n_k: int = DEFAULT_NK) -> DcnResult:
    """Dynamical Chern number per segment between consecutive fixed momenta.

    Segments are ordered by their lower bound; the last one wraps around the
    zone so its upper bound exceeds pi.  Numeric values are left as NaN.
    """
    if fixed is None:
        fixed = fixed_momenta(q, n_k)
    if not fixed:
        return DcnResult([DcnSegment(-np.pi, np.pi, np.nan, 0.0)], [])
    segs = []
    n = len(fixed)
    for m in range(n):
        a, b = fixed[m], fixed[(m + 1) % n]
        k_hi = b.k if m + 1 < n else b.k + 2 * np.pi
        segs.append(DcnSegment(a.k, k_hi, np.nan, 0.5 * (a.cos_theta - b.cos_theta)))
    return DcnResult(segs, list(fixed))


def _solid_angle_density(q, kc, s, h):
    """n_P . (d_k n_P x d_t n_P) * T_k on a (k, s) grid, with t = s T_k."""
    T = period_at(q, kc)
    t = T[:, None] * s[None, :]
    kk = np.broadcast_to(kc[:, None], t.shape)
    r = norm(q.pre(kc))[:, None, None]
    n = parent_bloch(q, kk, t) / r
    n_plus = parent_bloch(q, kk + h, t) / norm(q.pre(kc + h))[:, None, None]
    n_minus = parent_bloch(q, kk - h, t) / norm(q.pre(kc - h))[:, None, None]
    dn_k = (n_plus - n_minus) / (2 * h)
    dn_t = parent_bloch_dt(q, kk, t) / r
    return np.sum(n * np.cross(dn_k, dn_t), axis=-1) * T[:, None]


def dcn_numeric(q: QuenchProtocol, m: int = 0, n_k: int = 512, n_t: int = 512, result=None) -> float:
    """Midpoint-rule integral of the solid-angle density over segment ``m``.

    The time axis of each k-column runs over its own period T_k; k-derivatives
    are centered differences with the k-grid spacing, t-derivatives are exact.
    """
    if result is None:
        result = dcn_analytic(q)
    if not 0 <= m < len(result.segments):
        raise ConfigurationError(f"segment {m} does not exist ({len(result.segments)} segments)")
    seg = result.segments[m]
    h = (seg.k_hi - seg.k_lo) / n_k
    kc = seg.k_lo + (np.arange(n_k) + 0.5) * h
    for probe in (kc, kc - h, kc + h):
        if np.any(norm(q.post(probe)) <= GAP_TOL) or np.any(norm(q.pre(probe)) <= GAP_TOL):
            raise GaplessError("gap closes inside the DCN segment")
    s = (np.arange(n_t) + 0.5) / n_t
    total = 0.0
    chunk = max(1, 2**20 // n_t)
    for i0 in range(0, n_k, chunk):
        dens = _solid_angle_density(q, kc[i0 : i0 + chunk], s, h)
        total += dens.sum()
    return float(total * h / n_t / (4 * np.pi))


def dcn_table(q: QuenchProtocol, n_k: int = 512, n_t: int = 512) -> DcnResult:
    """``dcn_analytic`` with every segment's numeric value filled in."""
    res = dcn_analytic(q)
    for m, seg in enumerate(res.segments):
        seg.numeric = dcn_numeric(q, m, n_k, n_t, result=res)
    return res


def lower_band_states(d):
    """Lower-band eigenvectors of d . sigma, shape (..., 2)."""
    d = np.asarray(d, dtype=float)
    if np.any(norm(d) <= GAP_TOL):
        raise GaplessError("parent gap closes on the momentum grid")
    h = np.empty(d.shape[:-1] + (2, 2), dtype=complex)
    h[..., 0, 0] = d[..., 2]
    h[..., 1, 1] = -d[..., 2]
    h[..., 0, 1] = d[..., 0] - 1j * d[..., 1]
    h[..., 1, 0] = d[..., 0] + 1j * d[..., 1]
    _, v = np.linalg.eigh(h)
    return v[..., :, 0]


def wilson_loop_phase(states) -> float:
    """Berry phase -Im log prod <u_n|u_{n+1}> of a closed loop, in (-pi, pi]."""
    u = np.asarray(states)
    overlaps = np.sum(u.conj() * np.roll(u, -1, axis=0), axis=-1)
    z = -float(np.angle(np.prod(overlaps))) + 0.0
    if z <= -np.pi:
        z += 2 * np.pi
    return z


def zak_phase(q: QuenchProtocol, t: float, n_k: int = DEFAULT_NK) -> float:
    """Zak phase of the parent lower band at time t (principal value)."""
    k = momentum_grid(n_k)
    return wilson_loop_phase(lower_band_states(parent_bloch(q, k, t)))


def zak_series(q: QuenchProtocol, times, n_k: int = DEFAULT_NK):
    times = np.asarray(times, dtype=float)
    return times, np.array([zak_phase(q, t, n_k) for t in times])


def phase_distance(a, b):
    """Distance between two angles on the circle."""
    return np.abs(np.angle(np.exp(1j * (np.asarray(a) - np.asarray(b)))))
