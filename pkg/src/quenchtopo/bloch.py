"""
Two-band Bloch functions, quench protocols and the parent Hamiltonian.

A two-band Bloch Hamiltonian is h(k) = d(k) . sigma with a real 3-vector d(k).
Every supported family is stored internally as a short Fourier series

    d(k) = sum_h  a_h cos(h k) + b_h sin(h k),      h = 0 .. H,

so that evaluation, real-space construction and parent-Hamiltonian fits all
share one representation.  Bloch vectors are plain numpy arrays whose last
axis has length 3; all functions broadcast over leading axes.

Energies are in units of J and times in units of 1/J.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, GaplessError

MAX_HARMONIC = 8
GAP_TOL = 1e-12
DEFAULT_NK = 1024


def momentum_grid(n_k: int = DEFAULT_NK) -> np.ndarray:
    """Uniform Brillouin-zone grid k_n = -pi + 2 pi n / N (pi excluded)."""
    if n_k < 2:
        raise ConfigurationError(f"momentum grid needs at least 2 points, got {n_k}")
    return -np.pi + 2.0 * np.pi * np.arange(n_k) / n_k


def wrap_momentum(k):
    """Map momenta into [-pi, pi)."""
    return np.mod(np.asarray(k, dtype=float) + np.pi, 2.0 * np.pi) - np.pi


def _harmonic_table(params):
    """Build (cos, sin) coefficient tables of shape (H+1, 3)."""
    cos = np.asarray(params.get("cos", [[0.0, 0.0, 0.0]]), dtype=float)
    sin = np.asarray(params.get("sin", np.zeros_like(cos)), dtype=float)
    if cos.ndim != 2 or cos.shape[1] != 3 or sin.ndim != 2 or sin.shape[1] != 3:
        raise ConfigurationError("harmonic coefficients must be lists of 3-vectors")
    n = max(len(cos), len(sin))
    if n - 1 > MAX_HARMONIC:
        raise ConfigurationError(f"harmonic order {n - 1} exceeds the cap of {MAX_HARMONIC}")
    a = np.zeros((n, 3))
    b = np.zeros((n, 3))
    a[: len(cos)] = cos
    b[: len(sin)] = sin
    b[0] = 0.0
    return a, b


def _family_table(family, p):
    z = np.zeros
    if family == "constant":
        J, beta, alpha = p.get("J", 1.0), p.get("beta", 0.0), p.get("alpha", 0.0)
        a = np.array([[beta * J, 0.0, alpha * J]])
        return a, z((1, 3))
    if family == "ssh_circle":
        Jx = p.get("J_x", 1.0)
        a = np.array([[0.0, 0.0, 0.0], [Jx, 0.0, 0.0]])
        b = np.array([[0.0, 0.0, 0.0], [0.0, Jx, 0.0]])
        return a, b
    if family in ("rice_mele", "dispersive"):
        J, alpha = p.get("J", 1.0), p.get("alpha", 0.0)
        delta = p.get("delta", 0.0) if family == "dispersive" else 0.0
        a = np.array([[delta * J, 0.0, alpha * J], [J, 0.0, 0.0]])
        b = np.array([[0.0, 0.0, 0.0], [0.0, J, 0.0]])
        return a, b
    if family == "chiral_cos":
        # (J_x, 0, J_z cos k)
        Jx, Jz = p.get("J_x", 1.0), p.get("J_z", 1.0)
        a = np.array([[Jx, 0.0, 0.0], [0.0, 0.0, Jz]])
        return a, z((2, 3))
    if family == "kitaev":
        J, U = p.get("J", 1.0), p.get("U", 0.0)
        a = np.array([[0.0, 0.0, 2.0 * J], [0.0, 0.0, -U / 2.0]])
        b = np.array([[0.0, 0.0, 0.0], [0.0, -U / 2.0, 0.0]])
        return a, b
    if family == "ssh":
        # intra-cell J' a_j^dag b_j, inter-cell J a_{j+1}^dag b_j
        J, Jp = p.get("J", 1.0), p.get("J_prime", 0.0)
        a = np.array([[Jp, 0.0, 0.0], [J, 0.0, 0.0]])
        b = np.array([[0.0, 0.0, 0.0], [0.0, -J, 0.0]])
        return a, b
    if family == "harmonic":
        return _harmonic_table(p)
    raise ConfigurationError(f"unknown Bloch family {family!r}")


FAMILY_PARAMETERS = {
    "constant": ("J", "beta", "alpha"),
    "ssh_circle": ("J_x",),
    "rice_mele": ("J", "alpha"),
    "dispersive": ("J", "alpha", "delta"),
    "chiral_cos": ("J_x", "J_z"),
    "kitaev": ("J", "U"),
    "ssh": ("J", "J_prime"),
    "harmonic": ("cos", "sin"),
}


@dataclass(frozen=True)
class BlochFunction:
    """A named, parametrized map k -> d(k).

    Parameters
    ----------
    family : str
        One of ``FAMILY_PARAMETERS``.
    params : dict
        Family parameters; missing ones take their defaults.
    allow_gapless : bool
        Skip the check that |d(k)| > 0 on the default momentum grid.
    """

    family: str
    params: dict = field(default_factory=dict)
    allow_gapless: bool = False

    def __post_init__(self):
        if self.family not in FAMILY_PARAMETERS:
            raise ConfigurationError(f"unknown Bloch family {self.family!r}")
        unknown = set(self.params) - set(FAMILY_PARAMETERS[self.family])
        if unknown:
            raise ConfigurationError(
                f"unknown parameters {sorted(unknown)} for family {self.family!r}"
            )
        a, b = _family_table(self.family, self.params)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ConfigurationError(f"non-finite parameters for family {self.family!r}")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "cos_coeffs", a)
        object.__setattr__(self, "sin_coeffs", b)
        if not self.allow_gapless:
            norms = np.linalg.norm(self(momentum_grid()), axis=-1)
            i = int(np.argmin(norms))
            if norms[i] <= GAP_TOL:
                raise GaplessError(
                    f"{self.family} Bloch vector vanishes near k={momentum_grid()[i]:.6g}",
                    k=momentum_grid()[i],
                )

    def __call__(self, k):
        k = np.asarray(k, dtype=float)
        h = np.arange(len(self.cos_coeffs))
        hk = k[..., None] * h
        return np.cos(hk) @ self.cos_coeffs + np.sin(hk) @ self.sin_coeffs

    @property
    def harmonic_order(self) -> int:
        nz = np.flatnonzero(
            np.any(self.cos_coeffs != 0, axis=1) | np.any(self.sin_coeffs != 0, axis=1)
        )
        return int(nz[-1]) if len(nz) else 0

    @classmethod
    def from_harmonics(cls, cos, sin=None, allow_gapless=False):
        params = {"cos": np.asarray(cos, dtype=float).tolist()}
        if sin is not None:
            params["sin"] = np.asarray(sin, dtype=float).tolist()
        return cls("harmonic", params, allow_gapless=allow_gapless)

    @classmethod
    def from_samples(cls, samples, max_order=MAX_HARMONIC, allow_gapless=False):
        """Fit a Fourier series to d sampled on ``momentum_grid(len(samples))``.

        Returns the fitted function and the max-abs reconstruction residual,
        which is zero (to rounding) whenever the samples come from a series of
        order <= max_order and the grid has more than 2*max_order points.
        """
        samples = np.asarray(samples, dtype=float)
        n = len(samples)
        order = min(max_order, MAX_HARMONIC, (n - 1) // 2)
        k = momentum_grid(n)
        h = np.arange(order + 1)
        phase = np.exp(-1j * np.outer(h, k))
        c = phase @ samples / n
        a = np.empty((order + 1, 3))
        b = np.zeros((order + 1, 3))
        a[0] = c[0].real
        a[1:] = 2.0 * c[1:].real
        b[1:] = -2.0 * c[1:].imag
        # round-off in the transform must not register as higher harmonics
        floor = 64 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(samples), initial=0.0)))
        a[np.abs(a) < floor] = 0.0
        b[np.abs(b) < floor] = 0.0
        fit = cls.from_harmonics(a, b, allow_gapless=True)
        residual = float(np.max(np.abs(fit(k) - samples))) if n else 0.0
        if not allow_gapless:
            fit = cls.from_harmonics(a, b, allow_gapless=False)
        return fit, residual


def norm(d):
    """Euclidean norm over the last axis."""
    return np.linalg.norm(d, axis=-1)


def unit(d, what="Bloch vector"):
    """Normalize d, refusing vectors shorter than ``GAP_TOL``."""
    r = norm(d)
    if np.any(r <= GAP_TOL):
        raise GaplessError(f"{what} vanishes; the unit vector is undefined")
    return d / r[..., None]


@dataclass(frozen=True)
class QuenchProtocol:
    """Sudden switch from h(k) = d(k).sigma (pre) to h'(k) = d'(k).sigma (post)."""

    pre: BlochFunction
    post: BlochFunction
    label: str = ""

    def reversed(self) -> "QuenchProtocol":
        return QuenchProtocol(self.post, self.pre, label=f"reversed {self.label}".strip())


def decompose(d, dp):
    """Split d into parts parallel and perpendicular to dp, plus the rotation partner.

    Returns ``(d_par, d_perp, d_o)`` with ``d_par + d_perp == d`` and
    ``d_o = -(d x dp)/|dp|``.  When d is collinear with dp the perpendicular
    parts vanish identically.
    """
    d = np.asarray(d, dtype=float)
    dp = np.asarray(dp, dtype=float)
    r = norm(dp)
    if np.any(r <= GAP_TOL):
        raise GaplessError("post-quench Bloch vector vanishes; decomposition undefined")
    proj = np.sum(d * dp, axis=-1) / r**2
    d_par = proj[..., None] * dp
    d_perp = d - d_par
    d_o = -np.cross(d, dp) / r[..., None]
    return d_par, d_perp, d_o


def eval_bloch(f: BlochFunction, k):
    """Evaluate d(k) for a Bloch function (thin functional alias)."""
    return f(k)


def parent_bloch(q: QuenchProtocol, k, t):
    """Parent Bloch vector d_P(k, t), the rotation of d(k) about d'(k) by 2|d'(k)| t.

    ``k`` and ``t`` broadcast against each other; the result has a trailing
    axis of length 3.
    """
    k = np.asarray(k, dtype=float)
    t = np.asarray(t, dtype=float)
    d = q.pre(k)
    dp = q.post(k)
    d_par, d_perp, d_o = decompose(d, dp)
    w = 2.0 * norm(dp)
    phase = w * t
    c = np.cos(phase)[..., None]
    s = np.sin(phase)[..., None]
    return d_par + c * d_perp + s * d_o


def parent_bloch_dt(q: QuenchProtocol, k, t):
    """Closed-form time derivative of ``parent_bloch``."""
    k = np.asarray(k, dtype=float)
    t = np.asarray(t, dtype=float)
    d = q.pre(k)
    dp = q.post(k)
    _, d_perp, d_o = decompose(d, dp)
    w = norm(dp)[..., None] * 2.0
    phase = w[..., 0] * t
    c = np.cos(phase)[..., None]
    s = np.sin(phase)[..., None]
    return w * (c * d_o - s * d_perp)


def period_at(q: QuenchProtocol, k):
    """Per-momentum period pi/|d'(k)| of the parent Bloch vector."""
    r = norm(q.post(np.asarray(k, dtype=float)))
    if np.any(r <= GAP_TOL):
        raise GaplessError("post-quench gap closes; the period diverges")
    return np.pi / r


@dataclass(frozen=True)
class ParentCoefficients:
    """Hoppings of the parent Hamiltonian for the (beta, 0, alpha) -> (cos, sin, alpha) quench.

    The off-diagonal element is ``delta + epsilon e^{-ik} + eta e^{-2ik}`` and
    the diagonal one ``m + m_c cos k + m_s sin k``.
    """

    eta: complex
    epsilon: complex
    delta: complex
    m: float
    m_c: float
    m_s: float

    def as_tuple(self):
        return (self.eta, self.epsilon, self.delta, self.m, self.m_c, self.m_s)

    def bloch(self, k):
        k = np.asarray(k, dtype=float)
        off = self.delta + self.epsilon * np.exp(-1j * k) + self.eta * np.exp(-2j * k)
        mz = self.m + self.m_c * np.cos(k) + self.m_s * np.sin(k)
        return np.stack([off.real, -off.imag, mz * np.ones_like(off.real)], axis=-1)

    def bloch_function(self, allow_gapless=True) -> BlochFunction:
        e, h, dl = complex(self.epsilon), complex(self.eta), complex(self.delta)
        cos = [
            [dl.real, -dl.imag, self.m],
            [e.real, -e.imag, self.m_c],
            [h.real, -h.imag, 0.0],
        ]
        sin = [
            [0.0, 0.0, 0.0],
            [e.imag, e.real, self.m_s],
            [h.imag, h.real, 0.0],
        ]
        return BlochFunction.from_harmonics(cos, sin, allow_gapless=allow_gapless)


def parent_coefficients(alpha: float, beta: float, J: float = 1.0, t: float = 0.0):
    """Closed-form parent hoppings for the constant -> flat Rice-Mele quench."""
    if not J > 0:
        raise ConfigurationError(f"J must be positive, got {J}")
    s = np.sqrt(1.0 + alpha**2)
    x = s * J * t
    c2, s2 = np.cos(2 * x), np.sin(2 * x)
    eta = beta * J / s**2 * np.sin(x) ** 2
    epsilon = alpha * J / s**2 * (alpha * (1.0 - c2) + 1j * s * s2)
    delta = beta * J / (2.0 * s**2) * (1.0 + (1.0 + 2 * alpha**2) * c2 - 2j * alpha * s * s2)
    m = alpha * J / s**2 * (alpha**2 + c2)
    m_c = 2.0 * J * alpha * beta / s**2 * np.sin(x) ** 2
    m_s = -beta * J / s * s2
    return ParentCoefficients(complex(eta), complex(epsilon), complex(delta), float(m), float(m_c), float(m_s))
