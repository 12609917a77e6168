"""
Gaussian-state machinery on the real-space lattice.

Orbitals are ordered A_0, B_0, A_1, B_1, ... so orbital ``2j`` is the A site
and ``2j+1`` the B site of cell ``j``.  A correlation matrix stores
``C[i, j] = <c_i^dag c_j>``, which is the transpose of the first-quantized
projector onto the occupied orbitals.
"""

from __future__ import annotations

import heapq
import warnings
from dataclasses import dataclass

import numpy as np

from .bloch import (
    BlochFunction,
    QuenchProtocol,
    momentum_grid,
    parent_bloch,
    unit,
    wrap_momentum,
)
from .errors import (
    AmbiguousFillingError,
    ConfigurationError,
    DimensionError,
    HarmonicRangeError,
    SaturationWarning,
    UndefinedInvariantError,
)

PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)
MAX_RANGE = 2
ACTIVE_TOL = 1e-12
FILLING_TOL = 1e-10
ESC_TOL = 1e-6
PARENT_FIT_POINTS = 64
PARENT_FIT_TOL = 1e-10
BOUNDARY_CUTOFF = 1e-15


def _sigma(d):
    """d . sigma for d of shape (..., 3)."""
    return np.tensordot(np.asarray(d, dtype=complex), PAULI, axes=([-1], [0]))


@dataclass(frozen=True)
class LatticeHamiltonian:
    """First-quantized 2L x 2L Hamiltonian (or flattened parent) of a chain."""

    L: int
    bc: str
    matrix: np.ndarray

    @property
    def n_orbitals(self) -> int:
        return 2 * self.L

    def spectrum(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


def _check_bc(bc):
    if bc not in ("periodic", "open"):
        raise ConfigurationError(f"boundary condition must be 'periodic' or 'open', got {bc!r}")


def build_lattice(f: BlochFunction, L: int, bc: str = "periodic") -> LatticeHamiltonian:
    """Real-space Hamiltonian whose Bloch Hamiltonian is ``f(k) . sigma``.

    The hopping block from cell ``j - r`` to cell ``j`` is
    ``T(r) = (1/L) sum_k exp(-ikr) h(k)``, so harmonic ``h`` contributes
    ``a_h/2`` at ``r = +-h`` and ``+-b_h/(2i)`` at ``r = +-h``.  Open chains
    drop every block that would wrap around; periodic chains shorter than the
    hopping range simply alias.
    """
    _check_bc(bc)
    if L < 2:
        raise ConfigurationError(f"need at least two unit cells, got L={L}")
    if f.harmonic_order > MAX_RANGE:
        raise HarmonicRangeError(
            f"harmonic order {f.harmonic_order} exceeds the supported hopping range {MAX_RANGE}"
        )
    a, b = f.cos_coeffs, f.sin_coeffs
    blocks = {0: _sigma(a[0])}
    for h in range(1, min(len(a), MAX_RANGE + 1)):
        blocks[h] = _sigma(a[h]) / 2 + _sigma(b[h]) / 2j
        blocks[-h] = _sigma(a[h]) / 2 - _sigma(b[h]) / 2j
    H = np.zeros((L, 2, L, 2), dtype=complex)
    j = np.arange(L)
    for r, T in blocks.items():
        if not np.any(T):
            continue
        src = j - r
        if bc == "open":
            ok = (src >= 0) & (src < L)
            rows, cols = j[ok], src[ok]
        else:
            rows, cols = j, src % L
        for row, col in zip(rows, cols):
            H[row, :, col, :] += T
    return LatticeHamiltonian(L, bc, H.reshape(2 * L, 2 * L))


@dataclass(frozen=True)
class CorrelationMatrix:
    """C[i, j] = <c_i^dag c_j> for a Gaussian state on 2L orbitals."""

    matrix: np.ndarray

    @property
    def L(self) -> int:
        return self.matrix.shape[0] // 2

    @property
    def N(self) -> float:
        return float(np.trace(self.matrix).real)

    def restrict(self, cut: int) -> np.ndarray:
        """Block on the first ``cut`` unit cells."""
        return self.matrix[: 2 * cut, : 2 * cut]


def ground_correlation(H: LatticeHamiltonian, allow_degenerate: bool = False) -> CorrelationMatrix:
    """Correlation matrix of the half-filled single-particle ground state.

    All negative-energy orbitals are filled.  A single-particle level within
    ``FILLING_TOL`` of zero makes this ambiguous and raises unless
    ``allow_degenerate``, in which case the lowest L levels are filled.
    """
    E, V = np.linalg.eigh(H.matrix)
    if np.min(np.abs(E)) <= FILLING_TOL:
        if not allow_degenerate:
            raise AmbiguousFillingError(
                f"single-particle level at E={E[np.argmin(np.abs(E))]:.3g}; filling is ambiguous"
            )
        occ = V[:, : H.L]
    else:
        occ = V[:, E < 0]
    return CorrelationMatrix(occ.conj() @ occ.T)


class CorrelationEvolver:
    """Evolve a correlation matrix under a fixed post-quench Hamiltonian.

    The eigendecomposition of ``H'`` is computed once.  With
    ``U = exp(-i H' t)`` acting on orbitals, ``C(t) = conj(U) C0 U^T``.
    """

    def __init__(self, C0: CorrelationMatrix, Hpost: LatticeHamiltonian):
        if C0.matrix.shape != Hpost.matrix.shape:
            raise DimensionError(
                f"correlation matrix {C0.matrix.shape} does not match Hamiltonian {Hpost.matrix.shape}"
            )
        self.C0 = C0
        self.energies, V = np.linalg.eigh(Hpost.matrix)
        self._Vc = V.conj()
        self._M0 = V.T @ C0.matrix @ self._Vc

    def __call__(self, t: float) -> CorrelationMatrix:
        if t == 0:
            return self.C0
        ph = np.exp(-1j * self.energies * t)
        M = ph.conj()[:, None] * self._M0 * ph[None, :]
        return CorrelationMatrix(self._Vc @ M @ self._Vc.conj().T)


def evolve_correlation(C0: CorrelationMatrix, Hpost: LatticeHamiltonian, t: float) -> CorrelationMatrix:
    return CorrelationEvolver(C0, Hpost)(t)


def top_lambdas(xi, n_lambda: int, tol: float = ACTIVE_TOL) -> np.ndarray:
    """Largest many-body ES eigenvalues from single-particle ``xi``.

    Each active mode contributes a factor ``max(xi, 1-xi)`` or
    ``min(xi, 1-xi)``.  Occupation patterns are enumerated best-first with a
    heap over subsets of flipped modes, so only ``n_lambda`` products are
    formed.  Inert modes contribute exactly one.
    """
    xi = np.asarray(xi, dtype=float)
    act = xi[(xi >= tol) & (xi <= 1 - tol)]
    hi = np.maximum(act, 1 - act)
    r = np.sort(np.minimum(act, 1 - act) / hi)[::-1]
    top = float(np.prod(hi))
    n = min(int(n_lambda), 2 ** len(r)) if len(r) < 63 else int(n_lambda)
    out = []
    # entries: (-value, last flipped index, value, value before last flip)
    heap = [(-top, -1, top, top)]
    while heap and len(out) < n:
        _, last, val, base = heapq.heappop(heap)
        out.append(val)
        nxt = last + 1
        if nxt < len(r):
            v = val * r[nxt]
            heapq.heappush(heap, (-v, nxt, v, val))
            if last >= 0:
                v = base * r[nxt]
                heapq.heappush(heap, (-v, nxt, v, base))
    return np.array(out)


def es_spread(xi, tol: float = ACTIVE_TOL) -> float:
    """Relative spread 1 - lambda_min/lambda_max over all nonzero lambda.

    Returns 1 when there are no active modes: a single lambda = 1 is not a
    degeneracy.
    """
    xi = np.asarray(xi, dtype=float)
    act = xi[(xi >= tol) & (xi <= 1 - tol)]
    if len(act) == 0:
        return 1.0
    r = np.minimum(act, 1 - act) / np.maximum(act, 1 - act)
    return float(1.0 - np.prod(r))


def pair_splitting(xi, tol: float = ACTIVE_TOL) -> float:
    """Relative splitting 1 - max_m r_m of the closest lambda pairs.

    A mode with xi = 1/2 pairs every lambda with an equal partner, so a zero
    splitting means the whole spectrum is (at least) doubly degenerate.
    Returns 1 when there are no active modes.
    """
    xi = np.asarray(xi, dtype=float)
    act = xi[(xi >= tol) & (xi <= 1 - tol)]
    if len(act) == 0:
        return 1.0
    r = np.minimum(act, 1 - act) / np.maximum(act, 1 - act)
    return float(1.0 - np.max(r))


def degenerate_modes(xi, tol: float = ESC_TOL) -> int:
    """Number of modes whose lambda pairs are split by less than ``tol``."""
    xi = np.asarray(xi, dtype=float)
    r = np.minimum(xi, 1 - xi) / np.maximum(np.maximum(xi, 1 - xi), 1e-300)
    return int(np.sum(1.0 - r < tol))


def degenerate_prefix(lambdas, tol: float = ESC_TOL) -> int:
    """Number of leading lambdas within ``tol`` (relative) of the largest."""
    lam = np.asarray(lambdas, dtype=float)
    if len(lam) == 0 or lam[0] <= 0:
        return 0
    return int(np.sum((lam[0] - lam) <= tol * lam[0]))


@dataclass
class EntanglementData:
    xi: np.ndarray
    eps: np.ndarray
    lambdas: np.ndarray
    active_tol: float = ACTIVE_TOL

    @property
    def n_active(self) -> int:
        return int(np.sum((self.xi >= self.active_tol) & (self.xi <= 1 - self.active_tol)))

    @property
    def spread(self) -> float:
        return es_spread(self.xi, self.active_tol)

    @property
    def splitting(self) -> float:
        return pair_splitting(self.xi, self.active_tol)


def _entanglement_data(xi, n_lambda, tol=ACTIVE_TOL):
    xi = np.clip(np.sort(np.asarray(xi, dtype=float)), 0.0, 1.0)
    with np.errstate(divide="ignore"):
        eps = np.log1p(-xi) - np.log(xi)
    return EntanglementData(xi, eps, top_lambdas(xi, n_lambda, tol), tol)


def entanglement_spectrum(C: CorrelationMatrix, cut: int | None = None, n_lambda: int = 16) -> EntanglementData:
    """Entanglement data of the first ``cut`` cells (default L/2)."""
    L = C.L
    cut = L // 2 if cut is None else int(cut)
    if not 1 <= cut < L:
        raise DimensionError(f"cut must satisfy 1 <= cut < L={L}, got {cut}")
    xi = np.linalg.eigvalsh(C.restrict(cut))
    return _entanglement_data(xi, n_lambda)


def flattened_parent(C: CorrelationMatrix, bc: str = "periodic") -> LatticeHamiltonian:
    """Band-flattened parent Q = I - 2C."""
    n = C.matrix.shape[0]
    return LatticeHamiltonian(n // 2, bc, np.eye(n) - 2 * C.matrix)


def lattice_momenta(L: int) -> np.ndarray:
    """Allowed momenta 2 pi n / L of a periodic chain, n = 0..L-1, wrapped into [-pi, pi).

    For even L this is the same set as ``momentum_grid(L)``; for odd L that
    grid would describe an antiperiodic chain.
    """
    return wrap_momentum(2.0 * np.pi * np.arange(L) / L)


def momentum_projector(q: QuenchProtocol, k, t: float) -> np.ndarray:
    """Lower-band projector (1 - n_P . sigma)/2 of the parent at each k."""
    n = unit(parent_bloch(q, k, t), "parent Bloch vector")
    return (np.eye(2) - _sigma(n)) / 2


def correlation_blocks(q: QuenchProtocol, L: int, t: float) -> np.ndarray:
    """Translation-invariant blocks C(r), r = 0..L-1, of the periodic chain.

    ``C[(j, a), (j - r, b)] = C(r)[a, b] = (1/L) sum_k exp(ikr) P(k)^T[a, b]``
    on the L lattice momenta; returned with shape (L, 2, 2).
    """
    G = np.swapaxes(momentum_projector(q, lattice_momenta(L), t), -1, -2)
    return np.fft.ifft(G, axis=0)


def pbc_correlation(q: QuenchProtocol, L: int, t: float) -> CorrelationMatrix:
    """Full 2L x 2L correlation matrix assembled from momentum blocks."""
    blocks = correlation_blocks(q, L, t)
    j = np.arange(L)
    r = (j[:, None] - j[None, :]) % L
    C = blocks[r].transpose(0, 2, 1, 3).reshape(2 * L, 2 * L)
    return CorrelationMatrix(C)


def _block_matrix(blocks, rows, cols, L):
    r = (np.asarray(rows)[:, None] - np.asarray(cols)[None, :]) % L
    return blocks[r].transpose(0, 2, 1, 3).reshape(2 * len(rows), 2 * len(cols))


def momentum_entanglement_spectrum(
    q: QuenchProtocol, L: int, t: float, cut: int | None = None, n_lambda: int = 16
) -> EntanglementData:
    """Entanglement data of a periodic chain without forming the full C_S.

    For a pure state ``C_S - C_S^2 = C_{S,Sbar} C_{Sbar,S}``, which lives on
    cells within the correlation range R of the two cuts.  Only that boundary
    block is diagonalized; every other restricted mode is inert.  Falls back
    to the dense route when the boundary regions would overlap.
    """
    cut = L // 2 if cut is None else int(cut)
    if not 1 <= cut < L:
        raise DimensionError(f"cut must satisfy 1 <= cut < L={L}, got {cut}")
    blocks = correlation_blocks(q, L, t)
    mags = np.max(np.abs(blocks), axis=(1, 2))
    mags = np.maximum(mags, mags[(-np.arange(L)) % L])
    big = np.flatnonzero(mags[: L // 2 + 1] > BOUNDARY_CUTOFF)
    R = max(int(big[-1]) + 1 if len(big) else 1, 1)
    if 2 * R > cut or 2 * R > L - cut:
        return entanglement_spectrum(pbc_correlation(q, L, t), cut, n_lambda)
    B = np.r_[np.arange(R), np.arange(cut - R, cut)]
    far = np.r_[np.arange(cut, cut + R), np.arange(L - R, L)]
    K = _block_matrix(blocks, B, far, L)
    mu, W = np.linalg.eigh(K @ K.conj().T)
    U = W[:, mu > 1e-13]
    CBB = _block_matrix(blocks, B, B, L)
    xi_act = np.linalg.eigvalsh(U.conj().T @ CBB @ U) if U.shape[1] else np.empty(0)
    n_total = 2 * cut
    trace = cut * float(np.trace(blocks[0]).real)
    n_ones = int(round(trace - xi_act.sum()))
    n_zeros = n_total - len(xi_act) - n_ones
    xi = np.r_[np.zeros(n_zeros), xi_act, np.ones(n_ones)]
    return _entanglement_data(xi, n_lambda)


def lattice_rate(q: QuenchProtocol, L: int, t: float) -> float:
    """Finite-L rate -(1/L) ln prod_k |<u(k)|u_P(k,t)>|^2 on L lattice momenta."""
    k = lattice_momenta(L)
    n = unit(q.pre(k))
    nP = unit(parent_bloch(q, k, t))
    p = (1.0 + np.sum(n * nP, axis=-1)) / 2
    if np.any(p < 1e-300):
        warnings.warn("return probability underflow; log capped", SaturationWarning, stacklevel=2)
        p = np.maximum(p, 1e-300)
    return float(-np.sum(np.log(p)) / L)


def parent_lattice(q: QuenchProtocol, L: int, t: float, bc: str = "open") -> LatticeHamiltonian:
    """Real-space parent Hamiltonian H_P(t) fitted from d_P(., t).

    d_P is sampled on ``PARENT_FIT_POINTS`` momenta and fitted with at most
    two harmonics; a larger residual means the parent has longer-range
    hopping than the lattice builder supports.
    """
    k = momentum_grid(PARENT_FIT_POINTS)
    fit, residual = BlochFunction.from_samples(parent_bloch(q, k, t), max_order=MAX_RANGE, allow_gapless=True)
    if residual > PARENT_FIT_TOL:
        raise HarmonicRangeError(
            f"parent Bloch vector at t={t:.6g} is not a two-harmonic series (residual {residual:.2e})"
        )
    return build_lattice(fit, L, bc)


def zero_mode_tol(H: LatticeHamiltonian) -> float:
    return max(1e-8, 100 * np.finfo(float).eps * float(np.linalg.norm(H.matrix, 2)))


@dataclass
class ParentSpectrumSeries:
    times: np.ndarray
    energies: np.ndarray
    L: int = 0

    def zero_mode_count(self, tol: float = 1e-8) -> np.ndarray:
        return np.sum(np.abs(self.energies) < tol, axis=1)


def parent_obc_spectrum(q: QuenchProtocol, L: int, times, bc: str = "open") -> ParentSpectrumSeries:
    times = np.atleast_1d(np.asarray(times, dtype=float))
    E = np.array([parent_lattice(q, L, t, bc).spectrum() for t in times])
    return ParentSpectrumSeries(times, E, L)


@dataclass
class ZeroModeProfile:
    energy: float
    density: np.ndarray
    edge: str
    loc_length: float


def _loc_length(density, edge):
    """Decay length of the cell density from a log-linear fit of its tail."""
    d = density if edge == "left" else density[::-1]
    L = len(d)
    j0 = int(np.argmax(d[: max(1, L // 2)]))
    tail = d[j0 : L // 2]
    keep = tail > 1e-13 * d[j0]
    x = np.arange(len(tail))[keep]
    if len(x) < 3:
        return 0.0
    # stop at the first cell that falls below the floor
    stop = np.flatnonzero(~keep)
    if len(stop):
        x = x[x < stop[0]]
    if len(x) < 3:
        return 0.0
    slope = np.polyfit(x, np.log(tail[x]), 1)[0]
    return float(-1.0 / slope) if slope < 0 else float("inf")


def zero_mode_profiles(H: LatticeHamiltonian, tol: float | None = None):
    """Cell densities of the zero modes of ``H``, localized at the edges.

    The zero-energy subspace is rotated to eigenvectors of the cell-position
    operator so that each returned mode sits on one edge.
    """
    tol = zero_mode_tol(H) if tol is None else tol
    E, V = np.linalg.eigh(H.matrix)
    sel = np.abs(E) < tol
    if not np.any(sel):
        return []
    Z = V[:, sel]
    x = np.repeat(np.arange(H.L), 2).astype(float)
    _, R = np.linalg.eigh(Z.conj().T @ (x[:, None] * Z))
    Z = Z @ R
    Ez = np.real(np.einsum("im,ij,jm->m", Z.conj(), H.matrix, Z))
    out = []
    for m in range(Z.shape[1]):
        dens = (np.abs(Z[:, m]) ** 2).reshape(H.L, 2).sum(axis=1)
        centre = float(np.dot(np.arange(H.L), dens))
        edge = "left" if centre < (H.L - 1) / 2 else "right"
        out.append(ZeroModeProfile(float(Ez[m]), dens, edge, _loc_length(dens, edge)))
    return out


def z2_real_momentum_invariant(q: QuenchProtocol, t: float, tol: float = 1e-12) -> int:
    """nu(t) from (-1)^nu = sign[d_P^x(0,t) d_P^x(pi,t)]."""
    dx = parent_bloch(q, np.array([0.0, -np.pi]), t)[:, 0]
    return z2_from_signs(dx[0], dx[1], tol)


def z2_from_signs(dx0: float, dxpi: float, tol: float = 1e-12) -> int:
    if abs(dx0) <= tol or abs(dxpi) <= tol:
        raise UndefinedInvariantError(
            f"d_P^x vanishes at a real momentum (d_x(0)={dx0:.3g}, d_x(pi)={dxpi:.3g})"
        )
    return 0 if dx0 * dxpi > 0 else 1


def golden_minimize(func, lo: float, hi: float, xatol: float = 1e-12, max_iter: int = 200):
    """Golden-section search for a unimodal minimum, to absolute tolerance.

    Unlike the bounded Brent solver this has no relative tolerance floor, so a
    V-shaped minimum is located to ``xatol`` regardless of its position.
    """
    g = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = float(lo), float(hi)
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = func(c), func(d)
    for _ in range(max_iter):
        if b - a <= xatol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = func(d)
    return (c, fc) if fc <= fd else (d, fd)


@dataclass
class EscEvent:
    t: float
    spread: float
    order: int


def find_esc(es_at, times, tol: float = ESC_TOL, xatol: float = 1e-12):
    """Times at which the ES becomes fully degenerate.

    ``es_at(t)`` returns ``EntanglementData``.  Local minima of the pair
    splitting on the sampled grid are refined by bounded scalar minimization
    within one grid step; a refined splitting below ``tol`` is a crossing.
    The order 2**p counts the p modes pinned at xi = 1/2.
    """
    times = np.asarray(times, dtype=float)
    s = np.array([es_at(t).splitting for t in times])
    events = []
    for i in range(len(times)):
        left = s[i - 1] if i > 0 else np.inf
        right = s[i + 1] if i + 1 < len(times) else np.inf
        if not (s[i] <= left and s[i] < right or s[i] < left and s[i] <= right):
            continue
        lo = times[max(i - 1, 0)]
        hi = times[min(i + 1, len(times) - 1)]
        t_best, s_best = times[i], s[i]
        if hi > lo and s_best > 0:
            t_ref, s_ref = golden_minimize(lambda t: es_at(t).splitting, lo, hi, xatol)
            if s_ref < s_best:
                t_best, s_best = t_ref, s_ref
        if s_best < tol:
            order = 2 ** max(degenerate_modes(es_at(t_best).xi, tol), 1)
            events.append(EscEvent(float(t_best), float(s_best), order))
    return events
