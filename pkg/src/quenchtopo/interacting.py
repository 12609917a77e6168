"""
Exact diagonalization of interacting two-band chains at fixed particle number.

Basis states are occupation bitmasks over the 2L orbitals A_0, B_0, A_1, ...
(bit ``2j`` is A_j, bit ``2j+1`` is B_j).  A bitmask ``s`` stands for
``c_{i_1}^dag c_{i_2}^dag ... |0>`` with ``i_1 < i_2 < ...``, i.e. creation
operators applied in descending orbital index.  With this convention
``c_i^dag c_j`` picks up the sign ``(-1)**(number of occupied orbitals
strictly between i and j)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh, expm_multiply

from .bloch import BlochFunction
from .errors import ConfigurationError, DimensionError, NumericalError, SaturationWarning
from .free_fermion import LatticeHamiltonian, build_lattice

MAX_STATES = 10_000_000
MAX_CELLS = 12
DENSE_LIMIT = 5000
DEGENERACY_GAP = 1e-8
SIGN_CONVENTION = (
    "orbitals A_0,B_0,A_1,B_1,...; bitmask s = prod_{i in s, ascending} c_i^dag |0>"
)


def _popcount(x):
    x = np.asarray(x, dtype=np.uint64)
    if hasattr(np, "bitwise_count"):
        return np.bitwise_count(x).astype(np.int64)
    # fallback for numpy < 2
    return np.array([bin(int(v)).count("1") for v in x.ravel()], dtype=np.int64).reshape(x.shape)


class FockBasis:
    """All occupation bitmasks of ``n_orb`` orbitals holding ``N`` fermions."""

    def __init__(self, n_orb: int, N: int):
        if not 0 <= N <= n_orb:
            raise DimensionError(f"cannot place {N} particles in {n_orb} orbitals")
        size = comb(n_orb, N)
        if size > MAX_STATES:
            raise DimensionError(f"Fock space of {size} states exceeds the cap of {MAX_STATES}")
        self.n_orb = n_orb
        self.N = N
        states = np.fromiter(
            (sum(1 << i for i in c) for c in combinations(range(n_orb), N)),
            dtype=np.int64,
            count=size,
        )
        states.sort()
        self.states = states

    def __len__(self) -> int:
        return len(self.states)

    @property
    def L(self) -> int:
        return self.n_orb // 2

    def index(self, masks):
        """Ordinal of each bitmask (must be present in the basis)."""
        masks = np.asarray(masks, dtype=np.int64)
        idx = np.searchsorted(self.states, masks)
        idx = np.minimum(idx, len(self.states) - 1)
        if not np.all(self.states[idx] == masks):
            raise DimensionError("bitmask outside the basis")
        return idx

    def occupations(self) -> np.ndarray:
        """Boolean (n_states, n_orb) occupation table."""
        return ((self.states[:, None] >> np.arange(self.n_orb)) & 1).astype(bool)


def _between_mask(i, j):
    lo, hi = min(i, j), max(i, j)
    return ((1 << hi) - 1) ^ ((1 << (lo + 1)) - 1)


def hop_action(basis: FockBasis, i: int, j: int):
    """Sparse action of c_i^dag c_j: (source rows, target rows, signs)."""
    s = basis.states
    if i == j:
        src = np.flatnonzero((s >> i) & 1)
        return src, src, np.ones(len(src))
    ok = ((s >> j) & 1 == 1) & ((s >> i) & 1 == 0)
    src = np.flatnonzero(ok)
    new = s[src] ^ (1 << j) ^ (1 << i)
    parity = _popcount(s[src] & _between_mask(i, j)) & 1
    return src, basis.index(new), 1.0 - 2.0 * parity


@dataclass
class ManyBodyOperator:
    basis: FockBasis
    matrix: sp.csr_matrix
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.basis)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def expectation(self, psi) -> float:
        v = psi.amplitudes if isinstance(psi, FockState) else psi
        return float(np.vdot(v, self.matrix @ v).real)


def second_quantize(h: np.ndarray, basis: FockBasis, U: float = 0.0) -> ManyBodyOperator:
    """sum_ij h_ij c_i^dag c_j + U sum_j n_{A_j} n_{B_j} on ``basis``."""
    h = np.asarray(h)
    n = basis.n_orb
    if h.shape != (n, n):
        raise DimensionError(f"single-particle matrix {h.shape} does not match {n} orbitals")
    occ = basis.occupations()
    diag = occ @ np.real(np.diag(h))
    if U:
        diag = diag + U * np.sum(occ[:, 0::2] & occ[:, 1::2], axis=1)
    rows, cols, vals = [np.arange(len(basis))], [np.arange(len(basis))], [diag.astype(complex)]
    ii, jj = np.nonzero(h)
    for i, j in zip(ii, jj):
        if i == j:
            continue
        src, dst, sign = hop_action(basis, int(i), int(j))
        rows.append(dst)
        cols.append(src)
        vals.append(h[i, j] * sign)
    dim = len(basis)
    M = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    )
    M.sum_duplicates()
    return ManyBodyOperator(basis, M, {"U": U, "signs": SIGN_CONVENTION})


def build_hubbard(
    f: BlochFunction | None, U: float, L: int, bc: str = "periodic", N: int | None = None
) -> ManyBodyOperator:
    """Interacting chain with single-particle part from ``f`` and Hubbard U.

    ``f=None`` switches off all single-particle terms.  Half filling N = L
    (one fermion per unit cell) is the default.
    """
    if L > MAX_CELLS:
        raise DimensionError(f"L={L} exceeds the desk-scale cap of {MAX_CELLS} cells")
    basis = FockBasis(2 * L, L if N is None else N)
    h = np.zeros((2 * L, 2 * L)) if f is None else build_lattice(f, L, bc).matrix
    op = second_quantize(h, basis, U)
    op.meta.update({"L": L, "bc": bc})
    return op


@dataclass
class FockState:
    basis: FockBasis
    amplitudes: np.ndarray

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "FockState":
        return FockState(self.basis, self.amplitudes / self.norm())

    def overlap(self, other: "FockState") -> complex:
        """<self|other>."""
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    @classmethod
    def product(cls, basis: FockBasis, orbitals) -> "FockState":
        """Occupation-number state with the given orbitals filled."""
        mask = sum(1 << int(i) for i in orbitals)
        v = np.zeros(len(basis), dtype=complex)
        v[basis.index(mask)] = 1.0
        return cls(basis, v)


def ground_state(H: ManyBodyOperator, degeneracy_hint: int = 1, gap_tol: float = DEGENERACY_GAP):
    """Lowest eigenvector(s) of ``H``.

    At least ``degeneracy_hint`` states are returned; further states within
    ``gap_tol`` of the lowest level are appended so that a near-degenerate
    multiplet is never split.
    """
    dim = H.dim
    want = max(int(degeneracy_hint), 1)
    k = min(dim, want + 2)
    if dim <= DENSE_LIMIT or k >= dim - 1:
        E, V = np.linalg.eigh(H.dense())
    else:
        try:
            M = H.matrix
            if not np.any(M.imag.data):
                M = M.real.tocsr()
            # a rough Ritz value bounds E0 from above; shift-invert just below
            # it converges fast even when the lowest levels are nearly degenerate
            e0 = eigsh(M, k=1, which="SA", tol=1e-3, return_eigenvectors=False)[0]
            sigma = e0 - max(1e-3, 1e-3 * abs(e0))
            E, V = eigsh(M, k=k, sigma=sigma, which="LM", tol=1e-13)
        except Exception as exc:  # ArpackNoConvergence carries partial results
            raise NumericalError(f"ground-state solver failed: {exc}") from exc
        order = np.argsort(E)
        E, V = E[order], V[:, order]
        res = np.linalg.norm(H.matrix @ V[:, :want] - V[:, :want] * E[:want], axis=0)
        if np.max(res) > 1e-8:
            raise NumericalError(f"ground-state residual {np.max(res):.2e} above 1e-8")
    n = max(want, int(np.sum(E - E[0] < gap_tol)))
    return [FockState(H.basis, V[:, m].astype(complex)) for m in range(n)]


class Propagator:
    """exp(-iHt) on Fock states: dense for small bases, Taylor-Krylov otherwise."""

    def __init__(self, H: ManyBodyOperator):
        self.H = H
        self._eig = None
        if H.dim <= DENSE_LIMIT:
            self._eig = np.linalg.eigh(H.dense())

    def apply(self, psi: FockState, t: float) -> FockState:
        if psi.basis is not self.H.basis and len(psi.basis) != self.H.dim:
            raise DimensionError("state and Hamiltonian live in different bases")
        if t == 0:
            return FockState(psi.basis, psi.amplitudes.copy())
        if self._eig is not None:
            E, V = self._eig
            c = V.conj().T @ psi.amplitudes
            return FockState(psi.basis, V @ (np.exp(-1j * E * t) * c))
        v = expm_multiply(-1j * t * self.H.matrix, psi.amplitudes)
        return FockState(psi.basis, v)

    def series(self, psi: FockState, times) -> list:
        times = np.asarray(times, dtype=float)
        if self._eig is not None or len(times) < 3:
            return [self.apply(psi, t) for t in times]
        step = np.diff(times)
        if not np.allclose(step, step[0], rtol=1e-12, atol=1e-14):
            return [self.apply(psi, t) for t in times]
        vs = expm_multiply(
            -1j * self.H.matrix, psi.amplitudes, start=times[0], stop=times[-1], num=len(times), endpoint=True
        )
        return [FockState(psi.basis, v) for v in vs]


def evolve_state(psi: FockState, H: ManyBodyOperator, t: float) -> FockState:
    return Propagator(H).apply(psi, t)


def evolve_series(psi: FockState, H: ManyBodyOperator, times) -> list:
    return Propagator(H).series(psi, times)


OVERLAP_FLOOR = 1e-300


def loschmidt_rate(psi0: FockState, psit: FockState, L: int) -> float:
    """-(1/L) ln |<psi0|psi(t)>|^2, normalized per unit cell."""
    p = abs(psi0.overlap(psit)) ** 2
    if p < OVERLAP_FLOOR:
        warnings.warn("return probability below 1e-300; log capped", SaturationWarning, stacklevel=2)
        p = OVERLAP_FLOOR
    return float(-np.log(p) / L)


def many_body_es(psi: FockState, cut: int, n_lambda: int | None = None) -> np.ndarray:
    """Squared Schmidt coefficients for the first ``cut`` cells, descending.

    Left orbitals are the low bits, so the Schmidt matrix factorizes without
    extra fermionic signs; it is block diagonal in the left particle number.
    """
    basis = psi.basis
    L = basis.L
    if not 1 <= cut < L:
        raise DimensionError(f"cut must satisfy 1 <= cut < L={L}, got {cut}")
    nl = 2 * cut
    left = basis.states & ((1 << nl) - 1)
    right = basis.states >> nl
    npart = _popcount(left)
    out = []
    for n in np.unique(npart):
        sel = np.flatnonzero(npart == n)
        lu, li = np.unique(left[sel], return_inverse=True)
        ru, ri = np.unique(right[sel], return_inverse=True)
        M = np.zeros((len(lu), len(ru)), dtype=complex)
        M[li, ri] = psi.amplitudes[sel]
        out.append(np.linalg.svd(M, compute_uv=False) ** 2)
    lam = np.sort(np.concatenate(out))[::-1]
    return lam if n_lambda is None else lam[:n_lambda]


def one_body_density(psi: FockState) -> np.ndarray:
    """C[i, j] = <psi| c_i^dag c_j |psi>."""
    basis = psi.basis
    n = basis.n_orb
    v = psi.amplitudes
    C = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            src, dst, sign = hop_action(basis, i, j)
            C[i, j] = np.vdot(v[dst], sign * v[src])
    return C


def inversion(psi: FockState) -> FockState:
    """Apply sigma_x (x) reflection: orbital (j, A) <-> (L-1-j, B).

    The image of a bitmask is reordered to ascending creation order; the
    permutation parity is the fermionic sign.
    """
    basis = psi.basis
    L = basis.L
    perm = np.empty(2 * L, dtype=np.int64)
    for j in range(L):
        perm[2 * j] = 2 * (L - 1 - j) + 1
        perm[2 * j + 1] = 2 * (L - 1 - j)
    occ = basis.occupations()
    new_masks = np.zeros(len(basis), dtype=np.int64)
    signs = np.ones(len(basis))
    for row in range(len(basis)):
        orbs = perm[np.flatnonzero(occ[row])]
        new_masks[row] = int(np.sum(1 << orbs))
        # parity of the permutation that sorts the image orbitals
        inv = np.sum(orbs[:, None] > orbs[None, :], where=np.triu(np.ones((len(orbs),) * 2, bool), 1))
        signs[row] = -1.0 if inv % 2 else 1.0
    out = np.zeros_like(psi.amplitudes)
    out[basis.index(new_masks)] = signs * psi.amplitudes
    return FockState(basis, out)


def polarized_states(basis: FockBasis):
    """|Psi_A> (all A orbitals filled) and |Psi_B> (all B orbitals filled)."""
    L = basis.L
    return (
        FockState.product(basis, range(0, 2 * L, 2)),
        FockState.product(basis, range(1, 2 * L, 2)),
    )


def cat_states(H: ManyBodyOperator, multiplet=None):
    """Cat states (Psi_A +- Psi_B)/sqrt 2 projected on the ground multiplet.

    At finite U the two lowest levels are split; projecting the ideal cats
    onto the span of the lowest two eigenvectors fixes their relative phase
    instead of relying on the eigensolver's choice within the multiplet.
    """
    if multiplet is None:
        multiplet = ground_state(H, degeneracy_hint=2)
    V = np.column_stack([m.amplitudes for m in multiplet])
    psi_a, psi_b = polarized_states(H.basis)
    out = []
    for s in (1.0, -1.0):
        v = (psi_a.amplitudes + s * psi_b.amplitudes) / np.sqrt(2)
        p = V @ (V.conj().T @ v)
        nrm = np.linalg.norm(p)
        if nrm < 1e-6:
            raise NumericalError("ground multiplet has no weight on the polarized cat state")
        out.append(FockState(H.basis, p / nrm))
    return tuple(out)


@dataclass(frozen=True)
class IsingParameters:
    field: float
    coupling: float
    spin_phase: str
    fermion_phase: str


def map_to_ising(J: float, U: float, J_prime: float = 0.0) -> IsingParameters:
    """Transverse-field Ising chain sum_j [J T^z_j - (U/4) T^x_{j-1} T^x_j]."""
    if J_prime != 0:
        raise ConfigurationError("the bond-operator mapping requires J' = 0")
    coupling = U / 4.0
    if np.isclose(abs(coupling), abs(J), rtol=0, atol=1e-12):
        spin, ferm = "critical", "critical"
    elif abs(coupling) < abs(J):
        spin, ferm = "paramagnetic", "topological"
    else:
        spin, ferm = "antiferromagnetic", "trivial"
    return IsingParameters(float(J), coupling, spin, ferm)


def map_to_kitaev(J: float, U: float, J_prime: float = 0.0) -> BlochFunction:
    """Kitaev-chain Bloch function (0, -U/2 sin k, 2J - U/2 cos k)."""
    if J_prime != 0:
        raise ConfigurationError("the Kitaev mapping requires J' = 0")
    return BlochFunction("kitaev", {"J": J, "U": U}, allow_gapless=True)


def ising_hamiltonian(p: IsingParameters, L: int, bc: str = "periodic") -> sp.csr_matrix:
    """Spin-1/2 chain with Pauli T operators, dimension 2**L."""
    if L > 20:
        raise DimensionError(f"spin chain of {L} sites is too large")
    dim = 1 << L
    s = np.arange(dim)
    bits = (s[:, None] >> np.arange(L)) & 1
    diag = p.field * np.sum(1 - 2 * bits, axis=1).astype(float)
    bonds = [(j - 1, j) for j in range(1, L)]
    if bc == "periodic" and L > 2:
        bonds.append((L - 1, 0))
    rows, cols, vals = [s], [s], [diag]
    for a, b in bonds:
        rows.append(s)
        cols.append(s ^ (1 << a) ^ (1 << b))
        vals.append(np.full(dim, -p.coupling))
    M = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim))
    M.sum_duplicates()
    return M


def ising_quench_overlaps(J: float, U_pre: float, U_post: float, L: int, times, bc: str = "periodic"):
    """|<psi|psi(t)>| for an Ising-chain quench started from the ground state."""
    H0 = ising_hamiltonian(map_to_ising(J, U_pre), L, bc)
    H1 = ising_hamiltonian(map_to_ising(J, U_post), L, bc)
    E, V = np.linalg.eigh(H0.toarray())
    psi = V[:, 0].astype(complex)
    E1, V1 = np.linalg.eigh(H1.toarray())
    c = V1.conj().T @ psi
    times = np.asarray(times, dtype=float)
    amp = np.array([np.vdot(psi, V1 @ (np.exp(-1j * E1 * t) * c)) for t in times])
    return np.abs(amp)


@dataclass
class SlaterState:
    """Slater determinant on 2L orbitals; columns are the occupied orbitals."""

    L: int
    orbitals: np.ndarray

    def __post_init__(self):
        self.orbitals = np.asarray(self.orbitals, dtype=complex)
        if self.orbitals.shape[0] != 2 * self.L:
            raise DimensionError(f"orbital rows {self.orbitals.shape[0]} != 2L = {2 * self.L}")

    @property
    def N(self) -> int:
        return self.orbitals.shape[1]

    def evolve(self, H: LatticeHamiltonian | np.ndarray, t: float) -> "SlaterState":
        h = H.matrix if isinstance(H, LatticeHamiltonian) else np.asarray(H)
        E, V = np.linalg.eigh(h)
        U = V @ (np.exp(-1j * E * t)[:, None] * V.conj().T)
        return SlaterState(self.L, U @ self.orbitals)

    @classmethod
    def polarized(cls, L: int, flavor: str) -> "SlaterState":
        """All A (flavor 'A') or all B orbitals filled, in ascending cell order."""
        off = {"A": 0, "B": 1}[flavor]
        Phi = np.zeros((2 * L, L))
        Phi[2 * np.arange(L) + off, np.arange(L)] = 1.0
        return cls(L, Phi)


def slater_overlap(phi: SlaterState, psi: SlaterState) -> complex:
    """<phi|psi> = det(Phi^dag Psi)."""
    if phi.N != psi.N or phi.L != psi.L:
        raise DimensionError(f"particle numbers differ ({phi.N} vs {psi.N})")
    return complex(np.linalg.det(phi.orbitals.conj().T @ psi.orbitals))


def ssh_post_hamiltonian(L: int, bc: str = "open", J: float = 1.0, twist: complex = 1.0) -> LatticeHamiltonian:
    """J sum_j (a_{j+1}^dag b_j + h.c.); the wrap bond carries ``twist``."""
    h = np.zeros((2 * L, 2 * L), dtype=complex)
    for j in range(L - 1):
        h[2 * (j + 1), 2 * j + 1] = J
    if bc == "periodic":
        h[0, 2 * (L - 1) + 1] = J * twist
    h = h + h.conj().T
    return LatticeHamiltonian(L, bc, h)


def cat_overlaps(L: int, t: float, bc: str = "open", J: float = 1.0, twist: complex = 1.0):
    """<Psi_+-|Psi_+-(t)> for the ideal cats under the U=0 SSH Hamiltonian.

    Returns ``(plus, minus, parts)`` where ``parts`` holds the four
    Slater overlaps AA, BB, AB, BA (``AB = <Psi_A|Psi_B(t)>``).
    """
    H = ssh_post_hamiltonian(L, bc, J, twist)
    A, B = SlaterState.polarized(L, "A"), SlaterState.polarized(L, "B")
    At, Bt = A.evolve(H, t), B.evolve(H, t)
    parts = {
        "AA": slater_overlap(A, At),
        "BB": slater_overlap(B, Bt),
        "AB": slater_overlap(A, Bt),
        "BA": slater_overlap(B, At),
    }
    diag = parts["AA"] + parts["BB"]
    cross = parts["AB"] + parts["BA"]
    return (diag + cross) / 2, (diag - cross) / 2, parts


def bond_basis_evolution(j: int, flavor: str, t: float, L: int, J: float = 1.0) -> dict:
    """exp(-iH't)|j, flavor> for the open chain, in the bond basis.

    Cells are 0-based; bond ``b`` joins (b, B) and (b+1, A) and
    ``w_{b,+-} = (a_{b+1} +- b_b)/sqrt 2`` has energy +-J.  The decoupled end
    states (0, A) and (L-1, B) are returned as site labels with unit weight.
    Keys are ``('bond', b, '+'|'-')`` or ``('site', j, 'A'|'B')``.
    """
    if flavor not in ("A", "B"):
        raise ConfigurationError(f"flavor must be 'A' or 'B', got {flavor!r}")
    if not 0 <= j < L:
        raise ConfigurationError(f"cell {j} outside 0..{L - 1}")
    if (flavor == "A" and j == 0) or (flavor == "B" and j == L - 1):
        return {("site", j, flavor): 1.0 + 0j}
    r = 1 / np.sqrt(2)
    plus, minus = np.exp(-1j * J * t) * r, np.exp(1j * J * t) * r
    if flavor == "A":
        return {("bond", j - 1, "+"): plus, ("bond", j - 1, "-"): minus}
    return {("bond", j, "+"): plus, ("bond", j, "-"): -minus}


def expansion_vector(expansion: dict, L: int) -> np.ndarray:
    """Single-particle amplitude vector of a bond/site expansion."""
    v = np.zeros(2 * L, dtype=complex)
    r = 1 / np.sqrt(2)
    for key, c in expansion.items():
        if key[0] == "site":
            v[2 * key[1] + (0 if key[2] == "A" else 1)] += c
        else:
            b, s = key[1], 1 if key[2] == "+" else -1
            v[2 * (b + 1)] += c * r
            v[2 * b + 1] += s * c * r
    return v
