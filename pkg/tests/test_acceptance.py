"""Acceptance criteria 1-10.

Every check is recorded with ``record`` and the terminal summary prints one
PASS/FAIL line per criterion (see ``conftest.py``).  Checks whose literal
target contradicts the model are kept verbatim as strict xfails next to a
passing diagnostic of the actual behaviour.

Run alone with ``pytest tests/test_acceptance.py``.
"""

import csv
import time
import warnings

import numpy as np
import pytest

from quenchtopo.bloch import BlochFunction, momentum_grid, norm, parent_bloch, parent_coefficients
from quenchtopo.catalog import build_protocol, parent_period
from quenchtopo.errors import SingularPointWarning
from quenchtopo.free_fermion import (
    PAULI,
    CorrelationEvolver,
    build_lattice,
    degenerate_prefix,
    entanglement_spectrum,
    find_esc,
    flattened_parent,
    golden_minimize,
    ground_correlation,
    lattice_rate,
    momentum_entanglement_spectrum,
    parent_lattice,
    pbc_correlation,
    top_lambdas,
    zero_mode_profiles,
)
from quenchtopo.indicators import (
    dcn_analytic,
    dqpt_times,
    fixed_momenta,
    lower_band_states,
    phase_distance,
    wilson_loop_phase,
    zak_phase,
)
from quenchtopo.interacting import (
    FockBasis,
    Propagator,
    FockState,
    build_hubbard,
    cat_overlaps,
    cat_states,
    ground_state,
    loschmidt_rate,
    many_body_es,
    one_body_density,
    polarized_states,
    second_quantize,
    ssh_post_hamiltonian,
)
from quenchtopo.scenario import Scenario, phase_diagram, run

from conftest import SEED, random_protocol

RESULTS = {}
TITLES = {
    1: "ssh_quench reproduction (L=1000)",
    2: "chiral_to_rice_mele reproduction (L=1000)",
    3: "alpha=beta=0.5 crossing, zero modes, Zak, parent hoppings",
    4: "beta=0 crossings: Zak = pi and chiral zero modes",
    5: "16x16 (alpha, beta) phase diagram",
    6: "indicator-combination coverage and DCN => DQPT on 1000 random protocols",
    7: "ED vs free fermions at U=0, L in {4,6,8}, PBC and OBC",
    8: "analytic Slater checks of the cat states",
    9: "interacting SSH at desk scale (ED)",
    10: "numerical property suite, 1000 random draws",
}
N_RANDOM = 1000


def record(criterion, name, ok, detail=""):
    RESULTS.setdefault(criterion, []).append((name, bool(ok), detail))
    return bool(ok)


def check(criterion, name, ok, detail=""):
    record(criterion, name, ok, detail)
    assert ok, f"{name}: {detail}"


def read_columns(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    return header, body


def local_maxima(t, f):
    i = np.flatnonzero((f[1:-1] > f[:-2]) & (f[1:-1] >= f[2:])) + 1
    return t[i]


def local_minima(t, f):
    i = np.flatnonzero((f[1:-1] < f[:-2]) & (f[1:-1] <= f[2:])) + 1
    return t[i]


# ---------------------------------------------------------------- fixtures


@pytest.fixture(scope="module")
def ssh_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("ssh_run")
    sc = Scenario("ssh_quench", {"J_x": 1.0}, ("rate", "es", "dcn"), L=1000, t_max=2 * np.pi, n_t=801)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingularPointWarning)
        report = run(sc, out)
    return sc, report, out


@pytest.fixture(scope="module")
def chiral_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("chiral_run")
    sc = Scenario("chiral_to_rice_mele", {"J_x": 1.0, "J_z": 1.0}, ("rate", "es", "dcn"), L=1000, t_max=7.0)
    report = run(sc, out)
    return sc, report, out


@pytest.fixture(scope="module")
def ab_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("ab_run")
    sc = Scenario("alpha_beta", {"alpha": 0.5, "beta": 0.5}, ("es", "rate", "parent-spectrum", "zak"), L=200)
    report = run(sc, out)
    return sc, report, out


@pytest.fixture(scope="module")
def scan():
    scan = {"alpha_max": 1.5, "n_alpha": 16, "beta_max": 1.5, "n_beta": 16, "L": 200}
    t0 = time.time()
    cells, failures = phase_diagram(scan)
    return cells, failures, time.time() - t0


# ---------------------------------------------------------------- criterion 1


def test_c1_rate_cusps(ssh_run):
    sc, report, out = ssh_run
    _, body = read_columns(out / "rate.csv")
    t, f = body[:, 0], body[:, 1]
    dt = t[1] - t[0]
    targets = [np.pi / 2, 3 * np.pi / 2]
    peaks = local_maxima(t, f)
    off = [float(np.min(np.abs(peaks - ts))) for ts in targets]
    check(1, "rate peaks at pi/2 + m pi within one grid step", max(off) <= dt + 1e-12,
          f"offsets {off[0]:.2e}, {off[1]:.2e} vs dt {dt:.2e}")
    found = sorted({round(d["t"], 9) for d in report.tasks["rate"]["dqpt_times"]})
    check(1, "dqpt_times = pi/2, 3pi/2", np.allclose(found, targets, atol=1e-9), str(found))


def test_c1_flat_entanglement_spectrum(ssh_run):
    sc, report, out = ssh_run
    _, body = read_columns(out / "es.csv")
    worst = 0.0
    for ts in (np.pi / 2, 3 * np.pi / 2):
        row = body[np.argmin(np.abs(body[:, 0] - ts))]
        worst = max(worst, float(np.max(np.abs(row[1:17] - 1 / 16))))
    check(1, "16 lambdas equal 1/16 within 1e-8", worst < 1e-8, f"max deviation {worst:.1e}")


def test_c1_dcn(ssh_run):
    sc, report, out = ssh_run
    _, body = read_columns(out / "dcn.csv")
    numeric, analytic = body[:, 3], body[:, 4]
    check(1, "analytic DCN segments are exactly {+1, -1}", sorted(analytic.tolist()) == [-1.0, 1.0], str(analytic))
    err = float(np.max(np.abs(numeric - analytic)))
    check(1, "numeric DCN within 1e-3", err < 1e-3, f"max error {err:.1e}")


# ---------------------------------------------------------------- criterion 2


def test_c2_dqpt_at_parent_half_periods(chiral_run):
    # d'(k*) = sqrt 2 at k* = +-pi/2, so t* = (2m+1) pi / (2 sqrt 2)
    sc, report, out = chiral_run
    _, body = read_columns(out / "rate.csv")
    t, f = body[:, 0], body[:, 1]
    dt = t[1] - t[0]
    targets = [(2 * m + 1) * np.pi / (2 * np.sqrt(2)) for m in range(3)]
    peaks = local_maxima(t, f)
    off = [float(np.min(np.abs(peaks - ts))) for ts in targets]
    check(2, "diagnostic: cusps at (2m+1)pi/(2 sqrt 2), m=0..2", max(off) <= dt, f"offsets {np.round(off, 5)}")


@pytest.mark.xfail(strict=True, reason="t* = (2m+1)pi/sqrt2 is twice the period-based cusp time of this protocol")
def test_c2_literal_dqpt_times(chiral_run):
    sc, report, out = chiral_run
    _, body = read_columns(out / "rate.csv")
    t, f = body[:, 0], body[:, 1]
    dt = t[1] - t[0]
    peaks = local_maxima(t, f)
    targets = [(2 * m + 1) * np.pi / np.sqrt(2) for m in range(2)]
    off = [float(np.min(np.abs(peaks - ts))) for ts in targets]
    check(2, "literal: cusps at (2m+1)pi/sqrt2 within one grid step", max(off) <= dt,
          f"nearest peaks off by {np.round(off, 3)}")


def test_c2_no_full_degeneracy(chiral_run):
    sc, report, out = chiral_run
    es = report.tasks["es"]
    check(2, "full-ES relative spread > 1e-2 at every sampled time", es["min_full_spread"] > 1e-2,
          f"min spread {es['min_full_spread']:.3g}")
    check(2, "no ESC detected", es["esc"] == [], f"min pair splitting {es['min_pair_splitting']:.3g}")


def test_c2_dcn(chiral_run):
    sc, report, out = chiral_run
    _, body = read_columns(out / "dcn.csv")
    ok = sorted(body[:, 4].tolist()) == [-1.0, 1.0] and np.max(np.abs(body[:, 3] - body[:, 4])) < 1e-3
    check(2, "DCN = +-1 per segment", ok, str(body[:, 3:]))


# ---------------------------------------------------------------- criterion 3


def test_c3_first_crossing(ab_run):
    sc, report, out = ab_run
    esc = report.tasks["es"]["esc"]
    t1 = esc[0]["t"] if esc else float("nan")
    check(3, "first ESC within 1e-3 of 1.028826", abs(t1 - 1.028826) < 1e-3, f"t1 = {t1:.9f}")


def test_c3_zero_modes_zak_coefficients(ab_run):
    sc, report, out = ab_run
    at = report.tasks["parent-spectrum"]["at_esc"][0]
    t1 = at["t"]
    check(3, "exactly two parent OBC |E| < 1e-6 at t1", at["zero_modes"] == 2,
          f"{at['zero_modes']} modes, min |E| {at['min_abs_E']:.1e}")
    q = sc.protocol()
    z = zak_phase(q, t1)
    check(3, "Zak phase differs from pi by > 0.1", phase_distance(z, np.pi) > 0.1, f"Zak = {z:.6f}")
    c = np.array(parent_coefficients(0.5, 0.5, 1.0, t1).as_tuple())
    expect = np.array([1 / 3, (1 + 1j) / 3, -1j / 6, -1 / 6, 1 / 3, -1 / 3])
    err = float(np.max(np.abs(c - expect)))
    check(3, "parent hoppings (1/3, (1+i)/3, -i/6, -1/6, 1/3, -1/3) within 1e-6", err < 1e-6, f"max error {err:.1e}")


# ---------------------------------------------------------------- criterion 4


def test_c4_zak_and_chiral_zero_modes():
    q = build_protocol("alpha_beta", {"alpha": 0.5, "beta": 0.0})
    times = np.linspace(0, parent_period(q), 401)
    events = find_esc(lambda t: momentum_entanglement_spectrum(q, 200, t, 100, 4), times)
    check(4, "crossings found in one period", len(events) >= 1, f"{len(events)} crossings")
    for e in events:
        z = zak_phase(q, e.t)
        check(4, f"Zak = pi at t = {e.t:.6f}", phase_distance(z, np.pi) < 1e-6, f"|Zak - pi| = {phase_distance(z, np.pi):.1e}")
        H = parent_lattice(q, 200, e.t)
        E = np.abs(H.spectrum())
        # chiral operator: the normal of the plane containing every d_P(k)
        dP = parent_bloch(q, momentum_grid(256), e.t)
        normal = np.linalg.svd(dP)[2][-1]
        G = np.kron(np.eye(200), np.tensordot(normal, PAULI, axes=1))
        anti = float(np.max(np.abs(G @ H.matrix @ G + H.matrix)))
        modes = zero_mode_profiles(H, 1e-6)
        check(4, f"two chiral-symmetric zero modes at t = {e.t:.6f}",
              np.sum(E < 1e-6) == 2 and anti < 1e-10 and sorted(m.edge for m in modes) == ["left", "right"],
              f"{np.sum(E < 1e-6)} modes, |{{Gamma,H}}| = {anti:.1e}")


# ---------------------------------------------------------------- criterion 5


def test_c5_phase_diagram(scan):
    cells, failures, seconds = scan
    check(5, "no failed cells", not failures, str(failures[:3]))
    bad = [c for c in cells if c["dqpt"] != (c["alpha"] ** 2 / c["beta"] < 1)]
    check(5, "DQPT flag equals alpha^2/beta < 1 on all 256 cells", not bad, f"{len(bad)} mismatches")
    combos = {(c["esc"], c["dqpt"]) for c in cells}
    check(5, "all four (ESC, DQPT) combinations occur", len(combos) == 4, f"{sorted(combos)} in {seconds:.0f}s")
    check(5, "DCN = 0 on every cell", all(c["dcn_max_abs"] == 0 for c in cells), "")


# ---------------------------------------------------------------- criterion 6


def test_c6_table_rows(ssh_run, chiral_run, scan):
    def signature(report):
        return (bool(report.tasks["es"]["esc"]), bool(report.tasks["rate"]["dqpt_times"]),
                max(abs(s["analytic"]) for s in report.tasks["dcn"]["segments"]) > 0)

    check(6, "row 1 (yes, yes, yes) from ssh_quench", signature(ssh_run[1]) == (True, True, True), str(signature(ssh_run[1])))
    check(6, "row 2 (no, yes, yes) from chiral_to_rice_mele", signature(chiral_run[1]) == (False, True, True), str(signature(chiral_run[1])))
    cells = scan[0]
    seen = {(c["esc"], c["dqpt"], c["dcn_max_abs"] > 0) for c in cells}
    rows = {5: (True, True, False), 6: (False, True, False), 7: (True, False, False), 8: (False, False, False)}
    for row, sig in rows.items():
        check(6, f"row {row} {sig} in the phase scan", sig in seen, "")


@pytest.mark.filterwarnings("ignore::quenchtopo.errors.NearFixedMomentumWarning")
def test_c6_dcn_implies_dqpt():
    rng = np.random.default_rng(SEED)
    nonzero = violations = 0
    for _ in range(N_RANDOM):
        q = random_protocol(rng)
        if dcn_analytic(q, n_k=256).max_abs() > 0:
            nonzero += 1
            T = np.pi / np.min(norm(q.post(momentum_grid(256))))
            if not dqpt_times(q, T, 256):
                violations += 1
    check(6, f"nonzero DCN => DQPT on {N_RANDOM} draws (seed {SEED})", violations == 0 and nonzero > 0,
          f"{nonzero} draws with nonzero DCN, {violations} violations")


# ---------------------------------------------------------------- criterion 7


def _free_amplitude(Phi0, Hpost, t):
    E, V = np.linalg.eigh(Hpost.matrix)
    U = V @ (np.exp(-1j * E * t)[:, None] * V.conj().T)
    return np.linalg.det(Phi0.conj().T @ U @ Phi0)


# below this |G|^2 the rate is -ln(round-off) on every route
ZERO_AMP2 = 1e-12


@pytest.mark.parametrize("L", [4, 6, 8])
@pytest.mark.parametrize("bc", ["periodic", "open"])
def test_c7_ed_free_fermion(L, bc):
    q = build_protocol("alpha_beta", {"alpha": 0.5, "beta": 0.5})
    times = np.linspace(0, parent_period(q), 13)
    Hpre, Hpost = build_lattice(q.pre, L, bc), build_lattice(q.post, L, bc)
    C0 = ground_correlation(Hpre)
    ev = CorrelationEvolver(C0, Hpost)
    E0, V0 = np.linalg.eigh(Hpre.matrix)
    Phi0 = V0[:, E0 < 0]
    psi0 = ground_state(build_hubbard(q.pre, 0.0, L, bc))[0]
    states = Propagator(build_hubbard(q.post, 0.0, L, bc)).series(psi0, times)
    err_c = err_es = err_amp = err_rate = 0.0
    zeros = []
    for t, psi in zip(times, states):
        C = ev(t)
        err_c = max(err_c, float(np.max(np.abs(one_body_density(psi) - C.matrix))))
        lam = entanglement_spectrum(C, L // 2, 16).lambdas
        err_es = max(err_es, float(np.max(np.abs(many_body_es(psi, L // 2, len(lam)) - lam))))
        g_ed = abs(psi0.overlap(psi))
        g_ff = abs(_free_amplitude(Phi0, Hpost, t))
        err_amp = max(err_amp, abs(g_ed - g_ff))
        if g_ff**2 < ZERO_AMP2:
            zeros.append(round(float(t), 6))
            continue
        f_ed = loschmidt_rate(psi0, psi, L)
        err_rate = max(err_rate, abs(f_ed + np.log(g_ff**2) / L))
        if bc == "periodic":
            err_rate = max(err_rate, abs(f_ed - lattice_rate(q, L, t)))
    worst = max(err_c, err_es, err_amp, err_rate)
    check(7, f"L={L} {bc}", worst < 1e-8,
          f"C {err_c:.1e}, ES {err_es:.1e}, |G| {err_amp:.1e}, rate {err_rate:.1e}, exact zeros at {zeros}")


# ---------------------------------------------------------------- criterion 8

SLATER_L = [4, 6, 8, 16, 32, 64]


def test_c8_open_and_diagonal_overlaps():
    worst = 0.0
    for L in SLATER_L:
        for bc in ("open", "periodic"):
            _, _, parts = cat_overlaps(L, np.pi / 2, bc)
            worst = max(worst, abs(parts["AA"]))
        _, _, parts = cat_overlaps(L, np.pi / 2, "open")
        worst = max(worst, abs(parts["BA"]))
    check(8, "<A|A(pi/2)> = 0 and OBC <B|A(pi/2)> = 0 for L <= 64", worst < 1e-12, f"max |overlap| {worst:.1e}")


def test_c8_periodic_sign_diagnostic():
    dev = 0.0
    for L in SLATER_L:
        s = (-1) ** (L // 2)
        plus, minus, _ = cat_overlaps(L, np.pi / 2, "periodic")
        dev = max(dev, abs(plus + s), abs(minus - s))
        plus, minus, _ = cat_overlaps(L, np.pi / 2, "periodic", twist=-1)
        dev = max(dev, abs(plus - s), abs(minus + s))
    check(8, "diagnostic: PBC gives -+(-1)^{L/2}; the antiperiodic chain gives +-(-1)^{L/2}", dev < 1e-12, f"{dev:.1e}")
    # cross-check the periodic sign with many-body propagation
    L = 6
    H = ssh_post_hamiltonian(L, "periodic")
    Hmb = second_quantize(H.matrix, FockBasis(2 * L, L))
    A, B = polarized_states(Hmb.basis)
    cat = (A.amplitudes + B.amplitudes) / np.sqrt(2)
    psi = FockState(Hmb.basis, cat)
    amp = psi.overlap(Propagator(Hmb).apply(psi, np.pi / 2))
    check(8, "diagnostic: ED agrees with the Slater sign at L=6", abs(amp - 1.0) < 1e-10, f"{amp:.6f}")


@pytest.mark.xfail(strict=True, reason="with periodic hopping the overlap is -+(-1)^{L/2}, not +-(-1)^{L/2}")
def test_c8_literal_periodic_sign():
    dev = 0.0
    for L in SLATER_L:
        s = (-1) ** (L // 2)
        plus, minus, _ = cat_overlaps(L, np.pi / 2, "periodic")
        dev = max(dev, abs(plus - s), abs(minus + s))
    check(8, "literal: PBC <Psi_+-|Psi_+-(pi/2)> = +-(-1)^{L/2}", dev < 1e-12, f"max deviation {dev:.2f}")


# ---------------------------------------------------------------- criterion 9


def test_c9a_kitaev_quench():
    q = build_protocol("kitaev", {"J": 1.0, "U_pre": 10.0, "U_post": 0.0})
    res = dcn_analytic(q)
    check(9, "(a) mapped Kitaev quench has a DCN segment equal to 1",
          1.0 in [s.analytic for s in res.segments], str([s.analytic for s in res.segments]))
    ts = sorted({round(t, 12) for _, t in dqpt_times(q, 6.0)})
    expect = [np.pi / 4 + n * np.pi / 2 for n in range(len(ts))]
    check(9, "(a) cusps at pi/4 + n pi/2", len(ts) >= 3 and np.allclose(ts, expect, atol=1e-9), str(np.round(ts, 6)))


@pytest.mark.parametrize("U", [20.0, 100.0])
@pytest.mark.parametrize("L", [6, 8])
def test_c9b_cat_state_minima(U, L):
    ssh = BlochFunction("ssh", {"J": 1.0, "J_prime": 0.0})
    H0 = build_hubbard(ssh, U, L, "open")
    H1 = build_hubbard(ssh, 0.0, L, "open")
    psi0 = cat_states(H0)[0]
    times = np.linspace(0, np.pi, 801)
    amp = np.array([abs(psi0.overlap(s)) for s in Propagator(H1).series(psi0, times)])
    minima = local_minima(times, amp)
    near_half = all(abs(m - np.pi / 2) < min(abs(m - np.pi / 4), abs(m - 3 * np.pi / 4)) for m in minima)
    check(9, f"(b) U={U:g} L={L}: minima nearest pi/2", len(minima) > 0 and near_half, f"minima {np.round(minima, 3)}")


def _ed_es_series(U, L=8):
    q = build_protocol("alpha_beta", {"alpha": 0.5, "beta": 0.5})
    psi0 = ground_state(build_hubbard(q.pre, 0.0, L, "open"))[0]
    prop = Propagator(build_hubbard(q.post, U, L, "open"))
    T = parent_period(q)

    def lam(t):
        return many_body_es(prop.apply(psi0, t), L // 2, 4)

    return lam, T


def _top_gap(lam):
    return (lam[0] - lam[1]) / lam[0]


def test_c9c_partial_crossing():
    lam, T = _ed_es_series(0.5)
    times = np.linspace(0.05, T, 121)
    gaps = np.array([_top_gap(lam(t)) for t in times])
    i = int(np.argmin(gaps))
    t_star, g = golden_minimize(lambda t: _top_gap(lam(t)), times[max(i - 1, 0)], times[min(i + 1, len(times) - 1)], 1e-9)
    l = lam(t_star)
    third = (l[1] - l[2]) / l[0]
    check(9, "(c) U=0.5: top two lambdas degenerate within 5e-3, lambda_3 split off",
          g < 5e-3 and third > 5e-3 and degenerate_prefix(l, 5e-3) == 2,
          f"t={t_star:.5f}, gap {g:.1e}, (l2-l3)/l1 {third:.2f}")


def test_c9c_no_crossing_strong_u():
    lam, T = _ed_es_series(2.0)
    times = np.linspace(0.05, T, 121)
    gaps = np.array([_top_gap(lam(t)) for t in times])
    check(9, "(c) U=2: no crossing of the top pair in the first period", gaps.min() > 5e-3, f"min gap {gaps.min():.3f}")


# ---------------------------------------------------------------- criterion 10


@pytest.mark.filterwarnings("ignore::quenchtopo.errors.NearFixedMomentumWarning")
def test_c10_property_suite():
    rng = np.random.default_rng(SEED + 1)
    L, cut = 8, 4
    worst = dict.fromkeys(("norm", "period", "C2", "Q2", "lambda", "zak", "dcn_sum"), 0.0)
    k = momentum_grid(64)
    for _ in range(N_RANDOM):
        q = random_protocol(rng)
        t = rng.uniform(0, 5)
        dP = parent_bloch(q, k, t)
        worst["norm"] = max(worst["norm"], float(np.max(np.abs(norm(dP) - norm(q.pre(k))))))
        T = np.pi / norm(q.post(k))
        worst["period"] = max(worst["period"], float(np.max(np.abs(parent_bloch(q, k, t + T) - dP))))
        C = pbc_correlation(q, L, t)
        worst["C2"] = max(worst["C2"], float(np.max(np.abs(C.matrix @ C.matrix - C.matrix))))
        Q = flattened_parent(C).matrix
        worst["Q2"] = max(worst["Q2"], float(np.max(np.abs(Q @ Q - np.eye(2 * L)))))
        xi = np.linalg.eigvalsh(C.restrict(cut))
        lam = top_lambdas(xi, 2 ** (2 * cut))
        worst["lambda"] = max(worst["lambda"], abs(lam.sum() - 1))
        states = lower_band_states(parent_bloch(q, momentum_grid(256), t))
        phases = np.exp(1j * rng.uniform(0, 2 * np.pi, len(states)))
        dz = float(phase_distance(wilson_loop_phase(states), wilson_loop_phase(states * phases[:, None])))
        worst["zak"] = max(worst["zak"], dz)
        worst["dcn_sum"] = max(worst["dcn_sum"], abs(dcn_analytic(q, fixed_momenta(q, 256)).total))
    tol = {"norm": 1e-10, "period": 1e-9, "C2": 1e-10, "Q2": 1e-10, "lambda": 1e-10, "zak": 1e-9, "dcn_sum": 1e-12}
    for key, val in worst.items():
        check(10, f"{key} (seed {SEED + 1})", val < tol[key], f"max {val:.1e} < {tol[key]:.0e}")


def test_c1_timing_note(ssh_run):
    # informational: the whole L=1000 run is part of the fixture
    record(1, "run completed", ssh_run[1].ok, f"{ssh_run[1].metadata['wall_seconds']:.1f}s")
