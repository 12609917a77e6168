"""Fast oracle-equivalence checks runnable from the command line."""

from __future__ import annotations

import math
import time

import numpy as np

from .catalog import build_protocol, parent_period
from .free_fermion import (
    CorrelationEvolver,
    build_lattice,
    entanglement_spectrum,
    ground_correlation,
    lattice_rate,
    momentum_entanglement_spectrum,
    pbc_correlation,
)
from .indicators import dcn_analytic, rate_function
from .interacting import (
    Propagator,
    build_hubbard,
    cat_overlaps,
    ground_state,
    loschmidt_rate,
    many_body_es,
    one_body_density,
)


def _ed_vs_free(L, bc, times):
    q = build_protocol("alpha_beta", {"alpha": 0.5, "beta": 0.5})
    Hpre, Hpost = build_lattice(q.pre, L, bc), build_lattice(q.post, L, bc)
    C0 = ground_correlation(Hpre)
    ev = CorrelationEvolver(C0, Hpost)
    psi0 = ground_state(build_hubbard(q.pre, 0.0, L, bc))[0]
    prop = Propagator(build_hubbard(q.post, 0.0, L, bc))
    worst = 0.0
    for t in times:
        psit = prop.apply(psi0, t)
        C = ev(t)
        worst = max(worst, float(np.max(np.abs(one_body_density(psit) - C.matrix))))
        lam_ff = entanglement_spectrum(C, L // 2, 8).lambdas
        lam_ed = many_body_es(psit, L // 2, len(lam_ff))
        worst = max(worst, float(np.max(np.abs(lam_ff - lam_ed))))
        if bc == "periodic":
            worst = max(worst, abs(lattice_rate(q, L, t) - loschmidt_rate(psi0, psit, L)))
    return worst


def _ssh_limit():
    q = build_protocol("ssh_quench")
    return abs(rate_function(q, np.pi / 2, 16382) - 2 * math.log(2))


def _momentum_vs_dense():
    q = build_protocol("alpha_beta", {"alpha": 0.5, "beta": 0.5})
    L, t = 24, 0.7
    a = momentum_entanglement_spectrum(q, L, t, L // 2, 8).xi
    b = entanglement_spectrum(pbc_correlation(q, L, t), L // 2, 8).xi
    return float(np.max(np.abs(a - b)))


def _kitaev_dcn():
    q = build_protocol("kitaev", {"U_pre": 10.0, "U_post": 0.0})
    return abs(abs(dcn_analytic(q).max_abs()) - 1.0)


def _slater_cats():
    L = 8
    _, _, parts = cat_overlaps(L, np.pi / 2, "open")
    return max(abs(parts["AA"]), abs(parts["BA"]))


CHECKS = [
    ("ED vs free fermions, L=4 PBC", lambda: _ed_vs_free(4, "periodic", np.linspace(0, 3, 7)), 1e-8),
    ("ED vs free fermions, L=4 OBC", lambda: _ed_vs_free(4, "open", np.linspace(0, 3, 7)), 1e-8),
    ("momentum vs dense ES, L=24", _momentum_vs_dense, 1e-10),
    ("ssh_quench rate at pi/2 equals 2 ln 2", _ssh_limit, 1e-3),
    ("mapped Kitaev quench |DCN| = 1", _kitaev_dcn, 1e-12),
    ("open-chain cat overlaps vanish at pi/2", _slater_cats, 1e-12),
]


def run_selftest(stream=print) -> bool:
    ok = True
    for name, func, tol in CHECKS:
        t0 = time.time()
        try:
            err = func()
            passed = err <= tol
            detail = f"error {err:.2e} (tol {tol:.0e})"
        except Exception as exc:  # report and keep going
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        ok &= passed
        stream(f"{'PASS' if passed else 'FAIL'}  {name}: {detail} [{time.time() - t0:.2f}s]")
    return ok


__all__ = ["run_selftest", "CHECKS", "parent_period"]
