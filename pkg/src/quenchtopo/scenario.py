"""
Scenario files, task runners and the (alpha, beta) phase-diagram scan.

A scenario is an INI file with sections ``[protocol]``, ``[grid]``,
``[tasks]``, ``[interaction]``, ``[scan]`` and ``[output]``.  Each task writes
one CSV file with a fixed header; numbers are printed with 17 significant
digits so identical scenarios give byte-identical CSV files.  Run metadata,
including timestamps, goes to ``report.json`` only.
"""

from __future__ import annotations

import configparser
import csv
import json
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bloch import DEFAULT_NK, BlochFunction, QuenchProtocol
from .catalog import CATALOG, build_protocol, parent_period
from .errors import ConfigurationError, QuenchError
from .free_fermion import (
    ESC_TOL,
    CorrelationEvolver,
    build_lattice,
    entanglement_spectrum,
    find_esc,
    ground_correlation,
    momentum_entanglement_spectrum,
    parent_obc_spectrum,
    zero_mode_tol,
    parent_lattice,
    z2_real_momentum_invariant,
)
from .indicators import dcn_analytic, dcn_table, dqpt_times, rate_curve, zak_series
from .interacting import (
    SIGN_CONVENTION,
    Propagator,
    build_hubbard,
    cat_overlaps,
    cat_states,
    ground_state,
    loschmidt_rate,
    many_body_es,
)

TASKS = ("rate", "es", "dcn", "zak", "parent-spectrum", "z2", "phase-diagram", "ed", "slater")
POINTS_PER_PERIOD = 400
ZERO_MODE_CUT = 1e-6

KNOWN_KEYS = {
    "protocol": None,  # family-specific, checked by the catalog
    "grid": {"L", "bc", "cut", "t_max", "n_t", "n_k", "n_lambda", "dcn_n_k", "dcn_n_t", "parent_L"},
    "tasks": {"list"},
    "interaction": {"U", "ed_L", "ed_bc", "initial"},
    "scan": {"alpha_min", "alpha_max", "n_alpha", "beta_min", "beta_max", "n_beta", "L", "J"},
    "output": {"dir"},
}


@dataclass
class Scenario:
    family: str
    params: dict
    tasks: tuple
    label: str = ""
    L: int = 200
    bc: str = "periodic"
    cut: int | None = None
    t_max: float | None = None
    n_t: int | None = None
    n_k: int = DEFAULT_NK
    n_lambda: int = 16
    dcn_n_k: int = 512
    dcn_n_t: int = 512
    parent_L: int | None = None
    U: float = 0.0
    ed_L: int = 6
    ed_bc: str = "open"
    initial: str = "ground"
    scan: dict = field(default_factory=dict)
    out_dir: str = "out"
    tol_esc: float = ESC_TOL
    source: str = ""

    def protocol(self) -> QuenchProtocol:
        if self.family == "interacting_ssh":
            p = self.params
            return build_protocol("kitaev", {k: p[k] for k in ("J", "U_pre", "U_post") if k in p})
        return build_protocol(self.family, self.params)

    def period(self) -> float:
        return parent_period(self.protocol())

    def time_grid(self) -> np.ndarray:
        t_max = self.period() if self.t_max is None else self.t_max
        n_t = self.n_t
        if n_t is None:
            n_t = int(math.ceil(POINTS_PER_PERIOD * t_max / self.period())) + 1
        return np.linspace(0.0, t_max, n_t)


def _number(section, key, raw, kind=float):
    try:
        return kind(raw)
    except ValueError as exc:
        raise ConfigurationError(f"[{section}] {key}: malformed number {raw!r}") from exc


def _complain(strict, msg):
    if strict:
        raise ConfigurationError(msg)
    warnings.warn(msg, UserWarning, stacklevel=3)


def parse_scenario(path, strict: bool = False) -> Scenario:
    """Read and validate a scenario file; no computation happens here."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"scenario file {path} not found")
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
    return scenario_from_config(cp, strict, source=str(path))


def scenario_from_config(cp: configparser.ConfigParser, strict: bool = False, source: str = "") -> Scenario:
    for sec in cp.sections():
        if sec not in KNOWN_KEYS:
            _complain(strict, f"unknown section [{sec}]")
            continue
        allowed = KNOWN_KEYS[sec]
        if allowed is not None:
            for key in cp[sec]:
                if key not in allowed:
                    _complain(strict, f"unknown key {key!r} in [{sec}]")
    if not cp.has_section("protocol") or "family" not in cp["protocol"]:
        raise ConfigurationError("missing required key [protocol] family")
    proto = dict(cp["protocol"])
    family = proto.pop("family").strip()
    label = proto.pop("label", family)
    if family not in CATALOG:
        raise ConfigurationError(f"unknown protocol family {family!r}")
    tasks_raw = cp.get("tasks", "list", fallback="")
    tasks = tuple(t.strip() for t in tasks_raw.split(",") if t.strip())
    if not tasks:
        raise ConfigurationError("empty task list ([tasks] list)")
    for t in tasks:
        if t not in TASKS:
            raise ConfigurationError(f"unknown task {t!r}; choose from {', '.join(TASKS)}")

    g = cp["grid"] if cp.has_section("grid") else {}
    kw = {}
    for key, kind in (("L", int), ("cut", int), ("n_t", int), ("n_k", int), ("n_lambda", int),
                      ("dcn_n_k", int), ("dcn_n_t", int), ("parent_L", int), ("t_max", float)):
        if key in g:
            kw[key] = _number("grid", key, g[key], kind)
    if "bc" in g:
        kw["bc"] = g["bc"].strip()
    ia = cp["interaction"] if cp.has_section("interaction") else {}
    for key, kind in (("U", float), ("ed_L", int)):
        if key in ia:
            kw[key] = _number("interaction", key, ia[key], kind)
    if "ed_bc" in ia:
        kw["ed_bc"] = ia["ed_bc"].strip()
    if "initial" in ia:
        kw["initial"] = ia["initial"].strip()
    scan = {}
    if cp.has_section("scan"):
        for key, raw in cp["scan"].items():
            scan[key] = _number("scan", key, raw, int if key in ("n_alpha", "n_beta", "L") else float)
    out = cp.get("output", "dir", fallback="out").strip()
    params = {k: v.strip() for k, v in proto.items()}
    if family != "custom":
        for k, v in params.items():
            params[k] = _number("protocol", k, v)
    sc = Scenario(family, params, tasks, label=label, scan=scan, out_dir=out, source=source, **kw)
    validate(sc)
    return sc


def validate(sc: Scenario) -> None:
    """Check every referenced task has what it needs before computing."""
    if sc.bc not in ("periodic", "open") or sc.ed_bc not in ("periodic", "open"):
        raise ConfigurationError("bc must be 'periodic' or 'open'")
    if sc.L < 2:
        raise ConfigurationError(f"[grid] L must be at least 2, got {sc.L}")
    if sc.cut is not None and not 1 <= sc.cut < sc.L:
        raise ConfigurationError(f"[grid] cut must lie in 1..L-1, got {sc.cut}")
    if sc.n_k < 8 or sc.n_lambda < 1:
        raise ConfigurationError("[grid] n_k must be >= 8 and n_lambda >= 1")
    if sc.t_max is not None and not sc.t_max > 0:
        raise ConfigurationError("[grid] t_max must be positive")
    if sc.n_t is not None and sc.n_t < 2:
        raise ConfigurationError("[grid] n_t must be at least 2")
    try:
        sc.protocol()
    except QuenchError as exc:
        raise ConfigurationError(f"[protocol] {exc}") from exc
    ssh = sc.family == "interacting_ssh"
    for t in sc.tasks:
        if ssh and t in ("es", "parent-spectrum", "z2", "zak"):
            raise ConfigurationError(f"task {t!r} is not defined for interacting_ssh; use 'ed'")
        if t == "phase-diagram" and sc.family != "alpha_beta":
            raise ConfigurationError("phase-diagram needs family = alpha_beta")
        if t == "phase-diagram" and not sc.scan:
            raise ConfigurationError("phase-diagram needs a [scan] section")
        if t in ("ed", "slater") and not 2 <= sc.ed_L <= 12:
            raise ConfigurationError(f"[interaction] ed_L must be in 2..12, got {sc.ed_L}")
        if t == "slater" and (not ssh or sc.ed_L % 2):
            raise ConfigurationError("slater needs family = interacting_ssh and an even ed_L")
        if t == "ed" and sc.family not in ("interacting_ssh", "alpha_beta", "ssh_quench", "chiral_to_rice_mele", "custom"):
            raise ConfigurationError(f"task 'ed' is not defined for family {sc.family!r}")
    if sc.initial not in ("ground", "cat_plus", "cat_minus"):
        raise ConfigurationError(f"[interaction] initial must be ground, cat_plus or cat_minus, got {sc.initial!r}")
    if sc.scan:
        for key in sc.scan:
            if key not in KNOWN_KEYS["scan"]:
                raise ConfigurationError(f"unknown key {key!r} in [scan]")


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


# task runners ---------------------------------------------------------------


def task_rate(sc, q, out):
    times = sc.time_grid()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        curve = rate_curve(q, times, sc.n_k)
    write_csv(out / "rate.csv", ["t", "f"], zip(curve.times, curve.values))
    return {
        "dqpt_times": [{"k": k, "t": t} for k, t in dqpt_times(q, times[-1], sc.n_k)],
        "rate_peaks": curve.peaks().tolist(),
        "singular_nodes_excluded": int(sum(1 for w in caught)),
    }


def _es_function(sc, q):
    cut = sc.cut or sc.L // 2
    if sc.bc == "periodic":
        return lambda t: momentum_entanglement_spectrum(q, sc.L, t, cut, sc.n_lambda), "momentum"
    C0 = ground_correlation(build_lattice(q.pre, sc.L, sc.bc))
    ev = CorrelationEvolver(C0, build_lattice(q.post, sc.L, sc.bc))
    return lambda t: entanglement_spectrum(ev(t), cut, sc.n_lambda), "real-space"


def task_es(sc, q, out):
    times = sc.time_grid()
    es_at, route = _es_function(sc, q)
    data = [es_at(t) for t in times]
    rows = []
    for t, d in zip(times, data):
        lam = np.zeros(sc.n_lambda)
        lam[: len(d.lambdas)] = d.lambdas
        rows.append([t, *lam])
    header = ["t"] + [f"lambda_{i + 1}" for i in range(sc.n_lambda)]
    write_csv(out / "es.csv", header, rows)
    events = find_esc(es_at, times, sc.tol_esc)
    return {
        "route": route,
        "esc": [{"t": e.t, "splitting": e.spread, "order": e.order} for e in events],
        "min_pair_splitting": float(min(d.splitting for d in data)),
        "min_full_spread": float(min(d.spread for d in data)),
    }


def task_dcn(sc, q, out):
    res = dcn_table(q, sc.dcn_n_k, sc.dcn_n_t)
    rows = [[m, s.k_lo, s.k_hi, s.numeric, s.analytic] for m, s in enumerate(res.segments)]
    write_csv(out / "dcn.csv", ["segment", "k_lo", "k_hi", "numeric", "analytic"], rows)
    return {
        "segments": [asdict(s) for s in res.segments],
        "fixed_momenta": [{"k": f.k, "parallel": f.parallel} for f in res.fixed_momenta],
    }


def task_zak(sc, q, out):
    times, phases = zak_series(q, sc.time_grid(), sc.n_k)
    write_csv(out / "zak.csv", ["t", "phase"], zip(times, phases))
    return {"min_distance_to_pi": float(np.min(np.abs(np.abs(phases) - np.pi)))}


def task_parent(sc, q, out):
    L = sc.parent_L or (sc.L if sc.L <= 400 else 200)
    times = sc.time_grid()
    series = parent_obc_spectrum(q, L, times)
    header = ["t"] + [f"E_{i + 1}" for i in range(2 * L)]
    write_csv(out / "parent.csv", header, ([t, *E] for t, E in zip(times, series.energies)))
    tol = max(1e-8, zero_mode_tol(parent_lattice(q, L, times[0])))
    counts = series.zero_mode_count(tol)
    # crossings fall between grid times; evaluate the parent exactly there
    es_L = L + L % 2
    events = find_esc(lambda t: momentum_entanglement_spectrum(q, es_L, t, es_L // 2, 4), times, sc.tol_esc)
    at_esc = []
    for e in events:
        E = np.abs(parent_lattice(q, L, e.t).spectrum())
        at_esc.append({"t": e.t, "zero_modes": int(np.sum(E < ZERO_MODE_CUT)), "min_abs_E": float(E.min())})
    return {
        "L": L,
        "zero_mode_tol": tol,
        "zero_mode_times": [{"t": float(t), "count": int(c)} for t, c in zip(times, counts) if c],
        "at_esc": at_esc,
    }


def task_z2(sc, q, out):
    rows, undefined = [], 0
    for t in sc.time_grid():
        try:
            nu = z2_real_momentum_invariant(q, t)
        except QuenchError:
            nu, undefined = float("nan"), undefined + 1
        rows.append([t, nu])
    write_csv(out / "z2.csv", ["t", "nu"], rows)
    return {"undefined_points": undefined}


def _ed_setup(sc):
    L, bc = sc.ed_L, sc.ed_bc
    if sc.family == "interacting_ssh":
        J = sc.params.get("J", 1.0)
        ssh = BlochFunction("ssh", {"J": J, "J_prime": 0.0})
        H0 = build_hubbard(ssh, sc.params.get("U_pre", 10.0), L, bc)
        H1 = build_hubbard(ssh, sc.params.get("U_post", 0.0), L, bc)
    else:
        q = sc.protocol()
        H0 = build_hubbard(q.pre, 0.0, L, bc)
        H1 = build_hubbard(q.post, sc.U, L, bc)
    if sc.initial == "ground":
        psi0 = ground_state(H0)[0]
    else:
        plus, minus = cat_states(H0)
        psi0 = plus if sc.initial == "cat_plus" else minus
    return H1, psi0


def task_ed(sc, q, out):
    H1, psi0 = _ed_setup(sc)
    times = sc.time_grid()
    states = Propagator(H1).series(psi0, times)
    L = sc.ed_L
    cut = max(1, L // 2)
    write_csv(out / "ed_rate.csv", ["t", "f"], ([t, loschmidt_rate(psi0, s, L)] for t, s in zip(times, states)))
    rows = []
    for t, s in zip(times, states):
        lam = np.zeros(sc.n_lambda)
        got = many_body_es(s, cut, sc.n_lambda)
        lam[: len(got)] = got
        rows.append([t, *lam])
    write_csv(out / "ed_es.csv", ["t"] + [f"lambda_{i + 1}" for i in range(sc.n_lambda)], rows)
    energy = [H1.expectation(s) for s in states]
    return {
        "L": L,
        "bc": sc.ed_bc,
        "dim": H1.dim,
        "initial": sc.initial,
        "energy_drift": float(np.max(np.abs(np.array(energy) - energy[0]))),
        "sign_convention": SIGN_CONVENTION,
    }


def task_slater(sc, q, out):
    rows = []
    L = sc.ed_L
    J = sc.params.get("J", 1.0)
    for t in sc.time_grid():
        plus, minus, _ = cat_overlaps(L, t, sc.ed_bc, J)
        rates = [(-math.log(max(abs(z) ** 2, 1e-300)) / L) for z in (plus, minus)]
        rows.append([t, plus.real, plus.imag, minus.real, minus.imag, *rates])
    header = ["t", "plus_re", "plus_im", "minus_re", "minus_im", "rate_plus", "rate_minus"]
    write_csv(out / "slater.csv", header, rows)
    return {"L": L, "bc": sc.ed_bc}


def classify_cell(alpha, beta, J=1.0, L=200, n_t=POINTS_PER_PERIOD + 1, tol=ESC_TOL, n_k=DEFAULT_NK):
    """DQPT / ESC / DCN classification of one (alpha, beta) protocol.

    Both flags are evaluated over one parent period T.
    """
    q = build_protocol("alpha_beta", {"J": J, "alpha": alpha, "beta": beta})
    T = parent_period(q, n_k)
    dqpt = bool(dqpt_times(q, T, n_k))
    times = np.linspace(0.0, T, n_t)
    esc = bool(find_esc(lambda t: momentum_entanglement_spectrum(q, L, t, L // 2, 4), times, tol))
    return {"alpha": alpha, "beta": beta, "dqpt": dqpt, "esc": esc, "dcn_max_abs": dcn_analytic(q, n_k=n_k).max_abs()}


def _cell_job(args):
    try:
        return classify_cell(*args), None
    except Exception as exc:  # a failed cell is recorded, the scan goes on
        return None, f"{type(exc).__name__}: {exc}"


def scan_axes(scan: dict):
    def axis(name):
        hi = scan.get(f"{name}_max", 1.5)
        n = int(scan.get(f"n_{name}", 16))
        lo = scan.get(f"{name}_min", hi / n)
        if not (hi > 0 and lo > 0 and n >= 1 and hi >= lo):
            raise ConfigurationError(f"[scan] {name} range must be positive and increasing")
        return np.linspace(lo, hi, n)

    return axis("alpha"), axis("beta")


def phase_diagram(scan: dict, threads: int | None = None, tol: float = ESC_TOL):
    """Classify every (alpha, beta) cell; returns (cells, failures)."""
    alphas, betas = scan_axes(scan)
    L = int(scan.get("L", 200))
    J = float(scan.get("J", 1.0))
    jobs = [(float(a), float(b), J, L, POINTS_PER_PERIOD + 1, tol) for a in alphas for b in betas]
    workers = threads or os.cpu_count() or 1
    if workers == 1:
        results = [_cell_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    cells, failures = [], []
    for job, (cell, err) in zip(jobs, results):
        if err is None:
            cells.append(cell)
        else:
            cells.append({"alpha": job[0], "beta": job[1], "dqpt": None, "esc": None, "dcn_max_abs": None})
            failures.append({"alpha": job[0], "beta": job[1], "error": err})
    return cells, failures


def task_phase(sc, q, out, threads=None):
    cells, failures = phase_diagram(sc.scan, threads, sc.tol_esc)
    rows = []
    for c in cells:
        if c["dqpt"] is None:
            rows.append([c["alpha"], c["beta"], float("nan"), float("nan"), float("nan")])
        else:
            rows.append([c["alpha"], c["beta"], c["dqpt"], c["esc"], c["dcn_max_abs"]])
    write_csv(out / "phase.csv", ["alpha", "beta", "dqpt", "esc", "dcn_max_abs"], rows)
    combos = sorted({(c["esc"], c["dqpt"]) for c in cells if c["dqpt"] is not None})
    return {"cells": len(cells), "failed": failures, "combinations": [list(c) for c in combos]}


RUNNERS = {
    "rate": task_rate,
    "es": task_es,
    "dcn": task_dcn,
    "zak": task_zak,
    "parent-spectrum": task_parent,
    "z2": task_z2,
    "ed": task_ed,
    "slater": task_slater,
}


@dataclass
class RunReport:
    scenario: dict
    tasks: dict
    metadata: dict
    partial: bool = False

    @property
    def ok(self) -> bool:
        return all(v["status"] == "ok" for v in self.tasks.values())


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def run(sc: Scenario, out_dir=None, threads: int | None = None, tasks=None, seed: int | None = None) -> RunReport:
    """Execute the scenario's tasks and write CSV files plus report.json.

    Library errors are caught per task and recorded with the task name;
    the caller decides the exit status from the report.
    """
    out = Path(out_dir or sc.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    q = sc.protocol()
    started = time.time()
    results = {}
    partial = False
    for name in tasks or sc.tasks:
        t0 = time.time()
        try:
            if name == "phase-diagram":
                info = task_phase(sc, q, out, threads)
                partial = partial or bool(info["failed"])
            else:
                info = RUNNERS[name](sc, q, out)
            results[name] = {"status": "ok", **info}
        except QuenchError as exc:
            results[name] = {"status": "error", "error": f"{type(exc).__name__}: {exc}"}
        except (np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
            results[name] = {"status": "error", "error": f"{type(exc).__name__}: {exc}"}
        results[name]["seconds"] = round(time.time() - t0, 3)
    times = sc.time_grid()
    meta = {
        "version": __version__,
        "started": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "wall_seconds": round(time.time() - started, 3),
        "protocol": q.label,
        "time_grid": {"t_max": float(times[-1]), "n_t": len(times), "dt": float(times[1] - times[0])},
        "points_per_period": POINTS_PER_PERIOD,
        "parent_period": sc.period(),
        "k_grid": sc.n_k,
        "esc_tol": sc.tol_esc,
        "rate_normalization": "per unit cell",
        "seed": seed,
    }
    echo = asdict(sc)
    report = RunReport(_jsonable(echo), _jsonable(results), _jsonable(meta), partial)
    with open(out / "report.json", "w") as fh:
        json.dump(asdict(report), fh, indent=2, sort_keys=True)
    return report
