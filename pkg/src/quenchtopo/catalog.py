"""Built-in quench protocols."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bloch import FAMILY_PARAMETERS, BlochFunction, QuenchProtocol, momentum_grid, norm
from .errors import ConfigurationError


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    tag: str
    summary: str
    defaults: dict


CATALOG = {
    "ssh_quench": CatalogEntry(
        "ssh_quench",
        "fig1",
        "intra-cell dimer (J_x,0,0) -> flat SSH circle J_x(cos k, sin k, 0)",
        {"J_x": 1.0},
    ),
    "chiral_to_rice_mele": CatalogEntry(
        "chiral_to_rice_mele",
        "fig2",
        "(J_x, 0, J_z cos k) -> (J_x cos k, J_x sin k, J_z)",
        {"J_x": 1.0, "J_z": 1.0},
    ),
    "alpha_beta": CatalogEntry(
        "alpha_beta",
        "fig3 fig4 figS1 figS3",
        "J(beta, 0, alpha) -> J(delta + cos k, sin k, alpha)",
        {"J": 1.0, "alpha": 0.5, "beta": 0.5, "delta": 0.0},
    ),
    "kitaev": CatalogEntry(
        "kitaev",
        "fig8",
        "Kitaev image of the interacting SSH chain, U_pre -> U_post",
        {"J": 1.0, "U_pre": 10.0, "U_post": 0.0},
    ),
    "interacting_ssh": CatalogEntry(
        "interacting_ssh",
        "fig8 figS4",
        "SSH chain (J' = 0) with Hubbard U_pre -> U_post; momentum tasks use the Kitaev image",
        {"J": 1.0, "U_pre": 10.0, "U_post": 0.0},
    ),
    "custom": CatalogEntry(
        "custom",
        "-",
        "pre_family / post_family with pre_* and post_* parameters",
        {},
    ),
}


def _unknown(params, allowed, name):
    extra = set(params) - set(allowed)
    if extra:
        raise ConfigurationError(f"unknown parameters {sorted(extra)} for protocol {name!r}")


def build_protocol(name: str, params: dict | None = None) -> QuenchProtocol:
    """Instantiate a catalog protocol, filling in default parameters."""
    if name not in CATALOG:
        raise ConfigurationError(f"unknown protocol family {name!r}; known: {', '.join(CATALOG)}")
    params = dict(params or {})
    if name == "custom":
        return _custom(params)
    entry = CATALOG[name]
    _unknown(params, entry.defaults, name)
    p = {**entry.defaults, **{k: float(v) for k, v in params.items()}}
    if name == "ssh_quench":
        Jx = p["J_x"]
        pre = BlochFunction("constant", {"J": Jx, "beta": 1.0, "alpha": 0.0})
        post = BlochFunction("ssh_circle", {"J_x": Jx})
    elif name == "chiral_to_rice_mele":
        Jx, Jz = p["J_x"], p["J_z"]
        if Jx == 0:
            raise ConfigurationError("J_x must be nonzero")
        pre = BlochFunction("chiral_cos", {"J_x": Jx, "J_z": Jz})
        post = BlochFunction("rice_mele", {"J": Jx, "alpha": Jz / Jx})
    elif name == "alpha_beta":
        J, a, b, d = p["J"], p["alpha"], p["beta"], p["delta"]
        if J <= 0:
            raise ConfigurationError("J must be positive")
        pre = BlochFunction("constant", {"J": J, "beta": b, "alpha": a})
        if d:
            post = BlochFunction("dispersive", {"J": J, "alpha": a, "delta": d})
        else:
            post = BlochFunction("rice_mele", {"J": J, "alpha": a})
    else:
        pre = BlochFunction("kitaev", {"J": p["J"], "U": p["U_pre"]})
        post = BlochFunction("kitaev", {"J": p["J"], "U": p["U_post"]})
    label = name + "(" + ", ".join(f"{k}={v:g}" for k, v in sorted(p.items())) + ")"
    return QuenchProtocol(pre, post, label)


def _parse_vectors(text):
    rows = [r for r in str(text).replace(";", "|").split("|") if r.strip()]
    try:
        return [[float(x) for x in r.split(",")] for r in rows]
    except ValueError as exc:
        raise ConfigurationError(f"malformed harmonic list {text!r}") from exc


def _side(params, prefix):
    fam = params.get(f"{prefix}_family")
    if fam is None:
        raise ConfigurationError(f"custom protocol needs {prefix}_family")
    if fam not in FAMILY_PARAMETERS:
        raise ConfigurationError(f"unknown Bloch family {fam!r}")
    kw = {}
    for key, val in params.items():
        if key.startswith(prefix + "_") and key != f"{prefix}_family":
            name = key[len(prefix) + 1 :]
            if fam == "harmonic":
                kw[name] = _parse_vectors(val)
            else:
                try:
                    kw[name] = float(val)
                except ValueError as exc:
                    raise ConfigurationError(f"malformed number for {key}: {val!r}") from exc
    return BlochFunction(fam, kw)


def _custom(params):
    for key in params:
        if not (key.startswith("pre_") or key.startswith("post_")):
            raise ConfigurationError(f"unknown parameter {key!r} for protocol 'custom'")
    pre, post = _side(params, "pre"), _side(params, "post")
    return QuenchProtocol(pre, post, "custom")


def parent_period(q: QuenchProtocol, n_k: int = 1024) -> float:
    """Longest per-momentum period pi/|d'(k)| (exact period for flat post bands)."""
    return float(np.pi / np.min(norm(q.post(momentum_grid(n_k)))))


def format_catalog() -> str:
    width = max(len(n) for n in CATALOG)
    lines = []
    for e in CATALOG.values():
        defaults = ", ".join(f"{k}={v:g}" for k, v in e.defaults.items()) or "-"
        lines.append(f"{e.name:<{width}}  [{e.tag}]  {e.summary}  (defaults: {defaults})")
    return "\n".join(lines)
