import os
import sys

import numpy as np
import pytest

from quenchtopo.bloch import BlochFunction, QuenchProtocol, momentum_grid, norm

SEED = int(os.environ.get("QUENCHTOPO_SEED", "20261018"))
MIN_GAP = 0.05


def random_harmonic(rng, order, scale=1.0):
    cos = rng.normal(scale=scale, size=(order + 1, 3))
    sin = rng.normal(scale=scale, size=(order + 1, 3))
    return BlochFunction.from_harmonics(cos, sin, allow_gapless=True)


def random_protocol(rng, order=1, fixed=None):
    """Random gapped protocol.

    With ``fixed=True`` the post vector is d cos(k - k0) + v sin(k - k0), which
    is parallel to d at k0 and antiparallel at k0 + pi, so a nonzero DCN is
    guaranteed.  With ``fixed=False`` both sides are independent series.
    ``None`` picks either at random.  Draws with a near-closed gap are redrawn.
    """
    if fixed is None:
        fixed = bool(rng.integers(2))
    k = momentum_grid(64)
    while True:
        pre = random_harmonic(rng, order)
        if fixed:
            v = random_harmonic(rng, order)
            k0 = rng.uniform(-np.pi, np.pi)
            samples = pre(k) * np.cos(k - k0)[:, None] + v(k) * np.sin(k - k0)[:, None]
            post, _ = BlochFunction.from_samples(samples, allow_gapless=True)
        else:
            post = random_harmonic(rng, order)
        fine = momentum_grid(2048)
        if min(norm(pre(fine)).min(), norm(post(fine)).min()) < MIN_GAP:
            continue
        return QuenchProtocol(
            BlochFunction.from_harmonics(pre.cos_coeffs, pre.sin_coeffs),
            BlochFunction.from_harmonics(post.cos_coeffs, post.sin_coeffs),
            "random",
        )


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


def pytest_report_header(config):
    return f"quenchtopo randomized tests: seed {SEED} (override with QUENCHTOPO_SEED)"


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, title in mod.TITLES.items():
        checks = mod.RESULTS.get(n)
        if not checks:
            tr.write_line(f"criterion {n:2d}  NOT RUN  {title}")
            continue
        failed = [c for c in checks if not c[1]]
        status = "FAIL" if failed else "PASS"
        tr.write_line(f"criterion {n:2d}  {status}  {title} ({len(checks) - len(failed)}/{len(checks)} checks)")
        for name, _, detail in failed:
            tr.write_line(f"      failed: {name} [{detail}]")
