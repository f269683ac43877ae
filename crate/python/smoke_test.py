#!/usr/bin/env python3
"""Smoke test of the kinproj_py extension module.

Builds nothing itself: expects the cdylib under target/{release,debug}.
Run from the repository root (or anywhere) after

    cargo build --release -p kinproj-py

Usage: python3 python/smoke_test.py
"""

import json
import math
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def import_extension():
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libkinproj_py.so"
        if lib.exists():
            tmp = Path(tempfile.mkdtemp(prefix="kinproj_py_"))
            shutil.copy(lib, tmp / "kinproj_py.so")
            sys.path.insert(0, str(tmp))
            import kinproj_py

            return kinproj_py
    sys.exit("libkinproj_py.so not found; run `cargo build --release -p kinproj-py` first")


SCENARIO = """
entropy.p = 1.125
entropy.c_bar = 8.0
basis.preset = 1d-k3
grid.l = 1.0
grid.n = 32
quad.panels = 16
quad.nodes_per_panel = 6
property_p.r_outer = 1.2
property_p.delta1 = 1.05
property_p.r_core = 0.5
property_p.delta2 = 0.7
initial.preset = sin-perturb
initial.base = -1, 0, 1
initial.amplitude.1 = 0.01
initial.wavenumber.1 = 1
scheme.variant = transport_projection
scheme.h = 0.01
scheme.t_final = 0.05
seed = 7
"""


def main():
    kp = import_extension()

    # Entropy family: closed forms at p = 9/8, c_bar = 8.
    e = kp.Entropy(1.125, 8.0)
    assert e.q == 7.0
    assert e.s_primal(2.0) == 2.0**1.125
    assert e.weight(-1.0) == 8.0
    assert e.weight(0.5) == 0.0
    assert e.w_antideriv(-1.0) == -1.0
    assert e.density_from_dual(-1.0) == 1.0

    # Basis evaluation and the equilibrium sub-span indices.
    basis = kp.Basis.preset("1d-k3")
    assert len(basis) == 3
    assert basis.eval([2.0]) == [1.0, 2.0, 4.0]
    assert basis.eval_dual([-1.0, 0.0, 1.0], [0.5]) == -0.75
    assert kp.Basis.preset("1d-k5").e0_indices == [0, 1, 2]

    # Quadrature: box measure and an even moment.
    quad = kp.Quadrature(1, 1.8, 16, 6)
    assert abs(quad.integrate([1.0] * len(quad)) - 3.6) < 1e-12
    w_moment = quad.integrate([e.weight(v[0] ** 2 - 1.0) for v in quad.nodes()])
    assert abs(w_moment - 5.092152292152292) < 1e-8

    # Nondegeneracy check of the reference state.
    rep = kp.check_property_p(basis, [-1.0, 0.0, 1.0], 1.2, 1.05, 0.5, 0.7)
    assert rep.holds and min(rep.margins) >= 0.0
    rep = kp.check_property_p(basis, [-1.0, 0.0, 1.0], 1.2, 1.05, 0.5, 0.8)
    assert not rep.holds

    # Moment map and its Newton inversion round-trip.
    u = kp.moments(basis, e, quad, [-1.0, 0.0, 1.0])
    assert abs(u[0] + 0.5990767402532108) < 1e-8 and abs(u[1]) < 1e-12
    gamma = kp.invert_moments(basis, e, quad, u, [-1.1, 0.01, 0.95])
    assert max(abs(g - t) for g, t in zip(gamma, [-1.0, 0.0, 1.0])) < 1e-7
    f = kp.flux(basis, e, quad, [-1.0, 0.0, 1.0])
    assert abs(f[0]) < 1e-12

    # A short scheme run through scenario text.
    summary = kp.run_scenario(SCENARIO)
    assert summary.complete and summary.steps == 5
    assert len(summary.final_coeffs) == 32 and len(summary.final_coeffs[0]) == 3
    ledger = json.loads(summary.ledger_json)
    assert len(ledger["steps"]) == 5
    assert all(s["conservation_residual"] <= 1e-9 for s in ledger["steps"])

    # A two-level refinement study without the finite-volume comparison.
    report = json.loads(kp.study_scenario(SCENARIO, [0.01, 0.005], False))
    assert report["complete"] and len(report["pair_distances"]) == 1
    assert report["pair_distances"][0] > 0.0

    print("kinproj_py smoke test: OK")


if __name__ == "__main__":
    main()
