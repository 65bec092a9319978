#!/usr/bin/env python3
"""Smoke test for the caltrade_py extension module.

Builds nothing itself: run `cargo build -p caltrade-py` (or `--release`)
first. The script locates the cdylib in the target directory, exposes it
under the importable module name, and exercises the main surface.
"""

import math
import os
import shutil
import sys
import tempfile

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def locate_cdylib():
    override = os.environ.get("CALTRADE_PY_LIB")
    candidates = [override] if override else []
    for profile in ("release", "debug"):
        candidates.append(os.path.join(REPO_ROOT, "target", profile, "libcaltrade_py.so"))
        candidates.append(os.path.join(REPO_ROOT, "target", profile, "libcaltrade_py.dylib"))
        candidates.append(os.path.join(REPO_ROOT, "target", profile, "caltrade_py.dll"))
    for path in candidates:
        if path and os.path.exists(path):
            return path
    sys.exit(
        "caltrade_py cdylib not found; run `cargo build -p caltrade-py` first "
        f"(searched under {os.path.join(REPO_ROOT, 'target')})"
    )


def import_module():
    lib = locate_cdylib()
    staging = tempfile.mkdtemp(prefix="caltrade_py_")
    suffix = ".pyd" if lib.endswith(".dll") else ".so"
    shutil.copy2(lib, os.path.join(staging, "caltrade_py" + suffix))
    sys.path.insert(0, staging)
    import caltrade_py

    return caltrade_py


def check(name, condition):
    status = "PASS" if condition else "FAIL"
    print(f"smoke {name}: {status}")
    if not condition:
        sys.exit(1)


def main():
    ct = import_module()

    # rounding grid: weights, unbiasedness, kernel values
    grid = ct.RoundingGrid(0.25)
    weights = grid.weights(0.3)
    check(
        "rounding-weights",
        abs(weights[0.25] - 0.8) < 1e-12 and abs(weights[0.5] - 0.2) < 1e-12,
    )
    check("rounding-unbiased", abs(grid.expectation(0.3) - 0.3) < 1e-12)
    check(
        "rounding-kernel",
        abs(grid.rounding_kernel([0.3], [0.3]) - 0.68) < 1e-12
        and grid.rounding_kernel([0.0], [1.0]) == 0.0,
    )

    # deterministic sampling
    rng = ct.RandomSource(7)
    rng2 = ct.RandomSource(7)
    draws1 = [grid.sample([0.3, 0.7], rng) for _ in range(20)]
    draws2 = [grid.sample([0.3, 0.7], rng2) for _ in range(20)]
    check("sampling-deterministic", draws1 == draws2)

    # Sobolev kernel and embedding constant
    coth1 = math.cosh(1.0) / math.sinh(1.0)
    check(
        "sobolev-kernel",
        abs(ct.kernel_eval("sobolev", [0.0], [0.0]) - coth1) < 1e-10
        and abs(ct.kernel_eval("sobolev", [0.0], [1.0]) - 1.0 / math.sinh(1.0)) < 1e-10,
    )
    check(
        "embedding-constant",
        abs(ct.embedding_constant("sobolev") - math.sqrt(coth1)) < 1e-12,
    )

    # bounds agree with the direct formulas
    check(
        "hoeffding-bound",
        abs(ct.hoeffding_bound(5000, 0.05) - math.sqrt(2500 * math.log(40))) < 1e-9,
    )
    expected_t1 = 4 * math.e * 2 ** 0.25 * 10000 ** 0.8
    check("calibration-bound", abs(ct.calibration_bound(1, 1.0, 0.05, 10000) - expected_t1) < 1e-6)

    # defensive forecasting keeps the supermartingale from rising
    session = ct.ForecastSession(k=1, kernel="sobolev", delta=0.1, seed=11)
    walk = ct.RandomSource(3)
    outcome = 0.5
    previous_m = session.supermartingale
    monotone = True
    for _ in range(300):
        p = session.next_forecast([outcome], outcome)
        p_tilde, info_tilde = session.randomize(p, [outcome])
        assert 0.0 <= p_tilde <= 1.0 and len(info_tilde) == 1
        nxt = min(1.0, max(0.0, outcome + 0.05 * (walk.uniform() - 0.5)))
        session.update(p, [outcome], outcome, nxt)
        monotone &= session.supermartingale <= previous_m + 1e-7
        previous_m = session.supermartingale
        outcome = nxt
    check("supermartingale-monotone", monotone and session.rounds == 300)

    # trading decisions
    check(
        "decisions",
        ct.m1_decision(0.6, 0.5) == 1.0
        and ct.m1_decision(0.5, 0.5) == 0.0
        and ct.m_decision(0.5, 0.5) == -1.0,
    )

    # adversarial market construction
    prices = ct.adversarial_prices([0.7, 0.3])
    check("adversary-prices", prices == [0.5, 0.25, 0.375])
    check("adversary-rule", ct.adversary_rule(0.7) == -1.0 and ct.adversary_rule(0.5) == 1.0)

    # TEST stock is reproducible and positive
    a = ct.test_stock(500, 0.01, 1.0, 123)
    b = ct.test_stock(500, 0.01, 1.0, 123)
    check("test-stock", a == b and all(s > 0.0 for s in a) and len(a) == 500)

    # ARMA round trip
    model = ct.ArmaModel.from_parts([0.6], [], 0.2, 0.01)
    check("arma-forecast", model.forecast_next([0.1, 0.5]) == 0.5)

    print("smoke test complete")


if __name__ == "__main__":
    main()
