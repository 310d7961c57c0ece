"""Smoke test for the leontief_lab extension module.

Build first, e.g. `maturin develop -m crates/py/Cargo.toml --features extension-module`,
or copy target/release/libleontief_lab.so next to this script as leontief_lab.so.
"""
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import leontief_lab as ll


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol


def main():
    chain = ll.Economy.chain(0.4)
    L = chain.multipliers()
    assert close(L[0], 1.6) and close(L[1], 1.0), L
    assert close(chain.l_bar(), 1.6)

    two_step = ll.Economy([[0.0, 0.0], [1.0, 0.0]], [1.0, 0.0], ["a", "b"])
    for gamma in ([0.0, 0.02], [0.02, 0.0], [0.01, 0.01]):
        assert close(two_step.predict_growth(gamma)["g"], 0.02)
    r = two_step.predict_returns([0.01, 0.01])
    assert close(r[0], -0.02) and close(r[1], -0.01), r

    rows = chain.simulate([0.02, 0.02], years=1.0)
    gdp = [v for t, s, v in rows if s == "log_real_gdp"]
    assert abs(gdp[-1] - 0.032) < 1e-3, gdp[-1]

    slope, intercept, r2, p = ll.regress([1, 2, 3, 4], [2, 4, 6, 8.5])
    assert 2.0 < slope < 2.3 and r2 > 0.99

    try:
        ll.Economy([[0.0, 1.5], [0.0, 0.0]], [1.0, 0.0])
    except ValueError:
        pass
    else:
        raise AssertionError("invalid coefficients accepted")
    print("python smoke test passed")


if __name__ == "__main__":
    main()
