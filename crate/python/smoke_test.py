"""Smoke test for the pydegschro extension module.

Build it first:  pip install -e crates/python --no-build-isolation
"""

import math

import pydegschro as dg


def main():
    j = dg.bessel_j(0.5, complex(math.pi / 2, 0.0))
    assert abs(j - 2 / math.pi) < 1e-14, j

    k = dg.kernel_check(0.5)
    assert k["max_rel_error"] < 1e-4
    assert all(k["resolved"])

    p = dg.theoretical_exponents("P", 0.5, 0.5)
    assert p["theta"] == 1.0 and p["decay_exponent"] == 2.0

    n = dg.resolvent_norm("P", 0.5, 0.5, 1e-2, nx=200, nxi=100)
    assert n > 0.0

    s = dg.scan("P", 0.5, 0.5, nx=200, nxi=100)
    assert abs(s["exponent"] + 1.0) < 0.15, s["exponent"]

    tr = dg.simulate("P", 0.5, 0.5, t_final=5.0, dt=0.01, nx=100, nxi=60, y0="zero")
    assert all(e == 0.0 for e in tr["E"])

    rows = dg.oracle_compare(0.5, 0.5, 1e-3, [100, 200, 400])
    errs = [r[1] for r in rows]
    assert errs == sorted(errs, reverse=True), errs

    try:
        dg.oracle_compare(0.5, 0.5, 0.0, [100])
    except ArithmeticError:
        pass
    else:
        raise AssertionError("lambda = 0 must raise")

    try:
        dg.resolvent_norm("P", 1.5, 0.5, 1e-2)
    except ValueError:
        pass
    else:
        raise AssertionError("alpha = 1.5 is invalid for P")

    print("pydegschro smoke test passed")


if __name__ == "__main__":
    main()
