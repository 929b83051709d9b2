"""Smoke test for the ornstein_fpk extension module.

Build and install first, e.g. `pip install ./crates/python`, then run
`python python/smoke_test.py`.
"""

import math
import tempfile
from fractions import Fraction

import ornstein_fpk as of


def main():
    p1 = of.build_p1("1/2")
    assert Fraction(p1.l1_norm()) == Fraction(3, 4)
    assert p1.value("-1/4", "-3/16") == "1"
    props = p1.properties()
    assert props["line_integrals_vanish"] and props["odd_in_y"]

    states = of.construct_sequence("1/2", 2)
    assert [s.n for s in states] == [1, 2]
    assert Fraction(states[1].l1_norm()) > Fraction(p1.l1_norm())
    assert of.ConstructionState.from_json(states[1].to_json()).cell_count == states[1].cell_count

    choice = of.select_epsilon(p1)
    smooth = of.SmoothedStep(p1, choice["epsilon"])
    report = smooth.norm_report()
    assert 0.2 < report["ratio"] < 0.3
    assert abs(smooth.q(0.9, 0.9)) < 1e-15

    asm = of.assemble("overlapping", states, 1 / 64, tiles=4)
    coarse = of.assemble("overlapping", states, 1 / 32, tiles=4)
    assert abs(asm.mass() - 1.0) < 1e-8
    res = asm.residuals(coarse)
    assert res["max_normalized"] < 1e-3 and res["order"] > 1.8

    gauss = of.assemble("gaussian", states, 1 / 32, window=4.0)
    lhs, rhs = gauss.loggrad_check()
    assert lhs <= rhs * (1 + 1e-4)

    rho = asm.rho
    assert abs(of.frac_norm(rho, 1.2, 0.0) - sum(abs(v) ** 1.2 for row in rho.to_list() for v in row) ** (1 / 1.2) * rho.h ** (2 / 1.2)) < 1e-9
    sweep = of.threshold_sweep(rho, 1.2)
    assert len(sweep["alphas"]) == 21
    assert all(b >= a for a, b in zip(sweep["norms"], sweep["norms"][1:]))

    try:
        of.build_p1("3/2")
    except ValueError:
        pass
    else:
        raise AssertionError("delta outside (0, 1) accepted")

    with tempfile.TemporaryDirectory() as d:
        manifest = of.run_pipeline(f"stages = 1\nh = 1/64\ntiles = 1\noutput = {d}\n")
        assert manifest["passed"], manifest["checks"]
        assert len(of.export_plots(d)) == 3
        try:
            of.export_plots(d + "/missing")
        except FileNotFoundError:
            pass
        else:
            raise AssertionError("export of an empty run succeeded")

    print("smoke test passed:", len(states), "stages, ratio", round(report["ratio"], 4), "alpha*", round(sweep["alpha_star"], 4))


if __name__ == "__main__":
    main()
