"""Smoke test for the opser extension module.

Build and install next to this file first:

    cargo build --release -p opser-py --features extension-module
    cp target/release/libopser.so python/opser.so
    python3 python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import opser  # noqa: E402

SMALL = """
name = "smoke"
duration_s = 6.0

[topology]
kind = "grid"
rows = 4
cols = 4
spacing_m = 10.0
"""


def check_scenario():
    sc = opser.Scenario.from_toml(SMALL)
    assert sc.name == "smoke" and sc.node_count == 16
    back = opser.Scenario.from_toml(sc.to_toml())
    assert back.to_toml() == sc.to_toml()
    try:
        sc.protocol = "aodv"
    except ValueError:
        pass
    else:
        raise AssertionError("unknown protocol accepted")
    try:
        opser.Scenario.from_toml("no_such_key = 1")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown key accepted")
    return sc


def check_runs(sc):
    for proto in ("opser", "oppbcast", "greedy_unicast"):
        sc.protocol = proto
        a = sc.run(3, trace=True)
        b = sc.run(3, trace=True)
        assert a.trace == b.trace, proto
        m = a.metrics
        assert m == b.metrics
        assert m.sent > 0 and 0.0 <= m.pdr <= 1.0, proto
        assert len(a.positions) == 16 and a.sink not in a.sources
        report = opser.validate_trace(a.trace)
        assert report.ok, report.violations[:5]
        assert report.metrics == m
        print(f"{proto:>15}: {m!r}")
    sc.protocol = "opser"
    levels = sc.run(1).corona_levels
    assert levels[sc.run(1).sink] == 1 and all(l is not None for l in levels)


def check_validator(sc):
    text = sc.run(1, trace=True).trace
    cid = next(l for l in text.splitlines() if "type=CID" in l)
    bad = text.replace(cid, cid + "\n" + cid, 1)
    report = opser.validate_trace(bad)
    assert not report.ok
    assert any(check == "cid_once" for _, check, _ in report.violations)


def check_analysis():
    po = opser.opportunistic_delivery_prob([[0.3, 0.6], [0.5], [0.2, 0.2, 0.9]])
    want = (1 - 0.7 * 0.4) * 0.5 * (1 - 0.8 * 0.8 * 0.1)
    assert abs(po - want) < 1e-15
    assert opser.unicast_delivery_prob(0.5, 3) == 0.125
    total, bound = opser.cid_energy_cost([1.0, 2.0, 3.0], 1.0, 0.5)
    assert total == 6.0
    assert abs(bound - (3 + 3 * math.log(3) * 0.5)) < 1e-12
    assert opser.prr_vs_distance(5.0, trials=2000) == 1.0
    assert opser.prr_vs_distance(80.0, trials=2000) < 0.05
    try:
        opser.unicast_delivery_prob(1.5, 2)
    except ValueError:
        pass
    else:
        raise AssertionError("probability above one accepted")


def main():
    sc = check_scenario()
    check_runs(sc)
    check_validator(sc)
    check_analysis()
    print("smoke test ok")


if __name__ == "__main__":
    main()
