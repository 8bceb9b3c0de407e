"""Smoke test for the bayesdoe_py extension.

Build and install first:  pip install --no-build-isolation ./crates/python
"""

import json
import math
import os
import tempfile

import bayesdoe_py as bd


def bowl(x):
    return -((x[0] - 0.3) ** 2) - 0.5 * (x[1] + 0.2) ** 2


def main():
    problem = {
        "variables": [
            {"name": "x1", "lower": -1.0, "upper": 1.0},
            {"name": "x2", "lower": -1.0, "upper": 1.0},
        ],
        "outputs": [{"name": "y", "role": "objective", "sense": "maximize"}],
    }
    camp = bd.Campaign(json.dumps(problem), seed=5)
    assert camp.revision == 0 and len(camp) == 0
    assert camp.variables == ["x1", "x2"] and camp.outputs == ["y"]

    start = camp.ask(4)
    assert len(start) == 4 and len(camp.pending) == 4
    camp.tell(start, [[bowl(p)] for p in start])
    assert len(camp) == 4 and camp.pending == []

    for _ in range(3):
        batch = camp.ask(2, "qei")
        assert len(batch) == 2
        for p in batch:
            assert all(-1.0 <= v <= 1.0 for v in p), p
        camp.tell(batch, [[bowl(p)] for p in batch])

    dry = camp.suggest(1)
    assert camp.suggest(1) == dry, "suggest is not deterministic"

    rec = json.loads(camp.recommend())
    assert rec["kind"] == "single"
    best = max(bowl(p) for p in camp.points)
    assert bowl(rec["point"]) == best

    again = bd.Campaign.from_json(camp.to_json())
    assert again.to_json() == camp.to_json()
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "camp.json")
        camp.save(path)
        assert bd.Campaign.load(path).revision == camp.revision
        try:
            camp.save(path, camp.revision + 1)
        except RuntimeError as e:
            assert "conflict" in str(e)
        else:
            raise AssertionError("stale save was accepted")

    try:
        camp.tell([[5.0, 0.0]], [[1.0]])
    except ValueError as e:
        assert "x1" in str(e)
    else:
        raise AssertionError("out-of-box row was accepted")

    xs = [[i / 7.0] for i in range(8)]
    ys = [math.sin(6.0 * x[0]) for x in xs]
    gp = bd.fit_gp(xs, ys, [0.0], [1.0], seed=1)
    for (m, v), y in zip(gp.predict(xs), ys):
        assert abs(m - y) < 0.05 and v >= 0.0
    assert gp.log_marginal_likelihood is not None

    ei = bd.expected_improvement(0.0, 1.0, 0.0)
    assert abs(ei - 1.0 / math.sqrt(2.0 * math.pi)) < 1e-9
    assert bd.expected_improvement(1.0, 0.0, 0.25) == 0.75

    print("python smoke test passed:", camp)


if __name__ == "__main__":
    main()
