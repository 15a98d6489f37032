"""Quick end-to-end check of the Python bindings.

Build and install first:  pip install --no-build-isolation ./crates/python
"""
import json
import math

import pbp


def close(a, b, tol=1e-12):
    return all(abs(x - y) <= tol for x, y in zip(a, b))


def main():
    env = pbp.Env(json.dumps({"name": "frozen-lake", "size": 4}), seed=0)
    model = env.model
    print(env.label, model)

    b0 = model.initial_belief()
    assert math.isclose(sum(b0), 1.0)

    # a step in the world and the matching perception-based update
    s = env.sample_initial(seed=1)
    out = env.step(s, 1, 0, seed=1)
    dist, unc = env.perceive(out["obs_id"])
    b1, fallback = pbp.pbp_update(model, b0, 1, dist, out["z_nv"])
    assert not fallback and math.isclose(sum(b1), 1.0)

    # rescaling the perception output leaves the belief unchanged
    b2, _ = pbp.pbp_update(model, b0, 1, [3.0 * p for p in dist], out["z_nv"])
    assert close(b1, b2)

    assert pbp.apply_tuq([0.7, 0.3], 0.5, 0.1) == [0.5, 0.5]
    assert close(pbp.apply_wuq([1.0, 0.0], 0.2), [0.9, 0.1])
    assert close(pbp.multiplicative_pool([0.5, 0.5], [0.2, 0.8]), [0.2, 0.8])

    cfg = {
        "env": {"name": "frozen-lake", "size": 4},
        "algorithm": {"kind": "pbp-hsvi"},
        "hsvi": {"budget": {"iterations": 30}},
        "episodes": 200,
        "seed": 3,
    }
    sol = pbp.solve_hsvi(json.dumps(cfg))
    assert sol["lower"] <= sol["upper"] + 1e-6
    rec = pbp.run_experiment(json.dumps(cfg))
    print(f"solver bounds [{sol['lower']:.3f}, {sol['upper']:.3f}], V = {rec['v']:.3f} ± {rec['ci95']:.3f}")

    for r in pbp.run_selftest(0):
        print("PASS" if r["passed"] else "FAIL", r["name"], r["detail"])
        assert r["passed"]
    print("ok")


if __name__ == "__main__":
    main()
