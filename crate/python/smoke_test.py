"""Smoke test for the steersmc_py extension.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist && pip install dist/*.whl
then run:
    python python/smoke_test.py
"""

import json
import math
from pathlib import Path

import steersmc_py as sm

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "crates" / "core" / "fixtures"


def check_model():
    m = sm.TokenModel.uniform(["a", "b", "<eos>"])
    dist = m.next_distribution([0], "proposal")
    assert len(dist) == 3 and abs(sum(dist) - 1) < 1e-12
    assert m.render(m.tokenize("ab")) == "ab"
    lp = m.sequence_logprob([], [0, 1])
    assert abs(lp - 2 * math.log(1 / 3)) < 1e-12


def check_inference_matches_oracle():
    model = sm.TokenModel.load_table((FIXTURES / "enumerable" / "masked_pair.model.json").read_text())
    plan = sm.SteeringPlan.parse((FIXTURES / "enumerable" / "masked_pair.plan.json").read_text())
    table, z = sm.brute_force_target(plan, model)
    assert abs(sum(table.values()) - 1) < 1e-9 and z > 0
    out = sm.run_inference(plan, model, method="importance", n_particles=4000, seed=3)
    assert out["error"] is None
    mass = {}
    for c in out["candidates"]:
        key = tuple(c["tokens"])
        mass[key] = mass.get(key, 0.0) + c["normalized_weight"]
    tv = 0.5 * sum(abs(table.get(k, 0.0) - mass.get(k, 0.0)) for k in set(table) | set(mass))
    assert tv < 0.05, tv


def check_errors():
    model = sm.TokenModel.uniform(["a", "b", "<eos>"])
    plan = sm.SteeringPlan.parse(json.dumps({
        "plan_version": 1, "max_tokens": 2,
        "steps": [{"kind": "masked_sample", "mask": {"kind": "token_ids", "ids": [2]}}],
        "check": [{"kind": "word_count_exact", "count": 1}],
    }))
    out = sm.run_inference(plan, model, method="smc", n_particles=8, seed=0)
    assert out["error"] is not None and out["error"][0] == "AllParticlesDead", out["error"]
    try:
        sm.SteeringPlan.parse("{")
    except sm.SteerError as e:
        assert e.args[0] == "ParseError"
    else:
        raise AssertionError("parse error expected")


def check_tasks():
    report = sm.verify(json.dumps([{"kind": "char_count_exact", "count": 7}]), "abc def")
    assert report["passed"]
    assert sm.weighted_pass_at_1([(math.log(3), True), (0.0, False)]) == 0.75
    assert sm.effective_sample_size([0.25] * 4) == 4.0
    tasks = sm.generate_task_instances("sent_02", 3, 1)
    assert len(tasks) == 3 and tasks == sm.generate_task_instances("sent_02", 3, 1)


if __name__ == "__main__":
    for f in (check_model, check_inference_matches_oracle, check_errors, check_tasks):
        f()
        print(f"ok  {f.__name__}")
