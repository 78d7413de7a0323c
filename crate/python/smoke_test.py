"""Smoke test for the bayes_arena extension module.

Build and install first, for example:
    maturin build --release -m crates/py/Cargo.toml
    pip install target/wheels/bayes_arena-*.whl
"""

import math

import bayes_arena as ba


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    scenario = ba.Scenario.builtin("A")
    assert scenario.roster == ["Lich", "Add", "MT", "Warrior", "Hunter", "Priest", "Druid"]
    snap = scenario.initial_snapshot()
    mt = next(c for c in snap["characters"] if c["id"] == "MT")
    assert mt["imminent_death"]

    model = ba.DecisionModel(len(scenario.roster), e_id=0.9)
    targets = model.target_posterior(snap)
    assert close(sum(targets.values()), 1.0)
    assert close(sum(model.skill_posterior(snap).values()), 1.0)
    joint = model.joint(snap)
    assert len(joint) == 7 * len(ba.SKILLS)
    assert close(sum(p for _, _, p in joint), 1.0)
    target, skill, _ = joint[0]
    assert target == "MT" and skill == "big_heal"
    assert model.select_action(snap, []) is None
    assert model.select_action(snap, [("small_dd", "Lich")]) == ("small_dd", "Lich")
    assert ba.DecisionModel.from_json(model.to_json()).to_json() == model.to_json()

    episode = ba.Episode(scenario, seed=1)
    events = episode.step("small_dd", "Lich")
    assert any(e["type"] == "damage" and e["target"] == "Lich" for e in events)
    while not episode.finished and episode.tick < 300:
        episode.bot_step(model, "sample")
    if not episode.finished:
        episode.finish()
    assert episode.outcome in {"win", "loss", "timeout"}
    assert ba.replay_digest(episode.log_jsonl()) == episode.digest()

    logs = [ba.simulate(ba.Scenario.builtin(s), "bot-sample", seed=k) for k, s in enumerate("ABAB")]
    assert ba.simulate(scenario, "bot", seed=3) == ba.simulate(scenario, "bot", seed=3)
    learned, report = ba.fit(logs, pseudocount=1.0)
    assert report["records"] > 0 and learned.roster_size == 7
    metrics = ba.evaluate(learned, logs)
    assert metrics["top1"] > metrics["uniform_baseline"]

    table = ba.joint_table(scenario).splitlines()
    assert table[1].startswith("Lich,-inf")
    cells = [c for row in table[1:] for c in row.split(",")[1:]]
    assert close(sum(0.0 if c == "-inf" else math.exp(float(c)) for c in cells), 1.0)
    assert len(ba.sweep_target(scenario).splitlines()) == 22
    assert len(ba.sweep_skill(ba.Scenario.builtin("B"), grid="0.9:0.9:0.1").splitlines()) == 2

    try:
        ba.fit([], pseudocount=0.0)
    except ba.BayesArenaError:
        pass
    else:
        raise AssertionError("fitting nothing should fail")
    print("python smoke test passed")


if __name__ == "__main__":
    main()
