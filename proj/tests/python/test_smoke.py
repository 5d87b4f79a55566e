import json
import math
import os
import pathlib

import numpy as np
import pytest
from jsonschema import Draft202012Validator
from referencing import Registry, Resource

import helioaim

ROOT = pathlib.Path(__file__).resolve().parents[2]
SCHEMAS = pathlib.Path(os.environ.get("HELIOAIM_SCHEMA_DIR", ROOT / "schemas"))

SMALL = {
    "plant": {"receiver": {"panel_count": 6, "panel_width": 4.2}, "field": {"heliostat_count": 60}},
    "optimizer": {
        "iterations": 1,
        "sampler": {"base_size": 80},
        "training": {"hidden": [4], "max_epochs": 30, "batch_size": 16},
    },
    "solver": {"backend": "branch-and-bound"},
}


def _registry():
    resources = []
    for path in SCHEMAS.glob("*.schema.json"):
        resources.append((path.name, Resource.from_contents(json.loads(path.read_text()))))
    return Registry().with_resources(resources)


REGISTRY = _registry()


def validate(name, doc):
    schema = json.loads((SCHEMAS / f"{name}.schema.json").read_text())
    Draft202012Validator(schema, registry=REGISTRY).validate(doc)


@pytest.fixture(scope="module")
def plant():
    return helioaim.Plant(helioaim.RunConfig.from_json(json.dumps(SMALL)))


def reference_score(C, dv, weights, lam, fraction=0.5):
    P, V, H = C.shape
    count = max(1, int(math.floor(V * fraction + 1e-9)))
    if (V - count) % 2:
        count += 1
    count = min(count, V)
    first = (V - count) // 2
    num = den = 0.0
    for p in range(P):
        if weights[p] <= 0:
            continue
        prof = C[p].mean(axis=1)
        energy = float(np.sum((prof[1:] + prof[:-1]) / 2) * dv)
        lo, hi = prof.min(), prof.max()
        dd = 0.0 if hi == lo else float(np.mean((hi - prof[first:first + count]) / (hi - lo)))
        num += (energy - lam * dd) * weights[p]
        den += weights[p]
    return num / den if den else 0.0


def test_percent_delta():
    assert helioaim.percent_delta(0.041, 0.086) == pytest.approx(-52.3)
    assert helioaim.percent_delta(1053.2, 1155.5) == pytest.approx(-8.9)
    assert helioaim.percent_delta(2.0, 2.0) == 0.0


def test_quality_score_matches_numpy():
    assert helioaim.quality_score(np.array([[[0.0], [2.0], [1.0]]]), 1.0, [1], 1.0) == 2.5
    rng = np.random.default_rng(0)
    for _ in range(20):
        C = rng.uniform(0, 500, size=(rng.integers(1, 7), rng.integers(3, 25), rng.integers(1, 6)))
        w = rng.integers(0, 30, size=C.shape[0]).tolist()
        lam = float(rng.uniform(0, 8000))
        got = helioaim.quality_score(C, 0.4, w, lam)
        assert got == pytest.approx(reference_score(C, 0.4, w, lam), rel=1e-12, abs=1e-9)


def test_plant_flux_and_metrics(plant):
    k = plant.equatorial()
    assert len(k) == plant.group_count
    C = plant.flux(k)
    assert C.shape[0] == 6 and C.min() >= 0.0
    ev = plant.evaluate(k)
    validate("metrics", ev["metrics"])
    assert sum(plant.sector_counts) == 60
    assert plant.evaluate(plant.sweep())["score"] > ev["score"]


def test_train_and_solve(plant):
    X, y = plant.sample(1, 120, seed=3)
    assert X.shape == (120, plant.group_count) and y.shape == (120,)
    model, report = helioaim.train(X, y, hidden=[5], max_epochs=40, batch_size=32, seed=1)
    assert report["epochs"] >= 1
    validate("model", json.loads(model.to_json()))
    sol = helioaim.solve_surrogate(model, X, 0.05)
    assert sol["status"] == "optimal"
    assert model.predict(sol["x"]) == pytest.approx(sol["objective"], abs=1e-6)
    assert all(0.0 <= v <= 3.0 for v in sol["x"])


def test_errors():
    with pytest.raises(helioaim.HelioError, match="unknown key"):
        helioaim.RunConfig.from_json('{"plant": {"bogus": 1}}')
    with pytest.raises(helioaim.HelioError):
        helioaim.Plant(helioaim.RunConfig.from_json(json.dumps(SMALL)), hour=0.0).evaluate([])


def test_cli_outputs_validate(tmp_path):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(SMALL))

    def cli(*args):
        code, out, err = helioaim.run_cli(list(args))
        assert code == 0, err
        return out

    cli("simulate", "--config", str(cfg), "--out", str(tmp_path / "sim"))
    cli("baseline", "--config", str(cfg), "--out", str(tmp_path / "base"))
    cli("datagen", "--config", str(cfg), "--out", str(tmp_path / "train"))
    cli("train", "--config", str(cfg), "--out", str(tmp_path / "train"))
    cli("optimize", "--config", str(cfg), "--out", str(tmp_path / "opt"))
    cli("compare", str(tmp_path / "opt"), str(tmp_path / "base" / "sweep"), "--out", str(tmp_path / "cmp"))

    schema_of = {
        "metrics.json": "metrics",
        "score.json": "score",
        "flux.json": "flux",
        "model.json": "model",
        "training.json": "training",
        "comparison.json": "comparison",
    }
    seen = set()
    for path in tmp_path.rglob("*.json"):
        if path.name in schema_of:
            validate(schema_of[path.name], json.loads(path.read_text()))
            seen.add(path.name)
    assert seen == set(schema_of)

    lines = (tmp_path / "opt" / "run_log.jsonl").read_text().splitlines()
    assert len(lines) == 1
    for line in lines:
        validate("run_log", json.loads(line))

    code, _, _ = helioaim.run_cli(["compare", str(tmp_path / "opt"), str(tmp_path / "nowhere")])
    assert code == 2


def test_optimize_is_deterministic(tmp_path):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(SMALL))
    for run in ("a", "b"):
        code, _, err = helioaim.run_cli(["optimize", "--config", str(cfg), "--out", str(tmp_path / run)])
        assert code == 0, err
    assert (tmp_path / "a" / "aims.csv").read_text() == (tmp_path / "b" / "aims.csv").read_text()
