import json
import math
import os
from pathlib import Path

import numpy as np
import pytest

if os.environ.get("POPF_PY_REQUIRED"):
    import popf_py as popf
else:
    popf = pytest.importorskip("popf_py")

DATA = Path(__file__).resolve().parents[2] / "data"


@pytest.fixture(scope="module")
def case14():
    return popf.load_case(str(DATA / "case14.json"))


def test_case_shape(case14):
    assert popf.validate(case14) == []
    assert case14.n_bus == 14
    assert len(case14.output_names) == 1 + case14.n_bus + case14.n_gen + case14.n_branch
    assert case14.output_names[0] == "cost"


def test_invalid_case_reports_violations():
    doc = json.loads((DATA / "case2.json").read_text())
    for bus in doc["buses"]:
        bus["kind"] = "pq"
    with pytest.raises(popf.Error, match="exactly one Slack bus"):
        popf.parse_case(json.dumps(doc))


def test_sampling_is_seeded(case14):
    corr = str(DATA / "case14_correlation.json")
    a = popf.sample(case14, 50, seed=3, correlation=corr)
    b = popf.sample(case14, 50, seed=3, correlation=corr)
    c = popf.sample(case14, 50, seed=4, correlation=corr)
    assert a.shape == (50, case14.n_source)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_oracle_output(case14):
    s = popf.sample(case14, 1, seed=1)[0]
    y = popf.oracle(case14, s)
    assert y.shape == (len(case14.output_names),)
    assert y[0] > 0
    v = y[1 : 1 + case14.n_bus]
    assert np.all((v > 0.9) & (v < 1.1))


def test_train_predict_compare(tmp_path, case14):
    x, y = popf.generate_dataset(case14, 200, seed=2, out_dir=str(tmp_path / "ds"))
    assert x.shape == (200, len(case14.feature_names))
    model, history = popf.train(
        str(tmp_path / "ds"),
        {"hidden": [6, 6], "epochs_unsup": 2, "epochs_sup": 5, "batch": 40, "seed": 2},
    )
    assert len(history) == 5
    assert all(math.isfinite(h[2]) for h in history)
    pred = model.predict(x[:10])
    assert pred.shape == (10, y.shape[1])

    path = tmp_path / "m.sdae"
    model.save(str(path))
    again = popf.load_model(str(path))
    assert np.array_equal(again.predict(x[:10]), pred)

    report = popf.compare(case14, model, seed=5, n_samples=30)
    assert [m["name"] for m in report["methods"]] == ["M0", "M1", "M3"]
    assert report["n_samples"] == 30


def test_errors_are_python_exceptions(case14):
    with pytest.raises(popf.Error):
        popf.load_model("/nonexistent/model.sdae")
    with pytest.raises(popf.Error):
        popf.oracle(case14, np.zeros(case14.n_source + 1))
