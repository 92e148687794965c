import pytest

from efficiency_api import app

EXAMPLE_TECH = {"kind": "hrep", "normals": [[1, 0], [1, 1], [0, 1]], "rhs": [0, 0, 2]}


@pytest.fixture
def client():
    app.config["TESTING"] = True
    with app.test_client() as client:
        yield client


def test_health(client):
    response = client.get("/api/health")
    assert response.status_code == 200
    assert response.get_json()["status"] == "healthy"


def test_evaluate(client):
    response = client.post("/api/evaluate", json={
        "technology": EXAMPLE_TECH, "z": [-3, 2], "g": [1, 1], "p": ["-inf", "1", "inf"],
    })
    assert response.status_code == 200
    rows = response.get_json()["rows"]
    assert [r["p"] for r in rows] == ["-inf", "1", "inf"]
    assert rows[0]["score"] == pytest.approx(0.0, abs=1e-12)
    assert rows[1]["score"] == pytest.approx(0.5)
    assert rows[1]["delta_star"] == pytest.approx([1.0, 0.0])
    assert rows[2]["score"] == pytest.approx(1.0)
    assert rows[1]["status"] == "weakly_efficient"


def test_evaluate_infeasible_netput_scores_minus_inf(client):
    response = client.post("/api/evaluate", json={"technology": EXAMPLE_TECH, "z": [1, 1], "g": [1, 1]})
    assert response.status_code == 200
    assert response.get_json()["rows"][0]["score"] == "-inf"


def test_evaluate_fdh_with_observed_direction(client):
    response = client.post("/api/evaluate", json={
        "technology": {"kind": "fdh", "points": [[-2, 2], [-4, 5]]}, "z": [-4, 2],
    })
    assert response.status_code == 200
    assert response.get_json()["rows"][0]["score"] == pytest.approx(0.75)


def test_dual(client):
    response = client.post("/api/dual", json={"technology": EXAMPLE_TECH, "z": [-3, 2], "g": [1, 1], "p": 1})
    assert response.status_code == 200
    row = response.get_json()["rows"][0]
    assert row["dual_value"] == pytest.approx(0.5)
    assert row["prices"] == pytest.approx([0.5, 0.5])
    assert row["criterion"] == "maximization"


def test_dual_needs_convexity(client):
    response = client.post("/api/dual", json={
        "technology": {"kind": "fdh", "points": [[-2, 2], [-4, 5]]}, "z": [-4, 2], "p": "0.5",
    })
    assert response.status_code == 422
    assert response.get_json()["status"] == "convexity_required"


def test_classify(client):
    response = client.post("/api/classify", json={"technology": EXAMPLE_TECH, "z": [-3, 2], "g": [1, 1]})
    assert response.status_code == 200
    row = response.get_json()["rows"][0]
    assert row["status"] == "weakly_efficient"
    assert row["blocked"] == [1]


@pytest.mark.parametrize("payload", [
    {"z": [-3, 2]},
    {"technology": EXAMPLE_TECH},
    {"technology": {"kind": "cone"}, "z": [-3, 2]},
    {"technology": EXAMPLE_TECH, "z": [-3, 2], "tol": "fine"},
    {"technology": EXAMPLE_TECH, "z": [-3, 2], "p": "half"},
    {"technology": EXAMPLE_TECH, "z": [-3, 2, 1]},
])
def test_bad_payloads(client, payload):
    response = client.post("/api/evaluate", json=payload)
    assert response.status_code == 400
    assert "error" in response.get_json()


def test_non_json_body(client):
    response = client.post("/api/evaluate", data="z=1", content_type="text/plain")
    assert response.status_code == 400
