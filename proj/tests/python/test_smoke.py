import json
import pathlib

import pytest

import swarm_oracle as so

ROOT = pathlib.Path(__file__).resolve().parents[2]
T = so.UNITS_PER_TOKEN


def test_two_matching_reports_settle():
    c = so.Contract({1: 3 * T, 2: 3 * T, 3: 3 * T}, quota="1/3", issuance=3 * T)
    assert c.required_deposit(1) == T

    first = c.apply_report(so.report(1, 1, T, [200, 30, 30]))
    assert first["disposition"] == "created"
    assert first["settlements"] == []

    second = c.apply_report(so.report(2, 1, T, [205, 35, 25]))
    assert second["disposition"] == "joined"
    (outcome,) = second["settlements"]
    assert outcome["verdict"] == "accepted"
    assert c.supply == 12 * T
    assert c.accounted_total == c.supply
    assert len(c.state()["consensus"]) == 1


def test_wrong_deposit_is_rejected():
    c = so.Contract({1: 3 * T, 2: 3 * T})
    result = c.apply_report(so.report(1, 1, T - 1, [0, 0, 0]))
    assert result["disposition"] == "rejected"
    assert result["reason"] == "wrong_deposit"
    assert c.supply == 6 * T


def test_bad_parameters_raise():
    with pytest.raises(so.Error):
        so.Contract({1: T}, deposit_base="everything")


def test_run_replays_to_the_same_digest():
    config = json.loads((ROOT / "configs" / "smoke.json").read_text())
    result = so.run(config, 7)
    assert result["stop_reached"]
    assert set(result["node_digests"]) == {result["digest"]}
    assert so.replay_chain(result["chain"])["digest"] == result["digest"]
    accepted = [a for a in result["agreements"] if a["verdict"] == "accepted"]
    assert len(accepted) == 1
    assert accepted[0]["error"] is not None


def test_matrix_expansion():
    matrix = {"base": {"robots": 12, "seeds": [1]}, "grid": {"attackers": [0, 2], "quota": ["1/3", "1"]}}
    configs = so.expand_matrix(matrix)
    assert len(configs) == 4
    assert {c["quota"] for c in configs} == {"1/3", "1"}


def test_consensus_error():
    assert so.consensus_error([3, 4, 0], [0, 0, 0]) == pytest.approx(5.0)
