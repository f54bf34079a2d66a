from __future__ import annotations

import itertools

import numpy as np
import pytest

from fedcontrib.data import Dataset, VerticalPartition, vertical_split
from fedcontrib.errors import DataError
from fedcontrib.federation import (
    EVALUATOR,
    JFED,
    FederationMessage,
    InstanceRef,
    Transcript,
    assemble_federation,
    federated_all_at_once,
    federated_all_parties,
    federated_group_shapley,
    federated_group_shapley_exact,
    federated_predict,
    monolithic_predict,
    privacy_audit,
)
from fedcontrib.model import ModelConfig, make_linear_oracle, train
from fedcontrib.shapley import BackgroundSpec, shapley_exact, shapley_mc


def six_feature_setup(groups=([0, 1], [2, 3], [4, 5]), seed=0):
    rng = np.random.default_rng(seed)
    X = rng.random((30, 6))
    y = (X[:, 0] + X[:, 3] * X[:, 4] > 0.8).astype(int)
    ds = Dataset.from_arrays(X, y)
    model = train(ds, np.arange(ds.n), ModelConfig(kind="kernel_rbf", l2_strength=0.1))
    part = VerticalPartition([list(g) for g in groups])
    fed = assemble_federation(ds, part)
    fed.register_model(model)
    return ds, part, fed, model


def additive_setup():
    X = np.vstack([np.ones(6), np.zeros(6), np.zeros(6)])
    ds = Dataset.from_arrays(X, [1, 0, 0])
    assert np.all(ds.medians == 0)
    part = VerticalPartition([[0, 1], [2, 3], [4, 5]])
    fed = assemble_federation(ds, part)
    lin = make_linear_oracle([1, 2, 3, 4, 5, 6])
    fed.register_model(lin)
    return ds, part, fed, lin


def test_assemble_gives_each_party_its_block(surrogate_dataset):
    part = vertical_split(surrogate_dataset, 5)
    fed = assemble_federation(surrogate_dataset, part)
    assert len(fed.parties) == 5
    for p in fed.parties:
        assert p.feature_indices.size == 3
        assert p.instance_count == surrogate_dataset.n
        np.testing.assert_array_equal(p.reference_block, surrogate_dataset.medians[p.feature_indices])
    single = assemble_federation(surrogate_dataset, vertical_split(surrogate_dataset, 1))
    assert len(single.parties) == 1 and single.parties[0].feature_indices.size == 15


def test_tokens_are_opaque():
    ds, _, fed, _ = six_feature_setup()
    ref = fed.instance_ref(3)
    assert ref.type == "real" and "3" != ref.token and len(ref.token) == 24


def test_special_id_is_answered_with_reference_block():
    ds, _, fed, _ = six_feature_setup()
    party = fed.parties[1]
    reply = party.handle("host", FederationMessage("resolve_request", InstanceRef.special()))
    assert reply.payload == tuple(ds.medians[[2, 3]])


def test_predict_full_and_empty_coalitions():
    ds, part, fed, model = six_feature_setup()
    ref = fed.instance_ref(5)
    full = federated_predict(fed, ref, [0, 1, 4, 5, JFED], "party-1")
    assert full == model.predict_proba(ds.features[5])
    assert federated_predict(fed, ref, [], "party-1") == model.predict_proba(ds.medians)


def test_protocol_equals_monolith_for_every_coalition():
    ds, part, fed, model = six_feature_setup()
    for g, pid in enumerate(fed.party_ids):
        others = [j for j in range(6) if j not in part.feature_groups[g]]
        players = others + [JFED]
        for r in range(len(players) + 1):
            for Q in itertools.combinations(players, r):
                for idx in (0, 17):
                    via_protocol = federated_predict(fed, fed.instance_ref(idx), Q, pid)
                    direct = monolithic_predict(model, ds, idx, part, Q, g)
                    assert via_protocol == direct


def test_predict_errors():
    ds, part, fed, model = six_feature_setup()
    with pytest.raises(DataError, match="unknown instance"):
        federated_predict(fed, InstanceRef("real", "deadbeef"), [0, JFED], "party-1")
    with pytest.raises(DataError):
        federated_predict(fed, fed.instance_ref(0), [2], "party-1")
    bare = assemble_federation(ds, part)
    with pytest.raises(DataError, match="no model"):
        federated_predict(bare, bare.instance_ref(0), [JFED], "party-0")


@pytest.mark.parametrize("groups", [[[0], [1], [2], [3], [4], [5]], [[0], [1, 2], [3], [4, 5]]])
def test_singleton_party_reduces_to_individual_mc(groups):
    ds, part, fed, model = six_feature_setup(groups)
    idx = 4
    x = ds.features[idx]
    background = BackgroundSpec.reference_vector(ds.medians)
    for g, grp in enumerate(part.feature_groups):
        if grp.size != 1:
            continue
        rep = federated_group_shapley(fed, fed.instance_ref(idx), f"party-{g}", 400, seed=3, stream_id=idx)
        individual = shapley_mc(model, x, int(grp[0]), 400, background, seed=3, instance_id=idx)
        assert rep.per_party[f"party-{g}"] == pytest.approx(individual, abs=1e-12)


def test_additive_model_group_value_equals_member_sum():
    ds, part, fed, lin = additive_setup()
    ref = fed.instance_ref(0)
    individual = shapley_exact(lin, ds.features[0], BackgroundSpec.reference_vector(ds.medians))
    for g, pid in enumerate(fed.party_ids):
        member_sum = sum(individual.per_feature[j] for j in part.feature_groups[g])
        assert federated_group_shapley_exact(fed, ref, pid) == pytest.approx(member_sum, abs=1e-9)
        mc = federated_group_shapley(fed, ref, pid, 5000, seed=1).per_party[pid]
        assert abs(mc - member_sum) <= 0.05


def test_all_at_once_and_per_party_modes():
    ds, part, fed, lin = additive_setup()
    ref = fed.instance_ref(0)
    at_once = federated_all_at_once(fed, ref, 200, seed=0)
    per_party = federated_all_parties(fed, ref, 200, seed=0)
    for pid, expected in zip(fed.party_ids, (3.0, 7.0, 11.0)):
        assert at_once.per_party[pid] == pytest.approx(expected, abs=1e-9)
        assert per_party.per_party[pid] == pytest.approx(expected, abs=1e-9)
    assert at_once.mode == "all_at_once"


def test_other_feature_values_come_with_the_run():
    ds, part, fed, lin = additive_setup()
    rep = federated_group_shapley(fed, fed.instance_ref(0), "party-1", 100, seed=0, include_others=True)
    assert rep.per_other_feature == pytest.approx({0: 1.0, 1: 2.0, 4: 5.0, 5: 6.0})


def test_report_determinism():
    ds, part, fed, model = six_feature_setup()
    a = federated_group_shapley(fed, fed.instance_ref(2), "party-2", 300, seed=8, stream_id=2)
    b = federated_group_shapley(fed, fed.instance_ref(2), "party-2", 300, seed=8, stream_id=2)
    assert a.to_dict() == b.to_dict()


def test_standard_runs_pass_the_audit(tmp_path):
    ds, part, fed, model = six_feature_setup()
    rep = federated_group_shapley(fed, fed.instance_ref(1), "party-0", 200, seed=0, capture=True)
    transcript = rep.transcripts[0]
    assert len(transcript) == rep.transcript_length > 0
    verdict = privacy_audit(transcript)
    assert verdict.passed and verdict.inspected > 0
    path = tmp_path / "t.jsonl"
    transcript.write_jsonl(path)
    again = Transcript.read_jsonl(path)
    assert [e.to_json() for e in again.envelopes] == [e.to_json() for e in transcript.envelopes]
    assert privacy_audit(again).passed


def test_single_party_federation_passes_the_audit():
    ds, _, _, model = six_feature_setup()
    fed = assemble_federation(ds, VerticalPartition([list(range(6))]))
    fed.register_model(model)
    rep = federated_group_shapley(fed, fed.instance_ref(0), "party-0", 20, seed=0, capture=True)
    assert privacy_audit(rep.transcripts[0]).passed


def test_leaky_evaluator_fails_the_audit():
    ds, _, fed, _ = six_feature_setup()
    fed.transport.transcript = Transcript()
    ref = fed.instance_ref(0)
    # a well-behaved query, then a direct request for a party's raw block
    fed.transport.request(EVALUATOR, "host", FederationMessage("predict_request", ref, mask=(1,) * 6, grouped=()))
    fed.transport.request(EVALUATOR, "party-1", FederationMessage("resolve_request", ref))
    transcript = fed.transport.transcript
    fed.transport.transcript = None
    verdict = privacy_audit(transcript)
    assert not verdict.passed
    assert len(verdict.offending) == 1
    leaked = transcript.envelopes[verdict.offending[0]]
    assert leaked.message.kind == "resolve_response" and leaked.sender == "party-1"


def test_message_json_round_trip():
    msg = FederationMessage("resolve_request", InstanceRef("real", "abc"), mask=(1, 0, 1))
    assert FederationMessage.from_json(msg.to_json()) == msg
    assert msg.to_json() == '{"instance_ref":{"token":"abc","type":"real"},"kind":"resolve_request","mask":[1,0,1]}'
    special = FederationMessage("resolve_request", InstanceRef.special())
    assert special.to_dict() == {"kind": "resolve_request", "instance_ref": {"type": "special"}}
