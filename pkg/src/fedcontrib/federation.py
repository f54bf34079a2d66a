"""In-process simulation of contribution measurement in vertical federation.

Roles:

* ``Party``: owns one block of feature columns for every shared instance,
  keyed by an opaque token. Answers ``resolve_request`` messages with its
  block, or with its reference block when asked with the special ID.
* ``PredictionHost``: holds the jointly trained model. On a
  ``predict_request`` it collects blocks from every party, assembles the
  probe instance and returns one scalar.
* ``Evaluator``: the contribution-measuring coordinator. It only ever sends
  on/off patterns with an instance token and receives scalar predictions.

The party being measured is folded into a single "united" player; the other
parties' features stay individual players. Players are ordered by their
lowest feature index, so a one-feature party keeps its original position.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .data import Dataset, VerticalPartition
from .errors import DataError, NumericError
from .shapley import permutation_ranks, stream

logger = logging.getLogger(__name__)

# Stands for the target party's united feature inside a coalition.
JFED = -1

EVALUATOR = "evaluator"
HOST = "host"

MESSAGE_KINDS = ("resolve_request", "resolve_response", "predict_request", "predict_response")


@dataclass(frozen=True)
class InstanceRef:
    type: str  # "real" or "special"
    token: str | None = None

    @classmethod
    def special(cls) -> "InstanceRef":
        return cls("special")

    def to_dict(self) -> dict:
        out = {"type": self.type}
        if self.token is not None:
            out["token"] = self.token
        return out


@dataclass(frozen=True)
class FederationMessage:
    kind: str
    instance_ref: InstanceRef | None = None
    payload: tuple[float, ...] | None = None
    mask: tuple[int, ...] | None = None
    grouped: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in MESSAGE_KINDS:
            raise ValueError(f"unknown message kind {self.kind!r}")

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.instance_ref is not None:
            out["instance_ref"] = self.instance_ref.to_dict()
        if self.payload is not None:
            out["payload"] = [float(v) for v in self.payload]
        if self.mask is not None:
            out["mask"] = [int(v) for v in self.mask]
        if self.grouped is not None:
            out["grouped"] = list(self.grouped)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict) -> "FederationMessage":
        ref = data.get("instance_ref")
        return cls(
            kind=data["kind"],
            instance_ref=InstanceRef(ref["type"], ref.get("token")) if ref else None,
            payload=tuple(data["payload"]) if "payload" in data else None,
            mask=tuple(data["mask"]) if "mask" in data else None,
            grouped=tuple(data["grouped"]) if "grouped" in data else None,
        )

    @classmethod
    def from_json(cls, text: str) -> "FederationMessage":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Envelope:
    sender: str
    receiver: str
    message: FederationMessage

    def to_json(self) -> str:
        return json.dumps(
            {"from": self.sender, "to": self.receiver, "message": self.message.to_dict()},
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str) -> "Envelope":
        data = json.loads(line)
        return cls(data["from"], data["to"], FederationMessage.from_dict(data["message"]))


@dataclass
class Transcript:
    envelopes: list[Envelope] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.envelopes)

    def write_jsonl(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for env in self.envelopes:
                fh.write(env.to_json() + "\n")

    @classmethod
    def read_jsonl(cls, path: str | Path) -> "Transcript":
        with Path(path).open(encoding="utf-8") as fh:
            return cls([Envelope.from_json(line) for line in fh if line.strip()])


class Transport:
    """Synchronous request/response routing between named endpoints."""

    def __init__(self) -> None:
        self._handlers: dict[str, Callable[[str, FederationMessage], FederationMessage]] = {}
        self.transcript: Transcript | None = None
        self.message_count = 0

    def register(self, name: str, handler) -> None:
        self._handlers[name] = handler

    def request(self, sender: str, receiver: str, message: FederationMessage) -> FederationMessage:
        if receiver not in self._handlers:
            raise DataError(f"no endpoint named {receiver!r}")
        self._record(sender, receiver, message)
        reply = self._handlers[receiver](sender, message)
        self._record(receiver, sender, reply)
        return reply

    def _record(self, sender: str, receiver: str, message: FederationMessage) -> None:
        self.message_count += 1
        if self.transcript is not None:
            self.transcript.envelopes.append(Envelope(sender, receiver, message))


class Party:
    def __init__(self, party_id: str, feature_indices, store: dict[str, np.ndarray], reference_block) -> None:
        self.id = party_id
        self.feature_indices = np.asarray(feature_indices, dtype=int)
        self._store = store
        self.reference_block = np.asarray(reference_block, dtype=float)
        for block in store.values():
            if block.shape != (self.feature_indices.size,):
                raise DataError("stored block width does not match the party's features")

    @property
    def instance_count(self) -> int:
        return len(self._store)

    def handle(self, sender: str, message: FederationMessage) -> FederationMessage:
        if message.kind != "resolve_request":
            raise DataError(f"party {self.id} cannot handle {message.kind!r}")
        ref = message.instance_ref
        if ref is None or ref.type == "special":
            block = self.reference_block
        else:
            try:
                block = self._store[ref.token]
            except KeyError:
                raise DataError(f"party {self.id}: unknown instance reference") from None
            if message.mask is not None:
                block = np.where(np.asarray(message.mask, dtype=bool), block, self.reference_block)
        return FederationMessage("resolve_response", payload=tuple(float(v) for v in block))


@dataclass(frozen=True)
class Player:
    """One coordinate of the reduced game: a single feature or a whole party."""

    features: tuple[int, ...]
    party: str | None = None  # set when the player is a united party block

    @property
    def united(self) -> bool:
        return self.party is not None


class PredictionHost:
    def __init__(self, federation: "Federation") -> None:
        self._federation = federation
        self.model = None

    def handle(self, sender: str, message: FederationMessage) -> FederationMessage:
        if message.kind != "predict_request":
            raise DataError(f"host cannot handle {message.kind!r}")
        if self.model is None:
            raise DataError("no model registered with the prediction host")
        fed = self._federation
        players = fed.players(message.grouped or ())
        if message.mask is None or len(message.mask) != len(players):
            raise DataError("predict_request mask does not match the player layout")
        on = np.zeros(fed.d, dtype=bool)
        for player, flag in zip(players, message.mask):
            on[list(player.features)] = bool(flag)
        probe = np.empty(fed.d)
        for party in fed.parties:
            local = on[party.feature_indices]
            if party.id in (message.grouped or ()) or not local.any():
                ref = message.instance_ref if local.all() else InstanceRef.special()
                request = FederationMessage("resolve_request", instance_ref=ref)
            else:
                request = FederationMessage(
                    "resolve_request",
                    instance_ref=message.instance_ref,
                    mask=tuple(int(v) for v in local),
                )
            reply = fed.transport.request(HOST, party.id, request)
            probe[party.feature_indices] = reply.payload
        value = self.model.predict_proba(probe)
        return FederationMessage("predict_response", payload=(value,))


class Federation:
    """Handle returned by :func:`assemble_federation`."""

    def __init__(self, parties: list[Party], tokens: list[str], d: int) -> None:
        self.parties = parties
        self.d = d
        self._tokens = tokens
        self.transport = Transport()
        self.host = PredictionHost(self)
        self.transport.register(HOST, self.host.handle)
        for party in parties:
            self.transport.register(party.id, party.handle)

    @property
    def party_ids(self) -> list[str]:
        return [p.id for p in self.parties]

    def party(self, party_id: str) -> Party:
        for p in self.parties:
            if p.id == party_id:
                return p
        raise DataError(f"unknown party {party_id!r}")

    def register_model(self, model) -> None:
        if getattr(model, "d", self.d) != self.d:
            raise DataError("model width does not match the federation")
        self.host.model = model

    def instance_ref(self, index: int) -> InstanceRef:
        """Opaque reference to the ``index``-th shared instance."""
        if not 0 <= index < len(self._tokens):
            raise DataError(f"instance {index} out of range")
        return InstanceRef("real", self._tokens[index])

    def players(self, grouped: Iterable[str] = ()) -> list[Player]:
        grouped = set(grouped)
        out = []
        for party in self.parties:
            if party.id in grouped:
                out.append(Player(tuple(int(i) for i in party.feature_indices), party.id))
            else:
                out.extend(Player((int(i),)) for i in party.feature_indices)
        return sorted(out, key=lambda p: min(p.features))


def assemble_federation(dataset: Dataset, partition: VerticalPartition, token_seed: int = 0) -> Federation:
    """Give every party its feature block and its slice of the reference vector."""
    if partition.party_count == 0:
        raise DataError("empty partition")
    partition.validate_for(dataset.d)
    salt = np.random.default_rng(token_seed).bytes(16)
    tokens = [hashlib.blake2b(salt + int(k).to_bytes(8, "little"), digest_size=12).hexdigest() for k in range(dataset.n)]
    parties = []
    for g, group in enumerate(partition.feature_groups):
        block = dataset.features[:, group]
        store = {tok: block[k].copy() for k, tok in enumerate(tokens)}
        parties.append(Party(f"party-{g}", group, store, dataset.medians[group].copy()))
    return Federation(parties, tokens, dataset.d)


class Evaluator:
    """Coordinator that estimates contributions from scalar predictions only.

    Predictions are cached per coalition, so each distinct on/off pattern is
    requested from the host once per run.
    """

    name = EVALUATOR

    def __init__(self, federation: Federation, instance_ref: InstanceRef, grouped: Sequence[str]) -> None:
        self.federation = federation
        self.instance_ref = instance_ref
        self.grouped = tuple(grouped)
        self.players = federation.players(self.grouped)
        self._cache: dict[bytes, float] = {}

    def value(self, mask: np.ndarray) -> float:
        key = np.asarray(mask, dtype=bool).tobytes()
        if key not in self._cache:
            request = FederationMessage(
                "predict_request",
                instance_ref=self.instance_ref,
                mask=tuple(int(v) for v in mask),
                grouped=self.grouped,
            )
            reply = self.federation.transport.request(self.name, HOST, request)
            if reply.payload is None or len(reply.payload) != 1:
                raise NumericError("prediction host returned a non-scalar reply")
            self._cache[key] = float(reply.payload[0])
        return self._cache[key]

    def player_index(self, party_id: str) -> int:
        for k, p in enumerate(self.players):
            if p.party == party_id:
                return k
        raise DataError(f"party {party_id!r} is not a united player here")


def _coalition_mask(evaluator: Evaluator, Q: Iterable[int]) -> np.ndarray:
    mask = np.zeros(len(evaluator.players), dtype=bool)
    by_feature = {p.features[0]: k for k, p in enumerate(evaluator.players) if not p.united}
    for q in Q:
        if q == JFED:
            united = [k for k, p in enumerate(evaluator.players) if p.united]
            if len(united) != 1:
                raise DataError("JFED needs exactly one united party")
            mask[united[0]] = True
        elif q in by_feature:
            mask[by_feature[q]] = True
        else:
            raise DataError(f"feature {q} is not an individual player in this view")
    return mask


def federated_predict(federation: Federation, instance_ref: InstanceRef, Q: Iterable[int], target: str) -> float:
    """Prediction for the probe built from coalition ``Q``.

    ``Q`` holds indices of other parties' features that keep their true
    values, plus :data:`JFED` if the target party's block is switched on.
    """
    evaluator = Evaluator(federation, instance_ref, [target])
    return evaluator.value(_coalition_mask(evaluator, Q))


def monolithic_predict(model, dataset: Dataset, index: int, partition: VerticalPartition, Q, target: int) -> float:
    """Direct masked evaluation without the protocol (test oracle)."""
    on = np.zeros(dataset.d, dtype=bool)
    for q in Q:
        if q == JFED:
            on[partition.feature_groups[target]] = True
        else:
            on[q] = True
    probe = np.where(on, dataset.features[index], dataset.medians)
    return model.predict_proba(probe)


def _permutation_estimate(
    evaluator: Evaluator, targets: Sequence[int], M: int, rng: np.random.Generator
) -> dict[int, float]:
    ranks = permutation_ranks(rng, M, len(evaluator.players))
    sums = {t: 0.0 for t in targets}
    for m in range(M):
        row = ranks[m]
        for t in targets:
            ahead = row < row[t]
            with_t = ahead.copy()
            with_t[t] = True
            sums[t] += evaluator.value(with_t) - evaluator.value(ahead)
    return {t: s / M for t, s in sums.items()}


@dataclass
class GroupShapleyReport:
    per_party: dict[str, float]
    per_other_feature: dict[int, float]
    instance_token: str
    M: int
    seed: int
    transcript_length: int
    prediction: float
    baseline: float
    mode: str = "per_party"
    transcripts: list[Transcript] = field(default_factory=list, repr=False)

    def merge(self, other: "GroupShapleyReport") -> "GroupShapleyReport":
        merged = dict(self.per_party)
        merged.update(other.per_party)
        return GroupShapleyReport(
            per_party=merged,
            per_other_feature={},
            instance_token=self.instance_token,
            M=self.M,
            seed=self.seed,
            transcript_length=self.transcript_length + other.transcript_length,
            prediction=self.prediction,
            baseline=self.baseline,
            mode=self.mode,
            transcripts=self.transcripts + other.transcripts,
        )

    def to_dict(self, instance_id=None) -> dict:
        return {
            "instance_id": instance_id,
            "instance_token": self.instance_token,
            "mode": self.mode,
            "M": self.M,
            "seed": self.seed,
            "prediction": self.prediction,
            "baseline": self.baseline,
            "estimator": "permutation sampling, switched-off blocks at reference values",
            "transcript_length": self.transcript_length,
            "parties": [{"id": k, "phi": v} for k, v in self.per_party.items()],
            "other_features": [{"feature": k, "phi": v} for k, v in sorted(self.per_other_feature.items())],
        }


def _run(federation: Federation, capture: bool):
    transcript = Transcript() if capture else None
    federation.transport.transcript = transcript
    start = federation.transport.message_count
    return transcript, start


def federated_group_shapley(
    federation: Federation,
    instance_ref: InstanceRef,
    target: str,
    M: int,
    seed: int,
    stream_id: int = 0,
    include_others: bool = False,
    capture: bool = False,
) -> GroupShapleyReport:
    """Shapley value of ``target``'s united feature for one instance.

    The random stream is keyed by (seed, stream_id, united player position);
    with a one-feature party this is exactly the stream :func:`shapley_mc`
    uses for that feature, so the two estimates coincide.
    """
    if M < 1:
        raise DataError("M must be at least 1")
    federation.party(target)
    transcript, start = _run(federation, capture)
    try:
        evaluator = Evaluator(federation, instance_ref, [target])
        t = evaluator.player_index(target)
        n_players = len(evaluator.players)
        targets = list(range(n_players)) if include_others else [t]
        estimates = _permutation_estimate(evaluator, targets, M, stream(seed, stream_id, t))
        prediction = evaluator.value(np.ones(n_players, dtype=bool))
        baseline = evaluator.value(np.zeros(n_players, dtype=bool))
    finally:
        federation.transport.transcript = None
    others = {
        evaluator.players[k].features[0]: v for k, v in estimates.items() if k != t
    }
    return GroupShapleyReport(
        per_party={target: estimates[t]},
        per_other_feature=others,
        instance_token=instance_ref.token or "",
        M=M,
        seed=seed,
        transcript_length=federation.transport.message_count - start,
        prediction=prediction,
        baseline=baseline,
        transcripts=[transcript] if transcript is not None else [],
    )


def federated_all_parties(
    federation: Federation,
    instance_ref: InstanceRef,
    M: int,
    seed: int,
    stream_id: int = 0,
    capture: bool = False,
) -> GroupShapleyReport:
    """Measure every party in turn, each as the single united feature."""
    report = None
    for party_id in federation.party_ids:
        one = federated_group_shapley(federation, instance_ref, party_id, M, seed, stream_id, capture=capture)
        report = one if report is None else report.merge(one)
    return report


def federated_all_at_once(
    federation: Federation,
    instance_ref: InstanceRef,
    M: int,
    seed: int,
    stream_id: int = 0,
    capture: bool = False,
) -> GroupShapleyReport:
    """Every party folded into a united feature simultaneously (one game)."""
    if M < 1:
        raise DataError("M must be at least 1")
    transcript, start = _run(federation, capture)
    try:
        evaluator = Evaluator(federation, instance_ref, federation.party_ids)
        n_players = len(evaluator.players)
        values = {}
        for k, player in enumerate(evaluator.players):
            values[player.party] = _permutation_estimate(evaluator, [k], M, stream(seed, stream_id, k))[k]
        prediction = evaluator.value(np.ones(n_players, dtype=bool))
        baseline = evaluator.value(np.zeros(n_players, dtype=bool))
    finally:
        federation.transport.transcript = None
    return GroupShapleyReport(
        per_party={pid: values[pid] for pid in federation.party_ids},
        per_other_feature={},
        instance_token=instance_ref.token or "",
        M=M,
        seed=seed,
        transcript_length=federation.transport.message_count - start,
        prediction=prediction,
        baseline=baseline,
        mode="all_at_once",
        transcripts=[transcript] if transcript is not None else [],
    )


def federated_group_shapley_exact(federation: Federation, instance_ref: InstanceRef, target: str) -> float:
    """Exact Shapley value of the united feature over the reduced game."""
    from .shapley import shapley_from_table

    evaluator = Evaluator(federation, instance_ref, [target])
    n_players = len(evaluator.players)
    if n_players > 15:
        raise DataError("exact reduced-game enumeration limited to 15 players")
    codes = np.arange(1 << n_players)
    table = np.array(
        [evaluator.value(((c >> np.arange(n_players)) & 1).astype(bool)) for c in codes]
    )
    return float(shapley_from_table(table, n_players)[evaluator.player_index(target)])


@dataclass
class AuditVerdict:
    passed: bool
    offending: list[int]
    inspected: int

    def to_dict(self) -> dict:
        return {"passed": self.passed, "offending": self.offending, "inspected": self.inspected}


def privacy_audit(transcript: Transcript, evaluator: str = EVALUATOR) -> AuditVerdict:
    """Check that the evaluator only ever received scalar predictions.

    Any message delivered to the evaluator that is not a one-value
    ``predict_response`` (for instance a party's feature block) is reported
    by its index in the transcript.
    """
    offending = []
    inspected = 0
    for idx, env in enumerate(transcript.envelopes):
        if env.receiver != evaluator:
            continue
        inspected += 1
        msg = env.message
        scalar_reply = (
            msg.kind == "predict_response"
            and msg.payload is not None
            and len(msg.payload) == 1
            and msg.mask is None
        )
        if not scalar_reply:
            offending.append(idx)
    return AuditVerdict(passed=not offending, offending=offending, inspected=inspected)
