"""Reactive multi-agent runtime: Supervisor, Checker, Improver, Planner.

Agents exchange performative envelopes over an in-process bus and step in
a deterministic round-robin.  Each iteration is one conversation whose
trace is exactly:

    supervisor -> checker   INFORM   batch metadata (directed contract)
    checker    -> improver  INFORM   prediction records + ranked anomalies
    improver   -> planner   PROPOSE  candidate model + training version
    planner    -> supervisor INFORM  promotion verdict

The agents are cooperative; nothing ever rejects or counter-bids.  Only
the Planner writes the production-model slot.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .augment import ShearParams, augment_labeled
from .data import Dataset, concat
from .embed import Reducer, encode_batch
from .errors import HumanTimeout, MissingMetadata, UnknownReceiver
from .evaluate import model_net_trust_score
from .model import Classifier, ClassifierConfig, predict_proba_batch, train
from .policy import PredictionRecord, RuleThresholds, categorize, select_anomalous
from .seeds import derive_seed
from .trust import TrustParams, fit_density_sets, trust_scores


class Performative(str, Enum):
    QUERY = "QUERY"
    INFORM = "INFORM"
    PROPOSE = "PROPOSE"
    REQUEST = "REQUEST"
    AGREE = "AGREE"
    FAILURE = "FAILURE"


class AgentAction(str, Enum):
    """Closed set of actions an agent step may take; every one is logged
    with its timestep in the run context."""

    TRAIN_CHECKER = "TrainChecker"
    FLAG_ANOMALIES = "FlagAnomalies"
    REQUEST_LABELS = "RequestLabels"
    AUGMENT = "Augment"
    RETRAIN = "Retrain"
    PROMOTE = "Promote"
    KEEP = "Keep"
    NOOP = "NoOp"


@dataclass(frozen=True)
class Envelope:
    conversation_id: int
    performative: Performative
    sender: str
    receiver: str
    payload_kind: str
    payload: dict
    seq: int = 0      # assigned by the bus on send
    ts: float = 0.0   # assigned by the bus on send (0 with wallclock off)

    def trace_record(self) -> dict:
        return {
            "ts": self.ts,
            "conversation_id": self.conversation_id,
            "seq": self.seq,
            "performative": self.performative.value,
            "sender": self.sender,
            "receiver": self.receiver,
            "payload_kind": self.payload_kind,
        }


class MessageBus:
    """FIFO, at-most-once delivery with an ordered trace of every envelope."""

    def __init__(self, wallclock: bool = True):
        self._queues: dict[str, list[Envelope]] = {}
        self._conversation_seq: dict[int, int] = {}
        self.wallclock = wallclock
        self.trace: list[Envelope] = []

    def register(self, name: str) -> None:
        self._queues.setdefault(name, [])

    def send(self, envelope: Envelope) -> Envelope:
        if envelope.receiver not in self._queues:
            raise UnknownReceiver(f"no agent named {envelope.receiver!r} registered")
        if envelope.sender == envelope.receiver:
            raise ValueError("sender and receiver must differ")
        seq = self._conversation_seq.get(envelope.conversation_id, 0) + 1
        self._conversation_seq[envelope.conversation_id] = seq
        delivered = replace(
            envelope, seq=seq, ts=time.time() if self.wallclock else 0.0
        )
        self._queues[envelope.receiver].append(delivered)
        self.trace.append(delivered)
        return delivered

    def next_message(self, agent_name: str):
        queue = self._queues.get(agent_name)
        if not queue:
            return None
        return queue.pop(0)

    def pending(self) -> int:
        return sum(len(q) for q in self._queues.values())

    def trace_records(self) -> list[dict]:
        return [e.trace_record() for e in self.trace]


def bus_send(bus: MessageBus, envelope: Envelope) -> Envelope:
    return bus.send(envelope)


def bus_next(bus: MessageBus, agent_name: str):
    return bus.next_message(agent_name)


# --- shared run state ---------------------------------------------------------

class TrainingStore:
    """Accumulated training data; version bumps on every append."""

    def __init__(self, dataset: Dataset):
        self.dataset = dataset
        self.version = 0

    def append(self, extra: Dataset) -> None:
        self.dataset = concat([self.dataset, extra], name=self.dataset.name)
        self.version += 1


class ProductionSlot:
    """The model currently serving predictions; every write is attributed."""

    def __init__(self, model: Classifier):
        self._model = model
        self.writes: list[tuple[int, str, int]] = []  # (timestep, writer, model version)

    @property
    def model(self) -> Classifier:
        return self._model

    def replace(self, model: Classifier, writer: str, timestep: int) -> None:
        self.writes.append((timestep, writer, model.version))
        self._model = model


class HumanLabelStore:
    """Every instance a human has labeled so far (originals, not copies)."""

    def __init__(self):
        self.dataset: Dataset | None = None

    def append(self, labeled: Dataset) -> None:
        self.dataset = labeled if self.dataset is None else concat([self.dataset, labeled])


@dataclass
class RewardTrace:
    rewards: list[float] = field(default_factory=list)

    def append(self, r: float) -> None:
        if not 0.0 <= r <= 1.0:
            raise ValueError(f"reward must be in [0, 1], got {r}")
        self.rewards.append(r)

    def cumulative(self) -> list[float]:
        return np.cumsum(self.rewards).tolist() if self.rewards else []


@dataclass
class RunContext:
    training: TrainingStore
    production: ProductionSlot
    human_labels: HumanLabelStore
    action_log: list[tuple[int, str, AgentAction]] = field(default_factory=list)

    def log_action(self, timestep: int, agent: str, action: AgentAction) -> None:
        self.action_log.append((timestep, agent, action))


# --- humans --------------------------------------------------------------------

class OracleHuman:
    """Answers labeling requests instantly from ground truth."""

    def __init__(self, labels_by_id: dict[int, int]):
        self.labels_by_id = labels_by_id

    def request_labels(self, tasks):
        return [(iid, int(self.labels_by_id[iid])) for iid, _ in tasks]


class InteractiveHuman:
    """Publishes tasks to the labeling queue and blocks until answered."""

    def __init__(self, queue, timeout_s: float = 600.0):
        self.queue = queue
        self.timeout_s = timeout_s

    def request_labels(self, tasks):
        task_ids = self.queue.enqueue_tasks(tasks)
        answers = self.queue.wait_for_all(task_ids, self.timeout_s)
        return [(iid, answers[tid]) for tid, (iid, _) in zip(task_ids, tasks)]


def request_labels(human, tasks) -> list[tuple[int, int]]:
    if not tasks:
        raise ValueError("request_labels needs at least one task")
    out = human.request_labels(tasks)
    requested = {iid for iid, _ in tasks}
    if not {iid for iid, _ in out} <= requested:
        raise ValueError("human returned labels for instances that were never requested")
    return out


# --- agents --------------------------------------------------------------------

class Supervisor:
    """Senses batch events and hands the Checker a directed contract."""

    name = "supervisor"

    def __init__(self, ctx: RunContext, checker_name: str = "checker"):
        self.ctx = ctx
        self.checker_name = checker_name

    def on_batch(self, timestep: int, batch: Dataset) -> list[Envelope]:
        if self.ctx.production.model is None or self.ctx.training.dataset is None:
            raise MissingMetadata("production model and training set must be registered first")
        self.ctx.log_action(timestep, self.name, AgentAction.NOOP)
        return [
            Envelope(
                conversation_id=timestep,
                performative=Performative.INFORM,
                sender=self.name,
                receiver=self.checker_name,
                payload_kind="batch_metadata",
                payload={
                    "timestep": timestep,
                    "batch": batch,
                    "model": self.ctx.production.model,
                    "training": self.ctx.training.dataset,
                    "training_version": self.ctx.training.version,
                },
            )
        ]

    def handle(self, env: Envelope) -> list[Envelope]:
        # promotion verdicts close the loop; nothing further to do
        self.ctx.log_action(env.payload.get("timestep", -1), self.name, AgentAction.NOOP)
        return []


class Checker:
    """Encode, score trust, apply the rule; fits density sets lazily."""

    name = "checker"

    def __init__(
        self,
        ctx: RunContext,
        reducer: Reducer,
        thresholds: RuleThresholds = RuleThresholds(),
        k: int = 10,
        filter_fraction: float = 0.05,
        improver_name: str = "improver",
    ):
        self.ctx = ctx
        self.reducer = reducer
        self.thresholds = thresholds
        self.k = k
        self.filter_fraction = filter_fraction
        self.improver_name = improver_name
        self.density = None
        self.fitted_version: int | None = None
        self.fitted_ids: np.ndarray | None = None
        self.density_fit_count = 0

    def _ensure_density(self, training: Dataset, version: int, timestep: int) -> None:
        if self.fitted_version == version:
            return
        latents = encode_batch(self.reducer, training.images)
        self.density = fit_density_sets(
            latents, training.labels, training.num_classes,
            k=self.k, filter_fraction=self.filter_fraction,
        )
        self.fitted_version = version
        self.fitted_ids = training.ids.copy()
        self.density_fit_count += 1
        self.ctx.log_action(timestep, self.name, AgentAction.TRAIN_CHECKER)

    def handle(self, env: Envelope) -> list[Envelope]:
        p = env.payload
        timestep, batch, model = p["timestep"], p["batch"], p["model"]
        self._ensure_density(p["training"], p["training_version"], timestep)

        probs = predict_proba_batch(model, batch.images)
        conf = probs.max(axis=1)
        pred = probs.argmax(axis=1)
        latents = encode_batch(self.reducer, batch.images)
        trust = trust_scores(self.density, latents, pred)
        records = [
            PredictionRecord(
                instance_id=int(batch.ids[i]),
                probabilities=probs[i],
                confidence=float(conf[i]),
                predicted=int(pred[i]),
                trust=float(trust[i]),
                category=categorize(float(conf[i]), float(trust[i]), self.thresholds),
            )
            for i in range(len(batch))
        ]
        anomalies = select_anomalous(records, len(records))
        self.ctx.log_action(timestep, self.name, AgentAction.FLAG_ANOMALIES)
        return [
            Envelope(
                conversation_id=env.conversation_id,
                performative=Performative.INFORM,
                sender=self.name,
                receiver=self.improver_name,
                payload_kind="checked_batch",
                payload={
                    "timestep": timestep,
                    "batch": batch,
                    "model": model,
                    "records": records,
                    "anomalies": anomalies,
                    "training_version": p["training_version"],
                },
            )
        ]


class Improver:
    """Gets human labels for ranked anomalies, augments, retrains warm-start."""

    name = "improver"

    def __init__(
        self,
        ctx: RunContext,
        human,
        n_labels: int,
        shear_params: ShearParams,
        retrain_config: ClassifierConfig,
        base_seed: int,
        planner_name: str = "planner",
    ):
        self.ctx = ctx
        self.human = human
        self.n_labels = n_labels
        self.shear_params = shear_params
        self.retrain_config = retrain_config
        self.base_seed = base_seed
        self.planner_name = planner_name

    def _propose(self, env: Envelope, candidate, n_anomalous, n_labeled, timed_out=False) -> list[Envelope]:
        return [
            Envelope(
                conversation_id=env.conversation_id,
                performative=Performative.PROPOSE,
                sender=self.name,
                receiver=self.planner_name,
                payload_kind="candidate_model",
                payload={
                    "timestep": env.payload["timestep"],
                    "candidate": candidate,
                    "training_version": self.ctx.training.version,
                    "n_anomalous": n_anomalous,
                    "n_labeled": n_labeled,
                    "timed_out": timed_out,
                },
            )
        ]

    def handle(self, env: Envelope) -> list[Envelope]:
        p = env.payload
        timestep, batch, incumbent = p["timestep"], p["batch"], p["model"]
        anomalies = p["anomalies"]
        chosen = anomalies[: self.n_labels]
        if not chosen:
            self.ctx.log_action(timestep, self.name, AgentAction.NOOP)
            return self._propose(env, incumbent, len(anomalies), 0)

        row_of = {int(iid): i for i, iid in enumerate(batch.ids)}
        tasks = [(r.instance_id, batch.image2d(row_of[r.instance_id])) for r in chosen]
        try:
            answers = request_labels(self.human, tasks)
        except HumanTimeout:
            # abort to the Keep path; the planner will keep the incumbent
            self.ctx.log_action(timestep, self.name, AgentAction.NOOP)
            return self._propose(env, incumbent, len(anomalies), 0, timed_out=True)
        self.ctx.log_action(timestep, self.name, AgentAction.REQUEST_LABELS)

        rows = np.array([row_of[iid] for iid, _ in answers], dtype=np.int64)
        labeled = Dataset(
            images=batch.images[rows].copy(),
            labels=np.array([lab for _, lab in answers], dtype=np.int64),
            ids=batch.ids[rows].copy(),
            num_classes=batch.num_classes,
            name="human-labeled",
            height=batch.height,
            width=batch.width,
        )
        augmented = augment_labeled(
            labeled, replace(self.shear_params, seed=derive_seed(self.base_seed, "shear", timestep))
        )
        self.ctx.log_action(timestep, self.name, AgentAction.AUGMENT)

        self.ctx.human_labels.append(labeled)
        self.ctx.training.append(augmented)
        config = replace(self.retrain_config, seed=derive_seed(self.base_seed, "retrain", timestep))
        candidate = train(self.ctx.training.dataset, config, init=incumbent)
        self.ctx.log_action(timestep, self.name, AgentAction.RETRAIN)
        return self._propose(env, candidate, len(anomalies), len(labeled))


class Planner:
    """Promotes a candidate only if its net trust score strictly improves."""

    name = "planner"

    def __init__(
        self,
        ctx: RunContext,
        gate_set_provider,
        trust_params: TrustParams = TrustParams(),
        supervisor_name: str = "supervisor",
    ):
        self.ctx = ctx
        self.gate_set_provider = gate_set_provider
        self.trust_params = trust_params
        self.supervisor_name = supervisor_name
        self.reward_trace = RewardTrace()

    def handle(self, env: Envelope) -> list[Envelope]:
        p = env.payload
        timestep, candidate = p["timestep"], p["candidate"]
        incumbent = self.ctx.production.model
        gate = self.gate_set_provider()

        candidate_nts = model_net_trust_score(candidate, gate, self.trust_params)
        if candidate is incumbent:
            incumbent_nts = candidate_nts
        else:
            incumbent_nts = model_net_trust_score(incumbent, gate, self.trust_params)

        promoted = candidate_nts > incumbent_nts
        if promoted:
            self.ctx.production.replace(candidate, writer=self.name, timestep=timestep)
            self.ctx.log_action(timestep, self.name, AgentAction.PROMOTE)
        else:
            self.ctx.log_action(timestep, self.name, AgentAction.KEEP)

        reward = candidate_nts if promoted else incumbent_nts
        self.reward_trace.append(reward)
        return [
            Envelope(
                conversation_id=env.conversation_id,
                performative=Performative.INFORM,
                sender=self.name,
                receiver=self.supervisor_name,
                payload_kind="promotion_verdict",
                payload={
                    "timestep": timestep,
                    "promoted": promoted,
                    "candidate_nts": candidate_nts,
                    "incumbent_nts": incumbent_nts,
                    "reward": reward,
                },
            )
        ]


# --- runtime -------------------------------------------------------------------

@dataclass
class IterationOutcome:
    timestep: int
    n_anomalous: int
    n_labeled: int
    promoted: bool
    candidate_nts: float
    incumbent_nts: float
    reward: float
    timed_out: bool


class AgentRuntime:
    """Single-threaded round-robin scheduler in registration order."""

    def __init__(self, bus: MessageBus, supervisor, checker, improver, planner):
        self.bus = bus
        self.supervisor = supervisor
        self.agents = [supervisor, checker, improver, planner]
        for agent in self.agents:
            bus.register(agent.name)

    def run_iteration(self, timestep: int, batch: Dataset) -> IterationOutcome:
        for env in self.supervisor.on_batch(timestep, batch):
            self.bus.send(env)
        while self.bus.pending():
            for agent in self.agents:
                while (env := self.bus.next_message(agent.name)) is not None:
                    for out in agent.handle(env):
                        self.bus.send(out)
        return self._outcome(timestep)

    def _outcome(self, timestep: int) -> IterationOutcome:
        convo = [e for e in self.bus.trace if e.conversation_id == timestep]
        proposal = next(e for e in convo if e.payload_kind == "candidate_model")
        verdict = next(e for e in convo if e.payload_kind == "promotion_verdict")
        return IterationOutcome(
            timestep=timestep,
            n_anomalous=proposal.payload["n_anomalous"],
            n_labeled=proposal.payload["n_labeled"],
            promoted=verdict.payload["promoted"],
            candidate_nts=verdict.payload["candidate_nts"],
            incumbent_nts=verdict.payload["incumbent_nts"],
            reward=verdict.payload["reward"],
            timed_out=proposal.payload["timed_out"],
        )
