import numpy as np
import pytest

from trustloop.agents import (
    AgentAction,
    AgentRuntime,
    Checker,
    Envelope,
    HumanLabelStore,
    Improver,
    MessageBus,
    OracleHuman,
    Performative,
    Planner,
    ProductionSlot,
    RewardTrace,
    RunContext,
    Supervisor,
    TrainingStore,
    bus_next,
    bus_send,
    request_labels,
)
from trustloop.augment import ShearParams
from trustloop.data import concat, iteration_batch
from trustloop.embed import fit_reducer
from trustloop.errors import HumanTimeout, MissingMetadata, UnknownReceiver
from trustloop.model import ClassifierConfig, train, zero_classifier
from trustloop.policy import RuleThresholds
from trustloop.seeds import generator

from conftest import toy_dataset


# --- bus -----------------------------------------------------------------------

def make_envelope(conversation=1, sender="a", receiver="b", kind="x", payload=None):
    return Envelope(
        conversation_id=conversation, performative=Performative.INFORM,
        sender=sender, receiver=receiver, payload_kind=kind, payload=payload or {},
    )


def test_bus_fifo_and_seq():
    bus = MessageBus(wallclock=False)
    bus.register("a")
    bus.register("b")
    bus_send(bus, make_envelope(kind="first"))
    bus_send(bus, make_envelope(kind="second"))
    first = bus_next(bus, "b")
    second = bus_next(bus, "b")
    assert (first.payload_kind, second.payload_kind) == ("first", "second")
    assert second.seq == first.seq + 1
    assert bus_next(bus, "b") is None  # at-most-once


def test_bus_unknown_receiver_and_self_send():
    bus = MessageBus(wallclock=False)
    bus.register("a")
    with pytest.raises(UnknownReceiver):
        bus.send(make_envelope(receiver="ghost"))
    bus.register("b")
    with pytest.raises(ValueError):
        bus.send(make_envelope(sender="b", receiver="b"))


def test_bus_trace_records_shape():
    bus = MessageBus(wallclock=False)
    bus.register("a")
    bus.register("b")
    bus.send(make_envelope())
    rec = bus.trace_records()[0]
    assert set(rec) == {"ts", "conversation_id", "seq", "performative", "sender", "receiver", "payload_kind"}
    assert rec["ts"] == 0.0


# --- humans ----------------------------------------------------------------------

def test_oracle_human_returns_ground_truth():
    human = OracleHuman({i: i % 10 for i in range(100)})
    tasks = [(i, np.zeros((4, 4))) for i in range(15)]
    answers = request_labels(human, tasks)
    assert len(answers) == 15
    assert all(lab == iid % 10 for iid, lab in answers)
    assert {iid for iid, _ in answers} <= {iid for iid, _ in tasks}


def test_request_labels_rejects_empty():
    with pytest.raises(ValueError):
        request_labels(OracleHuman({}), [])


# --- the full loop ----------------------------------------------------------------

def loop_fixture(n_labels=5, batches=1, thresholds=None, n=420, copies=2):
    """Small end-to-end agent stack over toy blob data.

    Default thresholds are loosened so the toy geometry reliably yields
    anomalies; the exact rule boundaries are pinned in test_policy."""
    ds = toy_dataset(n=n, num_classes=3, dim=16, seed=20, spread=0.35)
    if thresholds is None:
        thresholds = RuleThresholds(conf_lo=0.3, conf_hi=0.95, trust_cut=3.0)
    train_set = ds.subset(np.arange(0, 300))
    pool = ds.subset(np.arange(300, n))
    model0 = train(train_set, ClassifierConfig(hidden_units=16, epochs=10, seed=2))
    reducer = fit_reducer(train_set, latent_dim=4, kind="pca", seed=3)

    ctx = RunContext(
        training=TrainingStore(train_set),
        production=ProductionSlot(model0),
        human_labels=HumanLabelStore(),
    )
    gate_rows = generator(9).choice(len(train_set), size=30, replace=False)
    gate_base = train_set.subset(np.sort(gate_rows))

    def gate_set():
        if ctx.human_labels.dataset is None:
            return gate_base
        return concat([gate_base, ctx.human_labels.dataset])

    human = OracleHuman(dict(zip(pool.ids.tolist(), pool.labels.tolist())))
    bus = MessageBus(wallclock=False)
    checker = Checker(ctx, reducer, thresholds=thresholds, k=3, filter_fraction=0.05)
    improver = Improver(
        ctx, human, n_labels=n_labels,
        shear_params=ShearParams(copies_per_example=copies),
        retrain_config=ClassifierConfig(hidden_units=16, epochs=2, seed=0),
        base_seed=77,
    )
    planner = Planner(ctx, gate_set)
    runtime = AgentRuntime(bus, Supervisor(ctx), checker, improver, planner)
    return ds, pool, ctx, bus, runtime, checker, improver, planner


def test_protocol_shape_single_iteration():
    _, pool, ctx, bus, runtime, *_ = loop_fixture()
    batch = iteration_batch(pool, 0, 40)
    outcome = runtime.run_iteration(1, batch)

    expected = [
        ("supervisor", "checker", Performative.INFORM),
        ("checker", "improver", Performative.INFORM),
        ("improver", "planner", Performative.PROPOSE),
        ("planner", "supervisor", Performative.INFORM),
    ]
    assert [(e.sender, e.receiver, e.performative) for e in bus.trace] == expected
    assert [e.seq for e in bus.trace] == [1, 2, 3, 4]
    assert all(e.conversation_id == 1 for e in bus.trace)
    assert outcome.timestep == 1


def test_only_planner_writes_production_model():
    _, pool, ctx, bus, runtime, *_ = loop_fixture()
    for t in range(1, 4):
        runtime.run_iteration(t, iteration_batch(pool, t - 1, 40))
    assert all(writer == "planner" for _, writer, _ in ctx.production.writes)


def test_benevolence_no_rejections():
    _, pool, ctx, bus, runtime, *_ = loop_fixture()
    for t in range(1, 4):
        runtime.run_iteration(t, iteration_batch(pool, t - 1, 40))
    assert all(e.performative in (Performative.INFORM, Performative.PROPOSE) for e in bus.trace)


def test_conversation_ids_increase_per_batch_event():
    _, pool, ctx, bus, runtime, *_ = loop_fixture()
    for t in range(1, 4):
        runtime.run_iteration(t, iteration_batch(pool, t - 1, 40))
    informs = [e for e in bus.trace if e.sender == "supervisor" and e.receiver == "checker"]
    assert [e.conversation_id for e in informs] == [1, 2, 3]


def test_supervisor_missing_metadata():
    _, pool, ctx, *_ = loop_fixture()
    bad = Supervisor(RunContext(TrainingStore(None), ProductionSlot(None), HumanLabelStore()))
    with pytest.raises(MissingMetadata):
        bad.on_batch(1, iteration_batch(pool, 0, 10))


def test_checker_density_refit_only_on_version_change():
    _, pool, ctx, bus, runtime, checker, improver, _ = loop_fixture(n_labels=0)
    runtime.run_iteration(1, iteration_batch(pool, 0, 40))
    runtime.run_iteration(2, iteration_batch(pool, 1, 40))
    # n_labels=0 means training data never changes, so one fit total
    assert checker.density_fit_count == 1

    _, pool2, ctx2, bus2, runtime2, checker2, *_ = loop_fixture(n_labels=5)
    runtime2.run_iteration(1, iteration_batch(pool2, 0, 40))
    first_fit = checker2.density_fit_count
    runtime2.run_iteration(2, iteration_batch(pool2, 1, 40))
    if ctx2.training.version > 0:
        assert checker2.density_fit_count == first_fit + 1


def test_checker_flags_exactly_the_engineered_items(monkeypatch):
    """Three batch items are placed inside the wrong class's cluster (trust
    < 1 by the distance oracle) at in-band confidence; the rest are given
    trustworthy confidence.  Exactly those three ids must be flagged."""
    import trustloop.agents as agents_mod
    from trustloop.data import Dataset
    from trustloop.embed import PCAReducer

    dim, n_per_class = 16, 12
    rng = generator(55)
    # two tight clusters in the first two pixel dims
    c0 = np.hstack([rng.normal(0.0, 0.05, (n_per_class, 2)), np.zeros((n_per_class, dim - 2))])
    c1 = np.hstack([rng.normal(5.0, 0.05, (n_per_class, 2)), np.zeros((n_per_class, dim - 2))])
    train_images = np.vstack([c0, c1])
    train_set = Dataset(
        images=train_images, labels=np.array([0] * n_per_class + [1] * n_per_class),
        ids=np.arange(2 * n_per_class, dtype=np.int64), num_classes=2, height=4, width=4,
    )
    # identity-on-first-two-dims reducer
    components = np.zeros((2, dim))
    components[0, 0] = components[1, 1] = 1.0
    reducer = PCAReducer(mean=np.zeros(dim), components=components, eigenvalues=np.ones(2))

    # batch: rows 0..2 sit in cluster 1 but will be "predicted" class 0 at 0.8
    batch_images = np.vstack([
        np.hstack([rng.normal(5.0, 0.05, (3, 2)), np.zeros((3, dim - 2))]),
        np.hstack([rng.normal(0.0, 0.05, (5, 2)), np.zeros((5, dim - 2))]),
    ])
    batch = Dataset(
        images=batch_images, labels=np.zeros(8, dtype=np.int64),
        ids=np.arange(100, 108, dtype=np.int64), num_classes=2, height=4, width=4,
    )

    def stub_probs(model, images):
        probs = np.full((len(images), 2), 0.01)
        for i in range(len(images)):
            probs[i, 0] = 0.80 if i < 3 else 0.99  # all predicted class 0
            probs[i, 1] = 1.0 - probs[i, 0]
        return probs

    monkeypatch.setattr(agents_mod, "predict_proba_batch", stub_probs)

    ctx = RunContext(TrainingStore(train_set), ProductionSlot(zero_classifier(dim, 4, 2)), HumanLabelStore())
    checker = Checker(ctx, reducer, thresholds=RuleThresholds(), k=2, filter_fraction=0.0)
    out = checker.handle(make_envelope(
        sender="supervisor", receiver="checker", kind="batch_metadata",
        payload={"timestep": 1, "batch": batch, "model": ctx.production.model,
                 "training": train_set, "training_version": 0},
    ))
    anomalies = out[0].payload["anomalies"]
    assert sorted(r.instance_id for r in anomalies) == [100, 101, 102]


def test_improver_no_anomalies_keeps_model():
    # thresholds that flag nothing: trust_cut tiny
    _, pool, ctx, bus, runtime, *_ = loop_fixture(
        thresholds=RuleThresholds(conf_lo=0.65, conf_hi=0.95, trust_cut=1e-9)
    )
    before = ctx.production.model
    outcome = runtime.run_iteration(1, iteration_batch(pool, 0, 40))
    assert outcome.n_anomalous == 0
    assert outcome.n_labeled == 0
    assert outcome.promoted is False
    assert ctx.production.model is before
    assert ctx.training.version == 0


def test_improver_grows_training_set_by_augmented_count():
    _, pool, ctx, bus, runtime, checker, improver, _ = loop_fixture(n_labels=5, copies=2)
    before = len(ctx.training.dataset)
    outcome = runtime.run_iteration(1, iteration_batch(pool, 0, 40))
    if outcome.n_labeled:
        grew = len(ctx.training.dataset) - before
        assert grew == outcome.n_labeled * (2 + 1)
        assert ctx.training.version == 1


def test_improver_candidate_helps_on_labeled_instances():
    ds, pool, ctx, bus, runtime, *_ = loop_fixture(n_labels=8)
    incumbent = ctx.production.model
    outcome = runtime.run_iteration(1, iteration_batch(pool, 0, 40))
    if outcome.n_labeled == 0:
        pytest.skip("no anomalies flagged on this toy draw")
    labeled = ctx.human_labels.dataset
    from trustloop.model import accuracy

    candidate = ctx.production.model if outcome.promoted else incumbent
    proposal = next(e for e in bus.trace if e.payload_kind == "candidate_model")
    cand = proposal.payload["candidate"]
    assert accuracy(cand, labeled) >= accuracy(incumbent, labeled)


def test_improver_human_timeout_aborts_to_keep():
    class SilentHuman:
        def request_labels(self, tasks):
            raise HumanTimeout("nobody answered")

    _, pool, ctx, bus, runtime, checker, improver, _ = loop_fixture(n_labels=5)
    improver.human = SilentHuman()
    before = ctx.production.model
    outcome = runtime.run_iteration(1, iteration_batch(pool, 0, 40))
    assert outcome.promoted is False
    assert outcome.timed_out is (outcome.n_anomalous > 0)
    assert ctx.production.model is before


def test_planner_promotes_strictly_better_only():
    ds = toy_dataset(n=200, num_classes=3, dim=16, seed=30)
    gate = ds.subset(np.arange(60))
    ctx = RunContext(TrainingStore(ds), ProductionSlot(zero_classifier(16, 8, 3)), HumanLabelStore())
    planner = Planner(ctx, lambda: gate)
    good = train(ds, ClassifierConfig(hidden_units=8, epochs=15, seed=4))

    out = planner.handle(make_envelope(
        sender="improver", receiver="planner",
        kind="candidate_model",
        payload={"timestep": 1, "candidate": good, "training_version": 0,
                 "n_anomalous": 0, "n_labeled": 0, "timed_out": False},
    ))
    assert out[0].payload["promoted"] is True
    assert ctx.production.model is good

    # proposing the incumbent itself ties on NTS and is kept
    out2 = planner.handle(make_envelope(
        sender="improver", receiver="planner",
        kind="candidate_model",
        payload={"timestep": 2, "candidate": good, "training_version": 0,
                 "n_anomalous": 0, "n_labeled": 0, "timed_out": False},
    ))
    assert out2[0].payload["promoted"] is False
    assert out2[0].payload["candidate_nts"] == out2[0].payload["incumbent_nts"]


def test_action_log_uses_closed_tag_set():
    _, pool, ctx, bus, runtime, *_ = loop_fixture(n_labels=5)
    runtime.run_iteration(1, iteration_batch(pool, 0, 40))
    assert ctx.action_log, "agents logged no actions"
    for timestep, agent, action in ctx.action_log:
        assert timestep == 1
        assert agent in ("supervisor", "checker", "improver", "planner")
        assert isinstance(action, AgentAction)
    actions = [a for _, _, a in ctx.action_log]
    assert AgentAction.TRAIN_CHECKER in actions
    assert AgentAction.FLAG_ANOMALIES in actions
    assert (AgentAction.PROMOTE in actions) or (AgentAction.KEEP in actions)


def test_reward_trace_bounds_and_cumulative():
    trace = RewardTrace()
    for r in (0.2, 0.5, 0.9):
        trace.append(r)
    assert trace.cumulative() == pytest.approx([0.2, 0.7, 1.6])
    with pytest.raises(ValueError):
        trace.append(1.5)


def test_replay_determinism():
    def run():
        _, pool, ctx, bus, runtime, *_ = loop_fixture(n_labels=5)
        outcomes = [runtime.run_iteration(t, iteration_batch(pool, t - 1, 40)) for t in (1, 2, 3)]
        return bus.trace_records(), [(o.promoted, o.n_labeled, o.reward) for o in outcomes]

    trace_a, decisions_a = run()
    trace_b, decisions_b = run()
    assert trace_a == trace_b
    assert decisions_a == decisions_b
