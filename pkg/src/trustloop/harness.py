"""Scenario runner: the agent loop vs. the random-labeling baseline.

Both scenarios consume identical pre-shuffled batches for a given seed and
are measured after every iteration on the same fixed evaluation pool
(clean test set concatenated with the corrupted eval set).  The agents
scenario runs the four-agent pipeline with augmentation and a promotion
gate; the random baseline labels uniformly random picks, retrains without
augmentation, and always adopts the retrained model.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .agents import (
    AgentRuntime,
    Checker,
    HumanLabelStore,
    Improver,
    InteractiveHuman,
    MessageBus,
    OracleHuman,
    Planner,
    ProductionSlot,
    RunContext,
    Supervisor,
    TrainingStore,
    request_labels,
)
from .augment import ShearParams
from .data import (
    CORRUPTION_KINDS,
    Dataset,
    SplitSpec,
    concat,
    iteration_batch,
    load_idx,
    split,
)
from .embed import fit_reducer
from .errors import HumanTimeout, LengthMismatch
from .evaluate import prediction_records
from .model import Classifier, ClassifierConfig, train
from .policy import RuleThresholds
from .seeds import derive_seed, generator
from .trust import (
    TrustParams,
    TrustReport,
    build_trust_report,
    net_trust_score,
    trust_spectrum,
    write_density_csv,
    write_report_json,
    write_spectrum_csv,
)

METRICS_HEADER = [
    "timestep", "scenario", "accuracy", "net_trust_score",
    "n_anomalous", "n_labeled", "promoted", "wall_ms",
]


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "agents"                    # "agents" | "random"
    iterations: int = 20
    n_labels: int = 15
    batch_size: int = 500
    seed: int = 0
    dataset_name: str = ""
    images_path: str = ""
    labels_path: str = ""
    corruptions: tuple[str, ...] = CORRUPTION_KINDS
    severity: float = 0.5
    n_train: int = 2000
    n_test: int = 1000
    n_inference_pool: int = 10_000
    n_eval_corrupted: int = 1000
    thresholds: RuleThresholds = RuleThresholds()
    trust: TrustParams = TrustParams()
    k: int = 10
    filter_fraction: float = 0.05
    embedder: str = "autoencoder"               # "autoencoder" | "pca"
    latent_dim: int = 32
    shear: ShearParams = ShearParams()          # seed is re-derived per iteration
    human: str = "oracle"                       # "oracle" | "interactive"
    human_timeout_s: float = 600.0
    hidden_units: int = 128
    epochs_initial: int = 20
    epochs_retrain: int = 5
    learning_rate: float = 0.01
    momentum: float = 0.9
    minibatch: int = 64
    bins: int = 10
    gate_fraction: float = 0.1
    no_wallclock: bool = False

    def __post_init__(self):
        if self.scenario not in ("agents", "random"):
            raise ValueError(f"scenario must be 'agents' or 'random', got {self.scenario!r}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.n_labels < 0:
            raise ValueError("n_labels must be >= 0")
        if self.human not in ("oracle", "interactive"):
            raise ValueError(f"human must be 'oracle' or 'interactive', got {self.human!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["corruptions"] = list(self.corruptions)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        d["corruptions"] = tuple(d.get("corruptions", CORRUPTION_KINDS))
        if isinstance(d.get("thresholds"), dict):
            d["thresholds"] = RuleThresholds(**d["thresholds"])
        if isinstance(d.get("trust"), dict):
            d["trust"] = TrustParams(**d["trust"])
        if isinstance(d.get("shear"), dict):
            d["shear"] = ShearParams(**d["shear"])
        return cls(**d)


@dataclass(frozen=True)
class IterationMetrics:
    timestep: int
    scenario: str
    accuracy: float
    net_trust_score: float
    n_anomalous: int
    n_labeled: int
    promoted: bool
    wall_ms: float
    accuracy_clean: float
    accuracy_corrupted: float
    nts_clean: float
    nts_corrupted: float


@dataclass
class TimestepAudit:
    timestep: int
    train_ids: np.ndarray
    gate_ids: np.ndarray
    density_ids: np.ndarray
    eval_records: list[tuple[float, int, int]]


@dataclass
class RunResult:
    config: ScenarioConfig
    metrics: list[IterationMetrics]
    trust_report: TrustReport
    trace_records: list[dict]
    rewards: list[float]
    eval_ids: np.ndarray
    audit: list[TimestepAudit] = field(default_factory=list)
    production_writes: list[tuple[int, str, int]] = field(default_factory=list)


def _classifier_config(config: ScenarioConfig, epochs: int, seed: int) -> ClassifierConfig:
    return ClassifierConfig(
        hidden_units=config.hidden_units,
        epochs=epochs,
        learning_rate=config.learning_rate,
        momentum=config.momentum,
        minibatch=config.minibatch,
        seed=seed,
    )


def _evaluate(
    model: Classifier,
    eval_pool: Dataset,
    n_clean: int,
    params: TrustParams,
) -> tuple[dict, list[tuple[float, int, int]]]:
    records = prediction_records(model, eval_pool)
    pred = np.array([r[1] for r in records])
    truth = eval_pool.labels
    correct = pred == truth
    L = eval_pool.num_classes

    def nts_of(rs):
        return net_trust_score(trust_spectrum(rs, L, params))

    out = {
        "accuracy": float(correct.mean()),
        "net_trust_score": nts_of(records),
        "accuracy_clean": float(correct[:n_clean].mean()),
        "accuracy_corrupted": float(correct[n_clean:].mean()),
        "nts_clean": nts_of(records[:n_clean]),
        "nts_corrupted": nts_of(records[n_clean:]),
    }
    return out, records


def run_scenario(
    config: ScenarioConfig,
    dataset: Dataset | None = None,
    label_queue=None,
    status=None,
) -> RunResult:
    """Execute one scenario end to end; `dataset` overrides the IDX paths."""
    if dataset is None:
        dataset = load_idx(config.images_path, config.labels_path, name=config.dataset_name)

    spec = SplitSpec(
        n_train=config.n_train,
        n_test=config.n_test,
        n_inference_pool=config.n_inference_pool,
        n_eval_corrupted=config.n_eval_corrupted,
        seed=derive_seed(config.seed, "data"),
    )
    parts = split(dataset, spec, config.corruptions, config.severity)

    model0 = train(parts.train, _classifier_config(config, config.epochs_initial, derive_seed(config.seed, "model")))
    reducer = fit_reducer(
        parts.train, latent_dim=config.latent_dim, kind=config.embedder,
        seed=derive_seed(config.seed, "embed"),
    )

    eval_pool = concat([parts.test, parts.eval_corrupted], name="eval-pool")
    n_clean = len(parts.test)

    gate_n = max(1, int(config.gate_fraction * len(parts.train)))
    gate_rows = generator(derive_seed(config.seed, "gate")).choice(len(parts.train), size=gate_n, replace=False)
    gate_base = parts.train.subset(np.sort(gate_rows), name="gate")

    if config.human == "oracle":
        human = OracleHuman(dict(zip(parts.inference_pool.ids.tolist(), parts.inference_pool.labels.tolist())))
    else:
        if label_queue is None:
            raise ValueError("interactive human needs a label queue")
        label_queue.num_classes = dataset.num_classes
        human = InteractiveHuman(label_queue, timeout_s=config.human_timeout_s)

    if status is not None:
        status.set_run_info(config.scenario, config.iterations)

    if config.scenario == "agents":
        result = _run_agents(config, parts, eval_pool, n_clean, model0, reducer, gate_base, human, status)
    else:
        result = _run_random(config, parts, eval_pool, n_clean, model0, human, status)
    return result


def _run_agents(config, parts, eval_pool, n_clean, model0, reducer, gate_base, human, status) -> RunResult:
    ctx = RunContext(
        training=TrainingStore(parts.train),
        production=ProductionSlot(model0),
        human_labels=HumanLabelStore(),
    )

    def gate_set() -> Dataset:
        if ctx.human_labels.dataset is None:
            return gate_base
        return concat([gate_base, ctx.human_labels.dataset], name="gate")

    bus = MessageBus(wallclock=not config.no_wallclock)
    checker = Checker(
        ctx, reducer, thresholds=config.thresholds,
        k=config.k, filter_fraction=config.filter_fraction,
    )
    improver = Improver(
        ctx, human, n_labels=config.n_labels, shear_params=config.shear,
        retrain_config=_classifier_config(config, config.epochs_retrain, 0),
        base_seed=config.seed,
    )
    planner = Planner(ctx, gate_set, trust_params=config.trust)
    runtime = AgentRuntime(bus, Supervisor(ctx), checker, improver, planner)

    metrics: list[IterationMetrics] = []
    audits: list[TimestepAudit] = []
    for t in range(1, config.iterations + 1):
        started = time.perf_counter()
        batch = iteration_batch(parts.inference_pool, t - 1, config.batch_size)
        outcome = runtime.run_iteration(t, batch)
        wall_ms = 0.0 if config.no_wallclock else (time.perf_counter() - started) * 1000.0

        scores, eval_records = _evaluate(ctx.production.model, eval_pool, n_clean, config.trust)
        m = IterationMetrics(
            timestep=t, scenario=config.scenario,
            n_anomalous=outcome.n_anomalous, n_labeled=outcome.n_labeled,
            promoted=outcome.promoted, wall_ms=wall_ms, **scores,
        )
        metrics.append(m)
        audits.append(TimestepAudit(
            timestep=t,
            train_ids=np.unique(ctx.training.dataset.ids),
            gate_ids=np.unique(gate_set().ids),
            density_ids=np.unique(checker.fitted_ids) if checker.fitted_ids is not None else np.array([], dtype=np.int64),
            eval_records=eval_records,
        ))
        if status is not None:
            status.record_iteration(asdict(m))

    _, final_records = _evaluate(ctx.production.model, eval_pool, n_clean, config.trust)
    report = build_trust_report(final_records, eval_pool.num_classes, config.trust, config.bins)
    return RunResult(
        config=config, metrics=metrics, trust_report=report,
        trace_records=bus.trace_records(), rewards=list(planner.reward_trace.rewards),
        eval_ids=np.unique(eval_pool.ids), audit=audits,
        production_writes=list(ctx.production.writes),
    )


def _run_random(config, parts, eval_pool, n_clean, model0, human, status) -> RunResult:
    training = TrainingStore(parts.train)
    production = model0

    metrics: list[IterationMetrics] = []
    audits: list[TimestepAudit] = []
    for t in range(1, config.iterations + 1):
        started = time.perf_counter()
        batch = iteration_batch(parts.inference_pool, t - 1, config.batch_size)
        n_pick = min(config.n_labels, len(batch))
        promoted = True
        n_labeled = 0
        if n_pick > 0:
            rows = generator(derive_seed(config.seed, "random-pick", t)).choice(len(batch), size=n_pick, replace=False)
            rows = np.sort(rows)
            tasks = [(int(batch.ids[i]), batch.image2d(i)) for i in rows]
            try:
                answers = request_labels(human, tasks)
                row_of = {int(batch.ids[i]): i for i in rows}
                picked = np.array([row_of[iid] for iid, _ in answers], dtype=np.int64)
                labeled = Dataset(
                    images=batch.images[picked].copy(),
                    labels=np.array([lab for _, lab in answers], dtype=np.int64),
                    ids=batch.ids[picked].copy(),
                    num_classes=batch.num_classes,
                    name="random-labeled",
                    height=batch.height, width=batch.width,
                )
                training.append(labeled)
                n_labeled = len(labeled)
            except HumanTimeout:
                promoted = False
        if promoted:
            candidate = train(
                training.dataset,
                _classifier_config(config, config.epochs_retrain, derive_seed(config.seed, "retrain", t)),
                init=production,
            )
            production = candidate
        wall_ms = 0.0 if config.no_wallclock else (time.perf_counter() - started) * 1000.0

        scores, eval_records = _evaluate(production, eval_pool, n_clean, config.trust)
        m = IterationMetrics(
            timestep=t, scenario=config.scenario,
            n_anomalous=0, n_labeled=n_labeled,
            promoted=promoted, wall_ms=wall_ms, **scores,
        )
        metrics.append(m)
        audits.append(TimestepAudit(
            timestep=t,
            train_ids=np.unique(training.dataset.ids),
            gate_ids=np.array([], dtype=np.int64),
            density_ids=np.array([], dtype=np.int64),
            eval_records=eval_records,
        ))
        if status is not None:
            status.record_iteration(asdict(m))

    _, final_records = _evaluate(production, eval_pool, n_clean, config.trust)
    report = build_trust_report(final_records, eval_pool.num_classes, config.trust, config.bins)
    return RunResult(
        config=config, metrics=metrics, trust_report=report,
        trace_records=[], rewards=[],
        eval_ids=np.unique(eval_pool.ids), audit=audits,
    )


# --- comparison ----------------------------------------------------------------

def compare(a: list[IterationMetrics], b: list[IterationMetrics]) -> dict:
    """Per-timestep and final deltas (a minus b) plus win counts."""
    if len(a) != len(b):
        raise LengthMismatch(f"metric lists have lengths {len(a)} and {len(b)}")

    def wins(key):
        av = [getattr(m, key) for m in a]
        bv = [getattr(m, key) for m in b]
        return {
            "a": sum(x > y for x, y in zip(av, bv)),
            "b": sum(x < y for x, y in zip(av, bv)),
            "tie": sum(x == y for x, y in zip(av, bv)),
        }

    return {
        "timesteps": [m.timestep for m in a],
        "accuracy_delta": [ma.accuracy - mb.accuracy for ma, mb in zip(a, b)],
        "net_trust_score_delta": [ma.net_trust_score - mb.net_trust_score for ma, mb in zip(a, b)],
        "final": {
            "accuracy_a": a[-1].accuracy,
            "accuracy_b": b[-1].accuracy,
            "accuracy_delta": a[-1].accuracy - b[-1].accuracy,
            "net_trust_score_a": a[-1].net_trust_score,
            "net_trust_score_b": b[-1].net_trust_score,
            "net_trust_score_delta": a[-1].net_trust_score - b[-1].net_trust_score,
        },
        "wins": {
            "accuracy": wins("accuracy"),
            "net_trust_score": wins("net_trust_score"),
        },
    }


def write_comparison(report: dict, a, b, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "comparison.json", "w") as f:
        json.dump(report, f, indent=2)
        f.write("\n")
    with open(out_dir / "comparison.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["timestep", "accuracy_a", "accuracy_b", "accuracy_delta",
                    "net_trust_score_a", "net_trust_score_b", "net_trust_score_delta"])
        for ma, mb in zip(a, b):
            w.writerow([
                ma.timestep,
                repr(ma.accuracy), repr(mb.accuracy), repr(ma.accuracy - mb.accuracy),
                repr(ma.net_trust_score), repr(mb.net_trust_score),
                repr(ma.net_trust_score - mb.net_trust_score),
            ])


# --- output files ---------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_outputs(result: RunResult, out_dir) -> None:
    """Write metrics.csv, spectrum.csv, density.csv, run.json, trace.jsonl."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    with open(out_dir / "metrics.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(METRICS_HEADER)
        for m in result.metrics:
            w.writerow([_fmt(getattr(m, key)) for key in METRICS_HEADER])

    with open(out_dir / "breakdown.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["timestep", "accuracy_clean", "accuracy_corrupted", "nts_clean", "nts_corrupted"])
        for m in result.metrics:
            w.writerow([m.timestep, repr(m.accuracy_clean), repr(m.accuracy_corrupted),
                        repr(m.nts_clean), repr(m.nts_corrupted)])

    write_spectrum_csv(result.trust_report, out_dir / "spectrum.csv")
    write_density_csv(result.trust_report, out_dir / "density.csv")
    write_report_json(result.trust_report, out_dir / "trust_report.json")

    with open(out_dir / "run.json", "w") as f:
        json.dump(result.config.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")

    with open(out_dir / "trace.jsonl", "w") as f:
        for record in result.trace_records:
            f.write(json.dumps(record, sort_keys=True))
            f.write("\n")


def load_metrics_csv(path) -> list[IterationMetrics]:
    """Read back a metrics.csv (breakdown columns default to 0)."""
    out = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            out.append(IterationMetrics(
                timestep=int(row["timestep"]),
                scenario=row["scenario"],
                accuracy=float(row["accuracy"]),
                net_trust_score=float(row["net_trust_score"]),
                n_anomalous=int(row["n_anomalous"]),
                n_labeled=int(row["n_labeled"]),
                promoted=row["promoted"] == "true",
                wall_ms=float(row["wall_ms"]),
                accuracy_clean=0.0, accuracy_corrupted=0.0,
                nts_clean=0.0, nts_corrupted=0.0,
            ))
    return out


def load_run_config(run_dir) -> ScenarioConfig:
    with open(Path(run_dir) / "run.json") as f:
        return ScenarioConfig.from_dict(json.load(f))
