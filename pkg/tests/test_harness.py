import json
import threading

import numpy as np
import pytest

from trustloop.data import SplitSpec, split
from trustloop.errors import LengthMismatch
from trustloop.harness import (
    IterationMetrics,
    ScenarioConfig,
    compare,
    emit_outputs,
    load_metrics_csv,
    load_run_config,
    run_scenario,
    write_comparison,
)
from trustloop.seeds import derive_seed
from trustloop.service import LabelTaskQueue

MINI = dict(
    iterations=3, n_labels=5, batch_size=60, seed=13,
    n_train=360, n_test=120, n_inference_pool=240, n_eval_corrupted=120,
    embedder="pca", latent_dim=8, epochs_initial=8, epochs_retrain=2,
    no_wallclock=True,
)


def mini_config(**overrides):
    return ScenarioConfig(**{**MINI, **overrides})


@pytest.fixture(scope="module")
def mini_agents_result(glyphs_small):
    return run_scenario(mini_config(scenario="agents"), dataset=glyphs_small)


@pytest.fixture(scope="module")
def mini_random_result(glyphs_small):
    return run_scenario(mini_config(scenario="random"), dataset=glyphs_small)


def test_run_deterministic(glyphs_small, mini_agents_result):
    again = run_scenario(mini_config(scenario="agents"), dataset=glyphs_small)
    assert again.metrics == mini_agents_result.metrics
    assert again.trace_records == mini_agents_result.trace_records


def test_zero_labels_freezes_the_loop(glyphs_small):
    result = run_scenario(mini_config(scenario="agents", n_labels=0), dataset=glyphs_small)
    accs = {m.accuracy for m in result.metrics}
    ntss = {m.net_trust_score for m in result.metrics}
    assert len(accs) == 1 and len(ntss) == 1
    assert all(not m.promoted and m.n_labeled == 0 for m in result.metrics)


def test_scenarios_share_batches_and_eval_pool(glyphs_small, mini_agents_result, mini_random_result):
    # the split depends only on the master seed, not the scenario
    assert np.array_equal(mini_agents_result.eval_ids, mini_random_result.eval_ids)
    spec = SplitSpec(360, 120, 240, 120, seed=derive_seed(13, "data"))
    a = split(glyphs_small, spec)
    b = split(glyphs_small, spec)
    assert np.array_equal(a.inference_pool.ids, b.inference_pool.ids)


def test_seed_isolation_n_labels_does_not_move_the_split(glyphs_small, mini_agents_result):
    other = run_scenario(mini_config(scenario="agents", n_labels=2), dataset=glyphs_small)
    assert np.array_equal(other.eval_ids, mini_agents_result.eval_ids)
    assert np.array_equal(other.audit[0].gate_ids, mini_agents_result.audit[0].gate_ids)


def test_leakage_guard_empty_intersections(mini_agents_result, mini_random_result):
    for result in (mini_agents_result, mini_random_result):
        eval_ids = set(result.eval_ids.tolist())
        for audit in result.audit:
            assert eval_ids.isdisjoint(audit.train_ids.tolist())
            assert eval_ids.isdisjoint(audit.gate_ids.tolist())
            assert eval_ids.isdisjoint(audit.density_ids.tolist())


def test_eval_nts_matches_independent_recomputation(mini_agents_result):
    params = mini_agents_result.config.trust
    L = 10
    for m, audit in zip(mini_agents_result.metrics, mini_agents_result.audit):
        sums = [0.0] * L
        counts = [0] * L
        for conf, pred, truth in audit.eval_records:
            q = conf**params.alpha if pred == truth else (1.0 - conf) ** params.beta
            sums[truth] += q
            counts[truth] += 1
        class_means = [s / c for s, c in zip(sums, counts) if c > 0]
        recomputed = sum(class_means) / len(class_means)
        assert abs(m.net_trust_score - recomputed) < 1e-12


def test_reward_trace_tracks_iterations(mini_agents_result):
    assert len(mini_agents_result.rewards) == len(mini_agents_result.metrics)
    assert all(0.0 <= r <= 1.0 for r in mini_agents_result.rewards)


def test_emit_outputs_files(tmp_path, mini_agents_result):
    emit_outputs(mini_agents_result, tmp_path)
    metrics_lines = (tmp_path / "metrics.csv").read_text().strip().splitlines()
    assert metrics_lines[0] == "timestep,scenario,accuracy,net_trust_score,n_anomalous,n_labeled,promoted,wall_ms"
    assert len(metrics_lines) == 1 + 3
    spectrum_lines = (tmp_path / "spectrum.csv").read_text().strip().splitlines()
    assert len(spectrum_lines) == 1 + 10
    density_lines = (tmp_path / "density.csv").read_text().strip().splitlines()
    assert len(density_lines) == 1 + 10 * 10
    assert (tmp_path / "trace.jsonl").exists()
    trace_lines = (tmp_path / "trace.jsonl").read_text().strip().splitlines()
    assert len(trace_lines) == 4 * 3
    first = json.loads(trace_lines[0])
    assert first["sender"] == "supervisor" and first["ts"] == 0.0


def test_run_json_round_trips(tmp_path, mini_agents_result):
    emit_outputs(mini_agents_result, tmp_path)
    assert load_run_config(tmp_path) == mini_agents_result.config


def test_metrics_csv_round_trips(tmp_path, mini_agents_result):
    emit_outputs(mini_agents_result, tmp_path)
    back = load_metrics_csv(tmp_path / "metrics.csv")
    for orig, loaded in zip(mini_agents_result.metrics, back):
        assert loaded.timestep == orig.timestep
        assert loaded.accuracy == orig.accuracy
        assert loaded.net_trust_score == orig.net_trust_score
        assert loaded.promoted == orig.promoted


def test_compare_basics(mini_agents_result, mini_random_result):
    a, b = mini_agents_result.metrics, mini_random_result.metrics
    same = compare(a, a)
    assert all(d == 0 for d in same["accuracy_delta"])
    assert same["final"]["accuracy_delta"] == 0

    report = compare(a, b)
    assert report["final"]["accuracy_delta"] == pytest.approx(a[-1].accuracy - b[-1].accuracy)
    with pytest.raises(LengthMismatch):
        compare(a, b[:-1])


def test_compare_final_delta_arithmetic():
    def row(t, acc, nts):
        return IterationMetrics(t, "x", acc, nts, 0, 0, True, 0.0, 0, 0, 0, 0)

    a = [row(1, 0.5, 0.6), row(2, 0.9, 0.8)]
    b = [row(1, 0.5, 0.6), row(2, 0.8, 0.7)]
    report = compare(a, b)
    assert report["final"]["net_trust_score_delta"] == pytest.approx(0.1)
    assert report["wins"]["accuracy"] == {"a": 1, "b": 0, "tie": 1}


def test_write_comparison_files(tmp_path, mini_agents_result, mini_random_result):
    a, b = mini_agents_result.metrics, mini_random_result.metrics
    write_comparison(compare(a, b), a, b, tmp_path)
    assert (tmp_path / "comparison.json").exists()
    lines = (tmp_path / "comparison.csv").read_text().strip().splitlines()
    assert len(lines) == 1 + 3


def test_interactive_timeout_records_keep(glyphs_small):
    queue = LabelTaskQueue()
    config = mini_config(scenario="agents", human="interactive", human_timeout_s=0.2, iterations=1)
    result = run_scenario(config, dataset=glyphs_small, label_queue=queue)
    m = result.metrics[0]
    assert m.promoted is False
    assert m.n_labeled == 0


def test_interactive_answers_unblock(glyphs_small):
    queue = LabelTaskQueue()

    def answer_everything():
        import time

        deadline = time.monotonic() + 10
        answered = set()
        while time.monotonic() < deadline:
            for task in queue.list_pending():
                queue.submit_label(task.task_id, 0)
                answered.add(task.task_id)
            time.sleep(0.01)

    thread = threading.Thread(target=answer_everything, daemon=True)
    thread.start()
    config = mini_config(scenario="agents", human="interactive", human_timeout_s=10, iterations=1)
    result = run_scenario(config, dataset=glyphs_small, label_queue=queue)
    assert result.metrics[0].n_labeled > 0
