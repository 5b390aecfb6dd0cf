"""Command-line entry points.

    trustloop run      --scenario agents|random --dataset IMAGES,LABELS ... --out DIR
    trustloop compare  A_DIR B_DIR [--out DIR]
    trustloop corrupt  --dataset IMAGES,LABELS --kind gaussian --severity 0.5 --seed N --out DIR
    trustloop report   --run DIR
    trustloop synth    --n 14000 --seed N --out DIR

A JSON config file (--config) mirrors every run flag; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .augment import ShearParams
from .data import CORRUPTION_KINDS, corrupt, load_idx, save_idx, write_corruption_sidecar
from .harness import (
    ScenarioConfig,
    compare,
    emit_outputs,
    load_metrics_csv,
    run_scenario,
    write_comparison,
)
from .policy import RuleThresholds
from .synth import make_synthetic_dataset
from .trust import TrustParams


def _split_dataset_arg(value: str) -> tuple[str, str]:
    parts = value.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("--dataset wants IMAGES_PATH,LABELS_PATH")
    return parts[0], parts[1]


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", choices=["agents", "random"])
    p.add_argument("--dataset", type=_split_dataset_arg, help="IMAGES_PATH,LABELS_PATH (IDX files)")
    p.add_argument("--dataset-name")
    p.add_argument("--corruptions", help=f"comma list from {','.join(CORRUPTION_KINDS)}")
    p.add_argument("--severity", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--n-labels", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--human", choices=["oracle", "interactive"])
    p.add_argument("--timeout", type=float, help="interactive labeling timeout in seconds")
    p.add_argument("--port", type=int, default=8080, help="interactive service port")
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--n-pool", type=int)
    p.add_argument("--n-eval", type=int)
    p.add_argument("--conf-lo", type=float)
    p.add_argument("--conf-hi", type=float)
    p.add_argument("--trust-cut", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--embedder", choices=["autoencoder", "pca"])
    p.add_argument("--latent-dim", type=int)
    p.add_argument("--no-wallclock", action="store_true", default=None)
    p.add_argument("--config", help="JSON file mirroring these flags")
    p.add_argument("--out", required=True, help="output directory")


def _build_config(args: argparse.Namespace) -> ScenarioConfig:
    base = ScenarioConfig().to_dict()
    if args.config:
        with open(args.config) as f:
            base.update(json.load(f))

    flag_map = {
        "scenario": args.scenario,
        "dataset_name": args.dataset_name,
        "severity": args.severity,
        "iterations": args.iterations,
        "n_labels": args.n_labels,
        "batch_size": args.batch_size,
        "seed": args.seed,
        "human": args.human,
        "human_timeout_s": args.timeout,
        "n_train": args.n_train,
        "n_test": args.n_test,
        "n_inference_pool": args.n_pool,
        "n_eval_corrupted": args.n_eval,
        "embedder": args.embedder,
        "latent_dim": args.latent_dim,
        "no_wallclock": args.no_wallclock,
    }
    for key, value in flag_map.items():
        if value is not None:
            base[key] = value
    if args.dataset is not None:
        base["images_path"], base["labels_path"] = args.dataset
    if args.corruptions is not None:
        base["corruptions"] = [k.strip() for k in args.corruptions.split(",") if k.strip()]

    thresholds = dict(base.get("thresholds", {}))
    for key, value in (("conf_lo", args.conf_lo), ("conf_hi", args.conf_hi), ("trust_cut", args.trust_cut)):
        if value is not None:
            thresholds[key] = value
    base["thresholds"] = thresholds or RuleThresholds().__dict__

    trust = dict(base.get("trust", {}))
    for key, value in (("alpha", args.alpha), ("beta", args.beta)):
        if value is not None:
            trust[key] = value
    base["trust"] = trust or TrustParams().__dict__

    base.setdefault("shear", ShearParams().__dict__)
    return ScenarioConfig.from_dict(base)


def _cmd_run(args: argparse.Namespace) -> int:
    config = _build_config(args)
    queue = None
    server_thread = None
    if config.human == "interactive":
        from .service import LabelTaskQueue, RunStatus, build_app, serve_in_thread

        queue = LabelTaskQueue()
        status = RunStatus()
        static_dir = _frontend_dist()
        app = build_app(queue, status, static_dir=static_dir)
        server_thread = serve_in_thread(app, args.port)
        print(f"labeling service on http://127.0.0.1:{args.port}/ "
              f"({'UI served' if static_dir else 'API only'})")
    else:
        status = None

    result = run_scenario(config, label_queue=queue, status=status)
    emit_outputs(result, args.out)
    final = result.metrics[-1]
    print(f"{config.scenario}: {len(result.metrics)} iterations, "
          f"final accuracy {final.accuracy:.4f}, final NetTrustScore {final.net_trust_score:.4f}")
    print(f"outputs in {args.out}")
    return 0


def _frontend_dist() -> str | None:
    candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if (candidate / "index.html").exists():
        return str(candidate)
    return None


def _cmd_compare(args: argparse.Namespace) -> int:
    a = load_metrics_csv(Path(args.a_dir) / "metrics.csv")
    b = load_metrics_csv(Path(args.b_dir) / "metrics.csv")
    report = compare(a, b)
    out = args.out or args.a_dir
    write_comparison(report, a, b, out)
    final = report["final"]
    print(f"final accuracy: {final['accuracy_a']:.4f} vs {final['accuracy_b']:.4f} "
          f"(delta {final['accuracy_delta']:+.4f})")
    print(f"final NetTrustScore: {final['net_trust_score_a']:.4f} vs {final['net_trust_score_b']:.4f} "
          f"(delta {final['net_trust_score_delta']:+.4f})")
    print(f"comparison files in {out}")
    return 0


def _cmd_corrupt(args: argparse.Namespace) -> int:
    images_path, labels_path = args.dataset
    dataset = load_idx(images_path, labels_path)
    corrupted = corrupt(dataset, args.kind, args.seed, args.severity)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_idx(corrupted, out / "images.idx", out / "labels.idx")
    write_corruption_sidecar(out / "corruption.json", args.kind, args.severity, args.seed)
    print(f"wrote {len(corrupted)} {args.kind}-corrupted examples to {out}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    metrics = load_metrics_csv(run_dir / "metrics.csv")
    with open(run_dir / "run.json") as f:
        config = json.load(f)
    promoted = sum(m.promoted for m in metrics)
    labeled = sum(m.n_labeled for m in metrics)
    print(f"scenario: {config['scenario']}  seed: {config['seed']}  iterations: {len(metrics)}")
    print(f"accuracy: {metrics[0].accuracy:.4f} -> {metrics[-1].accuracy:.4f}")
    print(f"NetTrustScore: {metrics[0].net_trust_score:.4f} -> {metrics[-1].net_trust_score:.4f}")
    print(f"promotions: {promoted}/{len(metrics)}  human labels: {labeled}")
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    dataset = make_synthetic_dataset(args.n, args.seed, name=args.name)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_idx(dataset, out / "images.idx", out / "labels.idx")
    print(f"wrote {len(dataset)} synthetic examples to {out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="trustloop")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one scenario")
    _add_run_flags(p_run)
    p_run.set_defaults(fn=_cmd_run)

    p_cmp = sub.add_parser("compare", help="compare two run directories")
    p_cmp.add_argument("a_dir")
    p_cmp.add_argument("b_dir")
    p_cmp.add_argument("--out")
    p_cmp.set_defaults(fn=_cmd_compare)

    p_cor = sub.add_parser("corrupt", help="corrupt an IDX dataset and cache it")
    p_cor.add_argument("--dataset", type=_split_dataset_arg, required=True)
    p_cor.add_argument("--kind", choices=list(CORRUPTION_KINDS), required=True)
    p_cor.add_argument("--severity", type=float, default=0.5)
    p_cor.add_argument("--seed", type=int, default=0)
    p_cor.add_argument("--out", required=True)
    p_cor.set_defaults(fn=_cmd_corrupt)

    p_rep = sub.add_parser("report", help="summarize a run directory")
    p_rep.add_argument("--run", required=True)
    p_rep.set_defaults(fn=_cmd_report)

    p_syn = sub.add_parser("synth", help="generate a synthetic glyph dataset as IDX files")
    p_syn.add_argument("--n", type=int, default=14_000)
    p_syn.add_argument("--seed", type=int, default=0)
    p_syn.add_argument("--name", default="synth-digits")
    p_syn.add_argument("--out", required=True)
    p_syn.set_defaults(fn=_cmd_synth)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
