"""Command-line entry point: ``fedcontrib <command> [options]``.

Exit codes: 0 ok, 1 usage, 2 data, 3 numeric.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import data as data_mod
from .errors import DataError, FedContribError, UsageError
from .federation import (
    Transcript,
    assemble_federation,
    federated_all_at_once,
    federated_group_shapley,
    privacy_audit,
)
from .horizontal import influence_group_batch
from .model import ModelConfig, TrainedModel, accuracy, train
from .reporting import bar_chart, canonical, scatter_rows, write_csv, write_json
from .shapley import BackgroundSpec, shapley_exact, shapley_mc_all
from .surrogate import write_surrogate_csv

logger = logging.getLogger("fedcontrib")

TRAIN_FRACTION = 0.7


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with 2, which we reserve for data errors
        self.print_usage(sys.stderr)
        self.exit(UsageError.exit_code, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, data_required: bool = True) -> None:
    p.add_argument("--data", required=data_required, help="CSV file with a header row")
    p.add_argument("--target", default=data_mod.CERVICAL_TARGET)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--model", choices=("logistic", "kernel-rbf"), default="kernel-rbf")
    p.add_argument("--l2", type=float, default=1.0, help="regularization strength")
    p.add_argument("--out-dir", default="out")
    p.add_argument("--format", choices=("json", "csv"), default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fedcontrib", description="Measure party contributions in federated learning.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="seeded 70/30 split, train, report test accuracy")
    _common(p)

    p = sub.add_parser("horizontal", help="deletion influence of each horizontal party")
    _common(p)
    p.add_argument("--parties", type=int, default=5)
    p.add_argument("--method", choices=("batch_deletion", "summed_single"), default="batch_deletion")

    p = sub.add_parser("shapley", help="feature Shapley values for one or all instances")
    _common(p)
    p.add_argument("--instance", default="0", help="row index or 'all'")
    p.add_argument("--method", choices=("exact", "mc"), default="exact")
    p.add_argument("-M", "--iterations", type=int, default=2000)
    p.add_argument("--sample", type=int, default=None, help="with --instance all: seeded subsample size")
    p.add_argument("--model-file", default=None)

    p = sub.add_parser("vertical", help="federated group Shapley value of each vertical party")
    _common(p)
    p.add_argument("--groups", type=int, default=5)
    p.add_argument("-M", "--iterations", type=int, default=1000)
    p.add_argument("--mode", choices=("per-party", "all-at-once"), default="per-party")
    p.add_argument("--sample", type=int, default=None, help="seeded subsample of instances")
    p.add_argument("--model-file", default=None)

    p = sub.add_parser("audit", help="run one federated measurement and audit its transcript")
    _common(p, data_required=False)
    p.add_argument("--transcript", default=None, help="audit an existing JSON-lines transcript instead")
    p.add_argument("--groups", type=int, default=5)
    p.add_argument("--instance", type=int, default=0)
    p.add_argument("--party", type=int, default=0)
    p.add_argument("-M", "--iterations", type=int, default=200)
    p.add_argument("--model-file", default=None)

    p = sub.add_parser("surrogate", help="write a synthetic CSV with the cervical-cancer schema")
    p.add_argument("--out", required=True)
    p.add_argument("--rows", type=int, default=858)
    p.add_argument("--seed", type=int, default=0)
    return parser


class _Run:
    """Collects outputs and writes the run manifest."""

    def __init__(self, args: argparse.Namespace) -> None:
        self.args = args
        self.out_dir = Path(args.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.started = time.time()
        self.outputs: list[str] = []

    def path(self, name: str) -> Path:
        p = self.out_dir / name
        self.outputs.append(str(p))
        return p

    def report(self, stem: str, payload, header=None, rows=None) -> None:
        write_json(self.path(f"{stem}.json"), payload)
        if self.args.format == "csv" and header is not None:
            write_csv(self.path(f"{stem}.csv"), header, rows)

    def svg(self, name: str, text: str) -> None:
        self.path(name).write_text(text, encoding="utf-8")

    def config_hash(self) -> str:
        keys = {k: v for k, v in vars(self.args).items() if k not in ("out_dir", "verbose", "format")}
        return hashlib.sha256(json.dumps(keys, sort_keys=True, default=str).encode()).hexdigest()[:16]

    def finish(self) -> None:
        manifest = {
            "command": self.args.command,
            "dataset": getattr(self.args, "data", None),
            "seed": self.args.seed,
            "config_hash": self.config_hash(),
            "started": self.started,
            "finished": time.time(),
            "outputs": sorted(self.outputs),
        }
        (self.out_dir / f"manifest_{self.args.command}.json").write_text(
            json.dumps(canonical(manifest), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )


def _config(args) -> ModelConfig:
    kind = "kernel_rbf" if args.model == "kernel-rbf" else "logistic"
    return ModelConfig(kind=kind, l2_strength=args.l2, seed=args.seed)


def _dataset(args) -> data_mod.Dataset:
    table = data_mod.load_csv(args.data, args.target)
    return data_mod.prepare(table)


def _split(dataset, seed):
    return data_mod.train_test_split(dataset.n, TRAIN_FRACTION, seed)


def _model(args, dataset) -> tuple[TrainedModel, np.ndarray]:
    train_idx, _ = _split(dataset, args.seed)
    if getattr(args, "model_file", None):
        path = Path(args.model_file)
        if not path.is_file():
            raise DataError(f"model file not found: {path}")
        model = TrainedModel.from_dict(json.loads(path.read_text(encoding="utf-8")))
        if model.d != dataset.d:
            raise DataError(f"model expects {model.d} features, data has {dataset.d}")
        return model, train_idx
    logger.info("no --model-file given; training on the seeded split")
    return train(dataset, train_idx, _config(args)), train_idx


def cmd_train(args) -> int:
    run = _Run(args)
    dataset = _dataset(args)
    train_idx, test_idx = _split(dataset, args.seed)
    model = train(dataset, train_idx, _config(args))
    acc = accuracy(model, dataset, test_idx)
    model_path = run.path("model.json")
    model_path.write_text(json.dumps(model.to_dict(), sort_keys=True) + "\n", encoding="utf-8")
    metrics = {
        "accuracy": acc,
        "n": dataset.n,
        "d": dataset.d,
        "n_train": int(train_idx.size),
        "n_test": int(test_idx.size),
        "test_negative_rate": float(np.mean(dataset.labels[test_idx] == 0)),
        "model": model.config.to_dict(),
        "fingerprint": model.training_fingerprint,
        "seed": args.seed,
        "dataset": dataset.snapshot(),
    }
    run.report("metrics", metrics, ["metric", "value"], [["accuracy", acc], ["n", dataset.n]])
    run.finish()
    print(f"test accuracy {acc:.4f} on {test_idx.size} instances (n={dataset.n}, d={dataset.d})")
    return 0


def cmd_horizontal(args) -> int:
    run = _Run(args)
    dataset = _dataset(args)
    partition = data_mod.horizontal_split(dataset, args.parties, args.seed)
    if any(a.size == dataset.n for a in partition.assignments):
        raise DataError("a party holds every instance; retraining without it is impossible")
    report = influence_group_batch(dataset, partition, _config(args), seed=args.seed, method=args.method)
    payload = report.to_dict()
    run.report(
        "horizontal",
        payload,
        ["id", "size", "influence"],
        [[p["id"], p["size"], p["influence"]] for p in payload["parties"]],
    )
    run.svg(
        "horizontal.svg",
        bar_chart(
            [p["id"] for p in payload["parties"]],
            [canonical(p["influence"]) for p in payload["parties"]],
            f"Instance-group influence ({report.method}, n={report.n})",
            "influence",
        ),
    )
    run.finish()
    for p in payload["parties"]:
        print(f"{p['id']}\tsize={p['size']}\tinfluence={p['influence']:.6g}")
    return 0


def _instances(spec: str, dataset, sample: int | None, seed: int) -> list[int]:
    if spec == "all":
        ids = np.arange(dataset.n)
        if sample is not None and sample < dataset.n:
            ids = np.sort(np.random.default_rng(seed).choice(dataset.n, size=sample, replace=False))
        return [int(i) for i in ids]
    try:
        idx = int(spec)
    except ValueError:
        raise UsageError(f"--instance must be an integer or 'all', got {spec!r}") from None
    if not 0 <= idx < dataset.n:
        raise DataError(f"unknown instance id {idx} (dataset has {dataset.n} rows)")
    return [idx]


def cmd_shapley(args) -> int:
    run = _Run(args)
    dataset = _dataset(args)
    model, train_idx = _model(args, dataset)
    ids = _instances(args.instance, dataset, args.sample, args.seed)
    names = dataset.feature_names
    if args.method == "exact":
        background = BackgroundSpec.reference_vector(dataset.medians)
    else:
        background = BackgroundSpec.sampled(dataset.features, train_idx, dataset.medians)

    results = []
    for i in ids:
        x = dataset.features[i]
        if args.method == "exact":
            res = shapley_exact(model, x, background)
        else:
            res = shapley_mc_all(model, x, args.iterations, background, args.seed, instance_id=i)
        results.append(res.to_dict(instance_id=i, feature_names=names))

    if args.instance != "all":
        res = results[0]
        stem = f"shapley_{ids[0]}"
        run.report(stem, res, ["feature", "name", "phi"], [[v["feature"], v["name"], v["phi"]] for v in res["values"]])
        run.svg(
            f"{stem}.svg",
            bar_chart(names, [canonical(v["phi"]) for v in res["values"]],
                      f"Shapley values, instance {ids[0]} (f={res['prediction']:.3f})", "phi"),
        )
        print(f"instance {ids[0]}: prediction {res['prediction']:.6f} baseline {res['baseline']:.6f}")
        for v in res["values"]:
            print(f"  {v['name']:<40s} {v['phi']:+.6f}")
    else:
        scatter = [
            [r["instance_id"], v["feature"], v["name"], v["phi"], float(dataset.features[r["instance_id"], v["feature"]])]
            for r in results
            for v in r["values"]
        ]
        mean_abs = [
            float(np.mean([abs(r["values"][j]["phi"]) for r in results])) for j in range(dataset.d)
        ]
        run.report("shapley_all", {"method": args.method, "seed": args.seed, "results": results})
        run.report(
            "shapley_scatter",
            {"columns": ["instance", "feature", "name", "phi", "value"], "rows": scatter},
            ["instance", "feature", "name", "phi", "value"],
            scatter,
        )
        run.report(
            "shapley_mean_abs",
            {"features": [{"feature": j, "name": names[j], "mean_abs_phi": m} for j, m in enumerate(mean_abs)]},
            ["feature", "name", "mean_abs_phi"],
            [[j, names[j], m] for j, m in enumerate(mean_abs)],
        )
        run.svg(
            "shapley_scatter.svg",
            scatter_rows(names, [(row[1], canonical(row[3])) for row in scatter],
                         f"Shapley values for {len(results)} instances", "phi"),
        )
        run.svg("shapley_mean_abs.svg", bar_chart(names, canonical(mean_abs), "Mean |phi| per feature", "mean |phi|"))
        print(f"explained {len(results)} instances; scatter rows {len(scatter)}")
    run.finish()
    return 0


def cmd_vertical(args) -> int:
    run = _Run(args)
    dataset = _dataset(args)
    model, _ = _model(args, dataset)
    partition = data_mod.vertical_split(dataset, args.groups)
    federation = assemble_federation(dataset, partition, token_seed=args.seed)
    federation.register_model(model)
    ids = _instances("all", dataset, args.sample, args.seed)

    per_party: dict[str, list[dict]] = {pid: [] for pid in federation.party_ids}
    audits_failed = 0
    transcript_total = 0
    for i in ids:
        ref = federation.instance_ref(i)
        if args.mode == "all-at-once":
            reports = [federated_all_at_once(federation, ref, args.iterations, args.seed, stream_id=i, capture=True)]
        else:
            reports = [
                federated_group_shapley(federation, ref, pid, args.iterations, args.seed, stream_id=i, capture=True)
                for pid in federation.party_ids
            ]
        for rep in reports:
            transcript_total += rep.transcript_length
            audits_failed += sum(not privacy_audit(t).passed for t in rep.transcripts)
            for pid, phi in rep.per_party.items():
                per_party[pid].append({"instance_id": i, "phi": phi, "prediction": rep.prediction, "baseline": rep.baseline})

    groups = [[int(j) for j in g] for g in partition.feature_groups]
    for k, pid in enumerate(federation.party_ids):
        run.report(
            f"vertical_{pid}",
            {
                "party": pid,
                "features": [dataset.feature_names[j] for j in groups[k]],
                "mode": args.mode,
                "M": args.iterations,
                "seed": args.seed,
                "values": per_party[pid],
            },
            ["instance_id", "phi"],
            [[v["instance_id"], v["phi"]] for v in per_party[pid]],
        )
    summary = {
        "mode": args.mode,
        "M": args.iterations,
        "seed": args.seed,
        "instances": len(ids),
        "groups": groups,
        "privacy_audit": {"runs_failed": audits_failed, "passed": audits_failed == 0},
        "messages": transcript_total,
        "parties": [
            {
                "id": pid,
                "mean_phi": float(np.mean([v["phi"] for v in per_party[pid]])),
                "mean_abs_phi": float(np.mean([abs(v["phi"]) for v in per_party[pid]])),
            }
            for pid in federation.party_ids
        ],
    }
    run.report(
        "vertical_summary",
        summary,
        ["id", "mean_phi", "mean_abs_phi"],
        [[p["id"], p["mean_phi"], p["mean_abs_phi"]] for p in summary["parties"]],
    )
    run.svg(
        "vertical_bar.svg",
        bar_chart(federation.party_ids, [canonical(p["mean_abs_phi"]) for p in summary["parties"]],
                  f"Mean |group Shapley| over {len(ids)} instances", "mean |phi|"),
    )
    run.svg(
        "vertical_scatter.svg",
        scatter_rows(
            federation.party_ids,
            [(k, canonical(v["phi"])) for k, pid in enumerate(federation.party_ids) for v in per_party[pid]],
            "Group Shapley values per instance",
            "phi",
        ),
    )
    run.finish()
    for p in summary["parties"]:
        print(f"{p['id']}\tmean phi={p['mean_phi']:+.6f}\tmean |phi|={p['mean_abs_phi']:.6f}")
    if audits_failed:
        raise DataError(f"privacy audit failed on {audits_failed} run(s)")
    return 0


def cmd_audit(args) -> int:
    run = _Run(args)
    if args.transcript:
        transcript = Transcript.read_jsonl(args.transcript)
    else:
        if not args.data:
            raise UsageError("audit needs --data or --transcript")
        dataset = _dataset(args)
        model, _ = _model(args, dataset)
        partition = data_mod.vertical_split(dataset, args.groups)
        federation = assemble_federation(dataset, partition, token_seed=args.seed)
        federation.register_model(model)
        if not 0 <= args.party < partition.party_count:
            raise DataError(f"party {args.party} out of range")
        report = federated_group_shapley(
            federation,
            federation.instance_ref(_instances(str(args.instance), dataset, None, args.seed)[0]),
            federation.party_ids[args.party],
            args.iterations,
            args.seed,
            stream_id=args.instance,
            capture=True,
        )
        transcript = report.transcripts[0]
        transcript.write_jsonl(run.path("transcript.jsonl"))
    verdict = privacy_audit(transcript)
    run.report("audit", verdict.to_dict())
    run.finish()
    print(f"audit {'PASS' if verdict.passed else 'FAIL'}: {verdict.inspected} evaluator-bound messages, "
          f"offending {verdict.offending}")
    return 0 if verdict.passed else DataError.exit_code


def cmd_surrogate(args) -> int:
    path = write_surrogate_csv(args.out, args.rows, args.seed)
    print(f"wrote synthetic CSV {path} ({args.rows} rows)")
    return 0


COMMANDS = {
    "train": cmd_train,
    "horizontal": cmd_horizontal,
    "shapley": cmd_shapley,
    "vertical": cmd_vertical,
    "audit": cmd_audit,
    "surrogate": cmd_surrogate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except FedContribError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return UsageError.exit_code
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
