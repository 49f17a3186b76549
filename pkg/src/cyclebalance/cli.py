"""Command-line experiment runner.

Verbs: ``run`` (one experiment), ``sweep`` (methods x minority counts),
``pretrain-gan`` (translation GAN only), ``eval-gan`` (score a GAN
checkpoint with the proxy classifier), ``report`` (re-render stored
metrics as a table). Exit codes: 0 success, 2 invalid configuration,
3 numerical divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from .baselines import apply_baseline, parse_baseline
from .config import (
    ExperimentConfig,
    GAN_METHODS,
    config_from_dict,
    load_config,
    save_config,
)
from .datasets import balanced_synth_dataset, build_dataset
from .errors import (
    CapacityError,
    ConfigurationError,
    ContractViolation,
    DivergenceError,
    NumericalError,
    ProxyQualityError,
)
from .evaluation import (
    MetricsReport,
    evaluate_classifier,
    gan_translation_report,
    run_repeated,
)
from .models import build_gan_pair, get_profile, load_checkpoint, save_checkpoint
from .seeding import derive_seed
from .training import (
    TrainingConfig,
    load_state_into,
    pretrain_cyclegan,
    select_best,
    train_alt,
    train_aug,
    train_proxy,
    train_vanilla_classifier,
)

OUTPUT_ROOT_ENV = "CYCLEBALANCE_OUTPUT_ROOT"
METRICS_SCHEMA_VERSION = 1


def resolve_output_dir(config: ExperimentConfig, cli_output: str | None = None) -> Path:
    base = cli_output or config.output_dir
    if base is None:
        d = config.dataset
        base = f"runs/{config.method.replace(':', '_')}-{d.n_majority}to{d.n_minority}"
    path = Path(base)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def prepare_output_dir(path: Path, resume: bool, overwrite: bool) -> None:
    if path.exists() and any(path.iterdir()):
        if overwrite:
            shutil.rmtree(path)
        elif not resume:
            raise ConfigurationError(
                f"output directory {path} is not empty; pass --resume to reuse "
                "completed runs or --overwrite to discard them"
            )
    path.mkdir(parents=True, exist_ok=True)


def _proxy_pool(config: ExperimentConfig, ds):
    """Balanced real data disjoint from the test set for the proxy judge.

    Synthetic sources get a fresh disjoint pool; image folders reuse the
    balanced validation split (the only guaranteed-disjoint real images).
    """
    if config.dataset.source == "synthetic":
        return balanced_synth_dataset(
            config.gan_eval.proxy_pool_per_class,
            config.dataset.image_size,
            seed=config.dataset.seed,
        )
    return list(ds.val)


def _score_gan(config: ExperimentConfig, ds, pair) -> dict[str, float]:
    proxy = train_proxy(
        _proxy_pool(config, ds),
        get_profile(config.profile),
        seed=derive_seed(config.seed, "proxy"),
        epochs=config.gan_eval.proxy_epochs,
        batch_size=config.gan_eval.proxy_batch_size,
    )
    return gan_translation_report(
        proxy, pair.g_ab, pair.g_ba, ds.test, floor=config.gan_eval.floor
    )


def _gan_training_config(
    config: ExperimentConfig, mode: str, epochs: int, seed: int, budgets: dict
) -> TrainingConfig:
    t = config.training
    return TrainingConfig(
        mode=mode,
        total_epochs=epochs,
        profile=get_profile(config.profile),
        seed=seed,
        swap_interval=budgets["swap_interval"],
        lr=t.lr,
        lr_schedule=budgets["lr_schedule"],
        batch_size=t.gan_batch_size if mode in ("vanilla_gan", "alt") else t.classifier_batch_size,
        eq7_unweighted=t.eq7_unweighted,
        gan_loss_form=t.gan_loss_form,
        use_image_pool=t.use_image_pool,
        checkpoint_epochs=budgets["checkpoint_epochs"],
        val_metric=t.val_metric,
    )


def _classifier_training_config(
    config: ExperimentConfig, mode: str, epochs: int, seed: int, budgets: dict
) -> TrainingConfig:
    t = config.training
    return TrainingConfig(
        mode=mode,
        total_epochs=epochs,
        profile=get_profile(config.profile),
        seed=seed,
        swap_interval=budgets["swap_interval"],
        lr=t.lr,
        lr_schedule=budgets["lr_schedule"],
        batch_size=t.classifier_batch_size,
        val_metric=t.val_metric,
    )


def _one_run(
    config: ExperimentConfig, ds, run_seed: int, run_dir: Path, budgets: dict
) -> dict[str, float]:
    """One seeded training + evaluation pass; reused if already on disk."""
    metrics_path = run_dir / "run_metrics.json"
    if metrics_path.is_file():
        return json.loads(metrics_path.read_text())
    run_dir.mkdir(parents=True, exist_ok=True)
    t = config.training
    method = config.method
    gan_report = None
    if method in GAN_METHODS:
        if t.warm_start is not None:
            pair = build_gan_pair(get_profile(config.profile), run_seed)
            load_checkpoint(
                t.warm_start, models=pair.modules_by_name(), expect_profile=config.profile
            )
        else:
            pre_cfg = _gan_training_config(
                config, "vanilla_gan", budgets["pretrain_epochs"], run_seed, budgets
            )
            pair, _ = pretrain_cyclegan(ds, pre_cfg, out_dir=run_dir / "gan")
        if method == "aug":
            cfg = _classifier_training_config(
                config, "aug", budgets["aug_epochs"], run_seed, budgets
            )
            classifier, log, records = train_aug(ds, pair, cfg, out_dir=None)
            scored_pair = pair
        else:
            cfg = _gan_training_config(
                config, "alt", budgets["alt_epochs"], run_seed, budgets
            )
            classifier, scored_pair, log, records = train_alt(ds, pair, cfg, out_dir=None)
        best = select_best(records, t.val_metric)
        load_state_into(classifier, best.state)
        result = evaluate_classifier(classifier, ds.test)
        if config.gan_eval.enabled:
            gan_report = _score_gan(config, ds, scored_pair)
        save_checkpoint(
            run_dir / "classifier_best.pt",
            profile=get_profile(config.profile), seed=run_seed, epoch=best.epoch,
            models={"classifier": classifier},
        )
    else:
        baseline = apply_baseline(
            parse_baseline(method),
            ds,
            seed=derive_seed(run_seed, "baseline"),
            cs_on_original_counts=t.cs_on_original_counts,
        )
        cfg = _classifier_training_config(
            config, "vanilla_classifier", budgets["classifier_epochs"], run_seed, budgets
        )
        classifier, log, records = train_vanilla_classifier(
            baseline.dataset, cfg, class_weights=baseline.loss_weights, out_dir=None
        )
        best = select_best(records, t.val_metric)
        load_state_into(classifier, best.state)
        result = evaluate_classifier(classifier, ds.test, rule=baseline.inference)
        save_checkpoint(
            run_dir / "classifier_best.pt",
            profile=get_profile(config.profile), seed=run_seed, epoch=best.epoch,
            models={"classifier": classifier},
        )
    log.write_jsonl(run_dir / "training_log.jsonl")
    metrics = dict(result)
    metrics["best_epoch"] = best.epoch
    if gan_report is not None:
        metrics["inception_accuracy"] = gan_report["mean"]
        metrics["inception_a_to_b"] = gan_report["a_to_b"]
        metrics["inception_b_to_a"] = gan_report["b_to_a"]
    metrics_path.write_text(json.dumps(metrics, sort_keys=True, indent=2) + "\n")
    return metrics


def run_experiment(
    config: ExperimentConfig,
    output_dir: str | None = None,
    dry_run: bool = False,
    resume: bool = False,
    overwrite: bool = False,
) -> MetricsReport | None:
    """Full pipeline: dataset, method, training, evaluation, artifacts.

    Writes metrics.json / metrics.csv / per-run checkpoints and logs under
    the output directory and prints the minority-F1 summary line.
    """
    budgets = config.training.budgets()  # validates schedule arithmetic
    if dry_run:
        print(f"config ok: method={config.method} profile={config.profile} "
              f"runs={config.runs} (dry run, nothing written)")
        return None
    out = resolve_output_dir(config, output_dir)
    prepare_output_dir(out, resume, overwrite)
    ds = build_dataset(config.dataset)
    save_config(config, out / "config.yaml")

    index = {"next": 0}

    def run_fn(seed: int) -> dict[str, float]:
        i = index["next"]
        index["next"] += 1
        return _one_run(config, ds, seed, out / f"run_{i:02d}", budgets)

    report = run_repeated(run_fn, n_runs=config.runs, base_seed=config.seed)
    payload = {
        "schema_version": METRICS_SCHEMA_VERSION,
        "method": config.method,
        "profile": config.profile,
        "seed": config.seed,
        "gamma": ds.gamma,
        "counts": {"majority": len(ds.train_a), "minority": len(ds.train_b)},
        "report": report.to_dict(),
    }
    (out / "metrics.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    rows = [
        {"method": config.method, "count": len(ds.train_b), "value": report.f1_minority}
    ]
    csv_text, table_text = emit_table(rows)
    (out / "metrics.csv").write_text(csv_text)
    print(table_text)
    print(
        f"{config.method}: minority F1 {report.f1_minority:.4f} "
        f"(mean of {config.runs} runs)"
    )
    return report


def sweep(
    config: ExperimentConfig,
    counts: list[int] | None = None,
    output_dir: str | None = None,
    resume: bool = False,
    overwrite: bool = False,
) -> tuple[str, str]:
    """One experiment per method and minority count, plus a combined table."""
    counts = list(counts) if counts else list(config.sweep_counts or ())
    if not counts:
        raise ConfigurationError(
            "sweep needs minority counts (--counts or sweep_counts in the config)"
        )
    counts = sorted(set(counts))
    out = resolve_output_dir(config, output_dir)
    prepare_output_dir(out, resume, overwrite)
    rows = []
    for method in config.method_list:
        for count in counts:
            sub = replace(
                config,
                method=method,
                methods=None,
                sweep_counts=None,
                dataset=replace(config.dataset, n_minority=count),
                output_dir=None,
            )
            sub_dir = out / method.replace(":", "_") / str(count)
            report = run_experiment(
                sub, output_dir=str(sub_dir), resume=True, overwrite=False
            )
            rows.append({"method": method, "count": count, "value": report.f1_minority})
    csv_text, table_text = emit_table(rows)
    (out / "sweep.csv").write_text(csv_text)
    (out / "sweep.txt").write_text(table_text + "\n")
    print(table_text)
    return csv_text, table_text


def emit_table(rows: list[dict], counts: list[int] | None = None) -> tuple[str, str]:
    """Rows {method, count, value} to CSV and an aligned text table.

    Columns are minority counts in ascending order; cells are 4-decimal
    fixed point; missing cells stay empty.
    """
    if counts is None:
        counts = sorted({r["count"] for r in rows})
    methods: list[str] = []
    for r in rows:
        if r["method"] not in methods:
            methods.append(r["method"])
    cells = {(r["method"], r["count"]): r["value"] for r in rows}

    header = ["method"] + [str(c) for c in counts]
    csv_lines = [",".join(header)]
    for m in methods:
        line = [m]
        for c in counts:
            v = cells.get((m, c))
            line.append("" if v is None else f"{v:.4f}")
        csv_lines.append(",".join(line))
    csv_text = "\n".join(csv_lines) + "\n"

    widths = [max(len(header[0]), *(len(m) for m in methods), 6) if methods else len(header[0])]
    widths += [max(len(h), 6) for h in header[1:]]
    def fmt_row(items):
        return "  ".join(s.ljust(w) for s, w in zip(items, widths)).rstrip()
    text_lines = [fmt_row(header)]
    for m in methods:
        items = [m]
        for c in counts:
            v = cells.get((m, c))
            items.append("" if v is None else f"{v:.4f}")
        text_lines.append(fmt_row(items))
    return csv_text, "\n".join(text_lines)


def pretrain_gan_command(config: ExperimentConfig, output_dir: str | None,
                         resume: bool, overwrite: bool) -> None:
    budgets = config.training.budgets()
    out = resolve_output_dir(config, output_dir)
    prepare_output_dir(out, resume, overwrite)
    ds = build_dataset(config.dataset)
    cfg = _gan_training_config(
        config, "vanilla_gan", budgets["gan_compare_epochs"],
        derive_seed(config.seed, "gan-pretrain"), budgets,
    )
    pretrain_cyclegan(ds, cfg, out_dir=out)
    print(f"pretrained GAN written to {out / 'gan_final.pt'} "
          f"(marks at {budgets['checkpoint_epochs']})")


def eval_gan_command(config: ExperimentConfig, checkpoint: str,
                     output_dir: str | None) -> dict[str, float]:
    ds = build_dataset(config.dataset)
    pair = build_gan_pair(get_profile(config.profile), config.seed)
    load_checkpoint(checkpoint, models=pair.modules_by_name(), expect_profile=config.profile)
    report = _score_gan(config, ds, pair)
    print(f"a_to_b {report['a_to_b']:.4f}  b_to_a {report['b_to_a']:.4f}  "
          f"mean {report['mean']:.4f}")
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "gan_eval.json").write_text(
            json.dumps(report, sort_keys=True, indent=2) + "\n"
        )
    return report


def report_command(metric_files: list[str], csv_out: str | None) -> str:
    rows = []
    for path in metric_files:
        payload = json.loads(Path(path).read_text())
        rows.append({
            "method": payload["method"],
            "count": payload["counts"]["minority"],
            "value": payload["report"]["mean"]["f1_minority"],
        })
    csv_text, table_text = emit_table(rows)
    print(table_text)
    if csv_out:
        Path(csv_out).write_text(csv_text)
    return csv_text


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _load_with_overrides(args) -> ExperimentConfig:
    path = Path(args.config)
    if not path.is_file():
        raise ConfigurationError(f"config file {path} does not exist")
    try:
        tree = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config file {path} is not valid YAML: {exc}") from None
    if not isinstance(tree, dict):
        raise ConfigurationError("config root must be a mapping")
    if getattr(args, "seed", None) is not None:
        tree["seed"] = args.seed
    if getattr(args, "profile", None) is not None:
        tree["profile"] = args.profile
    return config_from_dict(tree)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cyclebalance",
        description="Imbalanced binary image classification with translation-GAN augmentation",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, flags=True):
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--profile", choices=["paper", "desk"], help="override the model profile")
        p.add_argument("--output", help="override the output directory")
        if flags:
            p.add_argument("--resume", action="store_true",
                           help="reuse completed runs in a non-empty output directory")
            p.add_argument("--overwrite", action="store_true",
                           help="discard a non-empty output directory")

    p_run = sub.add_parser("run", help="run one experiment")
    common(p_run)
    p_run.add_argument("--dry-run", action="store_true",
                       help="validate the config and exit without writing")

    p_sweep = sub.add_parser("sweep", help="methods x minority-counts grid")
    common(p_sweep)
    p_sweep.add_argument("--counts", help="comma-separated minority counts")

    p_pre = sub.add_parser("pretrain-gan", help="pretrain the translation GAN only")
    common(p_pre)

    p_eval = sub.add_parser("eval-gan", help="score a GAN checkpoint with the proxy")
    common(p_eval, flags=False)
    p_eval.add_argument("--checkpoint", required=True, help="GAN checkpoint to score")

    p_rep = sub.add_parser("report", help="render stored metrics.json files as a table")
    p_rep.add_argument("metrics", nargs="+", help="metrics.json files")
    p_rep.add_argument("--csv", help="also write the table as CSV here")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "run":
            config = _load_with_overrides(args)
            run_experiment(
                config,
                output_dir=args.output,
                dry_run=args.dry_run,
                resume=args.resume,
                overwrite=args.overwrite,
            )
        elif args.verb == "sweep":
            config = _load_with_overrides(args)
            counts = None
            if args.counts:
                try:
                    counts = [int(c) for c in args.counts.split(",") if c.strip()]
                except ValueError:
                    raise ConfigurationError(
                        f"--counts: expected comma-separated integers, got {args.counts!r}"
                    ) from None
            sweep(
                config,
                counts=counts,
                output_dir=args.output,
                resume=args.resume,
                overwrite=args.overwrite,
            )
        elif args.verb == "pretrain-gan":
            config = _load_with_overrides(args)
            pretrain_gan_command(config, args.output, args.resume, args.overwrite)
        elif args.verb == "eval-gan":
            config = _load_with_overrides(args)
            eval_gan_command(config, args.checkpoint, args.output)
        elif args.verb == "report":
            report_command(args.metrics, args.csv)
    except (ConfigurationError, CapacityError, ContractViolation) as exc:
        _print_error(exc)
        return 2
    except (DivergenceError, NumericalError, ProxyQualityError) as exc:
        _print_error(exc)
        return 3
    return 0


def _print_error(exc: Exception) -> None:
    print(f"error: {exc}", file=sys.stderr)
    print(
        json.dumps({"error": type(exc).__name__, "message": str(exc)}),
        file=sys.stderr,
    )


if __name__ == "__main__":
    sys.exit(main())
