"""Command-line harness: ``lemur generate | train | eval | ablate``.

Every RunConfig field can be overridden with ``--set section.field=value``;
the most common ones also have dedicated flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from .config import ABLATIONS, ConfigError, RunConfig, from_dict, load_config, save_config, to_dict
from .data import export_corpus, generate_corpus, import_corpus
from .metrics import MetricReport, ReportWriter, UndefinedMetric
from .training import CheckpointError, Trainer, config_from_checkpoint

log = logging.getLogger("lemur")

# dedicated flag -> (section, field)
FLAG_FIELDS = {
    "seed": ("train", "seed"),
    "steps": ("train", "steps"),
    "batch_size": ("train", "batch_size"),
    "lr": ("train", "lr"),
    "sqdc_weight": ("train", "sqdc_weight"),
    "p": ("sampling", "p"),
    "q": ("sampling", "q"),
    "workers": ("sampling", "workers"),
    "temperature": ("sqdc", "temperature"),
}


class CliError(Exception):
    pass


def _parse_set(item: str) -> tuple[str, str, object]:
    if "=" not in item or "." not in item.split("=", 1)[0]:
        raise CliError(f"--set expects section.field=value, got {item!r}")
    key, raw = item.split("=", 1)
    section, name = key.split(".", 1)
    return section, name, yaml.safe_load(raw)


def build_config(args) -> RunConfig:
    cfg = load_config(getattr(args, "config", None))
    raw = to_dict(cfg)
    for flag, (section, name) in FLAG_FIELDS.items():
        value = getattr(args, flag, None)
        if value is not None:
            raw[section][name] = value
    for item in getattr(args, "set", None) or []:
        section, name, value = _parse_set(item)
        if section not in raw:
            raise ConfigError(f"unknown config section {section!r}")
        raw[section][name] = value
    if getattr(args, "no_dedup", False):
        raw["sampling"]["dedup"] = False
    cfg = from_dict(raw)
    ablate = getattr(args, "ablate", None) or []
    return cfg.with_ablations(*ablate) if ablate else cfg


def _load_corpus(path: str):
    p = Path(path)
    if not p.exists():
        raise CliError(f"corpus {p} not found; run `lemur generate` first")
    return import_corpus(p)


def _eval_report(trainer: Trainer, res, split: str) -> MetricReport:
    nan_to_none = lambda v: None if v != v else v  # noqa: E731
    coverage = {f"seq{c}": v for c, v in zip(trainer.model.caps, res.coverage) if v == v}
    return MetricReport(
        step=trainer.step,
        split=split,
        auc=nan_to_none(res.auc),
        qauc=res.qauc,
        coverage=coverage,
        target_hit_rate=nan_to_none(res.target_hit_rate),
        extra={"doc_encoder_calls": float(res.doc_encoder_calls)},
    )


# -- commands -------------------------------------------------------------------
def cmd_generate(args) -> int:
    cfg = build_config(args)
    corpus = generate_corpus(cfg.data)
    out = Path(args.out)
    try:
        export_corpus(corpus, out)
    except OSError as exc:
        raise CliError(f"cannot write corpus to {out}: {exc}") from exc
    print(f"wrote {len(corpus)} samples, {len(corpus.sessions())} sessions to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = build_config(args)
    corpus = _load_corpus(args.corpus)
    try:
        trainer = Trainer(cfg, corpus)
    except ValueError as exc:
        raise CliError(f"config/corpus mismatch: {exc}") from exc
    if args.resume:
        trainer.load_checkpoint(args.resume)
    elif args.warm_start:
        trainer.load_checkpoint(args.warm_start, modules=args.warm_modules or ["ids.", "seq.", "ranker."])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.yaml")
    writer = ReportWriter(out / "train_reports.jsonl")
    remaining = cfg.train.steps - trainer.step if args.resume else cfg.train.steps
    trainer.train(max(0, remaining), writer=writer)
    report = _eval_report(trainer, trainer.evaluate(), "holdout")
    writer.write(report)
    writer.export_csv()
    ckpt = trainer.save_checkpoint(out / "checkpoint.npz")
    print(f"trained {trainer.step} steps; checkpoint {ckpt}")
    print(f"holdout auc={report.auc:.4f} qauc={report.qauc:.4f}")
    return 0


def cmd_eval(args) -> int:
    cfg = config_from_checkpoint(args.checkpoint)
    corpus = _load_corpus(args.corpus)
    trainer = Trainer(cfg, corpus)
    trainer.load_checkpoint(args.checkpoint)
    res = trainer.evaluate()
    report = _eval_report(trainer, res, args.split)
    if args.out:
        writer = ReportWriter(Path(args.out))
        writer.write(report)
        writer.export_csv()
    if args.scores:
        import numpy as np

        np.savez(args.scores, qid=res.qids, score=res.scores, label=res.labels)
    print(json.dumps(report.to_dict(), sort_keys=True))
    return 0


def run_ablations(cfg: RunConfig, corpus, names: list[str], steps: int | None = None) -> list[dict]:
    """Baseline plus one run per ablation, all with the same seed. Rows carry ablation - baseline QAUC."""
    for name in names:
        if name not in ABLATIONS:
            raise ConfigError(f"unknown ablation {name!r}; valid: {', '.join(ABLATIONS)}")
    rows = []
    base = None
    for name in [None, *names]:
        run_cfg = cfg if name is None else cfg.with_ablations(name)
        trainer = Trainer(run_cfg, corpus)
        trainer.train(steps)
        res = trainer.evaluate()
        if base is None:
            base = res.qauc
        rows.append({"variant": name or "baseline", "qauc": res.qauc, "auc": res.auc, "delta_qauc": res.qauc - base})
    return rows


def cmd_ablate(args) -> int:
    names = args.names or []
    bad = [n for n in names if n not in ABLATIONS]
    if bad:
        raise CliError(f"unknown ablation(s) {', '.join(bad)}; valid: {', '.join(ABLATIONS)}")
    cfg = build_config(args)
    corpus = _load_corpus(args.corpus)
    rows = run_ablations(cfg, corpus, names)
    print(f"{'variant':<16}{'QAUC':>10}{'dQAUC':>10}")
    for r in rows:
        print(f"{r['variant']:<16}{r['qauc']:>10.4f}{r['delta_qauc'] * 100:>+9.2f}%")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    return 0


# -- parser ---------------------------------------------------------------------
def _config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML config file (sections mirror RunConfig)")
    p.add_argument("--set", action="append", metavar="SECTION.FIELD=VALUE", help="override any config field")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lambda", dest="sqdc_weight", type=float, help="SQDC loss weight")
    p.add_argument("--temperature", type=float)
    p.add_argument("--p", type=float, help="forward sample percentage")
    p.add_argument("--q", type=float, help="backward sample percentage")
    p.add_argument("--workers", type=int)
    p.add_argument("--no-dedup", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lemur", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic corpus")
    _config_flags(g)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train and write checkpoint + reports")
    _config_flags(t)
    t.add_argument("--corpus", required=True)
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--ablate", action="append", choices=ABLATIONS)
    t.add_argument("--resume", help="checkpoint to resume from")
    t.add_argument("--warm-start", dest="warm_start", help="load selected modules from a checkpoint")
    t.add_argument("--warm-modules", dest="warm_modules", nargs="+", help="parameter-name prefixes to load")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="serving-mode evaluation from a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--corpus", required=True)
    e.add_argument("--split", default="holdout")
    e.add_argument("--out", help="report jsonl path")
    e.add_argument("--scores", help="write per-sample scores (.npz)")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="baseline plus ablations, QAUC delta table")
    _config_flags(a)
    a.add_argument("--corpus", required=True)
    a.add_argument("names", nargs="*", help=f"ablations: {', '.join(ABLATIONS)}")
    a.add_argument("--out", help="jsonl path for the delta table")
    a.set_defaults(func=cmd_ablate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CliError, CheckpointError, UndefinedMetric, ValueError, OSError) as exc:
        print(f"lemur {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
