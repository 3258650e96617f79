"""Run configuration: nested dataclasses loaded from / saved to YAML."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .data import SyntheticConfig
from .encoder import EncoderConfig
from .sqdc import SqdcConfig

ABLATIONS = (
    "stop_gradient",
    "no_sqdc",
    "no_session_mask",
    "no_short_seq",
    "no_long_seq",
    "no_cosine_sim",
    "id_only",
)


class ConfigError(ValueError):
    pass


@dataclass
class BankConfig:
    capacity: int = 1_000_000
    window: int | None = 100_000  # steps


@dataclass
class SeqConfig:
    decoder_layers: int = 1
    decoder_heads: int = 1
    scale_attention: bool = False
    use_raw_similarity: bool = True
    use_ranked_similarity: bool = True


@dataclass
class SamplingConfig:
    p: float = 100.0
    q: float = 100.0
    workers: int = 2
    dedup: bool = True


@dataclass
class TrainConfig:
    batch_size: int = 64
    steps: int = 4000
    lr: float = 1e-3
    sqdc_weight: float = 1.0
    id_dim: int = 8
    ranker_hidden: tuple[int, ...] = (128, 64)
    report_every: int = 50
    seed: int = 0


@dataclass
class AblationConfig:
    stop_gradient: bool = False
    no_sqdc: bool = False
    no_session_mask: bool = False
    no_short_seq: bool = False
    no_long_seq: bool = False
    no_cosine_sim: bool = False
    id_only: bool = False

    def active(self) -> list[str]:
        return [name for name in ABLATIONS if getattr(self, name)]


def _desk_query_encoder() -> EncoderConfig:
    return EncoderConfig(layers=2, model_dim=32, heads=2, vocab_size=4096, output_dim=32, max_positions=16)


def _desk_doc_encoder() -> EncoderConfig:
    return EncoderConfig(layers=2, model_dim=32, heads=2, vocab_size=4096, output_dim=32, max_positions=192)


@dataclass
class RunConfig:
    data: SyntheticConfig = field(default_factory=SyntheticConfig)
    query_encoder: EncoderConfig = field(default_factory=_desk_query_encoder)
    doc_encoder: EncoderConfig = field(default_factory=_desk_doc_encoder)
    sqdc: SqdcConfig = field(default_factory=SqdcConfig)
    bank: BankConfig = field(default_factory=BankConfig)
    seq: SeqConfig = field(default_factory=SeqConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    ablations: AblationConfig = field(default_factory=AblationConfig)

    def __post_init__(self):
        self.validate()

    # -- profiles ------------------------------------------------------------
    @classmethod
    def desk(cls) -> "RunConfig":
        return cls()

    @classmethod
    def production(cls) -> "RunConfig":
        """Sizes stated for the production system; far too slow for a CPU."""
        cfg = cls()
        cfg.query_encoder = EncoderConfig(layers=2, model_dim=128, heads=4, output_dim=128, max_positions=16)
        cfg.doc_encoder = EncoderConfig(layers=4, model_dim=128, heads=4, output_dim=128, max_positions=192)
        cfg.data.history_caps = (50, 1000)
        cfg.train.batch_size = 2048
        cfg.sampling.p = cfg.sampling.q = 20.0
        cfg.validate()
        return cfg

    # -- validation ----------------------------------------------------------
    def validate(self) -> None:
        try:
            self.data.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for name in ("query_encoder", "doc_encoder"):
            enc = getattr(self, name)
            if enc.vocab_size != self.data.vocab_size:
                raise ConfigError(f"{name}.vocab_size={enc.vocab_size} differs from data.vocab_size={self.data.vocab_size}")
        if self.query_encoder.output_dim != self.doc_encoder.output_dim:
            raise ConfigError("query_encoder.output_dim must equal doc_encoder.output_dim")
        ml = self.data.max_lengths
        doc_len = 1 + sum(ml[k] for k in ("title", "ocr", "asr", "cover_ocr")) + 3
        if self.doc_encoder.max_positions < doc_len:
            raise ConfigError(f"doc_encoder.max_positions={self.doc_encoder.max_positions} < longest document {doc_len}")
        if self.query_encoder.max_positions < 1 + ml["query"]:
            raise ConfigError("query_encoder.max_positions shorter than the longest query")
        s = self.sampling
        if not 0 <= s.q <= s.p <= 100:
            raise ConfigError(f"sampling needs 0 <= q <= p <= 100, got p={s.p}, q={s.q}")
        if s.workers < 1:
            raise ConfigError("sampling.workers must be >= 1")
        t = self.train
        if t.batch_size < 1:
            raise ConfigError("train.batch_size must be >= 1")
        if t.steps < 0:
            raise ConfigError("train.steps must be >= 0")
        if t.lr <= 0:
            raise ConfigError("train.lr must be positive")
        if t.sqdc_weight < 0:
            raise ConfigError("train.sqdc_weight must be >= 0")
        if self.bank.capacity < 1:
            raise ConfigError("bank.capacity must be >= 1")
        if self.seq.decoder_layers < 1:
            raise ConfigError("seq.decoder_layers must be >= 1")
        if self.doc_encoder.output_dim % self.seq.decoder_heads:
            raise ConfigError("seq.decoder_heads must divide the embedding dim")

    # -- derived knobs -------------------------------------------------------
    def effective_sqdc(self) -> SqdcConfig:
        a = self.ablations
        return dataclasses.replace(
            self.sqdc,
            enabled=self.sqdc.enabled and not a.no_sqdc and not a.id_only,
            session_mask_enabled=self.sqdc.session_mask_enabled and not a.no_session_mask,
        )

    def effective_lambda(self) -> float:
        a = self.ablations
        return 0.0 if (a.no_sqdc or a.id_only or not self.sqdc.enabled) else self.train.sqdc_weight

    def with_ablations(self, *names: str) -> "RunConfig":
        cfg = from_dict(to_dict(self))
        for name in names:
            if name not in ABLATIONS:
                raise ConfigError(f"unknown ablation {name!r}; valid: {', '.join(ABLATIONS)}")
            setattr(cfg.ablations, name, True)
        return cfg

    def fingerprint(self) -> str:
        """Hash of every field that changes parameter shapes."""
        topo = {
            "query_encoder": asdict(self.query_encoder),
            "doc_encoder": asdict(self.doc_encoder),
            "seq": {"layers": self.seq.decoder_layers, "heads": self.seq.decoder_heads,
                    "raw": self.seq.use_raw_similarity, "ranked": self.seq.use_ranked_similarity},
            "caps": list(self.data.history_caps),
            "sizes": [self.data.n_users, self.data.n_docs, self.data.n_queries, self.data.vocab_size],
            "id_dim": self.train.id_dim,
            "ranker_hidden": list(self.train.ranker_hidden),
        }
        return hashlib.sha256(json.dumps(topo, sort_keys=True).encode()).hexdigest()[:16]


_SECTIONS = {
    "data": SyntheticConfig,
    "query_encoder": EncoderConfig,
    "doc_encoder": EncoderConfig,
    "sqdc": SqdcConfig,
    "bank": BankConfig,
    "seq": SeqConfig,
    "sampling": SamplingConfig,
    "train": TrainConfig,
    "ablations": AblationConfig,
}


def to_dict(cfg: RunConfig) -> dict[str, Any]:
    out = asdict(cfg)
    out["data"]["history_caps"] = list(cfg.data.history_caps)
    out["train"]["ranker_hidden"] = list(cfg.train.ranker_hidden)
    return out


def from_dict(raw: dict[str, Any] | None) -> RunConfig:
    raw = raw or {}
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    base = RunConfig.__new__(RunConfig)
    defaults = {
        "query_encoder": _desk_query_encoder(),
        "doc_encoder": _desk_doc_encoder(),
    }
    for section, cls in _SECTIONS.items():
        values = raw.get(section) or {}
        if not isinstance(values, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        known = {f.name for f in dataclasses.fields(cls)}
        bad = set(values) - known
        if bad:
            raise ConfigError(f"unknown field(s) in {section}: {', '.join(sorted(bad))}")
        start = asdict(defaults[section]) if section in defaults else {}
        start.update(values)
        if section == "train" and "ranker_hidden" in start:
            start["ranker_hidden"] = tuple(start["ranker_hidden"])
        try:
            obj = cls(**start)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{section}: {exc}") from exc
        setattr(base, section, obj)
    base.validate()
    return base


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping of sections")
    return from_dict(raw)


def save_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(to_dict(cfg), sort_keys=False), encoding="utf-8")


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)
