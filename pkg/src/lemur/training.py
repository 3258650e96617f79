"""Training loop, serving-mode evaluation, and checkpoints.

One training step runs, in order: p/q sampling, cross-worker dedup planning,
owner-side document encoding, all-gather, target and history Dedup Join,
query encoding, sequence modeling and ranking, the joint loss, backward,
the optimizer update, and finally the memory-bank writes and sweep.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as nx
from .config import RunConfig, dump_config, from_dict
from .data import Corpus, make_batches
from .distsim import WorkerShard, all_gather_embeddings, dedup_join, plan_dedup, plan_sampling
from .memory_bank import MemoryBank
from .metrics import MetricReport, UndefinedMetric, auc, qauc
from .model import LemurModel
from .numerics import Adam, Tensor
from .ranker import bce_loss, joint_loss
from .sqdc import build_session_mask, sqdc_loss

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "lemur-checkpoint-v1"


class CheckpointError(ValueError):
    pass


@dataclass
class StepOutput:
    logits: np.ndarray
    loss: Tensor
    ctr_loss: float
    sqdc_loss: float
    target_hit_rate: float | None
    staleness: float | None
    coverage: list[float]
    bank_writes: list[tuple[int, np.ndarray, int]] = field(default_factory=list)
    docs_encoded: int = 0
    samples_forwarded: int = 0


@dataclass
class EvalResult:
    auc: float
    qauc: float
    coverage: list[float]
    target_hit_rate: float
    qids: np.ndarray
    scores: np.ndarray
    labels: np.ndarray
    doc_encoder_calls: int


class Trainer:
    def __init__(self, config: RunConfig, corpus: Corpus):
        self.cfg = config
        self.corpus = corpus
        self.model = LemurModel(config)
        self.model.attach_corpus(corpus)
        self.opt = Adam(self.model.params, lr=config.train.lr)
        self.bank = MemoryBank(self.model.dim, config.bank.capacity, config.bank.window)
        self.rng = np.random.default_rng(config.train.seed + 1)
        train_sess, eval_sess = corpus.temporal_split(config.data.holdout_fraction)
        self.train_batches = make_batches(train_sess, config.train.batch_size)
        self.eval_batches = make_batches(eval_sess, config.train.batch_size)
        if not self.train_batches:
            raise ValueError("corpus has no training sessions")
        self.step = 0
        self.sqdc_cfg = config.effective_sqdc()
        self.lam = config.effective_lambda()
        self.history_log: list[dict] = []
        self.samples_forwarded = 0
        self.docs_encoded = 0

    # -- one step ------------------------------------------------------------------
    def forward_batch(self, idx: np.ndarray, step: int, plan=None, dedup: bool | None = None) -> StepOutput:
        cfg, model, corpus, bank = self.cfg, self.model, self.corpus, self.bank
        a = cfg.ablations
        b = len(idx)
        dim = model.dim
        uids = corpus.uid[idx]
        doc_ids = corpus.doc_id[idx]
        query_ids = corpus.query_id[idx]
        labels = corpus.label[idx]
        qids = corpus.qid[idx]
        hist = corpus.history[idx]
        dedup = cfg.sampling.dedup if dedup is None else dedup

        bank_writes: list[tuple[int, np.ndarray, int]] = []
        staleness = hit_rate = None
        docs_encoded = samples_forwarded = 0

        if a.id_only:
            q_emb = d_emb = Tensor(np.zeros((b, dim)))
            target_present = np.zeros(b, dtype=bool)
            histories = [(Tensor(np.zeros((b, n, dim))), np.zeros((b, n), dtype=bool)) for n in model.caps]
            coverage = [float("nan")] * len(model.caps)
            sqdc = Tensor(0.0)
        else:
            if plan is None:
                plan = plan_sampling(b, cfg.sampling.p, cfg.sampling.q, self.rng)
            fwd = np.zeros(b, dtype=bool)
            fwd[plan.forward_set] = True
            bwd = np.zeros(b, dtype=bool)
            bwd[plan.backward_set] = True
            in_bank = np.array([d in bank for d in doc_ids.tolist()], dtype=bool)
            hit_rate = float(in_bank.mean())

            # shards: contiguous blocks of the batch, forward samples only
            blocks = np.array_split(np.arange(b), cfg.sampling.workers)
            shards = [WorkerShard(w, blk[fwd[blk]], doc_ids[blk[fwd[blk]]]) for w, blk in enumerate(blocks)]
            dplan = plan_dedup(shards, dedup=dedup)
            fresh = {}
            for w, ids in dplan.per_worker.items():
                if ids:
                    fresh[w] = model.encode_docs(ids)
                    docs_encoded += len(ids)
            samples_forwarded = int(fwd.sum())
            table = all_gather_embeddings(dplan, fresh)

            # rows of the gathered table that carry gradient
            sample_of = {}
            for shard in shards:
                for slot, s in enumerate(shard.sample_index.tolist()):
                    sample_of[(shard.worker, slot)] = s
            if dedup:
                row_grad = np.array(
                    [any(bwd[sample_of[c]] for c in dplan.consumers[d]) for d in table.doc_ids.tolist()], dtype=bool
                )
            else:
                fwd_order = np.concatenate([s.sample_index for s in shards]) if shards else np.zeros(0, np.int64)
                row_grad = bwd[fwd_order]
            if len(table.doc_ids):
                emb = table.embeddings
                table.embeddings = emb if row_grad.all() else nx.where(row_grad[:, None], emb, emb.detach())

            # target embeddings: fresh rows for forward samples, bank values otherwise
            bank_target, bank_present = bank.lookup_batch(doc_ids)
            if dedup:
                rows = table.rows_for(doc_ids)
            else:
                rows = np.full(b, -1, dtype=np.int64)
                rows[fwd_order] = np.arange(len(fwd_order))
            rows = np.where(fwd, rows, -1)
            target_present = fwd | bank_present
            if fwd.any():
                gathered = nx.embedding(table.embeddings, np.maximum(rows, 0))
                d_emb = nx.where(fwd[:, None], gathered, bank_target)
            else:
                d_emb = Tensor(bank_target)

            # staleness: cached vs fresh for forward docs already banked
            probe = fwd & bank_present
            if probe.any():
                staleness = bank.staleness_probe(doc_ids[probe].tolist(), d_emb.data[probe])

            histories, coverage = [], []
            for n in model.caps:
                ids = hist[:, :n]
                h_emb, h_present = bank.lookup_batch(ids)
                h_t, h_present, _ = dedup_join(ids, Tensor(h_emb), h_present, table)
                histories.append((h_t, h_present))
                real = ids >= 0
                counts = real.sum(axis=1)
                per = np.where(counts > 0, (h_present & real).sum(axis=1) / np.maximum(counts, 1), 1.0)
                coverage.append(float(per.mean()))

            q_emb = model.encode_queries(query_ids)

            if self.lam > 0 and self.sqdc_cfg.enabled:
                avail = np.flatnonzero(target_present)
                mask = build_session_mask(qids[avail]) if len(avail) else None
                sqdc = sqdc_loss(q_emb[avail], d_emb[avail], labels[avail], mask, self.sqdc_cfg) if len(avail) else Tensor(0.0)
            else:
                sqdc = Tensor(0.0)

            # each row goes to the bank under the worker that computed it
            row_worker = [w for w in sorted(dplan.per_worker) for _ in dplan.per_worker[w]]
            for i, d in enumerate(table.doc_ids.tolist()):
                bank_writes.append((d, table.embeddings.data[i].copy(), row_worker[i]))

        out, _ = model.score(uids, doc_ids, query_ids, q_emb, d_emb, target_present, histories, groups=qids)
        ctr = bce_loss(out.y_hat, labels.astype(np.float64))
        loss = joint_loss(ctr, sqdc, self.lam)
        return StepOutput(
            logits=out.logit.data.copy(),
            loss=loss,
            ctr_loss=float(ctr.data),
            sqdc_loss=float(np.asarray(sqdc.data)),
            target_hit_rate=hit_rate,
            staleness=staleness,
            coverage=coverage,
            bank_writes=bank_writes,
            docs_encoded=docs_encoded,
            samples_forwarded=samples_forwarded,
        )

    def train_step(self) -> StepOutput:
        step = self.step
        idx = self.train_batches[step % len(self.train_batches)]
        self.model.params.zero_grad()
        out = self.forward_batch(idx, step)
        if out.loss.requires_grad:
            out.loss.backward()
        self.opt.step()
        for doc_id, vec, worker in out.bank_writes:
            self.bank.put(doc_id, vec, step, worker)
        self.bank.sweep(step)
        self.samples_forwarded += out.samples_forwarded
        self.docs_encoded += out.docs_encoded
        self.history_log.append(
            {
                "step": step,
                "loss": float(out.loss.data),
                "ctr_loss": out.ctr_loss,
                "sqdc_loss": out.sqdc_loss,
                "target_hit_rate": out.target_hit_rate,
                "staleness": out.staleness,
                "coverage": out.coverage,
            }
        )
        self.step += 1
        return out

    def train(self, steps: int | None = None, writer=None) -> list[dict]:
        steps = self.cfg.train.steps if steps is None else steps
        every = max(1, self.cfg.train.report_every)
        for _ in range(steps):
            self.train_step()
            if writer is not None and self.step % every == 0:
                writer.write(self.window_report(every))
        return self.history_log

    def window_report(self, window: int) -> MetricReport:
        rows = self.history_log[-window:]

        def avg(key):
            vals = [r[key] for r in rows if r[key] is not None and not math.isnan(r[key])]
            return float(np.mean(vals)) if vals else None

        coverage = {}
        for i, cap in enumerate(self.model.caps):
            vals = [r["coverage"][i] for r in rows if r["coverage"] and not math.isnan(r["coverage"][i])]
            if vals:
                coverage[f"seq{cap}"] = float(np.mean(vals))
        return MetricReport(
            step=self.step,
            split="train",
            loss=avg("loss"),
            staleness=avg("staleness"),
            coverage=coverage,
            target_hit_rate=avg("target_hit_rate"),
            extra={"ctr_loss": avg("ctr_loss") or 0.0, "sqdc_loss": avg("sqdc_loss") or 0.0},
        )

    # -- serving-mode evaluation ---------------------------------------------------
    def evaluate(self, batches: list[np.ndarray] | None = None) -> EvalResult:
        """Score held-out sessions with document embeddings read only from the bank."""
        cfg, model, corpus, bank = self.cfg, self.model, self.corpus, self.bank
        batches = self.eval_batches if batches is None else batches
        calls_before = model.doc_encoder.invocations
        qid_l, score_l, label_l, cov_l, hit_l = [], [], [], [], []
        with nx.no_grad():
            for idx in batches:
                b = len(idx)
                uids, doc_ids, query_ids = corpus.uid[idx], corpus.doc_id[idx], corpus.query_id[idx]
                hist = corpus.history[idx]
                if cfg.ablations.id_only:
                    q_emb = d_emb = Tensor(np.zeros((b, model.dim)))
                    present = np.zeros(b, dtype=bool)
                    histories = [(Tensor(np.zeros((b, n, model.dim))), np.zeros((b, n), dtype=bool)) for n in model.caps]
                else:
                    d_vals, present = bank.lookup_batch(doc_ids)
                    d_emb = Tensor(d_vals)
                    q_emb = model.encode_queries(query_ids)
                    histories = []
                    covs = []
                    for n in model.caps:
                        ids = hist[:, :n]
                        h_emb, h_present = bank.lookup_batch(ids)
                        histories.append((Tensor(h_emb), h_present))
                        real = ids >= 0
                        counts = real.sum(axis=1)
                        covs.append(np.where(counts > 0, h_present.sum(axis=1) / np.maximum(counts, 1), 1.0))
                    cov_l.append(np.stack(covs, axis=1))
                    hit_l.append(present)
                out, _ = model.score(uids, doc_ids, query_ids, q_emb, d_emb, present, histories, groups=corpus.qid[idx])
                qid_l.append(corpus.qid[idx])
                score_l.append(out.logit.data.copy())
                label_l.append(corpus.label[idx])
        qids, scores, labels = np.concatenate(qid_l), np.concatenate(score_l), np.concatenate(label_l)
        try:
            a_val = auc(scores, labels)
        except UndefinedMetric:
            a_val = float("nan")
        q_val = qauc((qids, scores, labels))
        coverage = np.concatenate(cov_l).mean(axis=0).tolist() if cov_l else [float("nan")] * len(model.caps)
        hit = float(np.concatenate(hit_l).mean()) if hit_l else float("nan")
        return EvalResult(a_val, q_val, coverage, hit, qids, scores, labels, model.doc_encoder.invocations - calls_before)

    # -- checkpoints -----------------------------------------------------------------
    def save_checkpoint(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        arrays = {f"param/{k}": v for k, v in self.model.params.state_dict().items()}
        arrays.update({f"adam/{k}": v for k, v in self.opt.state_dict().items()})
        arrays.update({f"bank/{k}": v for k, v in self.bank.snapshot().items()})
        meta = {
            "format": CHECKPOINT_FORMAT,
            "step": self.step,
            "fingerprint": self.cfg.fingerprint(),
            "rng": self.rng.bit_generator.state,
            "config": dump_config(self.cfg),
            "samples_forwarded": self.samples_forwarded,
            "docs_encoded": self.docs_encoded,
        }
        arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
        with path.open("wb") as fh:
            np.savez(fh, **arrays)
        return path

    def load_checkpoint(self, path: str | Path, modules: list[str] | None = None) -> None:
        """Restore state. ``modules`` (param-name prefixes) loads parameters only, for warm starts."""
        ckpt = read_checkpoint(path)
        meta = ckpt["meta"]
        if meta["fingerprint"] != self.cfg.fingerprint():
            raise CheckpointError(
                f"checkpoint fingerprint {meta['fingerprint']} does not match config {self.cfg.fingerprint()}"
            )
        params = {k[len("param/"):]: v for k, v in ckpt["arrays"].items() if k.startswith("param/")}
        if modules is not None:
            self.model.params.load_state_dict(params, prefixes=modules)
            return
        self.model.params.load_state_dict(params)
        self.opt.load_state_dict({k[len("adam/"):]: v for k, v in ckpt["arrays"].items() if k.startswith("adam/")})
        self.bank = MemoryBank.from_snapshot(
            {k[len("bank/"):]: v for k, v in ckpt["arrays"].items() if k.startswith("bank/")},
            self.cfg.bank.capacity,
            self.cfg.bank.window,
        )
        self.rng.bit_generator.state = meta["rng"]
        self.step = int(meta["step"])
        self.samples_forwarded = int(meta.get("samples_forwarded", 0))
        self.docs_encoded = int(meta.get("docs_encoded", 0))


def read_checkpoint(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint {path} does not exist")
    with np.load(path, allow_pickle=False) as z:
        arrays = {k: z[k] for k in z.files}
    if "meta" not in arrays:
        raise CheckpointError(f"{path} has no metadata record")
    meta = json.loads(arrays.pop("meta").tobytes().decode())
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    if not any(k.startswith("bank/") for k in arrays):
        raise CheckpointError(f"{path} has no memory-bank snapshot")
    return {"meta": meta, "arrays": arrays}


def config_from_checkpoint(path: str | Path) -> RunConfig:
    import yaml

    meta = read_checkpoint(path)["meta"]
    return from_dict(yaml.safe_load(meta["config"]))
