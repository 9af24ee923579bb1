"""Pipeline stages: log -> initiations/samples -> model -> metrics -> recommendation batch."""
from __future__ import annotations

import json
import logging
import platform
from pathlib import Path

import numpy as np

from . import __version__
from .batcher import (BatchConfig, SiteMetadata, build_pseudo_control_sets, draft_assign,
                      merge_pair_scores_to_sites, read_manifest, write_batch)
from .config import RunConfig, file_sha256
from .context import RankingContext
from .evaluation import (SplitSpec, chronological_split, compute_metrics, coverage_eval, drift_check,
                         format_table, rank_initiations, recommendable_authors)
from .events import parse_event_log, write_event_log
from .features import FeatureConfig, HashingEmbedder, PrecomputedEmbedder
from .feedback import build_training_samples, log_digest, write_samples
from .history import DAY_MS
from .models.io import load_scorer, save_scorer
from .models.mlp import MLPRanker
from .models.scorers import MFScorer, MLPScorer, make_scorer
from .synthetic import SyntheticConfig, generate_synthetic_log, load_synthetic_config

logger = logging.getLogger(__name__)


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


class Run:
    """Lazily materialized artifacts of one configured run."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self._log = None
        self._ctx = None
        self.inputs = {}
        self.outputs = {}

    # -- inputs ------------------------------------------------------------------

    @property
    def log(self):
        if self._log is None:
            cfg = self.cfg
            if cfg.log is not None:
                path = cfg.resolve(cfg.log)
                self._log = parse_event_log(path)
                self.inputs[str(path)] = file_sha256(path)
            else:
                self._log = generate_synthetic_log(self.synthetic_config())
        return self._log

    def synthetic_config(self) -> SyntheticConfig:
        s = self.cfg.synthetic
        if isinstance(s, str):
            path = self.cfg.resolve(s)
            self.inputs[str(path)] = file_sha256(path)
            return load_synthetic_config(path)
        if isinstance(s, dict):
            return SyntheticConfig.from_dict(s).validate()
        return SyntheticConfig(seed=self.cfg.seed).validate()

    def embedder(self):
        cfg = self.cfg
        if cfg.embeddings is None:
            return HashingEmbedder(dim=cfg.feature_dim, seed=cfg.seed)
        path = cfg.resolve(cfg.embeddings)
        self.inputs[str(path)] = file_sha256(path)
        return PrecomputedEmbedder.from_file(path)

    @property
    def ctx(self) -> RankingContext:
        if self._ctx is None:
            fc = FeatureConfig(dim=self.cfg.feature_dim, blocks=self.cfg.feature_blocks)
            self._ctx = RankingContext(self.log, fc, self.embedder())
        return self._ctx

    def split(self):
        start = self.log.start_ms
        c = self.cfg
        spec = SplitSpec(start + int(c.train_end_day * DAY_MS), start + int(c.validation_end_day * DAY_MS),
                         start + int(c.test_end_day * DAY_MS))
        return spec, chronological_split(self.ctx.initiations, spec)

    def _emit(self, name, text=None, data=None):
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        if text is not None:
            path.write_text(text, encoding="utf-8", newline="\n")
        elif data is not None:
            path.write_bytes(data)
        self.outputs[name] = file_sha256(path)
        return path

    # -- stages ------------------------------------------------------------------

    def generate(self):
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / "log.jsonl"
        write_event_log(self.log, path)
        self.outputs["log.jsonl"] = file_sha256(path)
        return path

    def extract(self):
        """Initiations (all) and training samples (train split)."""
        _, (train, _, _) = self.split()
        lines = [json.dumps({"source": i.source_author, "site": i.target_site, "ts": i.timestamp_ms,
                             "kind": i.kind.value}, separators=(",", ":")) for i in self.ctx.initiations]
        self._emit("initiations.jsonl", "".join(line + "\n" for line in lines))
        samples = build_training_samples(train, self.ctx.index, self.cfg.seed)
        samples.params = {"train_end_day": self.cfg.train_end_day}
        self.out.mkdir(parents=True, exist_ok=True)
        write_samples(self.out / "samples.jsonl", samples, log_digest(self.log))
        self.outputs["samples.jsonl"] = file_sha256(self.out / "samples.jsonl")
        return samples

    def train(self, samples=None):
        cfg = self.cfg
        _, (train, _, _) = self.split()
        if samples is None:
            samples = build_training_samples(train, self.ctx.index, cfg.seed)
        if not len(samples):
            raise RuntimeError("no training samples in the train split")
        if cfg.scorer == "MLP":
            scorer = MLPScorer(MLPRanker(**{**cfg.mlp, "random_state": cfg.seed}))
        elif cfg.scorer == "MF":
            scorer = MFScorer()
        else:
            scorer = make_scorer(cfg.scorer, **({"seed": cfg.seed} if cfg.scorer == "Random" else {}))
        scorer.fit(self.ctx, samples, train)
        meta = {"seed": cfg.seed, "n_samples": len(samples), "log_sha256": log_digest(self.log)}
        if cfg.scorer == "MLP":
            meta["best_epoch"] = int(scorer.estimator_.best_epoch_)
            meta["epochs"] = int(scorer.estimator_.epochs)
        self.out.mkdir(parents=True, exist_ok=True)
        save_scorer(scorer, self.out / "model.bin", self.ctx.config, meta)
        self.outputs["model.bin"] = file_sha256(self.out / "model.bin")
        return scorer

    def load_model(self):
        path = self.cfg.resolve(self.cfg.model)
        self.inputs[str(path)] = file_sha256(path)
        scorer, fc, _ = load_scorer(path)
        if fc is not None and (fc.dim != self.cfg.feature_dim or fc.blocks != self.cfg.feature_blocks):
            raise ValueError(f"model feature config {fc} does not match the run config")
        return scorer

    def scorers(self, model):
        out = [(self.cfg.scorer, model)]
        for b in self.cfg.baselines:
            out.append((b, make_scorer(b, **({"seed": self.cfg.seed} if b == "Random" else {}))))
        return out

    def evaluate(self, model):
        spec, (_, _, test) = self.split()
        rows, payload = [], {}
        for name, sc in self.scorers(model):
            run = rank_initiations(sc, self.ctx.fork(), test)
            m = compute_metrics(run.results, run.skipped)
            try:
                d = drift_check(run.results, spec.validation_end_ts).__dict__
            except ValueError as e:
                d = {"error": str(e)}
            payload[name] = {"metrics": m.to_dict(), "drift": d}
            rows.append((name, m, None))
        return rows, payload

    def coverage(self, model):
        spec, _ = self.split()
        t = spec.validation_end_ts
        out = {}
        for name, sc in self.scorers(model):
            c = coverage_eval(sc, self.ctx.fork(), t, n_authors=self.cfg.coverage_authors, k=self.cfg.k,
                              seed=self.cfg.seed)
            out[name] = c
        return out

    def recommend(self, model):
        cfg = self.cfg
        spec, _ = self.split()
        t = spec.test_end_ts
        ctx = self.ctx.fork().at(t)
        ix = ctx.index
        pool = recommendable_authors(ctx, t)
        rng = np.random.default_rng([cfg.seed, 1])
        n = min(cfg.n_participants, len(pool))
        participants = np.sort(rng.choice(pool, size=n, replace=False)) if n else pool[:0]
        previous = set()
        for p in cfg.previous_manifests:
            for rs in read_manifest(cfg.resolve(p)).values():
                previous.update(rs.site_ids)
        ranked = {}
        for a in participants.tolist():
            src, cands = ctx.source_pairs(a), ctx.candidates(a)
            if not len(src) or not len(cands):
                ranked[ix.users[a]] = []
                continue
            merged = merge_pair_scores_to_sites(model.score_pairs(ctx, src, cands), ix.pair_site[cands], cfg.seed)
            ranked[ix.users[a]] = [(ix.sites[s], sc) for s, sc in merged]
        bcfg = BatchConfig(k=cfg.k, cap=cfg.cap, rounds=cfg.k, batch_id=cfg.batch_id, seed=cfg.seed)
        exclude = {p: previous for p in ranked}
        sets = draft_assign(ranked, bcfg, exclude)
        pseudo = build_pseudo_control_sets({cfg.batch_id: ranked}, {cfg.batch_id: sets}, cfg.k)[cfg.batch_id]
        needed = {s for rs in sets.values() for s in rs.site_ids}
        metadata = {}
        for s in sorted(needed):
            rows = ix.recent_update_rows(ix.site_idx[s], t, 1)
            text = ix.log.records[rows[-1]].text if rows else ""
            metadata[s] = SiteMetadata(title=f"Site {s}", latest_update=text or "")
        batch_dir = write_batch(self.out / "batch" / cfg.batch_id, sets, metadata, bcfg, previous, pseudo)
        self.outputs[f"batch/{cfg.batch_id}/manifest.csv"] = file_sha256(batch_dir / "manifest.csv")
        return sets, batch_dir

    def provenance(self):
        import scipy
        import sklearn
        prov = {
            "config": self.cfg.to_dict(),
            "config_sha256": self.cfg.digest(),
            "seed": self.cfg.seed,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": dict(sorted(self.outputs.items())),
            "versions": {"peerrec": __version__, "python": platform.python_version(), "numpy": np.__version__,
                         "scipy": scipy.__version__, "scikit-learn": sklearn.__version__},
        }
        if self._log is not None:
            prov["log_sha256"] = log_digest(self._log)
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "provenance.json").write_text(_dump(prov), encoding="utf-8", newline="\n")
        return prov


def metrics_document(eval_payload, coverage):
    doc = {}
    for name, body in eval_payload.items():
        doc[name] = dict(body)
        if coverage is not None and name in coverage:
            doc[name]["coverage"] = coverage[name].to_dict()
    return doc


def run_pipeline(cfg: RunConfig):
    """All stages in order; returns the Run with its outputs recorded."""
    run = Run(cfg)
    if cfg.log is None:
        run.generate()
    samples = run.extract()
    model = run.train(samples)
    rows, payload = run.evaluate(model)
    cov = run.coverage(model)
    run._emit("metrics.json", _dump(metrics_document(payload, cov)))
    run._emit("metrics.txt", format_table([(n, m, cov.get(n)) for n, m, _ in rows]))
    run.recommend(model)
    run.provenance()
    return run
