"""Staged pipeline orchestration over a single working directory.

Every stage consumes files produced by earlier stages and writes its
artifacts plus a manifest (config hash, seed, input/output content hashes)
under <workdir>/manifests, so identical configs and seeds yield identical
manifests. Stage order for a full run:

    synth -> extract -> pair -> score -> cluster -> stratify ->
    annotate-auto (or the annotation service) -> finetune-matcher ->
    score -> calibrate -> build-train -> train-mine -> infer -> eval
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import calibration as cal
from . import prompts
from .corpus import (
    EOS,
    PairRecord,
    Verbatim,
    Vocabulary,
    build_vocabulary,
    load_corpus,
    load_pairs,
    normalize_text,
    save_corpus,
    save_pairs,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .decoding import DecodeConfig, MineSequenceModel, decode
from .evaluation import EvalReport, ImageOutcome, MatchPolicy, evaluate_run, write_report
from .images import read_ppm, write_ppm
from .matcher import (
    DualEncoder,
    DualEncoderConfig,
    MatcherTrainConfig,
    cluster_verbatims,
    finetune,
    label_pairs,
    score_pairs,
)
from .mine import MINEConfig, MINEModel, MineTrainConfig, load_mine, save_mine, train
from .synthetic import SyntheticSpec, generate_synthetic_corpus
from .verbatims import LexiconSentimentClassifier, extract_verbatims

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class PipelineConfig:
    seed: int = 7
    workdir: str = "run"
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    matcher: DualEncoderConfig = field(default_factory=DualEncoderConfig)
    matcher_train: MatcherTrainConfig = field(default_factory=MatcherTrainConfig)
    mine: MINEConfig = field(default_factory=lambda: MINEConfig(vocab_size=1))
    mine_train: MineTrainConfig = field(default_factory=MineTrainConfig)
    grid: str = "0.19:0.31:0.01"
    policy: cal.SelectionPolicy = field(default_factory=lambda: cal.SelectionPolicy("max_f1"))
    sample_k: int = 60
    link_threshold: float = 0.9
    disagree_rate: float = 0.0
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    prompt_kind: str = prompts.MSE
    match_policy: MatchPolicy = field(default_factory=MatchPolicy)
    test_fraction: float = 0.2

    @classmethod
    def from_json(cls, obj: dict) -> "PipelineConfig":
        cfg = cls()
        plain = {f.name for f in dataclasses.fields(cls)
                 if f.name not in ("synthetic", "matcher", "matcher_train", "mine",
                                   "mine_train", "policy", "decode", "match_policy")}
        for key, value in obj.items():
            if key in plain:
                setattr(cfg, key, value)
        if "synthetic" in obj:
            cfg.synthetic = SyntheticSpec(**obj["synthetic"])
        if "matcher" in obj:
            section = dict(obj["matcher"])
            train = section.pop("train", None)
            cfg.matcher = DualEncoderConfig(**section)
            if train:
                cfg.matcher_train = MatcherTrainConfig(**train)
        if "mine" in obj:
            section = dict(obj["mine"])
            train = section.pop("train", None)
            cfg.mine = MINEConfig(**{"vocab_size": 1, **section})
            if train:
                cfg.mine_train = MineTrainConfig(**train)
        if "matcher_train" in obj:
            cfg.matcher_train = MatcherTrainConfig(**obj["matcher_train"])
        if "mine_train" in obj:
            cfg.mine_train = MineTrainConfig(**obj["mine_train"])
        if "policy" in obj:
            cfg.policy = cal.SelectionPolicy.from_json(obj["policy"])
        if "decode" in obj:
            cfg.decode = DecodeConfig(**obj["decode"])
        if "match_policy" in obj:
            cfg.match_policy = MatchPolicy(**obj["match_policy"])
        return cfg

    def to_json(self) -> dict:
        obj = dataclasses.asdict(self)
        obj["policy"] = self.policy.to_json()
        obj["format_version"] = FORMAT_VERSION
        return obj

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def config_hash(cfg: PipelineConfig) -> str:
    blob = json.dumps(cfg.to_json(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------------------
# workdir plumbing
# ---------------------------------------------------------------------------


class Workdir:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, rel: str) -> Path:
        return self.root / rel

    def write_manifest(self, stage: str, cfg: PipelineConfig, inputs: list[str], outputs: list[str]) -> Path:
        manifest = {
            "format_version": FORMAT_VERSION,
            "stage": stage,
            "config_hash": config_hash(cfg),
            "seed": cfg.seed,
            "inputs": {rel: self._hash(rel) for rel in sorted(inputs)},
            "outputs": {rel: self._hash(rel) for rel in sorted(outputs)},
        }
        mdir = self.root / "manifests"
        mdir.mkdir(exist_ok=True)
        out = mdir / f"{stage}.json"
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
        return out

    def _hash(self, rel: str) -> str:
        p = self.root / rel
        h = hashlib.sha256()
        if p.is_dir():
            for f in sorted(p.rglob("*")):
                if f.is_file():
                    h.update(f.name.encode())
                    h.update(f.read_bytes())
        elif p.exists():
            h.update(p.read_bytes())
        else:
            return "missing"
        return h.hexdigest()


def split_reviews(review_ids: list[str], seed: int, test_fraction: float) -> tuple[set[str], set[str]]:
    """Deterministic train/test split over review ids."""
    rng = np.random.default_rng(seed)
    order = list(rng.permutation(sorted(review_ids)))
    n_test = int(round(len(order) * test_fraction))
    return set(order[n_test:]), set(order[:n_test])


def _load_verbatims(wd: Workdir) -> list[Verbatim]:
    out = []
    with open(wd.path("verbatims.jsonl"), "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                out.append(Verbatim(obj["verbatim_id"], obj["review_id"], obj["text"],
                                    tuple(obj["char_span"])))
    return out


def _load_texts(wd: Workdir) -> dict[str, str]:
    out = {}
    with open(wd.path("preprocessed.jsonl"), "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                out[obj["review_id"]] = obj["text"]
    return out


def get_vocab(wd: Workdir, cfg: PipelineConfig) -> Vocabulary:
    """Corpus vocabulary plus the prompt templates, the target separators
    and every two-decimal confidence rendering."""
    vpath = wd.path("vocab.json")
    if vpath.exists():
        return Vocabulary.load(vpath)
    texts = list(_load_texts(wd).values())
    texts.extend([prompts.MSE_TEMPLATE, prompts.SCORED_TEMPLATE, "| ; /"])
    texts.extend(f"{v / 100:.2f}" for v in range(-100, 101))
    vocab = build_vocabulary(texts)
    vocab.save(vpath)
    return vocab


def _load_gold(wd: Workdir) -> list[dict]:
    out = []
    with open(wd.path("gold.jsonl"), "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(json.loads(line))
    return out


def _gold_pair_labels(wd: Workdir) -> dict[tuple[str, str, str], str]:
    return {
        (g["review_id"], g["image_path"], g["verbatim_norm"]): g["label"]
        for g in _load_gold(wd)
    }


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def stage_synth(wd: Workdir, cfg: PipelineConfig) -> None:
    spec = dataclasses.replace(cfg.synthetic, seed=cfg.seed)
    corpus = generate_synthetic_corpus(spec)
    save_corpus(corpus.reviews, wd.path("corpus.jsonl"))
    (wd.root / "images").mkdir(exist_ok=True)
    for rel, raster in corpus.images.items():
        write_ppm(raster, wd.path(rel))
    with open(wd.path("gold.jsonl"), "w", encoding="utf-8") as fh:
        for g in corpus.gold:
            fh.write(json.dumps({
                "review_id": g.review_id, "image_path": g.image_path,
                "verbatim_norm": g.verbatim_norm, "label": g.label,
            }) + "\n")
    wd.write_manifest("synth", cfg, [], ["corpus.jsonl", "gold.jsonl", "images"])


def stage_extract(wd: Workdir, cfg: PipelineConfig) -> None:
    reviews = load_corpus(wd.path("corpus.jsonl"))
    classifier = LexiconSentimentClassifier()
    with open(wd.path("verbatims.jsonl"), "w", encoding="utf-8") as vfh, open(
        wd.path("preprocessed.jsonl"), "w", encoding="utf-8"
    ) as pfh:
        for r in reviews:
            text, verbs = extract_verbatims(r.review_id, r.text, classifier)
            pfh.write(json.dumps({"review_id": r.review_id, "text": text}) + "\n")
            for v in verbs:
                vfh.write(json.dumps({
                    "verbatim_id": v.verbatim_id, "review_id": v.review_id,
                    "text": v.text, "char_span": list(v.char_span),
                }) + "\n")
    wd.write_manifest("extract", cfg, ["corpus.jsonl"], ["verbatims.jsonl", "preprocessed.jsonl"])


def stage_pair(wd: Workdir, cfg: PipelineConfig) -> None:
    reviews = {r.review_id: r for r in load_corpus(wd.path("corpus.jsonl"))}
    verbatims = _load_verbatims(wd)
    pairs = []
    for v in verbatims:
        for image_path in reviews[v.review_id].image_paths:
            pairs.append(PairRecord(
                pair_id=f"{v.verbatim_id}|{image_path}", verbatim_id=v.verbatim_id,
                review_id=v.review_id, verbatim=v.text, image_path=image_path,
            ))
    save_pairs(pairs, wd.path("pairs.jsonl"))
    wd.write_manifest("pair", cfg, ["corpus.jsonl", "verbatims.jsonl"], ["pairs.jsonl"])


def _read_raster(wd: Workdir, rel: str, size: int):
    """Load a PPM and resize to the configured square size when needed (the
    documented step that keeps dimensions divisible by the patch size)."""
    raster = read_ppm(wd.path(rel))
    if raster.width != size or raster.height != size:
        raster = raster.resize(size)
    return raster


def load_matcher(wd: Workdir, cfg: PipelineConfig) -> DualEncoder:
    vocab = get_vocab(wd, cfg)
    model = DualEncoder(cfg.matcher, vocab, seed=cfg.seed)
    ckpt = wd.path("matcher_ckpt")
    if (ckpt / "manifest.json").exists():
        load_checkpoint(model, ckpt)
    else:
        log.info("no matcher checkpoint; scoring with a fresh seeded model")
    return model


def stage_score(wd: Workdir, cfg: PipelineConfig) -> None:
    reviews = {r.review_id: r for r in load_corpus(wd.path("corpus.jsonl"))}
    verbatims = _load_verbatims(wd)
    model = load_matcher(wd, cfg)
    by_review: dict[str, list[Verbatim]] = {}
    for v in verbatims:
        by_review.setdefault(v.review_id, []).append(v)
    scored: list[PairRecord] = []
    for review_id in sorted(by_review):
        imgs = [
            (rel, (lambda rel=rel: _read_raster(wd, rel, cfg.matcher.image_size)))
            for rel in reviews[review_id].image_paths
        ]
        scored.extend(score_pairs(model, by_review[review_id], imgs))
    save_pairs(scored, wd.path("scored_pairs.jsonl"))
    wd.write_manifest(
        "score", cfg,
        ["corpus.jsonl", "verbatims.jsonl", "matcher_ckpt"], ["scored_pairs.jsonl"],
    )


def stage_cluster(wd: Workdir, cfg: PipelineConfig) -> None:
    verbatims = _load_verbatims(wd)
    model = load_matcher(wd, cfg)
    assign = cluster_verbatims(verbatims, model, cfg.link_threshold)
    with open(wd.path("clusters.json"), "w", encoding="utf-8") as fh:
        json.dump({"format_version": FORMAT_VERSION,
                   "verbatim_to_cluster": assign.verbatim_to_cluster,
                   "members": {str(k): v for k, v in assign.members.items()}}, fh, sort_keys=True)
    wd.write_manifest("cluster", cfg, ["verbatims.jsonl", "matcher_ckpt"], ["clusters.json"])


def stage_stratify(wd: Workdir, cfg: PipelineConfig) -> None:
    from .matcher import ClusterAssignment

    with open(wd.path("clusters.json"), "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    assign = ClusterAssignment(
        verbatim_to_cluster={k: int(v) for k, v in obj["verbatim_to_cluster"].items()},
        members={int(k): v for k, v in obj["members"].items()},
    )
    reviews = {r.review_id: r for r in load_corpus(wd.path("corpus.jsonl"))}
    verbatims = {v.verbatim_id: v for v in _load_verbatims(wd)}
    categories = {vid: reviews[v.review_id].category for vid, v in verbatims.items()}
    total_categories = len({r.category for r in reviews.values()})
    sampled = cal.stratified_sample(assign, categories, total_categories, cfg.sample_k, cfg.seed)
    pairs = load_pairs(wd.path("scored_pairs.jsonl"))
    wanted = set(sampled)
    pair_ids = [p.pair_id for p in pairs if p.verbatim_id in wanted]
    with open(wd.path("sample.json"), "w", encoding="utf-8") as fh:
        json.dump({"format_version": FORMAT_VERSION, "verbatim_ids": sampled,
                   "pair_ids": pair_ids}, fh, sort_keys=True)
    wd.write_manifest(
        "stratify", cfg,
        ["clusters.json", "corpus.jsonl", "scored_pairs.jsonl"], ["sample.json"],
    )


def stage_annotate_auto(wd: Workdir, cfg: PipelineConfig) -> None:
    """Simulate the two-expert annotation pass from generator gold labels.

    With a nonzero disagree_rate the second annotator flips labels at random
    and a third annotator (reading gold) resolves those conflicts.
    """
    with open(wd.path("sample.json"), "r", encoding="utf-8") as fh:
        sample = json.load(fh)
    pairs = {p.pair_id: p for p in load_pairs(wd.path("scored_pairs.jsonl"))}
    gold = _gold_pair_labels(wd)
    rng = np.random.default_rng(cfg.seed + 1)
    records = []
    for pair_id in sample["pair_ids"]:
        p = pairs[pair_id]
        key = (p.review_id, p.image_path, normalize_text(p.verbatim))
        if key not in gold:
            log.warning("no gold label for pair %s; skipped", pair_id)
            continue
        truth = cal.RELEVANT if gold[key] == "positive" else cal.NOT_RELEVANT
        flip = cal.NOT_RELEVANT if truth == cal.RELEVANT else cal.RELEVANT
        b_label = flip if rng.random() < cfg.disagree_rate else truth
        records.append(cal.AnnotationRecord(pair_id, "ann_a", truth, "semantic", 1.0))
        records.append(cal.AnnotationRecord(pair_id, "ann_b", b_label, "semantic", 2.0))
        if b_label != truth:
            records.append(cal.AnnotationRecord(pair_id, "ann_c", truth, "semantic", 3.0))
    cal.append_annotations(records, wd.path("annotations.jsonl"))
    wd.write_manifest(
        "annotate-auto", cfg,
        ["sample.json", "scored_pairs.jsonl", "gold.jsonl"], ["annotations.jsonl"],
    )


def _resolved_scored_triples(wd: Workdir) -> tuple[list[tuple[float, bool, str]], int]:
    pairs = load_pairs(wd.path("scored_pairs.jsonl"))
    annotations = cal.load_annotations(wd.path("annotations.jsonl"))
    resolved = cal.resolve_annotations(annotations)
    reviews = load_corpus(wd.path("corpus.jsonl"))
    categories = {r.review_id: r.category for r in reviews}
    total = len(set(categories.values()))
    return cal.pairs_to_scored(pairs, resolved, categories), total


def stage_curves(wd: Workdir, cfg: PipelineConfig) -> list[cal.ThresholdCurvePoint]:
    scored, total = _resolved_scored_triples(wd)
    points = cal.sweep_thresholds(scored, cal.parse_grid(cfg.grid), total)
    cal.write_curve_csv(points, wd.path("curve.csv"))
    wd.write_manifest(
        "curves", cfg,
        ["scored_pairs.jsonl", "annotations.jsonl", "corpus.jsonl"], ["curve.csv"],
    )
    return points


def stage_calibrate(wd: Workdir, cfg: PipelineConfig) -> float:
    scored, total = _resolved_scored_triples(wd)
    points = cal.sweep_thresholds(scored, cal.parse_grid(cfg.grid), total)
    cal.write_curve_csv(points, wd.path("curve.csv"))
    threshold = cal.select_threshold(points, cfg.policy)
    with open(wd.path("threshold.json"), "w", encoding="utf-8") as fh:
        json.dump({"format_version": FORMAT_VERSION, "threshold": threshold,
                   "policy": cfg.policy.to_json()}, fh, sort_keys=True)
    wd.write_manifest(
        "calibrate", cfg,
        ["scored_pairs.jsonl", "annotations.jsonl", "corpus.jsonl"],
        ["curve.csv", "threshold.json"],
    )
    return threshold


def stage_finetune_matcher(wd: Workdir, cfg: PipelineConfig) -> list[float]:
    """Train the dual encoder on annotation-resolved positive pairs.

    The annotated stratified sample seeds the alignment (standing in for an
    off-the-shelf pretrained matcher); every corpus-wide label downstream
    still comes from thresholded cosine scores.
    """
    pairs = {p.pair_id: p for p in load_pairs(wd.path("scored_pairs.jsonl"))}
    resolved = cal.resolve_annotations(cal.load_annotations(wd.path("annotations.jsonl")))
    positives = []
    for pair_id, label in sorted(resolved.items()):
        if label == cal.RELEVANT and pair_id in pairs:
            p = pairs[pair_id]
            positives.append((p.verbatim, _read_raster(wd, p.image_path, cfg.matcher.image_size)))
    model = load_matcher(wd, cfg)
    tcfg = dataclasses.replace(cfg.matcher_train, seed=cfg.seed)
    trace = finetune(model, positives, tcfg)
    save_checkpoint(model, wd.path("matcher_ckpt"))
    with open(wd.path("matcher_ckpt/loss_trace.json"), "w", encoding="utf-8") as fh:
        json.dump(trace, fh)
    wd.write_manifest(
        "finetune-matcher", cfg,
        ["scored_pairs.jsonl", "annotations.jsonl"], ["matcher_ckpt"],
    )
    return trace


def _threshold_from(wd: Workdir, cfg: PipelineConfig, override: float | None) -> float:
    if override is not None:
        return override
    tpath = wd.path("threshold.json")
    if tpath.exists():
        with open(tpath, "r", encoding="utf-8") as fh:
            return float(json.load(fh)["threshold"])
    raise FileNotFoundError("no threshold.json; run calibrate or pass --threshold")


def stage_build_train(wd: Workdir, cfg: PipelineConfig, threshold: float | None = None) -> int:
    """Weak-label all pairs at the threshold and serialize training targets."""
    t = _threshold_from(wd, cfg, threshold)
    pairs = label_pairs(load_pairs(wd.path("scored_pairs.jsonl")), t)
    reviews = {r.review_id: r for r in load_corpus(wd.path("corpus.jsonl"))}
    texts = _load_texts(wd)
    train_ids, _ = split_reviews(sorted(reviews), cfg.seed, cfg.test_fraction)
    by_context: dict[tuple[str, str], list[PairRecord]] = {}
    for p in pairs:
        by_context.setdefault((p.review_id, p.image_path), []).append(p)
    n = 0
    with open(wd.path("train.jsonl"), "w", encoding="utf-8") as fh:
        for (review_id, image_path), group in sorted(by_context.items()):
            if review_id not in train_ids:
                continue
            if cfg.prompt_kind == prompts.CSECS:
                entries = [(p.verbatim, round(p.score, 2)) for p in group]
            else:
                entries = [
                    (p.verbatim, round(p.score, 2))
                    for p in group if p.label == "positive"
                ]
            target = prompts.serialize_target(cfg.prompt_kind, entries)
            if not target:
                log.warning("no matching verbatims for %s %s; example skipped",
                            review_id, image_path)
                continue
            prompt = prompts.build_prompt(cfg.prompt_kind, texts[review_id])
            fh.write(json.dumps({"prompt": prompt, "image_path": image_path,
                                 "target": target}) + "\n")
            n += 1
    wd.write_manifest(
        "build-train", cfg,
        ["scored_pairs.jsonl", "corpus.jsonl", "preprocessed.jsonl", "threshold.json"],
        ["train.jsonl"],
    )
    return n


def stage_train_mine(wd: Workdir, cfg: PipelineConfig) -> list[float]:
    vocab = get_vocab(wd, cfg)
    mine_cfg = dataclasses.replace(cfg.mine, vocab_size=len(vocab))
    model = MINEModel(mine_cfg, seed=cfg.seed)
    examples = []
    with open(wd.path("train.jsonl"), "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            prompt_ids = vocab.encode(obj["prompt"])
            target_ids = vocab.encode(obj["target"]) + [EOS]
            raster = _read_raster(wd, obj["image_path"], mine_cfg.image_size)
            examples.append((prompt_ids, raster, target_ids))
    tcfg = dataclasses.replace(cfg.mine_train, seed=cfg.seed)
    trace = train(model, examples, tcfg)
    save_mine(model, wd.path("mine_ckpt"), vocab)
    with open(wd.path("mine_ckpt/loss_trace.json"), "w", encoding="utf-8") as fh:
        json.dump(trace, fh)
    wd.write_manifest("train-mine", cfg, ["train.jsonl", "vocab.json"], ["mine_ckpt"])
    return trace


def stage_infer(wd: Workdir, cfg: PipelineConfig, split: str = "test") -> int:
    model, vocab = load_mine(wd.path("mine_ckpt"))
    if vocab is None:
        vocab = get_vocab(wd, cfg)
    reviews = load_corpus(wd.path("corpus.jsonl"))
    texts = _load_texts(wd)
    train_ids, test_ids = split_reviews([r.review_id for r in reviews], cfg.seed, cfg.test_fraction)
    chosen = {"train": train_ids, "test": test_ids, "all": train_ids | test_ids}[split]
    dcfg = dataclasses.replace(cfg.decode, seed=cfg.seed)
    n = 0
    with open(wd.path("outputs.jsonl"), "w", encoding="utf-8") as fh:
        for r in reviews:
            if r.review_id not in chosen:
                continue
            prompt = prompts.build_prompt(cfg.prompt_kind, texts[r.review_id])
            prompt_ids = vocab.encode(prompt)
            for image_path in r.image_paths:
                seq = MineSequenceModel(
                    model, prompt_ids, _read_raster(wd, image_path, model.config.image_size))
                result = decode(seq, dcfg)
                decoded = vocab.decode(result.tokens)
                parsed = prompts.parse_output(cfg.prompt_kind, decoded)
                fh.write(json.dumps({
                    "review_id": r.review_id, "image_path": image_path,
                    "category": r.category, "decoded": decoded,
                    "log_prob": result.log_prob, "terminated": result.terminated,
                    "entries": [[t, c] for t, c in parsed.entries],
                    "warnings": parsed.warnings + result.flags,
                }) + "\n")
                n += 1
    wd.write_manifest("infer", cfg, ["mine_ckpt", "corpus.jsonl", "preprocessed.jsonl"],
                      ["outputs.jsonl"])
    return n


def _gold_relevant_by_context(wd: Workdir) -> dict[tuple[str, str], list[str]]:
    out: dict[tuple[str, str], list[str]] = {}
    for g in _load_gold(wd):
        key = (g["review_id"], g["image_path"])
        out.setdefault(key, [])
        if g["label"] == "positive":
            out[key].append(g["verbatim_norm"])
    return out


def stage_eval(wd: Workdir, cfg: PipelineConfig, with_baseline: bool = True) -> EvalReport:
    reviews = {r.review_id: r for r in load_corpus(wd.path("corpus.jsonl"))}
    texts = _load_texts(wd)
    gold = _gold_relevant_by_context(wd)
    outcomes = []
    baseline_outcomes = []
    rng = np.random.default_rng(cfg.seed + 2)
    verbatims_by_review: dict[str, list[str]] = {}
    for v in _load_verbatims(wd):
        verbatims_by_review.setdefault(v.review_id, []).append(v.text)
    with open(wd.path("outputs.jsonl"), "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            key = (obj["review_id"], obj["image_path"])
            outcomes.append(ImageOutcome(
                review_id=obj["review_id"], image_path=obj["image_path"],
                category=obj["category"], source_text=texts[obj["review_id"]],
                predictions=[t for t, _ in obj["entries"]],
                gold_relevant=gold.get(key, []),
            ))
            pool = verbatims_by_review.get(obj["review_id"], [])
            pick = [pool[int(rng.integers(len(pool)))]] if pool else []
            baseline_outcomes.append(dataclasses.replace(outcomes[-1], predictions=pick))
    report = evaluate_run(outcomes, cfg.match_policy)
    write_report(report, wd.path("report.json"), wd.path("report.csv"),
                 prompt_kind=cfg.prompt_kind, decode_method=cfg.decode.method)
    if with_baseline:
        baseline = evaluate_run(baseline_outcomes, cfg.match_policy)
        obj = report.to_json()
        obj["random_verbatim_baseline"] = baseline.to_json()
        with open(wd.path("report.json"), "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
    wd.write_manifest(
        "eval", cfg,
        ["outputs.jsonl", "gold.jsonl", "corpus.jsonl"], ["report.json", "report.csv"],
    )
    return report
