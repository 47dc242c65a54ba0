"""Self-boosting pipeline: build libraries, generate in-silico reactions from
unpaired molecules, filter, deduplicate, and assemble augmented corpora, with
every intermediate persisted for byte-identical replay."""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
import os
import shlex
import subprocess
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .augment import (
    Provenance,
    ReactionRecord,
    assemble_corpus,
    exclude_overlap,
    ingest_reaction_smiles,
)
from .chemgraph import SmilesError, parse_smiles
from .evalkit import (
    DEFAULT_KS,
    MetricsTable,
    PredictionSet,
    grouped_table,
    rare_subset,
    topk_table,
    write_kv_report,
    write_predictions,
)
from .filterproc import (
    CandidateReaction,
    FilterConfig,
    filter_reactions,
    retention_report,
    write_candidates,
    write_decision_log,
)
from .generator import (
    Direction,
    Generator,
    GeneratorError,
    SubprocessAdapter,
    TemplateGenerator,
)
from .templates import (
    TemplateLibrary,
    build_library,
    extract_template,
    match_template,
)

log = logging.getLogger(__name__)

WORKDIR_ENV = "RXNFORGE_WORKDIR"


class PipelineError(RuntimeError):
    pass


@dataclass
class PipelineConfig:
    real_corpus: Path
    workdir: Path
    unpaired_reactants: Path | None = None
    unpaired_products: Path | None = None
    holdouts: tuple[Path, ...] = ()
    radius: int = 1
    min_count: int = 5
    generator_min_count: int = 0
    similarity_threshold: float = 0.55
    fingerprint_radius: int = 2
    fingerprint_length: int = 2048
    forward_generator: str = "native"
    retro_generator: str = "native"
    retrain_hook: str = ""
    variants: int = 1
    real_ratio: float = 1.0
    insilico_ratio: float = 1.0
    iterations: int = 1
    ks: tuple[int, ...] = DEFAULT_KS
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise PipelineError("iterations must be >= 1")
        self.real_corpus = Path(self.real_corpus)
        self.workdir = Path(self.workdir)
        self.holdouts = tuple(Path(p) for p in self.holdouts)

    def config_hash(self) -> str:
        payload = json.dumps(
            {k: str(v) for k, v in sorted(self.__dict__.items())}, sort_keys=True
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    @staticmethod
    def from_ini(path: Path | str, overrides: dict | None = None) -> "PipelineConfig":
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise PipelineError(f"config file not found: {path}")

        def get(section, key, fallback=None):
            return parser.get(section, key, fallback=fallback)

        values: dict = {}
        values["real_corpus"] = get("paths", "real_corpus")
        values["workdir"] = get("paths", "workdir", "")
        for key in ("unpaired_reactants", "unpaired_products"):
            raw = get("paths", key)
            if raw:
                values[key] = Path(raw)
        raw_holdout = get("paths", "holdout", "")
        if raw_holdout:
            values["holdouts"] = tuple(
                Path(p.strip()) for p in raw_holdout.split(",") if p.strip()
            )
        for section, key, cast in (
            ("templates", "radius", int),
            ("templates", "min_count", int),
            ("templates", "generator_min_count", int),
            ("filter", "similarity_threshold", float),
            ("filter", "fingerprint_radius", int),
            ("filter", "fingerprint_length", int),
            ("augment", "variants", int),
            ("augment", "real_ratio", float),
            ("augment", "insilico_ratio", float),
            ("boost", "iterations", int),
            ("seeds", "seed", int),
        ):
            raw = get(section, key)
            if raw is not None:
                values[key] = cast(raw)
        for key, option in (
            ("forward_generator", "forward"),
            ("retro_generator", "retro"),
            ("retrain_hook", "retrain_hook"),
        ):
            raw = get("generators", option)
            if raw is not None:
                values[key] = raw
        raw_ks = get("eval", "ks")
        if raw_ks:
            values["ks"] = tuple(int(k) for k in raw_ks.split(","))
        if overrides:
            values.update({k: v for k, v in overrides.items() if v is not None})
        if not values.get("real_corpus"):
            raise PipelineError("config is missing paths.real_corpus")
        if not values.get("workdir"):
            root = os.environ.get(WORKDIR_ENV)
            if not root:
                raise PipelineError(
                    f"no workdir configured and ${WORKDIR_ENV} unset"
                )
            values["workdir"] = Path(root) / "run"
        return PipelineConfig(**values)


def _make_generator(spec: str, library: TemplateLibrary) -> Generator:
    if spec == "native":
        return TemplateGenerator(library)
    if spec.startswith("cmd:"):
        return SubprocessAdapter(shlex.split(spec[4:]))
    raise PipelineError(f"unknown generator spec {spec!r}")


def _load_molecule_lines(path: Path) -> list[tuple[str, str]]:
    """(id, smiles) per non-blank line; optional TAB-separated id column."""
    out = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            raw = raw.rstrip("\n")
            if not raw.strip():
                continue
            parts = raw.split("\t")
            smiles = parts[0].strip()
            ident = parts[1].strip() if len(parts) > 1 and parts[1].strip() else f"u{lineno}"
            out.append((ident, smiles))
    return out


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    iterations: list = field(default_factory=list)
    final: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "config_hash": self.config_hash,
            "seed": self.seed,
            "iterations": self.iterations,
            "final": self.final,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _element_profile(mol) -> Counter:
    return Counter((a.element, a.aromatic, a.charge) for a in mol.atoms)


class _AttributionIndex:
    """Match-based template attribution with a cheap element-profile screen."""

    def __init__(self, library: TemplateLibrary):
        self.signatures = [sig for sig, _ in library.entries()]
        self.profiles = [
            _element_profile(parse_smiles(sig.product_pattern))
            for sig in self.signatures
        ]

    def matching_signatures(self, record: ReactionRecord) -> list[str]:
        product_profile = _element_profile(record.product)
        out = []
        for sig, profile in zip(self.signatures, self.profiles):
            if any(product_profile[key] < n for key, n in profile.items()):
                continue
            if match_template(record, sig):
                out.append(sig.text)
        return out


def _generate_candidates(
    generator: Generator,
    molecule_lines: list[tuple[str, str]],
    direction: Direction,
) -> tuple[list[CandidateReaction], list[str], int]:
    """Best-1 generation for every unpaired line.

    Returns (candidates, generated-rows for the wire log, dropped-input
    count); multi-component generated sides split into one candidate per
    component, mirroring multi-product ingestion.
    """
    inputs = []
    ids = []
    dropped = 0
    for ident, smiles in molecule_lines:
        try:
            parse_smiles(smiles)
        except SmilesError:
            dropped += 1
            log.debug("dropping unparseable unpaired line %s", ident)
            continue
        inputs.append(smiles)
        ids.append(ident)
    results = generator.generate_batch(inputs, direction, k=1) if inputs else []
    candidates: list[CandidateReaction] = []
    wire_rows: list[str] = []
    for ident, smiles, ranked in zip(ids, inputs, results):
        for candidate in ranked:
            wire_rows.append(
                f"{ident}\t{candidate.rank}\t{candidate.score:.6f}\t{candidate.output}"
            )
        if not ranked:
            continue
        best = ranked[0].output
        if direction is Direction.FORWARD:
            products = best.split(".")
            for pi, product in enumerate(products):
                cid = ident if len(products) == 1 else f"{ident}.p{pi}"
                candidates.append(
                    CandidateReaction(cid, product, smiles, "product")
                )
        else:
            candidates.append(
                CandidateReaction(ident, smiles, best, "reactants")
            )
    return candidates, wire_rows, dropped


def _load_records(path: Path) -> tuple[list[ReactionRecord], dict]:
    with open(path) as fh:
        records, report = ingest_reaction_smiles(fh)
    return records, report.__dict__


def boost(config: PipelineConfig) -> RunManifest:
    """Run the self-boosting loop and persist every stage under the workdir.

    Workdir layout: ``iter-NN/`` per iteration with the frozen filter
    library, generator library, generated candidates, decision log, kept
    reactions and the assembled corpus; ``final/`` holds the post-boost
    libraries.  An existing non-empty workdir is refused.
    """
    workdir = config.workdir
    if workdir.exists() and any(workdir.iterdir()):
        raise PipelineError(f"workdir {workdir} is not empty")
    workdir.mkdir(parents=True, exist_ok=True)

    manifest = RunManifest(config_hash=config.config_hash(), seed=config.seed)
    manifest_path = workdir / "run-manifest.json"

    def flush():
        manifest_path.write_text(manifest.to_json())

    real_records, real_report = _load_records(config.real_corpus)
    if not real_records:
        raise PipelineError("real corpus is empty after ingestion")
    holdout_records: list[ReactionRecord] = []
    for holdout_path in config.holdouts:
        records, _ = _load_records(holdout_path)
        holdout_records.extend(records)
    unpaired_reactants = (
        _load_molecule_lines(config.unpaired_reactants)
        if config.unpaired_reactants
        else []
    )
    unpaired_products = (
        _load_molecule_lines(config.unpaired_products)
        if config.unpaired_products
        else []
    )

    mapped_real = [r for r in real_records if r.atom_mapped]
    base_library, build_report = build_library(
        mapped_real or real_records, radius=config.radius, min_count=config.min_count
    )
    filter_config = FilterConfig(
        similarity_threshold=config.similarity_threshold,
        template_min_count=config.min_count,
        fingerprint_radius=config.fingerprint_radius,
        fingerprint_length=config.fingerprint_length,
    )

    kept_all: list[ReactionRecord] = []
    try:
        for iteration in range(1, config.iterations + 1):
            t0 = time.perf_counter()
            iter_dir = workdir / f"iter-{iteration:02d}"
            iter_dir.mkdir()
            info: dict = {"iteration": iteration}

            # (1) refresh libraries: extraction counts plus match-attributed
            # counts from previously kept (map-free) in-silico reactions.
            library = TemplateLibrary(
                radius=config.radius,
                min_count=config.min_count,
                counts=dict(base_library.counts),
                signatures=dict(base_library.signatures),
            )
            attribution = _AttributionIndex(library)
            for record in kept_all:
                for text in attribution.matching_signatures(record):
                    library.counts[text] += 1
            generator_library = TemplateLibrary(
                radius=config.radius,
                min_count=config.generator_min_count,
                counts=library.counts,
                signatures=library.signatures,
            )
            library.save(iter_dir / "library.tsv", frozen_only=True)
            generator_library.save(iter_dir / "generator-library.tsv")
            info["library_frozen"] = len(library.frozen())
            info["generator_library"] = len(generator_library.frozen())

            # (2) per-direction base generators.
            forward_gen = _make_generator(config.forward_generator, generator_library)
            retro_gen = _make_generator(config.retro_generator, generator_library)

            # (3) in-silico generation at k=1.
            candidates: list[CandidateReaction] = []
            wire_rows: list[str] = []
            dropped_inputs = 0
            if unpaired_reactants:
                cands, rows, dropped = _generate_candidates(
                    forward_gen, unpaired_reactants, Direction.FORWARD
                )
                candidates.extend(cands)
                wire_rows.extend(rows)
                dropped_inputs += dropped
            if unpaired_products:
                cands, rows, dropped = _generate_candidates(
                    retro_gen, unpaired_products, Direction.RETRO
                )
                candidates.extend(cands)
                wire_rows.extend(rows)
                dropped_inputs += dropped
            (iter_dir / "generated.tsv").write_text(
                "".join(row + "\n" for row in wire_rows)
            )
            write_candidates(iter_dir / "candidates.tsv", candidates)
            info["unpaired_inputs"] = len(unpaired_reactants) + len(unpaired_products)
            info["unparseable_inputs"] = dropped_inputs
            info["generated"] = len(candidates)

            # (4) filter with the opposite-direction generator per side.
            product_side = [c for c in candidates if c.insilico_side == "product"]
            reactant_side = [c for c in candidates if c.insilico_side == "reactants"]
            kept_records: list[ReactionRecord] = []
            decisions = []
            if product_side:
                kept, dec = filter_reactions(
                    product_side, library, retro_gen, filter_config
                )
                kept_records.extend(kept)
                decisions.extend(dec)
            if reactant_side:
                kept, dec = filter_reactions(
                    reactant_side, library, forward_gen, filter_config
                )
                kept_records.extend(kept)
                decisions.extend(dec)
            write_decision_log(iter_dir / "decisions.tsv", decisions)
            report = retention_report(decisions)
            (iter_dir / "retention.txt").write_text(report.format())
            info["filter"] = {
                "kept": report.kept,
                "dropped": report.total - report.kept,
                "stages": dict(sorted(report.stage_counts.items())),
                "kept_fraction": report.kept_fraction,
            }
            if report.total != info["generated"]:
                raise PipelineError("decision count does not match candidates")

            # (5) deduplicate against real data, holdouts and earlier keeps.
            before = len(kept_records)
            kept_records = exclude_overlap(kept_records, real_records)
            kept_records = exclude_overlap(kept_records, holdout_records)
            kept_records = exclude_overlap(kept_records, kept_all)
            info["dedup_removed"] = before - len(kept_records)
            with open(iter_dir / "kept.txt", "w") as fh:
                for record in kept_records:
                    fh.write(
                        f"{record.reactants_key}>>{record.product_key}"
                        f"\t-\t{record.source_id}\n"
                    )
            kept_all.extend(kept_records)
            info["kept_new"] = len(kept_records)
            info["kept_total"] = len(kept_all)

            # (6) assemble the augmented corpus.
            corpus_dir = iter_dir / "corpus"
            corpus_manifest = assemble_corpus(
                real_records,
                kept_all,
                corpus_dir,
                real_ratio=config.real_ratio,
                insilico_ratio=config.insilico_ratio,
                n_variants=config.variants,
                seed=config.seed,
            )
            info["corpus"] = {
                "lines": corpus_manifest.lines,
                "real_selected": corpus_manifest.real_selected,
                "insilico_selected": corpus_manifest.insilico_selected,
            }

            if config.retrain_hook:
                hook = shlex.split(config.retrain_hook) + [str(corpus_dir)]
                result = subprocess.run(hook, capture_output=True, text=True)
                if result.returncode != 0:
                    raise PipelineError(
                        f"retrain hook failed: {result.stderr.strip()[:500]}"
                    )
                info["retrain_hook"] = "ok"

            info["seconds"] = round(time.perf_counter() - t0, 3)
            manifest.iterations.append(info)
            flush()
    except Exception:
        flush()
        raise

    # Post-boost libraries include the final iteration's kept reactions.
    final_dir = workdir / "final"
    final_dir.mkdir()
    final_library = TemplateLibrary(
        radius=config.radius,
        min_count=config.min_count,
        counts=dict(base_library.counts),
        signatures=dict(base_library.signatures),
    )
    attribution = _AttributionIndex(final_library)
    for record in kept_all:
        for text in attribution.matching_signatures(record):
            final_library.counts[text] += 1
    final_library.save(final_dir / "library.tsv", frozen_only=True)
    TemplateLibrary(
        radius=config.radius,
        min_count=config.generator_min_count,
        counts=final_library.counts,
        signatures=final_library.signatures,
    ).save(final_dir / "generator-library.tsv")
    manifest.final = {
        "ingest": real_report,
        "library_build": {
            "extracted": build_report.extracted,
            "skipped": build_report.skipped,
        },
        "kept_total": len(kept_all),
        "library_frozen": final_library.frozen_size(),
    }
    flush()
    return manifest


def run_eval(
    holdout: list[ReactionRecord],
    out_dir: Path | str,
    generator: Generator | None = None,
    predictions_path: Path | str | None = None,
    ks: tuple[int, ...] = DEFAULT_KS,
    rare_thresholds: tuple[int, ...] = (2, 5, 10),
    radius: int = 1,
) -> dict:
    """Evaluate retro predictions over a holdout set and write report files.

    Either a generator (queried at max(ks) per holdout product) or an
    existing predictions file must be given.  Reports cover overall top-k
    tables, rare-transformation breakdowns and per-class groups when class
    labels exist.
    """
    if not holdout:
        raise PipelineError("holdout set is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    truths = {r.source_id: r.reactants_key for r in holdout}
    if len(truths) != len(holdout):
        raise PipelineError("holdout source ids are not unique")

    if generator is not None:
        queries = [r.product_key for r in holdout]
        ranked = generator.generate_batch(queries, Direction.RETRO, max(ks))
        predictions = [
            PredictionSet.build(
                r.source_id, r.reactants_key, [c.output for c in cands]
            )
            for r, cands in zip(holdout, ranked)
        ]
        write_predictions(out_dir / "predictions.tsv", predictions)
    elif predictions_path is not None:
        from .evalkit import read_predictions

        predictions = read_predictions(predictions_path, truths)
    else:
        raise PipelineError("need a generator or a predictions file")

    tables: dict[str, MetricsTable] = {}
    overall = topk_table(predictions, ks)
    tables[""] = overall
    by_id = {p.query_id: p for p in predictions}

    rare_tables: dict[int, MetricsTable | None] = {}
    for threshold in rare_thresholds:
        subset, report = rare_subset(
            [r for r in holdout if r.atom_mapped], threshold, radius
        )
        if not subset:
            rare_tables[threshold] = None
            continue
        rows = [by_id[r.source_id] for r in subset]
        table = topk_table(rows, ks)
        rare_tables[threshold] = table
        tables[f"rare{threshold}"] = table

    labels = {
        r.source_id: r.class_label
        for r in holdout
        if r.class_label is not None
    }
    group_tables: dict = {}
    if labels:
        group_tables, _ = grouped_table(predictions, labels, ks)
        for label, table in group_tables.items():
            tables[f"group.{label}"] = table

    (out_dir / "metrics.txt").write_text(overall.format())
    write_kv_report(out_dir / "metrics.kv", tables)
    return {"overall": overall, "rare": rare_tables, "groups": group_tables}
