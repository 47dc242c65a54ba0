"""Quality filter for in-silico reactions: validity screen, template
matching, then round-trip similarity against the original unpaired side."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable

from .augment import Provenance, ReactionRecord
from .chemgraph import SmilesError, parse_smiles
from .fingerprint import fingerprint_set, tanimoto
from .generator import AdapterTransportError, Direction, Generator
from .templates import TemplateLibrary, match_template

log = logging.getLogger(__name__)

STAGES = ("validity", "template_match", "similarity_pass", "similarity_fail")


@dataclass(frozen=True)
class FilterConfig:
    similarity_threshold: float = 0.55
    template_min_count: int = 5
    fingerprint_radius: int = 2
    fingerprint_length: int = 2048

    def __post_init__(self):
        if not 0.0 <= self.similarity_threshold <= 1.0:
            raise ValueError("similarity_threshold must be in [0,1]")
        if self.template_min_count < 1:
            raise ValueError("template_min_count must be positive")


@dataclass(frozen=True)
class CandidateReaction:
    """A raw in-silico reaction; ``insilico_side`` says which side the
    generator produced (the other side is the original unpaired data)."""

    id: str
    product_smiles: str
    reactants_smiles: str
    insilico_side: str  # "product" | "reactants"

    def __post_init__(self):
        if self.insilico_side not in ("product", "reactants"):
            raise ValueError(f"bad insilico_side {self.insilico_side!r}")

    @property
    def provenance(self) -> Provenance:
        if self.insilico_side == "product":
            return Provenance.IN_SILICO_FROM_REACTANTS
        return Provenance.IN_SILICO_FROM_PRODUCTS


@dataclass(frozen=True)
class FilterDecision:
    reaction_id: str
    verdict: str  # kept | dropped
    stage: str
    matched_template: str | None = None
    pseudo_output: str | None = None
    similarity: float | None = None


class FilterAborted(RuntimeError):
    """Inverse-generator transport failure; carries the decisions made so far."""

    def __init__(self, message: str, decisions: list[FilterDecision]):
        super().__init__(message)
        self.decisions = decisions


def _parse_candidate(candidate: CandidateReaction) -> ReactionRecord | None:
    try:
        product_graph = parse_smiles(candidate.product_smiles)
        products = product_graph.components()
        if len(products) != 1:
            return None
        reactants = tuple(parse_smiles(candidate.reactants_smiles).components())
        return ReactionRecord(
            product=products[0],
            reactants=reactants,
            provenance=candidate.provenance,
            atom_mapped=False,
            source_id=candidate.id,
        )
    except (SmilesError, ValueError):
        return None


def filter_reactions(
    candidates: Iterable[CandidateReaction],
    library: TemplateLibrary,
    inverse_generator: Generator,
    config: FilterConfig = FilterConfig(),
) -> tuple[list[ReactionRecord], list[FilterDecision]]:
    """Run the three-stage filter over candidates, in input order.

    Stage 0 drops candidates whose SMILES do not parse; stage 1 keeps
    candidates matching any frozen-library template; stage 2 regenerates the
    pseudo counterpart of the in-silico side with the opposite-direction
    generator at k=1 and keeps the candidate iff the Tanimoto similarity
    between the pseudo output and the original unpaired side reaches the
    threshold.  Exactly one decision per candidate; kept reactions are
    deduplicated afterwards (first occurrence wins).  A transport failure of
    the inverse generator raises :class:`FilterAborted` carrying the partial
    decision list.
    """
    frozen = library.frozen()
    decisions: list[FilterDecision] = []
    kept: list[ReactionRecord] = []
    seen_keys: set[tuple[str, str]] = set()

    for candidate in candidates:
        record = _parse_candidate(candidate)
        if record is None:
            decisions.append(
                FilterDecision(candidate.id, "dropped", "validity")
            )
            continue

        matched: str | None = None
        for sig, _count in frozen:
            if match_template(record, sig):
                matched = sig.text
                break
        if matched is not None:
            decisions.append(
                FilterDecision(
                    candidate.id, "kept", "template_match", matched_template=matched
                )
            )
            if record.reaction_key not in seen_keys:
                seen_keys.add(record.reaction_key)
                kept.append(record)
            continue

        if candidate.insilico_side == "product":
            query = record.product_key
            direction = Direction.RETRO
            original = record.reactants
        else:
            query = record.reactants_key
            direction = Direction.FORWARD
            original = (record.product,)
        try:
            pseudo = inverse_generator.generate(query, direction, k=1)
        except AdapterTransportError as exc:
            raise FilterAborted(str(exc), decisions) from exc
        if not pseudo:
            decisions.append(
                FilterDecision(
                    candidate.id, "dropped", "similarity_fail", similarity=0.0
                )
            )
            continue
        pseudo_out = pseudo[0].output
        pseudo_fp = fingerprint_set(
            parse_smiles(pseudo_out).components(),
            config.fingerprint_radius,
            config.fingerprint_length,
        )
        original_components = [
            c for mol in original for c in mol.components()
        ]
        original_fp = fingerprint_set(
            original_components,
            config.fingerprint_radius,
            config.fingerprint_length,
        )
        similarity = tanimoto(pseudo_fp, original_fp)
        if similarity >= config.similarity_threshold:
            decisions.append(
                FilterDecision(
                    candidate.id,
                    "kept",
                    "similarity_pass",
                    pseudo_output=pseudo_out,
                    similarity=similarity,
                )
            )
            if record.reaction_key not in seen_keys:
                seen_keys.add(record.reaction_key)
                kept.append(record)
        else:
            decisions.append(
                FilterDecision(
                    candidate.id,
                    "dropped",
                    "similarity_fail",
                    pseudo_output=pseudo_out,
                    similarity=similarity,
                )
            )
    return kept, decisions


@dataclass
class RetentionReport:
    total: int
    stage_counts: dict
    kept: int

    @property
    def kept_fraction(self) -> float | None:
        return None if self.total == 0 else self.kept / self.total

    def stage_fractions(self) -> dict:
        if self.total == 0:
            return {}
        return {s: n / self.total for s, n in self.stage_counts.items()}

    def format(self) -> str:
        lines = [f"candidates\t{self.total}"]
        for stage in STAGES:
            n = self.stage_counts.get(stage, 0)
            frac = 0.0 if self.total == 0 else n / self.total
            lines.append(f"{stage}\t{n}\t{frac:.6f}")
        kept_frac = 0.0 if self.total == 0 else self.kept / self.total
        lines.append(f"kept\t{self.kept}\t{kept_frac:.6f}")
        return "\n".join(lines) + "\n"


def retention_report(decisions: Iterable[FilterDecision]) -> RetentionReport:
    """Per-stage counts and fractions; kept = template_match + similarity_pass."""
    counts: dict[str, int] = {}
    total = 0
    kept = 0
    for decision in decisions:
        total += 1
        counts[decision.stage] = counts.get(decision.stage, 0) + 1
        if decision.verdict == "kept":
            kept += 1
    return RetentionReport(total=total, stage_counts=counts, kept=kept)


# --------------------------------------------------------------------------
# File formats
# --------------------------------------------------------------------------


def write_candidates(path, candidates: Iterable[CandidateReaction]):
    with open(path, "w") as fh:
        for c in candidates:
            fh.write(
                f"{c.id}\t{c.insilico_side}\t{c.product_smiles}\t{c.reactants_smiles}\n"
            )


def read_candidates(path) -> list[CandidateReaction]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            cid, side, product, reactants = line.split("\t")
            out.append(CandidateReaction(cid, product, reactants, side))
    return out


def write_decision_log(path, decisions: Iterable[FilterDecision]):
    """One line per candidate, input order:
    id, verdict, stage, similarity|-, matched_template|-, pseudo_output|-."""
    with open(path, "w") as fh:
        for d in decisions:
            similarity = "-" if d.similarity is None else f"{d.similarity:.6f}"
            template = d.matched_template or "-"
            pseudo = d.pseudo_output or "-"
            fh.write(
                f"{d.reaction_id}\t{d.verdict}\t{d.stage}\t"
                f"{similarity}\t{template}\t{pseudo}\n"
            )


def read_decision_log(path) -> list[FilterDecision]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            rid, verdict, stage, similarity, template, pseudo = line.split("\t")
            out.append(
                FilterDecision(
                    rid,
                    verdict,
                    stage,
                    matched_template=None if template == "-" else template,
                    pseudo_output=None if pseudo == "-" else pseudo,
                    similarity=None if similarity == "-" else float(similarity),
                )
            )
    return out
