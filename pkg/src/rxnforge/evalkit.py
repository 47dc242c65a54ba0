"""Top-k exact and MaxFrag accuracy, rare-transformation subsets, and
per-group breakdowns."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable

from .augment import ReactionRecord
from .chemgraph import (
    SmilesError,
    canonical_smiles,
    canonicalize,
    largest_fragment,
    parse_smiles,
)
from .templates import ExtractionError, extract_template

log = logging.getLogger(__name__)

DEFAULT_KS = (1, 3, 5, 10, 20, 50)


def reactant_set_key(smiles: str) -> str:
    """Order-insensitive canonical key of a dot-joined reactant set."""
    mol = parse_smiles(smiles)
    return ".".join(sorted(canonicalize(c) for c in mol.components()))


def exact_match(pred: str, truth: str) -> bool:
    """Multiset equality of canonical components (inputs are canonical keys)."""
    return pred == truth


def maxfrag_key(smiles: str) -> str:
    return canonicalize(largest_fragment(parse_smiles(smiles)))


def maxfrag_match(pred: str, truth: str) -> bool:
    """Largest fragments agree (heavy-atom count, ties by canonical string)."""
    return maxfrag_key(pred) == maxfrag_key(truth)


@dataclass
class PredictionSet:
    """One query: canonical ground truth plus ranked canonical candidates."""

    query_id: str
    ground_truth: str
    candidates: list[str] = field(default_factory=list)
    dropped: int = 0

    @staticmethod
    def build(
        query_id: str, ground_truth: str, raw_candidates: Iterable[str]
    ) -> "PredictionSet":
        """Canonicalize, drop unparseable candidates (counted), dedupe."""
        truth = reactant_set_key(ground_truth)
        seen: set[str] = set()
        keep: list[str] = []
        dropped = 0
        for raw in raw_candidates:
            try:
                key = reactant_set_key(raw)
            except SmilesError:
                dropped += 1
                continue
            if key in seen:
                continue
            seen.add(key)
            keep.append(key)
        return PredictionSet(query_id, truth, keep, dropped)

    def exact_hit_rank(self) -> int | None:
        for i, candidate in enumerate(self.candidates, 1):
            if exact_match(candidate, self.ground_truth):
                return i
        return None

    def maxfrag_hit_rank(self) -> int | None:
        truth_frag = maxfrag_key(self.ground_truth)
        for i, candidate in enumerate(self.candidates, 1):
            if maxfrag_key(candidate) == truth_frag:
                return i
        return None


@dataclass
class MetricsTable:
    ks: tuple[int, ...]
    n: int
    exact: dict
    maxfrag: dict

    def format(self) -> str:
        header = "metric  " + "".join(f"k={k:<7}" for k in self.ks)
        rows = [header]
        for name, table in (("exact", self.exact), ("maxfrag", self.maxfrag)):
            rows.append(
                f"{name:<8}" + "".join(f"{table[k]:<9.4f}" for k in self.ks)
            )
        rows.append(f"n={self.n}")
        return "\n".join(rows) + "\n"

    def kv_lines(self, prefix: str = "") -> list[str]:
        lines = [f"{prefix}n={self.n}"]
        for name, table in (("exact", self.exact), ("maxfrag", self.maxfrag)):
            for k in self.ks:
                lines.append(f"{prefix}{name}.{k}={table[k]:.6f}")
        return lines


def topk_table(
    predictions: list[PredictionSet], ks: Iterable[int] = DEFAULT_KS
) -> MetricsTable:
    """Fraction of queries whose truth appears within the top k, per metric.

    Queries with empty candidate lists count as misses.
    """
    ks = tuple(ks)
    if list(ks) != sorted(ks):
        raise ValueError("ks must be sorted ascending")
    if not predictions:
        raise ValueError("empty prediction list")
    exact_ranks = [p.exact_hit_rank() for p in predictions]
    maxfrag_ranks = [p.maxfrag_hit_rank() for p in predictions]
    n = len(predictions)

    def accuracy(ranks, k):
        return sum(1 for r in ranks if r is not None and r <= k) / n

    return MetricsTable(
        ks=ks,
        n=n,
        exact={k: accuracy(exact_ranks, k) for k in ks},
        maxfrag={k: accuracy(maxfrag_ranks, k) for k in ks},
    )


@dataclass
class RareSubsetReport:
    threshold: int
    selected: int
    excluded_errors: int


def rare_subset(
    corpus: list[ReactionRecord], freq_threshold: int, radius: int = 1
) -> tuple[list[ReactionRecord], RareSubsetReport]:
    """Records whose template occurs fewer than ``freq_threshold`` times in
    this corpus; extraction failures are excluded and counted."""
    if freq_threshold < 1:
        raise ValueError("freq_threshold must be >= 1")
    signatures: dict[int, str] = {}
    counts: dict[str, int] = {}
    errors = 0
    for i, record in enumerate(corpus):
        try:
            sig = extract_template(record, radius)
        except ExtractionError:
            errors += 1
            continue
        signatures[i] = sig.text
        counts[sig.text] = counts.get(sig.text, 0) + 1
    subset = [
        record
        for i, record in enumerate(corpus)
        if i in signatures and counts[signatures[i]] < freq_threshold
    ]
    return subset, RareSubsetReport(freq_threshold, len(subset), errors)


def grouped_table(
    predictions: list[PredictionSet],
    labels: dict,
    ks: Iterable[int] = DEFAULT_KS,
) -> tuple[dict, MetricsTable]:
    """Per-group metric tables plus the overall table.

    Unlabeled queries fall into the "unlabeled" group; the overall equals the
    size-weighted mean of the groups by construction.
    """
    groups: dict[str, list[PredictionSet]] = {}
    for prediction in predictions:
        label = str(labels.get(prediction.query_id, "unlabeled"))
        groups.setdefault(label, []).append(prediction)
    per_group = {
        label: topk_table(rows, ks) for label, rows in sorted(groups.items())
    }
    return per_group, topk_table(predictions, ks)


def relative_improvement(a: float, b: float) -> float:
    """(a - b) / b; how much ``a`` improves over baseline ``b``."""
    if b == 0:
        raise ValueError("baseline accuracy is zero")
    return (a - b) / b


# --------------------------------------------------------------------------
# Files
# --------------------------------------------------------------------------


def write_predictions(path, predictions: list[PredictionSet]):
    with open(path, "w") as fh:
        for p in predictions:
            for rank, smiles in enumerate(p.candidates, 1):
                fh.write(f"{p.query_id}\t{rank}\t{smiles}\n")


def read_predictions(path, truths: dict) -> list[PredictionSet]:
    """Load `id<TAB>rank<TAB>smiles` rows against a {query_id: truth} map.

    Every id in ``truths`` yields a PredictionSet (possibly empty), keeping
    denominators equal across models.
    """
    rows: dict[str, list[tuple[int, str]]] = {qid: [] for qid in truths}
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            qid, rank, smiles = line.split("\t")
            if qid not in rows:
                log.warning("prediction for unknown query %s ignored", qid)
                continue
            rows[qid].append((int(rank), smiles))
    out = []
    for qid, truth in truths.items():
        ranked = [s for _, s in sorted(rows[qid])]
        out.append(PredictionSet.build(qid, truth, ranked))
    return out


def write_kv_report(path, tables: dict):
    """`metric.k=value` lines; ``tables`` maps prefix -> MetricsTable."""
    lines: list[str] = []
    for prefix, table in tables.items():
        full_prefix = f"{prefix}." if prefix else ""
        lines.extend(table.kv_lines(full_prefix))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
