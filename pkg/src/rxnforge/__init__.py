"""rxnforge: in-silico reaction generation, filtering and augmentation for
retrosynthesis, with a self-contained SMILES/graph/template toolkit."""

from .chemgraph import (
    Atom,
    Bond,
    MoleculeGraph,
    SmilesError,
    canonical_smiles,
    canonicalize,
    is_isomorphic,
    largest_fragment,
    parse_smiles,
    write_smiles,
)
from .fingerprint import FingerprintBitset, fingerprint, fingerprint_set, tanimoto
from .augment import (
    Provenance,
    ReactionRecord,
    SequencePair,
    assemble_corpus,
    exclude_overlap,
    ingest_reaction_smiles,
    rsmiles_pairs,
)
from .templates import (
    TemplateLibrary,
    TemplateSignature,
    apply_template,
    build_library,
    extract_template,
    find_embeddings,
    match_template,
    reaction_center_maps,
)
from .generator import (
    Direction,
    GenerationCandidate,
    Generator,
    SubprocessAdapter,
    TemplateGenerator,
)
from .filterproc import (
    CandidateReaction,
    FilterConfig,
    FilterDecision,
    filter_reactions,
    retention_report,
)
from .evalkit import (
    MetricsTable,
    PredictionSet,
    exact_match,
    grouped_table,
    maxfrag_match,
    rare_subset,
    topk_table,
)
from .pipeline import PipelineConfig, RunManifest, boost, run_eval

__version__ = "0.1.0"

__all__ = [
    "Atom",
    "Bond",
    "CandidateReaction",
    "Direction",
    "FilterConfig",
    "FilterDecision",
    "FingerprintBitset",
    "GenerationCandidate",
    "Generator",
    "MetricsTable",
    "MoleculeGraph",
    "PipelineConfig",
    "PredictionSet",
    "Provenance",
    "ReactionRecord",
    "RunManifest",
    "SequencePair",
    "SmilesError",
    "SubprocessAdapter",
    "TemplateGenerator",
    "TemplateLibrary",
    "TemplateSignature",
    "apply_template",
    "assemble_corpus",
    "boost",
    "build_library",
    "canonical_smiles",
    "canonicalize",
    "exact_match",
    "exclude_overlap",
    "extract_template",
    "filter_reactions",
    "find_embeddings",
    "fingerprint",
    "fingerprint_set",
    "grouped_table",
    "ingest_reaction_smiles",
    "is_isomorphic",
    "largest_fragment",
    "match_template",
    "maxfrag_match",
    "parse_smiles",
    "rare_subset",
    "reaction_center_maps",
    "retention_report",
    "rsmiles_pairs",
    "run_eval",
    "tanimoto",
    "topk_table",
    "write_smiles",
]
