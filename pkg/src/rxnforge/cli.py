"""Command-line interface; every subcommand wraps one library operation with
file I/O so full runs can be replayed stage by stage.

Exit codes: 0 success, 1 usage, 2 data error, 3 adapter/protocol error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from .augment import (
    ReactionFormatError,
    assemble_corpus,
    format_reaction_line,
    ingest_reaction_smiles,
)
from .chemgraph import SmilesError, canonical_smiles, parse_smiles
from .evalkit import rare_subset
from .filterproc import (
    FilterAborted,
    FilterConfig,
    filter_reactions,
    read_candidates,
    retention_report,
    write_candidates,
    write_decision_log,
)
from .fingerprint import fingerprint_set, tanimoto
from .generator import (
    AdapterProtocolError,
    AdapterTransportError,
    Direction,
    GeneratorError,
    SubprocessAdapter,
    TemplateGenerator,
)
from .filterproc import CandidateReaction
from .pipeline import PipelineConfig, PipelineError, boost, run_eval
from .templates import TemplateLibrary, build_library

log = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _read_lines(path: str) -> list[str]:
    with open(path) as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]


def _write_lines(path: str | None, lines: list[str]):
    text = "".join(line + "\n" for line in lines)
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _load_library(path: str, radius: int, min_count: int) -> TemplateLibrary:
    return TemplateLibrary.load(path, radius=radius, min_count=min_count)


def _ingest_file(path: str, strict: bool = False):
    with open(path) as fh:
        return ingest_reaction_smiles(fh, strict=strict)


def cmd_canon(args) -> int:
    lines = _read_lines(args.input)
    _write_lines(args.output, [canonical_smiles(line.split("\t")[0]) for line in lines])
    return 0


def cmd_fp(args) -> int:
    def fps(path):
        out = []
        for line in _read_lines(path):
            mol = parse_smiles(line.split("\t")[0])
            out.append(
                fingerprint_set(mol.components(), args.radius, args.length)
            )
        return out

    first = fps(args.input)
    if args.tanimoto_with:
        second = fps(args.tanimoto_with)
        if len(first) != len(second):
            raise ReactionFormatError("fingerprint input files differ in length")
        _write_lines(
            args.output, [f"{tanimoto(a, b):.6f}" for a, b in zip(first, second)]
        )
    else:
        _write_lines(args.output, [fp.hex() for fp in first])
    return 0


def cmd_extract_templates(args) -> int:
    records, report = _ingest_file(args.corpus)
    library, build_report = build_library(
        [r for r in records if r.atom_mapped],
        radius=args.radius,
        min_count=args.min_count,
    )
    library.save(args.output, frozen_only=args.frozen_only)
    print(
        f"ingested {report.records} records; extracted {build_report.extracted} "
        f"templates ({len(library.counts)} unique, "
        f"{library.frozen_size()} above min_count={args.min_count}); "
        f"skipped {build_report.skipped}",
        file=sys.stderr,
    )
    return 0


def _generator_from_args(args, library_attr="library", min_count_attr="generator_min_count"):
    cmd = getattr(args, "cmd_generator", None)
    if cmd:
        return SubprocessAdapter(cmd.split())
    library_path = getattr(args, library_attr)
    if not library_path:
        raise UsageError("need --library or --cmd-generator")
    library = _load_library(
        library_path, args.radius, getattr(args, min_count_attr)
    )
    return TemplateGenerator(library)


def cmd_generate(args) -> int:
    generator = _generator_from_args(args)
    direction = Direction.parse(args.direction)
    rows = []
    candidates = []
    for lineno, line in enumerate(_read_lines(args.input), 1):
        parts = line.split("\t")
        smiles = parts[0]
        ident = parts[1] if len(parts) > 1 and parts[1] else f"u{lineno}"
        ranked = generator.generate(smiles, direction, args.k)
        for c in ranked:
            rows.append(f"{ident}\t{c.rank}\t{c.score:.6f}\t{c.output}")
        if args.as_candidates and ranked:
            best = ranked[0].output
            if direction is Direction.FORWARD:
                for pi, product in enumerate(best.split(".")):
                    cid = ident if "." not in best else f"{ident}.p{pi}"
                    candidates.append(
                        CandidateReaction(cid, product, smiles, "product")
                    )
            else:
                candidates.append(
                    CandidateReaction(ident, smiles, best, "reactants")
                )
    if args.as_candidates:
        if args.k != 1:
            raise UsageError("--as-candidates requires --k 1")
        write_candidates(args.output, candidates)
    else:
        _write_lines(args.output, rows)
    return 0


def cmd_filter(args) -> int:
    candidates = read_candidates(args.candidates)
    library = _load_library(args.library, args.radius, args.min_count)
    inverse = _generator_from_args(
        args, library_attr="inverse_library", min_count_attr="inverse_min_count"
    )
    # min-count applies to the loaded library's freeze, not the FilterConfig.
    config = FilterConfig(
        similarity_threshold=args.threshold,
        fingerprint_radius=args.fp_radius,
        fingerprint_length=args.fp_length,
    )
    try:
        kept, decisions = filter_reactions(candidates, library, inverse, config)
    except FilterAborted as exc:
        write_decision_log(args.decisions, exc.decisions)
        raise
    write_decision_log(args.decisions, decisions)
    if args.kept:
        _write_lines(
            args.kept,
            [
                f"{r.reactants_key}>>{r.product_key}\t-\t{r.source_id}"
                for r in kept
            ],
        )
    print(retention_report(decisions).format(), end="", file=sys.stderr)
    return 0


def cmd_augment(args) -> int:
    real, _ = _ingest_file(args.real)
    insilico = []
    if args.insilico:
        insilico, _ = _ingest_file(args.insilico)
    manifest = assemble_corpus(
        real,
        insilico,
        args.out,
        real_ratio=args.real_ratio,
        insilico_ratio=args.insilico_ratio,
        n_variants=args.variants,
        seed=args.seed,
    )
    print(
        f"wrote {manifest.lines} pairs "
        f"({manifest.real_selected} real + {manifest.insilico_selected} in-silico "
        f"x {manifest.n_variants} variants) to {args.out}",
        file=sys.stderr,
    )
    return 0


def cmd_eval(args) -> int:
    holdout, _ = _ingest_file(args.holdout)
    ks = tuple(int(k) for k in args.ks.split(","))
    generator = None
    if args.predictions is None:
        generator = _generator_from_args(args)
    results = run_eval(
        holdout,
        args.out,
        generator=generator,
        predictions_path=args.predictions,
        ks=ks,
        radius=args.radius,
    )
    print(results["overall"].format(), end="")
    return 0


def cmd_rare_subset(args) -> int:
    records, _ = _ingest_file(args.corpus)
    subset, report = rare_subset(
        [r for r in records if r.atom_mapped], args.threshold, args.radius
    )
    _write_lines(args.output, [format_reaction_line(r) for r in subset])
    print(
        f"{report.selected} of {len(records)} records are rare at "
        f"threshold {args.threshold}; {report.excluded_errors} skipped",
        file=sys.stderr,
    )
    return 0


def cmd_boost(args) -> int:
    overrides = {
        "workdir": Path(args.workdir) if args.workdir else None,
        "seed": args.seed,
        "iterations": args.iterations,
        "insilico_ratio": args.insilico_ratio,
    }
    config = PipelineConfig.from_ini(args.config, overrides)
    manifest = boost(config)
    if args.timing:
        for info in manifest.iterations:
            print(f"iter-{info['iteration']:02d}: {info['seconds']:.3f}s")
    print(
        f"boost complete: {manifest.final['kept_total']} in-silico reactions kept; "
        f"final frozen library {manifest.final['library_frozen']} templates; "
        f"manifest at {config.workdir / 'run-manifest.json'}",
        file=sys.stderr,
    )
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="rxnforge", description=__doc__)
    parser.add_argument("--timing", action="store_true", help="print wall-clock time")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("canon", help="canonicalize SMILES lines")
    p.add_argument("input")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_canon)

    p = sub.add_parser("fp", help="fingerprints or pairwise Tanimoto")
    p.add_argument("input")
    p.add_argument("--radius", type=int, default=2)
    p.add_argument("--length", type=int, default=2048)
    p.add_argument("--tanimoto-with", metavar="FILE")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_fp)

    p = sub.add_parser("extract-templates", help="build a template library")
    p.add_argument("corpus")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--radius", type=int, default=1)
    p.add_argument("--min-count", type=int, default=5)
    p.add_argument("--frozen-only", action="store_true")
    p.set_defaults(func=cmd_extract_templates)

    p = sub.add_parser("generate", help="generate candidates from molecules")
    p.add_argument("input")
    p.add_argument("--library")
    p.add_argument("--cmd-generator", metavar="COMMAND")
    p.add_argument("--radius", type=int, default=1)
    p.add_argument("--generator-min-count", type=int, default=0)
    p.add_argument("--direction", required=True, choices=["retro", "forward"])
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--as-candidates", action="store_true",
                   help="emit filter-ready candidates (k must be 1)")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("filter", help="filter candidate reactions")
    p.add_argument("--candidates", required=True)
    p.add_argument("--library", required=True)
    p.add_argument("--radius", type=int, default=1)
    p.add_argument("--min-count", type=int, default=5)
    p.add_argument("--inverse-library")
    p.add_argument("--inverse-min-count", type=int, default=0)
    p.add_argument("--cmd-generator", metavar="COMMAND",
                   help="external inverse generator")
    p.add_argument("--threshold", type=float, default=0.55)
    p.add_argument("--fp-radius", type=int, default=2)
    p.add_argument("--fp-length", type=int, default=2048)
    p.add_argument("--decisions", required=True)
    p.add_argument("--kept")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("augment", help="assemble a training corpus")
    p.add_argument("--real", required=True)
    p.add_argument("--insilico")
    p.add_argument("--out", required=True)
    p.add_argument("--real-ratio", type=float, default=1.0)
    p.add_argument("--insilico-ratio", type=float, default=1.0)
    p.add_argument("--variants", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("eval", help="top-k evaluation over a holdout set")
    p.add_argument("--holdout", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--predictions")
    p.add_argument("--library")
    p.add_argument("--cmd-generator", metavar="COMMAND")
    p.add_argument("--radius", type=int, default=1)
    p.add_argument("--generator-min-count", type=int, default=0)
    p.add_argument("--ks", default="1,3,5,10,20,50")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rare-subset", help="rare-transformation subset")
    p.add_argument("--corpus", required=True)
    p.add_argument("--threshold", type=int, required=True)
    p.add_argument("--radius", type=int, default=1)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_rare_subset)

    p = sub.add_parser("boost", help="run the full self-boosting loop")
    p.add_argument("--config", required=True)
    p.add_argument("--workdir")
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--insilico-ratio", type=float)
    p.set_defaults(func=cmd_boost)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    started = time.perf_counter()
    try:
        code = args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (AdapterTransportError, AdapterProtocolError, FilterAborted) as exc:
        print(f"adapter error: {exc}", file=sys.stderr)
        return 3
    except (
        SmilesError,
        ReactionFormatError,
        GeneratorError,
        PipelineError,
        ValueError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.timing:
        print(f"total: {time.perf_counter() - started:.3f}s", file=sys.stderr)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
