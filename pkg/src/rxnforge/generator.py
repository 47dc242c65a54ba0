"""Generation contract: ranked candidates from a template-based generator or
an external model speaking a line-oriented wire protocol."""

from __future__ import annotations

import enum
import logging
import math
import subprocess
from dataclasses import dataclass
from pathlib import Path

from .chemgraph import SmilesError, canonical_smiles
from .templates import TemplateLibrary, apply_template

log = logging.getLogger(__name__)


class Direction(enum.Enum):
    RETRO = "retro"
    FORWARD = "forward"

    @staticmethod
    def parse(text: str) -> "Direction":
        try:
            return Direction(text)
        except ValueError:
            raise GeneratorError(f"unknown direction {text!r}") from None


@dataclass(frozen=True)
class GenerationCandidate:
    """One ranked output; scores compare only within a single query."""

    output: str
    score: float
    rank: int


class GeneratorError(Exception):
    pass


class AdapterTransportError(GeneratorError):
    """The external endpoint could not be reached or died mid-batch."""


class AdapterProtocolError(GeneratorError):
    """The endpoint answered, but violated the wire format."""


class Generator:
    """Base interface; ``generate`` must be pure and deterministic."""

    def generate(
        self, input_smiles: str, direction: Direction, k: int
    ) -> list[GenerationCandidate]:
        return self.generate_batch([input_smiles], direction, k)[0]

    def generate_batch(
        self, inputs: list[str], direction: Direction, k: int
    ) -> list[list[GenerationCandidate]]:
        raise NotImplementedError


def _ranked(scored: dict[str, float], k: int) -> list[GenerationCandidate]:
    ordered = sorted(scored.items(), key=lambda kv: (-kv[1], kv[0]))
    return [
        GenerationCandidate(output=o, score=s, rank=i + 1)
        for i, (o, s) in enumerate(ordered[:k])
    ]


class TemplateGenerator(Generator):
    """Applies every library template in the requested direction; a
    candidate scores the log of its template's count (best duplicate wins).

    Templates whose source-pattern element profile is not contained in the
    input's are screened out before the subgraph search.
    """

    def __init__(self, library: TemplateLibrary):
        entries = library.frozen()
        if not entries:
            raise GeneratorError("template generator needs a frozen non-empty library")
        self._entries = entries
        from collections import Counter
        from .chemgraph import parse_smiles

        self._profiles: dict[str, list[Counter]] = {"retro": [], "forward": []}
        for sig, _ in entries:
            product = parse_smiles(sig.product_pattern)
            reactants = parse_smiles(".".join(sig.reactant_patterns))
            for key, pattern in (("retro", product), ("forward", reactants)):
                self._profiles[key].append(
                    Counter(
                        (a.element, a.aromatic, a.charge) for a in pattern.atoms
                    )
                )

    def generate(self, input_smiles, direction, k):
        if k < 1:
            raise GeneratorError("k must be >= 1")
        try:
            canonical = canonical_smiles(input_smiles)
        except SmilesError as exc:
            raise GeneratorError(f"unparseable input: {exc}") from exc
        from collections import Counter
        from .chemgraph import parse_smiles

        mol = parse_smiles(canonical)
        profile = Counter((a.element, a.aromatic, a.charge) for a in mol.atoms)
        scored: dict[str, float] = {}
        for (sig, count), pattern_profile in zip(
            self._entries, self._profiles[direction.value]
        ):
            if any(profile[key] < n for key, n in pattern_profile.items()):
                continue
            score = math.log(count)
            for output in apply_template(sig, mol, direction.value):
                if scored.get(output, float("-inf")) < score:
                    scored[output] = score
        return _ranked(scored, k)

    def generate_batch(self, inputs, direction, k):
        return [self.generate(s, direction, k) for s in inputs]


# --------------------------------------------------------------------------
# External adapter wire format
# --------------------------------------------------------------------------


def format_request_line(req_id: str, direction: Direction, k: int, smiles: str) -> str:
    return f"{req_id}\t{direction.value}\t{k}\t{smiles}"


def parse_request_line(line: str) -> tuple[str, Direction, int, str]:
    parts = line.split("\t")
    if len(parts) != 4:
        raise AdapterProtocolError(f"bad request line: {line!r}")
    return parts[0], Direction.parse(parts[1]), int(parts[2]), parts[3]


class _ResponseValidator:
    """Checks id/rank/score discipline and canonicalizes outputs.

    Unparseable SMILES lines are dropped (counted); rank gaps, unknown ids,
    rank overruns and score inversions abort the batch.
    """

    def __init__(self, expected_ids: list[str], k: int):
        self.k = k
        self.expected = set(expected_ids)
        self.raw: dict[str, list[tuple[int, float, str]]] = {i: [] for i in expected_ids}
        self.dropped_lines = 0

    def feed(self, line: str):
        parts = line.split("\t")
        if len(parts) != 4:
            raise AdapterProtocolError(f"bad response line: {line!r}")
        resp_id, rank_s, score_s, smiles = parts
        if resp_id not in self.expected:
            raise AdapterProtocolError(f"response for unknown id {resp_id!r}")
        try:
            rank = int(rank_s)
            score = float(score_s)
        except ValueError as exc:
            raise AdapterProtocolError(f"bad rank/score in {line!r}") from exc
        self.raw[resp_id].append((rank, score, smiles))

    def results(self) -> dict[str, list[GenerationCandidate]]:
        out: dict[str, list[GenerationCandidate]] = {}
        for resp_id, rows in self.raw.items():
            ranks = [r for r, _, _ in rows]
            if ranks != list(range(1, len(ranks) + 1)):
                raise AdapterProtocolError(
                    f"id {resp_id}: ranks {ranks} are not contiguous from 1"
                )
            if len(ranks) > self.k:
                raise AdapterProtocolError(
                    f"id {resp_id}: {len(ranks)} candidates for k={self.k}"
                )
            scores = [s for _, s, _ in rows]
            if any(a < b for a, b in zip(scores, scores[1:])):
                raise AdapterProtocolError(
                    f"id {resp_id}: scores increase with rank"
                )
            seen: set[str] = set()
            candidates: list[GenerationCandidate] = []
            for _, score, smiles in rows:
                try:
                    canonical = canonical_smiles(smiles)
                except SmilesError:
                    self.dropped_lines += 1
                    log.debug("dropping unparseable candidate %r", smiles)
                    continue
                if canonical in seen:
                    continue
                seen.add(canonical)
                candidates.append(
                    GenerationCandidate(canonical, score, len(candidates) + 1)
                )
            out[resp_id] = candidates
        return out


class SubprocessAdapter(Generator):
    """Spawns a command per batch; requests go to stdin, responses come from
    stdout, both terminated by one empty line."""

    def __init__(self, command: list[str]):
        if not command:
            raise GeneratorError("empty adapter command")
        self.command = list(command)
        self.dropped_lines = 0

    def generate_batch(self, inputs, direction, k):
        ids = [f"q{i}" for i in range(len(inputs))]
        request = "".join(
            format_request_line(i, direction, k, s) + "\n"
            for i, s in zip(ids, inputs)
        )
        try:
            proc = subprocess.run(
                self.command,
                input=request + "\n",
                capture_output=True,
                text=True,
                timeout=600,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise AdapterTransportError(f"adapter spawn failed: {exc}") from exc
        if proc.returncode != 0:
            raise AdapterTransportError(
                f"adapter exited with {proc.returncode}: {proc.stderr.strip()[:500]}"
            )
        validator = _ResponseValidator(ids, k)
        saw_terminator = False
        for line in proc.stdout.splitlines():
            if line == "":
                saw_terminator = True
                break
            validator.feed(line)
        if not saw_terminator:
            raise AdapterTransportError("adapter response missing terminator")
        by_id = validator.results()
        self.dropped_lines += validator.dropped_lines
        return [by_id[i] for i in ids]


class FilePairAdapter(Generator):
    """Writes a request file and reads an already-produced response file."""

    def __init__(self, request_path: Path | str, response_path: Path | str):
        self.request_path = Path(request_path)
        self.response_path = Path(response_path)
        self.dropped_lines = 0

    def generate_batch(self, inputs, direction, k):
        ids = [f"q{i}" for i in range(len(inputs))]
        with open(self.request_path, "w") as fh:
            for i, s in zip(ids, inputs):
                fh.write(format_request_line(i, direction, k, s) + "\n")
        if not self.response_path.exists():
            raise AdapterTransportError(
                f"response file missing: {self.response_path}"
            )
        validator = _ResponseValidator(ids, k)
        for line in self.response_path.read_text().splitlines():
            if line == "":
                break
            validator.feed(line)
        by_id = validator.results()
        self.dropped_lines += validator.dropped_lines
        return [by_id[i] for i in ids]
