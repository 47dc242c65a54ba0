"""Adapter endpoint stubs for testing the wire protocol.

Run as ``python -m rxnforge.stubs MODE``; reads request lines from stdin
until an empty line, answers on stdout, terminates with an empty line.

Modes:
  echo       every query answers with its own input at rank 1
  rank-gap   emits ranks 1 and 3 (protocol violation)
  bad-id     answers under an unknown query id (protocol violation)
  bad-smiles emits 3 candidates with an unparseable SMILES at rank 2
  crash      exits non-zero without answering (transport failure)
"""

from __future__ import annotations

import sys


def _read_requests(stream):
    requests = []
    for line in stream:
        line = line.rstrip("\n")
        if line == "":
            break
        req_id, direction, k, smiles = line.split("\t")
        requests.append((req_id, direction, int(k), smiles))
    return requests


def respond(mode: str, requests, out):
    for req_id, _direction, _k, smiles in requests:
        if mode == "echo":
            out.write(f"{req_id}\t1\t0.0\t{smiles}\n")
        elif mode == "rank-gap":
            out.write(f"{req_id}\t1\t0.0\t{smiles}\n")
            out.write(f"{req_id}\t3\t-1.0\t{smiles}\n")
        elif mode == "bad-id":
            out.write(f"bogus-{req_id}\t1\t0.0\t{smiles}\n")
        elif mode == "bad-smiles":
            out.write(f"{req_id}\t1\t0.0\t{smiles}\n")
            out.write(f"{req_id}\t2\t-1.0\tnot_a_smiles((\n")
            out.write(f"{req_id}\t3\t-2.0\tCCO\n")
        else:
            raise SystemExit(f"unknown stub mode {mode!r}")
    out.write("\n")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print(__doc__, file=sys.stderr)
        return 2
    mode = argv[0]
    if mode == "crash":
        print("stub crashing on purpose", file=sys.stderr)
        return 17
    requests = _read_requests(sys.stdin)
    respond(mode, requests, sys.stdout)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
