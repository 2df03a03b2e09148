"""``semb-export <job.json> [--documents]`` — run one export job.

Prints a one-line summary on success; failures exit nonzero with a single
``error: <Type>: <message>`` line on stderr.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ExportError
from .export import export_document_embeddings, export_embeddings
from .job import load_job

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="semb-export",
        description="Embed a corpus with a sentence-encoder model into a .semb file",
    )
    parser.add_argument("job", help="JSON job file (see semb_exporter.job)")
    parser.add_argument(
        "--documents",
        action="store_true",
        help="one whole-document vector per book instead of per-sentence vectors",
    )
    args = parser.parse_args(argv)

    try:
        job = load_job(args.job)
        run = export_document_embeddings if args.documents else export_embeddings
        manifest = run(job)
    except ExportError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(
        f"records={manifest['records']} sentences={manifest['sentences']} "
        f"dim={manifest['dim']} skipped={len(manifest['skipped'])} "
        f"revision={manifest['revision'][:12]}"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
