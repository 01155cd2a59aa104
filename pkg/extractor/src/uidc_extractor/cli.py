"""Command line: extract trace files and screen languages.

The emitted traces follow the uidc interchange format exactly; validate them
with ``uidc validate trace.jsonl``.
"""

from __future__ import annotations

import argparse
import csv
import sys

from .backends import JobError, build_backend
from .datasets import read_dataset
from .emit import ExtractionJob, score_conditions
from .screen import perplexity_screen


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uidc-extract",
        description="Score captions or visual stories under context conditions; emit trace files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_extract = sub.add_parser("extract", help="score a dataset and write a trace file")
    p_extract.add_argument("--dataset", choices=["captions", "vist"], required=True)
    p_extract.add_argument("--input", required=True, help="newline-delimited JSON input")
    p_extract.add_argument("--model", default="mock",
                           help="model identifier (hf backend) or 'mock'")
    p_extract.add_argument("--backend", choices=["mock", "hf"], default=None,
                           help="default: 'mock' when --model is mock, else 'hf'")
    p_extract.add_argument("--conditions", default="U,P", help="comma list, e.g. U,P,D,PD")
    p_extract.add_argument("--ws-correction", choices=["exact", "none"], default="exact")
    p_extract.add_argument("--segmenter", default="whitespace",
                           help="segmenter for all languages (see docs to register more)")
    p_extract.add_argument("--device", default="cpu")
    p_extract.add_argument("--batch-size", type=int, default=8)
    p_extract.add_argument("--max-stories", type=int, default=None)
    p_extract.add_argument("--out", required=True)

    p_screen = sub.add_parser("screen", help="character-perplexity language screen")
    p_screen.add_argument("--dataset", choices=["captions", "vist"], default="vist")
    p_screen.add_argument("--input", required=True)
    p_screen.add_argument("--model", default="mock")
    p_screen.add_argument("--backend", choices=["mock", "hf"], default=None)
    p_screen.add_argument("--threshold", type=float, default=0.9)
    p_screen.add_argument("--out", default=None, help="CSV report path (default: stdout)")
    return parser


def _backend_for(args) -> object:
    name = args.backend or ("mock" if args.model == "mock" else "hf")
    if name == "hf":
        return build_backend("hf", model_id=args.model, device=getattr(args, "device", "cpu"))
    return build_backend(name)


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "extract":
            backend = _backend_for(args)
            job = ExtractionJob(
                dataset=args.dataset,
                model=args.model,
                conditions=tuple(c for c in args.conditions.split(",") if c),
                whitespace_correction=args.ws_correction,
                segmenter_by_language={"*": args.segmenter},
                device=args.device,
                batch_size=args.batch_size,
                out_path=args.out,
            )
            stories = read_dataset(args.dataset, args.input)
            if args.max_stories is not None:
                stories = stories[: args.max_stories]
            written = score_conditions(stories, job, backend)
            print(f"wrote {written} stories to {args.out}")
            return 0
        if args.command == "screen":
            backend = _backend_for(args)
            control = build_backend("random-control")
            stories = read_dataset(args.dataset, args.input)
            reports = perplexity_screen(stories, backend, control, args.threshold)
            rows = [
                [r.language, r.n_stories, r.n_chars, repr(r.ppl_model),
                 repr(r.ppl_control), repr(r.ratio), "keep" if r.keep else "drop"]
                for r in reports
            ]
            header = ["language", "n_stories", "n_chars", "ppl_model",
                      "ppl_control", "ratio", "recommendation"]
            if args.out:
                with open(args.out, "w", encoding="utf-8", newline="") as handle:
                    writer = csv.writer(handle, lineterminator="\n")
                    writer.writerow(header)
                    writer.writerows(rows)
            else:
                writer = csv.writer(sys.stdout, lineterminator="\n")
                writer.writerow(header)
                writer.writerows(rows)
            return 0
        raise JobError(f"unknown command {args.command!r}")
    except (JobError, OSError) as exc:
        print(f"uidc-extract: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
