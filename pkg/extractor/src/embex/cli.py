"""embex command line: extract-images and extract-classes.

Mirrors the training toolkit's conventions: exit 0 on success, 1 on
validation/backbone errors, 2 on I/O errors; output paths on stdout,
diagnostics on stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .backbones import BackboneError, image_backbone, text_encoder
from .extract import ExtractJob, ManifestError, extract_class_embeddings, extract_image_embeddings


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="embex", description="frozen-backbone embedding exporter")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract-images", help="manifest of images -> embedding records JSONL")
    p.add_argument("--manifest", required=True, help='JSONL {"id","path","positive","labels"?}')
    p.add_argument("--backbone", default="clip:openai/clip-vit-base-patch32",
                   help="clip:<hf-id> or toy-pixel:<dim>")
    p.add_argument("--out", required=True)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--device", default="cpu")
    p.add_argument("--classes-count", type=int, help="header l; inferred from labels if omitted")

    p = sub.add_parser("extract-classes", help="class definitions -> class metadata JSONL")
    p.add_argument("--definitions", required=True,
                   help='JSONL {"class_id","name","definition"}')
    p.add_argument("--encoder", default="sbert:all-MiniLM-L6-v2",
                   help="sbert:<id> or toy-hash:<dim>")
    p.add_argument("--out", required=True)
    p.add_argument("--device", default="cpu")
    return parser


def run(argv: list[str]) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s",
                        stream=sys.stderr)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "extract-images":
            backbone = image_backbone(args.backbone, device=args.device)
            job = ExtractJob(
                manifest_path=args.manifest,
                backbone=args.backbone,
                out_path=args.out,
                batch_size=args.batch,
                device=args.device,
                n_classes=args.classes_count,
            )
            written = extract_image_embeddings(job, backbone)
            print(f"{written} records", file=sys.stderr)
        else:
            encoder = text_encoder(args.encoder, device=args.device)
            written = extract_class_embeddings(args.definitions, encoder, args.out)
            print(f"{written} classes", file=sys.stderr)
        print(args.out)
        return 0
    except (CliError, ManifestError, BackboneError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))
