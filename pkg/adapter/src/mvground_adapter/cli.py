"""Command-line entry points.

    mvground-adapter embed <scene_dir> --out <file> [--queries <path>]
    mvground-adapter serve [--scene <dir>]
    mvground-adapter estimate <images_dir> <out_scene_dir>

All subcommands accept --config <path> pointing at an adapter config
JSON; without it the dry-run defaults apply. Errors print one
``error [stage] Type: message`` line to stderr and exit 2.
"""

from __future__ import annotations

import argparse
import sys

from .config import AdapterConfig, load_adapter_config
from .encode import export_embeddings
from .errors import AdapterError
from .reconstruct import export_reconstruction_inputs
from .serve import serve_stdio


def _add_config_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="adapter config JSON (defaults to dry-run)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvground-adapter",
                                     description="Model-backed asset export for "
                                                 "the multi-view grounding pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="export frame and query embeddings")
    p.add_argument("scene_dir")
    p.add_argument("--out", required=True, help="output embedding file")
    p.add_argument("--queries", help="queries JSON (defaults to <scene>/queries.json)")
    _add_config_arg(p)

    p = sub.add_parser("serve", help="answer oracle requests on stdin/stdout")
    p.add_argument("--scene", help="scene directory for mask sizing")
    _add_config_arg(p)

    p = sub.add_parser("estimate", help="export estimated depth and poses for images")
    p.add_argument("images_dir")
    p.add_argument("out_scene_dir")
    _add_config_arg(p)

    return parser


def _resolve_config(args) -> AdapterConfig:
    return load_adapter_config(args.config) if args.config else AdapterConfig()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    stage = args.command
    try:
        cfg = _resolve_config(args)
        if args.command == "embed":
            count = export_embeddings(args.scene_dir, args.out, cfg,
                                      queries_path=args.queries)
            print(f"wrote {count} records to {args.out}")
        elif args.command == "serve":
            return serve_stdio(cfg, scene_dir=args.scene)
        else:
            frame_ids = export_reconstruction_inputs(args.images_dir,
                                                     args.out_scene_dir, cfg)
            print(f"wrote {len(frame_ids)} estimated frames to {args.out_scene_dir}")
        return 0
    except AdapterError as e:
        print(f"error [{stage}] {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error [io] {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
