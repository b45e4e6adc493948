"""Command line entry point; flags mirror ``SidecarConfig`` one to one."""

from __future__ import annotations

import argparse

from .service import SidecarConfig, serve


def main(argv: list[str] | None = None) -> int:
    defaults = SidecarConfig()
    parser = argparse.ArgumentParser(
        prog="sidecar-serve",
        description="Serve mask filling, completion scoring, and embeddings over HTTP.",
    )
    parser.add_argument("--mlm", default=defaults.mlm_model, help="mask-fill model name")
    parser.add_argument(
        "--embedder", default=defaults.embedder_model, help="embedder model name"
    )
    parser.add_argument("--host", default=defaults.host)
    parser.add_argument("--port", type=int, default=defaults.port)
    parser.add_argument(
        "--max-batch-size",
        type=int,
        default=defaults.max_batch_size,
        help="largest model micro-batch",
    )
    parser.add_argument("--device", default=defaults.device, help="device hint")
    args = parser.parse_args(argv)
    try:
        config = SidecarConfig(
            mlm_model=args.mlm,
            embedder_model=args.embedder,
            host=args.host,
            port=args.port,
            max_batch_size=args.max_batch_size,
            device=args.device,
        )
        serve(config)
    except ValueError as err:
        parser.error(str(err))
    return 0
