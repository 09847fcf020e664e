"""Command line entry point for the SCID denoiser server."""

import argparse
import os
import sys

from .conformance import run_conformance
from .models import MODELS, NEURAL_MODELS, ModelError, build_model
from .server import serve_stdio, serve_tcp


def build_parser():
    parser = argparse.ArgumentParser(
        prog="scid-sidecar",
        description="Serve a denoiser over the SCID v1 protocol")
    parser.add_argument("--model", choices=MODELS, default="identity")
    parser.add_argument("--weights", help="weights file for neural models")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--transport", choices=("stdio", "tcp"), default="stdio")
    parser.add_argument("--port", type=int, default=0,
                        help="TCP port (0 picks a free one)")
    parser.add_argument("--window", type=int, default=5,
                        help="temporal window for video models (odd, >= 1)")
    parser.add_argument("--conformance", metavar="DIR",
                        help="replay golden fixtures from DIR and exit")
    return parser


def log(message):
    print(f"scid-sidecar: {message}", file=sys.stderr, flush=True)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.window < 1 or args.window % 2 == 0:
        log(f"window must be odd and >= 1, got {args.window}")
        return 2
    if args.model in NEURAL_MODELS:
        if not args.weights:
            log(f"model {args.model} requires --weights")
            return 2
        if not os.path.exists(args.weights):
            log(f"weights file not found: {args.weights}")
            return 2
    try:
        model = build_model(args.model, args.weights, args.device, args.window)
    except ModelError as exc:
        log(str(exc))
        return 2
    log(f"serving model {args.model} ({model.convention})")

    if args.conformance:
        passed, failures = run_conformance(args.conformance, model,
                                           bitwise=args.model == "identity")
        for failure in failures:
            log(f"conformance: {failure}")
        log(f"conformance: {'pass' if passed else 'fail'}")
        return 0 if passed else 1

    if args.transport == "tcp":
        serve_tcp(model, args.port, log=log,
                  ready=lambda port: log(f"listening on 127.0.0.1:{port}"))
    else:
        serve_stdio(model, log=log)
    return 0


if __name__ == "__main__":
    sys.exit(main())
