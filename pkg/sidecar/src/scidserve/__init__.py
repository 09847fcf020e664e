"""SCID-protocol denoiser server with reference and pretrained models."""

from .conformance import run_conformance
from .models import MODELS, ModelError, build_model
from .server import handle_stream, serve_stdio, serve_tcp

__all__ = ["MODELS", "ModelError", "build_model", "handle_stream",
           "run_conformance", "serve_stdio", "serve_tcp"]
