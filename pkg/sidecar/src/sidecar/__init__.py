"""HTTP scoring service: mask filling, completion scoring, and sentence
embeddings over corpus-derived statistical models, speaking the same wire
protocol as the in-process mock backend."""

from .service import SidecarConfig, build_app, serve

__version__ = "0.1.0"

__all__ = ["SidecarConfig", "build_app", "serve", "__version__"]
