"""Cluster-token document embeddings for content-based book recommendation.

Pipeline: sentence splitting -> sentence embeddings -> k-means cluster
codebook -> cluster-id token sequences -> transformer encoder trained to
reconstruct its input -> composed document vectors -> cosine / cluster
retrieval -> genre-relevance precision@k evaluation.

Submodules import lazily so the CLI can configure thread environment
variables before any numeric library loads.
"""

import importlib

__version__ = "0.1.0"

_SUBMODULES = (
    "cli",
    "codebook",
    "config",
    "corpus",
    "docvec",
    "embedstore",
    "encoder",
    "errors",
    "evaluate",
    "retrieval",
    "sequencer",
    "synthetic",
)


def __getattr__(name):
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module 'multibert' has no attribute '{name}'")


def __dir__():
    return sorted(list(globals()) + list(_SUBMODULES))
