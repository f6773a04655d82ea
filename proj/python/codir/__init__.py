"""Structured decomposable image representations.

Thin wrapper over the C++ extension: dataset/run pipeline commands plus
numpy-facing matrix operations (SVD compression, classification, composition).
"""

from ._codir import (
    ConfigError,
    DependencyError,
    EnvSource,
    GradcheckReport,
    Method,
    PrfReport,
    ProbeMethodResult,
    RepRecord,
    RetrievalReport,
    RunConfig,
    TemplateSet,
    classify,
    compose_demo,
    compose_swap,
    compress,
    compress_run,
    compression_ratio,
    decompress,
    dump_reps,
    effective_rank,
    eval,
    fit,
    gen,
    gradcheck,
    load_config,
    parse_config,
    probe,
    rank,
    read_reps,
    read_templates,
    representation_rank,
    retrieve,
    similarity,
    svd,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
