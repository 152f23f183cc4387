from .chain import (
    AnalyzerConfig,
    ELISIONS,
    STEMMERS,
    analyze,
    analyzer_from_kv,
    default_stopwords,
    fold_diacritics,
    load_analyzer_config,
    load_stopwords,
    topic_model_config,
)

__all__ = [
    "AnalyzerConfig",
    "ELISIONS",
    "STEMMERS",
    "analyze",
    "analyzer_from_kv",
    "default_stopwords",
    "fold_diacritics",
    "load_analyzer_config",
    "load_stopwords",
    "topic_model_config",
]
