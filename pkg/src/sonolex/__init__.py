"""Toolkit for structuring breast ultrasound reports into per-lesion
attribute records: section parsing, prompt construction, pluggable
extraction backends, output normalization, evaluation metrics, synthetic
corpora, and fine-tuning dataset tooling."""

__version__ = "0.1.0"
