"""Extractive question answering with a neural bag-of-words baseline,
FastQA and FastQAExt, on a small numpy autodiff engine."""

__version__ = "0.1.0"
