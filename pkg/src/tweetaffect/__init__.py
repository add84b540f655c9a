"""Affect-in-tweets toolkit: lexicon expansion, BiLSTM with deep self-attention,
transfer learning, baselines and evaluation, all on numpy."""

__version__ = "0.1.0"
