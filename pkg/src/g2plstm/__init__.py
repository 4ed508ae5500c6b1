"""LSTM grapheme-to-phoneme conversion: encoder-decoder and alignment-based models."""

__version__ = "0.1.0"
