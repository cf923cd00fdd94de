"""Knowledge-base triples to textual summaries: corpus construction,
an encoder-decoder generator, beam-search decoding, and evaluation."""

__version__ = "0.1.0"
