"""Text-classification experimentation toolkit.

Zero-shot and in-context classification against a pluggable model-scoring
gateway, label-description data construction, ambiguity-aware demonstration
selection, cloze distractor feature scoring and ranking, and the evaluation
suite that ties them together.
"""

__version__ = "0.1.0"
