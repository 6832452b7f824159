"""Transfer-learning stance detection for tweets.

Stages: phrase-aware corpus preparation, skip-gram embeddings, hashtag
prediction pretraining of an LSTM encoder, per-topic fine-tuned five-fold
ensembles, and SemEval-style scoring.
"""

__version__ = "0.1.0"
