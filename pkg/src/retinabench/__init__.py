"""retinabench: transfer-learning evaluation harness for retinal imaging.

Covers the full protocol: manifest-driven dataset handling, fundus
preprocessing, pretrained-backbone training in fine-tuning or fixed
feature-extractor mode, and the metric/statistics reporting surface
(confusion matrices, quadratic weighted kappa, sensitivity/specificity,
signed-rank and rank-sum comparisons).
"""

__version__ = "0.1.0"
