"""soke: desk-scale text-to-sign generation.

Pipeline: synthesize articulated sign motion -> train a decoupled per-part
VQ tokenizer -> build a word-level sign dictionary -> train an autoregressive
generator (sequential / parallel / multi-head decoding) -> evaluate with
DTW joint-position metrics. A 2D-keypoint pose-fitting optimizer is included
for refining upper-body rotations against observed keypoints.
"""

__version__ = "0.1.0"
