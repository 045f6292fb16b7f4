"""depthbench: depth-estimation benchmarking engine.

Reproduces the MAI 2021 monocular depth challenge evaluation pipeline
(metrics, final-score formula, leaderboard), implements the submitted
training losses with analytic gradients, and ships a toy-scale deterministic
CPU inference engine as a latency-benchmark workload.
"""

__version__ = "0.1.0"
