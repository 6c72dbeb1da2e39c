"""
nskge

Non-sampling knowledge graph embedding: square-loss training over every
(h, r, t) triple with the all-pairs term computed from d x d Gram matrices,
for DistMult, SimplE, ComplEx and TransE.

The package root stays free of numpy imports so the CLI can pin BLAS thread
counts before the numerical modules load.
"""

__version__ = "0.3.0"
