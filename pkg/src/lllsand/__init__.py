"""LLL lattice reduction and the sandpile models that imitate it.

Modules
-------
gso         Siegel-variant LLL in Gram-Schmidt log coordinates
sandpile    ASM, SSP and LLL-SP on the cycle graph with one sink
oracle      exact integer LLL and rational Gram-Schmidt
inputs      seeded input generators
stats       output statistics and theorem checks
experiment  batch runs with reproducible on-disk records
cli         command-line driver (``python -m lllsand``)
"""

__version__ = "0.1.0"
