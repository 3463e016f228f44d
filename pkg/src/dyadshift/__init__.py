"""Dyadic model operators on the torus and a verification bench.

Subpackage map:

* :mod:`dyadshift.lattice` - finite function lattices and mixed norms
* :mod:`dyadshift.grid` - dyadic axes, Haar calculus, martingale blocks
* :mod:`dyadshift.shifts` - kernel averaging operators and dyadic shifts
* :mod:`dyadshift.paraproducts` - paraproduct families and symbols
* :mod:`dyadshift.norms` - BMO, maximal functions, operator norms
* :mod:`dyadshift.randomized` - Rademacher sums, R-bounds, decoupling
* :mod:`dyadshift.stopping` - stopping families and sparse collections
* :mod:`dyadshift.suites` - reproducible verification suites
* :mod:`dyadshift.cli` - the ``dyadshift`` command line entry point
"""

__version__ = "0.1.0"
