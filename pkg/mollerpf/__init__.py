"""moller-pf namespace package.

Re-exports the top-level packages so ``python -m mollerpf.cli.runner`` and the
``moller-pf`` console script work without an installed layout change.
"""

__version__ = "0.1.0"
