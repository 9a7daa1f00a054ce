"""Command-line tools.

Verification suites, kappa-convergence sweeps, operator evaluation at listed
points and bilinear-form assembly.
"""
