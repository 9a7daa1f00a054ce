"""CLI namespace for moller-pf.

Exposes the top-level ``cli`` modules as ``mollerpf.cli``.
"""
