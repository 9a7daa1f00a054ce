"""Operators of the transport problem.

Collision operators, the exact transport operator with its adjoint, the
variational forms, and the CSDA Fokker-Planck approximation.
"""
