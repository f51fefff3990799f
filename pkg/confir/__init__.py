"""
confir - Confidentiality IR toolchain

Qualifier inference, taint-aware CFI instrumentation, a static verifier and an
abstract machine for a small assembly-like IR.
"""

__version__ = "0.3.0"
