"""Kernel selection: compiled extension if available, pure Python otherwise."""

try:
    from epsdd._detect import detect_segments

    KERNEL_BACKEND = "cython"
except ImportError:  # extension not built
    from epsdd._detect_py import detect_segments

    KERNEL_BACKEND = "python"

__all__ = ["detect_segments", "KERNEL_BACKEND"]
