"""Hot kernels: a Cython build when available, numpy fallbacks otherwise."""
