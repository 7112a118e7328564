"""Build script for the compiled BM25 scoring kernel.

The extension is optional: if Cython or a C compiler is unavailable the
package installs anyway and falls back to the numpy implementation in
``browselab.retrieval._bm25_fallback`` (selected at import time).
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    extensions = [
        Extension(
            "browselab.retrieval._bm25_kernel",
            ["src/browselab/retrieval/_bm25_kernel.pyx"],
            # -ffp-contract=off: no FMA fusion, so the kernel stays
            # bit-identical to the pure-Python/numpy fallback.
            extra_compile_args=["-O2", "-ffp-contract=off"],
            optional=True,
        )
    ]
    ext_modules = cythonize(extensions, compiler_directives={"language_level": "3"})

setup(ext_modules=ext_modules)
