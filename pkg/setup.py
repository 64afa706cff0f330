"""Build the optional Cython kernel; the package falls back to pure Python without it."""
import os

import numpy as np
from setuptools import setup
from setuptools.extension import Extension


def _extensions():
    if os.environ.get("BSS_EXPAND_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "bss_expand._hac_ext",
        ["src/bss_expand/_hac_ext.pyx"],
        include_dirs=[np.get_include()],
        language="c++",
        # bit-identical distances with the pure-Python path
        extra_compile_args=["-O2", "-ffp-contract=off", "-std=c++14"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=_extensions())
