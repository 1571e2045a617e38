"""Builds the optional compiled core.  Without Cython or a compiler the
package still installs and runs on the pure-numpy fallback."""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("KLRR_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [Extension("klrr._core", ["src/klrr/_core.pyx"],
                       include_dirs=[np.get_include()],
                       extra_compile_args=["-O3"])],
            language_level=3,
        )

setup(ext_modules=ext_modules)
