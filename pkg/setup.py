"""Build script for the optional compiled kernels.

The package is fully functional without the extension (a pure-Python
implementation of the same kernels is selected at import time), so a
failed compile downgrades to a warning instead of aborting the install.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            "src/lgml/_kernels.pyx",
        ],
        language_level=3,
    )
    for ext in ext_modules:
        ext.extra_compile_args = ["-O3"]
except Exception as exc:  # pragma: no cover - build environment dependent
    print(f"warning: compiled kernels disabled ({exc}); "
          "falling back to pure-Python kernels", file=sys.stderr)

setup(ext_modules=ext_modules)
