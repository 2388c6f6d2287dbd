import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# COVERPLAN_NO_EXT=1 skips the compiled kernels; the package then runs on
# the numpy fallback.
if os.environ.get("COVERPLAN_NO_EXT") == "1":
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "coverplan._ckernels",
                ["src/coverplan/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
