import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

NUMPY_RANDOM_LIB = os.path.join(os.path.dirname(np.__file__), "random", "lib")

extensions = [
    Extension(
        "swarm_percept._ckernel",
        ["src/swarm_percept/_ckernel.pyx"],
        include_dirs=[np.get_include()],
        library_dirs=[NUMPY_RANDOM_LIB],
        libraries=["npyrandom"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # no fast-math, no contraction and no builtins (gcc would fuse sin/cos
        # into sincos): the compiled kernel must round exactly like Python
        extra_compile_args=["-O2", "-ffp-contract=off", "-fno-fast-math", "-fno-builtin"],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
