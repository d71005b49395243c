import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "starkernel.kernels._conv_cython",
                ["src/starkernel/kernels/_conv_cython.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # The package still works without the compiled kernels; the numpy
    # fallback is selected at import time.
    extensions = []

setup(ext_modules=extensions)
