import os

from setuptools import Extension, setup

extensions = []
if not os.environ.get("OPENRGBT_SKIP_NATIVE"):
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        # Pure install: the package falls back to the numpy kernels at import.
        pass
    else:
        extensions = cythonize(
            [
                Extension(
                    "openrgbt.kernels._native",
                    ["src/openrgbt/kernels/_native.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": 3},
        )

setup(ext_modules=extensions)
