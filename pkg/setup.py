import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("LWHAR_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "lwhar._kernels",
                    ["src/lwhar/_kernels.pyx"],
                    include_dirs=[np.get_include(), "src/lwhar"],
                    depends=["src/lwhar/_gates.h"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    # no-trapping-math lets gcc if-convert the branch-free gate loops and
                    # fp-contract=off keeps every dispatched variant bit-identical
                    extra_compile_args=["-O3", "-fno-trapping-math", "-ffp-contract=off"],
                )
            ],
            language_level=3,
        )

setup(ext_modules=ext_modules)
