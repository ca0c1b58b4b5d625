import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; the numpy fallback kernels are used
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "revsci.numerics._kernels",
                ["src/revsci/numerics/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-march=native"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
