import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

# no -march=native and no fused multiply-add, so results do not depend on the build host
ext = Extension(
    "containment._kernels",
    sources=["src/containment/_kernels.pyx"],
    include_dirs=[numpy.get_include()],
    extra_compile_args=["-O3", "-ffp-contract=off"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(ext_modules=cythonize([ext], compiler_directives={"language_level": "3"}))
