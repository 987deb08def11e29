import numpy
from setuptools import Extension, setup
from Cython.Build import cythonize

# -ffp-contract=off: the shadow sweep must produce bit-identical slopes to the
# pure-numpy oracle, so FMA contraction is disabled.
ext = Extension(
    "mock3d._kernels",
    ["src/mock3d/_kernels.pyx"],
    include_dirs=[numpy.get_include()],
    extra_compile_args=["-O3", "-ffp-contract=off"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(
    ext_modules=cythonize(
        [ext],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    ),
)
