import numpy
from setuptools import Extension, setup
from Cython.Build import cythonize

ext_modules = [
    Extension(
        "shiftgen._ckernels",
        sources=["src/shiftgen/_ckernels.pyx"],
        # -ffast-math lets gcc use the vectorized libmvec expf in softmax2d;
        # kernel parity against the numpy backend is covered by tests.
        extra_compile_args=["-O3", "-ffast-math", "-march=x86-64-v2"],
        libraries=["mvec"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(ext_modules, language_level=3))
