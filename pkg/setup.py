import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

ext = Extension(
    "voxtok._native",
    ["src/voxtok/_native.pyx"],
    include_dirs=[numpy.get_include()],
    extra_compile_args=["-O3", "-fopenmp", "-march=native", "-funroll-loops"],
    extra_link_args=["-fopenmp"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(ext_modules=cythonize([ext], language_level=3))
