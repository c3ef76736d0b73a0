import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        f"nlocal.{name}",
        [f"src/nlocal/{name}.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    for name in ("_lindblad", "_spectra")
]

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}))
