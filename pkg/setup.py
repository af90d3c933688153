import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("ENTANGLER_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:  # pure-Python install; kernels fall back to numpy
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "entangler.tensor._ckernels",
                    ["src/entangler/tensor/_ckernels.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
