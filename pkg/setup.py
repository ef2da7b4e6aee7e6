import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("DAGCAST_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [Extension("dagcast._core", ["src/dagcast/_core.pyx"],
                       language="c++", extra_compile_args=["-O3"])],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
