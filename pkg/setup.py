import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("BMPLLN_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:  # pure-Python install
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "bmplln._kernel",
                    ["src/bmplln/_kernel.pyx"],
                    include_dirs=[np.get_include()],
                    library_dirs=[os.path.join(os.path.dirname(np.__file__), "random", "lib")],
                    libraries=["npyrandom"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
