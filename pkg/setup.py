import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # the pure-numpy kernels take over
    cythonize = None

extensions = []
if cythonize is not None:
    extensions = cythonize(
        [Extension("hgail._kernels", ["src/hgail/_kernels.pyx"], include_dirs=[np.get_include()],
                   extra_compile_args=["-O3"], optional=True)],
        compiler_directives={"language_level": 3},
    )

setup(ext_modules=extensions)
