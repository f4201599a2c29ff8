from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension("sgat._ckernels", ["src/sgat/_ckernels.pyx"], include_dirs=[np.get_include()])],
        language_level=3,
    )
except ImportError:
    # no Cython at build time: the package runs on the numpy fallback
    ext_modules = []

setup(ext_modules=ext_modules)
