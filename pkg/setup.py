"""Build the optional compiled kernels; the package runs pure-Python without them."""

import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Try to compile the accelerator module, fall back silently on failure."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler, bad toolchain, ...
            warnings.warn(f"skipping compiled kernels ({exc}); pure-Python backend will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"building {ext.name} failed ({exc}); pure-Python backend will be used")


def extension_modules():
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "smearkit._kernels._core",
        ["src/smearkit/_kernels/_core.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )


setup(ext_modules=extension_modules(), cmdclass={"build_ext": OptionalBuildExt})
