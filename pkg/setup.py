import os

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

# No FMA contraction: the kernels promise a fixed rounding sequence.
compile_args = ["-O3", "-ffp-contract=off"]
if os.environ.get("SEQ2OCR_NATIVE"):
    compile_args.append("-march=native")

extensions = [
    Extension(
        "seq2ocr._kernels_c",
        ["src/seq2ocr/_kernels_c.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=compile_args,
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
