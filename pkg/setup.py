"""Build script: compiles the edit-distance kernel when Cython and a C
compiler are available, otherwise installs pure Python only.  The package
selects the compiled kernel at import time and falls back transparently,
so a failed extension build never blocks installation."""

from setuptools import setup

try:
    from setuptools import Extension
    from Cython.Build import cythonize

    extensions = cythonize(
        [Extension("asrcausal._editops", ["src/asrcausal/_editops.pyx"])],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    extensions = []


if extensions:
    from setuptools.command.build_ext import build_ext

    class optional_build_ext(build_ext):  # noqa: N801 - distutils naming
        """Swallow compiler failures; the pure-Python kernel remains usable."""

        def run(self):
            try:
                super().run()
            except Exception as exc:  # pragma: no cover - toolchain dependent
                print(f"warning: skipping compiled kernel ({exc})")

        def build_extension(self, ext):
            try:
                super().build_extension(ext)
            except Exception as exc:  # pragma: no cover - toolchain dependent
                print(f"warning: skipping {ext.name} ({exc})")

    setup(ext_modules=extensions, cmdclass={"build_ext": optional_build_ext})
else:  # pragma: no cover - no Cython in the build environment
    setup()
