"""Hot-kernel dispatch: the compiled extension when built, numpy otherwise."""

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKEND = ""


def use_backend(name: str) -> None:
    """Select ``"compiled"`` or ``"python"`` kernels for subsequent calls."""
    global BACKEND, coverage, rs_kernel, rs_direct
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e .`")
        impl = _compiled
    elif name == "python":
        impl = _fallback
    else:
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = name
    coverage = impl.coverage
    rs_kernel = impl.rs_kernel
    rs_direct = impl.rs_direct


use_backend("compiled" if _compiled is not None else "python")
