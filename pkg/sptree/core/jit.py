"""
Optional numba acceleration; falls back to plain Python with a warning
"""
import functools
import warnings


class PerformanceWarning(UserWarning):
    pass


performance_warning = '''
numba is not available, and this function is being executed without JIT
compilation. Installing numba is strongly recommended for large resolvent sweeps.'''

try:
    from numba import jit as _numba_jit

    jit = functools.partial(_numba_jit, nopython=True, cache=False)
    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

    def jit(func, *args, **kwargs):
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            warnings.warn(performance_warning, PerformanceWarning)
            return func(*args, **kwargs)

        return wrapper

__all__ = ["jit", "HAS_NUMBA", "PerformanceWarning"]
