"""Small input-validation helpers, sklearn-style: each returns the
validated/coerced value so call sites can stay one-liners."""

import numpy as np


def check_vec3(x, name: str = "vector") -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.shape != (3,):
        raise ValueError(f"{name} must have shape (3,), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite, got {v}")
    return v


def check_unit(x, name: str = "vector", atol: float = 1e-9) -> np.ndarray:
    v = check_vec3(x, name)
    n = float(np.linalg.norm(v))
    if abs(n - 1.0) > atol:
        raise ValueError(f"{name} must be unit length, got norm {n}")
    return v


def check_positive(x: float, name: str = "value") -> float:
    x = float(x)
    if not np.isfinite(x) or x <= 0.0:
        raise ValueError(f"{name} must be positive and finite, got {x}")
    return x


def check_nonnegative(x: float, name: str = "value") -> float:
    x = float(x)
    if not np.isfinite(x) or x < 0.0:
        raise ValueError(f"{name} must be >= 0 and finite, got {x}")
    return x


def check_array(x, shape=None, name: str = "array", dtype=np.float64) -> np.ndarray:
    a = np.asarray(x, dtype=dtype)
    if shape is not None:
        if len(shape) != a.ndim or any(
            s is not None and s != d for s, d in zip(shape, a.shape)
        ):
            raise ValueError(f"{name} must have shape {shape}, got {a.shape}")
    return a


def check_rng(rng) -> np.random.Generator:
    """Accept a Generator or a seed, mirroring sklearn's check_random_state."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None or isinstance(rng, (int, np.integer)):
        return np.random.default_rng(rng)
    raise ValueError(f"expected a numpy Generator or integer seed, got {rng!r}")
