"""Linear mixing model and a least-squares unmixing oracle."""
import numpy as np

from .errors import DimensionError, SingularityError
from .tensor import AbundanceMap, as_cube, check_endmembers


def mix(s, a) -> np.ndarray:
    """Combine endmembers ``s`` (L, N) with abundances ``a`` (N, H, W).

    Band ``l`` of the result is ``sum_n s[l, n] * a[n]``.
    """
    s = check_endmembers(s)
    data = as_cube(a)
    n, h, w = data.shape
    if n != s.shape[1]:
        raise DimensionError(f"abundances have {n} channels but S has {s.shape[1]} materials")
    return (s @ data.reshape(n, h * w)).reshape(s.shape[0], h, w)


def reconstruct_hr(s, a_hr) -> np.ndarray:
    """High-resolution cube from endmembers and super-resolved abundances."""
    return mix(s, a_hr)


def unmix_oracle(s, cube, rcond: float = 1e-10) -> AbundanceMap:
    """Per-pixel unconstrained least squares via Cholesky on the normal
    equations, then clamp at zero and renormalize.

    Only meant as a test oracle for cubes built with :func:`mix`.
    """
    s = check_endmembers(s)
    x = as_cube(cube)
    bands, h, w = x.shape
    if bands != s.shape[0]:
        raise DimensionError(f"cube has {bands} bands but S has {s.shape[0]}")
    gram = s.T @ s
    sv = np.linalg.svd(s, compute_uv=False)
    if sv[-1] <= rcond * sv[0]:
        raise SingularityError("endmember matrix is rank deficient")
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise SingularityError("normal equations are not positive definite") from exc
    rhs = s.T @ x.reshape(bands, h * w)
    y = np.linalg.solve(chol, rhs)
    a = np.linalg.solve(chol.T, y)
    a = np.maximum(a, 0.0).reshape(-1, h, w)
    total = a.sum(axis=0)
    total[total == 0] = 1.0
    return AbundanceMap(a / total, normalized=True)
