"""Input checks shared by the loss kernels and estimators."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .tnorms import check_unit_interval

FLOAT_DTYPES = (np.float32, np.float64)


class ShapeMismatchError(ValueError):
    pass


def check_prediction_matrix(p, n_labels: int, strict: bool = True, dtype=None) -> np.ndarray:
    """Validate a ``D x |labels|`` confidence matrix.

    float32 and float64 inputs keep their dtype, anything else becomes
    float32 unless ``dtype`` says otherwise. In lenient mode out-of-range
    values are clipped to [0, 1].
    """
    p = check_array(
        p,
        dtype=list(FLOAT_DTYPES) if dtype is None else dtype,
        ensure_2d=True,
        ensure_min_samples=0,
        ensure_min_features=0,
        ensure_all_finite=True,
        input_name="P",
    )
    if p.shape[1] != n_labels:
        raise ShapeMismatchError(
            f"prediction matrix has {p.shape[1]} columns but the constraint set has {n_labels} labels"
        )
    return check_unit_interval(p, strict=strict, name="prediction matrix")
