"""Block-Hankel construction, persistence-of-excitation checks, and
data-consistency validation for input-output sequences.

A sequence is an ndarray of shape (N, d): N samples of a d-dimensional
signal, one sample per row. 1-D arrays are accepted and treated as scalar
(d = 1) signals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


def as_sequence(values) -> np.ndarray:
    """Coerce ``values`` to a float sequence array of shape (N, d).

    Accepts anything array-like; 1-D input becomes a scalar sequence of
    shape (N, 1).

    Raises:
        ValueError: If the result is empty or has more than 2 dimensions.
    """
    s = np.asarray(values, dtype=float)
    if s.ndim == 1:
        s = s.reshape(-1, 1)
    if s.ndim != 2:
        raise ValueError(f"sequence must be 1-D or 2-D, got shape {s.shape}")
    if s.shape[0] < 1 or s.shape[1] < 1:
        raise ValueError(f"sequence must be non-empty, got shape {s.shape}")
    return s


def build_hankel(s, depth: int) -> np.ndarray:
    """Build the depth-``depth`` block-Hankel matrix of a sequence.

    Column j stacks the samples s[j], s[j+1], ..., s[j+depth-1]. The result
    has shape (d * depth, N - depth + 1).

    Raises:
        ValueError: If ``depth`` is not in [1, N].
    """
    s = as_sequence(s)
    n_samples, d = s.shape
    if depth < 1:
        raise ValueError(f"depth must be positive, got {depth}")
    if depth > n_samples:
        raise ValueError(
            f"depth {depth} exceeds sequence length {n_samples}")
    n_cols = n_samples - depth + 1
    h = np.empty((d * depth, n_cols))
    for j in range(n_cols):
        h[:, j] = s[j:j + depth, :].ravel()
    return h


@dataclass(frozen=True)
class PeReport:
    """Outcome of a persistence-of-excitation check.

    ``computed_rank`` counts the singular values of the depth-``order``
    Hankel matrix above ``rank_tolerance`` times the largest one;
    ``is_pe`` holds exactly when it reaches ``required_rank`` (= d * order).
    ``smallest_retained_singular_value`` is kept so callers can flag data
    that is qualitatively exciting but numerically weak.
    """

    order: int
    required_rank: int
    computed_rank: int
    smallest_retained_singular_value: float
    is_pe: bool
    reason: Optional[str] = None


def persistence_order_check(s, order: int,
                            rank_tolerance: float = 1e-9) -> PeReport:
    """Check whether a sequence is persistently exciting of ``order``.

    The check is rank(H_order(s)) == d * order, with the numerical rank
    taken as the number of singular values above ``rank_tolerance`` times
    the largest singular value.

    A sequence shorter than (d + 1) * order - 1 samples cannot reach full
    row rank; such inputs yield ``is_pe=False`` with a ``reason`` instead
    of an error.
    """
    s = as_sequence(s)
    n_samples, d = s.shape
    required = d * order
    min_length = (d + 1) * order - 1

    if n_samples < order:
        return PeReport(
            order=order, required_rank=required, computed_rank=0,
            smallest_retained_singular_value=0.0, is_pe=False,
            reason=f"sequence length {n_samples} is below the Hankel "
                   f"depth {order}")

    h = build_hankel(s, order)
    sv = np.linalg.svd(h, compute_uv=False)
    if sv[0] == 0.0:
        rank, smallest = 0, 0.0
    else:
        retained = sv > rank_tolerance * sv[0]
        rank = int(np.count_nonzero(retained))
        smallest = float(sv[retained][-1]) if rank > 0 else 0.0

    reason = None
    if n_samples < min_length:
        reason = (f"sequence length {n_samples} is below the minimum "
                  f"{min_length} required for excitation of order {order}")
    elif rank < required:
        reason = f"rank {rank} is below the required {required}"

    return PeReport(
        order=order, required_rank=required, computed_rank=rank,
        smallest_retained_singular_value=smallest,
        is_pe=(rank == required), reason=reason)


@dataclass(frozen=True)
class TrajectoryValidation:
    """Result of checking whether a test window is spanned by the data."""

    is_trajectory: bool
    residual: float
    alpha: np.ndarray


def validate_trajectory(u_data, y_data, u_test, y_test,
                        tolerance: float = 1e-6) -> TrajectoryValidation:
    """Test whether (u_test, y_test) is a trajectory of the system that
    produced (u_data, y_data).

    Solves the stacked linear system

        [H_L(u_data); H_L(y_data)] alpha = [u_test; y_test]

    in least squares, where L is the test-window length. The window is a
    trajectory exactly when the system is solvable; numerically,
    ``is_trajectory`` holds when the relative residual (with a unit floor
    on the denominator) is at most ``tolerance``.

    Raises:
        ValueError: If data and test dimensions are inconsistent or the
            test window is longer than the data.
    """
    u_data = as_sequence(u_data)
    y_data = as_sequence(y_data)
    u_test = as_sequence(u_test)
    y_test = as_sequence(y_test)

    if u_data.shape[0] != y_data.shape[0]:
        raise ValueError("u_data and y_data lengths differ "
                         f"({u_data.shape[0]} vs {y_data.shape[0]})")
    if u_test.shape[0] != y_test.shape[0]:
        raise ValueError("u_test and y_test lengths differ "
                         f"({u_test.shape[0]} vs {y_test.shape[0]})")
    if u_data.shape[1] != u_test.shape[1]:
        raise ValueError("input dimension mismatch between data and test")
    if y_data.shape[1] != y_test.shape[1]:
        raise ValueError("output dimension mismatch between data and test")

    depth = u_test.shape[0]
    if depth > u_data.shape[0]:
        raise ValueError(
            f"test length {depth} exceeds data length {u_data.shape[0]}")

    h = np.vstack([build_hankel(u_data, depth), build_hankel(y_data, depth)])
    b = np.concatenate([u_test.ravel(), y_test.ravel()])
    alpha, *_ = np.linalg.lstsq(h, b, rcond=None)
    residual = float(np.linalg.norm(h @ alpha - b))
    relative = residual / max(float(np.linalg.norm(b)), 1.0)
    return TrajectoryValidation(
        is_trajectory=bool(relative <= tolerance),
        residual=relative,
        alpha=alpha)
