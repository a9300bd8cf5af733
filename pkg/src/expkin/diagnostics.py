"""Jacobian spectrum diagnostics and per-step cost metrics.

The spectrum of the step Jacobian is summarized by the axis-aligned bounding
rectangle of its eigenvalues in the complex plane: real spread alpha,
imaginary spread beta, and area omega = alpha * beta.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EigensolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpectrumStats:
    t: float
    alpha: float
    beta: float
    omega: float
    max_real: float


def eigenvalues_dense(A):
    """All eigenvalues of a dense real matrix (LAPACK real-Schur based).

    Complex eigenvalues appear in conjugate pairs. Non-convergence of the QR
    iteration is surfaced as EigensolverError.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("square matrix required")
    if A.shape[0] > 512:
        raise ValueError("dense eigensolver limited to n <= 512")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    try:
        return np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(f"QR iteration failed to converge: {exc}") from exc


def spectrum_bounds(eigs, t=0.0):
    """Bounding-rectangle statistics of an eigenvalue list."""
    eigs = np.asarray(eigs, dtype=complex)
    if eigs.size == 0:
        raise ValueError("eigenvalue list must be non-empty")
    re = eigs.real
    im = eigs.imag
    alpha = float(re.max() - re.min())
    beta = float(im.max() - im.min())
    return SpectrumStats(t=float(t), alpha=alpha, beta=beta,
                         omega=alpha * beta, max_real=float(re.max()))


def jacobian_spectrum(J, t=0.0):
    return spectrum_bounds(eigenvalues_dense(J), t=t)


def normalized_step_cost(record):
    """CPU seconds spent on a step divided by the simulated time it advanced."""
    if not (record.h > 0):
        raise ValueError("step size must be positive")
    return (record.cpu_ns * 1.0e-9) / record.h
