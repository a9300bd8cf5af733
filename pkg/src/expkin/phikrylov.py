"""Evaluation of phi-function linear combinations.

Provides the scalar phi functions, a dense augmented-matrix oracle, a Pade
matrix exponential, modified Gram-Schmidt Arnoldi, and an adaptive Krylov
evaluator with tau-substepping for

    w(T) = phi_0(T A) b_0 + sum_k T^k phi_k(T A) b_k

at one or more time points T in (0, 1].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MAX_PHI_ORDER = 3
PHI_TAYLOR_CUTOFF = 0.5      # |z| below which the Taylor series is used
PHI_TAYLOR_TERMS = 30

# Degree-13 Pade approximation of exp(): coefficients and the 1-norm bound
# below which no squaring is needed.
_PADE13_B = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0, 670442572800.0,
    33522128640.0, 1323241920.0, 40840800.0, 960960.0, 16380.0, 182.0, 1.0,
)
_PADE13_THETA = 5.371920351148152


class PhiConvergenceError(RuntimeError):
    """Krylov evaluation could not reach the requested tolerance."""

    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


def phi_scalar(k, z):
    """phi_k(z) for k in 0..3; phi_0 = exp, phi_{k+1}(z) = (phi_k(z) - 1/k!)/z."""
    if k not in (0, 1, 2, 3):
        raise ValueError(f"phi order {k} not supported")
    z = float(z)
    if k == 0:
        return math.exp(z)
    if abs(z) < PHI_TAYLOR_CUTOFF:
        # phi_k(z) = sum_j z^j / (j + k)!
        acc = 0.0
        term = 1.0 / math.factorial(k)
        for j in range(PHI_TAYLOR_TERMS):
            acc += term
            term *= z / (j + k + 1)
        return acc
    if k == 1:
        return (math.exp(z) - 1.0) / z
    if k == 2:
        return (math.exp(z) - 1.0 - z) / z**2
    return (math.exp(z) - 0.5 * z**2 - z - 1.0) / z**3


def expm(A):
    """Matrix exponential by degree-13 Pade with scaling and squaring."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    norm1 = float(np.abs(A).sum(axis=0).max()) if n else 0.0
    s = max(0, int(math.ceil(math.log2(norm1 / _PADE13_THETA)))) if norm1 > _PADE13_THETA else 0
    As = A / 2**s
    b = _PADE13_B
    I = np.eye(n)
    A2 = As @ As
    A4 = A2 @ A2
    A6 = A2 @ A4
    U = As @ (
        A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
        + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * I
    )
    V = (
        A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
        + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I
    )
    F = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        F = F @ F
    return F


def _augmented_matrix(A, bs):
    """Block matrix [[A, B], [0, J_p]] with B columns b_p .. b_1."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    p = len(bs) - 1
    if p < 1:
        raise ValueError("need at least b_0 and b_1")
    aug = np.zeros((n + p, n + p))
    aug[:n, :n] = A
    for col, k in enumerate(range(p, 0, -1)):
        aug[:n, n + col] = bs[k]
    for i in range(p - 1):
        aug[n + i, n + i + 1] = 1.0
    return aug


def dense_phi_oracle(A, bs):
    """sum_k phi_k(A) b_k via one dense exponential of the augmented matrix.

    `bs` is the list [b_0, ..., b_p]; entries may be None (treated as zero).
    Intended as a reference at moderate scale (n + p <= 400).
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    bs = [np.zeros(n) if b is None else np.asarray(b, dtype=float) for b in bs]
    p = len(bs) - 1
    if p == 0:
        return expm(A) @ bs[0]
    if n + p > 400:
        raise ValueError("dense oracle limited to n + p <= 400")
    aug = _augmented_matrix(A, bs)
    v = np.zeros(n + p)
    v[:n] = bs[0]
    v[-1] = 1.0
    return (expm(aug) @ v)[:n]


def arnoldi(matvec, v, m_max, breakdown_tol=1.0e-12):
    """Modified Gram-Schmidt Arnoldi with one reorthogonalization pass.

    `matvec` is either a dense matrix or a callable. Returns (V, H, breakdown)
    with V of shape (n, m) orthonormal and H of shape (m, m) upper-Hessenberg;
    on happy breakdown the process stops early and the flag is set.
    """
    if not callable(matvec):
        A = np.asarray(matvec, dtype=float)
        matvec = lambda x: A @ x
    v = np.asarray(v, dtype=float)
    beta = np.linalg.norm(v)
    if beta == 0:
        raise ValueError("Arnoldi starting vector must be nonzero")
    n = v.size
    V = np.zeros((n, m_max + 1))
    H = np.zeros((m_max + 1, m_max))
    V[:, 0] = v / beta
    breakdown = False
    m = 0
    for j in range(m_max):
        w = matvec(V[:, j])
        for i in range(j + 1):
            H[i, j] = V[:, i] @ w
            w -= H[i, j] * V[:, i]
        # One reorthogonalization pass keeps the basis orthonormal to ~1e-12.
        for i in range(j + 1):
            c = V[:, i] @ w
            H[i, j] += c
            w -= c * V[:, i]
        hnext = np.linalg.norm(w)
        H[j + 1, j] = hnext
        m = j + 1
        if hnext <= breakdown_tol * max(1.0, np.linalg.norm(H[: j + 2, : j + 1])):
            breakdown = True
            break
        V[:, j + 1] = w / hnext
    return V[:, :m], H[:m, :m], breakdown


@dataclass(frozen=True)
class PhiRequest:
    """A linear-combination phi evaluation task.

    `b` is the list [b_0, ..., b_p] (entries may be None for zero vectors),
    `time_points` is strictly increasing in (0, 1] ending at 1.
    """

    A: np.ndarray
    b: tuple
    time_points: tuple = (1.0,)
    tol: float = 1.0e-10

    def __post_init__(self):
        pts = tuple(float(t) for t in self.time_points)
        object.__setattr__(self, "time_points", pts)
        if len(self.b) - 1 > MAX_PHI_ORDER:
            raise ValueError(f"phi orders above {MAX_PHI_ORDER} not supported")
        if not pts or pts[-1] != 1.0:
            raise ValueError("last time point must equal 1")
        if any(t <= 0 for t in pts) or any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError("time points must be strictly increasing in (0, 1]")
        if not (self.tol > 0):
            raise ValueError("tolerance must be positive")


@dataclass
class PhiStats:
    substeps: int = 0
    matvecs: int = 0
    max_krylov_dim: int = 0
    rejections: int = 0


@dataclass
class PhiResult:
    """One output vector per requested time point, plus convergence stats."""

    values: list
    stats: PhiStats = field(default_factory=PhiStats)


class _IncrementalArnoldi:
    """Arnoldi process on the augmented operator, extensible in m."""

    def __init__(self, matvec, v, m_cap):
        self.matvec = matvec
        self.beta = float(np.linalg.norm(v))
        n = v.size
        self.V = np.zeros((n, m_cap + 1))
        self.H = np.zeros((m_cap + 1, m_cap + 1))
        self.V[:, 0] = v / self.beta
        self.m = 0
        self.happy = False
        self.matvecs = 0

    def extend(self, m_target):
        while self.m < m_target and not self.happy:
            j = self.m
            w = self.matvec(self.V[:, j])
            self.matvecs += 1
            for i in range(j + 1):
                self.H[i, j] = self.V[:, i] @ w
                w -= self.H[i, j] * self.V[:, i]
            for i in range(j + 1):
                c = self.V[:, i] @ w
                self.H[i, j] += c
                w -= c * self.V[:, i]
            hnext = float(np.linalg.norm(w))
            self.H[j + 1, j] = hnext
            self.m = j + 1
            scale = max(1.0, float(np.abs(self.H[: j + 2, : j + 1]).max()))
            if hnext <= 1.0e-14 * scale:
                self.happy = True
            else:
                self.V[:, j + 1] = w / hnext


MIN_SUBSTEP = 1.0e-8   # fraction of the full [0, 1] interval
M_INIT = 10
M_MAX = 128
EASY_SUCCESS = 0.01    # err below this fraction of the budget doubles tau

_invocations = 0


def invocation_count():
    """Total kiops_eval() invocations in this process (step accounting)."""
    return _invocations


def kiops_eval(req: PhiRequest, m_init=M_INIT, m_max=M_MAX):
    """Adaptive Krylov evaluation of a PhiRequest.

    Augments the matrix once, then substeps tau across (0, 1] landing exactly
    on every requested time point. Each substep projects the running augmented
    state onto a Krylov basis and advances it with a small Pade exponential.
    On an error-budget failure the basis is first grown (x4/3 up to m_max),
    then the substep is halved; an easy success doubles the next substep.
    """
    global _invocations
    _invocations += 1
    A = np.asarray(req.A, dtype=float)
    n = A.shape[0]
    bs = [np.zeros(n) if b is None else np.asarray(b, dtype=float) for b in req.b]
    while len(bs) < 2:
        bs.append(np.zeros(n))
    p = len(bs) - 1

    # Balance the two blocks of the augmented state (KIOPS-style scaling):
    # scale the b columns down by nu and the polynomial block up by 1/nu.
    norm_b = max(float(np.abs(b).sum()) for b in bs[1:])
    if norm_b > 0:
        nu = 2.0 ** -math.ceil(math.log2(norm_b))
    else:
        nu = 1.0
    mu = 1.0 / nu
    B = np.column_stack([nu * bs[k] for k in range(p, 0, -1)])

    def matvec(v):
        out = np.empty(n + p)
        out[:n] = A @ v[:n] + B @ v[n:]
        out[n:-1] = v[n + 1:]
        out[-1] = 0.0
        return out

    w = np.zeros(n + p)
    w[:n] = bs[0]
    w[-1] = mu

    stats = PhiStats()
    values = []
    tau_now = 0.0
    tau = req.time_points[0]
    m = max(1, min(m_init, m_max))
    m_cap = min(m_max, n + p)

    for target in req.time_points:
        while tau_now < target:
            hits_target = tau >= target - tau_now
            tau_try = target - tau_now if hits_target else tau
            beta = float(np.linalg.norm(w))
            if beta == 0.0:
                tau_now = target
                break
            proc = _IncrementalArnoldi(matvec, w, m_cap)
            easy = False
            while True:
                proc.extend(min(m, m_cap))
                j = proc.m
                if proc.happy:
                    F = expm(tau_try * proc.H[:j, :j])
                    w = beta * (proc.V[:, :j] @ F[:, 0])
                    easy = True
                    break
                # Error-estimate column: exponential of H extended with a
                # phi_1 coupling column; the bottom entry gives the residual.
                Hx = np.zeros((j + 1, j + 1))
                Hx[:j, :j] = proc.H[:j, :j]
                Hx[0, j] = 1.0
                F = expm(tau_try * Hx)
                err = beta * proc.H[j, j - 1] * abs(F[j - 1, j])
                budget = req.tol * beta * tau_try
                if err <= budget:
                    w = beta * (proc.V[:, :j] @ F[:j, 0])
                    easy = err <= EASY_SUCCESS * budget
                    break
                stats.rejections += 1
                if j < min(m, m_cap) or m < m_cap:
                    m = min(m_cap, max(m + 1, int(math.ceil(4.0 * m / 3.0))))
                else:
                    hits_target = False
                    tau_try = 0.5 * tau_try
                    if tau_try < MIN_SUBSTEP:
                        raise PhiConvergenceError(
                            "Krylov substep underflow before reaching tolerance",
                            diagnostics={
                                "tau": tau_try, "tau_now": tau_now, "err": err,
                                "m": j, "beta": beta,
                            },
                        )
            stats.substeps += 1
            stats.max_krylov_dim = max(stats.max_krylov_dim, proc.m)
            stats.matvecs += proc.matvecs
            tau_now = target if hits_target else tau_now + tau_try
            tau = 2.0 * tau_try if easy else tau_try
        values.append(w[:n].copy())

    return PhiResult(values=values, stats=stats)


def phi_combination(A, bs, time_points=(1.0,), tol=1.0e-10, m_init=M_INIT, m_max=M_MAX):
    """Convenience wrapper returning the list of w(T_j) arrays."""
    req = PhiRequest(A=np.asarray(A, dtype=float), b=tuple(bs),
                     time_points=tuple(time_points), tol=tol)
    return kiops_eval(req, m_init=m_init, m_max=m_max)
