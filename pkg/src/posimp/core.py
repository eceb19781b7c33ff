"""System containers for linear positive impulsive dynamics.

The central object couples a flow block and a jump block, each written as
a linear fractional interconnection: the state, an uncertainty channel
(closed by an operator of unit gain) and a performance channel.  A timer
measures the time elapsed since the last jump; the flow matrices facing
the state may depend polynomially on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

MAX_DEGREE = 6


class WellPosednessError(RuntimeError):
    """The uncertainty loop cannot be closed in the positive sense."""


class TimerMatrixFunction:
    """Matrix-valued polynomial in the timer: M(tau) = sum_k coeffs[k] tau^k."""

    def __init__(self, coeffs):
        mats = [np.array(c, dtype=float) for c in coeffs]
        if not mats:
            raise ValueError("need at least one coefficient")
        if any(m.shape != mats[0].shape or m.ndim != 2 for m in mats):
            raise ValueError("coefficients must share one 2-d shape")
        while len(mats) > 1 and not mats[-1].any():
            mats.pop()
        if len(mats) - 1 > MAX_DEGREE:
            raise ValueError(f"polynomial degree {len(mats) - 1} exceeds {MAX_DEGREE}")
        for m in mats:
            m.setflags(write=False)
        self.coeffs: tuple[np.ndarray, ...] = tuple(mats)

    @classmethod
    def constant(cls, M) -> "TimerMatrixFunction":
        return cls([M])

    @classmethod
    def wrap(cls, obj) -> "TimerMatrixFunction":
        return obj if isinstance(obj, cls) else cls.constant(obj)

    @property
    def shape(self) -> tuple[int, int]:
        return self.coeffs[0].shape

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_constant(self) -> bool:
        return self.degree == 0

    def eval(self, tau: float) -> np.ndarray:
        out = np.array(self.coeffs[-1])
        for c in reversed(self.coeffs[:-1]):
            out = out * tau + c
        return out

    __call__ = eval

    def derivative(self) -> "TimerMatrixFunction":
        if self.is_constant:
            return TimerMatrixFunction([np.zeros(self.shape)])
        return TimerMatrixFunction([k * c for k, c in enumerate(self.coeffs)][1:])

    def __add__(self, other) -> "TimerMatrixFunction":
        other = TimerMatrixFunction.wrap(other)
        n = max(len(self.coeffs), len(other.coeffs))
        out = [np.zeros(self.shape) for _ in range(n)]
        for k, c in enumerate(self.coeffs):
            out[k] = out[k] + c
        for k, c in enumerate(other.coeffs):
            out[k] = out[k] + c
        return TimerMatrixFunction(out)

    def rmul_const(self, M) -> "TimerMatrixFunction":
        """M @ self(tau), with M constant."""
        M = np.asarray(M, dtype=float)
        return TimerMatrixFunction([M @ c for c in self.coeffs])

    def mul_const(self, M) -> "TimerMatrixFunction":
        """self(tau) @ M, with M constant."""
        M = np.asarray(M, dtype=float)
        return TimerMatrixFunction([c @ M for c in self.coeffs])


def _const(M, shape, name) -> np.ndarray:
    M = np.array(M, dtype=float)
    if M.shape != shape:
        raise ValueError(f"{name}: expected shape {shape}, got {M.shape}")
    M.setflags(write=False)
    return M


@dataclass(frozen=True)
class LftPositiveSystem:
    """Impulsive system with uncertainty and performance channels.

    Flow (between jumps, timer tau since the last jump):
        xdot   = A(tau) x + Gc(tau) w_cD + Ec(tau) w_c
        z_cD   = CcD x + HcD w_cD + FcD w_c      (uncertainty output)
        z_c    = Cc x + Hc w_cD + Fc w_c         (performance output)
    Jump (at impulse times):
        x+     = J x + Gd w_dD + Ed w_d
        z_dD   = CdD x + HdD w_dD + FdD w_d
        z_d    = Cd x + Hd w_dD + Fd w_d
    The uncertainty channels are closed by causal operators of unit
    (integral / summation) gain mapping z_cD -> w_cD and z_dD -> w_dD.
    """

    A: TimerMatrixFunction
    Gc: TimerMatrixFunction
    Ec: TimerMatrixFunction
    CcD: np.ndarray
    HcD: np.ndarray
    FcD: np.ndarray
    Cc: np.ndarray
    Hc: np.ndarray
    Fc: np.ndarray
    J: np.ndarray
    Gd: np.ndarray
    Ed: np.ndarray
    CdD: np.ndarray
    HdD: np.ndarray
    FdD: np.ndarray
    Cd: np.ndarray
    Hd: np.ndarray
    Fd: np.ndarray

    @classmethod
    def build(cls, *, A, Gc=None, Ec=None, CcD=None, HcD=None, FcD=None,
              Cc=None, Hc=None, Fc=None, J=None, Gd=None, Ed=None,
              CdD=None, HdD=None, FdD=None, Cd=None, Hd=None, Fd=None):
        """Assemble with shape validation; omitted blocks default to zero.

        Channel widths are inferred from whichever block of each channel
        is provided (all zero-width if none are).
        """
        A = TimerMatrixFunction.wrap(A)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A: expected a square matrix, got {A.shape}")

        def width(*cands):
            for m, axis in cands:
                if m is not None:
                    return np.asarray(m, dtype=float).shape[axis]
            return 0

        ncD = width((Gc.coeffs[0] if isinstance(Gc, TimerMatrixFunction) else Gc, 1),
                    (CcD, 0), (HcD, 0))
        pc = width((Ec.coeffs[0] if isinstance(Ec, TimerMatrixFunction) else Ec, 1), (FcD, 1), (Fc, 1))
        qc = width((Cc, 0), (Hc, 0), (Fc, 0))
        ndD = width((Gd, 1), (CdD, 0), (HdD, 0))
        pd = width((Ed, 1), (FdD, 1), (Fd, 1))
        qd = width((Cd, 0), (Hd, 0), (Fd, 0))

        def tmf(M, shape, name):
            if M is None:
                return TimerMatrixFunction.constant(np.zeros(shape))
            M = TimerMatrixFunction.wrap(M)
            if M.shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {M.shape}")
            return M

        def c(M, shape, name):
            return _const(M if M is not None else np.zeros(shape), shape, name)

        return cls(
            A=A,
            Gc=tmf(Gc, (n, ncD), "Gc"), Ec=tmf(Ec, (n, pc), "Ec"),
            CcD=c(CcD, (ncD, n), "CcD"), HcD=c(HcD, (ncD, ncD), "HcD"),
            FcD=c(FcD, (ncD, pc), "FcD"),
            Cc=c(Cc, (qc, n), "Cc"), Hc=c(Hc, (qc, ncD), "Hc"), Fc=c(Fc, (qc, pc), "Fc"),
            J=c(J if J is not None else np.eye(n), (n, n), "J"),
            Gd=c(Gd, (n, ndD), "Gd"), Ed=c(Ed, (n, pd), "Ed"),
            CdD=c(CdD, (ndD, n), "CdD"), HdD=c(HdD, (ndD, ndD), "HdD"),
            FdD=c(FdD, (ndD, pd), "FdD"),
            Cd=c(Cd, (qd, n), "Cd"), Hd=c(Hd, (qd, ndD), "Hd"), Fd=c(Fd, (qd, pd), "Fd"),
        )

    # dimensions ---------------------------------------------------------
    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def ncD(self) -> int:
        return self.CcD.shape[0]

    @property
    def pc(self) -> int:
        return self.Ec.shape[1]

    @property
    def qc(self) -> int:
        return self.Cc.shape[0]

    @property
    def ndD(self) -> int:
        return self.CdD.shape[0]

    @property
    def pd(self) -> int:
        return self.Ed.shape[1]

    @property
    def qd(self) -> int:
        return self.Cd.shape[0]

    @property
    def flow_degree(self) -> int:
        return max(self.A.degree, self.Gc.degree, self.Ec.degree)


# ---------------------------------------------------------------------------
# dwell-time constraints

@dataclass(frozen=True)
class Range:
    """Dwell times anywhere in [tmin, tmax]."""
    tmin: float
    tmax: float

    def __post_init__(self):
        if not 0 < self.tmin <= self.tmax:
            raise ValueError("need 0 < tmin <= tmax")


@dataclass(frozen=True)
class Minimum:
    """Dwell times at least tbar."""
    tbar: float

    def __post_init__(self):
        if self.tbar <= 0:
            raise ValueError("tbar must be positive")


@dataclass(frozen=True)
class PeriodicRange:
    """Range dwell times whose q-blocks repeat with total duration h_c/alpha."""
    tmin: float
    tmax: float
    q: int
    alpha: int
    h_c: float

    def __post_init__(self):
        if not 0 < self.tmin <= self.tmax:
            raise ValueError("need 0 < tmin <= tmax")
        if self.q < 1 or self.alpha < 1 or self.h_c <= 0:
            raise ValueError("need q >= 1, alpha >= 1, h_c > 0")
        s = self.period_sum
        if not self.q * self.tmin <= s <= self.q * self.tmax:
            raise ValueError(
                f"no q={self.q} dwell times in [{self.tmin}, {self.tmax}] can sum to {s}")

    @property
    def period_sum(self) -> float:
        return self.h_c / self.alpha


@dataclass(frozen=True)
class PeriodicMinimum:
    """Minimum dwell times whose q-blocks repeat with total duration h_c/alpha."""
    tbar: float
    q: int
    alpha: int
    h_c: float

    def __post_init__(self):
        if self.tbar <= 0:
            raise ValueError("tbar must be positive")
        if self.q < 1 or self.alpha < 1 or self.h_c <= 0:
            raise ValueError("need q >= 1, alpha >= 1, h_c > 0")
        if self.q * self.tbar > self.period_sum:
            raise ValueError(
                f"q={self.q} dwell times of at least {self.tbar} cannot sum to {self.period_sum}")

    @property
    def period_sum(self) -> float:
        return self.h_c / self.alpha


DwellTimeConstraint = Range | Minimum | PeriodicRange | PeriodicMinimum


# ---------------------------------------------------------------------------
# scaling structures for the uncertainty channels

@dataclass(frozen=True)
class ScalingStructure:
    """How the diagonal channel scalings are allowed to vary.

    kind per channel:
      "unconstrained"  one value per diagonal entry (timer-dependent for
                       the continuous channel: one value per grid node);
      ("grouped", partition)  entries tied together inside each group,
                       still timer-dependent where applicable;
      "constant"       one value per entry shared across all timer nodes
                       (no effect beyond "unconstrained" for the discrete
                       channel, which never depends on the timer).
    """
    continuous: object = "unconstrained"
    discrete: object = "unconstrained"

    @classmethod
    def unconstrained(cls) -> "ScalingStructure":
        return cls("unconstrained", "unconstrained")

    @classmethod
    def constant(cls) -> "ScalingStructure":
        return cls("constant", "constant")

    @classmethod
    def grouped(cls, partition_c, partition_d=None) -> "ScalingStructure":
        pc = tuple(tuple(g) for g in partition_c)
        pd = pc if partition_d is None else tuple(tuple(g) for g in partition_d)
        return cls(("grouped", pc), ("grouped", pd))


def validate_partition(partition, size: int) -> None:
    seen = sorted(i for g in partition for i in g)
    if seen != list(range(size)):
        raise ValueError(f"groups must partition range({size}), got {partition}")


# ---------------------------------------------------------------------------
# positivity

def is_metzler(M, tol: float = 0.0) -> bool:
    """Off-diagonal entries >= -tol."""
    M = np.asarray(M, dtype=float)
    off = M - np.diag(np.diag(M))
    return bool(np.all(off >= -tol))


@dataclass(frozen=True)
class PositivityViolation:
    matrix: str
    index: tuple[int, int]
    tau: float | None
    value: float

    def __str__(self):
        where = "" if self.tau is None else f" at tau={self.tau:.6g}"
        return f"{self.matrix}[{self.index[0]},{self.index[1]}] = {self.value:.6g}{where}"


@dataclass(frozen=True)
class PositivityReport:
    holds: bool
    sampled: bool  # timer-dependent blocks were only checked on a grid
    violations: tuple[PositivityViolation, ...]


def check_internal_positivity(sys: LftPositiveSystem, horizon: float = 1.0,
                              n_samples: int = 33, tol: float = 0.0) -> PositivityReport:
    """Internal positivity of the closed interconnection.

    Requires A(tau) Metzler and Gc(tau), Ec(tau) nonnegative for every
    timer value, and every other block nonnegative.  Timer-dependent
    blocks are checked on a sample grid over [0, horizon]; the report is
    flagged sampled when any of them actually depends on the timer.
    """
    bad: list[PositivityViolation] = []
    taus = np.linspace(0.0, horizon, n_samples)
    sampled = sys.flow_degree >= 1

    def scan_const(name, M, metzler=False):
        M = np.asarray(M)
        for i in range(M.shape[0]):
            for j in range(M.shape[1]):
                if metzler and i == j:
                    continue
                if M[i, j] < -tol:
                    bad.append(PositivityViolation(name, (i, j), None, float(M[i, j])))

    def scan_timer(name, F, metzler=False):
        if F.is_constant:
            scan_const(name, F.coeffs[0], metzler)
            return
        for t in taus:
            M = F.eval(t)
            for i in range(M.shape[0]):
                for j in range(M.shape[1]):
                    if metzler and i == j:
                        continue
                    if M[i, j] < -tol:
                        bad.append(PositivityViolation(name, (i, j), float(t), float(M[i, j])))

    scan_timer("A", sys.A, metzler=True)
    scan_timer("Gc", sys.Gc)
    scan_timer("Ec", sys.Ec)
    for name in ("CcD", "HcD", "FcD", "Cc", "Hc", "Fc",
                 "J", "Gd", "Ed", "CdD", "HdD", "FdD", "Cd", "Hd", "Fd"):
        scan_const(name, getattr(sys, name))
    return PositivityReport(not bad, sampled, tuple(bad))


# ---------------------------------------------------------------------------
# worst-case loop closure

def _positive_loop_inverse(H: np.ndarray, what: str) -> np.ndarray:
    """(I - H)^{-1}, required to exist and be entrywise nonnegative."""
    m = H.shape[0]
    if m == 0:
        return np.zeros((0, 0))
    I = np.eye(m)
    try:
        K = np.linalg.solve(I - H, I)
    except np.linalg.LinAlgError:
        raise WellPosednessError(f"{what}: I - H is singular; the loop cannot be closed")
    if not np.all(np.isfinite(K)) or np.min(K) < -1e-12:
        raise WellPosednessError(
            f"{what}: (I - H)^-1 has negative entries; spectral radius of H is >= 1 "
            "and the worst-case interconnection is not positive")
    return K


def worst_case_continuous(sys: LftPositiveSystem):
    """Close the continuous uncertainty loop at its extremal operator.

    Returns (A_wc, E_wc, C_wc, F_wc) with
        A_wc(tau) = A + Gc (I - HcD)^-1 CcD,   E_wc(tau) = Ec + Gc (I - HcD)^-1 FcD,
        C_wc      = Cc + Hc (I - HcD)^-1 CcD,  F_wc      = Fc + Hc (I - HcD)^-1 FcD.
    """
    K = _positive_loop_inverse(sys.HcD, "continuous channel")
    A_wc = sys.A + sys.Gc.mul_const(K @ sys.CcD)
    E_wc = sys.Ec + sys.Gc.mul_const(K @ sys.FcD)
    C_wc = sys.Cc + sys.Hc @ K @ sys.CcD
    F_wc = sys.Fc + sys.Hc @ K @ sys.FcD
    return A_wc, E_wc, C_wc, F_wc


def worst_case_discrete(sys: LftPositiveSystem):
    """Close the discrete uncertainty loop at its extremal operator."""
    K = _positive_loop_inverse(sys.HdD, "discrete channel")
    J_wc = sys.J + sys.Gd @ K @ sys.CdD
    E_wc = sys.Ed + sys.Gd @ K @ sys.FdD
    C_wc = sys.Cd + sys.Hd @ K @ sys.CdD
    F_wc = sys.Fd + sys.Hd @ K @ sys.FdD
    return J_wc, E_wc, C_wc, F_wc
