"""Interval-observer gain synthesis for impulsive and switched systems.

An interval observer runs two corrected copies of the plant whose states
bracket the true state entrywise, x-(t) <= x(t) <= x+(t), whenever the
disturbances and the initial history are bracketed.  The bracketing
requires the observation-error dynamics to be internally positive, and
the bracket is useful when those error dynamics are stable with a small
hybrid L1 gain from the disturbance widths to the weighted error.  Both
requirements are linear in the pair (X, Y) = (X, X L), where X is a
diagonal storage function on the timer interval and L the observer gain,
so gain synthesis is again a linear program:

* positivity block: X(tau) A(tau) - Y_c(tau) C_yc + alpha I >= 0
  entrywise (with the matching delayed-state and disturbance blocks,
  shift-free) makes the closed error flow Metzler and every other closed
  block nonnegative for the recovered gain L = X^{-1} Y;
* decay block: the column-sum co-positive inequalities of the
  certificate modules, written on the closed error system under the
  substitution zeta^T = 1^T X, with the continuous channel multiplier
  mu_c = diag(U) as an extra variable;
* the gain bound gamma on the map from disturbance widths to the
  weighted errors M_c e / M_d e is the LP objective.

A feasible program therefore returns both the gains and, implicitly, a
stability/performance certificate for the closed error system at the
same gamma.  Scalings follow the delayed-system rules: ``CONSTANT``
multipliers give delay-independent conditions; ``UNCONSTRAINED_PERIODIC``
multipliers fold the delayed state into the instantaneous one (dropping
U) and restrict the result to compatible eventually periodic dwell-time
sequences -- for switched plants the mode pattern must repeat as well.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import delay, lp, pwl
from .certify import Infeasible
from .core import TimerMatrixFunction
from .delay import CONSTANT, UNCONSTRAINED_PERIODIC

_PERIODIC_RESTRICTION_SWITCHED = (
    "holds along eventually periodic dwell-time sequences, with a mode "
    "pattern repeating at the same period, whose period sum divides the "
    "continuous delay h_c; check candidate dwell sequences with "
    "validate_periodic_sequence")


@dataclass(frozen=True)
class SynthesisOptions:
    """Grid size and numerical floors for the synthesis programs."""
    n_nodes: int = 21          # timer grid nodes
    margin: float = 1e-7       # margin standing in for strict inequalities
    eps_min: float = 1e-6      # floor for the jump/stationarity contraction
    x_min: float = 1e-6        # floor for the diagonal storage entries
    alpha_max: float = 1e6     # cap on the Metzler shift variable
    feastol: float = 1e-8

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ValueError("need at least two grid nodes")
        if min(self.margin, self.eps_min, self.x_min) <= 0:
            raise ValueError("margin, eps_min and x_min must be positive")
        if self.alpha_max <= 0:
            raise ValueError("alpha_max must be positive")


def _const(M, shape, name) -> np.ndarray:
    M = np.array(M if M is not None else np.zeros(shape), dtype=float)
    if M.shape != shape:
        raise ValueError(f"{name}: expected shape {shape}, got {M.shape}")
    M.setflags(write=False)
    return M


def _tmf(M, shape, name) -> TimerMatrixFunction:
    if M is None:
        return TimerMatrixFunction.constant(np.zeros(shape))
    M = TimerMatrixFunction.wrap(M)
    if M.shape != shape:
        raise ValueError(f"{name}: expected shape {shape}, got {M.shape}")
    return M


def _weighting(M, n, name) -> np.ndarray:
    M = _const(M if M is not None else np.eye(n), (n, n), name)
    if M.min() < 0:
        raise ValueError(f"{name} must be entrywise nonnegative")
    if not M.any():
        raise ValueError(f"{name} must be nonzero (it weights the error bound)")
    return M


def _bounds_pair(b, name):
    if b is None:
        return None
    lo, hi = b
    if not (callable(lo) and callable(hi)):
        raise ValueError(f"{name} must be a (lower, upper) pair of callables")
    return (lo, hi)


@dataclass(frozen=True)
class ObservedPlant:
    """Plant with measured outputs, ready for interval-observer synthesis.

    Flow (timer tau since the last jump), jump, and measurements:
        xdot(t) = A(tau) x(t) + Gc(tau) x(t - h_c) + Ec(tau) w_c(t)
        y_c(t)  = C_yc x(t) + H_yc x(t - h_c) + F_yc w_c(t)
        x+      = J x(t_k) + Gd x(t_{k - h_d}) + Ed w_d(k)
        y_d(k)  = C_yd x(t_k) + H_yd x(t_{k - h_d}) + F_yd w_d(k)

    The synthesized observer corrects with y_c between jumps and with y_d
    at jumps; the quality of the bracket is measured through the weighted
    errors M_c e(t) and M_d e(t_k).  ``w_c_bounds`` / ``w_d_bounds``
    optionally carry the known disturbance brackets as (lower, upper)
    callables of time / jump index; the simulator consumes them, the
    synthesis programs do not.
    """

    A: TimerMatrixFunction
    Gc: TimerMatrixFunction
    Ec: TimerMatrixFunction
    C_yc: np.ndarray
    H_yc: np.ndarray
    F_yc: np.ndarray
    J: np.ndarray
    Gd: np.ndarray
    Ed: np.ndarray
    C_yd: np.ndarray
    H_yd: np.ndarray
    F_yd: np.ndarray
    M_c: np.ndarray
    M_d: np.ndarray
    h_c: float
    h_d: int
    w_c_bounds: tuple | None = None
    w_d_bounds: tuple | None = None

    @classmethod
    def build(cls, *, A, Gc=None, Ec=None, C_yc=None, H_yc=None, F_yc=None,
              J=None, Gd=None, Ed=None, C_yd=None, H_yd=None, F_yd=None,
              M_c=None, M_d=None, h_c=1.0, h_d=0,
              w_c_bounds=None, w_d_bounds=None):
        """Assemble with shape validation; omitted blocks default to zero
        (J to the identity, M_c/M_d to the identity).  Channel widths are
        inferred from whichever block of each channel is provided."""
        A = TimerMatrixFunction.wrap(A)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A: expected a square matrix, got {A.shape}")
        h_c = float(h_c)
        if not h_c > 0:
            raise ValueError("h_c must be positive")
        if h_d != int(h_d) or int(h_d) < 0:
            raise ValueError("h_d must be a nonnegative integer")

        def width(*cands):
            for m, axis in cands:
                if m is not None:
                    arr = m.coeffs[0] if isinstance(m, TimerMatrixFunction) else np.asarray(m)
                    return arr.shape[axis]
            return 0

        pc = width((Ec, 1), (F_yc, 1))
        qc = width((C_yc, 0), (H_yc, 0), (F_yc, 0))
        pd = width((Ed, 1), (F_yd, 1))
        qd = width((C_yd, 0), (H_yd, 0), (F_yd, 0))

        return cls(
            A=A, Gc=_tmf(Gc, (n, n), "Gc"), Ec=_tmf(Ec, (n, pc), "Ec"),
            C_yc=_const(C_yc, (qc, n), "C_yc"), H_yc=_const(H_yc, (qc, n), "H_yc"),
            F_yc=_const(F_yc, (qc, pc), "F_yc"),
            J=_const(J if J is not None else np.eye(n), (n, n), "J"),
            Gd=_const(Gd, (n, n), "Gd"), Ed=_const(Ed, (n, pd), "Ed"),
            C_yd=_const(C_yd, (qd, n), "C_yd"), H_yd=_const(H_yd, (qd, n), "H_yd"),
            F_yd=_const(F_yd, (qd, pd), "F_yd"),
            M_c=_weighting(M_c, n, "M_c"), M_d=_weighting(M_d, n, "M_d"),
            h_c=h_c, h_d=int(h_d),
            w_c_bounds=_bounds_pair(w_c_bounds, "w_c_bounds"),
            w_d_bounds=_bounds_pair(w_d_bounds, "w_d_bounds"))

    # dimensions ---------------------------------------------------------
    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def pc(self) -> int:
        return self.Ec.shape[1]

    @property
    def qc(self) -> int:
        return self.C_yc.shape[0]

    @property
    def pd(self) -> int:
        return self.Ed.shape[1]

    @property
    def qd(self) -> int:
        return self.C_yd.shape[0]

    @property
    def flow_degree(self) -> int:
        return max(self.A.degree, self.Gc.degree, self.Ec.degree)


@dataclass(frozen=True)
class SwitchedPlant:
    """N-mode switched plant with one continuous delay and mode-dependent
    measurements; the state is continuous across switches.

        xdot(t) = A_i x(t) + Gc_i x(t - h_c) + Ec_i w(t)
        y(t)    = C_y_i x(t) + H_y_i x(t - h_c) + F_y_i w(t),  i = sigma(t)

    All modes share the state dimension, the disturbance width and the
    measurement width; M weights the observation error in the gain bound.
    """

    A: tuple
    Gc: tuple
    Ec: tuple
    C_y: tuple
    H_y: tuple
    F_y: tuple
    M: np.ndarray
    h_c: float

    @classmethod
    def build(cls, *, A, Gc=None, Ec=None, C_y=None, H_y=None, F_y=None,
              M=None, h_c=1.0):
        """Assemble from per-mode block lists; omitted lists default to
        zero blocks of the width inferred from the first mode."""
        A = tuple(TimerMatrixFunction.wrap(Ai) for Ai in A)
        N = len(A)
        if N == 0:
            raise ValueError("need at least one mode")
        n = A[0].shape[0]
        for i, Ai in enumerate(A):
            if Ai.shape != (n, n):
                raise ValueError(f"A[{i}]: expected shape {(n, n)}, got {Ai.shape}")
        h_c = float(h_c)
        if not h_c > 0:
            raise ValueError("h_c must be positive")

        def percount(blocks, name):
            if blocks is None:
                return [None] * N
            blocks = list(blocks)
            if len(blocks) != N:
                raise ValueError(f"{name}: expected {N} per-mode blocks, got {len(blocks)}")
            return blocks

        Gc, Ec = percount(Gc, "Gc"), percount(Ec, "Ec")
        C_y, H_y, F_y = percount(C_y, "C_y"), percount(H_y, "H_y"), percount(F_y, "F_y")

        def width(blocks, axis):
            for m in blocks:
                if m is not None:
                    arr = m.coeffs[0] if isinstance(m, TimerMatrixFunction) else np.asarray(m)
                    return arr.shape[axis]
            return 0

        p = width(Ec, 1) or width(F_y, 1)
        q = width(C_y, 0) or width(H_y, 0) or width(F_y, 0)
        return cls(
            A=A,
            Gc=tuple(_tmf(m, (n, n), f"Gc[{i}]") for i, m in enumerate(Gc)),
            Ec=tuple(_tmf(m, (n, p), f"Ec[{i}]") for i, m in enumerate(Ec)),
            C_y=tuple(_const(m, (q, n), f"C_y[{i}]") for i, m in enumerate(C_y)),
            H_y=tuple(_const(m, (q, n), f"H_y[{i}]") for i, m in enumerate(H_y)),
            F_y=tuple(_const(m, (q, p), f"F_y[{i}]") for i, m in enumerate(F_y)),
            M=_weighting(M, n, "M"), h_c=h_c)

    @property
    def n_modes(self) -> int:
        return len(self.A)

    @property
    def n(self) -> int:
        return self.A[0].shape[0]

    @property
    def p(self) -> int:
        return self.Ec[0].shape[1]

    @property
    def q(self) -> int:
        return self.C_y[0].shape[0]

    def flow_degree(self, mode: int) -> int:
        return max(self.A[mode].degree, self.Gc[mode].degree, self.Ec[mode].degree)


@dataclass
class ObserverGains:
    """Synthesized gains plus the storage data certifying them.

    ``X`` holds the diagonal storage entries (one piecewise-linear entry
    per state), ``Y_c``/``Y_d`` the synthesis products X L, and
    ``L_c``/``L_d`` the recovered gains; ``L_c`` tabulates the gain at
    the grid nodes, see :meth:`L_c_at` for values in between.  ``U`` is
    the diagonal continuous-channel multiplier (None when the scalings
    fold the channel away).  For switched plants one instance per mode is
    returned and ``mode`` records which; the scalars and the program are
    shared.
    """

    kind: str
    constraint: object
    scalings: str
    X: pwl.PwlVector
    Y_c: pwl.PwlMatrix
    Y_d: np.ndarray | None
    L_c: pwl.PwlMatrix
    L_d: np.ndarray | None
    U: np.ndarray | None
    alpha: float
    eps: float
    gamma: float
    sound: bool
    program: lp.LinearProgram = field(repr=False)
    assignment: np.ndarray = field(repr=False)
    restriction: str | None = None
    mode: int | None = None

    def L_c_at(self, tau: float) -> np.ndarray:
        """Exact recovered gain X(tau)^{-1} Y_c(tau).

        Node values agree with ``L_c``; between nodes this ratio of the
        piecewise-linear synthesis data is the gain the positivity and
        decay blocks certify (the node table's linear interpolant is only
        an approximation there).  Values freeze outside the grid, which
        matches holding the gain constant past the minimum dwell time.
        """
        x = self.X.eval(tau)
        return self.Y_c.eval(tau) / x[:, None]

    def reverify(self, feastol: float = 1e-8) -> list[lp.Violation]:
        return lp.verify(self.program, self.assignment, feastol)


SynthesisResult = ObserverGains | Infeasible


def _fmt(t: float) -> str:
    return f"{t:.12g}"


def _plan_taus(nodes: np.ndarray, degree: int) -> tuple[list[float], bool]:
    """Deduplicated sample points of the flow plan, and their soundness."""
    taus: list[float] = []
    sound = True
    for seg in pwl.flow_sample_plan(nodes, degree):
        sound = sound and seg.sound
        for t in seg.taus:
            if not taus or t > taus[-1]:
                taus.append(t)
    return taus, sound


class _Block:
    """Per-mode decision variables: diagonal X at the nodes, dense Y."""

    def __init__(self, prog: lp.LinearProgram, nodes, n, q_c, x_min, tag=""):
        self.n, self.q_c = n, q_c
        self.q_d = 0
        self.tag = tag
        self.nodes = nodes
        N = nodes.size
        self.x_idx = np.empty((n, N), dtype=np.int64)
        for i in range(n):
            for k in range(N):
                self.x_idx[i, k] = prog.add_var(f"{tag}x[{i}]@n{k}", lb=x_min)
        self.yc_idx = np.empty((n, q_c, N), dtype=np.int64)
        for i in range(n):
            for r in range(q_c):
                for k in range(N):
                    self.yc_idx[i, r, k] = prog.add_var(f"{tag}yc[{i}][{r}]@n{k}")
        self.yd_idx = None

    def add_discrete(self, prog: lp.LinearProgram, q_d: int) -> None:
        self.q_d = q_d
        self.yd_idx = np.empty((self.n, q_d), dtype=np.int64)
        for i in range(self.n):
            for r in range(q_d):
                self.yd_idx[i, r] = prog.add_var(f"{self.tag}yd[{i}][{r}]")

    def x_terms(self, i: int, tau: float):
        return [(int(self.x_idx[i, k]), w) for k, w in pwl.hat_weights(self.nodes, tau)]

    def x_deriv_terms(self, i: int, segment: int):
        h = self.nodes[segment + 1] - self.nodes[segment]
        return [(int(self.x_idx[i, segment]), -1.0 / h),
                (int(self.x_idx[i, segment + 1]), 1.0 / h)]

    def yc_terms(self, i: int, r: int, tau: float):
        return [(int(self.yc_idx[i, r, k]), w) for k, w in pwl.hat_weights(self.nodes, tau)]


class Synthesis:
    """A synthesis linear program before solving.

    Built by :func:`range_synthesis`, :func:`min_synthesis` or
    :func:`switched_synthesis`; extra rows (for example
    :func:`gain_entry_box`) may be added before :meth:`solve`, which
    minimizes gamma and recovers the gains.
    """

    def __init__(self, name, kind, constraint, scalings, nodes, options,
                 switched: bool):
        self.p = lp.LinearProgram(name)
        self.kind = kind
        self.constraint = constraint
        self.scalings = scalings
        self.nodes = nodes
        self.opt = options
        self._switched = switched
        self.sound = True
        self.restriction: str | None = None
        m = options.margin
        self.gamma = self.p.add_var("gamma", lb=m)
        self.eps = self.p.add_var("eps", lb=options.eps_min)
        self.alpha = self.p.add_var("alpha", lb=m, ub=options.alpha_max)
        self.u_idx: list[int] | None = None
        self.blocks: list[_Block] = []

    # -- variables -----------------------------------------------------------
    def add_block(self, n: int, q_c: int, tag: str = "") -> _Block:
        blk = _Block(self.p, self.nodes, n, q_c, self.opt.x_min, tag)
        self.blocks.append(blk)
        return blk

    def add_channel_multiplier(self, n: int) -> None:
        """Diagonal multiplier U for the delayed-state channel, shared by
        every mode (a timer-independent multiplier cannot be
        mode-dependent along arbitrary switching sequences)."""
        self.u_idx = [self.p.add_var(f"u[{j}]", lb=self.opt.margin) for j in range(n)]

    # -- positivity block ------------------------------------------------------
    def positivity_rows(self, blk: _Block, A, Gc, Ec, C_y, H_y, F_y) -> None:
        """X(tau) A(tau) - Y_c(tau) C_y + alpha I >= 0 entrywise, plus the
        shift-free delayed-state and disturbance blocks, at the flow
        sample plan (node rows are exact when the matrices are constant)."""
        n, q = blk.n, blk.q_c
        degree = max(A.degree, Gc.degree, Ec.degree)
        taus, sound = _plan_taus(self.nodes, degree)
        self.sound = self.sound and sound
        t = blk.tag
        for tau in taus:
            At, Gt, Et = A.eval(tau), Gc.eval(tau), Ec.eval(tau)
            tag = _fmt(tau)
            for i in range(n):
                xts = blk.x_terms(i, tau)
                ycts = [blk.yc_terms(i, r, tau) for r in range(q)]

                def entry(coeff, ycol, shift):
                    # without a measurement term the row reduces to
                    # coeff * x_i (+ alpha) >= 0, vacuous for coeff >= 0
                    # since x_i >= x_min > 0 and alpha > 0 by their bounds
                    if coeff >= 0.0 and not ycol.any():
                        return None
                    terms = []
                    if coeff != 0.0:
                        terms += [(v, w * coeff) for v, w in xts]
                    for r in range(q):
                        if ycol[r] != 0.0:
                            terms += [(v, -w * ycol[r]) for v, w in ycts[r]]
                    if shift:
                        terms.append((self.alpha, 1.0))
                    return terms

                for j in range(n):
                    terms = entry(At[i, j], C_y[:, j], i == j)
                    if terms:
                        self.p.add_row(f"{t}pos:A[{i},{j}]@{tag}", terms, lp.GE, 0.0)
                for j in range(n):
                    terms = entry(Gt[i, j], H_y[:, j], False)
                    if terms:
                        self.p.add_row(f"{t}pos:Gc[{i},{j}]@{tag}", terms, lp.GE, 0.0)
                for l in range(Et.shape[1]):
                    terms = entry(Et[i, l], F_y[:, l], False)
                    if terms:
                        self.p.add_row(f"{t}pos:Ec[{i},{l}]@{tag}", terms, lp.GE, 0.0)

    def discrete_positivity_rows(self, blk: _Block, J, Gd, Ed, C_yd, H_yd, F_yd) -> None:
        """X(0) J - Y_d C_yd >= 0 entrywise, plus the delayed-state and
        disturbance jump blocks."""
        n, q_d = blk.n, blk.q_d
        t = blk.tag
        for i in range(n):
            xv = int(blk.x_idx[i, 0])

            def entry(coeff, ycol):
                if coeff >= 0.0 and not ycol.any():
                    return None    # vacuous: coeff * x_i >= 0 holds by the bound
                terms = [] if coeff == 0.0 else [(xv, coeff)]
                for r in range(q_d):
                    if ycol[r] != 0.0:
                        terms.append((int(blk.yd_idx[i, r]), -ycol[r]))
                return terms

            for j in range(n):
                terms = entry(J[i, j], C_yd[:, j])
                if terms:
                    self.p.add_row(f"{t}pos:J[{i},{j}]", terms, lp.GE, 0.0)
            for j in range(n):
                terms = entry(Gd[i, j], H_yd[:, j])
                if terms:
                    self.p.add_row(f"{t}pos:Gd[{i},{j}]", terms, lp.GE, 0.0)
            for l in range(Ed.shape[1]):
                terms = entry(Ed[i, l], F_yd[:, l])
                if terms:
                    self.p.add_row(f"{t}pos:Ed[{i},{l}]", terms, lp.GE, 0.0)

    # -- decay block -----------------------------------------------------------
    def _state_col_terms(self, blk, tau, F, Cf):
        """Column sums of X(tau) F - Y_c(tau) Cf, one term list per column."""
        n, q = blk.n, blk.q_c
        xts = [blk.x_terms(i, tau) for i in range(n)]
        out = []
        for j in range(F.shape[1]):
            terms = []
            for i in range(n):
                if F[i, j] != 0.0:
                    terms += [(v, w * F[i, j]) for v, w in xts[i]]
            for i in range(n):
                for r in range(q):
                    if Cf[r, j] != 0.0:
                        terms += [(v, -w * Cf[r, j]) for v, w in blk.yc_terms(i, r, tau)]
            out.append(terms)
        return out

    def flow_decay_rows(self, blk: _Block, A, Gc, Ec, C_y, H_y, F_y, sumM,
                        *, folded: bool) -> None:
        """Decay of 1^T X between jumps: column sums of
        Xdot + X A - Y_c C_y + U <= -1^T M_c together with the
        delayed-state columns X Gc - Y_c H_y - U <= 0 and the disturbance
        columns X Ec - Y_c F_y <= gamma 1^T.  ``folded`` merges the
        delayed state into the instantaneous one and drops U."""
        n = blk.n
        degree = max(A.degree, Gc.degree, Ec.degree)
        plan = pwl.flow_sample_plan(self.nodes, degree)
        self.sound = self.sound and all(seg.sound for seg in plan)
        t = blk.tag
        for seg in plan:
            for pidx, tau in enumerate(seg.taus):
                At, Gt, Et = A.eval(tau), Gc.eval(tau), Ec.eval(tau)
                Ft = At + Gt if folded else At
                Cf = C_y + H_y if folded else C_y
                suffix = f"@s{seg.segment}.{pidx}"
                for j, terms in enumerate(self._state_col_terms(blk, tau, Ft, Cf)):
                    terms = blk.x_deriv_terms(j, seg.segment) + terms
                    if self.u_idx is not None:
                        terms.append((self.u_idx[j], 1.0))
                    self.p.add_row(f"{t}flow:x[{j}]{suffix}", terms, lp.LE, -sumM[j])
                if not folded:
                    for j, terms in enumerate(self._state_col_terms(blk, tau, Gt, H_y)):
                        terms.append((self.u_idx[j], -1.0))
                        self.p.add_row(f"{t}flow:xd[{j}]{suffix}", terms, lp.LE, 0.0)
                for l, terms in enumerate(self._state_col_terms(blk, tau, Et, F_y)):
                    terms.append((self.gamma, -1.0))
                    self.p.add_row(f"{t}flow:w[{l}]{suffix}", terms, lp.LE, 0.0)

    def stationarity_decay_rows(self, blk: _Block, tbar, A, Gc, Ec, C_y, H_y,
                                F_y, sumM, *, folded: bool) -> None:
        """Frozen decay at tau = tbar (no derivative, strict contraction
        eps on the state columns), for the minimum dwell-time variants."""
        At, Gt, Et = A.eval(tbar), Gc.eval(tbar), Ec.eval(tbar)
        Ft = At + Gt if folded else At
        Cf = C_y + H_y if folded else C_y
        t = blk.tag
        for j, terms in enumerate(self._state_col_terms(blk, tbar, Ft, Cf)):
            terms.append((self.eps, 1.0))
            if self.u_idx is not None:
                terms.append((self.u_idx[j], 1.0))
            self.p.add_row(f"{t}stat:x[{j}]", terms, lp.LE, -sumM[j])
        if not folded:
            for j, terms in enumerate(self._state_col_terms(blk, tbar, Gt, H_y)):
                terms.append((self.u_idx[j], -1.0))
                self.p.add_row(f"{t}stat:xd[{j}]", terms, lp.LE, 0.0)
        for l, terms in enumerate(self._state_col_terms(blk, tbar, Et, F_y)):
            terms.append((self.gamma, -1.0))
            self.p.add_row(f"{t}stat:w[{l}]", terms, lp.LE, 0.0)

    def jump_decay_rows(self, blk: _Block, thetas, J, Gd, Ed, C_yd, H_yd,
                        F_yd, sumMd) -> None:
        """Jump contraction rows: column sums of
        X(0)(J + Gd) - Y_d(C_yd + H_yd) - X(theta) + eps I <= -1^T M_d
        plus the jump disturbance columns, one block per admissible dwell
        value.  The same contraction row serves the range and the minimum
        dwell-time variants."""
        n, q_d = blk.n, blk.q_d
        JG = J + Gd
        CH = C_yd + H_yd
        x0 = [blk.x_terms(i, 0.0) for i in range(n)]
        t = blk.tag
        for th in thetas:
            tag = _fmt(th)
            for j in range(n):
                terms = [(self.eps, 1.0)]
                terms += [(v, -w) for v, w in blk.x_terms(j, th)]
                for i in range(n):
                    if JG[i, j] != 0.0:
                        terms += [(v, w * JG[i, j]) for v, w in x0[i]]
                    for r in range(q_d):
                        if CH[r, j] != 0.0:
                            terms.append((int(blk.yd_idx[i, r]), -CH[r, j]))
                self.p.add_row(f"{t}jump:x[{j}]@{tag}", terms, lp.LE, -sumMd[j])
            for l in range(Ed.shape[1]):
                terms = [(self.gamma, -1.0)]
                for i in range(n):
                    if Ed[i, l] != 0.0:
                        terms += [(v, w * Ed[i, l]) for v, w in x0[i]]
                    for r in range(q_d):
                        if F_yd[r, l] != 0.0:
                            terms.append((int(blk.yd_idx[i, r]), -F_yd[r, l]))
                self.p.add_row(f"{t}jump:w[{l}]@{tag}", terms, lp.LE, 0.0)

    def coupling_rows(self) -> None:
        """Mode hand-off contraction: column sums of
        X_a(0) - X_b(Tbar) + eps I <= 0 for every ordered pair a != b
        (the state passes unchanged from mode b into mode a)."""
        last = self.nodes.size - 1
        for a, ba in enumerate(self.blocks):
            for b, bb in enumerate(self.blocks):
                if a == b:
                    continue
                for s in range(ba.n):
                    terms = [(int(ba.x_idx[s, 0]), 1.0),
                             (int(bb.x_idx[s, last]), -1.0),
                             (self.eps, 1.0)]
                    self.p.add_row(f"couple:m{a}.m{b}:x[{s}]", terms, lp.LE, 0.0)

    # -- outcome ---------------------------------------------------------------
    def solve(self):
        """Minimize gamma; returns ObserverGains (a list for switched
        plants, one per mode) or Infeasible with named conditions."""
        self.p.set_objective({self.gamma: 1.0})
        out = lp.solve(self.p, feastol=self.opt.feastol)
        if out.status == "infeasible":
            return Infeasible(self.kind, self.constraint, out.rows_used, out.margin)
        if out.status != "optimal":  # pragma: no cover - gamma is bounded below
            raise lp.SolverError(f"unexpected solver status {out.status}")
        x = out.x
        results = []
        for mi, blk in enumerate(self.blocks):
            X = pwl.PwlVector(self.nodes, x[blk.x_idx])
            Y_c = pwl.PwlMatrix(self.nodes, x[blk.yc_idx])
            Y_d = x[blk.yd_idx] if blk.yd_idx is not None else None
            L_c, L_d = recover_gains(X, Y_c, Y_d, x_min=self.opt.x_min)
            U = None
            if self.u_idx is not None:
                U = np.array([x[v] for v in self.u_idx])
            results.append(ObserverGains(
                kind=self.kind, constraint=self.constraint, scalings=self.scalings,
                X=X, Y_c=Y_c, Y_d=Y_d, L_c=L_c, L_d=L_d, U=U,
                alpha=float(x[self.alpha]), eps=float(x[self.eps]),
                gamma=float(x[self.gamma]), sound=self.sound,
                program=self.p, assignment=x, restriction=self.restriction,
                mode=mi if self._switched else None))
        return results if self._switched else results[0]


# ---------------------------------------------------------------------------
# public builders

def _check_scalings(scalings) -> str:
    if scalings in (CONSTANT, UNCONSTRAINED_PERIODIC):
        return scalings
    raise ValueError(
        "observer synthesis admits scalings CONSTANT or UNCONSTRAINED_PERIODIC "
        f"only (the error system inherits the delayed-state channels, whose "
        f"multipliers must commute with the delay); got {scalings!r}")


def range_synthesis(plant: ObservedPlant, dt, scalings: str = CONSTANT,
                    options: SynthesisOptions | None = None) -> Synthesis:
    """Unsolved gain-synthesis program for dwell times in [tmin, tmax]."""
    scalings = _check_scalings(scalings)
    options = options or SynthesisOptions()
    base = delay._base_range(plant, dt)
    periodic = scalings == UNCONSTRAINED_PERIODIC
    nodes = pwl.uniform_nodes(base.tmax, options.n_nodes)
    syn = Synthesis("synthesize_range",
                    "observer_range_periodic" if periodic else "observer_range",
                    dt, scalings, nodes, options, switched=False)
    blk = syn.add_block(plant.n, plant.qc)
    blk.add_discrete(syn.p, plant.qd)
    if not periodic:
        syn.add_channel_multiplier(plant.n)
    syn.positivity_rows(blk, plant.A, plant.Gc, plant.Ec,
                        plant.C_yc, plant.H_yc, plant.F_yc)
    syn.discrete_positivity_rows(blk, plant.J, plant.Gd, plant.Ed,
                                 plant.C_yd, plant.H_yd, plant.F_yd)
    syn.flow_decay_rows(blk, plant.A, plant.Gc, plant.Ec,
                        plant.C_yc, plant.H_yc, plant.F_yc,
                        plant.M_c.sum(axis=0), folded=periodic)
    thetas = pwl.window_points(nodes, base.tmin, base.tmax)
    syn.jump_decay_rows(blk, thetas, plant.J, plant.Gd, plant.Ed,
                        plant.C_yd, plant.H_yd, plant.F_yd,
                        plant.M_d.sum(axis=0))
    if periodic:
        syn.restriction = delay._PERIODIC_RESTRICTION
    return syn


def min_synthesis(plant: ObservedPlant, dt, scalings: str = CONSTANT,
                  options: SynthesisOptions | None = None) -> Synthesis:
    """Unsolved gain-synthesis program for dwell times >= tbar; storage
    and gains freeze at tbar for larger timer values."""
    scalings = _check_scalings(scalings)
    options = options or SynthesisOptions()
    base = delay._base_minimum(plant, dt)
    periodic = scalings == UNCONSTRAINED_PERIODIC
    nodes = pwl.uniform_nodes(base.tbar, options.n_nodes)
    syn = Synthesis("synthesize_min",
                    "observer_minimum_periodic" if periodic else "observer_minimum",
                    dt, scalings, nodes, options, switched=False)
    blk = syn.add_block(plant.n, plant.qc)
    blk.add_discrete(syn.p, plant.qd)
    if not periodic:
        syn.add_channel_multiplier(plant.n)
    syn.positivity_rows(blk, plant.A, plant.Gc, plant.Ec,
                        plant.C_yc, plant.H_yc, plant.F_yc)
    syn.discrete_positivity_rows(blk, plant.J, plant.Gd, plant.Ed,
                                 plant.C_yd, plant.H_yd, plant.F_yd)
    syn.flow_decay_rows(blk, plant.A, plant.Gc, plant.Ec,
                        plant.C_yc, plant.H_yc, plant.F_yc,
                        plant.M_c.sum(axis=0), folded=periodic)
    syn.stationarity_decay_rows(blk, base.tbar, plant.A, plant.Gc, plant.Ec,
                                plant.C_yc, plant.H_yc, plant.F_yc,
                                plant.M_c.sum(axis=0), folded=periodic)
    syn.jump_decay_rows(blk, [base.tbar], plant.J, plant.Gd, plant.Ed,
                        plant.C_yd, plant.H_yd, plant.F_yd,
                        plant.M_d.sum(axis=0))
    if periodic:
        syn.restriction = delay._PERIODIC_RESTRICTION
    return syn


def switched_synthesis(plant: SwitchedPlant, dt, scalings: str = CONSTANT,
                       options: SynthesisOptions | None = None) -> Synthesis:
    """Unsolved per-mode gain-synthesis program under a minimum dwell
    time between switches."""
    scalings = _check_scalings(scalings)
    options = options or SynthesisOptions()
    if plant.n_modes < 2:
        raise ValueError("switched synthesis needs at least two modes")
    base = delay._base_minimum(plant, dt)
    periodic = scalings == UNCONSTRAINED_PERIODIC
    nodes = pwl.uniform_nodes(base.tbar, options.n_nodes)
    syn = Synthesis("synthesize_switched",
                    "observer_switched_periodic" if periodic else "observer_switched",
                    dt, scalings, nodes, options, switched=True)
    if not periodic:
        syn.add_channel_multiplier(plant.n)
    sumM = plant.M.sum(axis=0)
    for mi in range(plant.n_modes):
        blk = syn.add_block(plant.n, plant.q, tag=f"m{mi}:")
        syn.positivity_rows(blk, plant.A[mi], plant.Gc[mi], plant.Ec[mi],
                            plant.C_y[mi], plant.H_y[mi], plant.F_y[mi])
        syn.flow_decay_rows(blk, plant.A[mi], plant.Gc[mi], plant.Ec[mi],
                            plant.C_y[mi], plant.H_y[mi], plant.F_y[mi],
                            sumM, folded=periodic)
        syn.stationarity_decay_rows(blk, base.tbar, plant.A[mi], plant.Gc[mi],
                                    plant.Ec[mi], plant.C_y[mi], plant.H_y[mi],
                                    plant.F_y[mi], sumM, folded=periodic)
    syn.coupling_rows()
    if periodic:
        syn.restriction = _PERIODIC_RESTRICTION_SWITCHED
    return syn


def synthesize_range(plant: ObservedPlant, dt, scalings: str = CONSTANT,
                     options: SynthesisOptions | None = None,
                     gain_box: tuple | None = None) -> SynthesisResult:
    """Gains for dwell times ranging over [tmin, tmax]; gamma minimized."""
    syn = range_synthesis(plant, dt, scalings, options)
    if gain_box is not None:
        gain_entry_box(syn, *gain_box)
    return syn.solve()


def synthesize_min(plant: ObservedPlant, dt, scalings: str = CONSTANT,
                   options: SynthesisOptions | None = None,
                   gain_box: tuple | None = None) -> SynthesisResult:
    """Gains for dwell times >= tbar; gamma minimized."""
    syn = min_synthesis(plant, dt, scalings, options)
    if gain_box is not None:
        gain_entry_box(syn, *gain_box)
    return syn.solve()


def synthesize_switched(plant: SwitchedPlant, dt, scalings: str = CONSTANT,
                        options: SynthesisOptions | None = None,
                        gain_box: tuple | None = None):
    """Per-mode gains (a list, one entry per mode) under a minimum dwell
    time between switches; gamma minimized."""
    syn = switched_synthesis(plant, dt, scalings, options)
    if gain_box is not None:
        gain_entry_box(syn, *gain_box)
    return syn.solve()


def recover_gains(X: pwl.PwlVector, Y_c: pwl.PwlMatrix,
                  Y_d: np.ndarray | None, x_min: float = 1e-6):
    """Observer gains from the synthesis variables.

    Exact diagonal solve per node, L_c(tau_k) = X(tau_k)^{-1} Y_c(tau_k),
    and L_d = X(0)^{-1} Y_d.  X holds the diagonal storage entries and
    must be >= x_min at every node; synthesis enforces that bound, so a
    violation here indicates an internal error.
    """
    vals = X.values
    if vals.min() < x_min * (1.0 - 1e-9):
        raise RuntimeError(
            f"storage diagonal fell below its floor ({vals.min()} < {x_min}); "
            "gain recovery would be ill-conditioned")
    L_c = pwl.PwlMatrix(X.nodes, Y_c.values / vals[:, None, :])
    L_d = None
    if Y_d is not None:
        L_d = np.asarray(Y_d, dtype=float) / vals[:, 0][:, None]
    return L_c, L_d


def gain_entry_box(synthesis: Synthesis, lo: float, hi: float) -> Synthesis:
    """Constrain every recovered gain entry to [lo, hi], in place.

    Adds the node rows lo * X_i(tau_k) <= Y_c[i, r](tau_k) <= hi * X_i(tau_k)
    (piecewise-linear in tau, hence valid on the whole interval) and the
    matching rows on Y_d against X(0).  Since X is diagonal positive this
    is exactly lo <= L[i, r] <= hi for the recovered gains.  Infinite
    bounds drop the corresponding side; lo > hi is an error.  Returns the
    modified synthesis.
    """
    lo, hi = float(lo), float(hi)
    if not lo <= hi:
        raise ValueError(f"empty gain box: lo={lo} > hi={hi}")
    p = synthesis.p
    for blk in synthesis.blocks:
        t = blk.tag
        for i in range(blk.n):
            for r in range(blk.q_c):
                for k in range(synthesis.nodes.size):
                    xv, yv = int(blk.x_idx[i, k]), int(blk.yc_idx[i, r, k])
                    if np.isfinite(lo):
                        p.add_row(f"{t}box:lo:yc[{i}][{r}]@n{k}",
                                  [(xv, lo), (yv, -1.0)], lp.LE, 0.0)
                    if np.isfinite(hi):
                        p.add_row(f"{t}box:hi:yc[{i}][{r}]@n{k}",
                                  [(yv, 1.0), (xv, -hi)], lp.LE, 0.0)
            if blk.yd_idx is not None:
                xv = int(blk.x_idx[i, 0])
                for r in range(blk.q_d):
                    yv = int(blk.yd_idx[i, r])
                    if np.isfinite(lo):
                        p.add_row(f"{t}box:lo:yd[{i}][{r}]",
                                  [(xv, lo), (yv, -1.0)], lp.LE, 0.0)
                    if np.isfinite(hi):
                        p.add_row(f"{t}box:hi:yd[{i}][{r}]",
                                  [(yv, 1.0), (xv, -hi)], lp.LE, 0.0)
    return synthesis


def error_system(plant: ObservedPlant, L_c=None, L_d=None) -> delay.DelaySystem:
    """Closed observation-error system for constant gains.

    The error obeys the delayed impulsive dynamics with flow blocks
    A - L_c C_yc / Gc - L_c H_yc / Ec - L_c F_yc, jump blocks
    J - L_d C_yd / Gd - L_d H_yd / Ed - L_d F_yd, and the weighted errors
    M_c e / M_d e as performance outputs, so the certificate builders
    apply to it directly.  Only constant gains can be folded into
    constant blocks; gains that vary with the timer are certified by
    their own synthesis program instead (its decay block is exactly the
    certificate for the closed system).
    """
    n = plant.n
    L_c = np.zeros((n, plant.qc)) if L_c is None else np.asarray(L_c, dtype=float)
    L_d = np.zeros((n, plant.qd)) if L_d is None else np.asarray(L_d, dtype=float)
    if L_c.shape != (n, plant.qc):
        raise ValueError(f"L_c: expected shape {(n, plant.qc)}, got {L_c.shape}")
    if L_d.shape != (n, plant.qd):
        raise ValueError(f"L_d: expected shape {(n, plant.qd)}, got {L_d.shape}")
    return delay.DelaySystem.build(
        A=plant.A + TimerMatrixFunction.constant(-(L_c @ plant.C_yc)),
        Gc=plant.Gc + TimerMatrixFunction.constant(-(L_c @ plant.H_yc)),
        Ec=plant.Ec + TimerMatrixFunction.constant(-(L_c @ plant.F_yc)),
        Cc=plant.M_c,
        J=plant.J - L_d @ plant.C_yd,
        Gd=plant.Gd - L_d @ plant.H_yd,
        Ed=plant.Ed - L_d @ plant.F_yd,
        Cd=plant.M_d,
        h_c=plant.h_c, h_d=plant.h_d)
