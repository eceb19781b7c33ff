"""Dwell-time stability and hybrid L1-gain certificates.

Feasibility of a small linear program over piecewise-linear co-positive
Lyapunov data certifies that an internally positive impulsive system is
asymptotically stable for every admissible dwell-time sequence and that
the hybrid gain from (w_c, w_d) to (z_c, z_d) -- the L1 norm of the
continuous part plus the summed l1 norm of the discrete part -- is below
the certified gamma.  Two families are provided:

* constrained scalings: the uncertainty channels are handled through
  diagonal scaling variables whose structure is selectable;
* free scalings (``*_free``): the scalings are eliminated analytically by
  closing each uncertainty loop at its extremal operator, which is both
  the least conservative choice and a smaller program.

The gamma found is minimized directly as the LP objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

from . import core, lp, pwl


@dataclass(frozen=True)
class CertifyOptions:
    n_nodes: int = 21          # timer grid nodes
    margin: float = 1e-7       # margin standing in for strict inequalities
    eps_min: float = 1e-6      # floor for the jump contraction variable
    feastol: float = 1e-8

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ValueError("need at least two grid nodes")
        if self.margin <= 0 or self.eps_min <= 0:
            raise ValueError("margin and eps_min must be positive")


@dataclass
class Certificate:
    kind: str                          # range | minimum | range_free | minimum_free
                                       # (delay/observer builders substitute their own tags)
    constraint: core.DwellTimeConstraint
    zeta: pwl.PwlVector
    mu_c: pwl.PwlVector | None
    mu_d: np.ndarray | None
    gamma: float
    eps: float
    sound: bool                        # False when rows were only sampled
    program: lp.LinearProgram = field(repr=False)
    assignment: np.ndarray = field(repr=False)
    restriction: str | None = None     # extra admissibility restriction, if any

    def reverify(self, feastol: float = 1e-8) -> list[lp.Violation]:
        return lp.verify(self.program, self.assignment, feastol)


@dataclass
class Infeasible:
    kind: str
    constraint: core.DwellTimeConstraint
    rows: list[tuple[str, float]]      # named conditions with Farkas weight
    margin: float

    def __str__(self):
        head = f"no {self.kind} certificate exists for {self.constraint}"
        if self.rows:
            conds = ", ".join(n for n, _ in self.rows[:8])
            more = "" if len(self.rows) <= 8 else f" (+{len(self.rows) - 8} more)"
            return f"{head}; conflicting conditions: {conds}{more}"
        return head


CertifyResult = Certificate | Infeasible


def _fmt(t: float) -> str:
    return f"{t:.12g}"


class _CertProgram:
    """Shared row emitters for all certificate variants."""

    def __init__(self, name, sys, nodes, scalings, options):
        self.sys = sys
        self.nodes = nodes
        self.opt = options
        self.p = lp.LinearProgram(name)
        n = sys.n
        N = nodes.size
        m = options.margin

        self.gamma = self.p.add_var("gamma", lb=m)
        self.eps = self.p.add_var("eps", lb=options.eps_min)
        # zeta: free except strictly positive where the theorems demand it
        self.zeta_idx = np.empty((n, N), dtype=np.int64)
        for i in range(n):
            for k in range(N):
                self.zeta_idx[i, k] = self.p.add_var(f"zeta[{i}]@n{k}")
        self.strict_zeta_nodes: set[int] = set()

        self.scalings = scalings
        self.mu_c_idx = None
        self.mu_d_idx = None
        if scalings is not None:
            self._make_scaling_vars()

    def require_positive_zeta(self, node: int) -> None:
        lb = self.opt.margin
        for i in range(self.sys.n):
            j = int(self.zeta_idx[i, node])
            self.p._lb[j] = lb
        self.strict_zeta_nodes.add(node)

    # -- scaling variables -------------------------------------------------
    def _make_scaling_vars(self):
        sys, N, m = self.sys, self.nodes.size, self.opt.margin
        kc = self.scalings.continuous
        if sys.ncD:
            if kc == "constant":
                self.mu_c_idx = ("constant",
                                 [self.p.add_var(f"mu_c[{r}]", lb=m) for r in range(sys.ncD)])
            elif kc == "unconstrained":
                self.mu_c_idx = ("pernode",
                                 [[self.p.add_var(f"mu_c[{r}]@n{k}", lb=m) for k in range(N)]
                                  for r in range(sys.ncD)])
            else:
                _, part = kc
                core.validate_partition(part, sys.ncD)
                gvars = [[self.p.add_var(f"mu_c[g{g}]@n{k}", lb=m) for k in range(N)]
                         for g in range(len(part))]
                group_of = {}
                for g, grp in enumerate(part):
                    for r in grp:
                        group_of[r] = g
                self.mu_c_idx = ("grouped", gvars, group_of)
        kd = self.scalings.discrete
        if sys.ndD:
            if kd in ("constant", "unconstrained"):
                self.mu_d_idx = ("perentry",
                                 [self.p.add_var(f"mu_d[{r}]", lb=m) for r in range(sys.ndD)])
            else:
                _, part = kd
                core.validate_partition(part, sys.ndD)
                gvars = [self.p.add_var(f"mu_d[g{g}]", lb=m) for g in range(len(part))]
                group_of = {}
                for g, grp in enumerate(part):
                    for r in grp:
                        group_of[r] = g
                self.mu_d_idx = ("grouped_d", gvars, group_of)

    def mu_c_terms(self, r: int, tau: float):
        kind = self.mu_c_idx[0]
        if kind == "constant":
            return [(self.mu_c_idx[1][r], 1.0)]
        ws = pwl.hat_weights(self.nodes, tau)
        if kind == "pernode":
            return [(self.mu_c_idx[1][r][k], w) for k, w in ws]
        _, gvars, group_of = self.mu_c_idx
        return [(gvars[group_of[r]][k], w) for k, w in ws]

    def mu_d_terms(self, r: int):
        if self.mu_d_idx[0] == "perentry":
            return [(self.mu_d_idx[1][r], 1.0)]
        _, gvars, group_of = self.mu_d_idx
        return [(gvars[group_of[r]], 1.0)]

    def zeta_terms(self, i: int, tau: float):
        return [(int(self.zeta_idx[i, k]), w) for k, w in pwl.hat_weights(self.nodes, tau)]

    def zeta_deriv_terms(self, i: int, segment: int):
        h = self.nodes[segment + 1] - self.nodes[segment]
        return [(int(self.zeta_idx[i, segment]), -1.0 / h),
                (int(self.zeta_idx[i, segment + 1]), 1.0 / h)]

    # -- row emitters --------------------------------------------------------
    def flow_rows(self, A, Gc, Ec, Cc, Hc, Fc, CcD=None, HcD=None, FcD=None,
                  label="flow"):
        """Between-jump decay rows over every grid segment.

        With scalings: columns x / wD / w of
          [zdot;0;0]^T + [z(tau); mu_c(tau); 1]^T [A Gc Ec; CcD HcD-I FcD; Cc Hc Fc] <= [0;0;g1]^T.
        Without (CcD None): the wD block is absent (already eliminated).
        Returns True when every emitted segment was sound.
        """
        sys, n = self.sys, self.sys.n
        degree = max(A.degree, Gc.degree if Gc is not None else 0, Ec.degree)
        plan = pwl.flow_sample_plan(self.nodes, degree)
        sumCc = Cc.sum(axis=0) if Cc.size else np.zeros(n)
        with_mu = CcD is not None
        if with_mu:
            sumHc = Hc.sum(axis=0) if Hc.size else np.zeros(sys.ncD)
            HmI = HcD - np.eye(sys.ncD)
        sumFc = Fc.sum(axis=0) if Fc.size else np.zeros(Ec.shape[1])
        sound = True
        for seg in plan:
            sound = sound and seg.sound
            for pidx, tau in enumerate(seg.taus):
                At = A.eval(tau)
                Gt = Gc.eval(tau) if Gc is not None else None
                Et = Ec.eval(tau)
                zts = [self.zeta_terms(i, tau) for i in range(n)]
                for j in range(n):
                    terms = list(self.zeta_deriv_terms(j, seg.segment))
                    for i in range(n):
                        if At[i, j] != 0.0:
                            terms += [(v, w * At[i, j]) for v, w in zts[i]]
                    if with_mu:
                        for r in range(sys.ncD):
                            if CcD[r, j] != 0.0:
                                terms += [(v, w * CcD[r, j]) for v, w in self.mu_c_terms(r, tau)]
                    self.p.add_row(f"{label}:x[{j}]@s{seg.segment}.{pidx}",
                                   terms, lp.LE, -sumCc[j])
                if with_mu:
                    for c in range(sys.ncD):
                        terms = []
                        for i in range(n):
                            if Gt[i, c] != 0.0:
                                terms += [(v, w * Gt[i, c]) for v, w in zts[i]]
                        for r in range(sys.ncD):
                            if HmI[r, c] != 0.0:
                                terms += [(v, w * HmI[r, c]) for v, w in self.mu_c_terms(r, tau)]
                        self.p.add_row(f"{label}:wD[{c}]@s{seg.segment}.{pidx}",
                                       terms, lp.LE, -sumHc[c])
                for l in range(Et.shape[1]):
                    terms = [(self.gamma, -1.0)]
                    for i in range(n):
                        if Et[i, l] != 0.0:
                            terms += [(v, w * Et[i, l]) for v, w in zts[i]]
                    if with_mu and FcD is not None:
                        for r in range(sys.ncD):
                            if FcD[r, l] != 0.0:
                                terms += [(v, w * FcD[r, l]) for v, w in self.mu_c_terms(r, tau)]
                    self.p.add_row(f"{label}:w[{l}]@s{seg.segment}.{pidx}",
                                   terms, lp.LE, -sumFc[l])
        return sound

    def stationarity_rows(self, tbar, A, Gc, Ec, Cc, Hc, Fc,
                          CcD=None, HcD=None, FcD=None, label="stat"):
        """Decay rows at the frozen endpoint tau = tbar (no derivative, with
        the strict contraction eps on the state columns)."""
        sys, n = self.sys, self.sys.n
        At, Et = A.eval(tbar), Ec.eval(tbar)
        Gt = Gc.eval(tbar) if Gc is not None else None
        sumCc = Cc.sum(axis=0) if Cc.size else np.zeros(n)
        sumFc = Fc.sum(axis=0) if Fc.size else np.zeros(Et.shape[1])
        with_mu = CcD is not None
        zts = [self.zeta_terms(i, tbar) for i in range(n)]
        for j in range(n):
            terms = [(self.eps, 1.0)]
            for i in range(n):
                if At[i, j] != 0.0:
                    terms += [(v, w * At[i, j]) for v, w in zts[i]]
            if with_mu:
                for r in range(sys.ncD):
                    if CcD[r, j] != 0.0:
                        terms += [(v, w * CcD[r, j]) for v, w in self.mu_c_terms(r, tbar)]
            self.p.add_row(f"{label}:x[{j}]", terms, lp.LE, -sumCc[j])
        if with_mu:
            sumHc = Hc.sum(axis=0) if Hc.size else np.zeros(sys.ncD)
            HmI = HcD - np.eye(sys.ncD)
            for c in range(sys.ncD):
                terms = []
                for i in range(n):
                    if Gt[i, c] != 0.0:
                        terms += [(v, w * Gt[i, c]) for v, w in zts[i]]
                for r in range(sys.ncD):
                    if HmI[r, c] != 0.0:
                        terms += [(v, w * HmI[r, c]) for v, w in self.mu_c_terms(r, tbar)]
                self.p.add_row(f"{label}:wD[{c}]", terms, lp.LE, -sumHc[c])
        for l in range(Et.shape[1]):
            terms = [(self.gamma, -1.0)]
            for i in range(n):
                if Et[i, l] != 0.0:
                    terms += [(v, w * Et[i, l]) for v, w in zts[i]]
            if with_mu and FcD is not None:
                for r in range(sys.ncD):
                    if FcD[r, l] != 0.0:
                        terms += [(v, w * FcD[r, l]) for v, w in self.mu_c_terms(r, tbar)]
            self.p.add_row(f"{label}:w[{l}]", terms, lp.LE, -sumFc[l])

    def jump_rows(self, thetas, J, Gd, Ed, Cd, Hd, Fd,
                  CdD=None, HdD=None, FdD=None, label="jump"):
        """Impulse contraction rows, one block per admissible dwell value.

        Columns x / wD / w of
          [-z(th);0;0]^T + [z(0); mu_d; 1]^T [J Gd Ed; CdD HdD-I FdD; Cd Hd Fd]
            <= [-eps 1; 0; g1]^T.
        The left side is piecewise-linear in th, so imposing the rows on
        the grid points covering the dwell window is sound.
        """
        sys, n = self.sys, self.sys.n
        sumCd = Cd.sum(axis=0) if Cd.size else np.zeros(n)
        with_mu = CdD is not None
        if with_mu:
            sumHd = Hd.sum(axis=0) if Hd.size else np.zeros(sys.ndD)
            HmI = HdD - np.eye(sys.ndD)
        sumFd = Fd.sum(axis=0) if Fd.size else np.zeros(Ed.shape[1])
        z0 = [self.zeta_terms(i, 0.0) for i in range(n)]
        for th in thetas:
            tag = _fmt(th)
            for j in range(n):
                terms = [(self.eps, 1.0)]
                terms += [(v, -w) for v, w in self.zeta_terms(j, th)]
                for i in range(n):
                    if J[i, j] != 0.0:
                        terms += [(v, w * J[i, j]) for v, w in z0[i]]
                if with_mu:
                    for r in range(sys.ndD):
                        if CdD[r, j] != 0.0:
                            terms += [(v, w * CdD[r, j]) for v, w in self.mu_d_terms(r)]
                self.p.add_row(f"{label}:x[{j}]@{tag}", terms, lp.LE, -sumCd[j])
            if with_mu:
                for c in range(sys.ndD):
                    terms = []
                    for i in range(n):
                        if Gd[i, c] != 0.0:
                            terms += [(v, w * Gd[i, c]) for v, w in z0[i]]
                    for r in range(sys.ndD):
                        if HmI[r, c] != 0.0:
                            terms += [(v, w * HmI[r, c]) for v, w in self.mu_d_terms(r)]
                    self.p.add_row(f"{label}:wD[{c}]@{tag}", terms, lp.LE, -sumHd[c])
            for l in range(Ed.shape[1]):
                terms = [(self.gamma, -1.0)]
                for i in range(n):
                    if Ed[i, l] != 0.0:
                        terms += [(v, w * Ed[i, l]) for v, w in z0[i]]
                if with_mu and FdD is not None:
                    for r in range(sys.ndD):
                        if FdD[r, l] != 0.0:
                            terms += [(v, w * FdD[r, l]) for v, w in self.mu_d_terms(r)]
                self.p.add_row(f"{label}:w[{l}]@{tag}", terms, lp.LE, -sumFd[l])

    # -- outcome -------------------------------------------------------------
    def finish(self, kind, constraint, sound, restriction=None) -> CertifyResult:
        self.p.set_objective({self.gamma: 1.0})
        out = lp.solve(self.p, feastol=self.opt.feastol)
        if out.status == "infeasible":
            return Infeasible(kind, constraint, out.rows_used, out.margin)
        if out.status != "optimal":  # pragma: no cover - gamma is bounded below
            raise lp.SolverError(f"unexpected solver status {out.status}")
        x = out.x
        n, N = self.sys.n, self.nodes.size
        zeta = pwl.PwlVector(self.nodes, x[self.zeta_idx])
        mu_c = mu_d = None
        if self.mu_c_idx is not None:
            vals = np.zeros((self.sys.ncD, N))
            for r in range(self.sys.ncD):
                for k, tau in enumerate(self.nodes):
                    vals[r, k] = sum(x[v] * w for v, w in self.mu_c_terms(r, tau))
            mu_c = pwl.PwlVector(self.nodes, vals)
        if self.mu_d_idx is not None:
            mu_d = np.array([sum(x[v] * w for v, w in self.mu_d_terms(r))
                             for r in range(self.sys.ndD)])
        return Certificate(
            kind=kind, constraint=constraint, zeta=zeta, mu_c=mu_c, mu_d=mu_d,
            gamma=float(x[self.gamma]), eps=float(x[self.eps]), sound=sound,
            program=self.p, assignment=x, restriction=restriction)


def _grid_for(sys_horizon: float, options: CertifyOptions) -> np.ndarray:
    return pwl.uniform_nodes(sys_horizon, options.n_nodes)


# ---------------------------------------------------------------------------
# public builders

def certify_range(sys: core.LftPositiveSystem, dt: core.Range,
                  scalings: core.ScalingStructure | None = None,
                  options: CertifyOptions | None = None) -> CertifyResult:
    """Certificate for dwell times ranging over [tmin, tmax], with channel
    scalings of the requested structure."""
    scalings = scalings or core.ScalingStructure.unconstrained()
    options = options or CertifyOptions()
    nodes = _grid_for(dt.tmax, options)
    prog = _CertProgram("certify_range", sys, nodes, scalings, options)
    prog.require_positive_zeta(0)
    sound = prog.flow_rows(sys.A, sys.Gc, sys.Ec, sys.Cc, sys.Hc, sys.Fc,
                           sys.CcD if sys.ncD else None, sys.HcD, sys.FcD)
    thetas = pwl.window_points(nodes, dt.tmin, dt.tmax)
    prog.jump_rows(thetas, sys.J, sys.Gd, sys.Ed, sys.Cd, sys.Hd, sys.Fd,
                   sys.CdD if sys.ndD else None, sys.HdD, sys.FdD)
    return prog.finish("range", dt, sound)


def certify_min(sys: core.LftPositiveSystem, dt: core.Minimum,
                scalings: core.ScalingStructure | None = None,
                options: CertifyOptions | None = None) -> CertifyResult:
    """Certificate for dwell times >= tbar.  Certificate data are frozen at
    tbar for larger timer values, matching systems whose matrices are
    constant past tbar."""
    scalings = scalings or core.ScalingStructure.unconstrained()
    options = options or CertifyOptions()
    nodes = _grid_for(dt.tbar, options)
    prog = _CertProgram("certify_min", sys, nodes, scalings, options)
    prog.require_positive_zeta(0)
    prog.require_positive_zeta(nodes.size - 1)
    sound = prog.flow_rows(sys.A, sys.Gc, sys.Ec, sys.Cc, sys.Hc, sys.Fc,
                           sys.CcD if sys.ncD else None, sys.HcD, sys.FcD)
    prog.stationarity_rows(dt.tbar, sys.A, sys.Gc, sys.Ec, sys.Cc, sys.Hc, sys.Fc,
                           sys.CcD if sys.ncD else None, sys.HcD, sys.FcD)
    prog.jump_rows([dt.tbar], sys.J, sys.Gd, sys.Ed, sys.Cd, sys.Hd, sys.Fd,
                   sys.CdD if sys.ndD else None, sys.HdD, sys.FdD)
    return prog.finish("minimum", dt, sound)


def _closed_blocks(sys: core.LftPositiveSystem):
    A_wc, Ec_wc, Cc_wc, Fc_wc = core.worst_case_continuous(sys)
    J_wc, Ed_wc, Cd_wc, Fd_wc = core.worst_case_discrete(sys)
    return A_wc, Ec_wc, Cc_wc, Fc_wc, J_wc, Ed_wc, Cd_wc, Fd_wc


def certify_range_free(sys: core.LftPositiveSystem, dt: core.Range,
                       options: CertifyOptions | None = None) -> CertifyResult:
    """Range certificate with the scalings eliminated analytically.

    Both uncertainty loops are closed at their extremal (worst-case)
    operators; requires the feedthrough loops to be well posed in the
    positive sense.  Never more conservative than any scaling structure.
    """
    options = options or CertifyOptions()
    A, Ec, Cc, Fc, J, Ed, Cd, Fd = _closed_blocks(sys)
    nodes = _grid_for(dt.tmax, options)
    prog = _CertProgram("certify_range_free", sys, nodes, None, options)
    prog.require_positive_zeta(0)
    sound = prog.flow_rows(A, None, Ec, Cc, None, Fc)
    thetas = pwl.window_points(nodes, dt.tmin, dt.tmax)
    prog.jump_rows(thetas, J, None, Ed, Cd, None, Fd)
    cert = prog.finish("range_free", dt, sound)
    return _attach_eliminated(cert, sys)


def certify_min_free(sys: core.LftPositiveSystem, dt: core.Minimum,
                     options: CertifyOptions | None = None) -> CertifyResult:
    """Minimum dwell-time certificate with the scalings eliminated."""
    options = options or CertifyOptions()
    A, Ec, Cc, Fc, J, Ed, Cd, Fd = _closed_blocks(sys)
    nodes = _grid_for(dt.tbar, options)
    prog = _CertProgram("certify_min_free", sys, nodes, None, options)
    prog.require_positive_zeta(0)
    prog.require_positive_zeta(nodes.size - 1)
    sound = prog.flow_rows(A, None, Ec, Cc, None, Fc)
    prog.stationarity_rows(dt.tbar, A, None, Ec, Cc, None, Fc)
    prog.jump_rows([dt.tbar], J, None, Ed, Cd, None, Fd)
    cert = prog.finish("minimum_free", dt, sound)
    return _attach_eliminated(cert, sys)


def _attach_eliminated(cert: CertifyResult, sys: core.LftPositiveSystem) -> CertifyResult:
    """Populate the scaling slots of a free certificate with the values the
    elimination argument implies (useful for cross-checks)."""
    if not isinstance(cert, Certificate):
        return cert
    if sys.ncD:
        K = np.linalg.solve(np.eye(sys.ncD) - sys.HcD, np.eye(sys.ncD))
        vals = np.zeros((sys.ncD, cert.zeta.nodes.size))
        for k, tau in enumerate(cert.zeta.nodes):
            vals[:, k] = (cert.zeta.eval(tau) @ sys.Gc.eval(tau) + sys.Hc.sum(axis=0)) @ K
        cert.mu_c = pwl.PwlVector(cert.zeta.nodes, vals)
    if sys.ndD:
        K = np.linalg.solve(np.eye(sys.ndD) - sys.HdD, np.eye(sys.ndD))
        cert.mu_d = (cert.zeta.eval(0.0) @ sys.Gd + sys.Hd.sum(axis=0)) @ K
    return cert
