"""Linear programming with verifiable outcomes.

Dense two-phase primal simplex on the full tableau, written for the
certificate problems built elsewhere in this package: hundreds to a few
thousand rows, and every outcome must be independently checkable.
Optimal points are re-verified against the original rows before being
reported, infeasibility always carries Farkas multipliers that
``farkas_check`` validates against the variable box, and ``dump``
produces a canonical text form so two differently-built programs can be
compared for exact row-level equality.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

LE = "<="
GE = ">="
EQ = "=="
_RELS = (LE, GE, EQ)

_PIVTOL = 1e-7   # smallest acceptable pivot element (rows are equilibrated)
_RATIOTOL = 1e-9  # entries this large limit the ratio test (smaller ones are noise)
_OPTTOL = 1e-9   # reduced-cost optimality threshold
_STALL_WINDOW = 60  # degenerate iterations before switching to Bland's rule
_REFRESH_EVERY = 40  # pivots between exact tableau rebuilds


class SolverError(RuntimeError):
    """The solver could not produce an outcome that passes verification."""


@dataclass(frozen=True)
class Violation:
    row: str
    amount: float

    def __str__(self) -> str:
        return f"{self.row}: violated by {self.amount:.3e}"


class LinearProgram:
    """minimize c.x  subject to rows a.x (<=|==|>=) b and box bounds on x.

    Variables and rows are identified by insertion order; names are kept
    for reporting and for the canonical dump.  Instances are treated as
    immutable once handed to :func:`solve`.
    """

    def __init__(self, name: str = "lp"):
        self.name = name
        self._var_names: list[str] = []
        self._lb: list[float] = []
        self._ub: list[float] = []
        # rows: (name, var-index array, coefficient array, relation, rhs)
        self._rows: list[tuple[str, np.ndarray, np.ndarray, str, float]] = []
        self._obj: dict[int, float] = {}

    # ------------------------------------------------------------------
    # construction
    def add_var(self, name: str, lb: float | None = None, ub: float | None = None) -> int:
        l = -np.inf if lb is None else float(lb)
        u = np.inf if ub is None else float(ub)
        if l > u:
            raise ValueError(f"variable {name}: lower bound {l} exceeds upper bound {u}")
        self._var_names.append(name)
        self._lb.append(l)
        self._ub.append(u)
        return len(self._var_names) - 1

    def add_row(self, name: str, coeffs, rel: str, rhs: float) -> int:
        if rel not in _RELS:
            raise ValueError(f"row {name}: unknown relation {rel!r}")
        items = coeffs.items() if isinstance(coeffs, dict) else coeffs
        acc: dict[int, float] = {}
        for j, c in items:
            j = int(j)
            if not 0 <= j < len(self._var_names):
                raise IndexError(f"row {name}: variable index {j} out of range")
            c = float(c)
            if c != 0.0:
                acc[j] = acc.get(j, 0.0) + c
        idx = np.fromiter(acc.keys(), dtype=np.int64, count=len(acc))
        coef = np.fromiter(acc.values(), dtype=np.float64, count=len(acc))
        self._rows.append((name, idx, coef, rel, float(rhs)))
        return len(self._rows) - 1

    def add_to_objective(self, j: int, coef: float) -> None:
        self._obj[j] = self._obj.get(j, 0.0) + float(coef)

    def set_objective(self, coeffs: dict[int, float]) -> None:
        self._obj = {int(j): float(c) for j, c in coeffs.items() if c != 0.0}

    # ------------------------------------------------------------------
    # introspection
    @property
    def num_vars(self) -> int:
        return len(self._var_names)

    @property
    def num_rows(self) -> int:
        return len(self._rows)

    @property
    def var_names(self) -> list[str]:
        return list(self._var_names)

    @property
    def row_names(self) -> list[str]:
        return [r[0] for r in self._rows]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self._lb), np.array(self._ub)

    def row_value(self, i: int, x: np.ndarray) -> float:
        _, idx, coef, _, _ = self._rows[i]
        return float(coef @ x[idx])

    def objective_value(self, x: np.ndarray) -> float:
        return float(sum(c * x[j] for j, c in self._obj.items()))


@dataclass
class LpSolution:
    status: str  # "optimal"
    x: np.ndarray
    objective: float
    var_names: list[str]

    def __getitem__(self, name: str) -> float:
        return float(self.x[self.var_names.index(name)])


@dataclass
class LpInfeasible:
    status: str  # "infeasible"
    farkas: np.ndarray  # one multiplier per original row (see farkas_check)
    margin: float       # certified Farkas gap
    rows_used: list[tuple[str, float]]  # rows with non-negligible multipliers


@dataclass
class LpUnbounded:
    status: str  # "unbounded"
    ray: np.ndarray  # feasible improving direction in original variables


def _standard_form(lp: LinearProgram):
    """Rewrite the program over nonnegative variables.

    x = shift + sum(sign * xhat[col]) per variable; doubly-bounded
    variables get an extra internal bound row.  Returns the internal
    row matrix (still with named relations, rhs >= 0 after flips) and
    the bookkeeping needed to map solutions and multipliers back.
    """
    ns = lp.num_vars
    lb, ub = lp.bounds()
    var_cols: list[list[tuple[int, float]]] = []
    shift = np.zeros(ns)
    ncol = 0
    bound_rows: list[tuple[int, float]] = []  # (column, width)
    for j in range(ns):
        l, u = lb[j], ub[j]
        if np.isinf(l) and np.isinf(u):
            var_cols.append([(ncol, 1.0), (ncol + 1, -1.0)])
            ncol += 2
        elif not np.isinf(l):
            shift[j] = l
            var_cols.append([(ncol, 1.0)])
            if not np.isinf(u):
                bound_rows.append((ncol, u - l))
            ncol += 1
        else:  # only upper bound finite: mirror
            shift[j] = u
            var_cols.append([(ncol, -1.0)])
            ncol += 1

    mrows = lp.num_rows + len(bound_rows)
    A = np.zeros((mrows, ncol))
    b = np.zeros(mrows)
    rel = []
    for i, (_, idx, coef, r, rhs) in enumerate(lp._rows):
        bi = rhs
        for j, c in zip(idx, coef):
            bi -= c * shift[j]
            for col, s in var_cols[j]:
                A[i, col] += c * s
        b[i] = bi
        rel.append(r)
    for k, (col, width) in enumerate(bound_rows):
        i = lp.num_rows + k
        A[i, col] = 1.0
        b[i] = width
        rel.append(LE)

    flip = np.ones(mrows)
    for i in range(mrows):
        if b[i] < 0:
            A[i] *= -1.0
            b[i] *= -1.0
            flip[i] = -1.0
            rel[i] = {LE: GE, GE: LE, EQ: EQ}[rel[i]]
    # row equilibration keeps pivot magnitudes comparable across rows
    rowscale = np.ones(mrows)
    for i in range(mrows):
        s = float(np.max(np.abs(A[i]), initial=0.0))
        if s > 0.0:
            rowscale[i] = s
            A[i] /= s
            b[i] /= s
    return A, b, rel, flip, rowscale, var_cols, shift, len(bound_rows)


def _recompute_costrow(c_full: np.ndarray, T: np.ndarray, basis: np.ndarray) -> np.ndarray:
    z = np.concatenate([c_full, [0.0]])
    cb = c_full[basis]
    nz = np.nonzero(cb)[0]
    for i in nz:
        z -= cb[i] * T[i]
    return z


def _pivot(T: np.ndarray, z: np.ndarray, basis: np.ndarray, r: int, e: int) -> None:
    Trow = T[r] / T[r, e]
    cols = T[:, e].copy()
    T -= np.outer(cols, Trow)
    T[r] = Trow
    z -= z[e] * Trow
    basis[r] = e


def _pivot_loop(T, z, basis, allowed, max_iter, start_bland=False, refresh=None):
    """Minimize z over the tableau.  Returns (status, T, z) where status is
    "optimal" or ("unbounded", column).

    Positive entries above the noise floor limit the step; sub-noise entries
    are ignored, which can walk their rows slightly negative — the caller
    cleans that up afterwards with dual pivots.  The chosen pivot element
    itself must clear the (larger) pivot threshold or the column is set
    aside.  The tableau is rebuilt from pristine data every few dozen pivots
    so that outer-product update drift never steers the ratio test.
    """
    use_bland = start_bland
    stall = 0
    best = z[-1]
    blocked = np.zeros(allowed.size, dtype=bool)
    for it in range(max_iter):
        if refresh is not None and it and it % _REFRESH_EVERY == 0:
            fresh = refresh(basis)
            if fresh is not None:
                T, z = fresh
                best = max(best, z[-1])
        red = z[:-1]
        cand = np.nonzero((red < -_OPTTOL) & allowed & ~blocked)[0]
        if cand.size == 0:
            return "optimal", T, z
        if use_bland:
            e = int(cand[0])
        else:
            e = int(cand[np.argmin(red[cand])])
        col = T[:, e]
        pos = np.nonzero(col > _RATIOTOL)[0]
        if pos.size == 0:
            if np.max(col, initial=0.0) > 0.0:
                # positive entries exist but all below the noise floor:
                # numerically useless column, not evidence of unboundedness
                blocked[e] = True
                continue
            return ("unbounded", e), T, z
        ratios = np.maximum(T[pos, -1], 0.0) / col[pos]
        rmin = ratios.min()
        ties = pos[ratios <= rmin + 1e-12 * (1.0 + abs(rmin))]
        if use_bland:
            r = int(ties[np.argmin(basis[ties])])
            if col[r] <= _PIVTOL:
                r = int(ties[np.argmax(col[ties])])
        else:
            r = int(ties[np.argmax(col[ties])])
        if col[r] <= _PIVTOL:
            # no binding row has an element large enough to divide by safely
            blocked[e] = True
            continue
        _pivot(T, z, basis, r, e)
        # the tableau keeps -objective in the rhs cell: progress = increase
        if z[-1] > best + 1e-13 * (1.0 + abs(best)):
            best = z[-1]
            stall = 0
        else:
            stall += 1
            if stall >= _STALL_WINDOW:
                use_bland = True
    raise SolverError("simplex iteration limit exceeded")


def _dual_repair(T, z, basis, allowed, max_iter=400):
    """Clean small negative basic values out of a dual-feasible tableau.

    Dual-simplex pivots: leave on the most negative rhs entry, enter on the
    column minimizing reduced cost over |element| among negative elements of
    that row, which keeps the reduced costs nonnegative (the point stays
    optimal).  Returns True once the rhs column is nonnegative.
    """
    for _ in range(max_iter):
        b = T[:, -1]
        r = int(np.argmin(b))
        if b[r] >= -1e-11:
            return True
        row = T[r, :-1]
        cand = np.nonzero((row < -_PIVTOL) & allowed)[0]
        if cand.size == 0:
            return False
        ratios = np.maximum(z[cand], 0.0) / (-row[cand])
        rmin = ratios.min()
        ties = cand[ratios <= rmin + 1e-12 * (1.0 + abs(rmin))]
        e = int(ties[np.argmax(-row[ties])])
        _pivot(T, z, basis, r, e)
    return False


def solve(lp: LinearProgram, feastol: float = 1e-8, max_iter: int | None = None):
    """Solve the program.  Returns LpSolution, LpInfeasible or LpUnbounded.

    Optimal outcomes are polished by re-solving the final basis and then
    re-verified against the original rows; infeasible outcomes carry a
    Farkas certificate that has already passed :func:`farkas_check`.

    The fast path prices with Dantzig's rule; if it fails to produce a
    verifiable outcome, one deterministic retry is made with Bland's rule
    from the first pivot.
    """
    try:
        return _solve_once(lp, feastol, max_iter, start_bland=False)
    except SolverError:
        return _solve_once(lp, feastol, max_iter, start_bland=True)


def _solve_once(lp: LinearProgram, feastol: float, max_iter: int | None, start_bland: bool):
    A, b, rel, flip, rowscale, var_cols, shift, nbound = _standard_form(lp)
    mint, nstruct = A.shape

    # slack/surplus and artificial columns
    slack_col = np.full(mint, -1, dtype=np.int64)
    art_col = np.full(mint, -1, dtype=np.int64)
    ncols = nstruct
    for i in range(mint):
        if rel[i] in (LE, GE):
            slack_col[i] = ncols
            ncols += 1
    for i in range(mint):
        if rel[i] in (GE, EQ):
            art_col[i] = ncols
            ncols += 1

    T = np.zeros((mint, ncols + 1))
    T[:, :nstruct] = A
    T[:, -1] = b
    basis = np.zeros(mint, dtype=np.int64)
    for i in range(mint):
        if rel[i] == LE:
            T[i, slack_col[i]] = 1.0
            basis[i] = slack_col[i]
        elif rel[i] == GE:
            T[i, slack_col[i]] = -1.0
            T[i, art_col[i]] = 1.0
            basis[i] = art_col[i]
        else:
            T[i, art_col[i]] = 1.0
            basis[i] = art_col[i]
    A_std = T[:, :-1].copy()  # pristine copy for basis polishing
    b_std = b.copy()

    if max_iter is None:
        max_iter = max(5000, 100 * (mint + ncols))

    is_art = np.zeros(ncols, dtype=bool)
    is_art[art_col[art_col >= 0]] = True
    allowed = ~is_art  # artificials never (re-)enter

    def refactor() -> bool:
        """Rebuild the tableau exactly for the current basis (kills drift)."""
        nonlocal T
        try:
            fresh = np.linalg.solve(A_std[:, basis], np.hstack([A_std, b_std[:, None]]))
        except np.linalg.LinAlgError:
            return False
        if not np.all(np.isfinite(fresh)):
            return False
        T = fresh
        return True

    def run_phase(c_full):
        """Pivot to optimality.  Any exit signal is confirmed against a
        freshly refactorized tableau before being believed, since the
        incrementally updated tableau accumulates drift."""
        nonlocal T

        def refresh(bas):
            if not refactor():
                return None
            return T, _recompute_costrow(c_full, T, basis)

        out = "optimal"
        z = None
        for attempt in range(3):
            z = _recompute_costrow(c_full, T, basis)
            out, T, z = _pivot_loop(T, z, basis, allowed, max_iter, start_bland, refresh)
            if attempt == 2 or not refactor():
                return out, z
            z = _recompute_costrow(c_full, T, basis)
            if out == "optimal" and not np.any((z[:-1] < -10 * _OPTTOL) & allowed):
                return out, z
        return out, z  # pragma: no cover

    # ---- phase 1
    if is_art.any():
        c1 = np.zeros(ncols)
        c1[is_art] = 1.0
        out, z1 = run_phase(c1)
        if out != "optimal":
            raise SolverError("phase 1 reported unbounded")
        if -z1[-1] > feastol:
            # confirm on an exact tableau before extracting the certificate
            if refactor():
                out, z1 = run_phase(c1)
                if out != "optimal":  # pragma: no cover
                    raise SolverError("phase 1 reported unbounded")
            if -z1[-1] > feastol:
                return _infeasible_outcome(lp, z1, slack_col, art_col, flip, rowscale, feastol)
        # drive any leftover artificial out of the basis
        for i in range(mint):
            if is_art[basis[i]]:
                row = T[i, :ncols]
                okcols = np.nonzero((np.abs(row) > _PIVTOL) & ~is_art)[0]
                if okcols.size:
                    z1 = z1.copy()
                    _pivot(T, z1, basis, i, int(okcols[0]))

    # ---- phase 2
    c2 = np.zeros(ncols)
    for j, c in lp._obj.items():
        for col, s in var_cols[j]:
            c2[col] += c * s
    for _ in range(4):
        out, _ = run_phase(c2)
        if out != "optimal":
            _, e = out
            return _unbounded_outcome(lp, T, basis, e, var_cols, feastol)
        # ratio-test tie tolerances can leave tiny negative basic values;
        # clean them with dual pivots (optimality-preserving), then reconfirm
        if not refactor():
            break
        if float(np.min(T[:, -1], initial=0.0)) >= -1e-11:
            break
        z2 = _recompute_costrow(c2, T, basis)
        if not _dual_repair(T, z2, basis, allowed):
            raise SolverError("negative basic values at the optimum resist dual repair")

    # ---- polish: re-solve the final basis against the pristine matrix,
    # falling back to the tableau values if the basis system is too sick
    def extract(xb):
        xhat = np.zeros(ncols)
        xhat[basis] = xb
        x = shift.copy()
        for j in range(lp.num_vars):
            for col, s in var_cols[j]:
                x[j] += s * xhat[col]
        return x

    candidates = []
    try:
        Bmat = A_std[:, basis]
        xb = np.linalg.solve(Bmat, b_std)
        for _ in range(3):  # iterative refinement against the pristine basis
            xb = xb + np.linalg.solve(Bmat, b_std - Bmat @ xb)
        if np.all(np.isfinite(xb)):
            resid = float(np.max(np.abs(Bmat @ xb - b_std), initial=0.0))
            if resid < 1e-9:
                candidates.append(xb)
    except np.linalg.LinAlgError:
        pass
    candidates.append(T[:, -1].copy())

    gate = max(1e-7, 10 * feastol)
    bad = []
    for xb in candidates:
        x = extract(xb)
        bad = verify(lp, x, feastol=gate)
        if not bad:
            return LpSolution("optimal", x, lp.objective_value(x), lp.var_names)
    raise SolverError(
        "optimal point failed re-verification: " + "; ".join(str(v) for v in bad[:5]))


def _infeasible_outcome(lp, z1, slack_col, art_col, flip, rowscale, feastol):
    mint = flip.size
    y = np.zeros(mint)
    for i in range(mint):
        if art_col[i] >= 0:
            y[i] = 1.0 - z1[art_col[i]]
        else:
            y[i] = -z1[slack_col[i]]
    # a multiplier on a scaled row (row / s) is s times stronger against the
    # original row, so divide it back out; flip restores the original sense
    zmul = y * flip / rowscale
    u = np.zeros(lp.num_rows)
    for i in range(lp.num_rows):
        r = lp._rows[i][3]
        if r == LE:
            u[i] = -zmul[i]
        elif r == GE:
            u[i] = zmul[i]
        else:
            u[i] = -zmul[i]
    u[np.abs(u) < 1e-12] = 0.0
    valid, margin = farkas_check(lp, u, feastol)
    if not valid:
        raise SolverError("infeasibility detected but the Farkas certificate failed its check")
    used = [(lp._rows[i][0], float(u[i])) for i in np.nonzero(np.abs(u) > 1e-9)[0]]
    return LpInfeasible("infeasible", u, margin, used)


def _unbounded_outcome(lp, T, basis, e, var_cols, feastol):
    ncols = T.shape[1] - 1
    dhat = np.zeros(ncols)
    dhat[e] = 1.0
    dhat[basis] = -T[:, e]
    d = np.zeros(lp.num_vars)
    for j in range(lp.num_vars):
        for col, s in var_cols[j]:
            d[j] += s * dhat[col]
    # sanity: the ray must not increase the objective and must respect rows
    if lp.objective_value(d) > -_OPTTOL:
        raise SolverError("unbounded ray fails to improve the objective")
    for name, idx, coef, rel, _ in lp._rows:
        g = float(coef @ d[idx])
        if (rel == LE and g > feastol) or (rel == GE and g < -feastol) or (rel == EQ and abs(g) > feastol):
            raise SolverError(f"unbounded ray violates row {name}")
    return LpUnbounded("unbounded", d)


def verify(lp: LinearProgram, x, feastol: float = 1e-8) -> list[Violation]:
    """Residual check of a point against all rows and bounds.

    Returns the (possibly empty) list of violations larger than feastol.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (lp.num_vars,):
        raise ValueError(f"expected {lp.num_vars} values, got shape {x.shape}")
    out: list[Violation] = []
    for name, idx, coef, rel, rhs in lp._rows:
        v = float(coef @ x[idx])
        if rel == LE:
            amt = v - rhs
        elif rel == GE:
            amt = rhs - v
        else:
            amt = abs(v - rhs)
        if amt > feastol:
            out.append(Violation(name, amt))
    lb, ub = lp.bounds()
    for j in range(lp.num_vars):
        if x[j] < lb[j] - feastol:
            out.append(Violation(f"bound:{lp._var_names[j]}", float(lb[j] - x[j])))
        elif x[j] > ub[j] + feastol:
            out.append(Violation(f"bound:{lp._var_names[j]}", float(x[j] - ub[j])))
    return out


def farkas_check(lp: LinearProgram, u, feastol: float = 1e-8) -> tuple[bool, float]:
    """Validate Farkas multipliers u (one per row) against the variable box.

    Convention: every inequality row is first normalized to '<=' form
    (>= rows are negated); u must be >= 0 on inequality rows and may take
    either sign on equality rows.  The multipliers prove infeasibility when

        inf over the box of  sum_r u_r * (abar_r . x)   >   sum_r u_r * bbar_r.

    Returns (valid, margin) where margin is the certified gap.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (lp.num_rows,):
        raise ValueError(f"expected {lp.num_rows} multipliers, got shape {u.shape}")
    c = np.zeros(lp.num_vars)
    rhs = 0.0
    for i, (name, idx, coef, rel, b) in enumerate(lp._rows):
        ui = u[i]
        if ui == 0.0:
            continue
        if rel in (LE, EQ):
            if rel == LE and ui < -feastol:
                return False, -np.inf
            np.add.at(c, idx, ui * coef)
            rhs += ui * b
        else:  # GE row, normalized by negation
            if ui < -feastol:
                return False, -np.inf
            np.add.at(c, idx, -ui * coef)
            rhs += ui * (-b)
    lb, ub = lp.bounds()
    scale = max(1.0, float(np.max(np.abs(c))) if c.size else 1.0)
    lo = 0.0
    for j in range(lp.num_vars):
        cj = c[j]
        if abs(cj) <= 1e-9 * scale:
            continue
        v = cj * (lb[j] if cj > 0 else ub[j])
        if not np.isfinite(v):
            return False, -np.inf
        lo += v
    margin = lo - rhs
    return margin > 0.0, float(margin)


def dump(lp: LinearProgram) -> str:
    """Canonical text form: one `name: coef*var + coef*var REL rhs` line per row.

    Deterministic for identically-built programs (insertion order, repr
    floats), which lets tests compare two construction paths exactly.
    """
    lines = [f"lp {lp.name}"]
    obj = " + ".join(f"{float(c)!r}*{lp._var_names[j]}" for j, c in sorted(lp._obj.items()))
    lines.append(f"minimize: {obj if obj else '0'}")
    lb, ub = lp.bounds()
    for j, nm in enumerate(lp._var_names):
        lines.append(f"var {nm} in [{float(lb[j])!r}, {float(ub[j])!r}]")
    for name, idx, coef, rel, rhs in lp._rows:
        order = np.argsort(idx, kind="stable")
        terms = " + ".join(f"{float(coef[k])!r}*{lp._var_names[idx[k]]}" for k in order)
        lines.append(f"{name}: {terms if terms else '0'} {rel} {rhs!r}")
    return "\n".join(lines) + "\n"
