"""Bounded-variable primal simplex on sparse equality-form problems.

Solves  min c'x  s.t.  A x = b,  lb <= x <= ub  with a revised simplex:
the basis factorization is a SuperLU decomposition refreshed periodically,
with dense product-form eta updates in between.  Entering variables are
priced by the most-negative reduced cost (Dantzig); after a run of
degenerate pivots the selection falls back to Bland's least-index rule,
which guarantees finite termination.  Infeasibility of a starting basis is
repaired by a phase-1 pass minimizing the total bound violation.

The caller provides the standard form directly (slack columns included), so
branch-and-bound can re-solve with nothing but variable-bound changes and a
warm-start basis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csc_matrix
from scipy.sparse.linalg import splu

AT_LOWER = 0
AT_UPPER = 1
BASIC = 2

_REFACTOR_EVERY = 48
_BLAND_TRIGGER = 60  # consecutive degenerate pivots before Bland's rule kicks in


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded" | "iteration_limit"
    x: np.ndarray | None
    obj: float | None
    basis: np.ndarray | None
    vstat: np.ndarray | None
    iterations: int
    reduced_costs: np.ndarray | None = None


class SingularBasis(Exception):
    pass


class _Factorization:
    """B^-1 as a SuperLU factor plus a list of dense eta updates."""

    def __init__(self, A: csc_matrix, basis: np.ndarray):
        try:
            self.lu = splu(
                A[:, basis].tocsc(), permc_spec="COLAMD", options={"SymmetricMode": False}
            )
        except RuntimeError as exc:  # exactly singular
            raise SingularBasis(str(exc)) from None
        self.etas: list[tuple[int, np.ndarray, float]] = []

    def ftran(self, v: np.ndarray) -> np.ndarray:
        x = self.lu.solve(v)
        for r, w, piv in self.etas:
            xr = x[r] / piv
            x -= w * xr
            x[r] = xr
        return x

    def btran(self, v: np.ndarray) -> np.ndarray:
        y = v.copy()
        for r, w, piv in reversed(self.etas):
            yr = (y[r] - w @ y) / piv
            y[r] = yr
        return self.lu.solve(y, trans="T")

    def update(self, r: int, w: np.ndarray):
        """Record the basis change: column entering with B^-1-image w, row r."""
        piv = w[r]
        wk = w.copy()
        wk[r] = 0.0
        self.etas.append((r, wk, piv))


class BoundedSimplex:
    def __init__(
        self,
        A: csc_matrix,
        b: np.ndarray,
        c: np.ndarray,
        lb: np.ndarray,
        ub: np.ndarray,
        *,
        tol: float = 1e-9,
        max_iter: int = 200000,
    ):
        self.A = A.tocsc()
        self.At = self.A.T.tocsr()
        self.b = np.asarray(b, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.lb = np.asarray(lb, dtype=float)
        self.ub = np.asarray(ub, dtype=float)
        self.m, self.n = A.shape
        self.tol = tol
        self.max_iter = max_iter

    # -- state helpers -------------------------------------------------
    def _set_basis(self, basis: np.ndarray, vstat: np.ndarray):
        same = (
            getattr(self, "basis", None) is not None
            and getattr(self, "fact", None) is not None
            and not self.fact.etas
            and np.array_equal(self.basis, basis)
        )
        self.basis = basis.astype(np.int64).copy()
        self.vstat = vstat.astype(np.int8).copy()
        if same:
            self._recompute_xb()  # bounds may have changed; factor is valid
        else:
            self._refactor()

    def _refactor(self):
        self.fact = _Factorization(self.A, self.basis)
        self._recompute_xb()

    def _recompute_xb(self):
        xn = np.where(self.vstat == AT_UPPER, self.ub, self.lb)
        xn[~np.isfinite(xn)] = 0.0
        xn[self.basis] = 0.0
        rhs = self.b - self.A @ xn
        self.xn = xn
        self.xb = self.fact.ftran(rhs)

    def _column(self, j: int) -> np.ndarray:
        col = np.zeros(self.m)
        a = self.A
        start, end = a.indptr[j], a.indptr[j + 1]
        col[a.indices[start:end]] = a.data[start:end]
        return col

    def _infeasibility(self) -> tuple[np.ndarray, np.ndarray, float]:
        lo = self.lb[self.basis] - self.xb
        hi = self.xb - self.ub[self.basis]
        below = np.where(lo > self.tol, lo, 0.0)
        above = np.where(hi > self.tol, hi, 0.0)
        return below, above, float(below.sum() + above.sum())

    # -- core iteration ------------------------------------------------
    def _price(self, grad_b: np.ndarray, cost: np.ndarray) -> np.ndarray:
        y = self.fact.btran(grad_b)
        return cost - self.At @ y

    def _choose_entering(self, d: np.ndarray, bland: bool, excluded: set[int] | None = None) -> int:
        viol = np.zeros(self.n)
        at_lo = self.vstat == AT_LOWER
        at_up = self.vstat == AT_UPPER
        viol[at_lo] = np.minimum(d[at_lo], 0.0)
        viol[at_up] = -np.maximum(d[at_up], 0.0)
        # fixed variables (lb == ub) never enter
        fixed = self.lb == self.ub
        viol[fixed] = 0.0
        if excluded:
            viol[list(excluded)] = 0.0
        candidates = np.where(viol < -self.tol)[0]
        if candidates.size == 0:
            return -1
        if bland:
            return int(candidates[0])
        return int(candidates[np.argmin(viol[candidates])])

    def _ratio_test(self, q: int, direction: float, w: np.ndarray, phase1: bool, bland: bool):
        """Return (step, leaving_row, leaving_to) or bound-flip / unbounded.

        ``leaving_row`` -1 encodes a bound flip of the entering variable;
        ``None`` step encodes unboundedness.  In phase 1, basics currently
        violating a bound block only once they reach that violated bound.
        """
        delta = w * direction  # xb changes by -delta * step
        steps = np.full(self.m, np.inf)
        targets = np.zeros(self.m, dtype=np.int8)  # bound the leaving basic lands on
        xb, basis = self.xb, self.basis
        lo_b, up_b = self.lb[basis], self.ub[basis]
        # entries below the pivot tolerance are treated as non-moving; pivoting
        # on factorization noise would make the basis singular
        eps = 1e-9

        dec = delta > eps  # xb decreases
        inc = delta < -eps
        if phase1:
            below = xb < lo_b - self.tol
            above = xb > up_b + self.tol
            ok = ~(below | above)
            # feasible basics must stay feasible
            i = dec & ok & np.isfinite(lo_b)
            steps[i] = (xb[i] - lo_b[i]) / delta[i]
            targets[i] = AT_LOWER
            i = inc & ok & np.isfinite(up_b)
            s = (xb[i] - up_b[i]) / delta[i]
            better = s < steps[i]
            idx = np.where(i)[0][better]
            steps[idx] = s[better]
            targets[idx] = AT_UPPER
            # violating basics block when they reach the violated bound
            i = below & inc
            steps[i] = (xb[i] - lo_b[i]) / delta[i]
            targets[i] = AT_LOWER
            i = above & dec
            steps[i] = (xb[i] - up_b[i]) / delta[i]
            targets[i] = AT_UPPER
        else:
            i = dec & np.isfinite(lo_b)
            steps[i] = (xb[i] - lo_b[i]) / delta[i]
            targets[i] = AT_LOWER
            i = inc & np.isfinite(up_b)
            s = (xb[i] - up_b[i]) / delta[i]
            better = s < steps[i]
            idx = np.where(i)[0][better]
            steps[idx] = s[better]
            targets[idx] = AT_UPPER

        steps = np.maximum(steps, 0.0)
        min_step = steps.min() if self.m else np.inf

        # entering variable's own range may bind first (bound flip)
        own_range = self.ub[q] - self.lb[q]
        if own_range < min_step:
            return own_range, -1, AT_UPPER if direction > 0 else AT_LOWER

        if not np.isfinite(min_step):
            return None, None, None
        if bland:
            ties = np.where(steps <= min_step + eps)[0]
            row = int(ties[np.argmin(basis[ties])])
        else:
            # Harris-style second pass: among rows blocking within a small
            # feasibility relaxation, prefer the numerically largest pivot.
            relax = 1e-8 * (1.0 + min_step)
            ties = np.where(steps <= min_step + relax)[0]
            row = int(ties[np.argmax(np.abs(delta[ties]))])
        return float(steps[row]), row, int(targets[row])

    def _pivot(self, q: int, direction: float, w: np.ndarray, step: float, row: int, target: int):
        if row == -1:  # bound flip, basis unchanged
            self.xb -= w * (direction * step)
            self.vstat[q] = AT_UPPER if self.vstat[q] == AT_LOWER else AT_LOWER
            return
        leaving = self.basis[row]
        self.xb -= w * (direction * step)
        entering_value = (self.lb[q] if self.vstat[q] == AT_LOWER else self.ub[q]) + direction * step
        self.basis[row] = q
        self.xb[row] = entering_value
        self.vstat[q] = BASIC
        self.vstat[leaving] = target
        self.fact.update(row, w)
        if len(self.fact.etas) >= _REFACTOR_EVERY:
            self._refactor()

    def _run(self, phase1: bool, iter_budget: int) -> tuple[str, int]:
        it = 0
        degenerate_run = 0
        feas_done = self.tol * max(1.0, float(self.m)) ** 0.5
        excluded: set[int] = set()  # columns rejected for unstable pivots
        while it < iter_budget:
            if phase1:
                below, above, total = self._infeasibility()
                if total <= feas_done:
                    return "feasible", it
                grad_b = np.where(below > 0, -1.0, np.where(above > 0, 1.0, 0.0))
                d = self._price(grad_b, np.zeros(self.n))
            else:
                grad_b = self.c[self.basis]
                d = self._price(grad_b, self.c)
            d[self.basis] = 0.0

            bland = degenerate_run >= _BLAND_TRIGGER
            q = self._choose_entering(d, bland, excluded)
            if q < 0:
                if excluded:
                    # nothing stable was left; refresh and give the rejected
                    # columns one more chance before concluding
                    excluded.clear()
                    self._refactor()
                    continue
                return ("stuck_infeasible" if phase1 else "optimal"), it
            direction = 1.0 if self.vstat[q] == AT_LOWER else -1.0
            w = self.fact.ftran(self._column(q))
            step, row, target = self._ratio_test(q, direction, w, phase1, bland)
            if row is not None and row >= 0 and abs(w[row]) < 1e-6 and self.fact.etas:
                # suspicious pivot: rebuild the factorization and retry once
                self._refactor()
                w = self.fact.ftran(self._column(q))
                step, row, target = self._ratio_test(q, direction, w, phase1, bland)
            if row is not None and row >= 0 and abs(w[row]) < 1e-7:
                # pivoting this small would corrupt the basis; price another
                excluded.add(q)
                it += 1
                continue
            if step is None:
                return ("phase1_unbounded" if phase1 else "unbounded"), it
            degenerate_run = degenerate_run + 1 if step <= 1e-11 else 0
            self._pivot(q, direction, w, step, row, target)
            excluded.clear()
            it += 1
            if it % 512 == 0:
                self._refactor()  # refresh xb against drift
        return "iteration_limit", it

    def _slack_start(self) -> tuple[np.ndarray, np.ndarray]:
        # caller guarantees the last m columns form an identity basis
        basis = np.arange(self.n - self.m, self.n)
        vstat = np.full(self.n, AT_LOWER, dtype=np.int8)
        vstat[np.isinf(self.lb) & ~np.isinf(self.ub)] = AT_UPPER
        vstat[basis] = BASIC
        return basis, vstat

    # -- dual simplex (used for warm restarts after bound changes) -------
    def _dual_run(self, iter_budget: int) -> tuple[str, int]:
        """Bounded-variable dual simplex from a dual-feasible basis.

        Reduced costs are maintained incrementally and refreshed on every
        refactorization.  Returns ("optimal", it) once primal feasible,
        ("infeasible", it) when no entering column exists for a violated
        basic, or ("dual_lost", it) to fall back to the primal algorithm.
        """
        it = 0
        stall = 0
        movable = self.lb != self.ub  # fixed columns never price or enter

        def fresh_d() -> np.ndarray:
            y = self.fact.btran(self.c[self.basis])
            dd = self.c - self.At @ y
            dd[self.basis] = 0.0
            return dd

        d = fresh_d()
        at_lo = (self.vstat == AT_LOWER) & movable
        at_up = (self.vstat == AT_UPPER) & movable
        if (d[at_lo] < -1e-6).any() or (d[at_up] > 1e-6).any():
            return "dual_lost", it

        while it < iter_budget:
            viol_lo = self.lb[self.basis] - self.xb
            viol_up = self.xb - self.ub[self.basis]
            viol = np.maximum(viol_lo, viol_up)
            r = int(np.argmax(viol))
            if viol[r] <= 1e-9:
                # confirm with a clean factorization before declaring victory
                if self.fact.etas:
                    self._refactor()
                    d = fresh_d()
                    if (np.maximum(self.lb[self.basis] - self.xb, self.xb - self.ub[self.basis])).max() > 1e-9:
                        continue
                return "optimal", it
            to_upper = viol_up[r] > viol_lo[r]

            rho = np.zeros(self.m)
            rho[r] = 1.0
            rho = self.fact.btran(rho)
            alpha = self.At @ rho
            at_lo = (self.vstat == AT_LOWER) & movable
            at_up = (self.vstat == AT_UPPER) & movable
            if to_upper:
                adm = (at_lo & (alpha > 1e-9)) | (at_up & (alpha < -1e-9))
            else:
                adm = (at_lo & (alpha < -1e-9)) | (at_up & (alpha > 1e-9))
            cand = np.where(adm)[0]
            if cand.size == 0:
                return "infeasible", it
            ratios = np.abs(d[cand]) / np.abs(alpha[cand])
            best = ratios.min()
            near = cand[ratios <= best + 1e-9]
            q = int(near[0]) if stall >= _BLAND_TRIGGER else int(near[np.argmax(np.abs(alpha[near]))])

            w = self.fact.ftran(self._column(q))
            if abs(w[r]) < 1e-6:
                self._refactor()
                d = fresh_d()
                w = self.fact.ftran(self._column(q))
                if abs(w[r]) < 1e-9:
                    return "dual_lost", it
            bound_r = self.ub[self.basis[r]] if to_upper else self.lb[self.basis[r]]
            delta = (self.xb[r] - bound_r) / w[r]
            stall = stall + 1 if abs(delta) <= 1e-11 else 0
            leaving = self.basis[r]
            v_q = self.lb[q] if self.vstat[q] == AT_LOWER else self.ub[q]
            self.xb -= delta * w
            self.basis[r] = q
            self.xb[r] = v_q + delta
            self.vstat[q] = BASIC
            self.vstat[leaving] = AT_UPPER if to_upper else AT_LOWER
            self.fact.update(r, w)
            # incremental dual update: d <- d - theta * alpha
            theta = d[q] / alpha[q]
            d -= theta * alpha
            d[q] = 0.0
            d[leaving] = -theta
            if len(self.fact.etas) >= _REFACTOR_EVERY:
                self._refactor()
                d = fresh_d()
            it += 1
            if it % 64 == 0:
                at_lo = (self.vstat == AT_LOWER) & movable
                at_up = (self.vstat == AT_UPPER) & movable
                if (d[at_lo] < -1e-5).any() or (d[at_up] > 1e-5).any():
                    return "dual_lost", it
        return "dual_lost", it

    # -- public entry ----------------------------------------------------
    def solve(
        self,
        basis: np.ndarray | None = None,
        vstat: np.ndarray | None = None,
        *,
        warm_dual: bool = False,
    ) -> LPResult:
        if basis is None:
            basis, vstat = self._slack_start()
            warm_dual = False
        try:
            if warm_dual:
                res = self._solve_dual_from(basis, vstat)
                if res is not None:
                    return res
            return self._solve_from(self.basis if warm_dual else basis,
                                    self.vstat if warm_dual else vstat)
        except SingularBasis:
            # warm basis went numerically bad: restart cold (identity basis
            # can never be singular)
            basis, vstat = self._slack_start()
            return self._solve_from(basis, vstat)

    def _reduced_costs(self) -> np.ndarray:
        y = self.fact.btran(self.c[self.basis])
        d = self.c - self.At @ y
        d[self.basis] = 0.0
        return d

    def _solve_dual_from(self, basis: np.ndarray, vstat: np.ndarray) -> LPResult | None:
        """Re-optimize after bound changes; None means fall back to primal."""
        self._set_basis(basis, vstat)
        status, it = self._dual_run(iter_budget=self.max_iter)
        if status == "optimal":
            self._refactor()
            x = self.xn.copy()
            x[self.basis] = self.xb
            obj = float(self.c @ x)
            return LPResult(
                "optimal", x, obj, self.basis.copy(), self.vstat.copy(), it,
                reduced_costs=self._reduced_costs(),
            )
        if status == "infeasible":
            return LPResult("infeasible", None, None, self.basis, self.vstat, it)
        return None

    def _solve_from(self, basis: np.ndarray, vstat: np.ndarray) -> LPResult:
        self._set_basis(basis, vstat)

        total_it = 0
        _, _, inf0 = self._infeasibility()
        if inf0 > self.tol * max(1.0, self.m):
            status, it1 = self._run(phase1=True, iter_budget=self.max_iter)
            total_it += it1
            if status in ("stuck_infeasible", "phase1_unbounded"):
                return LPResult("infeasible", None, None, self.basis, self.vstat, total_it)
            if status == "iteration_limit":
                return LPResult("iteration_limit", None, None, self.basis, self.vstat, total_it)
            self._refactor()

        status, it2 = self._run(phase1=False, iter_budget=self.max_iter - total_it)
        total_it += it2
        if status == "optimal":
            self._refactor()  # heal drift and refresh nonbasic values
            x = self.xn.copy()
            x[self.basis] = self.xb
            obj = float(self.c @ x)
            return LPResult(
                "optimal", x, obj, self.basis.copy(), self.vstat.copy(), total_it,
                reduced_costs=self._reduced_costs(),
            )
        if status == "unbounded":
            return LPResult("unbounded", None, None, self.basis, self.vstat, total_it)
        return LPResult("iteration_limit", None, None, self.basis, self.vstat, total_it)


def solve_lp(
    A: csc_matrix,
    b: np.ndarray,
    c: np.ndarray,
    lb: np.ndarray,
    ub: np.ndarray,
    *,
    basis: np.ndarray | None = None,
    vstat: np.ndarray | None = None,
    tol: float = 1e-9,
    max_iter: int = 200000,
) -> LPResult:
    return BoundedSimplex(A, b, c, lb, ub, tol=tol, max_iter=max_iter).solve(basis, vstat)
