"""Primal-dual interior-point method for LP/SOC/PSD cone programs.

Homogeneous self-dual embedding with Nesterov-Todd scaling and a Mehrotra
predictor-corrector, following the structure of CVXOPT's ``conelp``.  All
linear algebra is dense: the programs solved here come from RLT relaxations
whose PSD blocks have side at most ``1 + max|J|``.

Zero-cone rows are treated as equality constraints ``A_eq y = b_eq``; the
remaining rows become ``G y + s = h`` with ``s`` in the product cone.
"""
from __future__ import annotations

import math

import numpy as np
import scipy.linalg as la

from .cones import NonNeg, Psd, SecondOrder, Zero, smat, svec
from .program import ConicProgram, ConicSolution, Status

STEP_FRACTION = 0.99
INFEASIBILITY_RATIO = 1e-8
NEAR_FACTOR = 10.0


class _Blocks:
    """Layout of the (reordered) cone rows: LP first, then SOC, then PSD."""

    def __init__(self, nl: int, soc_dims: list[int], psd_sides: list[int]):
        self.nl = nl
        self.soc = []
        off = nl
        for d in soc_dims:
            self.soc.append((off, d))
            off += d
        self.psd = []
        for s in psd_sides:
            d = s * (s + 1) // 2
            self.psd.append((off, s, d))
            off += d
        self.m = off
        self.degree = nl + len(soc_dims) + sum(psd_sides)

    def identity(self) -> np.ndarray:
        e = np.zeros(self.m)
        e[:self.nl] = 1.0
        for off, _ in self.soc:
            e[off] = 1.0
        for off, s, d in self.psd:
            e[off:off + d] = svec(np.eye(s))
        return e

    def min_eig(self, v: np.ndarray) -> float:
        """Largest ``t`` with ``v - t e`` in the cone."""
        vals = [np.inf]
        if self.nl:
            vals.append(v[:self.nl].min())
        for off, d in self.soc:
            vals.append(v[off] - np.linalg.norm(v[off + 1:off + d]))
        for off, s, d in self.psd:
            vals.append(np.linalg.eigvalsh(smat(v[off:off + d], s))[0])
        return float(min(vals))

    def inner(self, u, v) -> float:
        return float(u @ v)

    def prod(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Jordan product ``u o v``."""
        out = np.empty(self.m)
        nl = self.nl
        out[:nl] = u[:nl] * v[:nl]
        for off, d in self.soc:
            a, b = u[off:off + d], v[off:off + d]
            out[off] = a @ b
            out[off + 1:off + d] = a[0] * b[1:] + b[0] * a[1:]
        for off, s, d in self.psd:
            U, V = smat(u[off:off + d], s), smat(v[off:off + d], s)
            P = U @ V
            out[off:off + d] = svec(0.5 * (P + P.T))
        return out


class _Scaling:
    """Nesterov-Todd scaling ``W`` with ``W z = W^{-T} s = lam``."""

    def __init__(self, blocks: _Blocks, s: np.ndarray, z: np.ndarray):
        self.blocks = blocks
        nl = blocks.nl
        sl, zl = s[:nl], z[:nl]
        if nl and (np.any(sl <= 0) or np.any(zl <= 0)):
            raise np.linalg.LinAlgError("iterate left the nonnegative orthant")
        self.wl = np.sqrt(sl / zl)
        lam = np.empty(blocks.m)
        lam[:nl] = np.sqrt(sl * zl)
        self.soc_W = []
        self.soc_Winv = []
        for off, d in blocks.soc:
            sk, zk = s[off:off + d], z[off:off + d]
            sJs, zJz = _jnorm2(sk), _jnorm2(zk)
            if sJs <= 0 or zJz <= 0 or sk[0] <= 0 or zk[0] <= 0:
                raise np.linalg.LinAlgError("iterate left the second-order cone")
            sn, zn = math.sqrt(sJs), math.sqrt(zJz)
            sb, zb = sk / sn, zk / zn
            gamma = math.sqrt(0.5 * (1.0 + sb @ zb))
            wb = np.empty(d)
            wb[0] = (sb[0] + zb[0]) / (2 * gamma)
            wb[1:] = (sb[1:] - zb[1:]) / (2 * gamma)
            beta = math.sqrt(sn / zn)
            Wb = np.empty((d, d))
            Wb[0, 0] = wb[0]
            Wb[0, 1:] = wb[1:]
            Wb[1:, 0] = wb[1:]
            Wb[1:, 1:] = np.eye(d - 1) + np.outer(wb[1:], wb[1:]) / (1.0 + wb[0])
            Jv = np.ones(d)
            Jv[1:] = -1.0
            W = beta * Wb
            Winv = (Jv[:, None] * Wb * Jv[None, :]) / beta
            self.soc_W.append(W)
            self.soc_Winv.append(Winv)
            lam[off:off + d] = W @ zk
        self.psd_W = []
        self.psd_Winv = []
        self.psd_lam = []
        for off, side, d in blocks.psd:
            S = smat(s[off:off + d], side)
            Z = smat(z[off:off + d], side)
            Ls = np.linalg.cholesky(S)
            Lz = np.linalg.cholesky(Z)
            U, sv, Vt = np.linalg.svd(Lz.T @ Ls)
            if np.any(sv <= 0):
                raise np.linalg.LinAlgError("singular PSD scaling")
            R = Ls @ Vt.T / np.sqrt(sv)[None, :]
            Rinv = (np.sqrt(sv)[:, None] * Vt) @ la.solve_triangular(Ls, np.eye(side), lower=True)
            basis = _svec_basis(side)
            W = np.stack([svec(R.T @ E @ R) for E in basis], axis=1)
            Winv = np.stack([svec(Rinv.T @ E @ Rinv) for E in basis], axis=1)
            self.psd_W.append(W)
            self.psd_Winv.append(Winv)
            self.psd_lam.append(sv)
            lam[off:off + d] = svec(np.diag(sv))
        self.lam = lam

    def compose(self, prev: _Scaling) -> _Scaling:
        """Scaling ``self o prev``.

        If ``self`` is the NT scaling of the scaled pair ``(prev.W^-T s,
        prev.W z)`` the product is the NT scaling of ``(s, z)``; building it
        this way avoids recomputing cone norms of nearly-boundary iterates.
        """
        self.wl = self.wl * prev.wl
        self.soc_W = [W @ P for W, P in zip(self.soc_W, prev.soc_W)]
        self.soc_Winv = [Pi @ Wi for Wi, Pi in zip(self.soc_Winv, prev.soc_Winv)]
        self.psd_W = [W @ P for W, P in zip(self.psd_W, prev.psd_W)]
        self.psd_Winv = [Pi @ Wi for Wi, Pi in zip(self.psd_Winv, prev.psd_Winv)]
        return self

    def _apply(self, v, which: str):
        b = self.blocks
        out = np.empty_like(v)
        nl = b.nl
        if which == "W" or which == "Wt":
            out[:nl] = (self.wl * v[:nl].T).T
        else:
            out[:nl] = (v[:nl].T / self.wl).T
        for (off, d), W, Wi in zip(b.soc, self.soc_W, self.soc_Winv):
            M = {"W": W, "Wt": W.T, "Winv": Wi, "WinvT": Wi.T}[which]
            out[off:off + d] = M @ v[off:off + d]
        for (off, s, d), W, Wi in zip(b.psd, self.psd_W, self.psd_Winv):
            M = {"W": W, "Wt": W.T, "Winv": Wi, "WinvT": Wi.T}[which]
            out[off:off + d] = M @ v[off:off + d]
        return out

    def W(self, v):
        return self._apply(v, "W")

    def Wt(self, v):
        return self._apply(v, "Wt")

    def Winv(self, v):
        return self._apply(v, "Winv")

    def WinvT(self, v):
        return self._apply(v, "WinvT")

    def lam_div(self, u: np.ndarray) -> np.ndarray:
        """Solve ``lam o x = u``."""
        b = self.blocks
        lam = self.lam
        out = np.empty(b.m)
        nl = b.nl
        out[:nl] = u[:nl] / lam[:nl]
        for off, d in b.soc:
            l, a = lam[off:off + d], u[off:off + d]
            det = l[0] ** 2 - l[1:] @ l[1:]
            x0 = (l[0] * a[0] - l[1:] @ a[1:]) / det
            out[off] = x0
            out[off + 1:off + d] = (a[1:] - x0 * l[1:]) / l[0]
        for (off, s, d), lv in zip(b.psd, self.psd_lam):
            U = smat(u[off:off + d], s)
            out[off:off + d] = svec(2.0 * U / (lv[:, None] + lv[None, :]))
        return out

    def max_step(self, dv: np.ndarray) -> float:
        """Largest ``a`` with ``lam + a dv`` in the cone."""
        b = self.blocks
        lam = self.lam
        alpha = np.inf
        nl = b.nl
        if nl:
            neg = dv[:nl] < 0
            if np.any(neg):
                alpha = min(alpha, float(np.min(-lam[:nl][neg] / dv[:nl][neg])))
        for off, d in b.soc:
            alpha = min(alpha, _soc_step(lam[off:off + d], dv[off:off + d]))
        for (off, s, d), lv in zip(b.psd, self.psd_lam):
            D = smat(dv[off:off + d], s)
            r = 1.0 / np.sqrt(lv)
            ev = np.linalg.eigvalsh(r[:, None] * D * r[None, :])[0]
            if ev < 0:
                alpha = min(alpha, -1.0 / ev)
        return alpha


def _jnorm2(v: np.ndarray) -> float:
    """``v0^2 - ||v1||^2`` in factored form."""
    r = float(np.linalg.norm(v[1:]))
    return (v[0] - r) * (v[0] + r)


_BASIS_CACHE: dict[int, list[np.ndarray]] = {}


def _svec_basis(side: int) -> list[np.ndarray]:
    if side not in _BASIS_CACHE:
        d = side * (side + 1) // 2
        _BASIS_CACHE[side] = [smat(np.eye(d)[k], side) for k in range(d)]
    return _BASIS_CACHE[side]


def _soc_step(l: np.ndarray, dl: np.ndarray) -> float:
    a = dl[0] ** 2 - dl[1:] @ dl[1:]
    bb = l[0] * dl[0] - l[1:] @ dl[1:]
    c = l[0] ** 2 - l[1:] @ l[1:]
    roots = []
    if abs(a) < 1e-300:
        if bb < 0:
            roots.append(-c / (2 * bb))
    else:
        disc = bb * bb - a * c
        if disc >= 0:
            q = -(bb + math.copysign(math.sqrt(disc), bb))
            if q != 0:
                roots += [q / a, c / q]
            else:
                roots.append(-bb / a)
    pos = [r for r in roots if r > 0]
    step = min(pos) if pos else np.inf
    if dl[0] < 0:
        step = min(step, -l[0] / dl[0])
    return step


def _r_factor(M: np.ndarray) -> np.ndarray:
    """Upper-triangular ``R`` with ``R'R = M'M`` (ridged if ``M`` is rank deficient)."""
    k = M.shape[1]
    R = la.qr(M, mode="r", check_finite=False)[0][:k]
    d = np.abs(np.diag(R))
    if k and d.min() <= 1e-13 * max(d.max(), 1.0):
        ridge = math.sqrt(1e-12) * max(d.max(), 1.0)
        R = la.qr(np.vstack([M, ridge * np.eye(k)]), mode="r", check_finite=False)[0][:k]
    return R


def _rtr_solve(R: np.ndarray, v: np.ndarray) -> np.ndarray:
    return la.solve_triangular(R, la.solve_triangular(R, v, trans="T", check_finite=False), check_finite=False)


class _KKT:
    """Solver for ``[[0, A', G'], [A, 0, 0], [G, 0, -W'W]]``.

    The reduced matrix ``H = G' W^-1 W^-T G`` is never factored directly:
    near the optimum it is too ill-conditioned.  Without equalities a QR
    factor of ``W^-T G`` is used (semi-normal equations); with equalities of
    full row rank a null-space method, otherwise a regularised LU.
    """

    def __init__(self, G: np.ndarray, Aeq: np.ndarray, scaling: _Scaling | None):
        self.G = G
        self.Aeq = Aeq
        self.scaling = scaling
        self.Gs = G if scaling is None else scaling.WinvT(G)
        nx = G.shape[1]
        self.neq = neq = Aeq.shape[0]
        self.mode = "qr"
        if neq == 0:
            self.R = _r_factor(self.Gs)
            return
        Q, R1 = la.qr(Aeq.T, check_finite=False)
        d = np.abs(np.diag(R1[:neq]))
        if neq <= nx and d.min() > 1e-10 * max(d.max(), 1.0):
            self.mode = "null"
            self.Q1, self.Q2, self.R1 = Q[:, :neq], Q[:, neq:], R1[:neq]
            self.R = _r_factor(self.Gs @ self.Q2)
            return
        self.mode = "lu"
        H = self.Gs.T @ self.Gs
        self.K = np.block([[H, Aeq.T], [Aeq, np.zeros((neq, neq))]])
        delta = 1e-11 * max(1.0, float(np.max(np.abs(np.diag(H))))) if nx else 1e-11
        reg = np.concatenate([np.full(nx, delta), np.full(neq, -delta)])
        self.lu = la.lu_factor(self.K + np.diag(reg), check_finite=False)

    def _H(self, v):
        return self.Gs.T @ (self.Gs @ v)

    def _reduced(self, r):
        nx = self.G.shape[1]
        if self.mode == "qr":
            sol = _rtr_solve(self.R, r)
            return sol + _rtr_solve(self.R, r - self._H(sol))
        if self.mode == "null":
            ra, rb = r[:nx], r[nx:]
            xp = self.Q1 @ la.solve_triangular(self.R1, rb, trans="T", check_finite=False)
            g = self.Q2.T @ (ra - self._H(xp))
            w = _rtr_solve(self.R, g)
            w += _rtr_solve(self.R, g - self.Q2.T @ self._H(self.Q2 @ w))
            x = xp + self.Q2 @ w
            y = la.solve_triangular(self.R1, self.Q1.T @ (ra - self._H(x)), check_finite=False)
            return np.concatenate([x, y])
        sol = la.lu_solve(self.lu, r, check_finite=False)
        for _ in range(3):
            sol += la.lu_solve(self.lu, r - self.K @ sol, check_finite=False)
        return sol

    def solve(self, r1, r2, r3, refine: int = 2):
        """Solve the full system, refining against its unreduced residual."""
        x, y, z = self._solve_once(r1, r2, r3)
        sc = self.scaling
        for _ in range(refine):
            WtWz = z if sc is None else sc.Wt(sc.W(z))
            e1 = r1 - self.Aeq.T @ y - self.G.T @ z
            e2 = r2 - self.Aeq @ x
            e3 = r3 - self.G @ x + WtWz
            dx, dy, dz = self._solve_once(e1, e2, e3)
            x, y, z = x + dx, y + dy, z + dz
        return x, y, z

    def _solve_once(self, r1, r2, r3):
        sc = self.scaling
        t = r3 if sc is None else sc.WinvT(r3)
        rhs = np.concatenate([r1 + self.Gs.T @ t, r2])
        sol = self._reduced(rhs)
        nx = self.G.shape[1]
        x, y = sol[:nx], sol[nx:]
        u = self.Gs @ x - t
        z = u if sc is None else sc.Winv(u)
        return x, y, z


def _split(cp: ConicProgram):
    """Reorder rows into equality rows and LP/SOC/PSD cone rows."""
    A = cp.dense_A()
    eq_rows, lp_rows, soc_rows, psd_rows = [], [], [], []
    soc_dims, psd_sides = [], []
    off = 0
    for cone in cp.cones:
        rows = list(range(off, off + cone.dim))
        if isinstance(cone, Zero):
            eq_rows += rows
        elif isinstance(cone, NonNeg):
            lp_rows += rows
        elif isinstance(cone, SecondOrder):
            soc_rows += rows
            soc_dims.append(cone.dim)
        elif isinstance(cone, Psd):
            psd_rows += rows
            psd_sides.append(cone.side)
        else:
            raise TypeError(f"unknown cone {cone!r}")
        off += cone.dim
    cone_rows = lp_rows + soc_rows + psd_rows
    blocks = _Blocks(len(lp_rows), soc_dims, psd_sides)
    return (A[eq_rows], cp.b[eq_rows], A[cone_rows], cp.b[cone_rows],
            np.array(eq_rows, dtype=int), np.array(cone_rows, dtype=int), blocks)


def solve(cp: ConicProgram, tol: float = 1e-8, max_iter: int = 200, record_history: bool = False) -> ConicSolution:
    """Solve ``cp``; failures are reported through ``status``, never raised."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    Aeq, beq, G, h, eq_idx, cone_idx, blocks = _split(cp)
    c = cp.c
    nx = c.size
    m = blocks.m
    resx0 = max(1.0, float(np.linalg.norm(c)))
    resy0 = max(1.0, float(np.linalg.norm(beq)))
    resz0 = max(1.0, float(np.linalg.norm(h)))
    e = blocks.identity()
    history = []

    def finish(status, x, y, s, z, tau, it, pres, dres, gap, pcost=None, dcost=None):
        ty = np.zeros(cp.num_rows)
        tz = np.zeros(cp.num_rows)
        ts = np.zeros(cp.num_rows)
        if status in (Status.PRIMAL_INFEASIBLE, Status.DUAL_INFEASIBLE):
            scale = 1.0
        else:
            scale = 1.0 / tau
        ty = x * scale
        tz[eq_idx] = y * scale
        tz[cone_idx] = z * scale
        ts[cone_idx] = s * scale
        obj = float(c @ ty) + cp.offset if pcost is None else pcost + cp.offset
        dobj = float("nan") if dcost is None else dcost + cp.offset
        return ConicSolution(status, ty, ts, tz, float(obj), float(pres), float(dres), float(gap), it,
                             float(dobj), history)

    try:
        kkt = _KKT(G, Aeq, None)
        x, y, z = kkt.solve(np.zeros(nx), beq, h)
        s = -z
        _, y, z = kkt.solve(-c, np.zeros(Aeq.shape[0]), np.zeros(m))
    except (la.LinAlgError, np.linalg.LinAlgError, ValueError):
        zero = np.zeros
        return finish(Status.NUMERICAL, zero(nx), zero(len(beq)), zero(m), zero(m), 1.0, 0, np.inf, np.inf, np.inf)
    for v in (s, z):
        t = -blocks.min_eig(v) if m else -1.0
        if t >= -1e-8 * max(np.linalg.norm(v), 1.0):
            v += (1.0 + t) * e
    tau, kappa = 1.0, 1.0
    best = None
    W_prev = s_t = z_t = None  # scaling and scaled iterates of the last step

    def fallback(best, it):
        if best is None:
            nan = np.full
            return finish(Status.NUMERICAL, nan(nx, np.nan), nan(len(beq), np.nan), nan(m, np.nan),
                          nan(m, np.nan), 1.0, it, np.inf, np.inf, np.inf)
        merit, bx, by, bs, bz, btau, bp, bd, bg, bpc, bdc = best
        status = Status.NEAR_OPTIMAL if merit <= NEAR_FACTOR * tol else Status.NUMERICAL
        return finish(status, bx, by, bs, bz, btau, it, bp, bd, bg, bpc, bdc)

    for it in range(max_iter + 1):
        rx = Aeq.T @ y + G.T @ z + c * tau
        ry = -Aeq @ x + beq * tau
        rz = -G @ x + h * tau - s
        cx, by_hz = float(c @ x), float(beq @ y + h @ z)
        rt = -cx - by_hz - kappa
        pcost = cx / tau
        dcost = -by_hz / tau
        pres = max(np.linalg.norm(ry) / resy0, np.linalg.norm(rz) / resz0) / tau
        dres = np.linalg.norm(rx) / resx0 / tau
        sz = float(s @ z)
        gap = max(sz / tau ** 2, abs(pcost - dcost)) / (1.0 + abs(pcost))
        if record_history:
            history.append({"iter": it, "pcost": pcost + cp.offset, "dcost": dcost + cp.offset,
                            "pres": pres, "dres": dres, "gap": gap, "sz": sz, "tau": tau, "kappa": kappa})
        if not all(np.isfinite([pres, dres, gap, tau, kappa])):
            return fallback(best, it)
        if pres <= tol and dres <= tol and gap <= tol:
            return finish(Status.OPTIMAL, x, y, s, z, tau, it, pres, dres, gap, pcost, dcost)
        merit = max(pres, dres, gap)
        if best is None or merit < best[0]:
            best = (merit, x.copy(), y.copy(), s.copy(), z.copy(), tau, pres, dres, gap, pcost, dcost)
        # infeasibility certificates
        if by_hz < 0:
            pinf = np.linalg.norm(Aeq.T @ y + G.T @ z) / resx0 / (-by_hz)
            if pinf <= tol or (tau / kappa < INFEASIBILITY_RATIO and pinf <= math.sqrt(tol)):
                scale = 1.0 / -by_hz
                return finish(Status.PRIMAL_INFEASIBLE, x * 0, y * scale, s * 0, z * scale, 1.0, it,
                              pres, dres, gap)
        if cx < 0:
            dinf = max(np.linalg.norm(Aeq @ x) / resy0, np.linalg.norm(G @ x + s) / resz0) / (-cx)
            if dinf <= tol or (tau / kappa < INFEASIBILITY_RATIO and dinf <= math.sqrt(tol)):
                scale = 1.0 / -cx
                return finish(Status.DUAL_INFEASIBLE, x * scale, y * 0, s * scale, z * 0, 1.0, it,
                              pres, dres, gap)
        if it == max_iter:
            break
        try:
            if W_prev is None:
                W = _Scaling(blocks, s, z)
            else:
                W = _Scaling(blocks, s_t, z_t).compose(W_prev)
            lam = W.lam
            mu = (sz + tau * kappa) / (blocks.degree + 1)
            kkt = _KKT(G, Aeq, W)
            x2, y2, z2 = kkt.solve(-c, beq, h)
            denom_base = -(c @ x2 + beq @ y2 + h @ z2)
            lam_sq = blocks.prod(lam, lam)
            direction = None
            sigma = 0.0
            for phase in (0, 1):
                if phase == 0:
                    eta = 1.0
                    ds = lam_sq
                    dk = tau * kappa
                else:
                    step_aff = min(1.0, _step(W, dsa, dza, tau, kappa, dtau_a, dkap_a))
                    sigma = (1.0 - step_aff) ** 3
                    eta = 1.0 - sigma
                    ds = lam_sq + blocks.prod(dsa, dza) - sigma * mu * e
                    dk = tau * kappa + dtau_a * dkap_a - sigma * mu
                ld = W.lam_div(ds)
                x1, y1, z1 = kkt.solve(-eta * rx, eta * ry, eta * rz + W.Wt(ld))
                dtau = (-eta * rt - dk / tau + c @ x1 + beq @ y1 + h @ z1) / (kappa / tau + denom_base)
                dx = x1 + dtau * x2
                dy = y1 + dtau * y2
                dz = z1 + dtau * z2
                dkap = (-dk - kappa * dtau) / tau
                dzs = W.W(dz)
                dss = -ld - dzs
                if phase == 0:
                    dsa, dza, dtau_a, dkap_a = dss, dzs, dtau, dkap
                else:
                    direction = (dx, dy, dz, dss, dzs, dtau, dkap)
            dx, dy, dz, dss, dzs, dtau, dkap = direction
            alpha = min(1.0, STEP_FRACTION * _step(W, dss, dzs, tau, kappa, dtau, dkap))
            if not np.isfinite(alpha) or alpha <= 1e-12:
                return fallback(best, it)
            x = x + alpha * dx
            y = y + alpha * dy
            s_t, z_t = lam + alpha * dss, lam + alpha * dzs
            s, z = W.Wt(s_t), W.Winv(z_t)
            W_prev = W
            tau = tau + alpha * dtau
            kappa = kappa + alpha * dkap
            if tau <= 0 or kappa <= 0:
                return fallback(best, it)
        except (la.LinAlgError, np.linalg.LinAlgError, ValueError, ZeroDivisionError, FloatingPointError):
            return fallback(best, it)
    sol = fallback(best, max_iter)
    if sol.status is Status.NUMERICAL:
        sol.status = Status.ITER_LIMIT
    return sol


def _step(W: _Scaling, dss, dzs, tau, kappa, dtau, dkap) -> float:
    a = min(W.max_step(dss), W.max_step(dzs))
    if dtau < 0:
        a = min(a, -tau / dtau)
    if dkap < 0:
        a = min(a, -kappa / dkap)
    return a
