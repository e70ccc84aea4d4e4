"""Self-contained primal-dual interior-point solver for second-order cone programs.

Solves the conic pair

    minimize    c'x                maximize    -h'z
    subject to  Gx + s = h         subject to  G'z + c = 0
                s in K                         z in K

where K is a product of a nonnegative orthant of dimension `nonneg` followed
by second-order (Lorentz) cones Q_d = {(v0, v1) : v0 >= ||v1||_2}.

The method is the standard homogeneous self-dual embedding with Nesterov-Todd
scaling and a Mehrotra predictor-corrector step.  Each iteration factors the
normal-equations matrix G' W^-2 G once (dense Cholesky with static
regularization and iterative refinement) and performs two KKT solves.  Ruiz
equilibration with cone-blockwise row scaling conditions the data first.
Everything is dense; this targets the mid-sized problems produced by the
beamforming layer (hundreds of rows/columns), not sparse large-scale use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.linalg import LinAlgError
from scipy.linalg import cho_factor, cho_solve


class SolverError(RuntimeError):
    """The interior-point method could not produce a usable iterate."""


@dataclass(frozen=True)
class ConeDims:
    """Cone layout of the slack vector: `nonneg` linear entries, then SOC blocks."""

    nonneg: int = 0
    soc: tuple[int, ...] = ()

    def __post_init__(self):
        if self.nonneg < 0:
            raise ValueError("nonneg must be >= 0")
        object.__setattr__(self, "soc", tuple(int(d) for d in self.soc))
        if any(d < 2 for d in self.soc):
            raise ValueError("second-order cone blocks need dimension >= 2")

    @property
    def size(self) -> int:
        return self.nonneg + sum(self.soc)

    @property
    def degree(self) -> int:
        return self.nonneg + len(self.soc)


@dataclass
class ConeLPSolution:
    """Solver output in the caller's (unequilibrated) units."""

    status: str
    x: np.ndarray
    s: np.ndarray
    z: np.ndarray
    primal_objective: float
    dual_objective: float
    gap: float
    relative_gap: float
    primal_residual: float
    dual_residual: float
    iterations: int

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "near_optimal")


class _Cone:
    """Vectorized Jordan-algebra helpers for one fixed cone layout."""

    def __init__(self, dims: ConeDims):
        self.dims = dims
        self.l = dims.nonneg
        blocks = []
        start = dims.nonneg
        for d in dims.soc:
            blocks.append((start, start + d))
            start += d
        self.blocks = blocks
        self.size = dims.size
        self.degree = dims.degree
        e = np.zeros(self.size)
        e[: self.l] = 1.0
        for b0, _ in blocks:
            e[b0] = 1.0
        self.e = e

    def margin(self, v: np.ndarray) -> float:
        """Distance-like interiority measure: min over blocks of the cone margin."""
        m = np.inf
        if self.l:
            m = float(np.min(v[: self.l]))
        for b0, b1 in self.blocks:
            m = min(m, float(v[b0] - np.linalg.norm(v[b0 + 1: b1])))
        return m

    def to_interior(self, v: np.ndarray) -> np.ndarray:
        m = self.margin(v)
        return v if m > 0 else v + (1.0 - m) * self.e

    def jprod(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Jordan product u o v."""
        out = np.empty_like(u)
        out[: self.l] = u[: self.l] * v[: self.l]
        for b0, b1 in self.blocks:
            u0, u1 = u[b0], u[b0 + 1: b1]
            v0, v1 = v[b0], v[b0 + 1: b1]
            out[b0] = u0 * v0 + u1 @ v1
            out[b0 + 1: b1] = u0 * v1 + v0 * u1
        return out

    def jdiv(self, lam: np.ndarray, d: np.ndarray) -> np.ndarray:
        """Solve lam o u = d for u (lam strictly interior)."""
        out = np.empty_like(d)
        out[: self.l] = d[: self.l] / lam[: self.l]
        for b0, b1 in self.blocks:
            l0, l1 = lam[b0], lam[b0 + 1: b1]
            d0, d1 = d[b0], d[b0 + 1: b1]
            det = l0 * l0 - l1 @ l1
            u0 = (l0 * d0 - l1 @ d1) / det
            out[b0] = u0
            out[b0 + 1: b1] = (d1 - u0 * l1) / l0
        return out

    def max_step(self, v: np.ndarray, dv: np.ndarray) -> float:
        """Largest alpha with v + alpha*dv in the cone (v strictly interior)."""
        alpha = np.inf
        if self.l:
            neg = dv[: self.l] < 0
            if np.any(neg):
                alpha = float(np.min(-v[: self.l][neg] / dv[: self.l][neg]))
        for b0, b1 in self.blocks:
            v0, v1 = v[b0], v[b0 + 1: b1]
            d0, d1 = dv[b0], dv[b0 + 1: b1]
            # smallest positive root of (v0+a*d0)^2 - ||v1+a*d1||^2 = 0
            A = d0 * d0 - d1 @ d1
            B = 2.0 * (v0 * d0 - v1 @ d1)
            C = v0 * v0 - v1 @ v1
            if C <= 0:
                return 0.0
            roots = []
            if abs(A) < 1e-14 * max(1.0, abs(B)):
                if B < 0:
                    roots.append(-C / B)
            else:
                disc = B * B - 4.0 * A * C
                if disc >= 0:
                    q = -0.5 * (B + np.copysign(np.sqrt(disc), B))
                    # stable quadratic roots q/A and C/q
                    if q != 0:
                        roots.extend((q / A, C / q))
            pos = [r for r in roots if r > 0]
            if pos:
                alpha = min(alpha, min(pos))
        return alpha


class _Scaling:
    """Nesterov-Todd scaling point for the current (s, z) pair."""

    def __init__(self, cone: _Cone, s: np.ndarray, z: np.ndarray):
        self.cone = cone
        l = cone.l
        self.w_lin = np.sqrt(s[:l] / z[:l]) if l else np.zeros(0)
        self.lam = np.empty(cone.size)
        self.lam[:l] = np.sqrt(s[:l] * z[:l])
        self.soc = []
        for b0, b1 in cone.blocks:
            sb, zb = s[b0:b1], z[b0:b1]
            a = _jnorm(sb)
            b = _jnorm(zb)
            sbar, zbar = sb / a, zb / b
            gamma = np.sqrt((1.0 + sbar @ zbar) / 2.0)
            wbar = (sbar + _jflip(zbar)) / (2.0 * gamma)
            q0 = np.sqrt((wbar[0] + 1.0) / 2.0)
            q = np.empty_like(wbar)
            q[0] = q0
            q[1:] = wbar[1:] / (2.0 * q0)
            eta2 = a / b
            eta = np.sqrt(eta2)
            self.soc.append((wbar, q, eta, eta2))
            # lambda = W z for this block
            self.lam[b0:b1] = eta * (2.0 * q * (q @ zb) - _jflip(zb))

    def apply_W(self, v: np.ndarray) -> np.ndarray:
        cone = self.cone
        out = np.empty_like(v)
        out[: cone.l] = self.w_lin * v[: cone.l]
        for (b0, b1), (wbar, q, eta, eta2) in zip(cone.blocks, self.soc):
            vb = v[b0:b1]
            out[b0:b1] = eta * (2.0 * q * (q @ vb) - _jflip(vb))
        return out

    def apply_Winv(self, v: np.ndarray) -> np.ndarray:
        cone = self.cone
        out = np.empty_like(v)
        out[: cone.l] = v[: cone.l] / self.w_lin
        for (b0, b1), (wbar, q, eta, eta2) in zip(cone.blocks, self.soc):
            vb = v[b0:b1]
            qf = _jflip(q)
            out[b0:b1] = (2.0 * qf * (qf @ vb) - _jflip(vb)) / eta
        return out

    def apply_W2(self, v: np.ndarray) -> np.ndarray:
        cone = self.cone
        out = np.empty_like(v)
        out[: cone.l] = self.w_lin ** 2 * v[: cone.l]
        for (b0, b1), (wbar, q, eta, eta2) in zip(cone.blocks, self.soc):
            vb = v[b0:b1]
            out[b0:b1] = eta2 * (2.0 * wbar * (wbar @ vb) - _jflip(vb))
        return out

    def apply_W2inv(self, v: np.ndarray) -> np.ndarray:
        cone = self.cone
        out = np.empty_like(v)
        out[: cone.l] = v[: cone.l] / self.w_lin ** 2
        for (b0, b1), (wbar, q, eta, eta2) in zip(cone.blocks, self.soc):
            vb = v[b0:b1]
            wf = _jflip(wbar)
            out[b0:b1] = (2.0 * wf * (wf @ vb) - _jflip(vb)) / eta2
        return out


def _jnorm(v: np.ndarray) -> float:
    """Jordan spectral norm sqrt(v0^2 - ||v1||^2) of an interior SOC point."""
    head = float(v[0])
    tail = float(np.linalg.norm(v[1:]))
    inner = (head - tail) * (head + tail)
    if inner <= 0:
        raise SolverError("iterate left the cone interior; scaling broke down")
    return float(np.sqrt(inner))


def _jflip(v: np.ndarray) -> np.ndarray:
    """Reflection J v = (v0, -v1)."""
    out = -v
    out[0] = v[0]
    return out


def _equilibrate(c, G, h, cone: _Cone, passes: int = 3):
    """Ruiz equilibration with uniform scaling inside each SOC row block."""
    m, n = G.shape
    d_r = np.ones(m)
    d_c = np.ones(n)
    for _ in range(passes):
        Gs = np.abs(G) * d_r[:, None] * d_c[None, :]
        row = Gs.max(axis=1)
        for b0, b1 in cone.blocks:
            row[b0:b1] = row[b0:b1].max() if b1 > b0 else 1.0
        row[row == 0] = 1.0
        d_r /= np.sqrt(row)
        Gs = np.abs(G) * d_r[:, None] * d_c[None, :]
        col = Gs.max(axis=0)
        col[col == 0] = 1.0
        d_c /= np.sqrt(col)
    Gs = G * d_r[:, None] * d_c[None, :]
    hs = h * d_r
    cs = c * d_c
    g_h = max(float(np.max(np.abs(hs), initial=0.0)), 1e-8)
    g_c = max(float(np.max(np.abs(cs), initial=0.0)), 1e-8)
    return Gs, hs / g_h, cs / g_c, d_r, d_c, g_h, g_c


class _KKT:
    """Normal-equation KKT solver for [[0, G'], [G, -W^2]] with refinement.

    Per scaling update, `factor` assembles M = G' W^-2 G + reg*I using the
    rank-structured form of W^-2 on SOC blocks (the static parts G_b' J G_b
    are precomputed once per problem) and Cholesky-factors it.
    """

    def __init__(self, G: np.ndarray, cone: _Cone, refine_steps: int = 1):
        self.G = G
        self.cone = cone
        self.refine_steps = refine_steps
        m, n = G.shape
        self.n = n
        self.soc_static = []
        for b0, b1 in cone.blocks:
            Gb = G[b0:b1]
            JGb = Gb.copy()
            JGb[1:] *= -1.0
            self.soc_static.append(Gb.T @ JGb)
        self.base_reg = 1e-12

    def factor(self, scaling: _Scaling):
        G, cone = self.G, self.cone
        n = self.n
        M = np.zeros((n, n))
        if cone.l:
            Gl = G[: cone.l]
            d = 1.0 / scaling.w_lin ** 2
            M += (Gl * d[:, None]).T @ Gl
        for (b0, b1), Pb, (wbar, q, eta, eta2) in zip(cone.blocks, self.soc_static, scaling.soc):
            v = G[b0:b1].T @ _jflip(wbar)
            M += (2.0 * np.outer(v, v) - Pb) / eta2
        self.scaling = scaling
        scale = max(float(np.mean(np.diag(M))), 1.0)
        reg = self.base_reg * scale
        for attempt in range(8):
            try:
                self.chol = cho_factor(M + reg * np.eye(n), lower=False, check_finite=False)
                self.reg = reg
                return
            except LinAlgError:
                reg = max(reg * 100.0, 1e-14 * scale)
        raise SolverError("KKT matrix could not be factored; problem is numerically degenerate")

    def _base_solve(self, r1: np.ndarray, r2: np.ndarray):
        x = cho_solve(self.chol, r1 + self.G.T @ self.scaling.apply_W2inv(r2), check_finite=False)
        z = self.scaling.apply_W2inv(self.G @ x - r2)
        return x, z

    def solve(self, r1: np.ndarray, r2: np.ndarray):
        x, z = self._base_solve(r1, r2)
        for _ in range(self.refine_steps):
            res1 = r1 - self.G.T @ z
            res2 = r2 - (self.G @ x - self.scaling.apply_W2(z))
            dx, dz = self._base_solve(res1, res2)
            x += dx
            z += dz
        return x, z


def solve_cone_lp(c, G, h, dims: ConeDims, *, tol: float = 1e-8,
                  max_iterations: int = 100, equilibrate: bool = True,
                  refine_steps: int = 1) -> ConeLPSolution:
    """Solve min c'x s.t. Gx + s = h, s in the cone described by `dims`.

    Returns a `ConeLPSolution`; `status` is 'optimal' when primal/dual
    residuals and the relative gap are all below `tol`, 'near_optimal' when
    they reach tol^0.75, 'primal_infeasible'/'dual_infeasible' with a
    certificate, otherwise 'max_iterations' or 'stalled'.
    """
    c = np.ascontiguousarray(c, dtype=float)
    G = np.ascontiguousarray(G, dtype=float)
    h = np.ascontiguousarray(h, dtype=float)
    if G.ndim != 2:
        raise ValueError("G must be a 2-d array")
    m, n = G.shape
    if dims.size != m:
        raise ValueError(f"cone dims cover {dims.size} rows but G has {m}")
    if c.shape != (n,) or h.shape != (m,):
        raise ValueError("c/h shapes do not match G")
    if m == 0:
        if np.linalg.norm(c) == 0:
            return ConeLPSolution("optimal", np.zeros(n), h.copy(), h.copy(),
                                  0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0)
        raise ValueError("unconstrained problem with nonzero objective is unbounded")

    cone = _Cone(dims)
    if equilibrate:
        Gs, hs, cs, d_r, d_c, g_h, g_c = _equilibrate(c, G, h, cone)
    else:
        Gs, hs, cs = G, h, c
        d_r = np.ones(m)
        d_c = np.ones(n)
        g_h = g_c = 1.0

    kkt = _KKT(Gs, cone, refine_steps=refine_steps + 1)
    feastol = tol
    near_tol = max(tol ** 0.75, tol)

    # initialization from two least-squares solves (W = identity)
    eye_scaling = _Scaling(cone, cone.e.copy(), cone.e.copy())
    kkt.factor(eye_scaling)
    x, zhat = kkt.solve(np.zeros(n), hs)
    s = cone.to_interior(-zhat)
    xd, zhat = kkt.solve(-cs, np.zeros(m))
    z = cone.to_interior(zhat)
    tau, kappa = 1.0, 1.0

    absG = np.abs(G)
    habs = np.abs(h)
    cnorm = np.linalg.norm(c)
    status = "max_iterations"
    iters = 0
    pres = dres = relgap = np.inf
    gap = np.inf
    mu0 = None
    best = None
    best_worst = np.inf

    for it in range(max_iterations):
        iters = it
        res_x = Gs.T @ z + cs * tau
        res_z = Gs @ x + s - hs * tau
        res_tau = cs @ x + hs @ z + kappa
        mu = (s @ z + tau * kappa) / (cone.degree + 1)
        if mu0 is None:
            mu0 = mu

        # convergence is judged on residuals in the caller's units, normalized
        # backward-error style by the magnitude of the terms being cancelled
        xo = d_c * x * (g_h / tau)
        so = (s / d_r) * (g_h / tau)
        zo = d_r * z * (g_c / tau)
        pres = np.linalg.norm(G @ xo + so - h) / (
            1.0 + np.linalg.norm(absG @ np.abs(xo) + np.abs(so) + habs))
        dres = np.linalg.norm(G.T @ zo + c) / (
            1.0 + max(cnorm, float(np.linalg.norm(absG.T @ np.abs(zo)))))
        gap = so @ zo
        pcost = c @ xo
        dcost = -(h @ zo)
        relgap = gap / max(1.0, abs(pcost), abs(dcost))

        worst = max(pres, dres, relgap)
        if worst < best_worst:
            best_worst = worst
            best = (xo, so, zo, pres, dres, gap, relgap)

        if pres <= feastol and dres <= feastol and relgap <= tol:
            status = "optimal"
            break

        # infeasibility certificates (tau collapsing relative to kappa)
        if tau < 1e-3 * min(1.0, kappa):
            hz = hs @ z
            cx = cs @ x
            if hz < 0 and np.linalg.norm(Gs.T @ z) <= 1e-6 * (-hz):
                status = "primal_infeasible"
                break
            if cx < 0 and np.linalg.norm(Gs @ x + s) <= 1e-6 * (-cx):
                status = "dual_infeasible"
                break

        if mu0 > 0 and mu <= 1e-13 * mu0:
            # complementarity at the numerical floor; classify below
            status = "stalled"
            break

        try:
            scaling = _Scaling(cone, s, z)
            kkt.factor(scaling)
        except SolverError:
            status = "stalled"
            break
        x1, z1 = kkt.solve(-cs, hs)
        den = cs @ x1 + hs @ z1 - kappa / tau
        if not np.isfinite(den) or den >= 0:
            status = "stalled"
            break

        # affine (predictor) direction: ds = -(lam o lam), lam \ ds = -lam
        lam = scaling.lam
        dtil = -lam
        dk = -tau * kappa
        x2, z2 = kkt.solve(-res_x, -res_z - scaling.apply_W(dtil))
        dtau_a = (-res_tau - cs @ x2 - hs @ z2 - dk / tau) / den
        dz_a = z2 + dtau_a * z1
        ds_a = scaling.apply_W(dtil - scaling.apply_W(dz_a))
        dkappa_a = (dk - kappa * dtau_a) / tau

        alpha_a = min(1.0, cone.max_step(s, ds_a), cone.max_step(z, dz_a))
        if dtau_a < 0:
            alpha_a = min(alpha_a, -tau / dtau_a)
        if dkappa_a < 0:
            alpha_a = min(alpha_a, -kappa / dkappa_a)
        num = ((s + alpha_a * ds_a) @ (z + alpha_a * dz_a)
               + (tau + alpha_a * dtau_a) * (kappa + alpha_a * dkappa_a))
        sigma = float(np.clip(num / (s @ z + tau * kappa), 0.0, 1.0)) ** 3

        # combined (corrector) direction
        corr = cone.jprod(scaling.apply_Winv(ds_a), scaling.apply_W(dz_a))
        ds = -cone.jprod(lam, lam) + sigma * mu * cone.e - corr
        dk = -tau * kappa + sigma * mu - dtau_a * dkappa_a
        w1 = 1.0 - sigma
        dtil = cone.jdiv(lam, ds)
        x2, z2 = kkt.solve(-w1 * res_x, -w1 * res_z - scaling.apply_W(dtil))
        dtau = (-w1 * res_tau - cs @ x2 - hs @ z2 - dk / tau) / den
        dx = x2 + dtau * x1
        dz = z2 + dtau * z1
        ds_vec = scaling.apply_W(dtil - scaling.apply_W(dz))
        dkappa = (dk - kappa * dtau) / tau
        if not (np.isfinite(dtau) and np.isfinite(dkappa)
                and np.all(np.isfinite(dz)) and np.all(np.isfinite(ds_vec))):
            status = "stalled"
            break

        alpha = min(cone.max_step(s, ds_vec), cone.max_step(z, dz))
        if dtau < 0:
            alpha = min(alpha, -tau / dtau)
        if dkappa < 0:
            alpha = min(alpha, -kappa / dkappa)
        alpha = min(1.0, 0.98 * alpha)
        if alpha < 1e-9:
            status = "stalled"
            break

        x += alpha * dx
        s += alpha * ds_vec
        z += alpha * dz
        tau += alpha * dtau
        kappa += alpha * dkappa
        iters = it + 1

    if status in ("primal_infeasible", "dual_infeasible"):
        # certificate ray, unscaled
        x_out = d_c * x * g_h
        z_out = d_r * z * g_c
        s_out = (s / d_r) * g_h
        return ConeLPSolution(status, x_out, s_out, z_out, np.nan, np.nan,
                              np.nan, np.nan, np.nan, np.nan, iters)

    # report the best iterate seen; on a clean 'optimal' exit that is the
    # final one, after a stall it may be an earlier, more accurate point
    if best is not None:
        x_out, s_out, z_out, pres, dres, gap, relgap = best
    else:
        x_out = d_c * (x / tau) * g_h
        s_out = (s / d_r) / tau * g_h
        z_out = d_r * (z / tau) * g_c
    if status in ("max_iterations", "stalled"):
        if pres <= near_tol and dres <= near_tol and relgap <= near_tol:
            status = "near_optimal"
    pobj = float(c @ x_out)
    dobj = float(-(h @ z_out))
    return ConeLPSolution(status, x_out, s_out, z_out, pobj, dobj,
                          float(gap), float(relgap), float(pres), float(dres),
                          iters)
