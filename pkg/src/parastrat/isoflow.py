"""Isomonodromy deformation machinery.

Covers the concrete slope-1/n regime (all points Iwahori, depth one): the
closed-form global deformation form, the explicit right-hand side of the
deformation equations, a fixed-step RK4 integrator with conserved-quantity
monitoring, the independent residual evaluator for the three deformation
conditions, and the numeric rank check of the Pfaffian generator system.

Conventions: the global one-form is dz; the deformation coordinates are the
irregular type coefficients a_i (positions stay fixed); framings evolve
through their left-coset representatives.
"""

import numpy as np

from .laurent import (DEFAULT_TOL, LaurentMatrix, OneForm, invert,
                      max_abs_diff)
from .parahoric import ParahoricContext, TorusElement, project_to_torus
from .moduli import (LocalPoint, ModuliPoint, RationalMatrixForm,
                     assemble_connection, glue_principal_parts,
                     local_normalized_type, moment_residue, validate_point)


def _tol(tol):
    return DEFAULT_TOL if tol is None else tol


def upper_corner(n):
    e = np.zeros((n, n), dtype=complex)
    e[0, n - 1] = 1.0
    return e


def lower_corner(n):
    e = np.zeros((n, n), dtype=complex)
    e[n - 1, 0] = 1.0
    return e


def subdiag_nilpotent(n):
    return np.diag(np.ones(n - 1, dtype=complex), -1)


def superdiag_nilpotent(n):
    return np.diag(np.ones(n - 1, dtype=complex), 1)


def irregular_tangent(ctx, r, dt):
    """Torus-valued tangent coefficient of a type velocity: the uniformizer
    exponent -j slot carries (e/n) dt_{-j}.  ``dt`` lists (dt_{-r},...,dt_{-1})
    as per-block vectors (scalars accepted when n = e)."""
    dt = np.asarray(dt, dtype=complex).reshape(r, ctx.nblocks)
    return TorusElement(ctx, {-j: (ctx.e / ctx.n) * dt[r - j] for j in range(1, r + 1)})


# ---------------------------------------------------------------------------
# flow state (Iwahori slope-1/n regime)


class FlowState:
    """State of the slope-1/n flow: fixed positions, irregular coefficients
    a_i, framing representatives g_i, and residue matrices R_i.

    The framed local expansion determines the auxiliary traceless diagonal
    D_i and unipotent X_i through

        Ad(g_i) R_i = -(a_i/n) N' - (D_i + X_i)/n + t0_i I + H,

    with N' the subdiagonal nilpotent and H the normalizing shift; the
    subdiagonal of that expansion must match a_i (shape defect reported by
    ``consistency_defect``).
    """

    def __init__(self, ctx, xi, a, framings, residues, t0_ref=None):
        if ctx.e != ctx.n:
            raise ValueError("flow state requires the Iwahori regime (e = n)")
        self.ctx = ctx
        self.xi = np.asarray(xi, dtype=complex).copy()
        self.a = np.asarray(a, dtype=complex).copy()
        self.m = len(self.xi)
        if len(self.a) != self.m or len(framings) != self.m or len(residues) != self.m:
            raise ValueError("inconsistent point count")
        if np.any(np.abs(self.a) < 1e-12):
            raise ValueError("irregular coefficients must be nonzero")
        self.g = [np.asarray(g, dtype=complex).copy() for g in framings]
        self.R = [np.asarray(r, dtype=complex).copy() for r in residues]
        self.t0_ref = self.t0().copy() if t0_ref is None else np.asarray(t0_ref, dtype=complex)

    # -- derived data

    def corner_frame(self, i):
        """B_i = Ad(g_i^{-1}) of the top-right corner matrix."""
        return np.linalg.solve(self.g[i], upper_corner(self.ctx.n) @ self.g[i])

    def t0(self):
        return np.array([np.trace(r) / self.ctx.n for r in self.R])

    def expansion(self, i):
        """(D_i, X_i, t0_i, shape defect) of the framed local expansion."""
        n = self.ctx.n
        h = self.ctx.norm_shift()
        adr = self.g[i] @ self.R[i] @ np.linalg.inv(self.g[i])
        q = -n * (adr - h) - self.a[i] * subdiag_nilpotent(n)
        t0 = -np.trace(q) / n ** 2
        d = np.diag(np.diag(q)) - (np.trace(q) / n) * np.eye(n)
        x = np.triu(q, 1)
        lower = np.tril(q, -1)
        return d, x, t0, float(np.max(np.abs(lower)))

    def consistency_defect(self):
        return max(self.expansion(i)[3] for i in range(self.m))

    def to_moduli_point(self):
        pts = []
        n = self.ctx.n
        for i in range(self.m):
            alpha = LaurentMatrix(n, {-2: -(self.a[i] / n) * self.corner_frame(i),
                                      -1: self.R[i]})
            pts.append(LocalPoint(self.xi[i], self.ctx, 1, self.g[i], alpha))
        return ModuliPoint(pts, OneForm.dz())

    def moment_residual(self):
        return float(np.max(np.abs(sum(self.R))))

    def project_to_chart(self):
        """Snap onto the exact-shape chart: rebuild every residue from its
        (a, D, X, t0_ref) expansion data, discarding the transversal
        integrator drift (strict-lower junk and trace slack)."""
        n = self.ctx.n
        h = self.ctx.norm_shift()
        npr = subdiag_nilpotent(n)
        rs = []
        for i in range(self.m):
            d, x, _, _ = self.expansion(i)
            framed = -(self.a[i] / n) * npr - (d + x) / n \
                + self.t0_ref[i] * np.eye(n) + h
            rs.append(np.linalg.solve(self.g[i], framed @ self.g[i]))
        return FlowState(self.ctx, self.xi, self.a, self.g, rs, t0_ref=self.t0_ref)

    # -- flat packing for the integrator

    def pack(self):
        return np.concatenate([np.ravel(g) for g in self.g] + [np.ravel(r) for r in self.R])

    def with_data(self, a, vec):
        n, m = self.ctx.n, self.m
        k = n * n
        gs = [vec[i * k:(i + 1) * k].reshape(n, n) for i in range(m)]
        rs = [vec[(m + i) * k:(m + i + 1) * k].reshape(n, n) for i in range(m)]
        return FlowState(self.ctx, self.xi, a, gs, rs, t0_ref=self.t0_ref)

    def __repr__(self):
        return f"FlowState(n={self.ctx.n}, m={self.m}, a={np.round(self.a, 4)})"


def balanced_flow_state(ctx, xi, a, rng, framing_scale=0.4):
    """Sample a valid slope-1/n state with the given positions and irregular
    coefficients: random framings, then the auxiliary diagonal/unipotent and
    trace data solved (least-norm) so the residues sum to zero."""
    n = ctx.n
    m = len(xi)
    a = np.asarray(a, dtype=complex)
    nprime = subdiag_nilpotent(n)
    h = ctx.norm_shift()
    gs = []
    for _ in range(m):
        while True:
            g = np.eye(n) + framing_scale * (rng.standard_normal((n, n))
                                             + 1j * rng.standard_normal((n, n)))
            if np.linalg.cond(g) < 20:
                gs.append(g)
                break
    gi = [np.linalg.inv(g) for g in gs]

    # per-point directions: traceless diagonals, strict-upper slots, the trace
    dirs = []
    for i in range(m):
        point_dirs = []
        for k in range(n - 1):
            d = np.zeros(n, dtype=complex)
            d[k], d[k + 1] = 1.0, -1.0
            point_dirs.append(-np.diag(d) / n)
        for aa in range(n):
            for bb in range(aa + 1, n):
                x = np.zeros((n, n), dtype=complex)
                x[aa, bb] = 1.0
                point_dirs.append(-x / n)
        point_dirs.append(np.eye(n, dtype=complex))
        dirs.append(point_dirs)

    rhs = np.zeros((n, n), dtype=complex)
    for i in range(m):
        rhs -= gi[i] @ (-(a[i] / n) * nprime + h) @ gs[i]
    cols = [np.ravel(gi[i] @ d @ gs[i]) for i in range(m) for d in dirs[i]]
    sol = np.linalg.lstsq(np.array(cols).T, rhs.ravel(), rcond=None)[0]

    per = len(dirs[0])
    rs = []
    for i in range(m):
        extra = sum(c * d for c, d in zip(sol[i * per:(i + 1) * per], dirs[i]))
        rs.append(gi[i] @ (-(a[i] / n) * nprime + h + extra) @ gs[i])
    return FlowState(ctx, xi, a, gs, rs)


# ---------------------------------------------------------------------------
# deformation forms and the explicit right-hand side


def global_deformation_form(state, da):
    """The closed-form global one-form coefficient of the slope-1/n regime:
    the glued simple poles (z - xi_i)^{-1} Ad(g_i^{-1})(corner) da_i."""
    da = np.asarray(da, dtype=complex)
    terms = {}
    for i in range(state.m):
        c = state.corner_frame(i) * da[i]
        if np.any(c):
            terms[complex(state.xi[i])] = [c]
    return RationalMatrixForm(state.ctx.n, terms)


def assemble_alpha(state):
    """The global connection coefficient of the state (double poles)."""
    n = state.ctx.n
    terms = {}
    for i in range(state.m):
        terms[complex(state.xi[i])] = [state.R[i],
                                       -(state.a[i] / n) * state.corner_frame(i)]
    return RationalMatrixForm(n, terms)


def iwahori_rhs(state, da):
    """Right-hand side of the explicit slope-1/n deformation equations.

    Returns (framing log-velocities dg_i g_i^{-1}, residue velocities dR_i).
    The framing equation is

        dg_i g_i^{-1} = sum_{j != i} Ad(g_i g_j^{-1})(corner) da_j / (xi_i - xi_j)
                        - N' da_i - D_i da_i / a_i    (mod the unipotent radical),

    and the residue flow couples first- and second-order pole interactions
    of the corner frames.
    """
    da = np.asarray(da, dtype=complex)
    n, m = state.ctx.n, state.m
    xi, a = state.xi, state.a
    B = [state.corner_frame(i) for i in range(m)]
    nprime = subdiag_nilpotent(n)

    L = []
    for i in range(m):
        acc = np.zeros((n, n), dtype=complex)
        for j in range(m):
            if j == i:
                continue
            acc += (da[j] / (xi[i] - xi[j])) * (state.g[i] @ B[j] @ np.linalg.inv(state.g[i]))
        d_i, _, _, _ = state.expansion(i)
        acc -= nprime * da[i] + d_i * (da[i] / a[i])
        L.append(acc)

    dR = []
    for i in range(m):
        acc = np.zeros((n, n), dtype=complex)
        for j in range(m):
            if j == i:
                continue
            w = 1.0 / (xi[j] - xi[i])
            acc += w * ((B[j] @ state.R[i] - state.R[i] @ B[j]) * da[j]
                        + (B[i] @ state.R[j] - state.R[j] @ B[i]) * da[i])
            acc += (w * w / n) * (B[i] @ B[j] - B[j] @ B[i]) * (a[i] * da[j] + a[j] * da[i])
        dR.append(acc)
    return L, dR


def alpha_velocity(state, da, L, dR):
    """Velocity of the global connection coefficient induced by (da, L, dR)."""
    da = np.asarray(da, dtype=complex)
    n = state.ctx.n
    ec = upper_corner(n)
    terms = {}
    for i in range(state.m):
        b = state.corner_frame(i)
        db = np.linalg.solve(state.g[i], (ec @ L[i] - L[i] @ ec) @ state.g[i])
        lead = -(da[i] * b + state.a[i] * db) / n
        terms[complex(state.xi[i])] = [dR[i], lead]
    return RationalMatrixForm(n, terms)


def euler_shift(state, direction, h):
    """First-order transport of the state along the flow of a coordinate
    direction; used for the finite-difference curvature test."""
    L, dR = iwahori_rhs(state, direction)
    a = state.a + h * np.asarray(direction, dtype=complex)
    gs = [state.g[i] + h * (L[i] @ state.g[i]) for i in range(state.m)]
    rs = [state.R[i] + h * dR[i] for i in range(state.m)]
    return FlowState(state.ctx, state.xi, a, gs, rs, t0_ref=state.t0_ref)


def curvature_two_form_residual(state, pairs=None, h=1e-4):
    """Finite-difference residual of d(form) + form wedge form on tangent
    pairs, transported along the deformation distribution itself."""
    m = state.m
    if pairs is None:
        pairs = [(j, k) for j in range(m) for k in range(j + 1, m)]
    worst = 0.0
    eye = np.eye(m)
    for u_idx, v_idx in pairs:
        u = eye[u_idx] if np.ndim(u_idx) == 0 else np.asarray(u_idx)
        v = eye[v_idx] if np.ndim(v_idx) == 0 else np.asarray(v_idx)
        fu_p = global_deformation_form(euler_shift(state, u, h), v)
        fu_m = global_deformation_form(euler_shift(state, u, -h), v)
        fv_p = global_deformation_form(euler_shift(state, v, h), u)
        fv_m = global_deformation_form(euler_shift(state, v, -h), u)
        d_form = (fu_p - fu_m) * (1.0 / (2 * h)) - (fv_p - fv_m) * (1.0 / (2 * h))
        wedge = global_deformation_form(state, u).commutator(global_deformation_form(state, v))
        worst = max(worst, (d_form + wedge).max_abs())
    return worst


# ---------------------------------------------------------------------------
# the independent residual evaluator


def _reduction_data(mp, depth, tol):
    """Per-point normalized types and reduction gauges (with inverses)."""
    out = []
    for p in mp.points:
        ft, gauge = local_normalized_type(p, depth=depth, tol=tol,
                                          containment_tol=1e-6, with_gauge=True)
        out.append((ft, gauge, invert(gauge)))
    return out


def _phi_forms(mp, red, dt_vectors):
    """The per-point conjugated tangent forms and the glued global form."""
    phis = []
    parts = []
    for p, (ft, gauge, gauge_inv), dt in zip(mp.points, red, dt_vectors):
        a_tm = irregular_tangent(p.ctx, p.r, dt).embed()
        phi = gauge_inv @ a_tm @ gauge
        phis.append(phi)
        gi = np.linalg.inv(p.framing)
        parts.append((p.xi, phi.conjugate_by(gi, p.framing).principal_part()))
    ups = glue_principal_parts(parts, n=mp.n)
    return phis, ups


def deformation_residuals(state, da, L=None, dR=None, *, dalpha=None,
                          cond3_pairs=None, tol=None, fd_step=1e-4,
                          reduction_depth=None):
    """Defect sizes of the three deformation conditions for the proposed
    velocities, computed through the general machinery (local reductions,
    glued forms, rational arithmetic) independently of the explicit
    right-hand side.

    Returns (framing-condition, curvature-condition, two-form) residuals.
    The third is finite-difference based and needs tangent pairs; pass
    ``cond3_pairs=()`` to skip it.
    """
    da = np.asarray(da, dtype=complex)
    if L is None or dR is None:
        if np.max(np.abs(da)) == 0.0:
            L = [np.zeros((state.ctx.n, state.ctx.n), dtype=complex)] * state.m
            dR = list(L)
        else:
            raise ValueError("velocities L, dR are required for a moving tangent")
    mp = state.to_moduli_point()
    r = mp.points[0].r
    depth = (r + 1) if reduction_depth is None else reduction_depth
    red = _reduction_data(mp, depth, tol)
    dt_vectors = [np.array([da[i]]) for i in range(state.m)]
    phis, ups = _phi_forms(mp, red, dt_vectors)

    mask_u = state.ctx.unipotent_mask()
    res1 = 0.0
    for i, (p, phi) in enumerate(zip(mp.points, phis)):
        defect = (phi.certified_coeff(0) + L[i]
                  - p.framing @ ups.value_skipping_pole(p.xi) @ np.linalg.inv(p.framing))
        defect = np.where(mask_u, 0.0, defect)
        res1 = max(res1, float(np.max(np.abs(defect))))

    # loose gate: integrator drift off the residue constraint is reported by
    # the residuals themselves, not by refusing to evaluate them
    alpha = assemble_connection(mp, tol=1e-3)
    if dalpha is None:
        dalpha = alpha_velocity(state, da, L, dR)
    defect2 = dalpha - ups.d_dz() - alpha.commutator(ups)
    res2 = defect2.max_abs()

    if cond3_pairs == ():
        res3 = 0.0
    else:
        res3 = curvature_two_form_residual(state, cond3_pairs, fd_step)
    return res1, res2, res3


# ---------------------------------------------------------------------------
# integration


class PathSpec:
    """Piecewise-linear path through waypoints in irregular-coefficient
    space, parameterized uniformly on [0, 1]."""

    def __init__(self, waypoints):
        w = np.asarray(waypoints, dtype=complex)
        if w.ndim != 2 or len(w) < 2:
            raise ValueError("need at least two waypoints")
        self.waypoints = w

    @property
    def segments(self):
        return len(self.waypoints) - 1

    def a(self, s):
        s = min(max(float(s), 0.0), 1.0)
        t = s * self.segments
        k = min(int(t), self.segments - 1)
        f = t - k
        return (1 - f) * self.waypoints[k] + f * self.waypoints[k + 1]

    def velocity(self, s):
        s = min(max(float(s), 0.0), 1.0)
        k = min(int(s * self.segments), self.segments - 1)
        return (self.waypoints[k + 1] - self.waypoints[k]) * self.segments


class TrajectorySample:
    """Snapshot in the exact-shape chart (the CSV representation), with the
    conserved-quantity metrics taken from the raw integrated state."""

    __slots__ = ("s", "a", "g", "R", "D", "X", "residuals", "t0", "moment_residual")

    def __init__(self, s, state, residuals, raw_state=None):
        raw = state if raw_state is None else raw_state
        self.s = float(s)
        self.a = state.a.copy()
        self.g = [g.copy() for g in state.g]
        self.R = [r.copy() for r in state.R]
        exp = [state.expansion(i) for i in range(state.m)]
        self.D = [e[0] for e in exp]
        self.X = [e[1] for e in exp]
        self.residuals = tuple(residuals)
        self.t0 = raw.t0()
        self.moment_residual = raw.moment_residual()


class Trajectory:
    """Recorded flow: strictly increasing path parameters with state and
    residual snapshots, plus drift summaries of the conserved quantities."""

    def __init__(self, path, samples, state0):
        self.path = path
        self.samples = samples
        self.t0_ref = state0.t0_ref

    @property
    def terminal(self):
        return self.samples[-1]

    def max_residuals(self):
        return tuple(max(s.residuals[k] for s in self.samples) for k in range(3))

    def t0_drift(self):
        return max(float(np.max(np.abs(s.t0 - self.t0_ref))) for s in self.samples)

    def max_moment_residual(self):
        return max(s.moment_residual for s in self.samples)


class StepRejected(RuntimeError):
    pass


def _rk4_step(state, path, s, h):
    def deriv(si, st):
        L, dR = iwahori_rhs(st, path.velocity(si))
        return [L[i] @ st.g[i] for i in range(st.m)], dR

    def offset(si, ks, f):
        dg, dR = ks
        gs = [state.g[i] + f * dg[i] for i in range(state.m)]
        rs = [state.R[i] + f * dR[i] for i in range(state.m)]
        return FlowState(state.ctx, state.xi, path.a(si), gs, rs, t0_ref=state.t0_ref)

    k1 = deriv(s, state)
    k2 = deriv(s + h / 2, offset(s + h / 2, k1, h / 2))
    k3 = deriv(s + h / 2, offset(s + h / 2, k2, h / 2))
    k4 = deriv(s + h, offset(s + h, k3, h))

    gs, rs = [], []
    for i in range(state.m):
        inc_g = k1[0][i] + 2 * k2[0][i] + 2 * k3[0][i] + k4[0][i]
        inc_r = k1[1][i] + 2 * k2[1][i] + 2 * k3[1][i] + k4[1][i]
        gs.append(state.g[i] + (h / 6) * inc_g)
        rs.append(state.R[i] + (h / 6) * inc_r)
    return FlowState(state.ctx, state.xi, path.a(s + h), gs, rs, t0_ref=state.t0_ref)


def integrate_flow(state0, path, steps, *, residual_ceiling=None, max_halvings=4,
                   cond3_pairs=None, record_residuals=True, tol=None):
    """Classical fixed-step RK4 along the path, recording the state and the
    deformation-condition residuals of the discrete velocity at each sample.
    A sample whose residual exceeds the ceiling is retried with halved
    substeps before giving up."""
    if np.max(np.abs(state0.a - path.a(0.0))) > 1e-9:
        raise ValueError("initial coefficients do not match the path start")

    def chart_sample(st, s):
        """Project onto the exact-shape chart and evaluate the residual
        triple there, so the CSV row determines the residuals exactly."""
        proj = st.project_to_chart()
        if not record_residuals:
            return proj, (0.0, 0.0, 0.0)
        L, dR = iwahori_rhs(proj, path.velocity(s))
        res = deformation_residuals(proj, path.velocity(s), L, dR,
                                    cond3_pairs=cond3_pairs, tol=tol)
        return proj, res

    proj0, res0 = chart_sample(state0, 0.0)
    samples = [TrajectorySample(0.0, proj0, res0, raw_state=state0)]
    state = state0
    h = 1.0 / steps
    for k in range(steps):
        s = k * h
        sub = 1
        for attempt in range(max_halvings + 1):
            trial = state
            hh = h / sub
            for q in range(sub):
                trial = _rk4_step(trial, path, s + q * hh, hh)
            proj, res = chart_sample(trial, s + h)
            if residual_ceiling is None or max(res) <= residual_ceiling \
                    or attempt == max_halvings:
                if residual_ceiling is not None and max(res) > residual_ceiling \
                        and attempt == max_halvings:
                    raise StepRejected(
                        f"residual {max(res):.3e} above ceiling at s={s + h:.6f}")
                state = trial
                samples.append(TrajectorySample(s + h, proj, res, raw_state=trial))
                break
            sub *= 2
    return Trajectory(path, samples, state0)


# ---------------------------------------------------------------------------
# Pfaffian generator rank


def extended_orbit_dim(ctx, r):
    """Dimension count of a local extended orbit: gl/radical plus the
    integral-lattice quotient minus the positive torus band."""
    n, e = ctx.n, ctx.e
    dim_u = int(np.sum(ctx.unipotent_mask()))
    g_over_p = 0
    for a in range(n):
        for b in range(n):
            g_over_p += max(0, -((ctx.threshold[a, b] - r) // e))
    t_band = (r - 1) * ctx.nblocks if r >= 1 else 0
    return (n * n - dim_u) + g_over_p - t_band


class RankReport:
    def __init__(self, observed, expected, dmu_residual, singular_values):
        self.observed = int(observed)
        self.expected = int(expected)
        self.dmu_residual = float(dmu_residual)
        self.singular_values = singular_values

    def __repr__(self):
        return (f"RankReport(observed={self.observed}, expected={self.expected}, "
                f"dmu_residual={self.dmu_residual:.2e})")


def _tangent_basis(ctx, r):
    """Ambient tangent directions of a local extended orbit at a point, as
    perturbations of the log-form local matrix: torus directions at the
    leading level, all graded monomials at the intermediate levels, and the
    constant unipotent slots."""
    out = []
    for blk in range(ctx.nblocks):
        v = np.zeros(ctx.nblocks)
        v[blk] = 1.0
        out.append(TorusElement(ctx, {-r: v}).embed())
    for lvl in range(-r + 1, 1):
        mons = ctx.graded_monomials(lvl)
        for k in range(len(mons)):
            unit = np.zeros(len(mons))
            unit[k] = 1.0
            out.append(ctx.embed_graded(lvl, unit))
    mask = ctx.unipotent_mask()
    for a in range(ctx.n):
        for b in range(ctx.n):
            if mask[a, b]:
                m = np.zeros((ctx.n, ctx.n), dtype=complex)
                m[a, b] = 1.0
                out.append(LaurentMatrix.constant(m))
    return out


def pfaffian_rank_check(mp, sv_tol=1e-8, tol=None):
    """Numeric rank of the generator system of the deformation ideal at a
    moduli point, against the closed-form dimension count, plus the
    least-squares defect of expressing the moment-map differential in the
    generator span."""
    n = mp.n
    m = len(mp.points)
    red = _reduction_data(mp, mp.points[0].r + 1, tol)
    alpha = assemble_connection(mp, tol=1e-6)
    g_inv = [np.linalg.inv(p.framing) for p in mp.points]

    # ambient tangents: per point the non-radical framing directions, then
    # the local functional directions
    tangents = []
    for i, p in enumerate(mp.points):
        mask = p.ctx.unipotent_mask()
        for a in range(n):
            for b in range(n):
                if not mask[a, b]:
                    bb = np.zeros((n, n), dtype=complex)
                    bb[a, b] = 1.0
                    tangents.append(("g", i, bb))
        for dj in _tangent_basis(p.ctx, p.r):
            tangents.append(("alpha", i, dj))

    theta_rows = [[] for _ in range(m)]
    xi_rows = [[] for _ in range(m)]
    dmu_vals = []
    for kind, i, data in tangents:
        p = mp.points[i]
        ctx = p.ctx
        j_mat = p.log_form()
        if kind == "g":
            # a framing direction alone exits the moduli manifold (it tilts
            # the leading class off the torus cone and below the containment
            # level); pair it with the compensating local-functional velocity
            bmat = LaurentMatrix.constant(data)
            raw = bmat @ j_mat - j_mat @ bmat
            comp = LaurentMatrix.zeros(n)
            for lvl in range(-p.r - (ctx.e - 1), -p.r):
                cl = ctx.graded_coords(raw, lvl)
                if np.max(np.abs(cl)) > 0:
                    comp = comp + ctx.embed_graded(lvl, cl)
            _, wlead = ctx.split_graded(-p.r, ctx.graded_coords(raw, -p.r))
            if np.max(np.abs(wlead)) > 0:
                comp = comp + ctx.embed_graded(-p.r, wlead)
            dj = raw - comp
            dalpha_local = (-1.0) * comp.conjugate_by(g_inv[i], p.framing).shift(-1)
            lvel = data
        else:
            dj = data
            dalpha_local = data.conjugate_by(g_inv[i], p.framing).shift(-1)
            lvel = np.zeros((n, n), dtype=complex)
        ft, gauge, gauge_inv = red[i]
        tor = project_to_torus(ctx, gauge @ dj @ gauge_inv)
        a_tm = TorusElement(ctx, {-jj: (-ctx.e / jj) * tor.coeff(-jj)
                                  for jj in range(1, p.r + 1)})
        phi = gauge_inv @ a_tm.embed() @ gauge
        part = phi.conjugate_by(g_inv[i], p.framing).principal_part()
        ups = glue_principal_parts([(p.xi, part)], n=n)
        if dalpha_local.max_abs() > 0:
            dalpha = glue_principal_parts([(p.xi, dalpha_local.principal_part())], n=n)
        else:
            dalpha = RationalMatrixForm.zero(n)
        dmu_vals.append(dalpha_local.coeff(-1))
        defect2 = dalpha - ups.d_dz() - alpha.commutator(ups)
        for jj, pj in enumerate(mp.points):
            maskj = pj.ctx.unipotent_mask()
            th = (phi.certified_coeff(0) if jj == i else np.zeros((n, n), dtype=complex))
            if kind == "g" and jj == i:
                th = th + lvel
            th = th - pj.framing @ ups.value_skipping_pole(pj.xi) @ g_inv[jj]
            theta_rows[jj].append(np.where(maskj, 0.0, th).ravel())
            depth = pj.pole_bound
            xr = np.concatenate([defect2.coeff(pj.xi, k).ravel() for k in range(depth)])
            xi_rows[jj].append(xr)

    rows = []
    for jj in range(m):
        rows.append(np.array(theta_rows[jj]).T)
        rows.append(np.array(xi_rows[jj]).T)
    gmat = np.vstack(rows)  # generator components x tangents

    dmu = np.array([v.ravel() for v in dmu_vals]).T  # n^2 x tangents

    null = np.linalg.svd(dmu)[2].conj().T[:, np.linalg.matrix_rank(dmu, tol=1e-10):]
    restricted = gmat @ null
    svals = np.linalg.svd(restricted, compute_uv=False)
    observed = int(np.sum(svals > sv_tol * max(1.0, svals[0])))

    expected = sum(extended_orbit_dim(p.ctx, p.r) for p in mp.points) - n * n

    sol, res, *_ = np.linalg.lstsq(gmat.T, dmu.T, rcond=None)
    approx = gmat.T @ sol
    dmu_residual = float(np.max(np.abs(approx - dmu.T)))
    return RankReport(observed, expected, dmu_residual, svals)
