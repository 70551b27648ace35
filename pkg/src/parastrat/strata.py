"""Regularity of strata and gauge reduction to normalized formal types.

Internally everything runs in the "log form": a connection matrix K with
[nabla] = K nu is rescaled to J = K * (z u), on which the gauge action reads
Ad(g) J - z (d_z g) g^{-1} independently of nu.  In that form a normalized
type is

    J = gamma_{-r} w^{-r} + ... + gamma_{-1} w^{-1} + gamma_0 + shift,

with w the block uniformizer, per-block coefficients gamma_j, and the
constant diagonal shift added at the normalization step.  The stored type
coefficients follow the convention gamma_j = (j/n) t_j for j < 0 and
gamma_0 = t_0.
"""

import math

import numpy as np

from .laurent import (DEFAULT_TOL, LaurentMatrix, NotInvertibleError, OneForm,
                      WindowError, exp_matrix, gauge_transform_logz, invert)
from .parahoric import ParahoricContext, TorusElement, valuation

MODZ_TOL = 1e-8  # tolerance on fractional-part gaps in the depth-zero case


def _tol(tol):
    return DEFAULT_TOL if tol is None else tol


class StratumError(ValueError):
    """Input does not contain, or is not, the requested stratum."""


class ResonanceError(StratumError):
    """Depth-zero reduction hit an eigenvalue gap that is integral."""


class Stratum:
    """A depth-r stratum for the standard parahoric, with a representative
    of its leading functional in the log-form normalization (level >= -r)."""

    def __init__(self, ctx, r, beta_rep, tol=None):
        if math.gcd(r, ctx.e) != 1:
            raise StratumError(f"depth {r} and period {ctx.e} must be coprime")
        v = valuation(ctx, beta_rep, tol)
        if v != math.inf and v < -r:
            raise StratumError(f"representative has level {v} < {-r}")
        self.ctx = ctx
        self.r = int(r)
        self.beta_rep = beta_rep

    @property
    def slope(self):
        """Reported irregularity r/e."""
        return self.r / self.ctx.e

    def leading_coords(self):
        return self.ctx.graded_coords(self.beta_rep, -self.r)

    def __repr__(self):
        return f"Stratum(n={self.ctx.n}, e={self.ctx.e}, r={self.r})"


class StratumReport:
    """Outcome of the regularity test; ``reasons`` is empty iff regular."""

    def __init__(self, regular, reasons, y_beta=None, details=None):
        self.regular = bool(regular)
        self.reasons = list(reasons)
        self.y_beta = y_beta
        self.details = details or {}

    def __repr__(self):
        return f"StratumReport(regular={self.regular}, reasons={self.reasons})"


class FormalType:
    """Coefficient data (t_{-r}, ..., t_0) of a canonical-shape type.

    Each t_j is a per-block vector; the leading t_{-r} must be invertible in
    every block, and for depth zero the entries of t_0 must stay distinct
    modulo the integers.
    """

    def __init__(self, ctx, r, coeffs, normalized=False, check=True):
        coeffs = [np.asarray(c, dtype=complex).reshape(ctx.nblocks) for c in coeffs]
        if len(coeffs) != r + 1:
            raise ValueError(f"need {r + 1} coefficient vectors, got {len(coeffs)}")
        self.ctx = ctx
        self.r = int(r)
        self.coeffs = [c.copy() for c in coeffs]
        for c in self.coeffs:
            c.flags.writeable = False
        self.normalized = bool(normalized)
        if check:
            self._validate()

    def _validate(self):
        lead = self.t(-self.r) if self.r >= 1 else self.t(0)
        if np.min(np.abs(lead)) <= 1e-14:
            raise StratumError("leading coefficient not invertible in every block")
        if self.r == 0:
            vals = self.t(0)
            for i in range(len(vals)):
                for j in range(i + 1, len(vals)):
                    d = vals[i] - vals[j]
                    if abs(d - complex(round(d.real), 0)) <= MODZ_TOL and abs(d.imag) <= MODZ_TOL:
                        raise StratumError("depth-zero coefficients congruent mod Z")

    def t(self, j):
        """Stored coefficient vector t_j, -r <= j <= 0."""
        return self.coeffs[j + self.r]

    def series_coeff(self, j):
        """Laurent coefficient gamma_j of the log-form representative."""
        return (j / self.ctx.n) * self.t(j) if j < 0 else self.t(0).copy()

    def irregular_vector(self):
        """The deformation coordinates (t_{-r}, ..., t_{-1}) flattened."""
        if self.r == 0:
            return np.zeros(0, dtype=complex)
        return np.concatenate([self.t(j) for j in range(-self.r, 0)])

    def torus_element(self):
        return TorusElement(self.ctx, {j: self.series_coeff(j) for j in range(-self.r, 1)})

    def realize_logz(self):
        """Log-form matrix representative (shift included when normalized)."""
        m = self.torus_element().embed()
        if self.normalized:
            m = m + LaurentMatrix.constant(self.ctx.norm_shift())
        return m

    def realize(self, nu):
        """Matrix representative A with [nabla] = A nu."""
        zu_inv = (nu.unit.shift(1)).inverse()
        return self.realize_logz().times_series(zu_inv)

    def max_abs_diff(self, other):
        return max(float(np.max(np.abs(self.t(j) - other.t(j))))
                   for j in range(-self.r, 1))

    def __repr__(self):
        cs = ", ".join(f"t_{j}={self.t(j)}" for j in range(-self.r, 1))
        return f"FormalType(r={self.r}, {cs}, normalized={self.normalized})"


def normalize(a):
    """Add the normalizing shift (a no-op in numerics when e = 1)."""
    if a.normalized:
        raise ValueError("formal type is already normalized")
    return FormalType(a.ctx, a.r, a.coeffs, normalized=True, check=False)


# ---------------------------------------------------------------------------
# regularity


def _position_factors(ctx, const_mat):
    """Split a level-0 class into its per-position matrix factors."""
    out = []
    for p in range(ctx.e):
        idx = np.where(ctx.pos == p)[0]
        out.append(const_mat[np.ix_(idx, idx)])
    return out


def check_regular(s, tol=None):
    """Regularity of a stratum: semisimple graded leading term, torus-exact
    bracket kernels, and (at depth zero) eigenvalues distinct mod Z."""
    ctx, r = s.ctx, s.r
    t = _tol(tol)
    reasons = []
    details = {}
    scale = max(s.beta_rep.max_abs(), 1.0)

    if r >= 1:
        power = s.beta_rep
        for _ in range(ctx.e - 1):
            power = power @ s.beta_rep
        y = power.shift(r)
        y0 = y.certified_coeff(0)
        details["y_beta_norm"] = float(np.max(np.abs(y0)))
        if np.max(np.abs(y0)) <= t * scale ** ctx.e:
            reasons.append("nilpotent_leading_term")
        else:
            for p, f in enumerate(_position_factors(ctx, y0)):
                if f.shape[0] == 1:
                    continue
                vals, vecs = np.linalg.eig(f)
                if np.linalg.cond(vecs) > 1.0 / t:
                    reasons.append(f"leading_term_not_semisimple_pos{p}")
        # kernel condition on one period of graded pieces
        for lvl in range(ctx.e):
            mons = ctx.graded_monomials(lvl)
            cols = []
            for k in range(len(mons)):
                unit = np.zeros(len(mons))
                unit[k] = 1.0
                x = ctx.embed_graded(lvl, unit)
                cols.append(ctx.graded_coords(x.commutator(s.beta_rep), lvl - r))
            m = np.array(cols).T
            rank = int(np.sum(np.linalg.svd(m, compute_uv=False) > 1e-8 * scale))
            expect = len(mons) - ctx.nblocks
            if rank != expect:
                reasons.append(f"bracket_rank_level{lvl}")
            tvec = np.ones(ctx.nblocks, dtype=complex)
            tor = TorusElement(ctx, {lvl: tvec}).embed()
            defect = np.max(np.abs(ctx.graded_coords(tor.commutator(s.beta_rep), lvl - r)))
            if defect > 1e-8 * scale:
                reasons.append(f"torus_not_in_kernel_level{lvl}")
        y_beta = LaurentMatrix(ctx.n, {k: v for k, v in y.coeffs.items() if k <= 0},
                               (min(y.lo, 0), 0))
    else:
        y0 = s.beta_rep.certified_coeff(0)
        vals, vecs = np.linalg.eig(y0)
        details["eigenvalues"] = vals
        if np.linalg.cond(vecs) > 1.0 / t:
            reasons.append("leading_term_not_semisimple_pos0")
        for i in range(len(vals)):
            for j in range(i + 1, len(vals)):
                d = vals[i] - vals[j]
                if abs(d - round(d.real)) <= MODZ_TOL:
                    reasons.append("eigenvalues_congruent_mod_Z")
                    break
            else:
                continue
            break
        y_beta = LaurentMatrix.constant(y0)

    return StratumReport(not reasons, reasons, y_beta, details)


# ---------------------------------------------------------------------------
# graded bracket solve


def _complement_coord_matrix(ctx, level):
    basis = ctx.complement_basis(level)
    cols = [ctx.graded_coords(b, level) for b in basis]
    return basis, (np.array(cols).T if cols else np.zeros((len(ctx.graded_monomials(level)), 0)))


def solve_graded_bracket(s, y, ell=None, tol=None):
    """The unique X in the graded torus-complement at level ``ell`` with
    [beta, X] = y modulo one level deeper; inverse of the graded bracket
    isomorphism for regular strata."""
    ctx, r = s.ctx, s.r
    t = _tol(tol)
    if ell is None:
        v = valuation(ctx, y, t)
        if v == math.inf:
            return LaurentMatrix.zeros(ctx.n)
        ell = v + r
    bx, _ = _complement_coord_matrix(ctx, ell)
    _, by_mat = _complement_coord_matrix(ctx, ell - r)
    scale = max(s.beta_rep.max_abs(), 1.0)
    cols = []
    for b in bx:
        target = ctx.graded_coords(s.beta_rep.commutator(b), ell - r)
        sol = np.linalg.lstsq(by_mat, target, rcond=None)[0]
        leak = np.max(np.abs(by_mat @ sol - target)) if by_mat.size else 0.0
        if leak > 1e-8 * scale:
            raise StratumError("graded bracket leaves the torus complement "
                               "(stratum not regular)")
        cols.append(sol)
    m = np.array(cols).T
    if m.size == 0:
        return LaurentMatrix.zeros(ctx.n)
    if np.linalg.cond(m) > 1.0 / t:
        raise StratumError("graded bracket is numerically singular (stratum not regular?)")
    yc = np.linalg.lstsq(by_mat, ctx.graded_coords(y, ell - r), rcond=None)[0]
    xc = np.linalg.solve(m, yc)
    out = LaurentMatrix.zeros(ctx.n)
    for c, b in zip(xc, bx):
        out = out + c * b
    return out


# ---------------------------------------------------------------------------
# reduction to the normalized formal type


def _depth_zero_step(ctx, beta0, level, err_coords):
    """Solve [C, beta0] - level*C = -err on the constant graded piece.

    Row-major vec convention: vec(C b) = (I x b^T) vec(C), vec(b C) =
    (b x I) vec(C).  Near-singularity of the operator is exactly an
    integral eigenvalue gap of the leading term.
    """
    n = ctx.n
    eye = np.eye(n)
    op = np.kron(eye, beta0.T) - np.kron(beta0, eye) - level * np.eye(n * n)
    if np.linalg.cond(op) > 1.0 / MODZ_TOL:
        raise ResonanceError(f"integer resonance at level {level}")
    c = np.linalg.solve(op, -err_coords)
    return c


def reduce_to_formal_type(m, nu, s, depth=12, tol=None, containment_tol=None):
    """Gauge a connection matrix containing the stratum to its normalized
    formal type.

    Parameters
    ----------
    m : LaurentMatrix
        Connection matrix, [nabla] = m nu.
    nu : OneForm
        The local one-form fixing the representative normalization.
    s : Stratum
        The intended stratum; the level -r class of the input must match
        its representative's.
    depth : int
        Filtration level at which to stop: the returned gauge p satisfies
        p . (m nu) in (type + level >= depth) nu.

    Returns
    -------
    (FormalType, LaurentMatrix)
        The normalized type and the pro-unipotent gauge p (level(p - I) >= 1).
    """
    ctx, r = s.ctx, s.r
    t = _tol(tol)
    ct = 10 * t if containment_tol is None else containment_tol
    rep = check_regular(s, tol)
    if not rep.regular:
        raise StratumError(f"stratum is not regular: {rep.reasons}")

    j = m.times_series(nu.unit.shift(1))
    v = valuation(ctx, j, ct)
    if v != math.inf and v < -r:
        raise StratumError(f"connection matrix has level {v} < {-r}")
    scale = max(j.max_abs(), 1.0)

    lead = ctx.graded_coords(j, -r)
    tau, w = ctx.split_graded(-r, lead)
    if r >= 1 and np.max(np.abs(w)) > ct * scale:
        raise StratumError("leading class is not in the torus normal shape")
    beta_tau, _ = ctx.split_graded(-r, s.leading_coords())
    if r >= 1 and np.max(np.abs(tau - beta_tau)) > max(ct * scale, ct * np.max(np.abs(beta_tau))):
        raise StratumError("leading class does not match the stratum representative")
    if r == 0:
        # depth zero: leading class is the constant diagonal itself
        mons = ctx.graded_monomials(0)
        off = [c for (a, b, _mm), c in zip(mons, lead) if a != b]
        if off and np.max(np.abs(off)) > ct * scale:
            raise StratumError("depth-zero leading class is not diagonal")

    gamma = {-r: tau}
    beta0 = None
    if r == 0:
        beta0 = j.certified_coeff(0)

    shift = LaurentMatrix.constant(ctx.norm_shift())
    p = LaurentMatrix.identity(ctx.n, (0, j.hi - min(j.lo, 0)))

    for level in range(-r + 1, depth):
        acc = TorusElement(ctx, gamma).embed()
        if level > 0:
            acc = acc + shift
        coords = ctx.graded_coords(j - acc, level)
        tau, w = ctx.split_graded(level, coords)

        if r == 0:
            c = _depth_zero_step(ctx, beta0, level, coords)
            g_step = exp_matrix(LaurentMatrix.monomial(ctx.n, level,
                                                       c.reshape(ctx.n, ctx.n)))
            g_inv = exp_matrix(LaurentMatrix.monomial(ctx.n, level,
                                                      -c.reshape(ctx.n, ctx.n)))
            j = gauge_transform_logz(g_step, j, g_inv)
            p = g_step @ p
            continue

        z_arg = LaurentMatrix.zeros(ctx.n, (0, j.hi - min(j.lo, 0)))
        if level <= 0:
            gamma[level] = tau
            if level == 0:
                w = w - ctx.graded_coords(shift, 0)
        else:
            if np.max(np.abs(tau)) > 0:
                y_tor = TorusElement(ctx, {level: (ctx.e / level) * tau})
                z_arg = z_arg + y_tor.embed()
        if np.max(np.abs(w)) > 0:
            x = solve_graded_bracket(s, ctx.embed_graded(level, w), ell=level + r, tol=t)
            z_arg = z_arg + x
        if z_arg.max_abs() == 0.0:
            continue
        g_step = exp_matrix(z_arg)
        g_inv = exp_matrix(-z_arg)
        j = gauge_transform_logz(g_step, j, g_inv)
        p = g_step @ p

    coeffs = []
    for k in range(-r, 1):
        g = gamma.get(k, np.zeros(ctx.nblocks, dtype=complex))
        coeffs.append((ctx.n / k) * g if k < 0 else g)
    ft = FormalType(ctx, r, coeffs, normalized=True)
    return ft, p
