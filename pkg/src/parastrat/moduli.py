"""Global moduli points: principal parts glued into rational matrix forms,
the residue (moment map) constraint, and the normalized-type map.

The base point is infinity and every singular position is finite; gluing a
family of principal parts is then literally their partial-fraction sum, the
unique rational matrix vanishing at infinity with those poles.
"""

import math

import numpy as np

from .laurent import (DEFAULT_TOL, EXACT_PAD, LaurentMatrix, OneForm,
                      WindowError)
from .parahoric import ParahoricContext, TorusElement, valuation
from .strata import (FormalType, Stratum, StratumError, check_regular,
                     reduce_to_formal_type)


def _tol(tol):
    return DEFAULT_TOL if tol is None else tol


class ModuliError(ValueError):
    pass


# ---------------------------------------------------------------------------
# rational matrix functions vanishing at infinity


class RationalMatrixForm:
    """Sum of matrix principal parts sum_k C_k (z - xi)^{-k-1} over a finite
    pole set; exactly the rational matrix functions vanishing at infinity.
    Closed under sum, product and d/dz (products vanish to second order, so
    they are again sums of their principal parts)."""

    __slots__ = ("n", "terms")

    def __init__(self, n, terms, tol=None):
        t = _tol(tol)
        self.n = int(n)
        clean = {}
        for xi, coeffs in dict(terms).items():
            xi = complex(xi)
            arrs = [np.asarray(c, dtype=complex) for c in coeffs]
            while arrs and not np.any(arrs[-1]):
                arrs.pop()
            if not arrs:
                continue
            for c in arrs:
                if c.shape != (self.n, self.n):
                    raise ValueError("principal-part coefficient of wrong shape")
            clean[xi] = [a.copy() for a in arrs]
            for a in clean[xi]:
                a.flags.writeable = False
        poles = sorted(clean, key=lambda w: (w.real, w.imag))
        for i in range(len(poles)):
            for j in range(i + 1, len(poles)):
                if abs(poles[i] - poles[j]) <= 100 * t:
                    raise ModuliError(f"coincident poles {poles[i]} and {poles[j]}")
        self.terms = clean

    @classmethod
    def zero(cls, n):
        return cls(n, {})

    def poles(self):
        return sorted(self.terms, key=lambda w: (w.real, w.imag))

    def order_at(self, xi):
        return len(self.terms.get(complex(xi), []))

    def coeff(self, xi, k):
        """Coefficient of (z - xi)^{-k-1}."""
        cs = self.terms.get(complex(xi), [])
        return cs[k].copy() if k < len(cs) else np.zeros((self.n, self.n), dtype=complex)

    def residue_at(self, xi):
        return self.coeff(xi, 0)

    def max_abs(self):
        return max((np.max(np.abs(c)) for cs in self.terms.values() for c in cs),
                   default=0.0)

    def evaluate(self, z):
        out = np.zeros((self.n, self.n), dtype=complex)
        for xi, cs in self.terms.items():
            w = 1.0 / (z - xi)
            f = w
            for c in cs:
                out += c * f
                f *= w
        return out

    def value_skipping_pole(self, xi):
        """Constant term of the local expansion at a pole: the sum of all
        other principal parts evaluated there."""
        xi = complex(xi)
        out = np.zeros((self.n, self.n), dtype=complex)
        for xj, cs in self.terms.items():
            if xj == xi:
                continue
            w = 1.0 / (xi - xj)
            f = w
            for c in cs:
                out += c * f
                f *= w
        return out

    def __add__(self, other):
        out = {xi: list(cs) for xi, cs in self.terms.items()}
        for xi, cs in other.terms.items():
            cur = out.setdefault(xi, [])
            for k, c in enumerate(cs):
                if k < len(cur):
                    cur[k] = cur[k] + c
                else:
                    cur.append(c)
        return RationalMatrixForm(self.n, out)

    def __neg__(self):
        return RationalMatrixForm(self.n, {xi: [-c for c in cs]
                                           for xi, cs in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, c):
        c = complex(c)
        return RationalMatrixForm(self.n, {xi: [c * a for a in cs]
                                           for xi, cs in self.terms.items()})

    __rmul__ = __mul__

    def conjugate_by(self, g, g_inv=None):
        g = np.asarray(g, dtype=complex)
        gi = np.linalg.inv(g) if g_inv is None else g_inv
        return RationalMatrixForm(self.n, {xi: [g @ c @ gi for c in cs]
                                           for xi, cs in self.terms.items()})

    def d_dz(self):
        return RationalMatrixForm(self.n, {
            xi: [np.zeros((self.n, self.n))] + [-(k + 1) * c for k, c in enumerate(cs)]
            for xi, cs in self.terms.items()})

    def local_expansion(self, center, lo, hi):
        """Laurent expansion in (z - center) on the window [lo, hi]."""
        center = complex(center)
        out = {}
        for xi, cs in self.terms.items():
            if xi == center:
                for k, c in enumerate(cs):
                    if lo <= -k - 1 <= hi and np.any(c):
                        out[-k - 1] = out.get(-k - 1, 0) + c
            else:
                d = center - xi
                for k, c in enumerate(cs):
                    for m in range(max(lo, 0), hi + 1):
                        w = ((-1) ** m) * math.comb(k + m, m) * d ** (-k - 1 - m)
                        out[m] = out.get(m, 0) + w * c
        items = {k: v for k, v in out.items() if np.any(v)}
        return LaurentMatrix(self.n, items, (lo, hi))

    def __matmul__(self, other):
        if self.n != other.n:
            raise ValueError("dimension mismatch")
        out = {}
        poles = set(self.terms) | set(other.terms)
        for xi in poles:
            pa, pb = self.order_at(xi), other.order_at(xi)
            a = self.local_expansion(xi, -pa, max(pb - 1, 0))
            b = other.local_expansion(xi, -pb, max(pa - 1, 0))
            prod = a @ b
            depth = pa + pb
            coeffs = [prod.coeff(-k - 1) for k in range(depth)]
            if any(np.any(c) for c in coeffs):
                out[xi] = coeffs
        return RationalMatrixForm(self.n, out)

    def commutator(self, other):
        return self @ other - other @ self

    def __repr__(self):
        os = {xi: len(cs) for xi, cs in self.terms.items()}
        return f"RationalMatrixForm(n={self.n}, pole_orders={os})"


def glue_principal_parts(parts, n=None, tol=None):
    """Assemble local principal parts into the global rational matrix
    vanishing at infinity (the partial-fraction sum).

    ``parts`` is a list of (position, principal part) where the principal
    part is a LaurentMatrix supported in negative exponents of the local
    parameter, or a dict exponent -> matrix.
    """
    terms = {}
    for xi, part in parts:
        if isinstance(part, LaurentMatrix):
            if n is None:
                n = part.n
            items = part.coeffs
        else:
            items = {int(k): np.asarray(v, dtype=complex) for k, v in part.items()}
            if n is None and items:
                n = next(iter(items.values())).shape[0]
        coeffs = []
        for k, v in items.items():
            if k >= 0:
                if np.max(np.abs(v)) > _tol(tol):
                    raise ModuliError(f"principal part at {xi} has a z^{k} term")
                continue
            idx = -k - 1
            while len(coeffs) <= idx:
                coeffs.append(np.zeros((n, n), dtype=complex))
            coeffs[idx] = coeffs[idx] + v
        xi = complex(xi)
        if xi in terms:
            raise ModuliError(f"coincident points at {xi}")
        if coeffs:
            terms[xi] = coeffs
    if n is None:
        raise ValueError("cannot infer matrix size from empty parts")
    return RationalMatrixForm(n, terms, tol)


def decompose(rmf):
    """Principal parts of a rational form, as (position, LaurentMatrix) pairs."""
    out = []
    for xi in rmf.poles():
        cs = rmf.terms[xi]
        items = {-k - 1: c for k, c in enumerate(cs) if np.any(c)}
        out.append((xi, LaurentMatrix(rmf.n, items, (-len(cs), EXACT_PAD))))
    return out


# ---------------------------------------------------------------------------
# moduli points


class LocalPoint:
    """Framed local datum at a finite position: a framing coset representative
    and the principal-part representative of the local functional (in the
    global one-form's normalization, poles of order at most ceil(r/e)+1)."""

    def __init__(self, xi, ctx, r, framing, alpha):
        self.xi = complex(xi)
        self.ctx = ctx
        self.r = int(r)
        g = np.asarray(framing, dtype=complex)
        if g.shape != (ctx.n, ctx.n):
            raise ValueError("framing has wrong shape")
        if abs(np.linalg.det(g)) < 1e-12:
            raise ValueError("framing is not invertible")
        self.framing = g.copy()
        self.framing.flags.writeable = False
        self.alpha = alpha
        self.pole_bound = -(-self.r // ctx.e) + 1  # ceil(r/e) + 1
        if alpha.n != ctx.n:
            raise ValueError("alpha has wrong size")

    def framed_alpha(self):
        """Ad(g) alpha, the local representative seen through the framing."""
        return self.alpha.conjugate_by(self.framing)

    def log_form(self):
        """z * Ad(g) alpha, the dz/z-normalized local matrix."""
        return self.framed_alpha().shift(1)

    def induced_stratum(self, tol=None):
        """Stratum carried by the framed datum: the torus part of the leading
        graded class (any complement there is a containment defect, gated by
        the reduction's tolerance, not stratum data)."""
        j = self.log_form()
        coords = self.ctx.graded_coords(j, -self.r)
        if self.r >= 1:
            tau, _ = self.ctx.split_graded(-self.r, coords)
            lead = TorusElement(self.ctx, {-self.r: tau}).embed()
        else:
            mons = self.ctx.graded_monomials(0)
            diag = [c if a == b else 0.0 for (a, b, _m), c in zip(mons, coords)]
            lead = self.ctx.embed_graded(0, diag)
        return Stratum(self.ctx, self.r, lead, tol)

    def __repr__(self):
        return f"LocalPoint(xi={self.xi}, n={self.ctx.n}, e={self.ctx.e}, r={self.r})"


class ModuliPoint:
    """A family of framed local data with the zero-residue constraint."""

    def __init__(self, points, nu=None):
        self.points = list(points)
        self.nu = nu if nu is not None else OneForm.dz()
        if self.nu.order != 0:
            raise ModuliError("global machinery supports the plain dz form only")
        xs = [p.xi for p in self.points]
        for i in range(len(xs)):
            for j in range(i + 1, len(xs)):
                if abs(xs[i] - xs[j]) <= 1e-9:
                    raise ModuliError("singular positions must be pairwise distinct")

    @property
    def n(self):
        return self.points[0].ctx.n

    def __repr__(self):
        return f"ModuliPoint(m={len(self.points)}, n={self.n})"


def moment_residue(m):
    """Sum of the local residues; the moment-map value of the point."""
    n = m.n
    out = np.zeros((n, n), dtype=complex)
    for p in m.points:
        out += p.alpha.coeff(-1)
    return out


def assemble_connection(m, tol=None):
    """The unique global rational matrix with the given principal parts and
    no further poles (infinity included); requires the moment-map zero."""
    t = _tol(tol)
    res = moment_residue(m)
    if np.max(np.abs(res)) > t:
        raise ModuliError(f"moment-map residual {np.max(np.abs(res)):.3e} exceeds {t:.1e}"
                          " (the assembled form would have a pole at infinity)")
    return glue_principal_parts([(p.xi, p.alpha.principal_part()) for p in m.points],
                                n=m.n, tol=tol)


def local_normalized_type(p, depth=12, tol=None, containment_tol=None, with_gauge=False):
    """The unique normalized formal type of the framed local datum (the
    fiber-defining map of the moduli space)."""
    nu = OneForm.dz()
    strat = p.induced_stratum(tol)
    ft, gauge = reduce_to_formal_type(p.framed_alpha(), nu, strat, depth=depth,
                                      tol=tol, containment_tol=containment_tol)
    return (ft, gauge) if with_gauge else ft


class ValidationReport:
    """Aggregate of the point-level checks; ``passed`` iff no failures."""

    def __init__(self, failures, metrics):
        self.failures = list(failures)
        self.metrics = dict(metrics)

    @property
    def passed(self):
        return not self.failures

    def __repr__(self):
        return f"ValidationReport(passed={self.passed}, failures={self.failures})"


def validate_point(m, tol=None):
    """Check that the datum is a bona fide moduli point: distinct positions,
    per-point regular strata in normal shape, pole-order bounds, and the
    zero moment-map residue."""
    t = _tol(tol)
    failures = []
    metrics = {}
    for i, p in enumerate(m.points):
        if p.alpha.lo < -p.pole_bound:
            live = p.alpha.z_valuation(t)
            if live is not None and live < -p.pole_bound:
                failures.append((i, "pole_order_exceeds_bound", float(live)))
        try:
            strat = p.induced_stratum(t)
            rep = check_regular(strat, t)
            if not rep.regular:
                failures.append((i, "stratum_not_regular:" + ",".join(rep.reasons), None))
        except (StratumError, WindowError) as exc:
            failures.append((i, f"stratum_error:{exc}", None))
        j = p.log_form()
        v = valuation(p.ctx, j, 10 * t)
        if v != math.inf and v < -p.r:
            failures.append((i, "containment_level_too_low", float(v)))
        else:
            lead = p.ctx.graded_coords(j, -p.r)
            _, w = p.ctx.split_graded(-p.r, lead)
            wn = float(np.max(np.abs(w))) if len(w) else 0.0
            metrics[f"leading_shape_defect_{i}"] = wn
            if p.r >= 1 and wn > 10 * t * max(1.0, j.max_abs()):
                failures.append((i, "leading_class_not_torus", wn))
    res = moment_residue(m)
    mres = float(np.max(np.abs(res)))
    metrics["moment_residual"] = mres
    if mres > t:
        failures.append((None, "moment_map_nonzero", mres))
    return ValidationReport(failures, metrics)
