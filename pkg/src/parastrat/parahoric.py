"""The standard uniform parahoric datum and its graded structure.

Everything is expressed in the fixed block basis: indices 0..n-1 split into
n/e consecutive blocks of size e, each block carrying the complete standard
lattice chain.  Membership in the congruence filtration is a per-entry
exponent threshold: the monomial z^m E_{ab} sits at filtration level

    level = e*m + pos(b) - pos(a),      pos(i) = i mod e,

and an element lies in level >= r iff all its monomials do.
"""

import math

import numpy as np

from .laurent import (DEFAULT_TOL, EXACT_PAD, LaurentMatrix, LaurentSeries,
                      OneForm, WindowError, derive, exp_matrix, pair)


def _tol(tol):
    return DEFAULT_TOL if tol is None else tol


class ParahoricContext:
    """Rank n, period e | n, and the derived combinatorial machinery.

    Fixes the block uniformizer (block diagonal, with e-th power z times the
    identity), the constant diagonal normalizing shift with per-block entries
    (e-1-2j)/(2e), and the standard chain's entry thresholds.
    """

    def __init__(self, n, e):
        n, e = int(n), int(e)
        if n < 1 or e < 1 or n % e != 0:
            raise ValueError(f"period {e} must divide rank {n}")
        self.n = n
        self.e = e
        self.nblocks = n // e
        self.pos = np.arange(n) % e
        self.block = np.arange(n) // e
        # threshold[a, b] = pos(b) - pos(a)
        self.threshold = self.pos[None, :] - self.pos[:, None]
        self.chain_dims = tuple(n // e for _ in range(e))

    # -- fixed matrices

    def uniformizer_power(self, k=1):
        """k-th power of the block uniformizer, as an exact Laurent matrix."""
        n, e = self.n, self.e
        q, s = divmod(k, e)
        lo = q if s == 0 else q  # lowest z-exponent appearing
        out = {}
        for a in range(n):
            for b in range(n):
                if self.block[a] != self.block[b]:
                    continue
                d = self.pos[b] - self.pos[a]
                if d == s:
                    out.setdefault(q, np.zeros((n, n), dtype=complex))[a, b] = 1.0
                elif s > 0 and d == s - e:
                    out.setdefault(q + 1, np.zeros((n, n), dtype=complex))[a, b] = 1.0
        return LaurentMatrix(n, out, (lo, lo + EXACT_PAD))

    def uniformizer(self):
        return self.uniformizer_power(1)

    def norm_shift(self):
        """Constant diagonal matrix whose bracket with the uniformizer realizes
        the grading derivation; added to a formal type when normalizing."""
        d = (self.e - 1 - 2 * self.pos) / (2.0 * self.e)
        return np.diag(d.astype(complex))

    def unipotent_mask(self):
        """Entries of the constant unipotent radical (strict threshold)."""
        return self.threshold >= 1

    # -- graded pieces

    def monomial_level(self, a, b, m):
        return self.e * m + self.threshold[a, b]

    def graded_monomials(self, level):
        """Monomials (a, b, m) spanning the graded piece at ``level``."""
        out = []
        for a in range(self.n):
            for b in range(self.n):
                d = level - self.threshold[a, b]
                if d % self.e == 0:
                    out.append((a, b, d // self.e))
        return out

    def graded_coords(self, x, level, tol=None):
        """Coefficient vector of x's class in the graded piece at ``level``."""
        mons = self.graded_monomials(level)
        v = np.zeros(len(mons), dtype=complex)
        for idx, (a, b, m) in enumerate(mons):
            if m > x.hi:
                raise WindowError(f"graded class at level {level} needs z^{m}, hi={x.hi}")
            arr = x.coeffs.get(m)
            if arr is not None:
                v[idx] = arr[a, b]
        return v

    def embed_graded(self, level, coords):
        """Exact Laurent matrix representing graded coordinates at ``level``."""
        mons = self.graded_monomials(level)
        out = {}
        for (a, b, m), c in zip(mons, coords):
            if c != 0:
                out.setdefault(m, np.zeros((self.n, self.n), dtype=complex))[a, b] = c
        lo = min(out, default=0)
        return LaurentMatrix(self.n, out, (lo, lo + EXACT_PAD))

    def split_graded(self, level, coords):
        """Split graded coordinates into (per-block torus averages, complement).

        In the block basis the torus projection of a graded class is the
        average of the e in-block monomial coefficients of each diagonal
        block; the complement is what is left after subtracting it.
        """
        mons = self.graded_monomials(level)
        tau = np.zeros(self.nblocks, dtype=complex)
        for (a, b, m), c in zip(mons, coords):
            if self.block[a] == self.block[b]:
                tau[self.block[a]] += c / self.e
        w = np.array(coords, dtype=complex)
        for idx, (a, b, m) in enumerate(mons):
            if self.block[a] == self.block[b]:
                w[idx] -= tau[self.block[a]]
        return tau, w

    def complement_basis(self, level):
        """Basis of the kernel of the graded torus projection at ``level``.

        Cross-block monomials are kernel vectors outright; within each
        diagonal block the zero-average combinations m_j - m_0 complete the
        basis.  Deterministic, dimension n^2/e - n/e.
        """
        mons = self.graded_monomials(level)
        vecs = []
        first_in_block = {}
        for idx, (a, b, m) in enumerate(mons):
            if self.block[a] != self.block[b]:
                v = np.zeros(len(mons), dtype=complex)
                v[idx] = 1.0
                vecs.append(v)
            else:
                blk = self.block[a]
                if blk not in first_in_block:
                    first_in_block[blk] = idx
                else:
                    v = np.zeros(len(mons), dtype=complex)
                    v[idx] = 1.0
                    v[first_in_block[blk]] = -1.0
                    vecs.append(v)
        return [self.embed_graded(level, v) for v in vecs]

    def __repr__(self):
        return f"ParahoricContext(n={self.n}, e={self.e})"


# ---------------------------------------------------------------------------
# torus elements


class TorusElement:
    """Element of the standard maximal torus algebra: per block a Laurent
    series in the block uniformizer, stored as exponent -> block-coefficient
    vector.  The window is in uniformizer exponents."""

    __slots__ = ("ctx", "coeffs", "lo", "hi")

    def __init__(self, ctx, coeffs, window=None):
        self.ctx = ctx
        items = {}
        for i, v in dict(coeffs).items():
            vec = np.asarray(v, dtype=complex).reshape(ctx.nblocks)
            if np.any(vec):
                vec = vec.copy()
                vec.flags.writeable = False
                items[int(i)] = vec
        if window is None:
            if items:
                lo = min(items)
                window = (lo, max(items) + EXACT_PAD)
            else:
                window = (0, EXACT_PAD)
        self.coeffs = items
        self.lo, self.hi = int(window[0]), int(window[1])
        if self.lo > self.hi:
            raise WindowError("empty torus window")

    @classmethod
    def zero(cls, ctx, window=(0, EXACT_PAD)):
        return cls(ctx, {}, window)

    @classmethod
    def block_scalar(cls, ctx, vec):
        """Element of the constant-idempotent span (the i = 0 slot)."""
        return cls(ctx, {0: vec})

    def coeff(self, i):
        v = self.coeffs.get(i)
        return v.copy() if v is not None else np.zeros(self.ctx.nblocks, dtype=complex)

    def max_abs(self):
        return max((np.max(np.abs(v)) for v in self.coeffs.values()), default=0.0)

    def __add__(self, other):
        w = (min(self.lo, other.lo), min(self.hi, other.hi))
        out = {i: v for i, v in self.coeffs.items() if w[0] <= i <= w[1]}
        for i, v in other.coeffs.items():
            if w[0] <= i <= w[1]:
                out[i] = out[i] + v if i in out else v
        return TorusElement(self.ctx, out, w)

    def __neg__(self):
        return TorusElement(self.ctx, {i: -v for i, v in self.coeffs.items()},
                            (self.lo, self.hi))

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, c):
        c = complex(c)
        return TorusElement(self.ctx, {i: c * v for i, v in self.coeffs.items()},
                            (self.lo, self.hi))

    __rmul__ = __mul__

    def embed(self):
        """Realize as a Laurent matrix (block-diagonal in the fixed basis)."""
        ctx = self.ctx
        n, e = ctx.n, ctx.e
        out = {}
        for i, vec in self.coeffs.items():
            q, s = divmod(i, e)
            for a in range(n):
                for b in range(n):
                    if ctx.block[a] != ctx.block[b]:
                        continue
                    d = ctx.pos[b] - ctx.pos[a]
                    c = vec[ctx.block[a]]
                    if c == 0:
                        continue
                    if d == s:
                        out.setdefault(q, np.zeros((n, n), dtype=complex))[a, b] += c
                    elif s > 0 and d == s - e:
                        out.setdefault(q + 1, np.zeros((n, n), dtype=complex))[a, b] += c
        zlo = math.floor(self.lo / e)
        zhi = math.floor((self.hi - (e - 1)) / e) if e > 1 else self.hi
        if zhi < zlo:
            raise WindowError("torus window too narrow to embed")
        return LaurentMatrix(n, out, (zlo, zhi))

    def __repr__(self):
        return f"TorusElement(exps={sorted(self.coeffs)}, window=({self.lo},{self.hi}))"


def torus_basis_element(ctx, blk, i):
    """The idempotent of block ``blk`` times the i-th uniformizer power."""
    v = np.zeros(ctx.nblocks, dtype=complex)
    v[blk] = 1.0
    return TorusElement(ctx, {i: v})


# ---------------------------------------------------------------------------
# operations


def valuation(ctx, x, tol=None):
    """Largest filtration level r with x at level >= r; +inf for zero."""
    t = _tol(tol)
    best = None
    for m, arr in x.coeffs.items():
        live = np.abs(arr) > t
        if not live.any():
            continue
        lv = ctx.e * m + np.min(ctx.threshold[live])
        best = lv if best is None else min(best, lv)
    if best is None:
        return math.inf
    if best > ctx.e * x.hi + 1:
        raise WindowError("window too small to certify the valuation")
    return int(best)


def in_level(ctx, x, r, tol=None):
    v = valuation(ctx, x, tol)
    return v == math.inf or v >= r


def project_to_torus(ctx, x):
    """Pairing-orthogonal projection onto the torus algebra.

    The fixed torus basis is orthogonal for the order -1 residue-trace
    pairing (Gram matrix e times the identity), so the linear solve for the
    characterizing property <y, x> = <y, pi(x)> collapses to the explicit
    coefficient extraction below: the block-average of the in-block monomial
    coefficients at each filtration level.
    """
    e = ctx.e
    wlo = e * x.lo - (e - 1)
    whi = e * x.hi - (e - 1)
    out = {}
    for m, arr in x.coeffs.items():
        for a in range(ctx.n):
            for b in range(ctx.n):
                if ctx.block[a] != ctx.block[b] or arr[a, b] == 0:
                    continue
                i = e * m + ctx.threshold[a, b]
                if wlo <= i <= whi:
                    vec = out.setdefault(i, np.zeros(ctx.nblocks, dtype=complex))
                    vec[ctx.block[a]] += arr[a, b] / e
    return TorusElement(ctx, out, (wlo, whi))


def grading_derivation(ctx, t):
    """Scale the i-th uniformizer coefficient by i/e (per block)."""
    return TorusElement(ctx, {i: (i / ctx.e) * v for i, v in t.coeffs.items() if i != 0},
                        (t.lo, t.hi))


def random_graded_element(ctx, level, rng, depth=4):
    """Random element of filtration level >= ``level`` (exact data)."""
    acc = None
    for lv in range(level, level + depth):
        mons = ctx.graded_monomials(lv)
        coords = rng.standard_normal(len(mons)) + 1j * rng.standard_normal(len(mons))
        x = ctx.embed_graded(lv, coords)
        acc = x if acc is None else acc + x
    return acc


def random_unit_gauge(ctx, rng, depth=4, scale=0.3):
    """Random element of the pro-unipotent group: exp of a level >= 1 element."""
    z = random_graded_element(ctx, 1, rng, depth) * scale
    return exp_matrix(z)


def canonical_framing(ctx, g, tol=None):
    """Canonical representative of the left unipotent-radical coset of g.

    A row of position q may absorb arbitrary combinations of rows of
    strictly larger position, so the coset is fixed by each row's class
    modulo the span of the higher-position rows.  Working down the position
    groups, every row is reduced against an echelon basis of that span
    (zeroing its entries at the basis pivot columns), which pins a unique
    representative.
    """
    t = _tol(tol)
    g = np.array(g, dtype=complex)
    scale = max(np.max(np.abs(g)), 1.0)
    echelon = []  # (pivot column, vector), pivot columns distinct

    def reduce_row(v):
        for piv, w in echelon:
            c = v[piv] / w[piv]
            if c != 0:
                v = v - c * w
        return v

    for q in sorted(set(ctx.pos.tolist()), reverse=True):
        rows = [r for r in range(ctx.n) if ctx.pos[r] == q]
        for r in rows:
            g[r, :] = reduce_row(g[r, :])
        for r in rows:
            # the internal spanning basis may combine same-group rows freely
            v = reduce_row(g[r, :].copy())
            live = np.where(np.abs(v) > t * scale)[0]
            if len(live):
                echelon.append((int(live[0]), v))
                echelon.sort(key=lambda pw: pw[0])
    return g


def same_framing_coset(ctx, g1, g2, tol=None):
    """Whether g1 and g2 represent the same unipotent-radical coset."""
    t = _tol(tol)
    d = np.asarray(g1, dtype=complex) @ np.linalg.inv(np.asarray(g2, dtype=complex))
    off = d - np.eye(ctx.n)
    return bool(np.all(np.abs(off[~ctx.unipotent_mask()]) <= t * max(1.0, np.max(np.abs(d)))))
