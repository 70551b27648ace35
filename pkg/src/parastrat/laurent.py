"""Truncated Laurent series and matrices of them.

Coefficients are complex doubles, stored sparsely by exponent.  Every value
carries a window ``(lo, hi)``: coefficients below ``lo`` are identically
zero (a hard valuation bound), coefficients in ``[lo, hi]`` are exact, and
nothing is claimed above ``hi``.  Arithmetic propagates the largest window
it can certify and refuses (raises ``WindowError``) rather than silently
assume an uncertain coefficient is zero.
"""

import numpy as np

DEFAULT_TOL = 1e-10

# Certainty margin granted to values built from explicit finite data, whose
# coefficients are exact at every order.  Wide enough that the deepest
# pipelines (gauge reduction at depth ~12 plus a handful of products) still
# end with a usable window; sparse storage makes the width free.
EXACT_PAD = 40


class WindowError(ValueError):
    """An operation needed a coefficient outside the certified window."""


class NotInvertibleError(ValueError):
    """Leading data of a series or matrix is not invertible."""


def _tol(tol):
    return DEFAULT_TOL if tol is None else tol


# ---------------------------------------------------------------------------
# scalar series


class LaurentSeries:
    """A truncated formal Laurent series sum_k c_k z^k."""

    __slots__ = ("coeffs", "lo", "hi")

    def __init__(self, coeffs, window=None):
        items = {int(k): complex(v) for k, v in dict(coeffs).items() if v != 0}
        if window is None:
            if items:
                lo = min(items)
                window = (lo, max(items) + EXACT_PAD)
            else:
                window = (0, EXACT_PAD)
        lo, hi = int(window[0]), int(window[1])
        if lo > hi:
            raise WindowError(f"empty window ({lo}, {hi})")
        for k in items:
            if k < lo or k > hi:
                raise WindowError(f"exponent {k} outside window ({lo}, {hi})")
        self.coeffs = items
        self.lo = lo
        self.hi = hi

    @classmethod
    def zero(cls, window=(0, EXACT_PAD)):
        return cls({}, window)

    @classmethod
    def one(cls):
        return cls({0: 1.0})

    @classmethod
    def monomial(cls, k, c=1.0):
        return cls({k: c}, (k, k + EXACT_PAD))

    def coeff(self, k):
        return self.coeffs.get(k, 0.0 + 0.0j)

    def max_abs(self):
        return max((abs(v) for v in self.coeffs.values()), default=0.0)

    def valuation(self, tol=None):
        """Lowest exponent with |coeff| > tol, or None for (numerically) zero."""
        t = _tol(tol)
        live = [k for k, v in self.coeffs.items() if abs(v) > t]
        return min(live) if live else None

    def __add__(self, other):
        w = (min(self.lo, other.lo), min(self.hi, other.hi))
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out.get(k, 0.0) + v
        out = {k: v for k, v in out.items() if w[0] <= k <= w[1]}
        return LaurentSeries(out, w)

    def __neg__(self):
        return LaurentSeries({k: -v for k, v in self.coeffs.items()}, (self.lo, self.hi))

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, LaurentSeries):
            w = (self.lo + other.lo, min(self.lo + other.hi, self.hi + other.lo))
            out = {}
            for i, a in self.coeffs.items():
                for j, b in other.coeffs.items():
                    k = i + j
                    if w[0] <= k <= w[1]:
                        out[k] = out.get(k, 0.0) + a * b
            return LaurentSeries(out, w)
        c = complex(other)
        return LaurentSeries({k: c * v for k, v in self.coeffs.items()}, (self.lo, self.hi))

    __rmul__ = __mul__

    def shift(self, k):
        """Multiply by z^k."""
        return LaurentSeries({i + k: v for i, v in self.coeffs.items()},
                             (self.lo + k, self.hi + k))

    def d_dz(self):
        return LaurentSeries({k - 1: k * v for k, v in self.coeffs.items() if k != 0},
                             (self.lo - 1, self.hi - 1))

    def truncate(self, lo=None, hi=None):
        lo = self.lo if lo is None else max(lo, self.lo)
        hi = self.hi if hi is None else min(hi, self.hi)
        return LaurentSeries({k: v for k, v in self.coeffs.items() if lo <= k <= hi},
                             (lo, hi))

    def inverse(self, tol=None):
        """Multiplicative inverse, certified to the window the data supports."""
        v = self.valuation(tol)
        if v is None:
            raise NotInvertibleError("cannot invert a (numerically) zero series")
        c0 = self.coeff(v)
        width = self.hi - v
        out = {-v: 1.0 / c0}
        for j in range(1, width + 1):
            s = 0.0
            for i in range(1, j + 1):
                ci = self.coeff(v + i)
                if ci != 0:
                    s += ci * out.get(-v + j - i, 0.0)
            if s != 0:
                out[-v + j] = -s / c0
        return LaurentSeries(out, (-v, self.hi - 2 * v))

    def residue(self):
        """Coefficient of z^{-1}; requires certainty there."""
        if self.hi < -1:
            raise WindowError("window excludes exponent -1")
        return self.coeff(-1)

    def __repr__(self):
        terms = " + ".join(f"({v:.6g})z^{k}" for k, v in sorted(self.coeffs.items()))
        return f"LaurentSeries({terms or '0'}; window=({self.lo},{self.hi}))"


# ---------------------------------------------------------------------------
# matrices of series


class LaurentMatrix:
    """An n x n matrix of truncated Laurent series sharing one window.

    Stored as a map exponent -> (n, n) complex array.  Values are immutable
    after construction (the arrays are marked read-only); all operations
    return fresh objects, so instances are safe to share between threads.
    """

    __slots__ = ("n", "coeffs", "lo", "hi")

    def __init__(self, n, coeffs, window=None):
        self.n = int(n)
        items = {}
        for k, arr in dict(coeffs).items():
            a = np.asarray(arr, dtype=complex)
            if a.shape != (self.n, self.n):
                raise ValueError(f"coefficient at z^{k} has shape {a.shape}, want ({n},{n})")
            if np.any(a):
                a = a.copy()
                a.flags.writeable = False
                items[int(k)] = a
        if window is None:
            if items:
                lo = min(items)
                window = (lo, max(items) + EXACT_PAD)
            else:
                window = (0, EXACT_PAD)
        lo, hi = int(window[0]), int(window[1])
        if lo > hi:
            raise WindowError(f"empty window ({lo}, {hi})")
        for k in items:
            if k < lo or k > hi:
                raise WindowError(f"exponent {k} outside window ({lo}, {hi})")
        self.coeffs = items
        self.lo = lo
        self.hi = hi

    # -- constructors

    @classmethod
    def zeros(cls, n, window=(0, EXACT_PAD)):
        return cls(n, {}, window)

    @classmethod
    def identity(cls, n, window=None):
        return cls(n, {0: np.eye(n)}, window)

    @classmethod
    def constant(cls, mat, window=None):
        mat = np.asarray(mat, dtype=complex)
        return cls(mat.shape[0], {0: mat}, window)

    @classmethod
    def monomial(cls, n, k, mat, window=None):
        return cls(n, {k: mat}, window)

    # -- access

    def coeff(self, k):
        a = self.coeffs.get(k)
        return a.copy() if a is not None else np.zeros((self.n, self.n), dtype=complex)

    def certified_coeff(self, k):
        if k > self.hi:
            raise WindowError(f"coefficient at z^{k} not certified (hi={self.hi})")
        return self.coeff(k)

    def entry(self, i, j):
        return LaurentSeries({k: a[i, j] for k, a in self.coeffs.items() if a[i, j] != 0},
                             (self.lo, self.hi))

    def exponents(self):
        return sorted(self.coeffs)

    def max_abs(self):
        return max((np.max(np.abs(a)) for a in self.coeffs.values()), default=0.0)

    def z_valuation(self, tol=None):
        t = _tol(tol)
        live = [k for k, a in self.coeffs.items() if np.max(np.abs(a)) > t]
        return min(live) if live else None

    def is_zero(self, tol=None):
        return self.max_abs() <= _tol(tol)

    # -- ring operations

    def _check_same(self, other):
        if self.n != other.n:
            raise ValueError(f"dimension mismatch: {self.n} vs {other.n}")

    def __add__(self, other):
        self._check_same(other)
        w = (min(self.lo, other.lo), min(self.hi, other.hi))
        out = {k: a for k, a in self.coeffs.items() if w[0] <= k <= w[1]}
        for k, b in other.coeffs.items():
            if w[0] <= k <= w[1]:
                out[k] = out[k] + b if k in out else b
        return LaurentMatrix(self.n, out, w)

    def __neg__(self):
        return LaurentMatrix(self.n, {k: -a for k, a in self.coeffs.items()},
                             (self.lo, self.hi))

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, LaurentSeries):
            return self.times_series(other)
        c = complex(other)
        return LaurentMatrix(self.n, {k: c * a for k, a in self.coeffs.items()},
                             (self.lo, self.hi))

    __rmul__ = __mul__

    def __matmul__(self, other):
        self._check_same(other)
        w = (self.lo + other.lo, min(self.lo + other.hi, self.hi + other.lo))
        if w[0] > w[1]:
            raise WindowError("empty result window in matrix product")
        out = {}
        for i, a in self.coeffs.items():
            for j, b in other.coeffs.items():
                k = i + j
                if w[0] <= k <= w[1]:
                    p = a @ b
                    out[k] = out[k] + p if k in out else p
        return LaurentMatrix(self.n, out, w)

    def times_series(self, s):
        w = (self.lo + s.lo, min(self.lo + s.hi, self.hi + s.lo))
        out = {}
        for i, a in self.coeffs.items():
            for j, c in s.coeffs.items():
                k = i + j
                if w[0] <= k <= w[1]:
                    p = c * a
                    out[k] = out[k] + p if k in out else p
        return LaurentMatrix(self.n, out, w)

    def shift(self, k):
        return LaurentMatrix(self.n, {i + k: a for i, a in self.coeffs.items()},
                             (self.lo + k, self.hi + k))

    def commutator(self, other):
        return self @ other - other @ self

    def conjugate_by(self, g, g_inv=None):
        """Ad(g) X = g X g^{-1} for a constant invertible matrix g."""
        g = np.asarray(g, dtype=complex)
        gi = np.linalg.inv(g) if g_inv is None else np.asarray(g_inv, dtype=complex)
        return LaurentMatrix(self.n, {k: g @ a @ gi for k, a in self.coeffs.items()},
                             (self.lo, self.hi))

    def trace(self):
        return LaurentSeries({k: np.trace(a) for k, a in self.coeffs.items()},
                             (self.lo, self.hi))

    def d_dz(self):
        return LaurentMatrix(self.n, {k - 1: k * a for k, a in self.coeffs.items() if k != 0},
                             (self.lo - 1, self.hi - 1))

    def truncate(self, lo=None, hi=None):
        lo = self.lo if lo is None else max(lo, self.lo)
        hi = self.hi if hi is None else min(hi, self.hi)
        return LaurentMatrix(self.n, {k: a for k, a in self.coeffs.items() if lo <= k <= hi},
                             (lo, hi))

    def drop_below(self, lo):
        """Discard coefficients below ``lo`` and raise the hard zero bound."""
        if lo > self.hi:
            raise WindowError("drop_below would empty the window")
        return LaurentMatrix(self.n, {k: a for k, a in self.coeffs.items() if k >= lo},
                             (max(lo, self.lo), self.hi))

    def principal_part(self):
        """Strictly negative exponents, as an exact value."""
        if self.hi < -1:
            raise WindowError("principal part not certified")
        items = {k: a for k, a in self.coeffs.items() if k < 0}
        return LaurentMatrix(self.n, items, (min(items, default=0), EXACT_PAD))

    def widen(self, hi):
        """Assert exactness up to ``hi`` (caller certifies the data is exact)."""
        return LaurentMatrix(self.n, self.coeffs, (self.lo, max(self.hi, hi)))

    def __repr__(self):
        return (f"LaurentMatrix(n={self.n}, exps={self.exponents()}, "
                f"window=({self.lo},{self.hi}))")


def max_abs_diff(a, b):
    """Largest coefficient deviation on the common window."""
    d = a - b
    return d.max_abs()


# ---------------------------------------------------------------------------
# one-forms and derivations


class OneForm:
    """A nonzero local one-form nu = u(z) dz with unit Laurent coefficient u.

    ``order`` is the valuation of u, so dz has order 0 and dz/z has order -1.
    The derivation tau_nu dual to nu (i_{tau_nu}(nu) = 1) acts as (1/u) d/dz.
    """

    __slots__ = ("unit", "order", "_unit_inv")

    def __init__(self, unit):
        if isinstance(unit, dict):
            unit = LaurentSeries(unit)
        v = unit.valuation(0.0)
        if v is None:
            raise NotInvertibleError("one-form coefficient must be a unit")
        self.unit = unit
        self.order = v
        self._unit_inv = unit.inverse()

    @classmethod
    def dz(cls):
        return cls(LaurentSeries.one())

    @classmethod
    def dz_over_z(cls):
        return cls(LaurentSeries.monomial(-1))

    def unit_inverse(self):
        return self._unit_inv

    def __repr__(self):
        return f"OneForm(order={self.order})"


def derive(a, nu):
    """Apply the derivation tau_nu = (1/u) d/dz entrywise."""
    return a.d_dz().times_series(nu.unit_inverse()) if isinstance(a, LaurentMatrix) \
        else a.d_dz() * nu.unit_inverse()


def residue_matrix(a):
    """Residue of the matrix one-form ``a * dz``: the z^{-1} coefficient."""
    if a.hi < -1:
        raise WindowError("window excludes exponent -1")
    return a.coeff(-1)


def pair(x, y, nu):
    """Residue-trace pairing Res Tr(x y nu) of two Laurent matrices."""
    t = (x @ y).trace() * nu.unit
    return t.residue()


def _invert_unit_leading(a, v):
    """Forward-substitution inverse when the lowest z-coefficient matrix is
    invertible: a = z^v (A0 + A1 z + ...) with A0 a unit."""
    n = a.n
    width = a.hi - v
    a0_inv = np.linalg.inv(a.coeff(v))
    out = {0: a0_inv}
    for k in range(1, width + 1):
        s = np.zeros((n, n), dtype=complex)
        for m in range(1, k + 1):
            am = a.coeffs.get(v + m)
            if am is not None:
                s += am @ out[k - m]
        out[k] = -a0_inv @ s
    return LaurentMatrix(n, {k - v: c for k, c in out.items()}, (-v, a.hi - 2 * v))


def invert(a, tol=None):
    """Inverse of a unit Laurent matrix.

    Fast path: forward substitution when the lowest z-coefficient matrix is
    invertible.  Otherwise Gauss-Jordan over the series field with
    valuation-based pivoting, so units whose lowest z-coefficient matrix is
    singular (block uniformizers, say) still invert.  The certified window
    comes out of the scalar ops.
    """
    n = a.n
    t = _tol(tol)
    v = a.z_valuation(t)
    if v is not None:
        lead = a.coeff(v)
        if abs(np.linalg.det(lead)) > t and np.linalg.cond(lead) < 1e8:
            return _invert_unit_leading(a, v)
    rows = [[a.entry(i, j) for j in range(n)] for i in range(n)]
    eye = [[LaurentSeries({0: 1.0} if i == j else {}, (min(a.lo, 0), a.hi - min(a.lo, 0)))
            for j in range(n)] for i in range(n)]
    for col in range(n):
        piv, piv_val, piv_mag = None, None, 0.0
        for r in range(col, n):
            v = rows[r][col].valuation(t)
            if v is None:
                continue
            mag = abs(rows[r][col].coeff(v))
            if piv_val is None or v < piv_val or (v == piv_val and mag > piv_mag):
                piv, piv_val, piv_mag = r, v, mag
        if piv is None:
            raise NotInvertibleError("matrix is not a unit: singular leading data")
        rows[col], rows[piv] = rows[piv], rows[col]
        eye[col], eye[piv] = eye[piv], eye[col]
        inv_piv = rows[col][col].inverse(t)
        rows[col] = [s * inv_piv for s in rows[col]]
        eye[col] = [s * inv_piv for s in eye[col]]
        for r in range(n):
            if r == col:
                continue
            f = rows[r][col]
            if f.max_abs() == 0.0:
                continue
            rows[r] = [rows[r][j] - f * rows[col][j] for j in range(n)]
            eye[r] = [eye[r][j] - f * eye[col][j] for j in range(n)]
    lo = min(min(s.lo for s in row) for row in eye)
    hi = min(min(s.hi for s in row) for row in eye)
    if lo > hi:
        raise WindowError("window exhausted during inversion")
    out = {}
    for i in range(n):
        for j in range(n):
            for k, v in eye[i][j].coeffs.items():
                if lo <= k <= hi:
                    out.setdefault(k, np.zeros((n, n), dtype=complex))[i, j] = v
    return LaurentMatrix(n, out, (lo, hi))


def exp_matrix(x, max_terms=120, tol=1e-18):
    """exp(x) as a truncated series; converges on the tracked window."""
    acc = LaurentMatrix.identity(x.n, (min(x.lo, 0), x.hi))
    term = LaurentMatrix.identity(x.n, (min(x.lo, 0), x.hi))
    scale = max(x.max_abs(), 1.0)
    for j in range(1, max_terms + 1):
        term = (term @ x) * (1.0 / j)
        if term.max_abs() <= tol * scale:
            break
        acc = acc + term
    else:
        raise ArithmeticError("matrix exponential did not converge on the window")
    return acc


def gauge_transform(g, k, nu, g_inv=None):
    """Gauge action of g on a connection matrix k (where [nabla] = k nu):

        g . k = Ad(g) k - (tau_nu g) g^{-1}.
    """
    gi = invert(g) if g_inv is None else g_inv
    return g @ k @ gi - derive(g, nu) @ gi


def gauge_transform_logz(g, j, g_inv=None):
    """Gauge action in the dz/z-normalized picture: Ad(g) j - z (d_z g) g^{-1}."""
    gi = invert(g) if g_inv is None else g_inv
    return g @ j @ gi - g.d_dz().shift(1) @ gi
