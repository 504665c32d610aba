"""Scalar coefficient functions of one complex frequency and real parameters.

Every admissible function is a finite sum of products of the atoms

    c,  s^q,  exp(a*s),  mu[i]^q,  sin(c*mu[i]),  cos(c*mu[i]),

which covers polynomial, delay-exponential and parameter-affine or
trigonometric coefficients of matrix pencils.  Expressions are kept in a
canonical sum-of-products form, so two structurally equal functions compare
equal, and differentiation with respect to the frequency or any parameter
stays inside the class and is exact.

A small textual DSL mirrors the atom set and is used in system manifests::

    expr   := term (('+'|'-') term)*
    term   := factor ('*' factor)*
    factor := NUMBER | 's' ['^' INT] | 'mu[' INT ']' ['^' INT]
            | 'exp(' NUMBER '*s)'
            | 'sin(' NUMBER '*mu[' INT '])' | 'cos(' NUMBER '*mu[' INT '])'

Whitespace is ignored; parse errors report the byte offset.
"""

from __future__ import annotations

import cmath
import math
import re

__all__ = ["ScalarFn", "DSLParseError", "parse_scalar", "ZERO", "ONE", "S"]


# Atoms are plain tuples:
#   ('s', q)        frequency monomial s^q, q >= 1
#   ('exp', re, im) exponential exp(a*s) with a = re + 1j*im != 0
#   ('mu', i, q)    parameter monomial mu_i^q, q >= 1
#   ('sin', i, c)   sin(c*mu_i), c != 0
#   ('cos', i, c)   cos(c*mu_i), c != 0
_RANK = {"s": 0, "exp": 1, "mu": 2, "sin": 3, "cos": 4}


def _atom_key(atom):
    return (_RANK[atom[0]],) + tuple(float(x) for x in atom[1:])


def _atom_eval(atom, s, mu):
    kind = atom[0]
    if kind == "s":
        return s ** atom[1]
    if kind == "exp":
        return cmath.exp(complex(atom[1], atom[2]) * s)
    if kind == "mu":
        return mu[atom[1]] ** atom[2]
    if kind == "sin":
        return math.sin(atom[2] * mu[atom[1]])
    return math.cos(atom[2] * mu[atom[1]])


def _canonical_product(atoms):
    """Merge mergeable atoms of one product and return a sorted tuple."""
    s_power = 0
    exp_rate = 0.0 + 0.0j
    mu_powers = {}
    trig = []
    for atom in atoms:
        kind = atom[0]
        if kind == "s":
            s_power += atom[1]
        elif kind == "exp":
            exp_rate += complex(atom[1], atom[2])
        elif kind == "mu":
            mu_powers[atom[1]] = mu_powers.get(atom[1], 0) + atom[2]
        else:
            trig.append(atom)
    merged = []
    if s_power:
        merged.append(("s", s_power))
    if exp_rate != 0:
        merged.append(("exp", exp_rate.real, exp_rate.imag))
    merged.extend(("mu", i, q) for i, q in mu_powers.items() if q)
    merged.extend(trig)
    return tuple(sorted(merged, key=_atom_key))


def _merge_terms(term_items):
    """Collect (atoms, coeff) pairs into a canonical, zero-free term tuple."""
    acc = {}
    for atoms, coeff in term_items:
        acc[atoms] = acc.get(atoms, 0.0 + 0.0j) + complex(coeff)
    items = [(a, c) for a, c in acc.items() if c != 0]
    items.sort(key=lambda item: tuple(_atom_key(a) for a in item[0]))
    return tuple(items)


class ScalarFn:
    """A canonical sum of products of frequency/parameter atoms.

    Instances are immutable and hashable; arithmetic (``+``, ``-``, ``*``,
    scalar multiples) always returns canonicalized results, so equality of
    two canonical forms implies pointwise equality.
    """

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms=()):
        self._terms = _merge_terms(terms)
        self._hash = hash(self._terms)

    # -- constructors ----------------------------------------------------

    @classmethod
    def const(cls, c):
        return cls([((), complex(c))])

    @classmethod
    def s_power(cls, q=1):
        if q < 0 or int(q) != q:
            raise ValueError(f"frequency power must be a non-negative integer, got {q}")
        if q == 0:
            return cls.const(1.0)
        return cls([((("s", int(q)),), 1.0)])

    @classmethod
    def exponential(cls, a):
        a = complex(a)
        if a == 0:
            return cls.const(1.0)
        return cls([((("exp", a.real, a.imag),), 1.0)])

    @classmethod
    def mu_power(cls, index, q=1):
        if index < 0:
            raise ValueError(f"parameter index must be non-negative, got {index}")
        if q < 0 or int(q) != q:
            raise ValueError(f"parameter power must be a non-negative integer, got {q}")
        if q == 0:
            return cls.const(1.0)
        return cls([((("mu", int(index), int(q)),), 1.0)])

    @classmethod
    def mu_sin(cls, c, index):
        if index < 0:
            raise ValueError(f"parameter index must be non-negative, got {index}")
        c = float(c)
        if c == 0:
            return cls.const(0.0)
        return cls([((("sin", int(index), c),), 1.0)])

    @classmethod
    def mu_cos(cls, c, index):
        if index < 0:
            raise ValueError(f"parameter index must be non-negative, got {index}")
        c = float(c)
        if c == 0:
            return cls.const(1.0)
        return cls([((("cos", int(index), c),), 1.0)])

    # -- basic queries ----------------------------------------------------

    @property
    def terms(self):
        return self._terms

    @property
    def param_dim(self):
        """Smallest parameter vector length this function can be evaluated at."""
        dim = 0
        for atoms, _ in self._terms:
            for atom in atoms:
                if atom[0] in ("mu", "sin", "cos"):
                    dim = max(dim, atom[1] + 1)
        return dim

    @property
    def depends_on_s(self):
        return any(atom[0] in ("s", "exp") for atoms, _ in self._terms for atom in atoms)

    @property
    def is_zero(self):
        return not self._terms

    def constant_value(self):
        """Return the constant value if the function has no atoms, else None."""
        if not self._terms:
            return 0.0 + 0.0j
        if len(self._terms) == 1 and self._terms[0][0] == ():
            return self._terms[0][1]
        return None

    # -- evaluation and differentiation ------------------------------------

    def eval(self, s, mu=()):
        """Evaluate at complex frequency `s` and real parameter vector `mu`."""
        if len(mu) < self.param_dim:
            raise ValueError(
                f"parameter vector of length {len(mu)} given, "
                f"function needs at least {self.param_dim}"
            )
        s = complex(s)
        total = 0.0 + 0.0j
        for atoms, coeff in self._terms:
            value = coeff
            for atom in atoms:
                value *= _atom_eval(atom, s, mu)
            total += value
        return total

    def _diff_s_once(self):
        out = []
        for atoms, coeff in self._terms:
            for pos, atom in enumerate(atoms):
                rest = atoms[:pos] + atoms[pos + 1:]
                if atom[0] == "s":
                    q = atom[1]
                    new = rest if q == 1 else rest + (("s", q - 1),)
                    out.append((_canonical_product(new), coeff * q))
                elif atom[0] == "exp":
                    out.append((atoms, coeff * complex(atom[1], atom[2])))
        return ScalarFn(out)

    def diff_s(self, order=1):
        """Exact `order`-fold derivative in the frequency variable."""
        if order < 0 or int(order) != order:
            raise ValueError(f"derivative order must be a non-negative integer, got {order}")
        fn = self
        for _ in range(int(order)):
            fn = fn._diff_s_once()
        return fn

    def diff_mu(self, index):
        """Exact partial derivative with respect to parameter `index` (0-based)."""
        if index < 0:
            raise ValueError(f"parameter index must be non-negative, got {index}")
        out = []
        for atoms, coeff in self._terms:
            for pos, atom in enumerate(atoms):
                if atom[0] not in ("mu", "sin", "cos") or atom[1] != index:
                    continue
                # Leibniz over identical atoms: differentiate the first
                # occurrence only, weighted by its multiplicity.
                if atoms.index(atom) != pos:
                    continue
                mult = sum(1 for a in atoms if a == atom)
                rest = atoms[:pos] + atoms[pos + 1:]
                if atom[0] == "mu":
                    q = atom[2]
                    new = rest if q == 1 else rest + (("mu", index, q - 1),)
                    out.append((_canonical_product(new), coeff * q * mult))
                elif atom[0] == "sin":
                    c = atom[2]
                    out.append((_canonical_product(rest + (("cos", index, c),)), coeff * c * mult))
                else:
                    c = atom[2]
                    out.append((_canonical_product(rest + (("sin", index, c),)), -coeff * c * mult))
        return ScalarFn(out)

    def frequency_parts(self):
        """Split into ``[(signature, mu_factor)]`` with purely-parametric factors.

        Signatures are ``('poly', q)`` for an ``s^q`` dependence and
        ``('exp', a)`` for ``exp(a*s)``.  Raises ValueError for terms mixing
        powers of s with exponentials, which have no time-domain realization
        here.
        """
        groups = {}
        for atoms, coeff in self._terms:
            s_atoms = [a for a in atoms if a[0] in ("s", "exp")]
            mu_atoms = tuple(a for a in atoms if a[0] not in ("s", "exp"))
            if not s_atoms:
                sig = ("poly", 0)
            elif len(s_atoms) == 1 and s_atoms[0][0] == "s":
                sig = ("poly", s_atoms[0][1])
            elif len(s_atoms) == 1:
                sig = ("exp", complex(s_atoms[0][1], s_atoms[0][2]))
            else:
                raise ValueError(
                    "coefficient mixes polynomial and exponential frequency factors"
                )
            groups.setdefault(sig, []).append((mu_atoms, coeff))
        return [(sig, ScalarFn(items)) for sig, items in sorted(groups.items(), key=lambda g: (g[0][0], repr(g[0][1])))]

    # -- arithmetic ---------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, ScalarFn):
            return other
        if isinstance(other, (int, float, complex)):
            return ScalarFn.const(other)
        return None

    def __add__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return ScalarFn(self._terms + other._terms)

    __radd__ = __add__

    def __neg__(self):
        return ScalarFn([(a, -c) for a, c in self._terms])

    def __sub__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return other + (-self)

    def __mul__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        out = []
        for a1, c1 in self._terms:
            for a2, c2 in other._terms:
                out.append((_canonical_product(a1 + a2), c1 * c2))
        return ScalarFn(out)

    __rmul__ = __mul__

    def __eq__(self, other):
        return isinstance(other, ScalarFn) and self._terms == other._terms

    def __hash__(self):
        return self._hash

    # -- formatting ----------------------------------------------------------

    def to_dsl(self):
        """Serialize to the manifest DSL; requires real coefficients."""
        if not self._terms:
            return "0"
        parts = []
        for atoms, coeff in self._terms:
            if coeff.imag != 0:
                raise ValueError("DSL serialization supports real coefficients only")
            factors = []
            for atom in atoms:
                if atom[0] == "s":
                    factors.append("s" if atom[1] == 1 else f"s^{atom[1]}")
                elif atom[0] == "exp":
                    if atom[2] != 0:
                        raise ValueError("DSL serialization supports real exponent rates only")
                    factors.append(f"exp({atom[1]!r}*s)")
                elif atom[0] == "mu":
                    base = f"mu[{atom[1]}]"
                    factors.append(base if atom[2] == 1 else f"{base}^{atom[2]}")
                else:
                    factors.append(f"{atom[0]}({atom[2]!r}*mu[{atom[1]}])")
            c = coeff.real
            if not factors:
                body = repr(c)
            elif c == 1:
                body = "*".join(factors)
            else:
                body = "*".join([repr(c)] + factors)
            parts.append(body)
        text = parts[0]
        for body in parts[1:]:
            if body.startswith("-"):
                text += " - " + body[1:]
            else:
                text += " + " + body
        return text

    def __repr__(self):
        return f"ScalarFn({self.to_dsl_safe()})"

    def to_dsl_safe(self):
        try:
            return self.to_dsl()
        except ValueError:
            return f"<{len(self._terms)} terms>"


ZERO = ScalarFn()
ONE = ScalarFn.const(1.0)
S = ScalarFn.s_power(1)


class DSLParseError(ValueError):
    """Parse failure with the byte offset of the offending character."""

    def __init__(self, message, pos):
        super().__init__(f"{message} (at byte {pos})")
        self.pos = pos


_NUMBER = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")
_INT = re.compile(r"\d+")


class _Parser:
    def __init__(self, text):
        self.text = text
        self.pos = 0

    def _skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def _expect(self, literal):
        self._skip_ws()
        if not self.text.startswith(literal, self.pos):
            raise DSLParseError(f"expected {literal!r}", self.pos)
        self.pos += len(literal)

    def _peek(self, literal):
        self._skip_ws()
        return self.text.startswith(literal, self.pos)

    def _number(self):
        self._skip_ws()
        m = _NUMBER.match(self.text, self.pos)
        if not m:
            raise DSLParseError("expected a number", self.pos)
        self.pos = m.end()
        return float(m.group())

    def _int(self):
        self._skip_ws()
        m = _INT.match(self.text, self.pos)
        if not m:
            raise DSLParseError("expected an integer", self.pos)
        self.pos = m.end()
        return int(m.group())

    def _mu_ref(self):
        self._expect("mu")
        self._expect("[")
        index = self._int()
        self._expect("]")
        return index

    def parse(self):
        fn = self._term()
        while True:
            self._skip_ws()
            if self._peek("+"):
                self._expect("+")
                fn = fn + self._term()
            elif self._peek("-"):
                self._expect("-")
                fn = fn - self._term()
            else:
                break
        self._skip_ws()
        if self.pos != len(self.text):
            raise DSLParseError("unexpected trailing input", self.pos)
        return fn

    def _term(self):
        fn = self._factor()
        while self._peek("*"):
            self._expect("*")
            fn = fn * self._factor()
        return fn

    def _factor(self):
        self._skip_ws()
        if self.pos >= len(self.text):
            raise DSLParseError("unexpected end of input", self.pos)
        if self._peek("s") and not self._peek("sin"):
            self._expect("s")
            power = 1
            if self._peek("^"):
                self._expect("^")
                power = self._int()
            return ScalarFn.s_power(power)
        if self._peek("mu"):
            index = self._mu_ref()
            power = 1
            if self._peek("^"):
                self._expect("^")
                power = self._int()
            return ScalarFn.mu_power(index, power)
        if self._peek("exp"):
            self._expect("exp")
            self._expect("(")
            rate = self._number()
            self._expect("*")
            self._expect("s")
            self._expect(")")
            return ScalarFn.exponential(rate)
        if self._peek("sin") or self._peek("cos"):
            kind = "sin" if self._peek("sin") else "cos"
            self._expect(kind)
            self._expect("(")
            c = self._number()
            self._expect("*")
            index = self._mu_ref()
            self._expect(")")
            make = ScalarFn.mu_sin if kind == "sin" else ScalarFn.mu_cos
            return make(c, index)
        return ScalarFn.const(self._number())


def parse_scalar(text):
    """Parse a coefficient expression in the manifest DSL into a ScalarFn."""
    return _Parser(text).parse()
