"""
Total functions N -> N with exact (Python int) evaluation.

A :class:`Counterfunction` is either a closed form (constant, identity,
affine, polynomial), a table with a default tail, an arbitrary callable, or
the shifted functional

    g_hat(n) = max{T, n} - n + g(max{T, n})

that appears whenever a metastability bound is transported along a rate of
convergence.  Iterating ``g_tilde(n) = n + g(n)`` has closed forms for the
constant and affine classes, which is what keeps astronomically long
iterations exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

DEFAULT_BUDGET = 1_000_000
MAX_BITS = 1 << 20


class IterationBudget(RuntimeError):
    """An iteration count exceeded the configured budget; ``count`` is kept symbolically."""

    def __init__(self, what: str, count: int, budget: int):
        super().__init__(f"{what}: {count} applications exceed the budget of {budget}")
        self.count = count
        self.budget = budget


def _nat(n) -> int:
    if isinstance(n, bool) or int(n) != n or n < 0:
        raise ValueError(f"expected a natural number, got {n!r}")
    return int(n)


@dataclass(frozen=True, eq=False)
class Counterfunction:
    kind: str
    data: tuple = ()
    monotone: bool = True
    name: str | None = None
    fn: Callable[[int], int] | None = None

    # -- constructors ------------------------------------------------------

    @classmethod
    def constant(cls, L: int) -> "Counterfunction":
        return cls("constant", (_nat(L),))

    @classmethod
    def identity(cls) -> "Counterfunction":
        return cls("affine", (1, 0), name="identity")

    @classmethod
    def affine(cls, a: int, b: int = 0) -> "Counterfunction":
        return cls("affine", (_nat(a), _nat(b)))

    @classmethod
    def polynomial(cls, coeffs) -> "Counterfunction":
        """``sum_i coeffs[i] * n**i`` with natural coefficients."""
        cs = tuple(_nat(c) for c in coeffs)
        while len(cs) > 1 and cs[-1] == 0:
            cs = cs[:-1]
        return cls("polynomial", cs or (0,))

    @classmethod
    def succ_power(cls, exponent: int, add: int = 0, scale: int = 1) -> "Counterfunction":
        """``scale * (n + 1)**exponent + add`` as a polynomial."""
        cs = [scale * math.comb(exponent, i) for i in range(exponent + 1)]
        cs[0] += add
        return cls.polynomial(cs)

    @classmethod
    def table(cls, values, tail: "Counterfunction | int" = 0) -> "Counterfunction":
        vals = tuple(_nat(v) for v in values)
        tail_cf = tail if isinstance(tail, Counterfunction) else cls.constant(tail)
        mono = all(a <= b for a, b in zip(vals, vals[1:])) and tail_cf.monotone and (
            not vals or vals[-1] <= tail_cf(len(vals)))
        return cls("table", (vals, tail_cf), monotone=mono)

    @classmethod
    def from_callable(cls, fn: Callable[[int], int], monotone: bool = False,
                      name: str | None = None) -> "Counterfunction":
        return cls("callable", (), monotone=monotone, name=name or getattr(fn, "__name__", "f"), fn=fn)

    @classmethod
    def shifted(cls, g: "Counterfunction", threshold: int) -> "Counterfunction":
        """``n -> max{T, n} - n + g(max{T, n})``."""
        return cls("shifted", (g, _nat(threshold)), monotone=False)

    # -- evaluation --------------------------------------------------------

    def __call__(self, n) -> int:
        n = _nat(n)
        k = self.kind
        if k == "constant":
            return self.data[0]
        if k == "affine":
            a, b = self.data
            return a * n + b
        if k == "polynomial":
            acc = 0
            for c in reversed(self.data):
                acc = acc * n + c
            return acc
        if k == "table":
            vals, tail = self.data
            return vals[n] if n < len(vals) else tail(n)
        if k == "shifted":
            g, t = self.data
            m = max(t, n)
            return m - n + g(m)
        out = self.fn(n)
        return _nat(out)

    def tilde(self, n) -> int:
        """``n + g(n)``."""
        return _nat(n) + self(n)

    def describe(self) -> str:
        k = self.kind
        if self.name:
            return self.name
        if k == "constant":
            return str(self.data[0])
        if k == "affine":
            return "affine:%d:%d" % self.data
        if k == "polynomial":
            return "poly:" + ",".join(map(str, self.data))
        if k == "table":
            vals, tail = self.data
            return "table:" + ",".join(map(str, vals)) + "|" + tail.describe()
        if k == "shifted":
            g, t = self.data
            return f"shifted({g.describe()},{t})"
        return "callable"

    def __repr__(self):
        return f"Counterfunction({self.describe()})"

    @property
    def constant_value(self) -> int | None:
        if self.kind == "constant":
            return self.data[0]
        if self.kind == "polynomial" and len(self.data) == 1:
            return self.data[0]
        if self.kind == "affine" and self.data[0] == 0:
            return self.data[1]
        return None


def iterate_tilde(g: Counterfunction, start: int, count: int, budget: int = DEFAULT_BUDGET) -> int:
    """``g_tilde^(count)(start)`` where ``g_tilde(n) = n + g(n)``.

    Closed forms are used for constant and affine ``g`` and for shifted
    functionals built on them; otherwise the map is applied ``count`` times,
    provided ``count <= budget``.
    """
    start, count = _nat(start), _nat(count)
    if count == 0:
        return start
    if g.kind == "shifted":
        base, t = g.data
        # g_hat_tilde(n) = g_tilde(max{T, n}) and every later iterate is >= T
        return iterate_tilde(base, max(t, start), count, budget)
    L = g.constant_value
    if L is not None:
        return start + count * L
    if g.kind == "affine":
        a, b = g.data
        r = 1 + a
        # m -> r*m + b iterated count times
        rc = r ** count
        return rc * start + b * ((rc - 1) // a)
    n = start
    for done in range(min(count, budget)):
        step = g(n)
        if step == 0:
            return n
        n += step
        if n.bit_length() > MAX_BITS:
            raise IterationBudget(f"iterating n + {g.describe()} (value exceeds {MAX_BITS} bits "
                                  f"after {done + 1} steps)", count, budget)
    if count > budget:
        raise IterationBudget(f"iterating n + {g.describe()}", count, budget)
    return n


def iterate(f: Callable[[int], int], start: int, count: int, budget: int = DEFAULT_BUDGET,
            what: str = "iteration") -> int:
    """Plain ``f^(count)(start)`` with a budget guard; stops early at a fixed point."""
    count = _nat(count)
    n = _nat(start)
    for done in range(min(count, budget)):
        m = f(n)
        if m == n:
            return n
        n = m
        if n.bit_length() > MAX_BITS:
            raise IterationBudget(f"{what} (value exceeds {MAX_BITS} bits after {done + 1} steps)",
                                  count, budget)
    if count > budget:
        raise IterationBudget(what, count, budget)
    return n


def parse(desc) -> Counterfunction:
    """Parse a descriptor.

    Accepted forms: an int or digit string (constant), ``"identity"``/``"id"``,
    ``"const:L"``, ``"affine:a:b"``, ``"poly:c0,c1,..."`` (coefficients of
    ``n^0, n^1, ...``) and ``"succpow:e[:add[:scale]]"`` for
    ``scale*(n+1)^e + add``.
    """
    if isinstance(desc, Counterfunction):
        return desc
    if isinstance(desc, bool):
        raise ValueError("booleans are not counterfunctions")
    if isinstance(desc, int):
        return Counterfunction.constant(desc)
    if not isinstance(desc, str):
        raise ValueError(f"cannot parse counterfunction from {desc!r}")
    s = desc.strip()
    if s.isdigit():
        return Counterfunction.constant(int(s))
    if s in ("identity", "id"):
        return Counterfunction.identity()
    head, _, rest = s.partition(":")
    try:
        if head == "const":
            return Counterfunction.constant(int(rest))
        if head == "affine":
            a, b = (int(v) for v in rest.split(":"))
            return Counterfunction.affine(a, b)
        if head == "poly":
            return Counterfunction.polynomial(int(v) for v in rest.split(","))
        if head == "succpow":
            parts = [int(v) for v in rest.split(":")]
            return Counterfunction.succ_power(*parts)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"malformed counterfunction descriptor {desc!r}: {exc}") from None
    raise ValueError(f"unknown counterfunction descriptor {desc!r}")


ZERO = Counterfunction.constant(0)
IDENTITY = Counterfunction.identity()
