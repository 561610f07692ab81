"""Symbolic Shannon-flow inequalities in integral multiset form.

An integral inequality sum(h(Z) for Z in zs) <= sum(h(d) for d in ds) is
valid for all polymatroids exactly when witness multisets (ms of
monotonicity terms, ss of submodularity terms) turn

    sum_D h(d) - sum_M h(m) - sum_S h(s) - sum_Z h(Z)

into the identically-zero function of the symbols h(X).  All bookkeeping
below is exact (integer multiplicities, Fraction-valued polymatroids).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Optional

from .relational import MonTerm, SubTerm, uncond
from .varsets import Universe, VarSet

Multiset = Counter  # keyed by VarSet / MonTerm / SubTerm, positive int counts


class IdentityViolationError(ValueError):
    """The witnessed identity does not hold; the witness is corrupted."""


class ResetOnSingletonError(ValueError):
    """reset() would empty the target multiset; callers must keep |zs| > 1."""


def _as_counter(items) -> Counter:
    return items.copy() if isinstance(items, Counter) else Counter(items)


def sorted_elements(ms: Counter) -> list:
    out = []
    for key in sorted(ms, key=lambda k: k.sort_key()):
        out.extend([key] * ms[key])
    return out


# ---------------------------------------------------------------------------
# identity checking


def _accumulate(coeffs: Counter, vs: VarSet, c: int) -> None:
    if vs.mask:  # h({}) = 0 never contributes
        coeffs[vs.mask] += c


def identity_coefficients(zs, ds, ms, ss) -> Counter:
    """Coefficient per symbol h(X) of sum_D - sum_M - sum_S - sum_Z."""
    coeffs: Counter = Counter()
    for d, c in _as_counter(ds).items():
        _accumulate(coeffs, d.all_vars, c)
        _accumulate(coeffs, d.x, -c)
    for m, c in _as_counter(ms).items():
        _accumulate(coeffs, m.all_vars, -c)
        _accumulate(coeffs, m.x, c)
    for s, c in _as_counter(ss).items():
        _accumulate(coeffs, s.x | s.y, -c)
        _accumulate(coeffs, s.x | s.z, -c)
        _accumulate(coeffs, s.x | s.y | s.z, c)
        _accumulate(coeffs, s.x, c)
    for z, c in _as_counter(zs).items():
        _accumulate(coeffs, z, -c)
    return coeffs


def check_identity(zs, ds, ms, ss) -> bool:
    return all(c == 0 for c in identity_coefficients(zs, ds, ms, ss).values())


@dataclass(frozen=True)
class IntegralInequality:
    """Multiset form of a Shannon-flow inequality: (zs, ds)."""

    zs: tuple[VarSet, ...]
    ds: tuple[MonTerm, ...]

    def __post_init__(self):
        if not self.zs:
            raise ValueError("integral inequality needs at least one target")
        object.__setattr__(self, "zs", tuple(sorted(self.zs, key=lambda z: z.sort_key())))
        object.__setattr__(self, "ds", tuple(sorted(self.ds, key=lambda d: d.sort_key())))

    def z_counter(self) -> Counter:
        return Counter(self.zs)

    def d_counter(self) -> Counter:
        return Counter(self.ds)


@dataclass(frozen=True)
class Witness:
    """Monotonicity/submodularity multisets certifying an integral inequality."""

    ms: tuple[MonTerm, ...]
    ss: tuple[SubTerm, ...]

    def __post_init__(self):
        object.__setattr__(self, "ms", tuple(sorted(self.ms, key=lambda m: m.sort_key())))
        object.__setattr__(self, "ss", tuple(sorted(self.ss, key=lambda s: s.sort_key())))

    def m_counter(self) -> Counter:
        return Counter(self.ms)

    def s_counter(self) -> Counter:
        return Counter(self.ss)


# ---------------------------------------------------------------------------
# polymatroid vectors


class HVector:
    """Exact set function over a universe, h({}) = 0 implicit."""

    __slots__ = ("universe", "coords")

    def __init__(self, universe: Universe, coords: Mapping[int, Fraction]):
        self.universe = universe
        self.coords = {m: Fraction(v) for m, v in coords.items() if m}

    @classmethod
    def from_function(cls, universe: Universe, fn) -> "HVector":
        return cls(
            universe,
            {vs.mask: Fraction(fn(vs)) for vs in universe.all_nonempty_subsets()},
        )

    def value(self, vs: VarSet) -> Fraction:
        return self.coords.get(vs.mask, Fraction(0))

    def of_mon(self, m: MonTerm) -> Fraction:
        return self.value(m.all_vars) - self.value(m.x)

    def of_sub(self, s: SubTerm) -> Fraction:
        return (
            self.value(s.x | s.y)
            + self.value(s.x | s.z)
            - self.value(s.x | s.y | s.z)
            - self.value(s.x)
        )


def is_polymatroid(h: HVector) -> bool:
    """Elemental basis check: top monotonicities and pairwise submodularities."""
    u = h.universe
    n = len(u)
    full = u.full()
    for i in range(n):
        v = u.from_mask(1 << i)
        if h.value(full) - h.value(full - v) < 0:
            return False
    for i in range(n):
        for j in range(i + 1, n):
            pair = (1 << i) | (1 << j)
            rest = [k for k in range(n) if not pair >> k & 1]
            for sub in range(1 << len(rest)):
                xm = 0
                for t, k in enumerate(rest):
                    if sub >> t & 1:
                        xm |= 1 << k
                x = u.from_mask(xm)
                if h.of_sub(SubTerm(u.from_mask(1 << i), u.from_mask(1 << j), x)) < 0:
                    return False
    return True


def evaluate_inequality(h: HVector, zs, ds) -> bool:
    """sum_Z h(Z) <= sum_D h(delta) at a concrete h."""
    lhs = sum((h.value(z) * c for z, c in _as_counter(zs).items()), Fraction(0))
    rhs = sum((h.of_mon(d) * c for d, c in _as_counter(ds).items()), Fraction(0))
    return lhs <= rhs


# ---------------------------------------------------------------------------
# proof steps and sequences


@dataclass(frozen=True)
class ProofStep:
    """One rewrite step.  Fields not used by a kind stay None.

    SUB:  h(Y|X) -> h(Y|XZ)          (consumes witness (Y;Z|X))
    COMP: h(X) + h(Y|X) -> h(XY)
    DEC:  h(XY) -> h(X) + h(Y|X)
    MON:  h(XY) -> h(X)              (consumes witness (Y|X))
    """

    kind: str
    x: VarSet
    y: VarSet
    z: Optional[VarSet] = None

    KINDS = ("SUB", "COMP", "DEC", "MON")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown step kind {self.kind!r}")
        if self.kind == "SUB":
            if self.z is None or not self.z:
                raise ValueError("SUB step needs a nonempty widening set")
        elif self.z is not None:
            raise ValueError(f"{self.kind} step takes no widening set")
        for a, b in ((self.x, self.y), (self.x, self.z), (self.y, self.z)):
            if a is not None and b is not None and not a.isdisjoint(b):
                raise ValueError("step varsets must be disjoint")

    def render(self) -> str:
        def h(y: VarSet, x: VarSet) -> str:
            if not y:
                return "h()"
            return f"h({y}|{x})" if x else f"h({y})"

        x, y, z = self.x, self.y, self.z
        if self.kind == "SUB":
            return f"SUB {h(y, x)} -> {h(y, x | z)}"
        if self.kind == "COMP":
            return f"COMP {h(x, x.universe.empty())} + {h(y, x)} -> {h(x | y, x.universe.empty())}"
        if self.kind == "DEC":
            return f"DEC {h(x | y, x.universe.empty())} -> {h(x, x.universe.empty())} + {h(y, x)}"
        return f"MON {h(x | y, x.universe.empty())} -> {h(x, x.universe.empty())}"


def apply_proof_step_symbolic(ds: Counter, step: ProofStep) -> Counter:
    """Rewrite the D multiset; raises if a consumed term is missing."""
    out = ds.copy()

    def take(term: MonTerm) -> None:
        if out[term] <= 0:
            raise IdentityViolationError(f"step consumes absent term {term}")
        out[term] -= 1
        if out[term] == 0:
            del out[term]

    x, y, z = step.x, step.y, step.z
    if step.kind == "SUB":
        take(MonTerm(y, x))
        out[MonTerm(y, x | z)] += 1
    elif step.kind == "COMP":
        take(uncond(x))
        take(MonTerm(y, x))
        out[uncond(x | y)] += 1
    elif step.kind == "DEC":
        take(uncond(x | y))
        out[uncond(x)] += 1
        out[MonTerm(y, x)] += 1
    else:  # MON
        take(uncond(x | y))
        if x:
            out[uncond(x)] += 1
    return out


def apply_step_witness(ms: Counter, ss: Counter, step: ProofStep) -> tuple[Counter, Counter]:
    """Witness bookkeeping matching apply_proof_step_symbolic."""
    ms, ss = ms.copy(), ss.copy()
    if step.kind == "SUB":
        sigma = SubTerm(step.y, step.z, step.x)
        if ss[sigma] <= 0:
            raise IdentityViolationError(f"SUB step without witness {sigma}")
        ss[sigma] -= 1
        if ss[sigma] == 0:
            del ss[sigma]
    elif step.kind == "MON":
        mu = MonTerm(step.y, step.x)
        if ms[mu] <= 0:
            raise IdentityViolationError(f"MON step without witness {mu}")
        ms[mu] -= 1
        if ms[mu] == 0:
            del ms[mu]
    return ms, ss


@dataclass(frozen=True)
class ProofSequence:
    """Steps plus the (ds, ms, ss) snapshot before each step and at the end."""

    steps: tuple[ProofStep, ...]
    snapshots: tuple[tuple[Counter, Counter, Counter], ...]

    def __len__(self) -> int:
        return len(self.steps)

    def render(self) -> str:
        return "\n".join(s.render() for s in self.steps)


def potential(ds: Counter, ms: Counter, ss: Counter) -> int:
    return sum(ds.values()) + sum(ms.values()) + 3 * sum(ss.values())


def _multiset_contains(big: Counter, small: Counter) -> bool:
    return all(big[k] >= c for k, c in small.items())


def _targets_as_terms(zc: Counter) -> Counter:
    return Counter({uncond(z): c for z, c in zc.items()})


def _pick_cancelling(w: VarSet, ds: Counter, ms: Counter, ss: Counter):
    """Locate a term cancelling +h(W), preferring COMP, then MON, then SUB.

    Must exist for any unconditional W in D - Z of a valid witnessed
    identity (the coefficient of h(W) has to vanish).
    """
    comps = sorted(
        (d for d in ds if d.x == w and not d.unconditional), key=lambda d: d.sort_key()
    )
    if comps:
        return ("COMP", comps[0])
    monos = sorted((m for m in ms if m.all_vars == w and m.y), key=lambda m: m.sort_key())
    if monos:
        return ("MON", monos[0])
    subs = sorted(
        (s for s in ss if (s.x | s.y) == w or (s.x | s.z) == w),
        key=lambda s: s.sort_key(),
    )
    if subs:
        return ("SUBC", subs[0])
    return None


def build_proof_sequence(zs, ds, ms, ss) -> ProofSequence:
    """Constructive proof of the integral inequality (zs, ds) witnessed by (ms, ss).

    Repeatedly pick the lexicographically smallest unconditional W in D - Z
    and cancel it: against a conditional (Y|W) in D (composition), a witness
    monotonicity (Y|X) with XY = W, or a witness submodularity with one side
    equal to W (decomposition followed by condition widening).  Stops once
    D contains Z as a multiset.
    """
    zc, dc = _as_counter(zs), _as_counter(ds)
    mc, sc = _as_counter(ms), _as_counter(ss)
    z_terms = _targets_as_terms(zc)
    if not check_identity(zc, dc, mc, sc):
        raise IdentityViolationError("witnessed identity does not hold")

    steps: list[ProofStep] = []
    snapshots = [(dc.copy(), mc.copy(), sc.copy())]

    def emit(step: ProofStep) -> None:
        nonlocal dc, mc, sc
        dc = apply_proof_step_symbolic(dc, step)
        mc, sc = apply_step_witness(mc, sc, step)
        steps.append(step)
        snapshots.append((dc.copy(), mc.copy(), sc.copy()))

    while not _multiset_contains(dc, z_terms):
        spare = dc - z_terms
        candidates = sorted(
            (d.y for d in spare if d.unconditional), key=lambda v: v.sort_key()
        )
        if not candidates:
            raise IdentityViolationError("no unconditional term available to cancel")
        w = candidates[0]
        found = _pick_cancelling(w, dc, mc, sc)
        if found is None:
            raise IdentityViolationError(f"identity violated: nothing cancels h({w})")
        kind, term = found
        if kind == "COMP":
            emit(ProofStep("COMP", x=w, y=term.y))
        elif kind == "MON":
            emit(ProofStep("MON", x=term.x, y=term.y))
        else:
            sigma: SubTerm = term
            side, other = (sigma.y, sigma.z) if (sigma.x | sigma.y) == w else (sigma.z, sigma.y)
            if sigma.x:
                emit(ProofStep("DEC", x=sigma.x, y=side))
            emit(ProofStep("SUB", x=sigma.x, y=side, z=other))
    return ProofSequence(tuple(steps), tuple(snapshots))


def verify_proof_sequence(seq: ProofSequence, zs, ds, ms, ss) -> bool:
    """Replay: every prefix keeps the identity, final D covers Z, length bound."""
    zc, dc = _as_counter(zs), _as_counter(ds)
    mc, sc = _as_counter(ms), _as_counter(ss)
    if len(seq.steps) > potential(dc, mc, sc):
        return False
    if not check_identity(zc, dc, mc, sc):
        return False
    for step in seq.steps:
        try:
            dc = apply_proof_step_symbolic(dc, step)
            mc, sc = apply_step_witness(mc, sc, step)
        except IdentityViolationError:
            return False
        if not check_identity(zc, dc, mc, sc):
            return False
    return _multiset_contains(dc, _targets_as_terms(zc))


# ---------------------------------------------------------------------------
# the reset construction


def reset(zs, ds, ms, ss, w: VarSet):
    """Drop one unconditional copy of w from D at the cost of at most one target.

    Returns (zs', ds', ms', ss') with zs' a sub-multiset of zs missing at
    most one element, ds' a sub-multiset of ds - {w}, the identity intact,
    and the potential |D| + |M| + 2|S| strictly decreased.  Implemented as a
    loop: each round removes the current unconditional term and either stops
    (cancelled by a target or by an unconditional witness monotonicity) or
    queues the produced term for removal next.
    """
    zc, dc = _as_counter(zs), _as_counter(ds)
    mc, sc = _as_counter(ms), _as_counter(ss)
    if dc[uncond(w)] <= 0:
        raise ValueError(f"{w} is not an unconditional term of D")
    if sum(zc.values()) <= 1:
        raise ResetOnSingletonError("reset on a single-target inequality")
    if not check_identity(zc, dc, mc, sc):
        raise IdentityViolationError("witnessed identity does not hold")

    current = w
    while True:
        term = uncond(current)
        dc[term] -= 1
        if dc[term] == 0:
            del dc[term]
        if zc[current] > 0:
            zc[current] -= 1
            if zc[current] == 0:
                del zc[current]
            break
        comps = sorted(
            (d for d in dc if d.x == current and not d.unconditional),
            key=lambda d: d.sort_key(),
        )
        if comps:
            d = comps[0]
            dc[d] -= 1
            if dc[d] == 0:
                del dc[d]
            current = current | d.y
            dc[uncond(current)] += 1
            continue
        monos = sorted(
            (m for m in mc if m.all_vars == current and m.y), key=lambda m: m.sort_key()
        )
        if monos:
            mu = monos[0]
            mc[mu] -= 1
            if mc[mu] == 0:
                del mc[mu]
            if not mu.x:
                break  # h(current) cancelled in full; nothing new to remove
            current = mu.x
            dc[uncond(current)] += 1
            continue
        subs = sorted(
            (s for s in sc if (s.x | s.y) == current or (s.x | s.z) == current),
            key=lambda s: s.sort_key(),
        )
        if subs:
            sigma = subs[0]
            sc[sigma] -= 1
            if sc[sigma] == 0:
                del sc[sigma]
            other = sigma.z if (sigma.x | sigma.y) == current else sigma.y
            mc[MonTerm(other, sigma.x)] += 1
            current = sigma.x | sigma.y | sigma.z
            dc[uncond(current)] += 1
            continue
        raise IdentityViolationError(f"identity violated: nothing cancels h({current})")
    return zc, dc, mc, sc
