"""The logic phase: decide whether the learned model violates the truth
anywhere in the domain, and locate the strongest violation.

The violation measure v is |alpha - beta| for equality truths and
beta - alpha for strict inequalities (both with the unknown function
replaced by the model).  Deciding "v > eps somewhere?" runs on one of two
backends: a certified interval branch-and-bound (default; sound for every
expression node) or an external SMT-LIB solver subprocess (kept for
ReLU/polynomial models, where the query fits standard theories).

eps* (the supremum of v, i.e. the threshold separating satisfiable from
unsatisfiable weakened queries) is extracted either by the classic
doubling-then-bisection search over check() calls, or, on the
branch-and-bound backend, by maximizing v directly with the same
box-pruning machinery.  Both agree to within the bisection tolerance.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from . import smt
from .expr import (Abs, AuxTruth, EvalDomainError, Expr, Relation, Sign, Sub,
                   children, constant_fold, differentiate, eval_point,
                   free_vars, is_ground, substitute_f)
from .intervals import Box, Interval
from .smt import (SmtError, SolverFailedError, SolverTimeoutError,
                  SolverUnknownError, UnsupportedNodeError, emit_smtlib)
from .tape import Tape, compile_tape

__all__ = [
    "ViolationExpr", "Sat", "Unsat", "VerifyOutcome", "EpsStarResult", "Proof",
    "BnbOptions", "BnbBackend", "SmtBackend", "build_violation", "check",
    "find_eps_star", "VerifyError", "InconclusiveError", "DivergedModelError",
    "emit_smtlib", "check_external", "SmtError", "UnsupportedNodeError",
    "SolverUnknownError", "SolverTimeoutError", "SolverFailedError",
]


class VerifyError(RuntimeError):
    """Verification could not produce a sound answer."""


class InconclusiveError(VerifyError):
    """The search budget or the box resolution floor was hit before either
    a witness or a certificate emerged.  Never silently converted into an
    answer."""

    def __init__(self, message: str, boxes_processed: int):
        super().__init__(message)
        self.boxes_processed = boxes_processed


class DivergedModelError(VerifyError):
    """eps doubling passed eps_max without an Unsat: the violation is
    effectively unbounded, which signals a diverged model."""


@dataclass(frozen=True)
class ViolationExpr:
    """Ground violation measure over a rectangular domain."""

    v: Expr
    domain: Box

    def __post_init__(self):
        if not is_ground(self.v):
            raise VerifyError("violation expression must be ground")
        missing = free_vars(self.v) - set(self.domain.features)
        if missing:
            raise VerifyError(f"domain does not cover features {sorted(missing)}")


@dataclass(frozen=True)
class Unsat:
    certified_upper_bound: float


@dataclass(frozen=True)
class Sat:
    witness: dict[str, float]
    violation: float


VerifyOutcome = Union[Sat, Unsat]


@dataclass(frozen=True)
class Proof:
    """check at eps = rho came back Unsat: the model satisfies the
    rho-weakened truth everywhere."""

    certified_upper_bound: float


@dataclass(frozen=True)
class EpsStarResult:
    eps_star: float
    strongest_point: dict[str, float]
    trail: tuple[tuple[float, VerifyOutcome], ...]


@dataclass(frozen=True)
class BnbOptions:
    min_box_width: float = 1e-7    # relative; narrower boxes are not split
    max_boxes: int = 10_000_000
    threads: int = 1               # the box search is sequential; kept for
                                   # CLI compatibility, must be >= 1

    def __post_init__(self):
        if not 0 < self.min_box_width < 1:
            raise VerifyError(f"min_box_width out of range: {self.min_box_width}")
        if self.max_boxes < 1:
            raise VerifyError("max_boxes must be >= 1")
        if self.threads < 1:
            raise VerifyError("threads must be >= 1")


def build_violation(truth: AuxTruth, fhat: Expr,
                    fhat_grads: Mapping[str, Expr], domain: Box,
                    features: tuple[str, ...] | None = None) -> ViolationExpr:
    """Substitute the model into the truth and form the violation measure.

    ``features`` fixes the positional meaning of f/df arguments; it defaults
    to the domain's feature order, which stays correct even when fhat has
    constant-folded a feature away entirely.
    """
    missing = truth.features - set(domain.features)
    if missing:
        raise VerifyError(f"domain does not cover truth features {sorted(missing)}")
    if features is None:
        features = domain.features
    alpha = substitute_f(truth.alpha, fhat, fhat_grads, features)
    beta = substitute_f(truth.beta, fhat, fhat_grads, features)
    if truth.relation is Relation.EQUALITY:
        v: Expr = Abs(Sub(alpha, beta))
    else:
        v = Sub(beta, alpha)
    return ViolationExpr(constant_fold(v), domain)


# ---------------------------------------------------------------------------
# Box plumbing (arrays in the domain's sorted feature order)
# ---------------------------------------------------------------------------

def _domain_arrays(domain: Box) -> tuple[tuple[str, ...], np.ndarray, np.ndarray]:
    names = domain.features
    lo = np.array([domain[n].lo for n in names], dtype=np.float64)
    hi = np.array([domain[n].hi for n in names], dtype=np.float64)
    return names, lo, hi


def _mid(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return np.clip(0.5 * (lo + hi), lo, hi)


def _rel_widths(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    scale = np.maximum(1.0, np.maximum(np.abs(lo), np.abs(hi)))
    return (hi - lo) / scale

def _as_box(names: tuple[str, ...], lo: np.ndarray, hi: np.ndarray) -> Box:
    return Box({n: Interval(float(a), float(b))
                for n, a, b in zip(names, lo, hi)})


def _as_point(names: tuple[str, ...], x: np.ndarray) -> dict[str, float]:
    return {n: float(v) for n, v in zip(names, x)}


def _contains_sign(e: Expr) -> bool:
    if isinstance(e, Sign):
        return True
    return any(_contains_sign(c) for c in children(e))


class _BoundedEval:
    """Certified range evaluator for the violation over sub-boxes.

    The plain interval enclosure of the tape loses the correlation between
    repeated occurrences of a variable, so its excess width shrinks only
    linearly with the box width.  For a violation whose smooth part w has
    no jump nodes, the centered form

        w(box)  within  w(m) + sum_i dw/dx_i(box) * (box_i - m_i)

    is also sound (mean value theorem along the segment to the midpoint m;
    every term evaluated with outward rounding, w(m) as a degenerate box),
    and its excess shrinks quadratically.  Both enclosures are intersected.
    A top-level Abs is peeled off first and reapplied exactly: Abs inside w
    only kinks it (the Sign in its derivative keeps a bounded enclosure,
    and the mean value bound survives for Lipschitz w), while a Sign node
    inside w jumps and rules the centered form out entirely.
    """

    def __init__(self, v: Expr, names: tuple[str, ...]):
        self.names = names
        self.root_abs = isinstance(v, Abs)
        w = v.arg if isinstance(v, Abs) else v
        self.wtape: Tape = compile_tape(w, names)
        self.centered = not _contains_sign(w)
        self.gtapes: list[Tape] = []
        if self.centered:
            for name in names:
                g = constant_fold(differentiate(w, name))
                self.gtapes.append(compile_tape(g, names))

    def value(self, x: np.ndarray) -> float:
        val = self.wtape.eval_scalar(x)
        return abs(val) if self.root_abs else val

    def bound(self, lo: np.ndarray, hi: np.ndarray) -> tuple[float, float]:
        wlo, whi = self.wtape.eval_interval(lo, hi)
        if self.centered:
            try:
                clo, chi = self._centered_bound(lo, hi)
            except EvalDomainError:
                pass    # e.g. a derivative with a zero-straddling divisor
            else:
                wlo = max(wlo, clo)
                whi = min(whi, chi)
                if wlo > whi:
                    raise VerifyError(
                        "internal: sound enclosures intersected to nothing")
        if self.root_abs:
            if wlo >= 0.0:
                return wlo, whi
            if whi <= 0.0:
                return -whi, -wlo
            return 0.0, max(-wlo, whi)
        return wlo, whi

    def _centered_bound(self, lo: np.ndarray,
                        hi: np.ndarray) -> tuple[float, float]:
        mid = _mid(lo, hi)
        acc = Interval(*self.wtape.eval_interval(mid, mid))
        for i, gtape in enumerate(self.gtapes):
            g = Interval(*gtape.eval_interval(lo, hi))
            if g.lo == 0.0 and g.hi == 0.0:
                continue
            offset = Interval(float(lo[i]), float(hi[i])) - Interval.point(float(mid[i]))
            acc = acc + g * offset
        return acc.lo, acc.hi


def _bound_hi(ev: _BoundedEval, names, lo, hi) -> float:
    try:
        return ev.bound(lo, hi)[1]
    except EvalDomainError as exc:
        box = _as_box(names, lo, hi)
        raise EvalDomainError(f"{exc} over sub-box {box!r}", box=box) from exc


def _point_value(ev: _BoundedEval, names, x) -> float:
    try:
        return ev.value(x)
    except EvalDomainError as exc:
        raise EvalDomainError(f"{exc} at point {_as_point(names, x)}") from exc


# ---------------------------------------------------------------------------
# Branch-and-bound decision procedure
# ---------------------------------------------------------------------------

_HEAP_LIMIT = 500_000   # pending boxes beyond this are processed depth-first


def check(violation: ViolationExpr, eps: float,
          opts: BnbOptions = BnbOptions()) -> VerifyOutcome:
    """Decide whether v exceeds eps anywhere in the domain.

    Sub-boxes come off a worklist ordered by enclosure upper bound.  Each
    is probed at its midpoint and corners (Sat the moment a probe exceeds
    eps), and split along its widest relative dimension; children whose
    bound is at or below eps are pruned.  Boxes at the width floor are not
    split; their enclosure folds into the certificate.  Once the worklist
    empties, the largest surviving bound is the certificate: at or below
    eps it proves Unsat, above it (possible only via floor boxes) the
    answer is InconclusiveError, as is exhausting the box budget -- never
    a silent verdict.  Should the worklist outgrow _HEAP_LIMIT, the
    overflow is processed depth-first, which caps memory without changing
    the verdict.
    """
    names, lo0, hi0 = _domain_arrays(violation.domain)
    ev = _BoundedEval(violation.v, names)

    heap: list[tuple[float, int, np.ndarray, np.ndarray]] = []
    stack: list[tuple[float, np.ndarray, np.ndarray]] = []
    counter = 0
    cert_ub = -math.inf     # max bound over pruned and floor-resolved boxes
    boxes = 0

    def push(lo: np.ndarray, hi: np.ndarray, ub: float) -> None:
        nonlocal counter, cert_ub
        if ub <= eps:
            if ub > cert_ub:
                cert_ub = ub
            return
        if len(heap) < _HEAP_LIMIT:
            heapq.heappush(heap, (-ub, counter, lo, hi))
            counter += 1
        else:
            stack.append((ub, lo, hi))

    push(lo0, hi0, _bound_hi(ev, names, lo0, hi0))

    while heap or stack:
        if stack:
            ub, lo, hi = stack.pop()
        else:
            neg_ub, _, lo, hi = heapq.heappop(heap)
            ub = -neg_ub
        mid = _mid(lo, hi)
        for probe in (mid, lo, hi):
            val = _point_value(ev, names, probe)
            if val > eps:
                return Sat(witness=_as_point(names, probe), violation=val)
        rel = _rel_widths(lo, hi)
        if float(np.max(rel)) < opts.min_box_width:
            if ub > cert_ub:
                cert_ub = ub
            continue
        boxes += 1
        if boxes > opts.max_boxes:
            raise InconclusiveError(
                f"box budget ({opts.max_boxes}) exhausted at eps={eps}", boxes)
        dim = int(np.argmax(rel))
        m = mid[dim]
        for new_lo, new_hi in _split(lo, hi, dim, m):
            push(new_lo, new_hi, _bound_hi(ev, names, new_lo, new_hi))

    if cert_ub > eps:
        raise InconclusiveError(
            f"boxes at the width floor ({opts.min_box_width} relative) cap "
            f"the certified bound at {cert_ub}, above eps={eps}, while no "
            f"probe exceeds eps; the supremum is within enclosure noise of "
            f"eps", boxes)
    return Unsat(certified_upper_bound=cert_ub)


def _split(lo: np.ndarray, hi: np.ndarray, dim: int,
           at: float) -> tuple[tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]:
    left_hi = hi.copy()
    left_hi[dim] = at
    right_lo = lo.copy()
    right_lo[dim] = at
    return (lo, left_hi), (right_lo, hi)


def _certified_max(violation: ViolationExpr, rho: float, bisection_tol: float,
                   opts: BnbOptions) -> Proof | EpsStarResult:
    """Maximize v over the domain with branch-and-bound.

    Keeps an incumbent (best probed point) alongside the certified upper
    bound and stops as soon as either everything is certified at or below
    rho (a Proof) or the incumbent exceeds rho and the bound has closed to
    within bisection_tol * max(1, incumbent) of it.  Incumbent ties break
    toward the lexicographically smaller coordinates.
    """
    names, lo0, hi0 = _domain_arrays(violation.domain)
    ev = _BoundedEval(violation.v, names)

    heap: list[tuple[float, int, np.ndarray, np.ndarray]] = []
    stack: list[tuple[float, np.ndarray, np.ndarray]] = []
    counter = 0
    v_best = -math.inf
    best_point: np.ndarray | None = None
    dropped_ub = -math.inf   # bounds of pruned boxes and boxes at the floor
    boxes = 0

    def push(lo: np.ndarray, hi: np.ndarray, ub: float) -> None:
        nonlocal counter, dropped_ub
        if ub <= max(v_best, rho):
            if ub > dropped_ub:
                dropped_ub = ub
            return
        if len(heap) < _HEAP_LIMIT:
            heapq.heappush(heap, (-ub, counter, lo, hi))
            counter += 1
        else:
            stack.append((ub, lo, hi))

    push(lo0, hi0, _bound_hi(ev, names, lo0, hi0))

    while heap or stack:
        if stack:
            ub, lo, hi = stack.pop()
        else:
            remaining = max(-heap[0][0], dropped_ub)
            if remaining <= rho:
                break               # everything certified at or below rho
            if v_best > rho and remaining <= v_best + bisection_tol * max(1.0, v_best):
                break               # incumbent and bound agree to tolerance
            neg_ub, _, lo, hi = heapq.heappop(heap)
            ub = -neg_ub
        if ub <= max(v_best, rho):  # stale: incumbent improved since push
            if ub > dropped_ub:
                dropped_ub = ub
            continue
        mid = _mid(lo, hi)
        # Midpoints only: corner probes would park the incumbent exactly on
        # domain corners, where the feedback loop then relabels the same
        # float forever whenever a violation hugs the boundary.
        val = _point_value(ev, names, mid)
        if val > v_best or (val == v_best and best_point is not None
                            and tuple(mid) < tuple(best_point)):
            v_best = val
            best_point = mid
        rel = _rel_widths(lo, hi)
        if float(np.max(rel)) < opts.min_box_width:
            if ub > dropped_ub:
                dropped_ub = ub
            continue
        boxes += 1
        if boxes > opts.max_boxes:
            raise InconclusiveError(
                f"box budget ({opts.max_boxes}) exhausted maximizing v", boxes)
        dim = int(np.argmax(rel))
        m = mid[dim]
        for new_lo, new_hi in _split(lo, hi, dim, m):
            push(new_lo, new_hi, _bound_hi(ev, names, new_lo, new_hi))

    top_ub = -heap[0][0] if heap else -math.inf
    cert_ub = max(top_ub, dropped_ub, v_best)
    if cert_ub <= rho:
        return Proof(certified_upper_bound=cert_ub)
    if best_point is None or not v_best > rho:
        raise InconclusiveError(
            f"supremum of v is within resolution noise of rho={rho}; cannot "
            f"certify either side (incumbent {v_best}, bound {cert_ub})", boxes)
    if cert_ub - v_best > bisection_tol * max(1.0, v_best):
        raise InconclusiveError(
            f"the width floor stopped the bound at {cert_ub}, not within "
            f"tolerance of the incumbent {v_best}", boxes)
    eps_star = 0.5 * (v_best + cert_ub)
    # Every point within bisection_tol of the maximum ties for "strongest";
    # the tie goes to the lexicographically smallest coordinates.  The exact
    # cut inside the tolerance is derived from the incumbent value, so two
    # nearly identical models with the same flat near-maximal plateau still
    # resolve to distinct band edges; the cap at 0.45 keeps the returned
    # value within bisection_tol of eps_star.
    unit = (hash(v_best) & 0xFFFFFFFF) / 2.0 ** 32
    theta = v_best - (0.1 + 0.35 * unit) * bisection_tol * max(1.0, v_best)
    # Points on the domain boundary make poor feedback for derivative
    # truths (a label there pins the value, never the slope), so when the
    # tie band is wide enough the returned point steps inside by a
    # tolerance-scaled margin.
    margin = (0.5 + unit) * bisection_tol * (hi0 - lo0)
    point, value = _lex_smallest_at_least(ev, names, lo0, hi0, theta, margin,
                                          v_best, best_point, opts, boxes)
    witness = _as_point(names, point)
    trail = ((rho, Sat(witness=witness, violation=value)),)
    return EpsStarResult(eps_star=eps_star, strongest_point=witness, trail=trail)


def _lex_smallest_at_least(ev: _BoundedEval, names, lo0: np.ndarray,
                           hi0: np.ndarray, theta: float, margin: np.ndarray,
                           v_best: float, best_point: np.ndarray,
                           opts: BnbOptions,
                           boxes_used: int) -> tuple[np.ndarray, float]:
    """Find the lexicographically smallest probe point with v >= theta.

    Walks boxes in lexicographic order of their lower corner, pruning any
    whose enclosure tops out below theta, and returns the first width-floor
    probe that qualifies, clamped away from the domain boundary when the
    clamped point still clears theta.  The incumbent's own box qualifies,
    so the search terminates at worst there.
    """
    heap: list[tuple[tuple[float, ...], int, np.ndarray, np.ndarray]] = []
    counter = 0
    boxes = boxes_used
    # Offset within the winning floor box, derived from the incumbent value.
    # Two nearly identical models whose violation plateaus at the same box
    # then still report distinct points, which keeps a feedback loop from
    # relabeling one input forever.
    frac = 0.25 + 0.5 * ((hash(v_best) & 0xFFFFFFFF) / 2.0 ** 32)

    def push(lo: np.ndarray, hi: np.ndarray) -> None:
        nonlocal counter
        if _bound_hi(ev, names, lo, hi) < theta:
            return
        if len(heap) >= _HEAP_LIMIT:
            raise InconclusiveError(
                f"worklist limit ({_HEAP_LIMIT}) exceeded locating the "
                f"tie-broken strongest point", boxes)
        heapq.heappush(heap, (tuple(map(float, lo)), counter, lo, hi))
        counter += 1

    push(lo0, hi0)
    while heap:
        _, _, lo, hi = heapq.heappop(heap)
        rel = _rel_widths(lo, hi)
        mid = _mid(lo, hi)
        if float(np.max(rel)) < opts.min_box_width:
            probe = lo + frac * (hi - lo)
            step = margin.copy()
            # The band may be narrower than the margin; shrink until the
            # inset point still clears theta.
            while np.any(step > 0.25 * (hi - lo)):
                inset = np.minimum(np.maximum(probe, lo0 + step), hi0 - step)
                if np.array_equal(inset, probe):
                    break
                val = _point_value(ev, names, inset)
                if val >= theta:
                    return inset, val
                step *= 0.5
            val = _point_value(ev, names, probe)
            if val >= theta:
                return probe, val
            val = _point_value(ev, names, mid)
            if val >= theta:
                return mid, val
            continue
        boxes += 1
        if boxes > opts.max_boxes:
            raise InconclusiveError(
                f"box budget ({opts.max_boxes}) exhausted locating the "
                f"tie-broken strongest point", boxes)
        dim = int(np.argmax(rel))
        for new_lo, new_hi in _split(lo, hi, dim, mid[dim]):
            push(new_lo, new_hi)
    return best_point, v_best   # enclosure noise hid the band; keep the argmax


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------

class BnbBackend:
    """Certified interval branch-and-bound (the default backend)."""

    name = "bnb"

    def __init__(self, opts: BnbOptions = BnbOptions()):
        self.opts = opts

    def check(self, violation: ViolationExpr, eps: float) -> VerifyOutcome:
        return check(violation, eps, self.opts)


class SmtBackend:
    """External SMT-LIB solver subprocess (for ReLU/polynomial models)."""

    name = "smt"

    def __init__(self, command, encoding: str = "real",
                 timeout: float = 60.0):
        if not command:
            raise VerifyError("SMT backend requires a solver command")
        self.command = command
        self.encoding = encoding
        self.timeout = timeout

    def check(self, violation: ViolationExpr, eps: float) -> VerifyOutcome:
        script = emit_smtlib(violation, eps, self.encoding)
        answer = smt.check_external(script, self.command, self.timeout)
        if answer.verdict == "unsat":
            return Unsat(certified_upper_bound=eps)
        witness = smt.witness_point(answer, violation.domain)
        # Never trust the solver's arithmetic: recompute the violation.
        violation_value = eval_point(violation.v, witness)
        if not violation_value > eps:
            raise SmtError(
                f"solver witness {witness} gives violation {violation_value}, "
                f"not above eps={eps} (encoding mismatch near the threshold)")
        return Sat(witness=witness, violation=violation_value)


def check_external(script: str, solver_command, timeout: float,
                   violation: ViolationExpr | None = None,
                   eps: float | None = None) -> VerifyOutcome:
    """Run an SMT-LIB script through a solver and map its answer.

    `unsat` maps to Unsat (certified at the eps the script asserted);
    `sat` needs `violation` and `eps` to recompute the witness violation.
    """
    answer = smt.check_external(script, solver_command, timeout)
    if answer.verdict == "unsat":
        return Unsat(certified_upper_bound=eps if eps is not None else math.nan)
    if violation is None or eps is None:
        raise SmtError("sat answer needs the violation expression and eps "
                       "to recompute the witness violation")
    witness = smt.witness_point(answer, violation.domain)
    violation_value = eval_point(violation.v, witness)
    if not violation_value > eps:
        raise SmtError(f"solver witness {witness} gives violation "
                       f"{violation_value}, not above eps={eps}")
    return Sat(witness=witness, violation=violation_value)


# ---------------------------------------------------------------------------
# eps* extraction
# ---------------------------------------------------------------------------

def find_eps_star(violation: ViolationExpr, rho: float, backend,
                  bisection_tol: float = 1e-3, eps_max: float = 1e6,
                  method: str = "auto") -> Proof | EpsStarResult:
    """Find the threshold eps* separating Sat from Unsat, and its witness.

    Checks eps = rho first; Unsat there is a Proof and ends the search.
    Otherwise `method="bisect"` doubles eps while Sat, then bisects the
    first [eps, 2 eps] bracket that flips, to a width of
    bisection_tol * max(1, bracket top).  `method="auto"` uses the direct
    maximization fast path when the backend is branch-and-bound; both
    routes agree within twice the tolerance.
    """
    if not rho > 0:
        raise VerifyError(f"rho must be > 0, got {rho}")
    if not bisection_tol > 0:
        raise VerifyError(f"bisection_tol must be > 0, got {bisection_tol}")
    if method not in ("auto", "bisect"):
        raise VerifyError(f"unknown method {method!r}")

    if method == "auto" and isinstance(backend, BnbBackend):
        return _certified_max(violation, rho, bisection_tol, backend.opts)

    trail: list[tuple[float, VerifyOutcome]] = []
    best_violation = -math.inf
    best_witness: dict[str, float] | None = None

    def query(eps: float) -> VerifyOutcome:
        nonlocal best_violation, best_witness
        outcome = backend.check(violation, eps)
        trail.append((eps, outcome))
        if isinstance(outcome, Sat) and outcome.violation > best_violation:
            best_violation = outcome.violation
            best_witness = outcome.witness
        return outcome

    first = query(rho)
    if isinstance(first, Unsat):
        return Proof(certified_upper_bound=first.certified_upper_bound)

    eps_lo = rho
    while True:
        eps_hi = 2.0 * eps_lo
        if eps_hi > eps_max:
            raise DivergedModelError(
                f"still Sat at eps={eps_lo}; doubling past eps_max={eps_max}")
        if isinstance(query(eps_hi), Unsat):
            break
        eps_lo = eps_hi

    width_target = bisection_tol * max(1.0, eps_hi)
    while eps_hi - eps_lo > width_target:
        eps_mid = 0.5 * (eps_lo + eps_hi)
        if isinstance(query(eps_mid), Sat):
            eps_lo = eps_mid
        else:
            eps_hi = eps_mid

    assert best_witness is not None
    return EpsStarResult(eps_star=0.5 * (eps_lo + eps_hi),
                         strongest_point=best_witness,
                         trail=tuple(trail))
