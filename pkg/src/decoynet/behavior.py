"""Generative behavior programs over network event traces.

A program is a stepwise kernel: given the trace prefix it returns an explicit
pmf over the next event (or halt). Sampling and scoring walk the same kernel,
so a sampled trace's log_weight and score_trace agree exactly. Posteriors are
self-normalized importance-sampling estimates with the prior as proposal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DegeneratePosteriorError, ProgramError

EVENT_KINDS = (
    "ssh",
    "scp",
    "http_rest",
    "amqp",
    "content_search",
    "recon_quiet",
    "recon_aggressive",
    "lateral_move",
    "exfiltrate",
    "frustrate",
)
TARGETLESS_KINDS = frozenset({"content_search", "recon_quiet", "recon_aggressive"})

_PMF_TOL = 1e-9


@dataclass(frozen=True)
class TraceEvent:
    """One logged network/host event."""

    actor: int
    kind: str
    target: Optional[int] = None
    success: bool = True

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise ProgramError(f"unknown event kind {self.kind!r}")
        if self.target is None and self.kind not in TARGETLESS_KINDS:
            raise ProgramError(f"event kind {self.kind!r} requires a target")


@dataclass(frozen=True)
class Trace:
    """An execution trace with its prior log-probability."""

    events: tuple[TraceEvent, ...]
    log_weight: float

    def __len__(self) -> int:
        return len(self.events)


# The kernel maps (prefix, args) to [(event-or-None, prob), ...]; None = halt.
StepSupport = Sequence[tuple[Optional[TraceEvent], float]]
Kernel = Callable[[tuple[TraceEvent, ...], dict], StepSupport]


@dataclass
class GenerativeProgram:
    name: str
    kernel: Kernel
    arg_schema: tuple[str, ...] = ()
    horizon: int = 64

    def check_args(self, args: dict) -> None:
        missing = set(self.arg_schema) - set(args)
        extra = set(args) - set(self.arg_schema)
        if missing or extra:
            raise ProgramError(
                f"program {self.name!r} args mismatch: missing={sorted(missing)} "
                f"unexpected={sorted(extra)}"
            )

    def step_support(self, prefix: tuple[TraceEvent, ...], args: dict) -> list[tuple[Optional[TraceEvent], float]]:
        support = list(self.kernel(prefix, args))
        total = sum(p for _, p in support)
        if not support or abs(total - 1.0) > _PMF_TOL or any(p < 0 for _, p in support):
            raise ProgramError(
                f"program {self.name!r}: step pmf must be non-negative and sum to 1, got {total!r}"
            )
        return support


def sample_trace(program: GenerativeProgram, args: dict, rng: np.random.Generator) -> Trace:
    """Draw one trace from the program's prior; log_weight is its exact log-pmf."""
    program.check_args(args)
    prefix: tuple[TraceEvent, ...] = ()
    log_weight = 0.0
    while True:
        if len(prefix) > program.horizon:
            raise ProgramError(f"program {program.name!r} exceeded horizon {program.horizon}")
        support = program.step_support(prefix, args)
        probs = np.array([p for _, p in support], dtype=float)
        idx = int(rng.choice(len(support), p=probs / probs.sum()))
        event, p = support[idx]
        if p <= 0.0:
            raise ProgramError(f"program {program.name!r} sampled zero-probability step")
        log_weight += math.log(p)
        if event is None:
            return Trace(events=prefix, log_weight=log_weight)
        prefix = prefix + (event,)


def score_trace(program: GenerativeProgram, args: dict, trace: Trace) -> float:
    """Exact log-probability of a complete trace; -inf outside the support."""
    program.check_args(args)
    prefix: tuple[TraceEvent, ...] = ()
    total = 0.0
    for event in trace.events:
        if len(prefix) > program.horizon:
            return float("-inf")
        support = program.step_support(prefix, args)
        p = next((q for ev, q in support if ev == event), 0.0)
        if p <= 0.0:
            return float("-inf")
        total += math.log(p)
        prefix = prefix + (event,)
    support = program.step_support(prefix, args)
    p_halt = next((q for ev, q in support if ev is None), 0.0)
    if p_halt <= 0.0:
        return float("-inf")
    return total + math.log(p_halt)


def enumerate_traces(
    program: GenerativeProgram, args: dict, max_traces: int = 100_000
) -> list[Trace]:
    """Exhaustively expand every positive-probability trace (finite supports)."""
    program.check_args(args)
    out: list[Trace] = []

    def expand(prefix: tuple[TraceEvent, ...], logp: float) -> None:
        if len(prefix) > program.horizon:
            raise ProgramError(f"program {program.name!r} exceeded horizon while enumerating")
        for event, p in program.step_support(prefix, args):
            if p <= 0.0:
                continue
            if event is None:
                out.append(Trace(events=prefix, log_weight=logp + math.log(p)))
                if len(out) > max_traces:
                    raise ProgramError(f"program {program.name!r} support exceeds {max_traces} traces")
            else:
                expand(prefix + (event,), logp + math.log(p))

    expand((), 0.0)
    return out


@dataclass
class WeightedTraceSet:
    """Distinct traces with normalized posterior weights (descending)."""

    particles: list[tuple[Trace, float]]
    n_sampled: int = 0

    def __post_init__(self) -> None:
        total = sum(w for _, w in self.particles)
        if self.particles and abs(total - 1.0) > 1e-9:
            raise ProgramError(f"trace-set weights must sum to 1, got {total!r}")

    def weight_by_key(self) -> dict[tuple[TraceEvent, ...], float]:
        return {t.events: w for t, w in self.particles}

    def top(self, k: int) -> list[tuple[Trace, float]]:
        return self.particles[:k]


# Likelihoods map (trace, observed) -> log p(observed | trace).
Likelihood = Callable[[Trace, np.ndarray], float]


def _trace_sort_key(trace: Trace) -> tuple:
    # Orderable stand-in for the event tuple, so equal-weight ties break
    # deterministically.
    return tuple((e.actor, e.kind, -1 if e.target is None else e.target, e.success) for e in trace.events)


def poisson_feature_likelihood(
    events_to_counts: Callable[[Sequence[TraceEvent]], np.ndarray],
    base: Optional[np.ndarray] = None,
    floor: float = 0.05,
) -> Likelihood:
    """Independent Poisson per feature cell: rate = base + implied + floor.

    The floor is the noise looseness; raising it admits observations the
    trace does not explain directly.
    """
    if floor <= 0:
        raise ProgramError(f"likelihood floor must be positive, got {floor!r}")

    def loglik(trace: Trace, observed: np.ndarray) -> float:
        lam = events_to_counts(trace.events).astype(float) + floor
        if base is not None:
            lam = lam + base
        k = np.asarray(observed, dtype=float)
        if k.shape != lam.shape:
            raise ProgramError(f"observation shape {k.shape} != implied shape {lam.shape}")
        lgam = np.vectorize(math.lgamma)(k + 1.0)
        return float(np.sum(k * np.log(lam) - lam - lgam))

    return loglik


def posterior_traces(
    program: GenerativeProgram,
    args: dict,
    observed: np.ndarray,
    n_particles: int,
    rng: np.random.Generator,
    *,
    likelihood: Likelihood,
) -> WeightedTraceSet:
    """SNIS posterior over traces, prior as proposal, observation as evidence.

    Exactly n_particles prior draws; identical traces are then deduplicated
    and re-weighted with their exact prior log-pmf times the likelihood.
    """
    if n_particles < 1:
        raise ProgramError(f"n_particles must be >= 1, got {n_particles!r}")
    distinct: dict[tuple[TraceEvent, ...], Trace] = {}
    for _ in range(n_particles):
        t = sample_trace(program, args, rng)
        distinct.setdefault(t.events, t)

    traces = list(distinct.values())
    log_post = np.array([t.log_weight + likelihood(t, observed) for t in traces], dtype=float)
    finite = np.isfinite(log_post)
    if not finite.any():
        raise DegeneratePosteriorError(
            "every sampled trace has zero likelihood for the observation; "
            "increase n_particles or loosen the likelihood noise model"
        )
    log_post[~finite] = -np.inf
    log_post -= log_post[finite].max()
    w = np.exp(log_post)
    w /= w.sum()
    order = sorted(range(len(traces)), key=lambda i: (-w[i], _trace_sort_key(traces[i])))
    particles = [(traces[i], float(w[i])) for i in order]
    return WeightedTraceSet(particles=particles, n_sampled=n_particles)


def exact_posterior(
    program: GenerativeProgram,
    args: dict,
    observed: np.ndarray,
    *,
    likelihood: Likelihood,
) -> WeightedTraceSet:
    """Brute-force posterior by full enumeration (test oracle for small programs)."""
    traces = enumerate_traces(program, args)
    log_post = np.array([t.log_weight + likelihood(t, observed) for t in traces], dtype=float)
    finite = np.isfinite(log_post)
    if not finite.any():
        raise DegeneratePosteriorError("observation has zero likelihood under every trace")
    log_post[~finite] = -np.inf
    log_post -= log_post[finite].max()
    w = np.exp(log_post)
    w /= w.sum()
    order = sorted(range(len(traces)), key=lambda i: (-w[i], _trace_sort_key(traces[i])))
    return WeightedTraceSet(particles=[(traces[i], float(w[i])) for i in order])


def total_variation(a: WeightedTraceSet, b: WeightedTraceSet) -> float:
    wa, wb = a.weight_by_key(), b.weight_by_key()
    keys = set(wa) | set(wb)
    return 0.5 * sum(abs(wa.get(k, 0.0) - wb.get(k, 0.0)) for k in keys)


# --- program library ---------------------------------------------------------

PROGRAM_LIBRARY: dict[str, Callable[..., GenerativeProgram]] = {}


def register_program(name: str):
    def deco(factory: Callable[..., GenerativeProgram]):
        PROGRAM_LIBRARY[name] = factory
        return factory

    return deco


def make_program(name: str, **params) -> GenerativeProgram:
    try:
        factory = PROGRAM_LIBRARY[name]
    except KeyError:
        raise ProgramError(f"unknown program {name!r}; known: {sorted(PROGRAM_LIBRARY)}") from None
    return factory(**params)


@register_program("single_event")
def _single_event(event: TraceEvent) -> GenerativeProgram:
    """Point mass: emits exactly one fixed event, then halts."""

    def kernel(prefix: tuple[TraceEvent, ...], args: dict) -> StepSupport:
        if len(prefix) == 0:
            return [(event, 1.0)]
        return [(None, 1.0)]

    return GenerativeProgram(name="single_event", kernel=kernel, horizon=2)


@register_program("fair_coin")
def _fair_coin(
    heads: Optional[TraceEvent] = None, tails: Optional[TraceEvent] = None, steps: int = 2
) -> GenerativeProgram:
    """steps independent 50/50 choices between two events."""
    heads = heads or TraceEvent(actor=0, kind="ssh", target=1)
    tails = tails or TraceEvent(actor=1, kind="http_rest", target=0)

    def kernel(prefix: tuple[TraceEvent, ...], args: dict) -> StepSupport:
        if len(prefix) < steps:
            return [(heads, 0.5), (tails, 0.5)]
        return [(None, 1.0)]

    return GenerativeProgram(name="fair_coin", kernel=kernel, horizon=steps + 1)


@register_program("gray_like_traffic")
def _gray_like_traffic(
    events: Sequence[TraceEvent], max_events: int = 3, continue_prob: float = 0.5
) -> GenerativeProgram:
    """Bounded bursts of gray-shaped events, geometric length prior."""
    menu = tuple(events)
    if not menu:
        raise ProgramError("gray_like_traffic needs a non-empty event menu")
    if not (0.0 < continue_prob < 1.0):
        raise ProgramError(f"continue_prob must be in (0, 1), got {continue_prob!r}")
    if max_events < 1:
        raise ProgramError(f"max_events must be >= 1, got {max_events!r}")

    def kernel(prefix: tuple[TraceEvent, ...], args: dict) -> StepSupport:
        if len(prefix) >= max_events:
            return [(None, 1.0)]
        each = continue_prob / len(menu)
        return [(None, 1.0 - continue_prob)] + [(ev, each) for ev in menu]

    return GenerativeProgram(name="gray_like_traffic", kernel=kernel, horizon=max_events + 1)
