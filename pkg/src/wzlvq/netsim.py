"""Sensor-network simulator: placement, TDMA schedule, transport audit and chain coding.

Layout: n sources on the left edge, n destinations on the right edge and an
l x l router grid (l = sqrt(n), even).  Strip i (1..l) is the horizontal band
holding sources/destinations i*l-l+1 .. i*l and router row i-1; every
packet travels along its strip's router row to the destination with the
source's index.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple

import numpy as np

from . import codec as _codec
from .lattice import make_lattice
from .sources import BrownianField
from .sublattice import scaling_similarity

# range tests use a relative slack: several hops sit exactly at distance Delta
_RANGE_RTOL = 1e-9


class SchedulerInvariantError(RuntimeError):
    """A collision, drop or queue overflow: a simulator bug, never a model outcome."""

    def __init__(self, invariant: str, detail: str):
        super().__init__(f"{invariant}: {detail}")
        self.invariant = invariant


class ConfigurationError(ValueError):
    pass


# -- layout ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NetworkLayout:
    """Node ids: sources 0..n-1, destinations n..2n-1, routers 2n..3n-1.

    Router (row j, column k-1) has id 2n + j*l + (k-1); k = 1..l is its hop
    index along the row and its group is k mod 3.  Source and destination
    ids are 0-based versions of the 1-based index i.
    """

    n: int
    ell: int
    positions: np.ndarray
    radius: np.ndarray
    strip: np.ndarray
    group: np.ndarray

    def source(self, i: int) -> int:
        return i - 1

    def destination(self, i: int) -> int:
        return self.n + i - 1

    def router(self, row: int, k: int) -> int:
        return 2 * self.n + row * self.ell + (k - 1)

    def role(self, node: int) -> str:
        return ("source", "destination", "router")[node // self.n]

    def strip_sources(self, strip: int) -> list[int]:
        lo = (strip - 1) * self.ell
        return [self.source(lo + m) for m in range(1, self.ell + 1)]

    def next_hop(self, node: int, src_index: int) -> int:
        """Next node on the route of a packet from source ``src_index`` (1-based)."""
        role = self.role(node)
        if role == "source":
            return self.router(self.strip[node] - 1, 1)
        if role == "router":
            k = (node - 2 * self.n) % self.ell + 1
            row = (node - 2 * self.n) // self.ell
            return self.router(row, k + 1) if k < self.ell else self.destination(src_index)
        raise ValueError("destinations do not forward")


def build_layout(n: int) -> NetworkLayout:
    ell = math.isqrt(n) if n > 0 else 0
    if n < 4 or ell * ell != n or ell % 2:
        raise ConfigurationError(f"n = {n} is not a perfect square with an even root")
    idx = np.arange(1, n + 1)
    src = np.column_stack([np.zeros(n), idx / n])
    dst = np.column_stack([np.ones(n), idx / n])
    jj, ii = np.meshgrid(np.arange(ell), np.arange(ell), indexing="ij")
    routers = np.column_stack([(1 / (2 * ell) + ii.ravel() / ell), (1 / (2 * ell) + jj.ravel() / ell)])
    pos = np.vstack([src, dst, routers])
    radius = np.concatenate([np.full(n, math.sqrt(2) / (2 * ell)), np.zeros(n), np.full(n, 1.0 / ell)])
    strip_sd = (idx - 1) // ell + 1
    strip = np.concatenate([strip_sd, strip_sd, jj.ravel() + 1])
    group = np.concatenate([np.zeros(n, int), np.full(n, -1), (ii.ravel() + 1) % 3])
    for a in (pos, radius, strip, group):
        a.setflags(write=False)
    return NetworkLayout(n, ell, pos, radius, strip, group)


# -- schedule ----------------------------------------------------------------


class Packet(NamedTuple):
    src_index: int
    injected_at: int
    bits: int


class Transmission(NamedTuple):
    sender: int
    receiver: int
    packet: Packet


@dataclass
class ScheduleState:
    layout: NetworkLayout
    R: int
    t: int = 0
    tau: np.ndarray = None
    queues: dict = field(default_factory=dict)
    rr: np.ndarray = None
    injected: np.ndarray = None
    delivered: np.ndarray = None
    inject: bool = True

    def __post_init__(self):
        ell, n = self.layout.ell, self.layout.n
        if self.tau is None:
            self.tau = np.zeros(ell + 1, dtype=np.int64)  # index 0 unused
        if self.rr is None:
            self.rr = np.zeros(ell + 1, dtype=np.int64)
        if self.injected is None:
            self.injected = np.zeros(n, dtype=np.int64)
        if self.delivered is None:
            self.delivered = np.zeros(n, dtype=np.int64)

    def in_flight(self) -> int:
        return sum(len(q) for q in self.queues.values())


@dataclass
class TransportAudit:
    collisions: int = 0
    out_of_range: int = 0
    drops: int = 0
    max_queue: int = 0
    transmissions: int = 0

    def ok(self) -> bool:
        return self.collisions == 0 and self.out_of_range == 0 and self.drops == 0 and self.max_queue <= 1


def active_strips(layout: NetworkLayout, t: int) -> list[int]:
    """Even slots serve even strips, odd slots odd strips."""
    return [i for i in range(1, layout.ell + 1) if i % 2 == t % 2]


def plan_slot(layout: NetworkLayout, state: ScheduleState) -> list[Transmission]:
    """Transmissions allowed in slot ``state.t`` (does not mutate the state)."""
    out = []
    for i in active_strips(layout, state.t):
        g = int(state.tau[i] % 3)
        row = i - 1
        for k in range(1, layout.ell + 1):
            r = layout.router(row, k)
            if k % 3 == g and state.queues.get(r):
                out.append(Transmission(r, layout.next_hop(r, state.queues[r][0].src_index), state.queues[r][0]))
        if g == 0 and state.inject:
            srcs = layout.strip_sources(i)
            s = srcs[int(state.rr[i] % layout.ell)]
            pkt = Packet(s + 1, state.t, state.R)
            out.append(Transmission(s, layout.next_hop(s, s + 1), pkt))
    return out


def check_reception(layout: NetworkLayout, txs: list[Transmission]) -> tuple[list[bool], int, int]:
    """Apply the range rule: (a) receiver within the sender's radius, (b) no other
    sender has the receiver inside its radius.  Returns (success flags, #out of range, #collisions)."""
    if not txs:
        return [], 0, 0
    pos = layout.positions
    senders = np.array([t.sender for t in txs])
    receivers = np.array([t.receiver for t in txs])
    d = np.linalg.norm(pos[senders][:, None, :] - pos[receivers][None, :, :], axis=2)  # [sender, receiver]
    rad = layout.radius[senders]
    in_range = np.diag(d) <= rad * (1 + _RANGE_RTOL)
    hit = d < rad[:, None] * (1 - _RANGE_RTOL)
    np.fill_diagonal(hit, False)
    clash = hit.any(axis=0)
    ok = in_range & ~clash
    return ok.tolist(), int((~in_range).sum()), int(clash.sum())


def step_schedule(layout: NetworkLayout, state: ScheduleState, audit: TransportAudit,
                  fault: Callable | None = None) -> list[Transmission]:
    """Run one slot: plan, optionally perturb via ``fault``, deliver, advance clocks."""
    txs = plan_slot(layout, state)
    if fault is not None:
        txs = list(fault(state.t, txs, layout, state))
    ok, oor, clash = check_reception(layout, txs)
    audit.transmissions += len(txs)
    audit.out_of_range += oor
    audit.collisions += clash
    moved = []
    for tx, good in zip(txs, ok):
        role = layout.role(tx.sender)
        if role == "source":
            state.injected[tx.sender] += tx.packet.bits
        else:
            q = state.queues.get(tx.sender)
            if q and q[0] is tx.packet:
                q.pop(0)
        if good:
            moved.append(tx)
        else:
            audit.drops += 1
    for tx in moved:
        if layout.role(tx.receiver) == "destination":
            state.delivered[tx.receiver - layout.n] += tx.packet.bits
        else:
            state.queues.setdefault(tx.receiver, []).append(tx.packet)
    if state.queues:
        audit.max_queue = max(audit.max_queue, max(len(q) for q in state.queues.values()))
    for i in active_strips(layout, state.t):
        if state.inject and state.tau[i] % 3 == 0:
            state.rr[i] += 1
        state.tau[i] += 1
    state.t += 1
    return txs


@dataclass(frozen=True)
class TransportReport:
    n: int
    R: int
    slots: int
    period: int
    drain_slots: int
    injected_bits: list
    delivered_bits: list
    goodput: Fraction
    expected_goodput: Fraction
    audit: dict

    def to_dict(self) -> dict:
        d = asdict(self)
        d["goodput"] = str(self.goodput)
        d["expected_goodput"] = str(self.expected_goodput)
        return d


def schedule_period(layout: NetworkLayout) -> int:
    return 6 * layout.ell


def run_transport(layout: NetworkLayout, T: int, R: int, *, fault: Callable | None = None,
                  strict: bool = True) -> TransportReport:
    """Simulate T slots of injection, then drain; goodput is injected bits per node per slot.

    With ``strict`` any audit failure raises :class:`SchedulerInvariantError`.
    """
    period = schedule_period(layout)
    if T <= 0 or T % period:
        raise ConfigurationError(f"T = {T} must be a positive multiple of the period {period}")
    if R < 1 or int(R) != R:
        raise ConfigurationError("R must be a positive integer number of bits")
    state = ScheduleState(layout, int(R))
    audit = TransportAudit()
    for _ in range(T):
        step_schedule(layout, state, audit, fault)
    state.inject = False
    drain = 0
    while state.in_flight() and drain < 10 * period:
        step_schedule(layout, state, audit, fault)
        drain += 1
    per_node = {int(v) for v in state.injected}
    report = TransportReport(
        n=layout.n, R=int(R), slots=T, period=period, drain_slots=drain,
        injected_bits=state.injected.tolist(), delivered_bits=state.delivered.tolist(),
        goodput=Fraction(int(state.delivered.min()), T),
        expected_goodput=Fraction(int(R), 6 * layout.ell), audit=asdict(audit))
    if strict:
        if audit.collisions:
            raise SchedulerInvariantError("collision", f"{audit.collisions} receptions hit by interference")
        if audit.out_of_range:
            raise SchedulerInvariantError("range", f"{audit.out_of_range} transmissions out of range")
        if audit.drops:
            raise SchedulerInvariantError("drop", f"{audit.drops} packets lost")
        if audit.max_queue > 1:
            raise SchedulerInvariantError("queue", f"a router held {audit.max_queue} packets")
        if len(per_node) != 1 or not np.array_equal(state.injected, state.delivered):
            raise SchedulerInvariantError("delivery", "injected and delivered bits differ")
    return report


def collision_fault(at_slot: int = 0) -> Callable:
    """Test hook: from ``at_slot`` on, in the first slot where an idle source or router
    strictly covers a live receiver, that node transmits along its own route; the
    overlap must register as a collision.  Fires once."""
    fired = []

    def fault(t, txs, layout, state):
        if fired or t < at_slot or not txs:
            return txs
        busy = {tx.sender for tx in txs} | {tx.receiver for tx in txs}
        cand = np.concatenate([np.arange(layout.n), np.arange(2 * layout.n, 3 * layout.n)])
        cand = cand[~np.isin(cand, list(busy))]
        for tx in txs:
            d = np.linalg.norm(layout.positions[cand] - layout.positions[tx.receiver], axis=1)
            cover = d < layout.radius[cand] * (1 - 2 * _RANGE_RTOL)
            if cover.any():
                rogue = int(cand[np.argmax(cover)])
                fired.append(t)
                return list(txs) + [Transmission(rogue, layout.next_hop(rogue, 1), Packet(0, t, 0))]
        return txs

    return fault


# -- chain coding ------------------------------------------------------------


def link_bits_per_sample(R: int, n: int) -> Fraction:
    """Delivered bits per node per slot, R / (6 sqrt(n)); one sample per slot."""
    ell = math.isqrt(n)
    return Fraction(int(R), 6 * ell)


def levels_for_budget(R: int, n: int) -> int:
    """Largest index count k with log2(k) <= R / (6 sqrt n), decided exactly."""
    bits = link_bits_per_sample(R, n)
    num, den = bits.numerator, bits.denominator
    k = max(1, int(2.0 ** float(bits)))
    while k**den > 2**num:
        k -= 1
    while (k + 1) ** den <= 2**num:
        k += 1
    return k


@dataclass(frozen=True)
class ChainRunReport:
    n: int
    sigma: float
    R_link_bits: int
    bits_per_sample: float
    levels: int
    rate_nats: float
    slots: int
    seed: int | None
    s: float
    D: np.ndarray
    D_stderr: np.ndarray
    alpha: np.ndarray
    alpha_stderr: np.ndarray
    errors: np.ndarray
    p_err: np.ndarray
    p_n: float
    alpha_n: float
    beta_n: float
    excess_ratio: float
    excess_ratio_stderr: float
    error_free_slots: np.ndarray
    forced_error_at: int | None = None
    xhat: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def positions(self) -> np.ndarray:
        return np.arange(1, self.n + 1) / self.n

    @property
    def D_end(self) -> float:
        return float(self.D[-1])

    def to_dict(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            if k != "xhat":
                out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out

    def rows(self):
        """Per-node rows: m, u, D_mn, p_err_m, errors_observed."""
        for m in range(1, self.n + 1):
            yield m, m / self.n, float(self.D[m - 1]), float(self.p_err[m - 1]), int(self.errors[m - 1])


def _jackknife_ratio(num, den, blocks):
    """Ratio of sums with a delete-one-block jackknife standard error."""
    T = num.shape[0]
    B = max(2, min(blocks, T))
    edges = np.linspace(0, T, B + 1).astype(int)
    nb = np.array([num[a:b].sum() for a, b in zip(edges[:-1], edges[1:])])
    db = np.array([den[a:b].sum() for a, b in zip(edges[:-1], edges[1:])])
    full = nb.sum() / db.sum()
    loo = (nb.sum() - nb) / (db.sum() - db)
    se = math.sqrt((B - 1) / B * np.sum((loo - loo.mean()) ** 2))
    return float(full), float(se)


def chain_code(field: BrownianField, R: int, *, force_error_at: int | None = None,
               blocks: int = 20, scale: Callable | None = None) -> ChainRunReport:
    """Code every node's block of slots, decoding node m against node m-1's reconstruction.

    Node 1 has no predecessor and uses a k-level Lloyd-Max quantizer for
    N(0, sigma^2/n).  Nodes m >= 2 use the scalar codec Z / kZ with
    s = scale_schedule(sqrt(1 - 1/m), sigma sqrt(m/n)).  k is the largest
    index count whose log2 fits the delivered R/(6 sqrt n) bits per sample.
    A decoding error at node m is a change of the coarse offset
    x_hat_m - Q_{sZ}(x_m) relative to node m-1; ``force_error_at`` adds one
    coarse period to node j's reconstruction in every slot (test hook).
    ``scale(rho, sigma_x, k)`` replaces the scale schedule when given.
    """
    n, sigma, T = field.n, field.sigma, field.slots
    ell = math.isqrt(n)
    if ell * ell != n or ell % 2:
        raise ConfigurationError(f"n = {n} is not a perfect square with an even root")
    if force_error_at is not None and not 2 <= force_error_at <= n:
        raise ConfigurationError("force_error_at must name a side-information node 2..n")
    bits = link_bits_per_sample(R, n)
    k = levels_for_budget(R, n)
    if k < 2:
        raise ConfigurationError(f"R/(6 sqrt n) = {float(bits):.4g} bits per sample leaves fewer than 2 indices")
    Z = make_lattice("Z")
    kappa = scaling_similarity(Z, k)
    node1 = _codec.lloyd_max_gaussian(k, sigma / math.sqrt(n))

    xhat = np.zeros((T, n))
    base_mse = np.zeros((T, n))
    jump = np.zeros((T, n))
    x1 = field.node(1)
    xhat[:, 0] = node1.decode(node1.encode(x1))
    base_mse[:, 0] = (x1 - xhat[:, 0]) ** 2
    offset_prev = np.zeros(T)
    s = 0.0
    for m in range(2, n + 1):
        rho_m, sigma_m = math.sqrt(1.0 - 1.0 / m), sigma * math.sqrt(m / n)
        s = _codec.scale_schedule(rho_m, sigma_m) if scale is None else float(scale(rho_m, sigma_m, k))
        if not s > 0:
            raise ConfigurationError(f"scale must be positive, got {s!r}")
        q = _codec.make_wzlvq(Z, kappa, s)
        x = field.node(m)[:, None]
        fine = q.fine.nearest(x)[:, 0]
        rec = _codec.decode(q, _codec.encode(q, x), xhat[:, m - 2][:, None])[:, 0]
        if force_error_at == m:
            rec = rec + k * s
        # coarse offset of the reconstruction, in coarse periods k*s
        offset = np.rint((rec - fine) / (k * s))
        jump[:, m - 1] = (offset - offset_prev) * (k * s)
        offset_prev = offset
        xhat[:, m - 1] = rec
        base_mse[:, m - 1] = (x[:, 0] - fine) ** 2

    X = field.samples
    se = (X - xhat) ** 2
    D = se.mean(axis=0)
    D_se = se.std(axis=0, ddof=1) / math.sqrt(T) if T > 1 else np.zeros(n)
    err = jump != 0
    clean = ~np.cumsum(err, axis=1).astype(bool)
    clean_count = clean.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        alpha = (se * clean).sum(axis=0) / clean_count
        alpha_sq = (se * se * clean).sum(axis=0) / clean_count
        alpha_se = np.sqrt(np.maximum(alpha_sq - alpha * alpha, 0.0) / np.maximum(clean_count - 1, 1))
    errors = err.sum(axis=0)
    n_err = int(errors[1:].sum())
    p_n = n_err / (T * (n - 1)) if n > 1 else 0.0
    beta_n = float(np.sum(jump[err] ** 2) / n_err) if n_err else 0.0
    alpha_n = float(np.nanmean(alpha[1:])) if n > 1 else float(alpha[0])
    num = (se[:, 1:] - base_mse[:, 1:]).sum(axis=1)
    den = base_mse[:, 1:].sum(axis=1)
    ratio, ratio_se = _jackknife_ratio(num, den, blocks)
    return ChainRunReport(
        n=n, sigma=sigma, R_link_bits=int(R), bits_per_sample=float(bits), levels=k,
        rate_nats=math.log(k), slots=T, seed=field.seed, s=float(s),
        D=D, D_stderr=D_se, alpha=alpha, alpha_stderr=alpha_se, errors=errors, p_err=errors / T, p_n=p_n,
        alpha_n=alpha_n, beta_n=beta_n, excess_ratio=ratio, excess_ratio_stderr=ratio_se,
        error_free_slots=clean_count, forced_error_at=force_error_at, xhat=xhat)


@dataclass(frozen=True)
class InterpolationProfile:
    u: np.ndarray
    D_u: np.ndarray
    D_u_stderr: np.ndarray
    bound: np.ndarray
    left_node: np.ndarray


def interpolate(report: ChainRunReport, field: BrownianField, grid, seed: int) -> InterpolationProfile:
    """Zero-order-hold distortion D_u against a simulated truth between samples.

    Between nodes a = (m-1)/n and b = m/n the field is filled in with a
    Brownian bridge conditioned on the stored samples; the estimate is
    x_hat at a (x_hat_0 = 0).  ``bound`` is D_{(m-1)/n} + sigma^2/n
    (D_0 = 0) per grid point.
    """
    if report.xhat is None:
        raise ValueError("report carries no reconstructions")
    n, sigma = field.n, field.sigma
    u = np.asarray(grid, dtype=np.float64)
    if np.any((u < 0) | (u > 1)):
        raise ValueError("grid points must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    X = np.concatenate([np.zeros((field.slots, 1)), field.samples], axis=1)
    Xh = np.concatenate([np.zeros((field.slots, 1)), report.xhat], axis=1)
    D_nodes = np.concatenate([[0.0], report.D])
    D_u = np.empty(u.size)
    se = np.empty(u.size)
    left = np.empty(u.size, dtype=np.int64)
    for j, uj in enumerate(u):
        pos = uj * n
        m = int(math.floor(pos + 1e-12))
        if abs(pos - round(pos)) <= 1e-12:
            m = int(round(pos))
            err = (X[:, m] - Xh[:, m]) ** 2
        else:
            a, b = m / n, (m + 1) / n
            w = (uj - a) / (b - a)
            sd = sigma * math.sqrt((uj - a) * (b - uj) / (b - a))
            truth = X[:, m] + w * (X[:, m + 1] - X[:, m]) + sd * rng.standard_normal(field.slots)
            err = (truth - Xh[:, m]) ** 2
        left[j] = m
        D_u[j] = err.mean()
        se[j] = err.std(ddof=1) / math.sqrt(err.size)
    bound = D_nodes[left] + sigma**2 / n
    return InterpolationProfile(u, D_u, se, bound, left)


def excess_distortion_model(m, p_n: float, alpha_n, beta_n: float):
    """alpha + beta m p (1 + (m-1) p): errors before node m adding up coherently."""
    if not 0 <= p_n <= 1:
        raise ValueError("p_n must lie in [0, 1]")
    m = np.asarray(m, dtype=np.float64)
    return alpha_n + beta_n * m * p_n * (1.0 + (m - 1.0) * p_n)
