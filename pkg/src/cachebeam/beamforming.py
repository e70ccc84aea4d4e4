"""Per-slot multicast beamforming under joint-decoding MAC constraints.

A slot carries messages T_1..T_m, message j at rate R_j over a fraction f of
the transmission block.  Each served user k jointly decodes its intended
messages (the active messages containing k) treating the rest as noise, which
is achievable iff for every nonempty subset pi of its intended set

    sum_{j in pi} R_j  <=  f * log2(1 + sum_{j in pi} SINR_k_j),

    SINR_k_j = |h_k^H w_j|^2 / (sum_{i interferes k} |h_k^H w_i|^2 + sigma_k^2).

`build_slot_problem` enumerates those 2^c - 1 subset constraints per user.
`sca_solve` minimizes total transmit power sum_j ||w_j||^2 subject to them by
successive convex approximation: each constraint is rewritten with the
received signal powers lower-bounded by their tangents at the current point,
giving a second-order cone subproblem that is solved exactly.  Infeasible
starts are handled with nonnegative constraint slacks whose penalty weight
grows geometrically until the iterate is feasible (feasible-point pursuit);
once feasible the weight freezes, making the subproblem objective
non-increasing from one iteration to the next.

Internally channels are normalized per user (unit direction, noise scaled by
1/||h_k||^2) and powers by a power-of-four scale factor, so the solves are
well conditioned even when path loss spreads received powers over many orders
of magnitude, and the returned beamformers scale exactly with the data.
Constraint slacks are reported in these channel-normalized units; margins and
powers are physical.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import NamedTuple

import numpy as np

from .channel import ChannelRealization
from .coded import UserSet
from .scheduling import Slot
from .socp import ConeDims, SolverError, solve_cone_lp


class BeamformingError(RuntimeError):
    """The SCA loop could not complete (subproblem failure or bad data)."""


@dataclass(frozen=True)
class MacConstraint:
    """One joint-decoding constraint: user `user` and a subset of its messages.

    `subset` holds indices into the slot's message list; `threshold` is the
    SINR-sum target 2^(rate_sum / fraction) - 1.
    """

    user: int
    subset: tuple[int, ...]
    rate_sum: float
    threshold: float


@dataclass(frozen=True)
class SlotProblem:
    """Power minimization data for one slot.

    `intended[k-1]` / `interference[k-1]` hold message indices for user k;
    interference for a user is every active message it is not a member of,
    independent of which constraint subset is considered.
    """

    messages: tuple[UserSet, ...]
    fraction: float
    h: np.ndarray
    noise_w: np.ndarray
    intended: tuple[tuple[int, ...], ...]
    interference: tuple[tuple[int, ...], ...]
    served: tuple[int, ...]
    constraints: tuple[MacConstraint, ...]

    @property
    def num_messages(self) -> int:
        return len(self.messages)

    @property
    def num_antennas(self) -> int:
        return self.h.shape[1]


def build_slot_problem(slot: Slot, chan: ChannelRealization, noise_w) -> SlotProblem:
    """Enumerate the MAC constraints of a slot for the given channel.

    `noise_w` is a scalar or per-user vector of noise powers in watts.  Users
    appearing in no active message are ignored.  Raises ValueError when the
    slot fraction is not positive or a rate target overflows.
    """
    if slot.blocklength_fraction <= 0:
        raise ValueError(f"slot fraction must be positive, got {slot.blocklength_fraction}")
    K = chan.h.shape[0]
    noise = np.broadcast_to(np.asarray(noise_w, dtype=float), (K,)).copy()
    if np.any(noise <= 0):
        raise ValueError("noise powers must be positive")
    if any(u > K for msg in slot.messages for u in msg):
        raise ValueError("slot references a user without a channel row")
    intended = []
    interference = []
    served = []
    constraints: list[MacConstraint] = []
    for k in range(1, K + 1):
        mine = tuple(j for j, msg in enumerate(slot.messages) if k in msg)
        intended.append(mine)
        interference.append(tuple(j for j, msg in enumerate(slot.messages) if k not in msg)
                            if mine else ())
        if not mine:
            continue
        served.append(k)
        for size in range(1, len(mine) + 1):
            for subset in combinations(mine, size):
                rate_sum = float(sum(slot.rates[j] for j in subset))
                exponent = rate_sum / slot.blocklength_fraction
                if exponent >= 1024.0:  # 2^1024 overflows float64
                    raise ValueError(
                        f"rate target {rate_sum} over fraction {slot.blocklength_fraction} overflows"
                    )
                threshold = 2.0 ** exponent - 1.0
                constraints.append(MacConstraint(k, subset, rate_sum, threshold))
    return SlotProblem(
        messages=tuple(slot.messages),
        fraction=float(slot.blocklength_fraction),
        h=np.array(chan.h, dtype=complex),
        noise_w=noise,
        intended=tuple(intended),
        interference=tuple(interference),
        served=tuple(served),
        constraints=tuple(constraints),
    )


@dataclass(frozen=True)
class ScaSettings:
    """Knobs for the SCA loop and its convex subproblems."""

    max_outer_iterations: int = 50
    power_rel_tolerance: float = 1e-5
    feasibility_tolerance: float = 1e-6
    initial_penalty: float = 1.0
    penalty_growth: float = 10.0
    penalty_cap: float = 1e6
    subproblem_tolerance: float = 1e-8
    subproblem_max_iterations: int = 100


@dataclass(frozen=True)
class ScaTraceRow:
    iteration: int
    penalty: float
    power_w: float
    slack_sum: float
    min_margin: float
    subproblem_status: str
    subproblem_iterations: int


@dataclass
class BeamformingSolution:
    """Result of `sca_solve` for one slot.

    `status` is 'converged' (feasible, power stabilized), 'iteration_limit',
    'stationary_infeasible' (penalty capped and the penalized objective
    stalled while still infeasible) or 'subproblem_failure'.  `margins` align
    with the problem's constraints, in bits/s/Hz; `min_margin >= -feasibility
    tolerance` whenever status is 'converged'.
    """

    beamformers: np.ndarray
    power_w: float
    status: str
    iterations: int
    margins: np.ndarray
    min_margin: float
    slack_sum: float
    final_penalty: float
    objective_monotone: bool
    trace: tuple[ScaTraceRow, ...]

    @property
    def converged(self) -> bool:
        return self.status == "converged"


class TotalPower(NamedTuple):
    watts: float
    dbw: float


def total_average_power(sched, slot_powers) -> TotalPower:
    """Blocklength-weighted average transmit power of a schedule, watts and dBW."""
    powers = [float(p) for p in slot_powers]
    if len(powers) != len(sched.slots):
        raise ValueError("one slot power per slot required")
    watts = sum(slot.blocklength_fraction * p for slot, p in zip(sched.slots, powers))
    return TotalPower(watts, 10.0 * np.log10(watts) if watts > 0 else -np.inf)


class MarginReport(NamedTuple):
    margins: np.ndarray
    min_margin: float
    sinr_sums: np.ndarray


def verify_solution(prob: SlotProblem, beamformers: np.ndarray) -> MarginReport:
    """Recompute every MAC constraint margin for physical beamformers.

    margin = fraction * log2(1 + sum of SINRs over the subset) - rate sum;
    nonnegative margins (up to tolerance) mean the rates are decodable.
    This is a direct evaluation, independent of the solver internals.
    """
    W = np.asarray(beamformers)
    if W.shape != (prob.num_messages, prob.num_antennas):
        raise ValueError(f"beamformers must have shape {(prob.num_messages, prob.num_antennas)}")
    # received power of message j at user k: |h_k^H w_j|^2
    rx = np.abs(np.conj(prob.h) @ W.T) ** 2
    margins = np.empty(len(prob.constraints))
    sinr_sums = np.empty(len(prob.constraints))
    denom = {}
    for k in prob.served:
        interf = prob.interference[k - 1]
        denom[k] = prob.noise_w[k - 1] + (rx[k - 1, list(interf)].sum() if interf else 0.0)
    for i, con in enumerate(prob.constraints):
        s = rx[con.user - 1, list(con.subset)].sum() / denom[con.user]
        sinr_sums[i] = s
        margins[i] = prob.fraction * np.log2(1.0 + s) - con.rate_sum
    return MarginReport(margins, float(margins.min()) if len(margins) else np.inf, sinr_sums)


def _channel_matrix(hrow: np.ndarray) -> np.ndarray:
    """Real 2 x 2Nt map M with M @ [Re w; Im w] = [Re h^H w; Im h^H w]."""
    hr, hi = hrow.real, hrow.imag
    return np.block([[hr[None, :], hi[None, :]], [-hi[None, :], hr[None, :]]])


@dataclass(frozen=True)
class _Canonical:
    """Channel-normalized problem data shared by the subproblem builder."""

    hhat: np.ndarray          # unit-norm channel rows
    nhat: np.ndarray          # noise / ||h||^2 / beta^2
    beta: float               # power-of-two amplitude scale, w = beta * w_canonical
    user_m: dict[int, np.ndarray]


def _canonicalize(prob: SlotProblem) -> _Canonical:
    norms = np.linalg.norm(prob.h, axis=1)
    if any(norms[k - 1] == 0 for k in prob.served):
        raise BeamformingError("a served user has a zero channel vector")
    safe = np.where(norms > 0, norms, 1.0)
    hhat = prob.h / safe[:, None]
    ntilde = prob.noise_w / safe ** 2
    # beta^2 tracks the worst-user noise*SINR product so the canonical
    # transmit power is O(1); power-of-two keeps the rescale exact
    gamma_max = {k: 0.0 for k in prob.served}
    for con in prob.constraints:
        gamma_max[con.user] = max(gamma_max[con.user], con.threshold)
    scale = max((ntilde[k - 1] * max(gamma_max[k], 1.0) for k in prob.served),
                default=1.0)
    exponent = round(np.log2(scale) / 2.0)
    beta = 2.0 ** exponent
    nhat = ntilde / beta ** 2
    user_m = {k: _channel_matrix(hhat[k - 1]) for k in prob.served}
    return _Canonical(hhat=hhat, nhat=nhat, beta=beta, user_m=user_m)


class _SubproblemBuilder:
    """Cone-program layout for the penalized convex subproblem of one slot.

    Variables: real-embedded beamformers (2*Nt per message), one slack per
    MAC constraint, one interference-power epigraph per served user with a
    nonempty interference set, and the total-power epigraph.  Only the MAC
    rows depend on the expansion point; everything else is filled once.
    """

    def __init__(self, prob: SlotProblem, canon: _Canonical):
        self.prob = prob
        self.canon = canon
        m, Nt = prob.num_messages, prob.num_antennas
        P = len(prob.constraints)
        self.m, self.Nt, self.P = m, Nt, P
        self.w_cols = [slice(2 * Nt * j, 2 * Nt * (j + 1)) for j in range(m)]
        self.u_cols = 2 * Nt * m + np.arange(P)
        col = 2 * Nt * m + P
        self.r_col = {}
        for k in prob.served:
            if prob.interference[k - 1]:
                self.r_col[k] = col
                col += 1
        self.t_col = col
        self.n = col + 1

        soc_dims = []
        rows = 2 * P
        self.cone_rows = {}
        for k in prob.served:
            interf = prob.interference[k - 1]
            if interf:
                dim = 2 + 2 * len(interf)
                self.cone_rows[k] = rows
                soc_dims.append(dim)
                rows += dim
        self.epi_row = rows
        soc_dims.append(2 + 2 * Nt * m)
        rows += 2 + 2 * Nt * m
        self.dims = ConeDims(nonneg=2 * P, soc=tuple(soc_dims))

        G = np.zeros((rows, self.n))
        h = np.zeros(rows)
        # slack nonnegativity: s_i = u_i >= 0
        for i in range(P):
            G[i, self.u_cols[i]] = -1.0
        # MAC rows: static slack/epigraph coefficients
        for j, con in enumerate(prob.constraints):
            G[P + j, self.u_cols[j]] = -1.0
            if con.user in self.r_col:
                G[P + j, self.r_col[con.user]] = con.threshold
        # interference epigraphs: (r_k + 1, 2 M_k x_I ..., r_k - 1) in Q
        for k, row in self.cone_rows.items():
            G[row, self.r_col[k]] = -1.0
            h[row] = 1.0
            Mk = canon.user_m[k]
            for pos, idx in enumerate(self.prob.interference[k - 1]):
                G[row + 1 + 2 * pos: row + 3 + 2 * pos, self.w_cols[idx]] = -2.0 * Mk
            last = row + 1 + 2 * len(self.prob.interference[k - 1])
            G[last, self.r_col[k]] = -1.0
            h[last] = -1.0
        # total power epigraph: (t + 1, 2 x_w, t - 1) in Q
        G[self.epi_row, self.t_col] = -1.0
        h[self.epi_row] = 1.0
        sl = slice(self.epi_row + 1, self.epi_row + 1 + 2 * Nt * m)
        G[sl, : 2 * Nt * m] = -2.0 * np.eye(2 * Nt * m)
        G[self.epi_row + 1 + 2 * Nt * m, self.t_col] = -1.0
        h[self.epi_row + 1 + 2 * Nt * m] = -1.0
        self.G = G
        self.h = h
        self.c = np.zeros(self.n)
        self.c[self.t_col] = 1.0

    def update(self, wbar: np.ndarray, penalty: float):
        """Refresh the MAC rows around expansion point `wbar` (canonical units)."""
        prob, canon = self.prob, self.canon
        X = np.hstack([wbar.real, wbar.imag])           # (m, 2Nt)
        coeff = {}
        norms2 = {}
        for k in prob.served:
            Mk = canon.user_m[k]
            A = X @ Mk.T                                # (m, 2): [Re a, Im a] per message
            coeff[k] = -2.0 * (A @ Mk)                  # gradient rows of -|h^H w|^2
            norms2[k] = np.einsum("ij,ij->i", A, A)
        P = self.P
        for j, con in enumerate(prob.constraints):
            k = con.user
            total = 0.0
            for idx in con.subset:
                self.G[P + j, self.w_cols[idx]] = coeff[k][idx]
                total += norms2[k][idx]
            self.h[P + j] = -con.threshold * canon.nhat[k - 1] - total
        self.c[self.u_cols] = penalty

    def extract(self, x: np.ndarray):
        m, Nt = self.m, self.Nt
        flat = x[: 2 * Nt * m].reshape(m, 2 * Nt)
        w = flat[:, :Nt] + 1j * flat[:, Nt:]
        slacks = np.maximum(x[self.u_cols], 0.0)
        return w, slacks


@dataclass
class SubproblemSolution:
    """One convex subproblem solve: canonical beamformers, slacks and duals."""

    beamformers: np.ndarray
    slacks: np.ndarray
    power_w: float
    objective: float
    mac_duals: np.ndarray
    status: str
    iterations: int

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "near_optimal")


def _solve_subproblem(builder: _SubproblemBuilder, wbar: np.ndarray, penalty: float,
                      settings: ScaSettings) -> SubproblemSolution:
    builder.update(wbar, penalty)
    # the builder's canonical scaling usually conditions the data better than
    # Ruiz equilibration, but neither dominates: when the first attempt misses
    # the near-optimal cut, the other one typically lands well inside it
    sol = None
    for equilibrate in (False, True):
        try:
            attempt = solve_cone_lp(builder.c, builder.G, builder.h, builder.dims,
                                    tol=settings.subproblem_tolerance,
                                    max_iterations=settings.subproblem_max_iterations,
                                    equilibrate=equilibrate)
        except SolverError:
            continue
        if sol is None or (attempt.ok and not sol.ok):
            sol = attempt
        if sol.ok:
            break
    if sol is None:
        return SubproblemSolution(wbar, np.zeros(builder.P), np.nan, np.nan,
                                  np.zeros(builder.P), "factorization_failed", 0)
    if not sol.ok:
        return SubproblemSolution(wbar, np.zeros(builder.P), np.nan, np.nan,
                                  np.zeros(builder.P), sol.status, sol.iterations)
    w, slacks = builder.extract(sol.x)
    power = float(np.sum(np.abs(w) ** 2))
    duals = np.maximum(sol.z[builder.P: 2 * builder.P], 0.0)
    return SubproblemSolution(w, slacks, power, power + penalty * float(slacks.sum()),
                              duals, sol.status, sol.iterations)


def solve_convex_subproblem(prob: SlotProblem, expansion_point: np.ndarray,
                            penalty: float,
                            settings: ScaSettings | None = None) -> SubproblemSolution:
    """Solve one SCA subproblem around `expansion_point` (physical units).

    The returned beamformers and power are physical; slacks and duals are in
    channel-normalized units.  Used by `sca_solve` internally and exposed for
    verification.
    """
    settings = settings or ScaSettings()
    if penalty < 0:
        raise ValueError("penalty must be nonnegative")
    canon = _canonicalize(prob)
    builder = _SubproblemBuilder(prob, canon)
    wbar = np.asarray(expansion_point, dtype=complex) / canon.beta
    if wbar.shape != (prob.num_messages, prob.num_antennas):
        raise ValueError("expansion point shape mismatch")
    sol = _solve_subproblem(builder, wbar, penalty, settings)
    if sol.ok:
        sol.beamformers = sol.beamformers * canon.beta
        sol.power_w = sol.power_w * canon.beta ** 2
    return sol


def _default_start(prob: SlotProblem, canon: _Canonical) -> np.ndarray:
    """Matched-filter start: sum of member channel directions, scaled so the
    received power is commensurate with the largest SINR target."""
    m, Nt = prob.num_messages, prob.num_antennas
    w = np.zeros((m, Nt), dtype=complex)
    gmax = max((c.threshold for c in prob.constraints), default=1.0)
    nbar = float(np.mean([canon.nhat[k - 1] for k in prob.served])) if prob.served else 1.0
    amp = np.sqrt(max(nbar * gmax * m, 1e-12))
    for j, msg in enumerate(prob.messages):
        direction = canon.hhat[[k - 1 for k in msg], :].sum(axis=0)
        norm = np.linalg.norm(direction)
        if norm < 1e-9:
            direction = np.zeros(Nt, dtype=complex)
            direction[0] = 1.0
            norm = 1.0
        w[j] = amp * direction / norm
    return w


def sca_solve(prob: SlotProblem, settings: ScaSettings | None = None,
              initial: np.ndarray | None = None) -> BeamformingSolution:
    """Minimize slot transmit power under the MAC constraints via SCA.

    Runs convex subproblems around the running iterate, growing the slack
    penalty geometrically while the subproblem still uses its slacks or the
    iterate fails verification; the penalty stops moving once it clears the
    active dual magnitudes.  Declares 'converged' when two consecutive
    iterates verify feasible (margins above -feasibility_tolerance) and
    agree in power to power_rel_tolerance.
    """
    settings = settings or ScaSettings()
    if not prob.constraints:
        m, Nt = prob.num_messages, prob.num_antennas
        w = np.zeros((m, Nt), dtype=complex)
        report = verify_solution(prob, w)
        return BeamformingSolution(w, 0.0, "converged", 0, report.margins,
                                   report.min_margin, 0.0, settings.initial_penalty,
                                   True, ())
    canon = _canonicalize(prob)
    builder = _SubproblemBuilder(prob, canon)
    if initial is not None:
        wbar = np.asarray(initial, dtype=complex) / canon.beta
        if wbar.shape != (prob.num_messages, prob.num_antennas):
            raise ValueError("initial beamformer shape mismatch")
    else:
        wbar = _default_start(prob, canon)

    penalty = settings.initial_penalty
    trace: list[ScaTraceRow] = []
    monotone = True
    prev_obj = None          # objective at the penalty of the previous iterate
    prev_penalty = None
    prev_power = None
    prev_feasible = False
    status = "iteration_limit"
    best = None
    stalled_infeasible = 0

    for outer in range(1, settings.max_outer_iterations + 1):
        sub = _solve_subproblem(builder, wbar, penalty, settings)
        if not sub.ok:
            status = "subproblem_failure"
            if best is None:
                w_phys = wbar * canon.beta
                report = verify_solution(prob, w_phys)
                best = (w_phys, float(np.sum(np.abs(w_phys) ** 2)), report, np.nan)
            trace.append(ScaTraceRow(outer, penalty, np.nan, np.nan, np.nan,
                                     sub.status, sub.iterations))
            break
        w_phys = sub.beamformers * canon.beta
        power_phys = sub.power_w * canon.beta ** 2
        report = verify_solution(prob, w_phys)
        feasible = report.min_margin >= -settings.feasibility_tolerance
        slack_sum = float(sub.slacks.sum())
        trace.append(ScaTraceRow(outer, penalty, power_phys, slack_sum,
                                 report.min_margin, sub.status, sub.iterations))
        best = (w_phys, power_phys, report, slack_sum)

        if prev_obj is not None and prev_penalty == penalty:
            tol = 1e-6 * max(1.0, abs(prev_obj))
            if sub.objective > prev_obj + tol:
                monotone = False

        if feasible and prev_feasible and prev_power is not None:
            if abs(sub.power_w - prev_power) <= settings.power_rel_tolerance * max(prev_power, 1e-30):
                status = "converged"
                break

        # penalty escalates while the subproblem leans on its slacks or the
        # iterate fails physical verification; once lambda clears the active
        # dual magnitudes slacks stay at zero and the penalty stops moving
        new_penalty = penalty
        if slack_sum >= settings.feasibility_tolerance or not feasible:
            new_penalty = min(penalty * settings.penalty_growth,
                              settings.penalty_cap)
            if (new_penalty == penalty == settings.penalty_cap
                    and not feasible and prev_obj is not None
                    and prev_penalty == penalty
                    and abs(sub.objective - prev_obj) <= 1e-6 * max(1.0, abs(prev_obj))):
                stalled_infeasible += 1
                if stalled_infeasible >= 2:
                    status = "stationary_infeasible"
                    break
            else:
                stalled_infeasible = 0

        prev_obj = sub.objective
        prev_penalty = penalty
        prev_power = sub.power_w
        prev_feasible = feasible
        penalty = new_penalty
        wbar = sub.beamformers

    w_phys, power_phys, report, slack_sum = best
    return BeamformingSolution(
        beamformers=w_phys,
        power_w=power_phys,
        status=status,
        iterations=len(trace),
        margins=report.margins,
        min_margin=report.min_margin,
        slack_sum=slack_sum if np.isfinite(slack_sum) else 0.0,
        final_penalty=penalty,
        objective_monotone=monotone,
        trace=tuple(trace),
    )


def write_trace(trace, stream) -> None:
    """Write an SCA trace as CSV; `stream` is a path or file object."""
    own = isinstance(stream, (str, bytes))
    fh = open(stream, "w") if own else stream
    try:
        fh.write("iteration,penalty,power_w,slack_sum,min_margin,subproblem_status,subproblem_iterations\n")
        for row in trace:
            fh.write(f"{row.iteration},{row.penalty:.6g},{row.power_w:.12g},"
                     f"{row.slack_sum:.12g},{row.min_margin:.12g},"
                     f"{row.subproblem_status},{row.subproblem_iterations}\n")
    finally:
        if own:
            fh.close()
