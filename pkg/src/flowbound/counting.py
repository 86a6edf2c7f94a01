"""Closed-form counts and probability bounds for the trajectory-pairing
graph, with exhaustive and Monte Carlo oracles that certify them.

Fix a terminating state x.  A *parent trajectory* for the parent p = x - a
reaches p and ends elsewhere; a *compatible trajectory* for p passes
through some proper subset s of p, immediately adds a, and ends elsewhere.
One trajectory of each kind yields an upper bound on R(x), so the pairing
graph on all trajectories has one edge per (parent trajectory, compatible
trajectory) pair, per parent.  Everything here counts those edges, the
pairs of edges sharing a vertex, and the probability that a uniformly
sampled trajectory set contains at least one edge.
"""

from __future__ import annotations

import decimal
import math
from dataclasses import dataclass
from itertools import combinations, permutations

import numpy as np

from . import bitset
from .dag import EnumerationCapError
from .validation import as_rng

ORACLE_TRAJECTORY_CAP = 100_000


def _check_half(n: int, c: int) -> int:
    if c < 1 or n < 1:
        raise ValueError(f"need positive N and C, got N={n}, C={c}")
    if 2 * c > n + 1:
        raise ValueError(f"C={c} exceeds half the ground set for N={n}")
    return c - 1


def trajectory_count(n: int, c: int) -> int:
    """N!/(N-C)!, the number of distinct trajectories."""
    return math.perm(n, c)


def lambda_count(n: int, c: int) -> int:
    """Trajectories through one fixed parent of x that end elsewhere: K!(N-K-1)."""
    k = _check_half(n, c)
    return math.factorial(k) * (n - k - 1)


def alpha_count(n: int, c: int) -> int:
    """Trajectories through any of the C parents of x, ending elsewhere:
    (K+1)!(N-K-1).  A trajectory's states are nested, so it meets at most
    one parent and the per-parent counts add without overlap."""
    k = _check_half(n, c)
    return math.factorial(k + 1) * (n - k - 1)


def beta_count(n: int, c: int) -> int:
    """Compatible trajectories for one fixed parent: prod_{i<K}(N-i) - (K+1)!."""
    k = _check_half(n, c)
    return math.perm(n, k) - math.factorial(k + 1)


def phi_count(n: int, c: int) -> int:
    """Trajectories compatible with two fixed parents at once (and passing
    through no parent of x): 2(K-1)! [ binom(N, K-1) - (N-K)K(K-1)/2 - K ].

    Zero for K < 3: with K=1 both missing elements must be added, forcing
    the trajectory to end in x; with K=2 the bracket cancels term by term.
    """
    k = _check_half(n, c)
    if k < 1:
        return 0
    bracket = math.comb(n, k - 1) - (n - k) * k * (k - 1) // 2 - k
    return 2 * math.factorial(k - 1) * bracket


def phi_count_alternate(n: int, c: int) -> int:
    """A collapsed algebraic form of the two-parent compatible count,
    2 prod_{i<=K}(N-i) - K!((N-K)(K-1) - 2).

    Retained only as a diagnostic column for ``verify-counts``: it does not
    agree with :func:`phi_count` or with exhaustive enumeration (already at
    K=1 it gives 2N(N-1)+2 instead of 0), so nothing downstream uses it.
    """
    k = _check_half(n, c)
    return 2 * math.perm(n, k + 1) - math.factorial(k) * ((n - k) * (k - 1) - 2)


def edge_count(n: int, c: int) -> int:
    """Edges of the pairing graph: alpha * beta ordered parent/compatible pairs."""
    return alpha_count(n, c) * beta_count(n, c)


def shared_vertex_pair_count(n: int, c: int) -> int:
    """Unordered pairs of pairing-graph edges that share a vertex.

    Same-parent pairs share either the parent-side or compatible-side
    trajectory; cross-parent pairs share a trajectory compatible with both
    parents.  The total is half the dependency factor used by
    :func:`pairwise_dependency`.
    """
    k = _check_half(n, c)
    lam, beta, phi = lambda_count(n, c), beta_count(n, c), phi_count(n, c)
    same_parent = (k + 1) * (math.comb(lam, 2) * beta + math.comb(beta, 2) * lam)
    cross_parent = math.comb(k + 1, 2) * lam * lam * phi
    return same_parent + cross_parent


def complete_shared_pair_counts(n: int, c: int) -> tuple[int, int]:
    """Unordered pairs of distinct pairing-graph edges sharing trajectories,
    split by overlap size: (pairs sharing both vertices, pairs sharing one).

    :func:`shared_vertex_pair_count` reproduces a taxonomy that misses
    three families: any two trajectories through *different* parents
    support one edge per parent with the same two endpoints (both-vertex
    pairs); cross-parent pairs sharing a through-parent compatible
    trajectory; and pairs where one edge's parent-side trajectory is the
    other edge's compatible side.  This function counts everything, which
    is what a dependency-based probability bound actually needs.
    """
    k = _check_half(n, c)
    lam, beta, phi = lambda_count(n, c), beta_count(n, c), phi_count(n, c)
    both = math.comb(k + 1, 2) * lam * lam
    same_parent = (k + 1) * (math.comb(lam, 2) * beta + math.comb(beta, 2) * lam)
    compat_shared = math.comb(k + 1, 2) * lam * lam * (phi + (k - 1) * lam)
    cross_role = (k + 1) * k * lam * lam * (beta - 1)
    return both, same_parent + compat_shared + cross_role


def complete_pairwise_dependency(n: int, c: int, m: int) -> float:
    """Total dependency over all ordered pairs of distinct co-occurring
    edges: one-vertex overlaps need three trajectories present, both-vertex
    overlaps only two."""
    if m < 0:
        raise ValueError(f"m must be non-negative, got {m}")
    both, single = complete_shared_pair_counts(n, c)
    return 2.0 * (
        single * triple_inclusion_probability(n, c, m)
        + both * pair_inclusion_probability(n, c, m)
    )


def _inclusion_probability(n: int, c: int, m: int, size: int) -> float:
    """Probability that ``size`` fixed distinct trajectories all occur among
    m uniform draws, by inclusion-exclusion over the miss events.

    Evaluated in decimal arithmetic with enough digits to survive the
    alternating sum: for m much smaller than T the result is of order
    (m/T)^size, far below float64 resolution relative to the unit terms.
    """
    if m < 0:
        raise ValueError(f"m must be non-negative, got {m}")
    if m == 0:
        return 0.0
    t = trajectory_count(n, c)
    if t < size:
        return 0.0
    prec = 40 + size * len(str(t))
    with decimal.localcontext() as ctx:
        ctx.prec = prec
        total = decimal.Decimal(0)
        for j in range(size + 1):
            term = (decimal.Decimal(t - j) / decimal.Decimal(t)) ** m
            total += (-1) ** j * math.comb(size, j) * term
        return float(total)


def pair_inclusion_probability(n: int, c: int, m: int) -> float:
    """Probability that two fixed distinct trajectories both occur among m
    uniform draws: 1 - 2(1-1/T)^m + (1-2/T)^m."""
    return _inclusion_probability(n, c, m, 2)


def triple_inclusion_probability(n: int, c: int, m: int) -> float:
    """Probability that three fixed distinct trajectories all occur among m
    uniform draws: 1 - 3(1-1/T)^m + 3(1-2/T)^m - (1-3/T)^m."""
    return _inclusion_probability(n, c, m, 3)


def expected_distinct_bounds(n: int, c: int, m: int) -> float:
    """Expected number of pairing-graph edges induced by m uniform draws."""
    if m < 0:
        raise ValueError(f"m must be non-negative, got {m}")
    return edge_count(n, c) * pair_inclusion_probability(n, c, m)


def pairwise_dependency(n: int, c: int, m: int) -> float:
    """Total dependency between co-occurring shared-vertex edge pairs:
    (K+1)(lam(lam-1)beta + beta(beta-1)lam + K lam^2 phi) * p3(m),
    summing the triple-inclusion probability over ordered pairs."""
    if m < 0:
        raise ValueError(f"m must be non-negative, got {m}")
    return 2 * shared_vertex_pair_count(n, c) * triple_inclusion_probability(n, c, m)


def janson_lower_bound(n: int, c: int, m: int, dependencies: str = "stated") -> float:
    """Lower bound on P(at least one bound on x after m uniform draws).

    Janson's inequalities give P(no edge) <= min{ e^(-E+nu/2), e^(-E^2/(nu+E)) }
    for the induced-edge count with expectation E and dependency nu; the
    result is clipped into [0, 1].

    ``dependencies="stated"`` uses :func:`pairwise_dependency`, whose
    shared-pair taxonomy undercounts dependent edge pairs; the resulting
    value can exceed the true probability for small m (e.g. N=4, C=2, m=5:
    value 0.477 against a true probability of 0.328).
    ``dependencies="complete"`` uses :func:`complete_pairwise_dependency`,
    which accounts for every dependent pair and stays a valid bound in the
    same regime.
    """
    e_q = expected_distinct_bounds(n, c, m)
    if e_q <= 0.0:
        return 0.0
    if dependencies == "stated":
        nu = pairwise_dependency(n, c, m)
    elif dependencies == "complete":
        nu = complete_pairwise_dependency(n, c, m)
    else:
        raise ValueError(f"dependencies must be 'stated' or 'complete', got {dependencies!r}")
    exp_one = -e_q + nu / 2.0
    exp_two = -(e_q * e_q) / (nu + e_q)
    no_edge = min(math.exp(min(exp_one, 700.0)), math.exp(exp_two))
    return max(0.0, 1.0 - no_edge)


def expected_coverage_lower(n: int, c: int, m: int) -> float:
    """Lower bound on the expected number of terminating states holding at
    least one bound: binom(N, C) times the per-state probability bound."""
    return math.comb(n, c) * janson_lower_bound(n, c, m)


def coverage_ratio_curve(
    n: int, c: int, m_list: list[int]
) -> list[tuple[int, float]]:
    """(m, coverage-lower-bound / (mC)) pairs: bound-covered states per
    reward query.  Above 1.0 the bounds out-produce one-query-one-state."""
    out = []
    for m in m_list:
        if m == 0:
            out.append((0, 0.0))
        else:
            out.append((m, expected_coverage_lower(n, c, m) / (m * c)))
    return out


def asymptotic_rate_exponent(n: int, c: int, m: int) -> float:
    """Large-N growth-rate diagnostic for the bound probability:
    N (C-1)! (1-(C-1)/N)^(2(C-1)) (1 - e^(-m/N^C)).

    Only the shape is meaningful (the hidden constant is unknown);
    acceptance checks use the exact bound above instead.
    """
    k = c - 1
    log_nc = c * math.log(n)
    if log_nc > 700.0:
        ratio = math.exp(math.log(m) - log_nc) if m > 0 else 0.0
    else:
        ratio = m / n**c
    return n * math.factorial(k) * (1.0 - k / n) ** (2 * k) * -math.expm1(-ratio)


@dataclass(frozen=True)
class PairingGraphStats:
    """Exact pairing-graph quantities for one (N, C), from either the
    closed forms or the exhaustive oracle."""

    num_elements: int
    cardinality: int
    lam: int
    alpha: int
    beta: int
    phi: int
    edge_count: int
    shared_vertex_pairs: int

    @property
    def parent_size(self) -> int:
        return self.cardinality - 1


def closed_form_stats(n: int, c: int) -> PairingGraphStats:
    return PairingGraphStats(
        num_elements=n,
        cardinality=c,
        lam=lambda_count(n, c),
        alpha=alpha_count(n, c),
        beta=beta_count(n, c),
        phi=phi_count(n, c),
        edge_count=edge_count(n, c),
        shared_vertex_pairs=shared_vertex_pair_count(n, c),
    )


@dataclass(frozen=True)
class BoundProbabilityReport:
    """All bound-emergence quantities for one (N, C, m)."""

    m: int
    expected_bounds: float
    nu: float
    p_edge: float
    p_triple: float
    janson_lower: float
    expected_coverage_lower: float


def bound_probability_report(n: int, c: int, m: int) -> BoundProbabilityReport:
    return BoundProbabilityReport(
        m=m,
        expected_bounds=expected_distinct_bounds(n, c, m),
        nu=pairwise_dependency(n, c, m),
        p_edge=pair_inclusion_probability(n, c, m),
        p_triple=triple_inclusion_probability(n, c, m),
        janson_lower=janson_lower_bound(n, c, m),
        expected_coverage_lower=expected_coverage_lower(n, c, m),
    )


class _TrajectoryClassifier:
    """Role classification of every trajectory with respect to one
    terminating state: which parent it passes through (if any), and which
    parents it is compatible with."""

    def __init__(self, n: int, c: int, terminal: tuple[int, ...], cap: int):
        total = trajectory_count(n, c)
        if total > cap:
            raise EnumerationCapError(
                f"{total} trajectories exceed the oracle cap {cap}"
            )
        self.n, self.c = n, c
        self.terminal = terminal
        self.terminal_mask = bitset.mask_of(terminal)
        self.trajectories = list(permutations(range(n), c))
        # parent_role[i] = element a when trajectory i passes through the
        # parent x - a (and ends elsewhere), else -1.
        self.parent_role = np.full(len(self.trajectories), -1, dtype=np.int64)
        # compat_roles[i] = set of elements a with trajectory i compatible
        # for parent x - a.
        self.compat_roles: list[set[int]] = [set() for _ in self.trajectories]
        self.through_any_parent = np.zeros(len(self.trajectories), dtype=bool)
        x = set(terminal)
        for i, traj in enumerate(self.trajectories):
            ends_in_x = set(traj) == x
            prefix_k = set(traj[: c - 1])
            if prefix_k <= x:
                self.through_any_parent[i] = True
                if not ends_in_x:
                    missing = (x - prefix_k).pop()
                    self.parent_role[i] = missing
            if ends_in_x:
                continue
            seen: set[int] = set()
            for a in traj:
                if a in x:
                    parent = x - {a}
                    if seen < parent:
                        self.compat_roles[i].add(a)
                seen.add(a)

    def role_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        """(T, C) boolean indicators: parent role and compatible role per
        element of the terminal."""
        t = len(self.trajectories)
        parent = np.zeros((t, self.c), dtype=bool)
        compat = np.zeros((t, self.c), dtype=bool)
        pos = {a: j for j, a in enumerate(self.terminal)}
        for i in range(t):
            a = self.parent_role[i]
            if a >= 0:
                parent[i, pos[a]] = True
            for a in self.compat_roles[i]:
                compat[i, pos[a]] = True
        return parent, compat


def oracle_pairing_stats(
    n: int, c: int, cap: int = ORACLE_TRAJECTORY_CAP
) -> PairingGraphStats:
    """Exhaustively enumerate all trajectories for x = {0..C-1} and count
    every pairing-graph quantity directly from the definitions."""
    terminal = tuple(range(c))
    cls = _TrajectoryClassifier(n, c, terminal, cap)
    lam_by_parent = {a: 0 for a in terminal}
    beta_by_parent = {a: 0 for a in terminal}
    for i in range(len(cls.trajectories)):
        a = cls.parent_role[i]
        if a >= 0:
            lam_by_parent[int(a)] += 1
        for a in cls.compat_roles[i]:
            beta_by_parent[a] += 1
    lams = sorted(set(lam_by_parent.values()))
    betas = sorted(set(beta_by_parent.values()))
    if len(lams) != 1 or len(betas) != 1:
        raise AssertionError(
            f"per-parent counts not symmetric: lam={lam_by_parent}, beta={beta_by_parent}"
        )
    lam, beta = lams[0], betas[0]
    edges = sum(lam_by_parent[a] * beta_by_parent[a] for a in terminal)

    # Two-parent compatible trajectories, excluding any passing through a
    # parent of x (those already participate in same-parent edge pairs).
    phi_by_pair = {}
    for a, b in combinations(terminal, 2):
        count = 0
        for i in range(len(cls.trajectories)):
            if cls.through_any_parent[i]:
                continue
            if a in cls.compat_roles[i] and b in cls.compat_roles[i]:
                count += 1
        phi_by_pair[(a, b)] = count
    phis = sorted(set(phi_by_pair.values())) or [0]
    if len(phis) != 1:
        raise AssertionError(f"per-pair intersection counts not symmetric: {phi_by_pair}")
    phi = phis[0]

    same_parent = sum(
        math.comb(lam_by_parent[a], 2) * beta_by_parent[a]
        + math.comb(beta_by_parent[a], 2) * lam_by_parent[a]
        for a in terminal
    )
    cross_parent = sum(
        lam_by_parent[a] * lam_by_parent[b] * phi_by_pair[(a, b)]
        for a, b in combinations(terminal, 2)
    )
    return PairingGraphStats(
        num_elements=n,
        cardinality=c,
        lam=lam,
        alpha=sum(lam_by_parent.values()),
        beta=beta,
        phi=phi,
        edge_count=edges,
        shared_vertex_pairs=same_parent + cross_parent,
    )


def oracle_complete_shared_pairs(
    n: int, c: int, cap: int = ORACLE_TRAJECTORY_CAP
) -> tuple[int, int]:
    """Exhaustive (both-vertex, one-vertex) dependent edge-pair counts.

    Materializes every pairing-graph edge for x = {0..C-1}; pairs sharing
    both endpoints are found by grouping edges on their vertex set, pairs
    sharing exactly one come from per-trajectory incidence degrees.
    """
    terminal = tuple(range(c))
    cls = _TrajectoryClassifier(n, c, terminal, cap)
    t = len(cls.trajectories)
    parent_lists: dict[int, list[int]] = {a: [] for a in terminal}
    compat_lists: dict[int, list[int]] = {a: [] for a in terminal}
    for i in range(t):
        a = int(cls.parent_role[i])
        if a >= 0:
            parent_lists[a].append(i)
        for a in cls.compat_roles[i]:
            compat_lists[a].append(i)
    degree = np.zeros(t, dtype=np.int64)
    pair_multiplicity: dict[tuple[int, int], int] = {}
    for a in terminal:
        p_list, c_list = parent_lists[a], compat_lists[a]
        for i in p_list:
            degree[i] += len(c_list)
        for j in c_list:
            degree[j] += len(p_list)
        for i in p_list:
            for j in c_list:
                key = (i, j) if i < j else (j, i)
                pair_multiplicity[key] = pair_multiplicity.get(key, 0) + 1
    both = sum(math.comb(v, 2) for v in pair_multiplicity.values())
    sharing_any_weighted = int(sum(math.comb(int(d), 2) for d in degree))
    single = sharing_any_weighted - 2 * both
    return both, single


@dataclass(frozen=True)
class McBoundResult:
    """Monte Carlo estimates for bound emergence under uniform sampling."""

    n: int
    c: int
    m: int
    repetitions: int
    mean_bounds: float
    se_bounds: float
    p_positive: float
    se_p_positive: float
    mean_coverage: float
    se_coverage: float


def mc_bound_experiment(
    n: int,
    c: int,
    m: int,
    repetitions: int,
    seed: int | np.random.Generator,
    cap: int = ORACLE_TRAJECTORY_CAP,
) -> McBoundResult:
    """Sample m trajectories uniformly with replacement, repeatedly, and
    measure: the number of induced pairing-graph edges for the fixed
    terminal {0..C-1}, whether any edge appeared, and how many terminating
    states hold at least one bound.
    """
    if m < 0 or repetitions < 1:
        raise ValueError("need m >= 0 and repetitions >= 1")
    rng = as_rng(seed)
    total = trajectory_count(n, c)
    if total > cap:
        raise EnumerationCapError(f"{total} trajectories exceed the oracle cap {cap}")

    terminals = list(combinations(range(n), c))
    parent_mats = []
    compat_mats = []
    for terminal in terminals:
        cls = _TrajectoryClassifier(n, c, terminal, cap)
        pmat, cmat = cls.role_matrices()
        parent_mats.append(pmat)
        compat_mats.append(cmat)

    presence = np.zeros((repetitions, total), dtype=bool)
    if m > 0:
        samples = rng.integers(0, total, size=(repetitions, m))
        presence[np.arange(repetitions)[:, None], samples] = True
    presence_f = presence.astype(np.float64)

    # Edge counts for the fixed reference terminal (index 0 = {0..C-1}).
    p_counts = presence_f @ parent_mats[0]
    c_counts = presence_f @ compat_mats[0]
    bounds = (p_counts * c_counts).sum(axis=1)

    covered = np.zeros(repetitions, dtype=np.int64)
    for pmat, cmat in zip(parent_mats, compat_mats):
        has_parent = presence_f @ pmat > 0
        has_compat = presence_f @ cmat > 0
        covered += (has_parent & has_compat).any(axis=1)

    reps = repetitions
    positive = bounds > 0
    return McBoundResult(
        n=n,
        c=c,
        m=m,
        repetitions=reps,
        mean_bounds=float(bounds.mean()),
        se_bounds=float(bounds.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0,
        p_positive=float(positive.mean()),
        se_p_positive=float(positive.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0,
        mean_coverage=float(covered.mean()),
        se_coverage=float(covered.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0,
    )
