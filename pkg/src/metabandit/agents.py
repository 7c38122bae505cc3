"""Thompson sampling policies over hierarchical task sequences.

All policies share the same within-task machinery (conjugate Gaussian or Beta
updates plus posterior sampling) and differ only in the prior they place on
each new task:

* ``ts``            widest sensible prior, identical for every task,
* ``oracle-ts``     the exact task prior centered at the true mu_star,
* ``meta-ts``       a point estimate of mu_star sampled once per task,
* ``ada-ts``        the meta-posterior marginalized into the task prior,
* ``ada-ts-forced`` ada-ts plus deterministic exploration rounds at the start
                    of a sparse subset of tasks.

Between tasks the adaptive policies absorb the task's sufficient statistics
into a meta-posterior over the task-prior mean (Gaussian families) or over
the mixture component (Bernoulli mixture family).
"""

from dataclasses import dataclass, replace
import numpy as np
from scipy.special import betaln

from . import hierarchy
from .gauss_core import mvn_sample, solve_spd, spd_inverse, symmetrize

AGNOSTIC_TS = "ts"
ORACLE_TS = "oracle-ts"
META_TS = "meta-ts"
ADA_TS = "ada-ts"
ADA_TS_FORCED = "ada-ts-forced"
MISASSIGNED_TS = "misassigned-ts"

_BASE_KINDS = (AGNOSTIC_TS, ORACLE_TS, META_TS, ADA_TS, ADA_TS_FORCED, MISASSIGNED_TS)

# Meta-prior width rescalings for the deliberately misspecified variants.
_ALIASES = {
    "ada-ts+": (ADA_TS, 3.0),
    "ada-ts-": (ADA_TS, 1.0 / 3.0),
}


class UnknownAgent(Exception):
    """Agent name not recognised."""


@dataclass(frozen=True)
class AgentKind:
    """A policy identity: base behaviour plus meta-prior width rescaling."""

    base: str
    scale: float = 1.0
    label: str = None

    def __post_init__(self):
        if self.base not in _BASE_KINDS:
            raise UnknownAgent(f"unknown agent base {self.base!r}")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.label is None:
            object.__setattr__(self, "label", self.base)

    @classmethod
    def from_name(cls, name):
        name = name.strip()
        if name in _ALIASES:
            base, scale = _ALIASES[name]
            return cls(base, scale, name)
        if name in _BASE_KINDS:
            return cls(name)
        raise UnknownAgent(f"unknown agent {name!r}")


def scale_meta_prior(spec, scale):
    """Rescale the meta-prior width by `scale` (covariance by scale**2).

    Models an agent whose believed meta-prior is too wide (scale > 1) or too
    narrow (scale < 1); the environment itself is unchanged.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    if spec.sigma_q is None:
        raise ValueError(f"family {spec.family!r} has no Gaussian meta-prior to scale")
    if scale == 1.0:
        return spec
    return replace(spec, sigma_q=scale**2 * spec.sigma_q)


# ---------------------------------------------------------------------------
# Meta-posterior over the task-prior mean (Gaussian families)
# ---------------------------------------------------------------------------


class DiagonalMetaPosterior:
    """Per-arm Gaussian belief over the task-prior mean, variances as a vector."""

    __slots__ = ("mean", "var")

    def __init__(self, mean, var):
        self.mean = np.array(mean, dtype=float)
        self.var = np.array(var, dtype=float)

    def copy(self):
        return DiagonalMetaPosterior(self.mean, self.var)

    def sample(self, rng):
        return self.mean + np.sqrt(self.var) * rng.standard_normal(self.mean.shape[0])


class FullMetaPosterior:
    """Dense Gaussian belief over the task-prior mean (linear family)."""

    __slots__ = ("mean", "cov")

    def __init__(self, mean, cov):
        self.mean = np.array(mean, dtype=float)
        self.cov = symmetrize(cov)

    def copy(self):
        return FullMetaPosterior(self.mean, self.cov)

    def sample(self, rng):
        if not np.any(self.cov):
            # Point mass: sample exactly, no jitter noise.
            return self.mean.copy()
        return mvn_sample(self.mean, self.cov, rng)


def initial_meta_posterior(spec):
    """Meta-posterior before any task: the meta-prior itself."""
    if spec.family == hierarchy.LINEAR:
        return FullMetaPosterior(spec.mu_q, spec.sigma_q)
    return DiagonalMetaPosterior(spec.mu_q, np.diag(spec.sigma_q))


def _diagonal_meta_update(meta, counts, sums, sigma0_var, noise_var):
    """Absorb per-arm counts/sums; variance form so zero-variance arms and
    zero-width task priors stay exact point masses."""
    mean = meta.mean.copy()
    var = meta.var.copy()
    # zero-variance arms are point masses: data cannot move them, and
    # skipping them keeps the stored mean bit-exact
    pulled = (counts > 0) & (var > 0)
    if np.any(pulled):
        obs_var = sigma0_var[pulled] + noise_var / counts[pulled]
        obs_mean = sums[pulled] / counts[pulled]
        denom = var[pulled] + obs_var
        mean[pulled] = (mean[pulled] * obs_var + obs_mean * var[pulled]) / denom
        var[pulled] = var[pulled] * obs_var / denom
    return DiagonalMetaPosterior(mean, var)


def end_task_gaussian(meta, summary, spec):
    """Fold one finished K-armed task into the meta-posterior.

    Each pulled arm contributes an estimate sums/counts of mu_star's arm mean
    with variance sigma_0 + noise**2 / counts; unpulled arms are untouched.
    """
    return _diagonal_meta_update(
        meta, summary.counts, summary.sums, np.diag(spec.sigma_0), spec.noise_sigma**2
    )


def end_task_semibandit(meta, summary, spec):
    """Same conjugate update as the K-armed case; counts come from subset
    membership, so each arm in a played subset counts as one pull."""
    return _diagonal_meta_update(
        meta, summary.counts, summary.sums, np.diag(spec.sigma_0), spec.noise_sigma**2
    )


def end_task_linear(meta, summary, spec):
    """Fold one finished linear task into the dense meta-posterior.

    The task contributes `gram / noise**2` of raw precision, deflated by the
    task prior: with C = gram / noise**2 the meta-precision gains
    C - C (sigma_0^{-1} + C)^{-1} C and the mean-side vector gains the same
    deflation applied to the reward-weighted features.
    """
    if not np.any(meta.cov):
        return meta.copy()  # point-mass belief: no data can move it
    noise_var = spec.noise_sigma**2
    c = summary.gram / noise_var
    b = summary.weighted / noise_var
    prior_prec = spd_inverse(spec.sigma_0)
    x = solve_spd(prior_prec + c, np.column_stack([c, b]))
    prec_inc = symmetrize(c - c @ x[:, :-1])
    shift_inc = b - c @ x[:, -1]
    prec = spd_inverse(meta.cov)
    new_prec = symmetrize(prec + prec_inc)
    new_cov = spd_inverse(new_prec)
    new_mean = solve_spd(new_prec, prec @ meta.mean + shift_inc)
    return FullMetaPosterior(new_mean, new_cov)


# ---------------------------------------------------------------------------
# Within-task sufficient statistics and posteriors
# ---------------------------------------------------------------------------


class ArmSummary:
    """Pull counts and reward sums per arm for one task."""

    __slots__ = ("counts", "sums")

    def __init__(self, num_arms):
        self.counts = np.zeros(num_arms, dtype=int)
        self.sums = np.zeros(num_arms)

    def add(self, arm, reward):
        self.counts[arm] += 1
        self.sums[arm] += reward

    def add_subset(self, rewards):
        for arm, reward in rewards.items():
            self.counts[arm] += 1
            self.sums[arm] += reward


class LinearSummary:
    """Gram matrix and reward-weighted feature sum for one task."""

    __slots__ = ("gram", "weighted")

    def __init__(self, dim):
        self.gram = np.zeros((dim, dim))
        self.weighted = np.zeros(dim)

    def add(self, feature, reward):
        self.gram += np.outer(feature, feature)
        self.weighted += feature * reward


class DiagonalTaskPosterior:
    """Independent per-arm Gaussian posterior, updated in variance form so
    zero-variance arms remain exact."""

    __slots__ = ("mean", "var")

    def __init__(self, mean, var):
        self.mean = np.array(mean, dtype=float)
        self.var = np.array(var, dtype=float)

    def copy(self):
        return DiagonalTaskPosterior(self.mean, self.var)

    def update_arm(self, arm, reward, noise_var):
        v = self.var[arm]
        denom = v + noise_var
        self.mean[arm] = (self.mean[arm] * noise_var + reward * v) / denom
        self.var[arm] = v * noise_var / denom

    def sample(self, rng):
        return self.mean + np.sqrt(self.var) * rng.standard_normal(self.mean.shape[0])

    @property
    def cov(self):
        return np.diag(self.var)


class FullTaskPosterior:
    """Dense Gaussian posterior in precision form.

    Each observation adds a rank-one precision term; mean and covariance are
    re-derived from a fresh factorization whenever read.
    """

    __slots__ = ("prec", "shift", "_mean", "_cov")

    def __init__(self, mean, cov):
        self.prec = spd_inverse(cov)
        self.shift = self.prec @ np.asarray(mean, dtype=float)
        self._mean = np.array(mean, dtype=float)
        self._cov = symmetrize(cov)

    def copy(self):
        out = FullTaskPosterior.__new__(FullTaskPosterior)
        out.prec = self.prec.copy()
        out.shift = self.shift.copy()
        out._mean = None if self._mean is None else self._mean.copy()
        out._cov = None if self._cov is None else self._cov.copy()
        return out

    def update_feature(self, feature, reward, noise_var):
        self.prec = symmetrize(self.prec + np.outer(feature, feature) / noise_var)
        self.shift = self.shift + feature * (reward / noise_var)
        self._mean = None
        self._cov = None

    @property
    def mean(self):
        if self._mean is None:
            self._mean = solve_spd(self.prec, self.shift)
        return self._mean

    @property
    def cov(self):
        if self._cov is None:
            self._cov = spd_inverse(self.prec)
        return self._cov

    def sample(self, rng):
        return mvn_sample(self.mean, self.cov, rng)


def begin_task(kind, meta, spec, rng, mu_star=None):
    """Task prior for a fresh task under the given policy.

    Gaussian families only; the mixture analogue lives in MixtureFamilyAgent.
    """
    sigma_0 = spec.sigma_0
    if kind.base in (ADA_TS, ADA_TS_FORCED):
        if isinstance(meta, DiagonalMetaPosterior):
            return DiagonalTaskPosterior(meta.mean, meta.var + np.diag(sigma_0))
        return FullTaskPosterior(meta.mean, meta.cov + sigma_0)
    if kind.base == META_TS:
        center = meta.sample(rng)
    elif kind.base == ORACLE_TS:
        if mu_star is None:
            raise ValueError("oracle-ts needs the true mu_star")
        center = np.asarray(mu_star, dtype=float)
    elif kind.base == AGNOSTIC_TS:
        if isinstance(meta, DiagonalMetaPosterior):
            return DiagonalTaskPosterior(spec.mu_q, np.diag(spec.sigma_q) + np.diag(sigma_0))
        return FullTaskPosterior(spec.mu_q, spec.sigma_q + sigma_0)
    else:
        raise UnknownAgent(f"{kind.base!r} has no Gaussian task prior")
    if isinstance(meta, DiagonalMetaPosterior):
        return DiagonalTaskPosterior(center, np.diag(sigma_0))
    return FullTaskPosterior(center, sigma_0)


def ts_select(posterior, actions, rng):
    """Sample a parameter from the posterior and play greedily against it.

    ``actions`` is the arm count (int), the feature matrix (linear), or a
    (num_arms, budget) pair (semibandit).  Ties go to the lowest index.
    """
    theta = posterior.sample(rng)
    if isinstance(actions, (int, np.integer)):
        return int(np.argmax(theta))
    if isinstance(actions, tuple):
        _, budget = actions
        return hierarchy.top_subset(theta, budget)
    return int(np.argmax(np.asarray(actions) @ theta))


def update_task_posterior(posterior, action, observation, noise_sigma):
    """Pure-functional conjugate update; returns a new posterior.

    The action/observation pairing follows the family: (arm, float) for
    K-armed, (feature vector, float) for linear, (subset, {arm: float}) for
    semibandit feedback.
    """
    out = posterior.copy()
    noise_var = noise_sigma**2
    if isinstance(out, FullTaskPosterior):
        out.update_feature(np.asarray(action, dtype=float), observation, noise_var)
        return out
    if isinstance(observation, dict):
        for arm, reward in observation.items():
            out.update_arm(arm, reward, noise_var)
        return out
    out.update_arm(int(action), float(observation), noise_var)
    return out


# ---------------------------------------------------------------------------
# Forced exploration
# ---------------------------------------------------------------------------


def exploring_tasks(m):
    """Tasks that open with forced exploration: {i*i + 1 : i = 0, 1, ...} up
    to m, a set whose size grows like sqrt(m)."""
    out = set()
    i = 0
    while i * i + 1 <= m:
        out.add(i * i + 1)
        i += 1
    return out


def covering_subsets(num_arms, budget):
    """Subsets of size `budget` that jointly cover all arms; the last one is
    padded with the first arms when the counts do not divide evenly."""
    subsets = []
    for start in range(0, num_arms, budget):
        chunk = list(range(start, min(start + budget, num_arms)))
        filler = 0
        while len(chunk) < budget:
            if filler not in chunk:
                chunk.append(filler)
            filler += 1
        subsets.append(tuple(sorted(chunk)))
    return subsets


def choose_spanning_actions(actions, floor=1e-6):
    """Pick d actions from the set that jointly span, greedily maximizing the
    smallest eigenvalue of the running Gram matrix.

    Returns (plan, eta) where eta is the smallest eigenvalue of the chosen
    Gram.  If the set cannot reach eta >= floor, falls back to the scaled
    standard basis 0.5 * e_i (played as raw feature vectors).
    """
    actions = np.asarray(actions, dtype=float)
    num, dim = actions.shape
    chosen = []
    gram = np.zeros((dim, dim))
    for _ in range(dim):
        best_idx, best_score = None, None
        for idx in range(num):
            if idx in chosen:
                continue
            cand = gram + np.outer(actions[idx], actions[idx])
            score = tuple(np.linalg.eigvalsh(cand))
            if best_score is None or score > best_score:
                best_idx, best_score = idx, score
        if best_idx is None:
            break
        chosen.append(best_idx)
        gram += np.outer(actions[best_idx], actions[best_idx])
    eta = float(np.linalg.eigvalsh(gram)[0]) if chosen else 0.0
    if eta < floor:
        basis = [0.5 * np.eye(dim)[i] for i in range(dim)]
        return basis, 0.25
    return chosen, eta


def spanning_strength(features):
    """Smallest eigenvalue of sum_i a_i a_i^T for the given exploration
    actions; feeds the per-round exploration strength into the bounds."""
    features = np.asarray(features, dtype=float)
    gram = features.T @ features
    return float(np.linalg.eigvalsh(gram)[0])


def forced_exploration_plan(s, m, spec, exploration_actions=None):
    """Opening-round actions for task s (1-based); empty if s is not an
    exploring task.

    K-armed tasks pull every arm once, linear tasks play the run's spanning
    actions, semibandit tasks play covering subsets.
    """
    if s not in exploring_tasks(m):
        return []
    if spec.family == hierarchy.LINEAR:
        if exploration_actions is None:
            raise ValueError("linear forced exploration needs chosen actions")
        return list(exploration_actions)
    if spec.family == hierarchy.SEMIBANDIT:
        return covering_subsets(spec.num_arms, spec.budget)
    return list(range(spec.num_arms))


# ---------------------------------------------------------------------------
# Bernoulli mixture variant
# ---------------------------------------------------------------------------


def _normalize_log_weights(log_w):
    top = np.max(log_w)
    return log_w - (top + np.log(np.sum(np.exp(log_w - top))))


class MixtureMetaPosterior:
    """Categorical belief over which mixture component generates the tasks."""

    __slots__ = ("log_weights", "alphas", "betas")

    def __init__(self, log_weights, alphas, betas):
        self.log_weights = _normalize_log_weights(np.array(log_weights, dtype=float))
        self.alphas = np.asarray(alphas, dtype=float)
        self.betas = np.asarray(betas, dtype=float)

    @classmethod
    def from_spec(cls, spec):
        return cls(
            np.log(spec.mixture_weights),
            spec.mixture_alphas,
            spec.mixture_betas,
        )

    @property
    def weights(self):
        return np.exp(self.log_weights)

    def copy(self):
        return MixtureMetaPosterior(self.log_weights, self.alphas, self.betas)


def mixture_update(meta, history):
    """Reweight components by the marginal likelihood of one task's history.

    ``history`` is an iterable of (arm, outcome) pairs with outcomes in
    {0, 1}.  Each component's marginal is a product of Beta-function ratios
    over arms, accumulated in log space.
    """
    counts_one = np.zeros(meta.alphas.shape[1])
    counts_zero = np.zeros(meta.alphas.shape[1])
    for arm, outcome in history:
        if outcome not in (0, 1, 0.0, 1.0):
            raise ValueError(f"Bernoulli outcome must be 0 or 1, got {outcome!r}")
        if outcome:
            counts_one[arm] += 1
        else:
            counts_zero[arm] += 1
    log_marginals = np.sum(
        betaln(meta.alphas + counts_one, meta.betas + counts_zero)
        - betaln(meta.alphas, meta.betas),
        axis=1,
    )
    return MixtureMetaPosterior(
        meta.log_weights + log_marginals, meta.alphas, meta.betas
    )


class MixtureTaskState:
    """Within-task mixture posterior: component weights plus per-component
    Beta posteriors, all conditioned on the same task data."""

    __slots__ = ("log_weights", "alphas", "betas")

    def __init__(self, log_weights, alphas, betas):
        self.log_weights = np.array(log_weights, dtype=float)
        self.alphas = np.array(alphas, dtype=float)
        self.betas = np.array(betas, dtype=float)

    def copy(self):
        return MixtureTaskState(self.log_weights, self.alphas, self.betas)

    def update(self, arm, outcome):
        """Condition on one Bernoulli observation: components are reweighted
        by their predictive probability, then their Beta posteriors absorb
        the outcome."""
        a = self.alphas[:, arm]
        b = self.betas[:, arm]
        if outcome:
            self.log_weights = self.log_weights + np.log(a / (a + b))
            self.alphas[:, arm] = a + 1.0
        else:
            self.log_weights = self.log_weights + np.log(b / (a + b))
            self.betas[:, arm] = b + 1.0
        self.log_weights = _normalize_log_weights(self.log_weights)


def mixture_ts_select(state, rng):
    """Sample a component, then arm means from its Beta posteriors, and play
    the greedy arm; ties to the lowest index."""
    weights = np.exp(state.log_weights)
    cum = np.cumsum(weights)
    j = min(int(np.searchsorted(cum, rng.random(), side="right")), weights.shape[0] - 1)
    theta = rng.beta(state.alphas[j], state.betas[j])
    return int(np.argmax(theta))


# ---------------------------------------------------------------------------
# Harness-facing policy state machines
# ---------------------------------------------------------------------------


class GaussianFamilyAgent:
    """One policy's state across a run of tasks (Gaussian reward families)."""

    def __init__(self, kind, spec, rng, mu_star=None, exploration_actions=None):
        self.kind = kind
        self.spec = scale_meta_prior(spec, kind.scale) if kind.scale != 1.0 else spec
        self.rng = rng
        self.mu_star = mu_star
        self.meta = initial_meta_posterior(self.spec)
        self.noise_var = spec.noise_sigma**2
        self._learns = kind.base in (META_TS, ADA_TS, ADA_TS_FORCED)
        self._m = None
        self.exploration_actions = exploration_actions
        if spec.family == hierarchy.LINEAR:
            self._actions = spec.actions
        elif spec.family == hierarchy.SEMIBANDIT:
            self._actions = (spec.num_arms, spec.budget)
        else:
            self._actions = spec.num_arms
        self.post = None
        self.summary = None
        self.plan = []

    def begin_task(self, s, m):
        self._m = m
        self.post = begin_task(self.kind, self.meta, self.spec, self.rng, self.mu_star)
        if self.spec.family == hierarchy.LINEAR:
            self.summary = LinearSummary(self.spec.dim)
        else:
            self.summary = ArmSummary(self.spec.num_arms)
        if self.kind.base == ADA_TS_FORCED:
            self.plan = forced_exploration_plan(
                s, m, self.spec, self.exploration_actions
            )
        else:
            self.plan = []

    def act(self, t):
        if t <= len(self.plan):
            return self.plan[t - 1]
        return ts_select(self.post, self._actions, self.rng)

    def observe(self, action, observation):
        if self.spec.family == hierarchy.LINEAR:
            feature = hierarchy.linear_feature(self.spec, action)
            self.post.update_feature(feature, observation, self.noise_var)
            self.summary.add(feature, observation)
        elif self.spec.family == hierarchy.SEMIBANDIT:
            for arm, reward in observation.items():
                self.post.update_arm(arm, reward, self.noise_var)
            self.summary.add_subset(observation)
        else:
            self.post.update_arm(action, observation, self.noise_var)
            self.summary.add(action, observation)

    def end_task(self):
        if not self._learns:
            return
        if self.spec.family == hierarchy.LINEAR:
            self.meta = end_task_linear(self.meta, self.summary, self.spec)
        elif self.spec.family == hierarchy.SEMIBANDIT:
            self.meta = end_task_semibandit(self.meta, self.summary, self.spec)
        else:
            self.meta = end_task_gaussian(self.meta, self.summary, self.spec)


class MixtureFamilyAgent:
    """Policy state across a run of Bernoulli-mixture tasks.

    ``ada-ts`` keeps the full component posterior; ``meta-ts`` samples one
    component per task; ``oracle-ts`` pins the true component and
    ``misassigned-ts`` pins a wrong one; plain ``ts`` restarts from the prior
    weights every task.
    """

    def __init__(self, kind, spec, rng, mu_star=None):
        if kind.base in (ADA_TS_FORCED,):
            raise UnknownAgent("forced exploration is not defined for mixtures")
        self.kind = kind
        self.spec = spec
        self.rng = rng
        self.true_component = None if mu_star is None else int(mu_star)
        self.meta = MixtureMetaPosterior.from_spec(spec)
        self._learns = kind.base in (META_TS, ADA_TS)
        self.state = None
        self.history = None

    def _point_mass(self, j):
        log_w = np.full(self.spec.num_components, -np.inf)
        log_w[j] = 0.0
        return log_w

    def begin_task(self, s, m):
        if self.kind.base == ADA_TS:
            log_w = self.meta.log_weights
        elif self.kind.base == META_TS:
            cum = np.cumsum(self.meta.weights)
            j = min(int(np.searchsorted(cum, self.rng.random(), side="right")), cum.shape[0] - 1)
            log_w = self._point_mass(j)
        elif self.kind.base == ORACLE_TS:
            log_w = self._point_mass(self.true_component)
        elif self.kind.base == MISASSIGNED_TS:
            wrong = (self.true_component + 1) % self.spec.num_components
            log_w = self._point_mass(wrong)
        else:  # agnostic: the prior mixture, forgotten between tasks
            log_w = np.log(self.spec.mixture_weights)
        self.state = MixtureTaskState(
            log_w, self.spec.mixture_alphas, self.spec.mixture_betas
        )
        self.history = []

    def act(self, t):
        return mixture_ts_select(self.state, self.rng)

    def observe(self, action, observation):
        self.state.update(action, observation)
        self.history.append((action, observation))

    def end_task(self):
        if self._learns:
            self.meta = mixture_update(self.meta, self.history)


def make_agent(kind, spec, rng, mu_star=None, exploration_actions=None):
    if spec.family == hierarchy.BERNOULLI_MIXTURE:
        return MixtureFamilyAgent(kind, spec, rng, mu_star)
    return GaussianFamilyAgent(kind, spec, rng, mu_star, exploration_actions)
