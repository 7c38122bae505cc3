"""Hierarchical bandit environments.

A meta-parameter mu_star is drawn once per run from the meta-prior, each task
draws its own parameter theta from the task prior centered at mu_star, and
rewards are noisy observations of theta.  Four families share this structure:

* ``gaussian``           K independent arms, Gaussian rewards.
* ``linear``             d-dimensional linear rewards over a finite action set.
* ``semibandit``         pull a subset of L arms per round, observe each arm.
* ``bernoulli-mixture``  Bernoulli arms; the meta-prior is a finite mixture of
                         per-arm Beta priors and mu_star is a component index.
"""

from dataclasses import dataclass, replace
import numpy as np

from .gauss_core import mvn_sample, symmetrize

GAUSSIAN = "gaussian"
LINEAR = "linear"
SEMIBANDIT = "semibandit"
BERNOULLI_MIXTURE = "bernoulli-mixture"

FAMILIES = (GAUSSIAN, LINEAR, SEMIBANDIT, BERNOULLI_MIXTURE)

# Sampled Bernoulli means are clamped away from {0, 1} so that posterior
# updates and log-likelihoods stay finite.
BETA_MEAN_FLOOR = 1e-6


class InvalidAction(Exception):
    """Action outside the environment's action set."""


def _as_cov(width_or_cov, dim):
    """Coerce a scalar width, per-coordinate width vector, or full matrix
    into a covariance matrix (widths are standard deviations)."""
    arr = np.asarray(width_or_cov, dtype=float)
    if arr.ndim == 0:
        return float(arr) ** 2 * np.eye(dim)
    if arr.ndim == 1:
        if arr.shape[0] != dim:
            raise ValueError(f"width vector length {arr.shape[0]} != {dim}")
        return np.diag(arr**2)
    if arr.shape != (dim, dim):
        raise ValueError(f"covariance shape {arr.shape} != ({dim}, {dim})")
    return symmetrize(arr)


@dataclass(frozen=True, eq=False)
class EnvironmentSpec:
    """Static description of one environment family.

    ``sigma_q`` and ``sigma_0`` are covariance matrices (not widths).  For the
    linear family ``actions`` may be None, in which case the harness samples a
    fresh action set per run, uniform on [-0.5, 0.5]^dim.
    """

    family: str
    num_arms: int
    noise_sigma: float
    mu_q: np.ndarray = None
    sigma_q: np.ndarray = None
    sigma_0: np.ndarray = None
    dim: int = None
    actions: np.ndarray = None
    budget: int = None
    mixture_alphas: np.ndarray = None
    mixture_betas: np.ndarray = None
    mixture_weights: np.ndarray = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.num_arms < 1:
            raise ValueError("num_arms must be positive")
        if self.family == BERNOULLI_MIXTURE:
            if self.mixture_alphas is None or self.mixture_betas is None:
                raise ValueError("mixture family needs alpha/beta tables")
            if np.any(self.mixture_alphas <= 0) or np.any(self.mixture_betas <= 0):
                raise ValueError("Beta parameters must be positive")
            if self.mixture_weights is None or np.any(self.mixture_weights < 0):
                raise ValueError("mixture weights must be non-negative")
            if abs(float(np.sum(self.mixture_weights)) - 1.0) > 1e-9:
                raise ValueError("mixture weights must sum to one")
            return
        if self.noise_sigma <= 0:
            raise ValueError("noise_sigma must be positive")
        p = self.param_dim
        if self.mu_q is None or self.mu_q.shape != (p,):
            raise ValueError(f"mu_q must have shape ({p},)")
        for name in ("sigma_q", "sigma_0"):
            mat = getattr(self, name)
            if mat is None or mat.shape != (p, p):
                raise ValueError(f"{name} must have shape ({p}, {p})")
            if np.max(np.abs(mat - mat.T)) > 1e-12 * max(1.0, np.max(np.abs(mat))):
                raise ValueError(f"{name} must be symmetric")
        if self.family == LINEAR:
            if self.dim is None or self.dim < 1:
                raise ValueError("linear family needs dim >= 1")
            if self.actions is not None:
                if self.actions.shape != (self.num_arms, self.dim):
                    raise ValueError("actions must have shape (num_arms, dim)")
                norms = np.linalg.norm(self.actions, axis=1)
                if np.any(norms > 1.0 + 1e-12):
                    raise ValueError("linear actions must have norm <= 1")
        if self.family == SEMIBANDIT:
            if self.budget is None or not 1 <= self.budget <= self.num_arms:
                raise ValueError("budget must be in [1, num_arms]")

    @property
    def param_dim(self):
        """Dimension of mu_star / theta: d for linear, K otherwise."""
        return self.dim if self.family == LINEAR else self.num_arms

    @property
    def num_components(self):
        return None if self.mixture_alphas is None else self.mixture_alphas.shape[0]

    def with_actions(self, actions):
        return replace(self, actions=np.asarray(actions, dtype=float))


def gaussian_env(num_arms, sigma_q, sigma_0, noise_sigma, mu_q=None):
    mu_q = np.zeros(num_arms) if mu_q is None else np.asarray(mu_q, dtype=float)
    return EnvironmentSpec(
        family=GAUSSIAN,
        num_arms=num_arms,
        noise_sigma=float(noise_sigma),
        mu_q=mu_q,
        sigma_q=_as_cov(sigma_q, num_arms),
        sigma_0=_as_cov(sigma_0, num_arms),
    )


def linear_env(dim, sigma_q, sigma_0, noise_sigma, num_arms=None, actions=None, mu_q=None):
    """Linear family; defaults to 5*dim actions sampled per run by the harness."""
    if actions is not None:
        actions = np.asarray(actions, dtype=float)
        num_arms = actions.shape[0]
    elif num_arms is None:
        num_arms = 5 * dim
    mu_q = np.zeros(dim) if mu_q is None else np.asarray(mu_q, dtype=float)
    return EnvironmentSpec(
        family=LINEAR,
        num_arms=num_arms,
        noise_sigma=float(noise_sigma),
        mu_q=mu_q,
        sigma_q=_as_cov(sigma_q, dim),
        sigma_0=_as_cov(sigma_0, dim),
        dim=dim,
        actions=actions,
    )


def semibandit_env(num_arms, budget, sigma_q, sigma_0, noise_sigma, mu_q=None):
    mu_q = np.zeros(num_arms) if mu_q is None else np.asarray(mu_q, dtype=float)
    return EnvironmentSpec(
        family=SEMIBANDIT,
        num_arms=num_arms,
        noise_sigma=float(noise_sigma),
        mu_q=mu_q,
        sigma_q=_as_cov(sigma_q, num_arms),
        sigma_0=_as_cov(sigma_0, num_arms),
        budget=budget,
    )


def mixture_env(num_arms, alphas, betas, weights=None):
    """Bernoulli arms with a finite mixture of per-arm Beta priors.

    ``alphas`` / ``betas`` have shape (num_components, num_arms).
    """
    alphas = np.atleast_2d(np.asarray(alphas, dtype=float))
    betas = np.atleast_2d(np.asarray(betas, dtype=float))
    if alphas.shape != betas.shape or alphas.shape[1] != num_arms:
        raise ValueError("alpha/beta tables must share shape (components, arms)")
    if weights is None:
        weights = np.full(alphas.shape[0], 1.0 / alphas.shape[0])
    weights = np.asarray(weights, dtype=float)
    return EnvironmentSpec(
        family=BERNOULLI_MIXTURE,
        num_arms=num_arms,
        noise_sigma=0.5,
        mixture_alphas=alphas,
        mixture_betas=betas,
        mixture_weights=weights / np.sum(weights),
    )


@dataclass(frozen=True, eq=False)
class TaskInstance:
    """One sampled task: parameter, best action, and its mean reward."""

    theta: np.ndarray
    optimal_action: object
    optimal_value: float


def sample_meta_parameter(spec, rng):
    """Draw mu_star from the meta-prior (a component index for mixtures)."""
    if spec.family == BERNOULLI_MIXTURE:
        u = rng.random()
        cum = np.cumsum(spec.mixture_weights)
        return min(int(np.searchsorted(cum, u, side="right")), cum.shape[0] - 1)
    return mvn_sample(spec.mu_q, spec.sigma_q, rng)


def top_subset(theta, budget):
    """Indices of the `budget` largest entries, ties to the lowest index."""
    order = np.argsort(-theta, kind="stable")
    return tuple(sorted(int(k) for k in order[:budget]))


def sample_task(spec, mu_star, rng):
    """Draw one task parameter from the task prior and locate its optimum."""
    if spec.family == BERNOULLI_MIXTURE:
        j = int(mu_star)
        theta = rng.beta(spec.mixture_alphas[j], spec.mixture_betas[j])
        theta = np.clip(theta, BETA_MEAN_FLOOR, 1.0 - BETA_MEAN_FLOOR)
        best = int(np.argmax(theta))
        return TaskInstance(theta, best, float(theta[best]))
    theta = mvn_sample(mu_star, spec.sigma_0, rng)
    if spec.family == LINEAR:
        # score each row exactly as mean_reward does, so the recorded optimum
        # is the float max of the per-action means and regret is never < 0
        scores = np.array([float(a @ theta) for a in spec.actions])
        best = int(np.argmax(scores))
        return TaskInstance(theta, best, float(scores[best]))
    if spec.family == SEMIBANDIT:
        subset = top_subset(theta, spec.budget)
        return TaskInstance(theta, subset, float(theta[list(subset)].sum()))
    best = int(np.argmax(theta))
    return TaskInstance(theta, best, float(theta[best]))


def _check_arm(spec, arm):
    if not isinstance(arm, (int, np.integer)) or not 0 <= arm < spec.num_arms:
        raise InvalidAction(f"arm {arm!r} not in [0, {spec.num_arms})")


def linear_feature(spec, action):
    """Linear actions are indices into the action set; raw feature vectors
    are also accepted so forced-exploration fallbacks can be played."""
    if isinstance(action, (int, np.integer)):
        if not 0 <= action < spec.actions.shape[0]:
            raise InvalidAction(f"action index {action} out of range")
        return spec.actions[int(action)]
    vec = np.asarray(action, dtype=float)
    if vec.shape != (spec.dim,):
        raise InvalidAction(f"feature vector shape {vec.shape} != ({spec.dim},)")
    return vec


def _check_subset(spec, action):
    arms = tuple(sorted(action))
    if len(arms) != spec.budget or len(set(arms)) != len(arms):
        raise InvalidAction(f"subset {action!r} must hold {spec.budget} distinct arms")
    for k in arms:
        _check_arm(spec, k)
    return arms


def mean_reward(spec, task, action):
    """Expected reward of `action` under the task's true parameter."""
    if spec.family == GAUSSIAN or spec.family == BERNOULLI_MIXTURE:
        _check_arm(spec, action)
        return float(task.theta[int(action)])
    if spec.family == LINEAR:
        return float(linear_feature(spec, action) @ task.theta)
    arms = _check_subset(spec, action)
    return float(task.theta[list(arms)].sum())


def realize_reward(spec, task, action, rng):
    """Draw the observed feedback for playing `action` in `task`.

    Returns a float for scalar-feedback families and, for the semibandit
    family, a dict keyed by arm id with that arm's individual reward.
    """
    if spec.family == BERNOULLI_MIXTURE:
        _check_arm(spec, action)
        return 1.0 if rng.random() < task.theta[int(action)] else 0.0
    if spec.family == SEMIBANDIT:
        arms = _check_subset(spec, action)
        noise = rng.standard_normal(len(arms))
        return {
            k: float(task.theta[k] + spec.noise_sigma * z)
            for k, z in zip(arms, noise)
        }
    mean = mean_reward(spec, task, action)
    return float(mean + spec.noise_sigma * rng.standard_normal())


def instant_regret(spec, task, action):
    """Gap between the task's optimal mean reward and the action's."""
    return task.optimal_value - mean_reward(spec, task, action)
