"""Simulation harness: coverage and mean region measure across methods.

Generates K related linear-model populations (plus an optional target
population), runs any subset of the five methods

* ``EB-pa`` -- Gaussian-MLE prior, closed-form interval,
* ``EB-kd`` -- kernel-density prior, level-set region,
* ``EB-dc`` -- deconvolution prior, level-set region,
* ``OR``   -- oracle that knows the true prior,
* ``CL``   -- classical large-sample interval,

and reports per-method coverage and mean Lebesgue measure with Monte Carlo
standard errors.  Every replication is keyed by ``(seed, rep_index)`` so runs
are reproducible and independent of the number of worker threads.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericalError
from .gaussian import GaussianParams
from .linear import (
    EstimateSummary,
    PopulationData,
    debiased_lasso_batch,
    ols_fit,
)
from .priors import (
    GaussianPrior,
    KernelMixturePrior,
    Prior,
    fit_deconv_prior,
    fit_gaussian_prior,
    fit_kde_prior,
)
from .regions import (
    Region,
    TauSolveConfig,
    classical_interval,
    eb_gaussian_interval,
    region_for_target,
)

METHODS = ("EB-pa", "EB-kd", "EB-dc", "OR", "CL")
MAX_SKIP_FRACTION = 0.01
#: mixture prior component means are fixed at +/- 1.
MIXTURE_MEANS = (1.0, -1.0)


@dataclass(frozen=True)
class PriorSpec:
    """True random-effects distribution used by the generator and the oracle."""

    kind: str  # "gaussian" | "mixture"
    sigma_pi_sq: float
    mean: float = 0.0  # gaussian only; the mixture means are fixed at +/- 1

    def __post_init__(self):
        if self.kind not in ("gaussian", "mixture"):
            raise ValueError(f"unknown prior kind {self.kind!r}")
        if not self.sigma_pi_sq >= 0.0:
            raise ValueError("sigma_pi_sq must be >= 0")

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        sd = self.sigma_pi_sq**0.5
        if self.kind == "gaussian":
            return rng.normal(self.mean, sd, size=size)
        centers = np.asarray(MIXTURE_MEANS)[rng.integers(0, 2, size=size)]
        return centers + rng.normal(0.0, sd, size=size)

    def to_prior(self) -> Prior:
        if self.kind == "gaussian":
            return GaussianPrior(GaussianParams(self.mean, max(self.sigma_pi_sq, 1e-300)))
        return KernelMixturePrior(
            centers=np.asarray(MIXTURE_MEANS), bandwidth_sq=self.sigma_pi_sq
        )


@dataclass(frozen=True)
class ExperimentConfig:
    K: int
    n_k: int
    n0: int
    p: int
    s_beta: int
    noise_sd: float
    prior_spec: PriorSpec
    methods: tuple[str, ...]
    replications: int
    alpha: float
    seed: int
    regime: str  # "low_dim" | "high_dim"
    tau_mc_draws: int = 4000
    lasso_lambda: float | None = None

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("K must be >= 2")
        if self.n_k < 2:
            raise ValueError("n_k must be >= 2")
        if self.n0 < 0:
            raise ValueError("n0 must be >= 0")
        if not 1 <= self.s_beta <= self.p:
            raise ValueError("need 1 <= s_beta <= p")
        if not self.noise_sd > 0.0:
            raise ValueError("noise_sd must be > 0")
        if self.regime not in ("low_dim", "high_dim"):
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.regime == "low_dim" and self.n_k <= self.p:
            raise ValueError("low_dim requires n_k > p")
        unknown = set(self.methods) - set(METHODS)
        if not self.methods or unknown:
            raise ValueError(f"methods must be a nonempty subset of {METHODS}, got {self.methods}")
        if "CL" in self.methods and self.n0 < 1:
            raise ValueError("CL requires n0 >= 1")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")

    @staticmethod
    def from_dict(data: dict) -> "ExperimentConfig":
        version = data.get("schema_version", 1)
        if version != 1:
            raise ValueError(f"unsupported config schema_version {version}")
        prior = data["prior"]
        spec = PriorSpec(
            kind=prior["type"],
            sigma_pi_sq=float(prior["sigma_pi_sq"]),
            mean=float(prior.get("mean", 0.0)),
        )
        kwargs = dict(
            K=int(data["K"]),
            n_k=int(data["n_k"]),
            n0=int(data["n0"]),
            p=int(data["p"]),
            s_beta=int(data["s_beta"]),
            noise_sd=float(data["noise_sd"]),
            prior_spec=spec,
            methods=tuple(data["methods"]),
            replications=int(data["replications"]),
            alpha=float(data["alpha"]),
            seed=int(data["seed"]),
            regime=data["regime"],
        )
        if "tau_mc_draws" in data:
            kwargs["tau_mc_draws"] = int(data["tau_mc_draws"])
        if data.get("lasso_lambda") is not None:
            kwargs["lasso_lambda"] = float(data["lasso_lambda"])
        return ExperimentConfig(**kwargs)

    def to_dict(self) -> dict:
        prior: dict = {"type": self.prior_spec.kind, "sigma_pi_sq": self.prior_spec.sigma_pi_sq}
        if self.prior_spec.kind == "gaussian":
            prior["mean"] = self.prior_spec.mean
        return {
            "schema_version": 1,
            "K": self.K,
            "n_k": self.n_k,
            "n0": self.n0,
            "p": self.p,
            "s_beta": self.s_beta,
            "noise_sd": self.noise_sd,
            "prior": prior,
            "methods": list(self.methods),
            "replications": self.replications,
            "alpha": self.alpha,
            "seed": self.seed,
            "regime": self.regime,
            "tau_mc_draws": self.tau_mc_draws,
            "lasso_lambda": self.lasso_lambda,
        }


@dataclass(frozen=True)
class MethodResult:
    method: str
    coverage: float
    mean_measure: float
    replications: int
    se_coverage: float


@dataclass(frozen=True)
class ReplicationRecord:
    rep_index: int
    covered: dict[str, bool]
    measures: dict[str, float]


def _rep_streams(cfg: ExperimentConfig, rep_index: int) -> list[np.random.SeedSequence]:
    root = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(rep_index,))
    return root.spawn(5)  # theta, covariates, noise, tau solver, hybrid


def _beta_base(cfg: ExperimentConfig) -> np.ndarray:
    beta = np.zeros(cfg.p)
    beta[1 : cfg.s_beta] = 1.0
    return beta


def _generate_arrays(cfg: ExperimentConfig, rep_index: int):
    """theta (K+1,), target (X0, y0) or None, aux (K, n_k, p) designs and responses."""
    theta_ss, x_ss, eps_ss, *_ = _rep_streams(cfg, rep_index)
    theta = cfg.prior_spec.sample(cfg.K + 1, np.random.default_rng(theta_ss))
    x_rng = np.random.default_rng(x_ss)
    eps_rng = np.random.default_rng(eps_ss)
    beta = _beta_base(cfg)

    target = None
    if cfg.n0 > 0:
        X0 = x_rng.standard_normal((cfg.n0, cfg.p))
        b = beta.copy()
        b[0] = theta[0]
        y0 = X0 @ b + cfg.noise_sd * eps_rng.standard_normal(cfg.n0)
        target = (X0, y0)

    Xa = x_rng.standard_normal((cfg.K, cfg.n_k, cfg.p))
    betas = np.tile(beta, (cfg.K, 1))
    betas[:, 0] = theta[1:]
    ya = np.einsum("kij,kj->ki", Xa, betas) + cfg.noise_sd * eps_rng.standard_normal(
        (cfg.K, cfg.n_k)
    )
    return theta, target, Xa, ya


def generate_replication(
    cfg: ExperimentConfig, rep_index: int
) -> tuple[list[PopulationData], list[float]]:
    """Populations and the true parameter vector for one replication.

    ``theta_vec[0]`` is the target parameter; the populations list starts with
    the target population when ``n0 > 0`` and contains only the K auxiliary
    populations otherwise.  Deterministic given ``(cfg.seed, rep_index)``.
    """
    theta, target, Xa, ya = _generate_arrays(cfg, rep_index)
    populations = []
    if target is not None:
        populations.append(PopulationData(id="P0", X=target[0], y=target[1]))
    populations.extend(
        PopulationData(id=f"P{k + 1}", X=Xa[k], y=ya[k]) for k in range(cfg.K)
    )
    return populations, [float(t) for t in theta]


def _aux_summaries(cfg: ExperimentConfig, Xa: np.ndarray, ya: np.ndarray) -> list[EstimateSummary]:
    if cfg.regime == "low_dim":
        return [
            ols_fit(PopulationData(id=f"P{k + 1}", X=Xa[k], y=ya[k]), 0).summary
            for k in range(cfg.K)
        ]
    theta, var = debiased_lasso_batch(
        Xa, ya, 0, lam=cfg.lasso_lambda, lambda_node=cfg.lasso_lambda
    )
    return [
        EstimateSummary(id=f"P{k + 1}", theta_hat=float(theta[k]),
                        sigma_hat_sq=float(var[k]), n=cfg.n_k)
        for k in range(cfg.K)
    ]


def _target_summary(cfg: ExperimentConfig, X0: np.ndarray, y0: np.ndarray) -> EstimateSummary:
    pop = PopulationData(id="P0", X=X0, y=y0)
    if cfg.regime == "low_dim":
        return ols_fit(pop, 0).summary
    theta, var = debiased_lasso_batch(
        X0[None], y0[None], 0, lam=cfg.lasso_lambda, lambda_node=cfg.lasso_lambda
    )
    return EstimateSummary(id="P0", theta_hat=float(theta[0]),
                           sigma_hat_sq=float(var[0]), n=cfg.n0)


def _tau_cfg(cfg: ExperimentConfig, stream: np.random.SeedSequence) -> TauSolveConfig:
    seed = int(stream.generate_state(1, np.uint64)[0])
    return TauSolveConfig(mc_draws=cfg.tau_mc_draws, seed=seed)


def _run_replication(
    cfg: ExperimentConfig, rep_index: int, oracle_cache: dict
) -> ReplicationRecord:
    theta, target, Xa, ya = _generate_arrays(cfg, rep_index)
    theta0 = float(theta[0])
    methods = cfg.methods
    *_, tau_ss, _hybrid_ss = _rep_streams(cfg, rep_index)
    tau_cfg = _tau_cfg(cfg, tau_ss)

    need_all = any(m.startswith("EB-") for m in methods)
    need_target = cfg.n0 > 0
    aux = _aux_summaries(cfg, Xa, ya) if need_all else None
    obs = _target_summary(cfg, target[0], target[1]) if (need_target and target) else None

    covered: dict[str, bool] = {}
    measures: dict[str, float] = {}
    for method in methods:
        if method == "CL":
            region = classical_interval(obs, cfg.alpha)
        elif method == "OR":
            true_prior = cfg.prior_spec.to_prior()
            if cfg.n0 == 0:
                if "OR" not in oracle_cache:
                    oracle_cache["OR"] = region_for_target(
                        true_prior, None, cfg.alpha, tau_cfg
                    )
                region = oracle_cache["OR"]
            else:
                region = region_for_target(true_prior, obs, cfg.alpha, tau_cfg)
        elif method == "EB-pa":
            prior = fit_gaussian_prior(aux)
            if cfg.n0 == 0:
                region = region_for_target(prior, None, cfg.alpha, tau_cfg)
            else:
                region = eb_gaussian_interval(prior, obs, cfg.alpha)
        elif method == "EB-kd":
            prior = fit_kde_prior(aux)
            region = region_for_target(prior, obs if cfg.n0 > 0 else None, cfg.alpha, tau_cfg)
        elif method == "EB-dc":
            prior = fit_deconv_prior(aux)
            region = region_for_target(prior, obs if cfg.n0 > 0 else None, cfg.alpha, tau_cfg)
        else:  # pragma: no cover - guarded by config validation
            raise ValueError(f"unknown method {method!r}")
        covered[method] = region.contains(theta0)
        measures[method] = region.measure
    return ReplicationRecord(rep_index=rep_index, covered=covered, measures=measures)


def _resolve_threads(threads: int | None) -> int:
    if threads is None:
        raw = os.environ.get("EBCR_THREADS", "1")
        try:
            threads = int(raw)
        except ValueError as exc:
            raise ValueError(f"EBCR_THREADS must be an integer, got {raw!r}") from exc
    if threads == 0:
        threads = os.cpu_count() or 1
    if threads < 0:
        raise ValueError("thread count must be >= 0")
    return threads


def iter_replications(
    cfg: ExperimentConfig, threads: int | None = None
) -> tuple[list[ReplicationRecord], list[tuple[int, str]]]:
    """All replication records plus (rep_index, message) for skipped ones.

    The record list is ordered by replication index regardless of the thread
    count, so aggregates are schedule-invariant.
    """
    threads = _resolve_threads(threads)
    oracle_cache: dict = {}
    if "OR" in cfg.methods and cfg.n0 == 0:
        # the n0 = 0 oracle region is deterministic and data-free; hoist it
        oracle_cache["OR"] = region_for_target(
            cfg.prior_spec.to_prior(), None, cfg.alpha, TauSolveConfig(seed=0)
        )

    def job(rep: int):
        try:
            return _run_replication(cfg, rep, oracle_cache)
        except (NumericalError, ValueError) as exc:
            return (rep, f"{type(exc).__name__}: {exc}")

    reps = range(cfg.replications)
    if threads <= 1:
        outcomes = [job(r) for r in reps]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(job, reps))
    records = [o for o in outcomes if isinstance(o, ReplicationRecord)]
    skipped = [o for o in outcomes if not isinstance(o, ReplicationRecord)]
    return records, skipped


def run_experiment(cfg: ExperimentConfig, threads: int | None = None) -> list[MethodResult]:
    """Coverage and mean measure per method over ``cfg.replications`` runs.

    Replications that raise are recorded and skipped; the run fails if more
    than 1% are skipped.
    """
    records, skipped = iter_replications(cfg, threads)
    if len(skipped) > MAX_SKIP_FRACTION * cfg.replications:
        detail = "; ".join(f"rep {r}: {msg}" for r, msg in skipped[:5])
        raise NumericalError(
            f"{len(skipped)} of {cfg.replications} replications failed ({detail})"
        )
    results = []
    for method in cfg.methods:
        hits = np.array([rec.covered[method] for rec in records], dtype=float)
        sizes = np.array([rec.measures[method] for rec in records], dtype=float)
        n = hits.size
        coverage = float(hits.mean()) if n else float("nan")
        se = float(np.sqrt(coverage * (1.0 - coverage) / n)) if n else float("nan")
        results.append(
            MethodResult(
                method=method,
                coverage=coverage,
                mean_measure=float(sizes.mean()) if n else float("nan"),
                replications=n,
                se_coverage=se,
            )
        )
    return results
