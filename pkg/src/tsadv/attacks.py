"""White-box attacks on a frozen classifier via input gradients.

The rank-swap attack builds a target distribution in which the top two
classes of the clean prediction exchange dominance (controlled by the
balance factor gamma) and minimizes the KL divergence from that target to
the perturbed prediction. Baselines: FGSM, BIM, the gradient method (GM),
its L2-regularized variant, and the smoothed gradient method (SGM).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DimensionError
from .model import Model

KL_FLOOR = 1e-12


class AttackKind(str, Enum):
    FGSM = "fgsm"
    BIM = "bim"
    GM = "gm"
    GM_L2 = "gm_l2"
    SGM = "sgm"
    SWAP = "swap"
    SWAP_L2 = "swap_l2"


ITERATIVE_KINDS = (AttackKind.BIM, AttackKind.GM, AttackKind.GM_L2,
                   AttackKind.SGM, AttackKind.SWAP, AttackKind.SWAP_L2)

# per-kind defaults; beta=0.0005 / eps=0.1 / 1000 iterations for every
# iterative attack, FGSM takes a single 0.1-sized sign step
_KIND_DEFAULTS = {
    AttackKind.FGSM: dict(beta=0.1, iterations=1),
    AttackKind.BIM: dict(),
    AttackKind.GM: dict(),
    AttackKind.GM_L2: dict(alpha=1.0),
    AttackKind.SGM: dict(alpha=1.0, tv_weight=0.1),
    AttackKind.SWAP: dict(),
    AttackKind.SWAP_L2: dict(alpha=0.01),
}


@dataclass(frozen=True)
class AttackConfig:
    kind: AttackKind
    beta: float = 0.0005
    epsilon: float = 0.1
    iterations: int = 1000
    gamma: float = 0.48        # balance factor for the rank-swap target
    alpha: float = 0.0         # L2 regularization weight
    mu: float = 1.0            # GM misclassification weight
    tv_weight: float = 0.0     # successive-difference (smoothness) weight
    seed: int = 0
    clip_schedule: str = "per-step"   # or "final-only"
    early_stop: bool = False
    gm_mode: str = "one-hot-ce"       # or "neg-kl"
    l2_form: str = "euclidean"        # or "sum-abs" (the literal L1-style form)
    init: str = "zeros"               # or "uniform" (seeded, in [-eps/10, eps/10])

    def __post_init__(self):
        object.__setattr__(self, "kind", AttackKind(self.kind))
        if self.beta <= 0:
            raise ConfigError(f"beta must be > 0, got {self.beta}")
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if not (0.0 < self.gamma <= 0.5):
            raise ConfigError(f"gamma must lie in (0, 0.5], got {self.gamma}")
        if self.alpha < 0 or self.tv_weight < 0 or self.mu < 0:
            raise ConfigError("alpha, mu and tv_weight must be >= 0")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.clip_schedule not in ("per-step", "final-only"):
            raise ConfigError(f"unknown clip schedule {self.clip_schedule!r}")
        if self.gm_mode not in ("one-hot-ce", "neg-kl"):
            raise ConfigError(f"unknown GM mode {self.gm_mode!r}")
        if self.l2_form not in ("euclidean", "sum-abs"):
            raise ConfigError(f"unknown l2 form {self.l2_form!r}")
        if self.init not in ("zeros", "uniform"):
            raise ConfigError(f"unknown noise init {self.init!r}")

    @classmethod
    def defaults(cls, kind, **overrides) -> "AttackConfig":
        kind = AttackKind(kind)
        params = dict(_KIND_DEFAULTS[kind])
        params.update(overrides)
        return cls(kind=kind, **params)

    def with_seed(self, seed: int) -> "AttackConfig":
        return replace(self, seed=int(seed))


@dataclass
class AttackOutcome:
    """Per-sample attack result plus diagnostics."""
    original: np.ndarray
    perturbed: np.ndarray
    success: bool
    original_class: int
    final_class: int
    euclidean_distance: float
    linf_distance: float
    kl_to_target: Optional[float]
    kl_original_vs_perturbed: float
    iterations_used: int
    abort_reason: Optional[str] = None


# ---------------------------------------------------------------------------
# probability-vector primitives


def _check_prob_vector(p: np.ndarray, name: str) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size < 2:
        raise DimensionError(f"{name}: need a probability vector of length >= 2, "
                             f"got shape {p.shape}")
    if np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-9:
        raise ConfigError(f"{name}: not a probability vector (sum {p.sum()!r})")
    return p


def kl_divergence(p, q) -> float:
    """Sum p_i ln(p_i/q_i) with 0*ln(0/q) = 0 and q floored at 1e-12."""
    p = _check_prob_vector(p, "kl p")
    q = _check_prob_vector(q, "kl q")
    if p.shape != q.shape:
        raise DimensionError(f"kl_divergence: shape mismatch {p.shape} vs {q.shape}")
    qf = np.maximum(q, KL_FLOOR)
    terms = np.where(p > 0.0, p * (np.log(np.maximum(p, KL_FLOOR)) - np.log(qf)), 0.0)
    return float(max(terms.sum(), 0.0))


def build_swap_target(original, gamma: float) -> np.ndarray:
    """Swap the dominance of the top two classes of a prediction.

    The top two entries share their mass s: the original winner gets
    gamma*s, the runner-up (1-gamma)*s. Everything else is untouched.
    """
    p = _check_prob_vector(original, "build_swap_target")
    if not (0.0 < gamma <= 0.5):
        raise ConfigError(f"gamma must lie in (0, 0.5], got {gamma}")
    order = np.argsort(-p, kind="stable")
    i1, i2 = int(order[0]), int(order[1])
    s = p[i1] + p[i2]
    target = p.copy()
    target[i1] = gamma * s
    target[i2] = (1.0 - gamma) * s
    return target


# ---------------------------------------------------------------------------
# differentiable losses

def _entropy_term(p: np.ndarray) -> float:
    # sum p ln p with the 0 ln 0 = 0 convention
    return float(np.where(p > 0.0, p * np.log(np.maximum(p, KL_FLOOR)), 0.0).sum())


def _kl_to_const(target: np.ndarray, logq: ad.Tensor) -> ad.Tensor:
    """D_KL(target || q) as a graph node, target held constant."""
    cross = ad.tsum(ad.mul(ad.constant(-target), logq))
    return ad.add_scalar(cross, _entropy_term(target))


def _ce_to_class(logq: ad.Tensor, cls: int) -> ad.Tensor:
    onehot = np.zeros(logq.values.size)
    onehot[cls] = -1.0
    return ad.tsum(ad.mul(ad.constant(onehot), logq))


def _noise_norm(r: ad.Tensor, form: str) -> ad.Tensor:
    if form == "sum-abs":
        return ad.tsum(ad.tabs(r))
    return ad.tsqrt(ad.tsum(ad.square(r)))


def _tv_penalty(r: ad.Tensor) -> ad.Tensor:
    return ad.tsum(ad.tabs(ad.successive_diff(r)))


@dataclass
class AttackRefs:
    """Quantities frozen before the iteration loop; gradients never flow
    through them."""
    original_probs: np.ndarray
    original_class: int
    target_probs: Optional[np.ndarray] = None  # rank-swap or one-hot target
    gm_target_class: Optional[int] = None


def prepare_refs(model: Model, x: np.ndarray, config: AttackConfig) -> AttackRefs:
    p0 = model.predict_proba(x)
    orig = int(np.argmax(p0))
    refs = AttackRefs(original_probs=p0, original_class=orig)
    if config.kind in (AttackKind.SWAP, AttackKind.SWAP_L2):
        refs.target_probs = build_swap_target(p0, config.gamma)
    elif config.kind in (AttackKind.GM, AttackKind.GM_L2, AttackKind.SGM):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 2]))
        others = [c for c in range(p0.size) if c != orig]
        if not others:
            raise ConfigError("GM needs at least 2 classes")
        refs.gm_target_class = int(rng.choice(others))
        onehot = np.zeros(p0.size)
        onehot[refs.gm_target_class] = 1.0
        refs.target_probs = onehot
    return refs


def build_loss(model: Model, x: np.ndarray, r: ad.Tensor,
               config: AttackConfig, refs: AttackRefs) -> ad.Tensor:
    """Scalar loss for the configured attack kind, differentiable in r."""
    x_prime = ad.add(ad.constant(x), r)
    logq = model.forward_log_probs(x_prime)
    kind = config.kind

    if kind in (AttackKind.FGSM, AttackKind.BIM):
        return _ce_to_class(logq, refs.original_class)
    if kind == AttackKind.SWAP:
        return _kl_to_const(refs.target_probs, logq)
    if kind == AttackKind.SWAP_L2:
        loss = _kl_to_const(refs.target_probs, logq)
        if config.alpha > 0:
            loss = ad.add(loss, ad.scale(_noise_norm(r, config.l2_form), config.alpha))
        return loss

    # GM family
    if config.gm_mode == "one-hot-ce":
        gm = _ce_to_class(logq, refs.gm_target_class)
    else:
        # -D_KL(f(x) || f(x')), the reference distribution frozen
        gm = ad.scale(_kl_to_const(refs.original_probs, logq), -1.0)
    if kind == AttackKind.GM:
        return gm
    loss = ad.scale(gm, config.mu)
    if config.alpha > 0:
        loss = ad.add(loss, ad.scale(_noise_norm(r, config.l2_form), config.alpha))
    if kind == AttackKind.SGM and config.tv_weight > 0:
        loss = ad.add(loss, ad.scale(_tv_penalty(r), config.tv_weight))
    return loss


# ---------------------------------------------------------------------------
# attack drivers


def _initial_noise(length: int, config: AttackConfig) -> np.ndarray:
    if config.init == "uniform":
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 3]))
        return rng.uniform(-config.epsilon / 10.0, config.epsilon / 10.0, length)
    return np.zeros(length)


def _finish(model: Model, x: np.ndarray, r: np.ndarray, config: AttackConfig,
            refs: AttackRefs, iterations_used: int,
            abort_reason: Optional[str] = None) -> AttackOutcome:
    # Final clip: X' = min{X + eps, max{X - eps, X'}}
    r = np.clip(r, -config.epsilon, config.epsilon)
    perturbed = x + r
    q = model.predict_proba(perturbed)
    final_class = int(np.argmax(q))
    success = final_class != refs.original_class and abort_reason is None
    kl_target = (kl_divergence(refs.target_probs, q)
                 if refs.target_probs is not None else None)
    return AttackOutcome(
        original=x.copy(),
        perturbed=perturbed,
        success=success,
        original_class=refs.original_class,
        final_class=final_class,
        euclidean_distance=float(np.linalg.norm(r)),
        linf_distance=float(np.max(np.abs(r))) if r.size else 0.0,
        kl_to_target=kl_target,
        kl_original_vs_perturbed=kl_divergence(refs.original_probs, q),
        iterations_used=iterations_used,
        abort_reason=abort_reason,
    )


def fgsm(model: Model, x: np.ndarray, beta: float,
         epsilon: float = 0.1) -> AttackOutcome:
    """Single sign step along the input gradient of the cross-entropy to
    the clean prediction: x' = x + beta * sign(grad)."""
    return run_attack(model, x,
                      AttackConfig.defaults(AttackKind.FGSM, beta=beta, epsilon=epsilon))


def run_iterative_attack(model: Model, x: np.ndarray,
                         config: AttackConfig) -> AttackOutcome:
    """Gradient-descent noise training loop shared by all iterative attacks.

    BIM ascends the cross-entropy with a sign step; every other kind
    descends its loss with a plain beta-scaled gradient step.
    """
    if config.kind not in ITERATIVE_KINDS:
        raise ConfigError(f"{config.kind.value} is not an iterative attack")
    x = np.asarray(x, dtype=np.float64)
    refs = prepare_refs(model, x, config)
    r = _initial_noise(x.size, config)
    per_step_clip = config.clip_schedule == "per-step"

    for i in range(config.iterations):
        r_t = ad.Tensor(r, requires_grad=True)
        loss = build_loss(model, x, r_t, config, refs)
        loss_val = float(loss.values)
        if not np.isfinite(loss_val):
            return _finish(model, x, r, config, refs, iterations_used=i,
                           abort_reason=f"non-finite loss at iteration {i + 1}")
        ad.backward(loss)
        g = r_t.grad
        if config.kind == AttackKind.BIM:
            r = r + config.beta * np.sign(g)
        else:
            r = r - config.beta * g
        if per_step_clip:
            r = np.clip(r, -config.epsilon, config.epsilon)
        if config.early_stop:
            flipped = int(np.argmax(model.predict_log_proba(x + np.clip(
                r, -config.epsilon, config.epsilon)))) != refs.original_class
            if flipped:
                return _finish(model, x, r, config, refs, iterations_used=i + 1)

    return _finish(model, x, r, config, refs, iterations_used=config.iterations)


def run_attack(model: Model, x: np.ndarray, config: AttackConfig) -> AttackOutcome:
    """Dispatch on attack kind; the single entry point used by the harness."""
    if config.kind == AttackKind.FGSM:
        refs = prepare_refs(model, np.asarray(x, dtype=np.float64), config)
        r = ad.Tensor(np.zeros(np.asarray(x).size), requires_grad=True)
        loss = build_loss(model, np.asarray(x, dtype=np.float64), r, config, refs)
        ad.backward(loss)
        step = config.beta * np.sign(r.grad)
        return _finish(model, np.asarray(x, dtype=np.float64), step, config, refs,
                       iterations_used=1)
    return run_iterative_attack(model, x, config)
