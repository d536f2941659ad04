"""Teacher-student training harness over a per-pixel logistic model.

The model is deliberately tiny: each pixel carries a feature vector, a single
(weights, bias) pair maps features to a foreground probability, and training
is full-batch gradient descent.  That keeps the supervised objective convex,
the gradients checkable against finite differences, and a full run at desk
scale, while still exercising the full loop: supervised burn-in, pseudo-label
generation by an EMA teacher, mask refinement against a proposal library,
confidence-weighted fallback losses, and a three-regime comparison on held
out scenes.

The teacher never receives a gradient.  It is only ever written by
``ema_update``, so the separation is structural rather than a convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .losses import LossConfig, PwaConfig, combined_loss, pixel_bce, weight_map
from .masks import BinaryMask, SoftMask, binarize
from .proposals import LibraryError, ProposalLibrary
from .refine import FALLBACK, MERGED, REPLACED, MatchConfig, refine
from .rng import SplitMix64

REGIME_SUPERVISED = "supervised"
REGIME_BASELINE = "baseline"
REGIME_REFINED = "refined"


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Logistic weights over feature channels plus a scalar bias."""

    weights: np.ndarray
    bias: float

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))
        if not (np.all(np.isfinite(w)) and np.isfinite(self.bias)):
            raise ValueError("model parameters must be finite")

    @classmethod
    def zeros(cls, channels: int) -> "ModelParams":
        if channels < 1:
            raise ValueError(f"channels must be >= 1, got {channels}")
        return cls(np.zeros(channels, dtype=np.float64), 0.0)

    @property
    def channels(self) -> int:
        return self.weights.size

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return np.array_equal(self.weights, other.weights) and self.bias == other.bias

    __hash__ = None


@dataclass(frozen=True)
class EmaState:
    """Teacher parameters plus the exponential moving average rate."""

    teacher: ModelParams
    alpha: float = 0.996

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class TrainConfig:
    burn_in_steps: int = 150
    mutual_steps: int = 150
    learning_rate: float = 2.0
    ema_alpha: float = 0.996
    jitter: float = 0.0
    use_refinement: bool = True
    use_pwa: bool = True
    loss: LossConfig = field(default_factory=LossConfig)
    pwa: PwaConfig = field(default_factory=PwaConfig)
    match: MatchConfig = field(default_factory=MatchConfig)
    seed: int = 0

    def __post_init__(self):
        if self.burn_in_steps < 0 or self.mutual_steps < 0:
            raise ValueError("step counts must be non-negative")
        if self.learning_rate <= 0.0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.ema_alpha <= 1.0:
            raise ValueError(f"ema_alpha must lie in [0, 1], got {self.ema_alpha}")
        if self.jitter < 0.0:
            raise ValueError(f"jitter must be non-negative, got {self.jitter}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")


@dataclass(frozen=True, eq=False)
class LabeledItem:
    image_id: str
    features: np.ndarray
    gt: BinaryMask

    def __post_init__(self):
        _check_features(self.features, self.gt.width, self.gt.height)


@dataclass(frozen=True, eq=False)
class UnlabeledItem:
    image_id: str
    features: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        _check_features(self.features, self.width, self.height)


def _check_features(features: np.ndarray, width: int, height: int) -> None:
    if features.ndim != 3:
        raise ValueError(f"features must be (height, width, channels), got ndim={features.ndim}")
    h, w, _ = features.shape
    if (w, h) != (width, height):
        raise ValueError(f"feature field {w}x{h} does not match mask {width}x{height}")


@dataclass(frozen=True)
class OutcomeTally:
    """How the refinement calls of one regime resolved."""

    replaced: int = 0
    merged: int = 0
    fallback: int = 0

    @property
    def total(self) -> int:
        return self.replaced + self.merged + self.fallback

    def as_dict(self) -> dict[str, int]:
        return {
            REPLACED: self.replaced,
            MERGED: self.merged,
            FALLBACK: self.fallback,
        }


@dataclass(frozen=True)
class RegimeResult:
    name: str
    losses: tuple[float, ...]
    oiou: float
    params: ModelParams
    teacher: ModelParams
    tally: OutcomeTally


@dataclass(frozen=True)
class TrainReport:
    supervised: RegimeResult
    baseline: RegimeResult
    refined: RegimeResult
    seed: int


def predict(params: ModelParams, features: np.ndarray) -> SoftMask:
    """Per-pixel logistic(weights . feature + bias) over an (h, w, c) field."""
    if features.ndim != 3:
        raise ValueError(f"features must be (height, width, channels), got ndim={features.ndim}")
    height, width, channels = features.shape
    if channels != params.channels:
        raise ValueError(f"feature channels {channels} != model channels {params.channels}")
    logits = features.reshape(-1, channels) @ params.weights + params.bias
    return SoftMask(width, height, _sigmoid(logits))


def ema_update(state: EmaState, student: ModelParams) -> EmaState:
    """teacher <- alpha * teacher + (1 - alpha) * student, elementwise."""
    t = state.teacher
    if t.channels != student.channels:
        raise ValueError(f"teacher channels {t.channels} != student channels {student.channels}")
    a = state.alpha
    return EmaState(
        ModelParams(a * t.weights + (1.0 - a) * student.weights, a * t.bias + (1.0 - a) * student.bias),
        a,
    )


def _loss_and_grad(
    params: ModelParams,
    features: np.ndarray,
    bits: np.ndarray,
    weights: np.ndarray | None = None,
) -> tuple[float, np.ndarray, float]:
    """Mean (optionally weighted) BCE of the model on one item, with gradient.

    The gradient treats the log clamp as inactive, which it is everywhere a
    finite-step optimizer can actually reach from moderate parameters.
    """
    flat = features.reshape(-1, params.channels)
    probs = _sigmoid(flat @ params.weights + params.bias)
    pix = pixel_bce(probs, bits)
    n = pix.size
    delta = probs - bits.astype(np.float64)
    if weights is not None:
        pix = weights * pix
        delta = weights * delta
    loss = float(np.mean(pix))
    grad_w = flat.T @ delta / n
    grad_b = float(np.sum(delta) / n)
    return loss, grad_w, grad_b


def supervised_loss_and_grad(
    params: ModelParams, labeled: list[LabeledItem]
) -> tuple[float, np.ndarray, float]:
    """Mean over items of the per-item mean BCE against ground truth."""
    if not labeled:
        raise ValueError("labeled set must be non-empty")
    loss = 0.0
    grad_w = np.zeros(params.channels, dtype=np.float64)
    grad_b = 0.0
    for item in labeled:
        l, gw, gb = _loss_and_grad(params, item.features, item.gt.bits)
        loss += l
        grad_w += gw
        grad_b += gb
    n = len(labeled)
    return loss / n, grad_w / n, grad_b / n


def descend(
    params: ModelParams, labeled: list[LabeledItem], steps: int, learning_rate: float
) -> tuple[ModelParams, list[float]]:
    """Full-batch gradient descent on the supervised objective."""
    losses = []
    for _ in range(steps):
        loss, gw, gb = supervised_loss_and_grad(params, labeled)
        losses.append(loss)
        params = ModelParams(params.weights - learning_rate * gw, params.bias - learning_rate * gb)
    return params, losses


def burn_in(labeled: list[LabeledItem], cfg: TrainConfig) -> ModelParams:
    """Supervised-only training from zero-initialized parameters."""
    if not labeled:
        raise ValueError("labeled set must be non-empty")
    params = ModelParams.zeros(labeled[0].features.shape[2])
    params, _ = descend(params, labeled, cfg.burn_in_steps, cfg.learning_rate)
    return params


def _unsup_target(
    teacher_soft: SoftMask,
    item: UnlabeledItem,
    library: ProposalLibrary | None,
    cfg: TrainConfig,
    use_refinement: bool,
    use_pwa: bool,
) -> tuple[np.ndarray, np.ndarray | None, str | None]:
    """Pick the target bits and optional pixel weights for one unlabeled item.

    Returns (target bits, weights or None for uniform, refinement kind or
    None when refinement is disabled).  Weighting applies only where no
    refined mask is available: on fallback, or always when refinement is off.
    """
    if use_refinement:
        if library is None or item.image_id not in library:
            raise LibraryError(f"no proposal set for image '{item.image_id}'")
        outcome = refine(teacher_soft, library.get(item.image_id), cfg.match)
        target = outcome.refined.bits
        weighted = use_pwa and outcome.is_fallback
        kind = outcome.kind
    else:
        target = binarize(teacher_soft, cfg.match.binarize_threshold).bits
        weighted = use_pwa
        kind = None
    weights = weight_map(teacher_soft, cfg.pwa).weights if weighted else None
    return target, weights, kind


def mutual_loop(
    start: ModelParams,
    labeled: list[LabeledItem],
    unlabeled: list[UnlabeledItem],
    library: ProposalLibrary | None,
    cfg: TrainConfig,
    use_refinement: bool,
    use_pwa: bool,
) -> tuple[ModelParams, ModelParams, list[float], OutcomeTally]:
    """One teacher-student run; returns (student, teacher, losses, tally).

    Per step the teacher predicts on clean features, targets come from
    refinement (or plain binarization), the student descends on the combined
    objective with jittered unlabeled features, and the teacher follows the
    student by EMA.
    """
    if not labeled:
        raise ValueError("labeled set must be non-empty")
    student = start
    state = EmaState(start, cfg.ema_alpha)
    jitter_rng = SplitMix64(cfg.seed).spawn(1)
    losses = []
    counts = {REPLACED: 0, MERGED: 0, FALLBACK: 0}
    for _ in range(cfg.mutual_steps):
        sup_loss, gw, gb = supervised_loss_and_grad(student, labeled)
        gw = cfg.loss.lambda_sup * gw
        gb = cfg.loss.lambda_sup * gb
        unsup_loss = 0.0
        if unlabeled:
            ugw = np.zeros(student.channels, dtype=np.float64)
            ugb = 0.0
            for item in unlabeled:
                teacher_soft = predict(state.teacher, item.features)
                target, weights, kind = _unsup_target(
                    teacher_soft, item, library, cfg, use_refinement, use_pwa
                )
                if kind is not None:
                    counts[kind] += 1
                feats = item.features
                if cfg.jitter > 0.0:
                    noise = jitter_rng.normal(feats.size).reshape(feats.shape)
                    feats = feats + cfg.jitter * noise
                l, igw, igb = _loss_and_grad(student, feats, target, weights)
                unsup_loss += l
                ugw += igw
                ugb += igb
            n = len(unlabeled)
            unsup_loss /= n
            gw = gw + cfg.loss.lambda_unsup * (ugw / n)
            gb = gb + cfg.loss.lambda_unsup * (ugb / n)
        losses.append(combined_loss(sup_loss, unsup_loss, cfg.loss))
        student = ModelParams(
            student.weights - cfg.learning_rate * gw,
            student.bias - cfg.learning_rate * gb,
        )
        state = ema_update(state, student)
    tally = OutcomeTally(
        counts[REPLACED], counts[MERGED], counts[FALLBACK]
    )
    return student, state.teacher, losses, tally


def evaluate_oiou(params: ModelParams, items: list[LabeledItem], threshold: float = 0.5) -> float:
    """Pooled intersection-over-union of thresholded predictions vs gt."""
    from .bench import oiou

    preds = [binarize(predict(params, it.features), threshold) for it in items]
    return oiou(preds, [it.gt for it in items])


def mutual_learn(
    labeled: list[LabeledItem],
    unlabeled: list[UnlabeledItem],
    library: ProposalLibrary | None,
    heldout: list[LabeledItem],
    cfg: TrainConfig,
) -> TrainReport:
    """Burn in once, then compare three regimes on held-out scenes.

    supervised: the burned-in model descends on labeled data alone for the
    same extra step budget.  baseline: teacher-student loop on raw binarized
    pseudo-labels.  refined: the same loop with proposal matching and, on
    fallback, confidence weighting (both switchable in cfg).  All regimes
    share the burned-in starting point and the jitter noise stream, so the
    reported gaps isolate what the pseudo-label treatment changes.
    """
    if not heldout:
        raise ValueError("held-out set must be non-empty")
    burned = burn_in(labeled, cfg)

    def run(name: str, unl: list[UnlabeledItem], use_ref: bool, use_pwa: bool) -> RegimeResult:
        student, teacher, losses, tally = mutual_loop(
            burned, labeled, unl, library, cfg, use_ref, use_pwa
        )
        return RegimeResult(
            name=name,
            losses=tuple(losses),
            oiou=evaluate_oiou(student, heldout, cfg.match.binarize_threshold),
            params=student,
            teacher=teacher,
            tally=tally,
        )

    supervised = run(REGIME_SUPERVISED, [], False, False)
    baseline = run(REGIME_BASELINE, unlabeled, False, False)
    refined = run(REGIME_REFINED, unlabeled, cfg.use_refinement, cfg.use_pwa)
    return TrainReport(supervised=supervised, baseline=baseline, refined=refined, seed=cfg.seed)
